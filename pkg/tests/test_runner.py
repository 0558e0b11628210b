import filecmp
import json
import os
from pathlib import Path

import numpy as np
import pytest

from gaugemarket import io, runner
from gaugemarket.cli import main
from gaugemarket.lattice import random_init
from gaugemarket.observables import AvalancheRecord, Histogram
from gaugemarket.runner import RunConfig, run_ensemble, run_rng, run_single, sweep_chi
from gaugemarket.soc import SignalDivergenceError

SMALL = dict(n=16, heatbath_steps=30, signal_updates=3000, chi=1e-3)


def small(**kw):
    return RunConfig(**{**SMALL, **kw})


# --- configuration ----------------------------------------------------------------

def test_defaults_follow_full_scale_protocol():
    cfg = RunConfig()
    assert (cfg.n, cfg.beta, cfg.heatbath_steps, cfg.signal_updates) == (782, 1.0, 10_000, 4_000_000)
    assert RunConfig.paper_scale().ensemble_size == 2400


@pytest.mark.parametrize("bad", [dict(n=3), dict(beta=0), dict(chi=0), dict(rho=0.9),
                                 dict(heatbath_steps=-1), dict(base_seed=-1), dict(base_seed=2 ** 64),
                                 dict(bin_width_r=0), dict(matter_draw="x"), dict(d_plus=-1)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        RunConfig(**bad)


def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# desk run\nn = 64\nchi = 1e-4  # shift\nsignal_updates = 2e5\nfit_garch = yes\n\n")
    cfg = RunConfig.from_file(f, chi=0.5)
    assert cfg.n == 64 and cfg.chi == 0.5 and cfg.signal_updates == 200_000 and cfg.fit_garch
    f.write_text("bogus = 1\n")
    with pytest.raises(ValueError):
        RunConfig.from_file(f)
    f.write_text("n 64\n")
    with pytest.raises(ValueError):
        RunConfig.from_file(f)


def test_rng_streams():
    a = run_rng(7, 0).random(100)
    assert np.array_equal(a, run_rng(7, 0).random(100))
    assert not np.array_equal(a, run_rng(7, 1).random(100))
    assert not np.array_equal(a, run_rng(8, 0).random(100))
    assert not np.array_equal(a, run_rng(7, 0, stream=1).random(100))


# --- runs ---------------------------------------------------------------------------

def test_run_single_is_bit_identical():
    a, b = run_single(small(), 3, keep_trace=True), run_single(small(), 3, keep_trace=True)
    assert np.array_equal(a.returns, b.returns)
    assert np.array_equal(a.trace_V, b.trace_V)
    assert np.array_equal(a.avalanches.x_k, b.avalanches.x_k)
    assert a.mean_link == b.mean_link
    c = run_single(small(), 4)
    assert not np.array_equal(a.returns, c.returns)


def test_run_single_without_signal_updates():
    art = run_single(small(signal_updates=0), 0, keep_trace=True)
    assert len(art.avalanches) == 0 and art.trace_V.size == 0
    rng = run_rng(0, 0)
    ref = runner.equilibrate(small(), rng)[0]
    assert np.array_equal(art.lattice.phi, ref.phi)
    assert np.array_equal(art.lattice.theta0, ref.theta0)


def test_run_single_trace_agrees_with_avalanches():
    art = run_single(small(), 1, keep_trace=True)
    G = np.minimum.accumulate(art.trace_V)
    assert np.all(np.diff(G) <= 0)
    drops = np.flatnonzero(np.diff(G) < 0) + 1
    assert np.array_equal(drops, art.avalanches.x_k)


def test_ensemble_of_one_equals_single_run():
    cfg = small(ensemble_size=1)
    res, art = run_ensemble(cfg, workers=1), run_single(cfg, 0)
    assert res.mean_link == art.mean_link and res.mean_link_err == 0.0
    assert res.gains.total == cfg.n
    assert res.avalanches.total == len(art.avalanches)


def test_ensemble_pooling_is_additive_and_schedule_independent():
    cfg = small(ensemble_size=4)
    serial = run_ensemble(cfg, workers=1)
    parallel = run_ensemble(cfg, workers=2)
    assert [a.run_index for a in parallel.runs] == [0, 1, 2, 3]
    assert np.array_equal(serial.gains.counts, parallel.gains.counts)
    assert serial.mean_link == parallel.mean_link
    per_run = sum(runner.avalanche_histogram([a.avalanches], 1.0, cfg.lambda_bins).counts for a in serial.runs)
    assert np.array_equal(serial.avalanches.counts, per_run)
    assert len(serial.runs) == cfg.ensemble_size


def test_ensemble_records_failed_runs(monkeypatch):
    real = runner.run_single

    def flaky(cfg, idx, keep_trace=False):
        if idx == 1:
            raise RuntimeError("disk on fire")
        return real(cfg, idx, keep_trace)

    monkeypatch.setattr(runner, "run_single", flaky)
    res = run_ensemble(small(ensemble_size=3), workers=1)
    assert [a.run_index for a in res.runs] == [0, 2]
    assert "disk on fire" in res.failures[1]
    assert res.summary()["failed_runs"] == [1]


def test_ensemble_requires_runs():
    with pytest.raises(ValueError):
        run_ensemble(small(ensemble_size=0))


def test_worker_count(monkeypatch):
    monkeypatch.setenv(runner.THREADS_ENV, "3")
    assert runner.worker_count() == 3
    monkeypatch.setenv(runner.THREADS_ENV, "0")
    assert runner.worker_count() == (os.cpu_count() or 1)
    assert runner.worker_count(2) == 2


def test_sweep_chi_table_and_exchangeability():
    cfg = small(ensemble_size=6, signal_updates=2000)
    with pytest.raises(ValueError):
        sweep_chi(cfg, [1e-3] * 4)
    sweep = sweep_chi(cfg, [1e-3, 1e-3, 1e-2, 1e-1, 1.0], workers=1)
    assert [row[0] for row in sweep.rows] == [1e-3, 1e-3, 1e-2, 1e-1, 1.0]
    (_, m1, e1), (_, m2, e2) = sweep.rows[:2]
    assert m1 != m2  # separate random streams
    assert abs(m1 - m2) < 3 * np.hypot(e1, e2)
    assert sweep.fit is not None


def test_large_chi_diverges_with_context():
    with pytest.raises(SignalDivergenceError, match="chi=10"):
        run_single(small(chi=10.0, signal_updates=20000), 0)


def test_sweep_leaves_failed_points_out_of_fit(tmp_path):
    cfg = small(ensemble_size=2, signal_updates=20000)
    chis = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
    sweep = sweep_chi(cfg, chis, workers=1)
    assert np.isnan(sweep.rows[-1][1]) and sweep.failures == {10.0: 2}
    assert all(np.isfinite(m) for _, m, _ in sweep.rows[:-1])
    assert sweep.fit is not None and np.isfinite(sweep.fit.upper)
    runner.write_sweep(tmp_path, cfg, sweep)
    assert json.loads((tmp_path / "tanh_fit.json").read_text())["excluded_chi"] == [10.0]
    assert json.loads((tmp_path / "manifest.json").read_text())["failed_runs_per_chi"] == {"10.0": 2}


# --- persistence ------------------------------------------------------------------

def test_io_round_trips(tmp_path):
    r = np.random.default_rng(0).normal(size=20)
    io.write_returns(tmp_path / "r.csv", r)
    assert np.array_equal(io.read_returns(tmp_path / "r.csv"), r)
    h = Histogram(0.1, -0.25, np.array([1, 0, 4, 2, 0]), np.array([0.5, 0, 1.0, 0.1, 0]))
    io.write_histogram(tmp_path / "h.csv", h)
    back = io.read_histogram(tmp_path / "h.csv")
    assert np.array_equal(back.counts, h.counts) and np.allclose(back.centers, h.centers)
    assert np.array_equal(back.errors, h.errors)
    rec = AvalancheRecord(np.array([1, 3, 9]), np.array([1, 2, 6]), np.array([5.0, 3.0, 2.0, 1.5]))
    io.write_avalanches(tmp_path / "a.csv", rec)
    back = io.read_avalanches(tmp_path / "a.csv", first_level=5.0)
    assert np.array_equal(back.x_k, rec.x_k) and np.array_equal(back.gap_levels, rec.gap_levels)
    rows = [(1e-5, 0.1, 0.01), (1e-1, 0.002, 1e-4)]
    io.write_chi_table(tmp_path / "c.csv", rows)
    assert io.read_chi_table(tmp_path / "c.csv") == rows
    io.write_jsonl(tmp_path / "g.jsonl", [{"b": 1, "a": float("nan")}])
    assert io.read_jsonl(tmp_path / "g.jsonl") == [{"a": None, "b": 1}]
    lat = random_init(6, 1.0, np.random.default_rng(1))
    io.write_snapshot(tmp_path / "s.gm1", lat)
    assert np.array_equal(io.read_snapshot(tmp_path / "s.gm1").phi, lat.phi)


def test_csv_headers(tmp_path):
    io.write_returns(tmp_path / "r.csv", np.zeros(2))
    io.write_trace(tmp_path / "t.csv", [0], [1.0], [3])
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "j,r"
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "s,V,j_s"
    value = (tmp_path / "r.csv").read_text().splitlines()[1].split(",")[1]
    assert len(value.split("e")[0].replace(".", "").lstrip("-")) >= 15


def test_atomic_write_leaves_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "out.csv"
    target.write_text("old\n")

    def boom(*a, **k):
        raise OSError("no space left")

    monkeypatch.setattr(io.os, "replace", boom)
    with pytest.raises(OSError):
        io.atomic_write_text(target, "new\n")
    assert target.read_text() == "old\n"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.csv"]


def test_write_and_analyze(tmp_path):
    cfg = small(ensemble_size=3, n=120, fit_garch=True)
    res = run_ensemble(cfg, workers=1)
    runner.write_ensemble(tmp_path, res)
    summary = runner.analyze(tmp_path)
    assert summary["runs"] == 3
    assert summary["mean_L"] == pytest.approx(res.mean_link, rel=1e-14)
    assert summary["avalanches"] == res.summary()["avalanches"]
    stored = io.read_histogram(tmp_path / "analysis" / "gains_histogram.csv")
    assert np.array_equal(stored.counts, res.gains.counts)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["n"] == 120 and len(manifest["runs"]) == 3
    assert len(io.read_jsonl(tmp_path / "garch.jsonl")) == len(res.garch)
    records = runner.garch_fit_stored(tmp_path)
    assert [r["run_id"] for r in records] == [a for a, _ in res.garch]
    assert all(r["chi"] == cfg.chi for r in records)


def test_analyze_requires_runs(tmp_path):
    with pytest.raises(FileNotFoundError):
        runner.analyze(tmp_path)


# --- command line -------------------------------------------------------------------

ARGS = ["--n", "16", "--sweeps", "30", "--updates", "3000", "--chi", "1e-3"]


def _tree(root: Path):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


def test_cli_ensemble_is_byte_identical(tmp_path, monkeypatch, capsys):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        d.mkdir()
        monkeypatch.chdir(d)
        assert main(["ensemble", *ARGS, "--runs", "3", "--seed", "11", "--out", "out"]) == 0
    a, b = dirs[0] / "out", dirs[1] / "out"
    assert _tree(a) == _tree(b) and len(_tree(a)) > 5
    for rel in _tree(a):
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel


def test_cli_simulate_and_config(tmp_path, capsys):
    cfg = tmp_path / "desk.cfg"
    cfg.write_text("n = 16\nheatbath_steps = 30\nsignal_updates = 2000\nchi = 0.01\n")
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--chi", "0.1", "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["chi"] == 0.1
    run = out / "runs" / "run_00000"
    assert {p.name for p in run.iterdir()} == {"returns.csv", "avalanches.csv", "snapshot.gm1",
                                                 "signal_trace.csv"}
    assert len((run / "signal_trace.csv").read_text().splitlines()) == 2001
    assert json.loads((out / "manifest.json").read_text())["config"]["chi"] == 0.1


def test_cli_sweep_analyze_and_garch(tmp_path, capsys):
    out = tmp_path / "sweep"
    rc = main(["sweep-chi", *ARGS, "--runs", "2", "--out", str(out),
               "--chi-values", "1e-5", "1e-4", "1e-3", "1e-2", "1e-1"])
    assert rc in (0, 4)
    assert len(io.read_chi_table(out / "chi_sweep.csv")) == 5
    assert "fit" in json.loads((out / "tanh_fit.json").read_text())
    ens = tmp_path / "ens"
    assert main(["ensemble", "--n", "128", "--sweeps", "30", "--updates", "3000",
                 "--runs", "2", "--out", str(ens)]) == 0
    assert main(["analyze", str(ens)]) == 0
    assert main(["garch-fit", str(ens)]) == 0
    assert (ens / "garch.jsonl").exists()


def test_cli_reports_bad_input(capsys):
    assert main(["ensemble", "--chi", "-1"]) == 2
    assert "chi must be positive" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_paper_scale_flag_sets_protocol():
    from gaugemarket.cli import build_parser, resolve_config

    args = build_parser().parse_args(["ensemble", "--paper-scale", "--chi", "0.1"])
    cfg = resolve_config(args)
    assert (cfg.n, cfg.heatbath_steps, cfg.signal_updates, cfg.ensemble_size) == (782, 10_000, 4_000_000, 2400)
    assert cfg.chi == 0.1
