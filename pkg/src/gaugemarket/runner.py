"""Configuration, seeding and ensemble orchestration.

Per-run random streams come from ``numpy.random.SeedSequence`` keyed by
``(base_seed, stream, run_index)``: the base seed is the entropy and
``(stream, run_index)`` the spawn key, so every run owns an independent PCG64
stream whatever order or process it executes in.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .garch import GarchFit, GarchFitError, fit_garch
from .heatbath import heatbath_sweep, mean_abs_log_plaquette
from .lattice import Couplings, LadderLattice, fix_asset_gauge, fix_cash_axis, log_returns, random_init
from .observables import (
    AvalancheRecord,
    GapTracker,
    Histogram,
    TanhFit,
    TanhFitError,
    avalanche_histogram,
    ensemble_mean,
    excess_kurtosis,
    fit_tanh_chi_curve,
    gains_histogram,
    lattice_avg_link,
)
from .soc import SYMMETRIC, SignalTrace, UpdateParams, run_soc

log = logging.getLogger(__name__)

THREADS_ENV = "GM1_THREADS"
PAPER_CHI_VALUES = tuple(10.0 ** k for k in range(-6, 2))
# the full-scale protocol
PAPER_SCALE = dict(n=782, beta=1.0, heatbath_steps=10_000, signal_updates=4_000_000,
                   ensemble_size=2400)


@dataclass
class RunConfig:
    n: int = 782
    beta: float = 1.0
    d_plus: float = 1.0
    d_bar_plus: float = 1.0
    d_minus: float = 1.0
    d_bar_minus: float = 1.0
    chi: float = 1e-5
    rho: float = 1.0
    heatbath_steps: int = 10_000
    signal_updates: int = 4_000_000
    ensemble_size: int = 1
    base_seed: int = 0
    stream: int = 0
    output_dir: str = "gm1-out"
    bin_width_r: float = 0.01
    bin_width_lambda: float = 1.0
    lambda_bins: int = 10_000
    init_spread: float = 1.0
    matter_draw: str = SYMMETRIC
    fit_garch: bool = False

    def __post_init__(self):
        if self.n < 4:
            raise ValueError("n must be >= 4")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.chi > 0:
            raise ValueError("chi must be positive")
        if not self.rho >= 1:
            raise ValueError("rho must be >= 1")
        for name in ("heatbath_steps", "signal_updates", "ensemble_size", "lambda_bins"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ValueError("base_seed must be an unsigned 64-bit integer")
        if not (self.bin_width_r > 0 and self.bin_width_lambda > 0):
            raise ValueError("bin widths must be positive")
        Couplings(self.beta, self.d_plus, self.d_bar_plus, self.d_minus, self.d_bar_minus)
        UpdateParams(self.chi, 0, self.matter_draw)

    @classmethod
    def paper_scale(cls, **overrides) -> RunConfig:
        return cls(**{**PAPER_SCALE, **overrides})

    @classmethod
    def from_file(cls, path: str | os.PathLike, **overrides) -> RunConfig:
        """Read flat ``key = value`` lines; ``#`` starts a comment."""
        values = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values: dict) -> RunConfig:
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(types[key], value)
        return cls(**kwargs)

    def couplings(self) -> Couplings:
        return Couplings(self.beta, self.d_plus, self.d_bar_plus, self.d_minus, self.d_bar_minus)

    def update_params(self) -> UpdateParams:
        return UpdateParams(self.chi, self.signal_updates, self.matter_draw)

    def with_(self, **changes) -> RunConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(type_name: str, value):
    if not isinstance(value, str):
        return value
    if type_name == "int":
        return int(float(value)) if "e" in value.lower() else int(value)
    if type_name == "float":
        return float(value)
    if type_name == "bool":
        v = value.lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return value


def seed_sequence(base_seed: int, run_index: int, stream: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(stream, run_index))


def run_rng(base_seed: int, run_index: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(base_seed, run_index, stream)))


@dataclass
class RunArtifacts:
    run_index: int
    chi: float
    returns: np.ndarray
    avalanches: AvalancheRecord
    lattice: LadderLattice
    mean_link: float
    equilibrium_plaquette: float     # mean P + 1/P - 2 after the last sweep
    equilibrium_acceptance: float    # mean sampler acceptance over the sweeps
    mean_abs_log_plaquette: float
    trace_V: np.ndarray | None = None
    trace_js: np.ndarray | None = None
    garch: GarchFit | None = None

    def summary(self) -> dict:
        return {
            "run_index": self.run_index,
            "chi": self.chi,
            "mean_L": self.mean_link,
            "return_std": float(np.std(self.returns)),
            "excess_kurtosis": excess_kurtosis(self.returns),
            "avalanches": len(self.avalanches),
            "equilibrium_plaquette": self.equilibrium_plaquette,
            "equilibrium_acceptance": self.equilibrium_acceptance,
            "mean_abs_log_plaquette": self.mean_abs_log_plaquette,
        }


def equilibrate(cfg: RunConfig, rng: np.random.Generator):
    """Hot start, cash-axis constraint, then ``cfg.heatbath_steps`` sweeps."""
    c = cfg.couplings()
    lat = random_init(cfg.n, cfg.init_spread, rng)
    lat = fix_cash_axis(lat, cfg.rho)
    diag = heatbath_sweep(lat, c, rng, cfg.heatbath_steps)
    return lat, diag


def run_single(cfg: RunConfig, run_index: int = 0, keep_trace: bool = False) -> RunArtifacts:
    rng = run_rng(cfg.base_seed, run_index, cfg.stream)
    lat, diag = equilibrate(cfg, rng)
    gap = GapTracker()
    trace = SignalTrace() if keep_trace else None
    if cfg.signal_updates > 0:
        lat = fix_asset_gauge(lat)
        observers = [gap] + ([trace] if trace is not None else [])
        run_soc(lat, cfg.couplings(), cfg.update_params(), rng, observers)
    r = log_returns(lat)
    art = RunArtifacts(
        run_index=run_index,
        chi=cfg.chi,
        returns=r,
        avalanches=gap.record(),
        lattice=lat,
        mean_link=lattice_avg_link(r),
        equilibrium_plaquette=float(diag.mean_plaquette[-1]) if len(diag.mean_plaquette) else float("nan"),
        equilibrium_acceptance=float(np.mean(diag.acceptance)) if len(diag.acceptance) else float("nan"),
        mean_abs_log_plaquette=mean_abs_log_plaquette(lat),
        trace_V=trace.V if trace is not None else None,
        trace_js=trace.j_s if trace is not None else None,
    )
    if cfg.fit_garch:
        try:
            art.garch = fit_garch(r)
        except GarchFitError as exc:
            log.warning("run %d: GARCH fit rejected: %s", run_index, exc)
    log.info("run %d chi=%g mean_L=%.6g avalanches=%d acceptance=%.4f",
             run_index, cfg.chi, art.mean_link, len(art.avalanches), art.equilibrium_acceptance)
    return art


def _run_guarded(args):
    cfg, idx, keep_trace = args
    try:
        return idx, run_single(cfg, idx, keep_trace), None
    except Exception as exc:  # reported per run, excluded from pooling
        return idx, None, f"{type(exc).__name__}: {exc}"


def worker_count(requested: int | None = None) -> int:
    if requested is None:
        requested = int(os.environ.get(THREADS_ENV, "0") or 0)
    if requested <= 0:
        requested = os.cpu_count() or 1
    return requested


@dataclass
class EnsembleResult:
    config: RunConfig
    runs: list[RunArtifacts]
    failures: dict[int, str]
    gains: Histogram | None
    avalanches: Histogram | None
    mean_link: float
    mean_link_err: float
    garch: list[tuple[int, GarchFit]] = field(default_factory=list)

    @property
    def pooled_returns(self) -> np.ndarray:
        return np.concatenate([a.returns for a in self.runs]) if self.runs else np.empty(0)

    def summary(self) -> dict:
        r = self.pooled_returns
        return {
            "chi": self.config.chi,
            "runs": len(self.runs),
            "failed_runs": sorted(self.failures),
            "mean_L": self.mean_link,
            "mean_L_stderr": self.mean_link_err,
            "return_std": float(np.std(r)) if r.size else None,
            "excess_kurtosis": excess_kurtosis(r) if r.size > 3 else None,
            "avalanches": int(sum(len(a.avalanches) for a in self.runs)),
        }


def pool_runs(cfg: RunConfig, runs: Sequence[RunArtifacts], failures: dict[int, str] | None = None) -> EnsembleResult:
    runs = sorted(runs, key=lambda a: a.run_index)
    if runs:
        gains = gains_histogram([a.returns for a in runs], cfg.bin_width_r)
        aval = avalanche_histogram([a.avalanches for a in runs], cfg.bin_width_lambda, cfg.lambda_bins)
        mean, err = ensemble_mean([a.mean_link for a in runs])
    else:
        gains = aval = None
        mean = err = float("nan")
    fits = [(a.run_index, a.garch) for a in runs if a.garch is not None]
    return EnsembleResult(cfg, list(runs), dict(failures or {}), gains, aval, mean, err, fits)


def run_ensemble(cfg: RunConfig, workers: int | None = None, keep_traces: bool = False) -> EnsembleResult:
    if cfg.ensemble_size < 1:
        raise ValueError("ensemble_size must be >= 1")
    tasks = [(cfg, idx, keep_traces) for idx in range(cfg.ensemble_size)]
    nworkers = min(worker_count(workers), len(tasks))
    if nworkers <= 1:
        outcomes = [_run_guarded(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            outcomes = list(pool.map(_run_guarded, tasks))
    runs, failures = [], {}
    for idx, art, err in outcomes:
        if art is None:
            log.error("run %d failed: %s", idx, err)
            failures[idx] = err
        else:
            runs.append(art)
    return pool_runs(cfg, runs, failures)


@dataclass
class ChiSweep:
    rows: list[tuple[float, float, float]]  # (chi, mean L, stderr); nan if every run failed
    fit: TanhFit | None
    fit_error: str | None = None
    ensembles: list[EnsembleResult] = field(default_factory=list)
    failures: dict[float, int] = field(default_factory=dict)  # failed runs per chi


def sweep_chi(cfg: RunConfig, chi_values: Sequence[float], workers: int | None = None,
              keep_ensembles: bool = False) -> ChiSweep:
    """One ensemble per chi value (random stream ``k`` for the k-th value).

    Points where every run failed stay in the table as nan and are left out
    of the tanh fit.
    """
    if len(chi_values) < 5:
        raise ValueError("need at least five chi values")
    rows, kept, failures = [], [], {}
    for k, chi in enumerate(chi_values):
        res = run_ensemble(cfg.with_(chi=float(chi), stream=k), workers)
        rows.append((float(chi), res.mean_link, res.mean_link_err))
        if res.failures:
            failures[float(chi)] = len(res.failures)
        log.info("sweep chi=%g <L>=%.6g +- %.2g", chi, res.mean_link, res.mean_link_err)
        if keep_ensembles:
            kept.append(res)
    chi_arr, mean, err = (np.array(col) for col in zip(*rows))
    ok = np.isfinite(mean)
    try:
        fit, fit_err = fit_tanh_chi_curve(chi_arr[ok], mean[ok], err[ok]), None
    except (TanhFitError, ValueError) as exc:
        fit, fit_err = getattr(exc, "best", None), str(exc)
    return ChiSweep(rows, fit, fit_err, kept, failures)


# --- persistence -----------------------------------------------------------

def run_dir(out: Path, run_index: int) -> Path:
    return out / "runs" / f"run_{run_index:05d}"


def write_run(out: str | os.PathLike, art: RunArtifacts) -> Path:
    d = run_dir(Path(out), art.run_index)
    io.write_returns(d / "returns.csv", art.returns)
    io.write_avalanches(d / "avalanches.csv", art.avalanches)
    io.write_snapshot(d / "snapshot.gm1", art.lattice)
    if art.trace_V is not None:
        io.write_trace(d / "signal_trace.csv", np.arange(len(art.trace_V)), art.trace_V, art.trace_js)
    return d


def manifest(cfg: RunConfig, run_indices: Sequence[int], command: str) -> dict:
    return {
        "command": command,
        "config": cfg.to_dict(),
        "seeding": "numpy SeedSequence(entropy=base_seed, spawn_key=(stream, run_index)) -> PCG64",
        "runs": [{"run_index": i, "base_seed": cfg.base_seed, "stream": cfg.stream} for i in run_indices],
    }


def write_ensemble(out: str | os.PathLike, res: EnsembleResult, command: str = "ensemble") -> Path:
    out = Path(out)
    for art in res.runs:
        write_run(out, art)
    if res.gains is not None:
        io.write_histogram(out / "gains_histogram.csv", res.gains)
        io.write_histogram(out / "avalanche_histogram.csv", res.avalanches)
    summary = res.summary()
    summary["per_run"] = [a.summary() for a in res.runs]
    summary["failures"] = {str(k): v for k, v in sorted(res.failures.items())}
    io.write_json(out / "summary.json", summary)
    if res.config.fit_garch:
        io.write_jsonl(out / "garch.jsonl",
                       (io.garch_record(i, res.config.chi, f) for i, f in res.garch))
    io.write_json(out / "manifest.json",
                  manifest(res.config, range(res.config.ensemble_size), command))
    return out


def write_sweep(out: str | os.PathLike, cfg: RunConfig, sweep: ChiSweep) -> Path:
    out = Path(out)
    io.write_chi_table(out / "chi_sweep.csv", sweep.rows)
    fit = None
    if sweep.fit is not None:
        f = sweep.fit
        fit = {"a1": f.a1, "a2": f.a2, "a3": f.a3, "a4": f.a4, "residual": f.residual,
               "upper_plateau": f.upper, "lower_plateau": f.lower, "symmetry_point": f.symmetry_point}
    io.write_json(out / "tanh_fit.json", {
        "fit": fit,
        "error": sweep.fit_error,
        "excluded_chi": [c for c, m, _ in sweep.rows if not np.isfinite(m)],
    })
    m = manifest(cfg, range(cfg.ensemble_size), "sweep-chi")
    m["failed_runs_per_chi"] = {repr(c): k for c, k in sweep.failures.items()}
    m["chi_values"] = [row[0] for row in sweep.rows]
    m["streams"] = list(range(len(sweep.rows)))
    io.write_json(out / "manifest.json", m)
    return out


def load_runs(out: str | os.PathLike) -> list[tuple[int, np.ndarray, AvalancheRecord | None]]:
    """Stored (run_index, returns, avalanches) triples, sorted by run index."""
    found = []
    for d in sorted((Path(out) / "runs").glob("run_*")):
        idx = int(d.name.split("_")[1])
        r = io.read_returns(d / "returns.csv")
        av = d / "avalanches.csv"
        found.append((idx, r, io.read_avalanches(av) if av.exists() else None))
    return found


def analyze(out: str | os.PathLike, bin_width_r: float = 0.01, bin_width_lambda: float = 1.0,
            lambda_bins: int = 10_000) -> dict:
    """Recompute pooled statistics from stored series; writes ``analysis/``."""
    out = Path(out)
    stored = load_runs(out)
    if not stored:
        raise FileNotFoundError(f"no stored runs under {out / 'runs'}")
    series = [r for _, r, _ in stored]
    records = [a for _, _, a in stored if a is not None]
    gains = gains_histogram(series, bin_width_r)
    mean, err = ensemble_mean([lattice_avg_link(r) for r in series])
    pooled = np.concatenate(series)
    summary = {
        "runs": len(series),
        "mean_L": mean,
        "mean_L_stderr": err,
        "return_std": float(np.std(pooled)),
        "excess_kurtosis": excess_kurtosis(pooled),
    }
    io.write_histogram(out / "analysis" / "gains_histogram.csv", gains)
    if records:
        aval = avalanche_histogram(records, bin_width_lambda, lambda_bins)
        io.write_histogram(out / "analysis" / "avalanche_histogram.csv", aval)
        summary["avalanches"] = int(sum(len(a) for a in records))
    io.write_json(out / "analysis" / "summary.json", summary)
    return summary


def garch_fit_stored(out: str | os.PathLike, chi: float | None = None) -> list[dict]:
    """Fit every stored returns series; writes ``garch.jsonl``."""
    out = Path(out)
    if chi is None and (out / "manifest.json").exists():
        import json

        chi = json.loads((out / "manifest.json").read_text())["config"].get("chi")
    records = []
    for idx, r, _ in load_runs(out):
        try:
            records.append(io.garch_record(idx, chi, fit_garch(r)))
        except GarchFitError as exc:
            log.warning("run %d: GARCH fit rejected: %s", idx, exc)
    io.write_jsonl(out / "garch.jsonl", records)
    return records
