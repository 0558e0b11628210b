"""Output formats. Every file is written to a temporary name and renamed."""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .garch import GarchFit
from .lattice import LadderLattice, format_snapshot, parse_snapshot
from .observables import AvalancheRecord, Histogram


def fmt(x: float) -> str:
    """Decimal with 17 significant digits (round-trips a float64)."""
    return f"{float(x):.16e}"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _csv(header: list[str], rows: Iterable[Iterable]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(str(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_returns(path, r: np.ndarray) -> None:
    atomic_write_text(path, _csv(["j", "r"], ((j, fmt(x)) for j, x in enumerate(r))))


def read_returns(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    r = np.empty(len(rows))
    for row in rows:
        r[int(row["j"])] = float(row["r"])
    return r


def write_histogram(path, h: Histogram) -> None:
    rows = ((fmt(c), int(n), fmt(e)) for c, n, e in zip(h.centers, h.counts, h.errors))
    atomic_write_text(path, _csv(["bin_center", "count", "stderr"], rows))


def read_histogram(path) -> Histogram:
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    centers = np.atleast_1d(data["bin_center"])
    width = float(centers[1] - centers[0]) if len(centers) > 1 else 1.0
    return Histogram(width, float(centers[0] - width / 2),
                     np.atleast_1d(data["count"]).astype(np.int64), np.atleast_1d(data["stderr"]))


def write_avalanches(path, rec: AvalancheRecord) -> None:
    # gap_level is the plateau value that starts at x_k
    rows = ((k + 1, int(x), int(lam), fmt(g))
            for k, (x, lam, g) in enumerate(zip(rec.x_k, rec.lambda_k, rec.gap_levels[1:])))
    atomic_write_text(path, _csv(["k", "x_k", "lambda_k", "gap_level"], rows))


def read_avalanches(path, first_level: float = np.nan) -> AvalancheRecord:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    x = np.array([int(r["x_k"]) for r in rows], dtype=np.int64)
    lam = np.array([int(r["lambda_k"]) for r in rows], dtype=np.int64)
    levels = np.array([first_level] + [float(r["gap_level"]) for r in rows])
    return AvalancheRecord(x, lam, levels)


def write_trace(path, steps, V, js) -> None:
    rows = ((int(s), fmt(v), int(j)) for s, v, j in zip(steps, V, js))
    atomic_write_text(path, _csv(["s", "V", "j_s"], rows))


def write_chi_table(path, rows: Iterable[tuple[float, float, float]]) -> None:
    atomic_write_text(path, _csv(["chi", "mean_L", "stderr"],
                                 ((fmt(c), fmt(m), fmt(e)) for c, m, e in rows)))


def read_chi_table(path) -> list[tuple[float, float, float]]:
    with open(path, newline="") as fh:
        return [(float(r["chi"]), float(r["mean_L"]), float(r["stderr"])) for r in csv.DictReader(fh)]


def write_snapshot(path, lat: LadderLattice) -> None:
    atomic_write_text(path, format_snapshot(lat))


def read_snapshot(path) -> LadderLattice:
    return parse_snapshot(Path(path).read_text())


def garch_record(run_id: int, chi: float | None, fit: GarchFit) -> dict:
    return {
        "run_id": run_id,
        "chi": chi,
        "alpha0": fit.alpha0,
        "alpha1": fit.alpha1,
        "beta1": fit.beta1,
        "loglik": fit.loglik,
        "converged": fit.converged,
    }


def json_safe(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return json_safe(obj.item())
    return obj


def write_jsonl(path, records: Iterable[dict]) -> None:
    text = "".join(json.dumps(json_safe(r), sort_keys=True) + "\n" for r in records)
    atomic_write_text(path, text)


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(json_safe(obj), indent=2, sort_keys=True) + "\n")
