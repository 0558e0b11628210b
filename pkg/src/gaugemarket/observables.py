"""Diagnostics of lattice runs: link order parameter, avalanches, gains."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, stats


def symmetric_link(r):
    """cosh(r) - 1, computed as 2 sinh^2(r/2) (exactly even in r)."""
    return 2.0 * np.sinh(0.5 * np.asarray(r, dtype=np.float64)) ** 2


def lattice_avg_link(series) -> float:
    r = np.asarray(series, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty returns series")
    return float(np.mean(symmetric_link(r)))


def ensemble_mean(values: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error of per-run values."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no values")
    err = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), err


def excess_kurtosis(r) -> float:
    return float(stats.kurtosis(np.asarray(r, dtype=np.float64), fisher=True, bias=True))


# --- gap function and avalanches -------------------------------------------

@dataclass
class AvalancheRecord:
    x_k: np.ndarray          # steps where the gap function drops
    lambda_k: np.ndarray     # x_k - x_{k-1}, with x_0 = 0
    gap_levels: np.ndarray   # G on each plateau (len(x_k) + 1 entries)

    def __len__(self) -> int:
        return len(self.x_k)


def gap_and_avalanches(trace) -> AvalancheRecord:
    V = np.asarray(trace, dtype=np.float64)
    if V.size == 0:
        raise ValueError("empty signal trace")
    G = np.minimum.accumulate(V)
    x = np.flatnonzero(G[1:] < G[:-1]) + 1
    lam = np.diff(np.concatenate([[0], x]))
    levels = np.concatenate([[G[0]], G[x]])
    return AvalancheRecord(x.astype(np.int64), lam.astype(np.int64), levels)


class GapTracker:
    """Streaming gap function; usable as a ``run_soc`` observer."""

    def __init__(self):
        self.level = np.inf
        self.x: list[int] = []
        self.levels: list[float] = []

    def __call__(self, steps, V, js, lat=None):
        if len(V) == 0:
            return
        G = np.minimum.accumulate(np.concatenate([[self.level], V]))[1:]
        prev = np.concatenate([[self.level], G[:-1]])
        for k in np.flatnonzero(G < prev):
            self.levels.append(float(G[k]))
            if np.isfinite(prev[k]):  # the first value opens a plateau, not a drop
                self.x.append(int(steps[k]))
        self.level = float(G[-1])

    def record(self) -> AvalancheRecord:
        x = np.asarray(self.x, dtype=np.int64)
        lam = np.diff(np.concatenate([[0], x])).astype(np.int64)
        return AvalancheRecord(x, lam, np.asarray(self.levels))


# --- histograms ------------------------------------------------------------

@dataclass
class Histogram:
    bin_width: float
    origin: float            # left edge of bin 0
    counts: np.ndarray
    errors: np.ndarray       # standard error of the pooled count, across runs

    @property
    def centers(self) -> np.ndarray:
        return self.origin + self.bin_width * (np.arange(len(self.counts)) + 0.5)

    @property
    def density(self) -> np.ndarray:
        """Counts per unit bin width (dN / dx)."""
        return self.counts / self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rebin(self, factor: int) -> Histogram:
        """Merge ``factor`` adjacent bins; trailing bins are zero padded."""
        m = -(-len(self.counts) // factor) * factor
        c = np.zeros(m, dtype=self.counts.dtype)
        c[: len(self.counts)] = self.counts
        e = np.zeros(m)
        e[: len(self.errors)] = self.errors
        return Histogram(
            self.bin_width * factor,
            self.origin,
            c.reshape(-1, factor).sum(axis=1),
            np.sqrt((e.reshape(-1, factor) ** 2).sum(axis=1)),
        )


def _pool(per_run: np.ndarray, width: float, origin: float) -> Histogram:
    counts = per_run.sum(axis=0)
    k = per_run.shape[0]
    if k > 1:
        errors = np.sqrt(k) * per_run.std(axis=0, ddof=1)
    else:
        errors = np.zeros(per_run.shape[1])
    return Histogram(width, origin, counts, errors)


def avalanche_histogram(records: Iterable[AvalancheRecord], bin_width: float = 1.0,
                        n_bins: int = 10_000) -> Histogram:
    """Pooled avalanche lengths; bin 0 starts at 0.5 so integer lengths sit at
    bin centres when ``bin_width`` is 1."""
    records = list(records)
    if not records:
        raise ValueError("need at least one avalanche record")
    origin = 0.5
    per_run = np.zeros((len(records), n_bins), dtype=np.int64)
    for k, rec in enumerate(records):
        idx = np.floor((rec.lambda_k - origin) / bin_width).astype(np.int64)
        idx = idx[(idx >= 0) & (idx < n_bins)]
        per_run[k] = np.bincount(idx, minlength=n_bins)
    return _pool(per_run, bin_width, origin)


def gains_histogram(series: Iterable, bin_width: float, half_bins: int | None = None) -> Histogram:
    """Pooled histogram of returns with a bin centred on zero.

    ``half_bins`` fixes the range to bins -half_bins..half_bins; by default it
    is chosen to cover every return.
    """
    series = [np.asarray(s, dtype=np.float64) for s in series]
    if not series:
        raise ValueError("need at least one returns series")
    if half_bins is None:
        rmax = max(float(np.max(np.abs(s))) if s.size else 0.0 for s in series)
        half_bins = int(np.floor(rmax / bin_width + 0.5))
    nb = 2 * half_bins + 1
    origin = -(half_bins + 0.5) * bin_width
    per_run = np.zeros((len(series), nb), dtype=np.int64)
    for k, s in enumerate(series):
        idx = np.floor(s / bin_width + 0.5).astype(np.int64) + half_bins
        idx = idx[(idx >= 0) & (idx < nb)]
        per_run[k] = np.bincount(idx, minlength=nb)
    return _pool(per_run, bin_width, origin)


@dataclass
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def loglog_fit(hist: Histogram, lo: float, hi: float) -> PowerLawFit:
    """Least-squares line through log(density) vs log(centre) for the
    positive-count bins with centres in [lo, hi]."""
    x = hist.centers
    m = (x >= lo) & (x <= hi) & (hist.counts > 0)
    if m.sum() < 3:
        raise ValueError("fewer than three populated bins in range")
    lx = np.log(x[m])
    ly = np.log(hist.density[m])
    res = stats.linregress(lx, ly)
    return PowerLawFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), int(m.sum()))


# --- chi dependence --------------------------------------------------------

class TanhFitError(RuntimeError):
    def __init__(self, message: str, best: TanhFit):
        super().__init__(message)
        self.best = best


@dataclass
class TanhFit:
    """y = a1 tanh[a2 (-log10 x + a3)] + a4, normalised so a2 >= 0."""

    a1: float
    a2: float
    a3: float
    a4: float
    residual: float

    def __call__(self, x):
        return tanh_curve(np.asarray(x, dtype=np.float64), self.a1, self.a2, self.a3, self.a4)

    @property
    def upper(self) -> float:
        """Limit as x -> 0."""
        return self.a4 + self.a1

    @property
    def lower(self) -> float:
        """Limit as x -> infinity."""
        return self.a4 - self.a1

    @property
    def symmetry_point(self) -> float:
        return 10.0 ** self.a3


def tanh_curve(x, a1, a2, a3, a4):
    return a1 * np.tanh(a2 * (-np.log10(x) + a3)) + a4


def fit_tanh_chi_curve(chi, mean_link, errors=None, restarts: int = 5, seed: int = 0,
                       max_iter: int = 20_000) -> TanhFit:
    """Four-parameter tanh fit by multi-start Nelder-Mead.

    ``errors`` are accepted for the table but the fit is unweighted least
    squares.
    """
    x = np.asarray(chi, dtype=np.float64)
    y = np.asarray(mean_link, dtype=np.float64)
    if x.size < 5:
        raise ValueError("need at least five points")
    if np.any(x <= 0):
        raise ValueError("chi values must be positive")
    lx = -np.log10(x)
    scale = float(np.ptp(y)) or max(abs(float(y.mean())), 1.0)

    def ssr(p):
        a1, a2, a3, a4 = p
        return float(np.sum(((a1 * np.tanh(a2 * (lx + a3)) + a4 - y) / scale) ** 2))

    # deterministic start: plateau guesses and the crossing of the midline
    order = np.argsort(x)
    ys = y[order]
    hi, lo = float(ys[0]), float(ys[-1])
    mid = 0.5 * (hi + lo)
    k = int(np.argmin(np.abs(ys - mid)))
    starts = [np.array([0.5 * (hi - lo), 1.0, np.log10(x[order][k]), mid])]
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        starts.append(starts[0] * np.array([rng.uniform(0.5, 1.5), rng.uniform(0.3, 3.0), 1.0, 1.0])
                      + np.array([0.0, 0.0, rng.uniform(-2.0, 2.0), 0.0]))

    opts = dict(maxiter=max_iter, maxfev=2 * max_iter, xatol=1e-12, fatol=1e-20)
    best = None
    for p0 in starts:
        res = optimize.minimize(ssr, p0, method="Nelder-Mead", options=opts)
        # restart the simplex at the optimum to escape premature collapse
        for _ in range(3):
            res2 = optimize.minimize(ssr, res.x, method="Nelder-Mead", options=opts)
            if res2.fun >= res.fun * (1 - 1e-12):
                res = res2
                break
            res = res2
        if best is None or res.fun < best.fun:
            best = res
    a1, a2, a3, a4 = best.x
    if a2 < 0:
        a1, a2 = -a1, -a2
    fit = TanhFit(float(a1), float(a2), float(a3), float(a4), float(best.fun * scale ** 2))
    if not (best.success and np.all(np.isfinite(best.x))):
        raise TanhFitError(f"tanh fit did not converge: {best.message}", fit)
    return fit
