"""GARCH(1,1) quasi maximum likelihood and simulation.

    sigma2_t = alpha0 + alpha1 * eps_{t-1}^2 + beta1 * sigma2_{t-1}

Shocks are the demeaned returns. The likelihood is conditioned on the first
observation, with sigma2_1 set to ``init_var``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from math import log, pi

import numba
import numpy as np
from scipy import optimize

MIN_LENGTH = 100
# distance from the constraint boundary below which a fit is not "converged"
INTERIOR_TOL = 1e-6
# (alpha1, beta1) starting points for the multi-start search
STARTS = ((0.05, 0.90), (0.10, 0.80), (0.02, 0.95))


class GarchFitError(ValueError):
    """The series cannot be fitted (too short or zero variance)."""


@dataclass
class GarchFit:
    alpha0: float
    alpha1: float
    beta1: float
    loglik: float
    converged: bool

    @property
    def persistence(self) -> float:
        return self.alpha1 + self.beta1

    @property
    def params(self) -> tuple[float, float, float]:
        return self.alpha0, self.alpha1, self.beta1

    def to_dict(self) -> dict:
        return asdict(self)


def check_params(params) -> tuple[float, float, float]:
    a0, a1, b1 = (float(p) for p in params)
    if not (a0 > 0 and a1 >= 0 and b1 >= 0 and a1 + b1 < 1):
        raise ValueError(f"invalid GARCH(1,1) parameters {params!r}")
    return a0, a1, b1


@numba.njit(cache=True)
def _variance_path(eps2, a0, a1, b1, init_var):
    s2 = np.empty(eps2.shape[0])
    s2[0] = init_var
    for t in range(1, eps2.shape[0]):
        s2[t] = a0 + a1 * eps2[t - 1] + b1 * s2[t - 1]
    return s2


@numba.njit(cache=True)
def _loglik(eps2, a0, a1, b1, init_var):
    s2 = init_var
    acc = 0.0
    for t in range(1, eps2.shape[0]):
        s2 = a0 + a1 * eps2[t - 1] + b1 * s2
        acc += np.log(s2) + eps2[t] / s2
    return -0.5 * ((eps2.shape[0] - 1) * log(2.0 * pi) + acc)


def _shocks(series, demean: bool) -> np.ndarray:
    r = np.asarray(series, dtype=np.float64)
    return r - r.mean() if demean else r


def garch_filter(series, params, init_var: float, demean: bool = True) -> np.ndarray:
    """Conditional variance path sigma2_t for t = 1..T."""
    a0, a1, b1 = check_params(params)
    if not init_var > 0:
        raise ValueError("init_var must be positive")
    eps = _shocks(series, demean)
    return _variance_path(eps * eps, a0, a1, b1, float(init_var))


def gaussian_loglik(series, params, init_var: float, demean: bool = True) -> float:
    a0, a1, b1 = check_params(params)
    if not init_var > 0:
        raise ValueError("init_var must be positive")
    eps = _shocks(series, demean)
    return float(_loglik(eps * eps, a0, a1, b1, float(init_var)))


def constant_variance_loglik(series, demean: bool = True) -> float:
    """Maximised likelihood of the alpha1 = beta1 = 0 model over t = 2..T."""
    eps = _shocks(series, demean)
    m = len(eps) - 1
    s2 = float(np.mean(eps[1:] ** 2))
    return -0.5 * m * (log(2.0 * pi * s2) + 1.0)


def _to_params(z: np.ndarray) -> tuple[float, float, float]:
    # alpha0 = exp(z0); (alpha1, beta1, 1 - alpha1 - beta1) is a softmax of (z1, z2, 0)
    m = max(z[1], z[2], 0.0)
    e1, e2, e0 = np.exp(z[1] - m), np.exp(z[2] - m), np.exp(-m)
    s = e0 + e1 + e2
    return float(np.exp(z[0])), float(e1 / s), float(e2 / s)


def _from_params(a0: float, a1: float, b1: float) -> np.ndarray:
    rest = 1.0 - a1 - b1
    return np.array([log(a0), log(a1 / rest), log(b1 / rest)])


def fit_garch(series, max_iter: int = 4000) -> GarchFit:
    """Quasi-ML GARCH(1,1) fit by multi-start Nelder-Mead.

    The search runs on the series scaled to unit variance, in coordinates
    that keep alpha0 > 0, alpha1, beta1 > 0 and alpha1 + beta1 < 1. The
    reported alpha0 and log-likelihood refer to the original series. Optima
    within ``INTERIOR_TOL`` of the boundary are returned with
    ``converged=False``.
    """
    eps = _shocks(series, True)
    if len(eps) < MIN_LENGTH:
        raise GarchFitError(f"need at least {MIN_LENGTH} observations, got {len(eps)}")
    var = float(np.mean(eps * eps))
    if not var > 0 or not np.isfinite(var):
        raise GarchFitError("series has zero or non-finite variance")
    e2 = eps * eps / var

    def nll(z):
        a0, a1, b1 = _to_params(z)
        if not (a0 > 0 and np.isfinite(a0)):
            return np.inf
        val = -_loglik(e2, a0, a1, b1, 1.0)
        return val if np.isfinite(val) else np.inf

    best = None
    for a1, b1 in STARTS:
        z0 = _from_params(1.0 - a1 - b1, a1, b1)
        res = optimize.minimize(nll, z0, method="Nelder-Mead",
                                options=dict(maxiter=max_iter, xatol=1e-7, fatol=1e-9))
        if best is None or res.fun < best.fun:
            best = res
    a0, a1, b1 = _to_params(best.x)
    inside = a1 > INTERIOR_TOL and b1 > INTERIOR_TOL and 1.0 - a1 - b1 > INTERIOR_TOL
    a0 *= var
    # the likelihood is finite on the closed region, so report it for boundary optima too
    loglik = float(_loglik(eps * eps, a0, a1, b1, var))
    return GarchFit(a0, a1, b1, loglik, bool(best.success and inside and a0 > 0))


def simulate_garch(params, T: int, rng: np.random.Generator) -> np.ndarray:
    """eps_t = sigma_t z_t with z_t iid N(0, 1), started at the stationary variance."""
    a0, a1, b1 = check_params(params)
    if T < 2:
        raise ValueError("T must be at least 2")
    z = rng.standard_normal(T)
    return _simulate(z, a0, a1, b1, a0 / (1.0 - a1 - b1))


@numba.njit(cache=True)
def _simulate(z, a0, a1, b1, s2):
    out = np.empty(z.shape[0])
    out[0] = np.sqrt(s2) * z[0]
    for t in range(1, z.shape[0]):
        s2 = a0 + a1 * out[t - 1] ** 2 + b1 * s2
        out[t] = np.sqrt(s2) * z[t]
    return out
