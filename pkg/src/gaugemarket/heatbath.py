"""Exact heatbath updates from the cosh-form conditional densities.

Every single-variable conditional of exp(-beta S) has the form

    p(v) ~ exp(-beta (L_bar e^v + L e^-v))

Shifting by ``log(L / L_bar) / 2`` makes it symmetric,
``exp(-2 beta sqrt(L L_bar) cosh u)``, which is what ``sample_cosh`` draws.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from math import log, sqrt

import numpy as np

from . import _kernels as K
from .lattice import (
    ConstraintError,
    Couplings,
    LadderLattice,
    Link,
    Site,
    StateError,
    TopologyError,
    log_plaquettes,
)

log_ = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalCoefficients:
    L: float
    L_bar: float

    @property
    def product(self) -> float:
        return self.L * self.L_bar

    @property
    def shift(self) -> float:
        """Centre of the conditional density, ``log(L / L_bar) / 2``."""
        return 0.5 * log(self.L / self.L_bar)

    def width_parameter(self, beta: float) -> float:
        """``a = 2 beta sqrt(L L_bar)`` of the symmetrised density."""
        return 2.0 * beta * sqrt(self.L * self.L_bar)


def _kind_for_link(lat: LadderLattice, x: Site, mu: int) -> int:
    if not 0 <= x.j < lat.n:
        raise IndexError(f"time index {x.j} out of range for n={lat.n}")
    if mu == 1:
        if x.i != 0:
            raise TopologyError("spatial links exist only from the cash rail")
        return K.RUNG
    if mu != 0:
        raise TopologyError(f"direction must be 0 or 1, got {mu}")
    if x.i == 1:
        return K.ASSET_LINK
    if lat.axis_frozen:
        raise ConstraintError(f"cash-rail link theta0(0,{x.j}) is frozen")
    return K.CASH_LINK


def _kind_for_site(lat: LadderLattice, x: Site) -> int:
    if not 0 <= x.j < lat.n:
        raise IndexError(f"time index {x.j} out of range for n={lat.n}")
    if x.i == 0:
        raise ConstraintError("cash-rail matter fields are not updated")
    return K.ASSET_MATTER


def _coeffs(lat: LadderLattice, c: Couplings, kind: int, j: int) -> LocalCoefficients:
    la, lb = K.coeffs(lat.theta0, lat.theta1, lat.phi, kind, j, c.d_plus, c.d_bar_plus)
    return LocalCoefficients(la, lb)


def local_coeffs_theta(lat: LadderLattice, c: Couplings, x: Site, mu: int) -> LocalCoefficients:
    return _coeffs(lat, c, _kind_for_link(lat, x, mu), x.j)


def local_coeffs_phi(lat: LadderLattice, c: Couplings, x: Site) -> LocalCoefficients:
    return _coeffs(lat, c, _kind_for_site(lat, x), x.j)


def sample_cosh(a: float, rng: np.random.Generator, size: int | None = None):
    """Draw from the density proportional to ``exp(-a cosh u)``.

    Rejection sampling with a N(0, 1/a) envelope; exact for every a > 0.
    Returns a float, or an array when ``size`` is given.
    """
    if not (np.isfinite(a) and a > 0):
        raise ValueError(f"sample_cosh requires finite a > 0, got {a}")
    if size is None:
        return K.sample_cosh(float(a), rng, np.zeros(1, dtype=np.int64))
    out, _ = K.sample_cosh_many(float(a), int(size), rng)
    return out


def acceptance_rate(a: float, rng: np.random.Generator, size: int = 10_000) -> float:
    """Empirical acceptance probability of the cosh sampler at ``a``."""
    _, proposals = K.sample_cosh_many(float(a), int(size), rng)
    return size / proposals


def heatbath_update(lat: LadderLattice, c: Couplings, target: Link | Site,
                    rng: np.random.Generator) -> LadderLattice:
    """Replace one variable by an exact draw from its conditional; in place."""
    if isinstance(target, Link):
        kind = _kind_for_link(lat, target.site, target.mu)
        j = target.site.j
    else:
        kind = _kind_for_site(lat, target)
        j = target.j
    K.update(lat.theta0, lat.theta1, lat.phi, kind, j, c.beta, c.d_plus, c.d_bar_plus,
             rng, np.zeros(1, dtype=np.int64))
    return lat


@dataclass
class SweepDiagnostics:
    """Per-sweep mean plaquette term P + 1/P - 2 and sampler acceptance."""

    mean_plaquette: np.ndarray
    acceptance: np.ndarray


def heatbath_sweep(lat: LadderLattice, c: Couplings, rng: np.random.Generator,
                   count: int = 1) -> SweepDiagnostics:
    """Run ``count`` full sweeps over every unfrozen variable, in place.

    Order per sweep: rungs theta1(0, j), asset links theta0(1, j), asset
    matter phi(1, j), each for j = 0..n-1.
    """
    if not lat.axis_frozen:
        raise StateError("apply fix_cash_axis before heatbath sweeps")
    if count < 0:
        raise ValueError("sweep count must be non-negative")
    plaq = np.empty(count)
    proposals = np.empty(count, dtype=np.int64)
    if count:
        K.sweeps(lat.theta0, lat.theta1, lat.phi, c.beta, c.d_plus, c.d_bar_plus,
                 count, rng, plaq, proposals)
        log_.debug("heatbath: %d sweeps, final mean plaquette term %.6g", count, plaq[-1])
    return SweepDiagnostics(plaq, (3 * lat.n) / np.maximum(proposals, 1))


def mean_abs_log_plaquette(lat: LadderLattice) -> float:
    return float(np.mean(np.abs(log_plaquettes(lat))))
