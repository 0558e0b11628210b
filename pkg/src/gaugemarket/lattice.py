"""Ladder lattice for the one-asset gauge market model.

Fields are stored in log form on a 2 x n ladder with periodic time:

* ``theta0[i, j]`` -- temporal link from (i, j) to (i, j+1); i = 0 is the
  cash rail, i = 1 the asset rail.
* ``theta1[j]`` -- spatial rung from (0, j) to (1, j).
* ``phi[i, j]`` -- matter field at (i, j).

Multiplicative fields are ``exp`` of the stored values. A gauge transform
with log gauge function ``h`` acts additively::

    phi(x)      -> h(x) + phi(x)
    theta_mu(x) -> h(x) + theta_mu(x) - h(x + e_mu)
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class LatticeError(Exception):
    """Base class for lattice errors."""


class InvalidSizeError(LatticeError, ValueError):
    pass


class TopologyError(LatticeError, ValueError):
    """Raised for a link that does not exist on the ladder."""


class ConstraintError(LatticeError):
    """Raised when touching a variable pinned by the cash-axis constraint."""


class StateError(LatticeError):
    """Raised when an operation is called in the wrong lattice state."""


MIN_SLICES = 4


@dataclass(frozen=True)
class Site:
    i: int
    j: int

    def __post_init__(self):
        if self.i not in (0, 1):
            raise TopologyError(f"spatial index must be 0 or 1, got {self.i}")


@dataclass(frozen=True)
class Link:
    """Gauge link starting at ``site`` in direction ``mu`` (0 temporal, 1 spatial)."""

    site: Site
    mu: int


@dataclass
class Couplings:
    beta: float = 1.0
    d_plus: float = 1.0
    d_bar_plus: float = 1.0
    # accepted for completeness; the action does not use the minus family
    d_minus: float = 1.0
    d_bar_minus: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        for name in ("d_plus", "d_bar_plus", "d_minus", "d_bar_minus"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class LadderLattice:
    n: int
    theta0: np.ndarray
    theta1: np.ndarray
    phi: np.ndarray
    axis_frozen: bool = False
    rho: float = 1.0

    def __post_init__(self):
        self.theta0 = np.asarray(self.theta0, dtype=np.float64)
        self.theta1 = np.asarray(self.theta1, dtype=np.float64)
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.theta0.shape != (2, self.n) or self.phi.shape != (2, self.n):
            raise InvalidSizeError("theta0 and phi must have shape (2, n)")
        if self.theta1.shape != (self.n,):
            raise InvalidSizeError("theta1 must have shape (n,)")

    @classmethod
    def zeros(cls, n: int) -> LadderLattice:
        return cls(n, np.zeros((2, n)), np.zeros(n), np.zeros((2, n)))

    def copy(self) -> LadderLattice:
        return replace(
            self,
            theta0=self.theta0.copy(),
            theta1=self.theta1.copy(),
            phi=self.phi.copy(),
        )

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.theta0).all()
            and np.isfinite(self.theta1).all()
            and np.isfinite(self.phi).all()
        )

    # multiplicative views
    @property
    def Theta0(self) -> np.ndarray:
        return np.exp(self.theta0)

    @property
    def Theta1(self) -> np.ndarray:
        return np.exp(self.theta1)

    @property
    def Phi(self) -> np.ndarray:
        return np.exp(self.phi)

    @property
    def Phi_bar(self) -> np.ndarray:
        return np.exp(-self.phi)


@dataclass
class GaugeTransform:
    """Log gauge function ``h`` of shape (2, n); ``g(x) = exp(h(x))``."""

    h: np.ndarray = field(default_factory=lambda: np.zeros((2, 0)))

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.h.ndim != 2 or self.h.shape[0] != 2:
            raise InvalidSizeError("gauge function must have shape (2, n)")
        if not np.isfinite(self.h).all():
            raise ValueError("gauge function must be finite")

    @classmethod
    def random(cls, n: int, scale: float, rng: np.random.Generator) -> GaugeTransform:
        return cls(rng.uniform(-scale, scale, size=(2, n)))

    def __add__(self, other: GaugeTransform) -> GaugeTransform:
        return GaugeTransform(self.h + other.h)


def random_init(n: int, spread: float, rng: np.random.Generator) -> LadderLattice:
    """Hot start: every field i.i.d. uniform on [-spread, spread]."""
    if n < MIN_SLICES:
        raise InvalidSizeError(f"need n >= {MIN_SLICES} time slices, got {n}")
    if not spread >= 0:
        raise ValueError(f"spread must be non-negative, got {spread}")
    theta0 = rng.uniform(-spread, spread, size=(2, n))
    theta1 = rng.uniform(-spread, spread, size=n)
    phi = rng.uniform(-spread, spread, size=(2, n))
    return LadderLattice(n, theta0, theta1, phi)


def _check_j(lat: LadderLattice, j: int) -> int:
    if not 0 <= j < lat.n:
        raise IndexError(f"time index {j} out of range for n={lat.n}")
    return j


def log_plaquettes(lat: LadderLattice) -> np.ndarray:
    """log P_10(0, j) for every j."""
    t1 = lat.theta1
    return t1 + lat.theta0[1] - np.roll(t1, -1) - lat.theta0[0]


def plaquette(lat: LadderLattice, j: int) -> float:
    _check_j(lat, j)
    jp = (j + 1) % lat.n
    return float(np.exp(lat.theta1[j] + lat.theta0[1, j] - lat.theta1[jp] - lat.theta0[0, j]))


def log_gauge_link(lat: LadderLattice, x: Site, mu: int) -> float:
    _check_j(lat, x.j)
    if mu == 0:
        jp = (x.j + 1) % lat.n
        return float(-lat.phi[x.i, x.j] + lat.theta0[x.i, x.j] + lat.phi[x.i, jp])
    if mu == 1:
        if x.i != 0:
            raise TopologyError("spatial links exist only from the cash rail")
        return float(-lat.phi[0, x.j] + lat.theta1[x.j] + lat.phi[1, x.j])
    raise TopologyError(f"direction must be 0 or 1, got {mu}")


def gauge_link(lat: LadderLattice, x: Site, mu: int) -> float:
    """Gauge invariant hop R_mu(x) = Phi_bar(x) Theta_mu(x) Phi(x + e_mu)."""
    return float(np.exp(log_gauge_link(lat, x, mu)))


def log_returns(lat: LadderLattice) -> np.ndarray:
    """r_j = -phi(1, j-1) + theta0(1, j-1) + phi(1, j) for all j."""
    phi1 = lat.phi[1]
    return -np.roll(phi1, 1) + np.roll(lat.theta0[1], 1) + phi1


def log_return(lat: LadderLattice, j: int) -> float:
    _check_j(lat, j)
    jm = (j - 1) % lat.n
    return float(-lat.phi[1, jm] + lat.theta0[1, jm] + lat.phi[1, j])


def _log_hops(lat: LadderLattice) -> np.ndarray:
    """Log of all 3n hop elements: cash temporal, asset temporal, rungs."""
    phi = lat.phi
    temporal = -phi + lat.theta0 + np.roll(phi, -1, axis=1)
    rung = -phi[0] + lat.theta1 + phi[1]
    return np.concatenate([temporal[0], temporal[1], rung])


def action(lat: LadderLattice, c: Couplings | None = None) -> float:
    """Gauge invariant action with minimum 0 at the zero-field configuration.

    S = sum_j (P_j + 1/P_j - 2) + sum_links (d R + d_bar / R - d - d_bar)
    """
    c = c or Couplings()
    p = log_plaquettes(lat)
    # 2 cosh(p) - 2 written as 4 sinh^2(p/2) to keep precision near p = 0
    s_plaq = np.sum(4.0 * np.sinh(0.5 * p) ** 2)
    q = _log_hops(lat)
    d, db = c.d_plus, c.d_bar_plus
    if d == db:
        s_hop = np.sum(4.0 * d * np.sinh(0.5 * q) ** 2)
    else:
        s_hop = np.sum(d * np.expm1(q) + db * np.expm1(-q))
    return float(s_plaq + s_hop)


def apply_gauge(lat: LadderLattice, g: GaugeTransform) -> LadderLattice:
    """Return a gauge transformed copy of ``lat``."""
    h = g.h
    if h.shape != (2, lat.n):
        raise InvalidSizeError("gauge function shape does not match lattice")
    out = lat.copy()
    out.phi = h + lat.phi
    out.theta0 = h + lat.theta0 - np.roll(h, -1, axis=1)
    out.theta1 = h[0] + lat.theta1 - h[1]
    out.axis_frozen = lat.axis_frozen and not np.any(h[0] != 0.0)
    return out


def fix_cash_axis(lat: LadderLattice, rho: float = 1.0) -> LadderLattice:
    """Gauge the cash rail to phi(0, j) = 0 and pin its links to log(rho).

    Afterwards every cash return R_0(0, j) equals ``rho`` and the heatbath and
    signal updates leave the cash rail alone.
    """
    if lat.axis_frozen:
        raise StateError("cash axis already frozen")
    if not rho >= 1.0:
        raise ValueError(f"interest factor must be >= 1, got {rho}")
    h = np.zeros((2, lat.n))
    h[0] = -lat.phi[0]
    out = apply_gauge(lat, GaugeTransform(h))
    out.phi[0] = 0.0
    out.theta0[0] = np.log(rho)
    out.axis_frozen = True
    out.rho = float(rho)
    return out


def fix_asset_gauge(lat: LadderLattice) -> LadderLattice:
    """Gauge the asset rail to phi(1, j) = 0, leaving the cash rail untouched.

    In this gauge ``theta0(1, j-1)`` equals the return r_j. The signal update
    averages raw (gauge dependent) link and matter values, so the lattice is
    brought into this gauge once after equilibration; the heatbath alone lets
    the asset-rail gauge drift without bound.
    """
    h = np.zeros((2, lat.n))
    h[1] = -lat.phi[1]
    out = apply_gauge(lat, GaugeTransform(h))
    out.phi[1] = 0.0
    return out


# --- snapshot format -------------------------------------------------------

def format_snapshot(lat: LadderLattice) -> str:
    lines = [f"gm1 n={lat.n} frozen={int(lat.axis_frozen)} rho={lat.rho:.16e}"]
    for i in range(2):
        for j in range(lat.n):
            lines.append(f"theta0 {i} {j} {lat.theta0[i, j]:.16e}")
    for j in range(lat.n):
        lines.append(f"theta1 0 {j} {lat.theta1[j]:.16e}")
    for i in range(2):
        for j in range(lat.n):
            lines.append(f"phi {i} {j} {lat.phi[i, j]:.16e}")
    return "\n".join(lines) + "\n"


def parse_snapshot(text: str) -> LadderLattice:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("gm1 "):
        raise ValueError("missing gm1 header line")
    header = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
    n = int(header["n"])
    lat = LadderLattice.zeros(n)
    lat.axis_frozen = header.get("frozen", "0") == "1"
    lat.rho = float(header.get("rho", "1"))
    seen = set()
    for ln in lines[1:]:
        kind, i, j, value = ln.split()
        i, j, v = int(i), int(j), float(value)
        if kind == "theta0":
            lat.theta0[i, j] = v
        elif kind == "theta1":
            if i != 0:
                raise TopologyError("theta1 records must have i = 0")
            lat.theta1[j] = v
        elif kind == "phi":
            lat.phi[i, j] = v
        else:
            raise ValueError(f"unknown record kind {kind!r}")
        seen.add((kind, i, j))
    if len(seen) != 5 * n:
        raise ValueError(f"snapshot has {len(seen)} distinct records, expected {5 * n}")
    return lat
