"""Extremal 'signal' dynamics that drive the equilibrated lattice to criticality.

Each step locates the site with the largest |v_j|, v_j = r_j (r_{j+1} - r_{j-1}),
then:

1. draws two fresh matter values for phi(1, js-1), phi(1, js) from the
   pre-step environment;
2. shifts theta0(1, j), js-2 <= j <= js, by ``-chi * a_theta`` where
   ``a_theta`` is their current mean;
3. stores the two draws minus their mean;
4. heatbath-updates the rungs theta1(0, js-1) and theta1(0, js).

Only the returns r_{js-1}, r_js, r_{js+1} can change in a step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import _kernels as K
from .lattice import MIN_SLICES, Couplings, InvalidSizeError, LadderLattice, LatticeError, StateError, log_returns

SYMMETRIC = "symmetric"
CONDITIONAL = "conditional"


class SignalDivergenceError(LatticeError, RuntimeError):
    """The signal dynamics left the finite range.

    The shift multiplies the mean of the three links it touches by (1 - chi),
    so it is unstable for chi > 2.
    """


@dataclass
class UpdateParams:
    chi: float
    signal_updates: int = 0
    # "symmetric": fresh matter values from the centred density exp(-a cosh u);
    # "conditional": from the full conditional, recentred by log(L/L_bar)/2
    matter_draw: str = SYMMETRIC

    def __post_init__(self):
        if not self.chi > 0:
            raise ValueError(f"chi must be positive, got {self.chi}")
        if self.signal_updates < 0:
            raise ValueError("signal_updates must be non-negative")
        if self.matter_draw not in (SYMMETRIC, CONDITIONAL):
            raise ValueError(f"unknown matter_draw {self.matter_draw!r}")


@dataclass
class FitnessSignal:
    v: np.ndarray
    V: float
    j_s: int


def fitness_from_returns(r: np.ndarray) -> FitnessSignal:
    r = np.asarray(r, dtype=np.float64)
    v = r * (np.roll(r, -1) - np.roll(r, 1))
    j_s = int(np.argmax(np.abs(v)))  # first maximum wins ties
    return FitnessSignal(v, float(abs(v[j_s])), j_s)


def fitness(lat: LadderLattice) -> FitnessSignal:
    if lat.n < MIN_SLICES:
        raise InvalidSizeError(f"need n >= {MIN_SLICES}")
    return fitness_from_returns(log_returns(lat))


def _require_frozen(lat: LadderLattice) -> None:
    if not lat.axis_frozen:
        raise StateError("signal updates need a lattice with frozen cash axis")


def signal_update_step(lat: LadderLattice, c: Couplings, p: UpdateParams,
                       rng: np.random.Generator) -> tuple[LadderLattice, FitnessSignal]:
    """Apply one extremal update in place.

    Returns the lattice and the fitness of the pre-step configuration, whose
    ``j_s`` is the site that was updated.
    """
    _require_frozen(lat)
    fs = fitness(lat)
    K.signal_step(lat.theta0, lat.theta1, lat.phi, fs.j_s, c.beta, c.d_plus, c.d_bar_plus,
                  p.chi, p.matter_draw == SYMMETRIC, rng, np.zeros(1, dtype=np.int64))
    return lat, fs


Observer = Callable[[np.ndarray, np.ndarray, np.ndarray, LadderLattice], None]


class SignalTrace:
    """Observer that keeps the full (s, V, j_s) record."""

    def __init__(self):
        self._steps: list[np.ndarray] = []
        self._V: list[np.ndarray] = []
        self._js: list[np.ndarray] = []

    def __call__(self, steps, V, js, lat):
        self._steps.append(steps.copy())
        self._V.append(V.copy())
        self._js.append(js.copy())

    @property
    def steps(self) -> np.ndarray:
        return np.concatenate(self._steps) if self._steps else np.empty(0, dtype=np.int64)

    @property
    def V(self) -> np.ndarray:
        return np.concatenate(self._V) if self._V else np.empty(0)

    @property
    def j_s(self) -> np.ndarray:
        return np.concatenate(self._js) if self._js else np.empty(0, dtype=np.int64)


def run_soc(lat: LadderLattice, c: Couplings, p: UpdateParams, rng: np.random.Generator,
            observers: Iterable[Observer] = (), chunk: int = 1 << 16) -> LadderLattice:
    """Apply ``p.signal_updates`` signal steps in place.

    Observers are called once per chunk of steps as
    ``observer(steps, V, j_s, lat)``, where ``V[k]`` and ``j_s[k]`` are the
    signal and site located at step ``steps[k]``. The lattice passed is the
    state after the last step of the chunk.
    """
    _require_frozen(lat)
    if lat.n < MIN_SLICES:
        raise InvalidSizeError(f"need n >= {MIN_SLICES}")
    observers = list(observers)
    done = 0
    total = p.signal_updates
    symmetric = p.matter_draw == SYMMETRIC
    while done < total:
        m = min(chunk, total - done)
        V = np.empty(m)
        js = np.empty(m, dtype=np.int64)
        try:
            K.soc_run(lat.theta0, lat.theta1, lat.phi, c.beta, c.d_plus, c.d_bar_plus,
                      p.chi, symmetric, m, rng, V, js)
        except ValueError as exc:
            raise SignalDivergenceError(
                f"chi={p.chi:g}: fields diverged between steps {done} and {done + m}") from exc
        steps = np.arange(done, done + m, dtype=np.int64)
        for obs in observers:
            obs(steps, V, js, lat)
        done += m
    return lat
