"""Compiled inner loops shared by the heatbath and signal-update modules.

All kernels work in place on the raw field arrays of a ``LadderLattice``
(``theta0`` (2, n), ``theta1`` (n,), ``phi`` (2, n)) and draw from a numpy
``Generator`` so compiled and pure-Python paths share one random stream.

Variable kinds used by ``coeffs``/``update``:

    RUNG          theta1(0, j)
    ASSET_LINK    theta0(1, j)
    CASH_LINK     theta0(0, j)   (only meaningful before the axis is frozen)
    ASSET_MATTER  phi(1, j)
"""
from __future__ import annotations

from math import cosh, exp, inf, log, sqrt

import numba
import numpy as np

RUNG = 0
ASSET_LINK = 1
CASH_LINK = 2
ASSET_MATTER = 3

_jit = numba.njit(cache=True)


@_jit
def coeffs(th0, th1, phi, kind, j, d, db):
    """(L, L_bar) such that the action restricted to one variable v is
    L_bar * exp(v) + L * exp(-v) + const."""
    n = th1.shape[0]
    jp = (j + 1) % n
    jm = (j - 1) % n
    if kind == RUNG:
        e1 = th0[1, j] - th1[jp] - th0[0, j]
        e2 = th1[jm] + th0[1, jm] - th0[0, jm]
        e3 = -phi[0, j] + phi[1, j]
        lb = exp(e1) + exp(-e2) + d * exp(e3)
        la = exp(-e1) + exp(e2) + db * exp(-e3)
    elif kind == ASSET_LINK:
        e1 = th1[j] - th1[jp] - th0[0, j]
        e2 = -phi[1, j] + phi[1, jp]
        lb = exp(e1) + d * exp(e2)
        la = exp(-e1) + db * exp(-e2)
    elif kind == CASH_LINK:
        e1 = th1[j] + th0[1, j] - th1[jp]
        e2 = -phi[0, j] + phi[0, jp]
        lb = exp(-e1) + d * exp(e2)
        la = exp(e1) + db * exp(-e2)
    else:
        e1 = -phi[1, jm] + th0[1, jm]
        e2 = th0[1, j] + phi[1, jp]
        e3 = -phi[0, j] + th1[j]
        lb = d * exp(e1) + db * exp(-e2) + d * exp(e3)
        la = db * exp(-e1) + d * exp(e2) + db * exp(-e3)
    return la, lb


@_jit
def sample_cosh(a, rng, tally):
    """Exact draw from density ~ exp(-a cosh u).

    Gaussian proposal with variance 1/a, accepted with probability
    exp(-a (cosh u - 1 - u^2/2)), which is <= 1 for every u.
    """
    if not (a > 0.0 and a < inf):
        raise ValueError("sample_cosh requires finite a > 0")
    s = 1.0 / sqrt(a)
    while True:
        tally[0] += 1
        u = s * rng.standard_normal()
        u2 = u * u
        if u2 < 1e-4:
            excess = u2 * u2 / 24.0 * (1.0 + u2 / 30.0)
        else:
            excess = cosh(u) - 1.0 - 0.5 * u2
        if rng.random() < exp(-a * excess):
            return u


@_jit
def sample_cosh_many(a, size, rng):
    out = np.empty(size)
    tally = np.zeros(1, dtype=np.int64)
    for k in range(size):
        out[k] = sample_cosh(a, rng, tally)
    return out, tally[0]


@_jit
def store(th0, th1, phi, kind, j, value):
    if kind == RUNG:
        th1[j] = value
    elif kind == ASSET_LINK:
        th0[1, j] = value
    elif kind == CASH_LINK:
        th0[0, j] = value
    else:
        phi[1, j] = value


@_jit
def update(th0, th1, phi, kind, j, beta, d, db, rng, tally):
    la, lb = coeffs(th0, th1, phi, kind, j, d, db)
    u = sample_cosh(2.0 * beta * sqrt(la * lb), rng, tally)
    store(th0, th1, phi, kind, j, u + 0.5 * log(la / lb))


@_jit
def sweeps(th0, th1, phi, beta, d, db, count, rng, plaq_out, proposals_out):
    """``count`` lexicographic sweeps over rungs, asset links, asset matter.

    Records the mean plaquette term P + 1/P - 2 and the number of sampler
    proposals after each sweep.
    """
    n = th1.shape[0]
    tally = np.zeros(1, dtype=np.int64)
    for k in range(count):
        tally[0] = 0
        for kind in (RUNG, ASSET_LINK, ASSET_MATTER):
            for j in range(n):
                update(th0, th1, phi, kind, j, beta, d, db, rng, tally)
        acc = 0.0
        for j in range(n):
            p = th1[j] + th0[1, j] - th1[(j + 1) % n] - th0[0, j]
            acc += 2.0 * cosh(p) - 2.0
        plaq_out[k] = acc / n
        proposals_out[k] = tally[0]


@_jit
def return_at(th0, phi, j, n):
    jm = (j - 1) % n
    return (-phi[1, jm] + th0[1, jm]) + phi[1, j]


@_jit
def signal_step(th0, th1, phi, js, beta, d, db, chi, symmetric, rng, tally):
    """One extremal update at signal site ``js``.

    Matter draws for js-1 and js both use the pre-step environment. With
    ``symmetric`` they come from the centred density exp(-a cosh u); otherwise
    from the full conditional (recentred by log(L/L_bar)/2).
    """
    n = th1.shape[0]
    j1 = (js - 1) % n
    j2 = (js - 2) % n
    la1, lb1 = coeffs(th0, th1, phi, ASSET_MATTER, j1, d, db)
    la2, lb2 = coeffs(th0, th1, phi, ASSET_MATTER, js, d, db)
    p1 = sample_cosh(2.0 * beta * sqrt(la1 * lb1), rng, tally)
    p2 = sample_cosh(2.0 * beta * sqrt(la2 * lb2), rng, tally)
    if not symmetric:
        p1 += 0.5 * log(la1 / lb1)
        p2 += 0.5 * log(la2 / lb2)
    a_theta = (th0[1, j2] + th0[1, j1] + th0[1, js]) / 3.0
    a_phi = 0.5 * (p1 + p2)
    shift = chi * a_theta
    th0[1, j2] -= shift
    th0[1, j1] -= shift
    th0[1, js] -= shift
    phi[1, j1] = p1 - a_phi
    phi[1, js] = p2 - a_phi
    update(th0, th1, phi, RUNG, j1, beta, d, db, rng, tally)
    update(th0, th1, phi, RUNG, js, beta, d, db, rng, tally)


@_jit
def soc_run(th0, th1, phi, beta, d, db, chi, symmetric, steps, rng, v_out, js_out):
    """Iterate ``signal_step``; returns and fitness are kept incrementally.

    Returns and fitness entries are recomputed from the fields (never
    accumulated), so they match a full recomputation bit for bit.
    """
    n = th1.shape[0]
    tally = np.zeros(1, dtype=np.int64)
    r = np.empty(n)
    v = np.empty(n)
    for j in range(n):
        r[j] = return_at(th0, phi, j, n)
    for j in range(n):
        v[j] = r[j] * (r[(j + 1) % n] - r[(j - 1) % n])
    for s in range(steps):
        js = 0
        best = -1.0
        for j in range(n):
            a = abs(v[j])
            if a > best:
                best = a
                js = j
        v_out[s] = best
        js_out[s] = js
        signal_step(th0, th1, phi, js, beta, d, db, chi, symmetric, rng, tally)
        for k in range(-1, 2):
            jj = (js + k) % n
            r[jj] = return_at(th0, phi, jj, n)
        for k in range(-2, 3):
            jj = (js + k) % n
            v[jj] = r[jj] * (r[(jj + 1) % n] - r[(jj - 1) % n])
    return tally[0]
