"""Monte Carlo simulation of a gauge-lattice market model.

A 2 x n ladder of cash and asset rails is equilibrated with an exact
heatbath, then driven by extremal signal updates into a critical state.
"""
from .garch import GarchFit, fit_garch, simulate_garch
from .heatbath import heatbath_sweep, heatbath_update, sample_cosh
from .lattice import (
    Couplings,
    GaugeTransform,
    LadderLattice,
    Link,
    Site,
    action,
    apply_gauge,
    fix_asset_gauge,
    fix_cash_axis,
    log_returns,
    random_init,
)
from .observables import (
    avalanche_histogram,
    fit_tanh_chi_curve,
    gains_histogram,
    gap_and_avalanches,
    lattice_avg_link,
)
from .runner import RunConfig, run_ensemble, run_single, sweep_chi
from .soc import SignalDivergenceError, UpdateParams, run_soc, signal_update_step

__version__ = "0.1.0"

__all__ = [
    "SignalDivergenceError",
    "action",
    "apply_gauge",
    "avalanche_histogram",
    "Couplings",
    "fit_garch",
    "fit_tanh_chi_curve",
    "fix_asset_gauge",
    "fix_cash_axis",
    "gains_histogram",
    "gap_and_avalanches",
    "GarchFit",
    "GaugeTransform",
    "heatbath_sweep",
    "heatbath_update",
    "LadderLattice",
    "lattice_avg_link",
    "Link",
    "log_returns",
    "random_init",
    "run_ensemble",
    "run_single",
    "run_soc",
    "RunConfig",
    "sample_cosh",
    "signal_update_step",
    "simulate_garch",
    "Site",
    "sweep_chi",
    "UpdateParams",
]
