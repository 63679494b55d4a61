"""slemc: Monte Carlo toolkit for Schramm-Loewner evolution.

Samplers for chordal drivers and curves (plain, force-point, extended),
closed-form observables (Green's-function shapes, force-point
martingale observables), the path killing/continuation algebra, and a
seeded statistical verification suite for the curve-decomposition
identities relating them.
"""

from .pathspace import SampledPath, KillSpec, kill, concat, concat_marked, \
    shift_restart, sample_killed
from .drivers import DriverConfig, ForcePointTrack, RadialDiffusionSample, \
    simulate_brownian_driver, simulate_sle_rho_interior, \
    simulate_sle_rho_boundary, simulate_extended, simulate_radial_diffusion
from .loewner import LoewnerFlowState, TracedCurve, evolve_points, \
    trace_curve, occupation_time, neighborhood_area
from .observables import EstimateReport, GreenSpec, QuadratureGrid, green_interior, \
    green_sle_shape, green_capacity_shape, green_boundary, \
    martingale_M_interior, martingale_M_boundary, psi_U, capacity_green_mc, \
    estimate_c_kappa1, minkowski_content
from .stats import TwoSampleResult, weighted_ks_test
from .verify import TestReport, run_suite
from .seeds import substream

__version__ = "0.1.0"

__all__ = [
    "SampledPath", "KillSpec", "kill", "concat", "concat_marked",
    "shift_restart", "sample_killed",
    "DriverConfig", "ForcePointTrack", "RadialDiffusionSample",
    "simulate_brownian_driver", "simulate_sle_rho_interior",
    "simulate_sle_rho_boundary", "simulate_extended",
    "simulate_radial_diffusion",
    "LoewnerFlowState", "TracedCurve", "evolve_points", "trace_curve",
    "occupation_time", "neighborhood_area",
    "EstimateReport", "GreenSpec", "QuadratureGrid", "green_interior", "green_sle_shape",
    "green_capacity_shape", "green_boundary", "martingale_M_interior",
    "martingale_M_boundary", "psi_U", "capacity_green_mc",
    "estimate_c_kappa1", "minkowski_content",
    "TwoSampleResult", "weighted_ks_test",
    "TestReport", "run_suite", "substream",
]
