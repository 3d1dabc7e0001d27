"""Stiffly accurate stochastic Runge-Kutta methods for SDEs and index-1 SDAEs."""

from .errors import NumericalError, SrkError, ValidationError
from .families import FamilySpec, build
from .solver import (
    NewtonConfig,
    NoiseIncrement,
    SdaeProblem,
    Trajectory,
    coarsen_increments,
    draw_increments,
    exact_reference,
    simulate_batch,
    simulate_path,
    srk_step,
)
from .stability import (
    TestPoint,
    a_stability_probe,
    closed_form_gain,
    ms_gain,
    region_grid,
    response_polynomial,
    sde_ms_stable,
)
from .convergence import strong_order_estimate
from .tableau import SrkTableau, effective_order, order_residuals, validate_structure

__all__ = [
    "FamilySpec", "NewtonConfig", "NoiseIncrement", "NumericalError", "SdaeProblem", "SrkError",
    "SrkTableau", "TestPoint", "Trajectory", "ValidationError", "a_stability_probe", "build",
    "closed_form_gain", "coarsen_increments", "draw_increments", "effective_order",
    "exact_reference", "ms_gain", "order_residuals", "region_grid", "response_polynomial",
    "sde_ms_stable", "simulate_batch", "simulate_path", "srk_step", "strong_order_estimate",
    "validate_structure",
]
