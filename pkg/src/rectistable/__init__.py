"""Numerics for exit distributions of x-dependent rectilinear stable processes from a ball."""
__version__ = "0.1.0"

from .stable_math import StabilityIndex, compute_A_alpha, compute_A_tilde_alpha  # noqa: E402
from .geometry import Ball, CoefficientField, field_by_name  # noqa: E402
from .barriers import BarrierParams, build_theta, choose_theta_params  # noqa: E402
from .nonlocal_quad import QuadratureSpec, pv_directional, sign_audit_sub, sign_audit_super  # noqa: E402
from .exit_mc import SimulationSpec, simulate_exit  # noqa: E402

__all__ = [
    "StabilityIndex",
    "compute_A_alpha",
    "compute_A_tilde_alpha",
    "Ball",
    "CoefficientField",
    "field_by_name",
    "BarrierParams",
    "build_theta",
    "choose_theta_params",
    "QuadratureSpec",
    "pv_directional",
    "sign_audit_super",
    "sign_audit_sub",
    "SimulationSpec",
    "simulate_exit",
]
