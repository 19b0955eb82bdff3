"""Numerics for the critical fourth-order Neumann problem

    Δ²u − Δu + αu = |u|^{8/(N−4)} u,   ∂ν u = ∂ν(Δu) = 0,

its bubble extremizers, sharp Sobolev constants, boundary-chart
asymptotics and a radial Rayleigh-quotient minimizer on balls.
"""

from paneitz.constants import (
    DimensionError,
    DimensionParams,
    alpha_bar,
    ball_volume,
    beta_closed_form,
    bubble_normalizer,
    dimension_params,
    log_gamma,
    sobolev_constant,
    sphere_area,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionError",
    "DimensionParams",
    "alpha_bar",
    "ball_volume",
    "beta_closed_form",
    "bubble_normalizer",
    "dimension_params",
    "log_gamma",
    "sobolev_constant",
    "sphere_area",
]
