"""Gaussian sequence model lab: estimators, GoF and likelihood-free tests, Monte Carlo checks."""

from .bodies import (
    DimProfile,
    LpBody,
    boundary_scale,
    coordinate_kolmogorov_dim,
    counterexample_body,
    d_l,
    d_u,
    dim_profile,
    gauge,
    kol_inequality_check,
    membership,
    tail_sup_energy,
    truncation_dim,
)
from .montecarlo import MCEstimate, RngStream

__version__ = "0.1.0"
