"""Discrete moduli of curve families, explicit branched mapping families, and
numerical checks of modulus inequalities for them."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import BranchPointError, ContractViolation, DivergentIntegralError
from .geom import INFINITY, Annulus, Ball, Box, PointSet, Sphere, chordal_distance
from .grid import Grid
from .curve import CurveFamily, Polyline, connecting_family_spec, curve_cell_incidence, lift_family, radial_family
from .modsolve import (
    DensityField,
    ModulusResult,
    curve_length_under_density,
    energy,
    modulus_connecting,
    modulus_finite,
    ring_lower_bound,
)
from .mapzoo import (
    MapFamily,
    QWeight,
    K_I_sum,
    K_O_analytic,
    K_O_numeric,
    K_O_printed,
    branch_inverses,
    evaluate,
    paired_q,
    q_eval,
    q_norm,
)
from .verify import (
    EquicontinuityReport,
    EtaProfile,
    PoletskyReport,
    closure_scan,
    equicontinuity_scan,
    eta_profile,
    rhs_integral,
    verify_poletsky,
)
