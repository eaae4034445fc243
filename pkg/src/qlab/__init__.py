"""qlab: numerical workbench for sub-Riemannian calculus on the Heisenberg
group model -- discrete horizontal derivatives, Popp measures, regularized
p-Laplacian solvers, harmonic coordinates and quasiconformality diagnostics.
"""

from . import errors
from .coords import CoordChart, build_harmonic_coords, build_qharmonic_coords, fit_decay, lift_vertical
from .energy import (
    OperatorParams,
    StructureBounds,
    flux_A,
    pairing_IQ,
    q_energy,
    structure_bounds_check,
    weak_residual,
)
from .grid import (
    Grid,
    Mask,
    ScalarField,
    adjoint_derivative,
    apply_horizontal_derivative,
    full_box_mask,
    gauge_annulus_mask,
    gauge_ball_mask,
    integrate,
    mask_from_interior,
)
from .heis import (
    FrameVectors,
    PoppData,
    SubRiemannianMetric,
    dilate,
    frame_at,
    group_inv,
    group_mul,
    koranyi_gauge,
    orthonormalize,
    popp_step2,
)
from .io import read_field, write_field, write_field_csv
from .maps import MapSpec
from .metric_probe import DistortionReport, dist_eps, pointwise_distortion
from .qcdiag import (
    ConditionBatteryReport,
    capacity,
    condition_battery,
    horizontal_differential,
    jacobian_popp,
    modulus_ring,
    morphism_check,
    similarity_test,
)
from .solver import SolveReport, continuation_sweep, solve_plaplacian, solve_sublaplacian

__version__ = "0.1.0"

__all__ = [
    "errors",
    "CoordChart",
    "build_harmonic_coords",
    "build_qharmonic_coords",
    "fit_decay",
    "lift_vertical",
    "OperatorParams",
    "StructureBounds",
    "flux_A",
    "pairing_IQ",
    "q_energy",
    "structure_bounds_check",
    "weak_residual",
    "Grid",
    "Mask",
    "ScalarField",
    "adjoint_derivative",
    "apply_horizontal_derivative",
    "full_box_mask",
    "gauge_annulus_mask",
    "gauge_ball_mask",
    "integrate",
    "mask_from_interior",
    "FrameVectors",
    "PoppData",
    "SubRiemannianMetric",
    "dilate",
    "frame_at",
    "group_inv",
    "group_mul",
    "koranyi_gauge",
    "orthonormalize",
    "popp_step2",
    "read_field",
    "write_field",
    "write_field_csv",
    "MapSpec",
    "DistortionReport",
    "dist_eps",
    "pointwise_distortion",
    "ConditionBatteryReport",
    "capacity",
    "condition_battery",
    "horizontal_differential",
    "jacobian_popp",
    "modulus_ring",
    "morphism_check",
    "similarity_test",
    "SolveReport",
    "continuation_sweep",
    "solve_plaplacian",
    "solve_sublaplacian",
]
