"""Horizontal harmonic and Q-harmonic coordinates by Dirichlet correction,
decay measurement of the corrections, and the vertical lift of planar curves.

Charts are built per radius on a gauge-ball-adapted grid (the z extent of a
gauge ball of radius r is r^2/4, so each radius gets its own lattice at equal
relative resolution); the correction decay is then a clean power law.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .energy import OperatorParams, _gtilde, _metric_inverse
from .errors import MatrixSingular
from .grid import Grid, ScalarField, gauge_ball_mask, horizontal_gradient
from .heis import SubRiemannianMetric, group_inv, group_mul, koranyi_gauge
from .solver import solve_plaplacian, solve_sublaplacian

__all__ = [
    "CoordChart",
    "build_harmonic_coords",
    "build_qharmonic_coords",
    "lift_vertical",
    "fit_decay",
]


@dataclass
class CoordChart:
    """Corrected horizontal coordinates around a center point."""

    center: np.ndarray
    radius: float
    u1: ScalarField
    u2: ScalarField
    frame_matrix_cond: float
    decay: list = field(default_factory=list)
    min_grad_u1: float = float("nan")
    corrections_norm: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "radius": self.radius,
            "frame_matrix_cond": self.frame_matrix_cond,
            "decay": [[float(r), float(m)] for r, m in self.decay],
            "min_grad_u1": self.min_grad_u1,
            "corrections_norm": self.corrections_norm,
        }


def _ball_grid(center, r: float, n: int) -> Grid:
    """Grid adapted to the (twisted) gauge ball of radius r around ``center``."""
    from .grid import _gauge_ball_extent

    c = np.asarray(center, dtype=float)
    pad = 1.35
    ex, ey, ez = _gauge_ball_extent(c, r)
    half_xy = pad * max(ex, ey)
    half_z = max(pad * ez, 1e-9)
    return Grid(
        (c[0] - half_xy, c[1] - half_xy, c[2] - half_z),
        (c[0] + half_xy, c[1] + half_xy, c[2] + half_z),
        (n, n, n),
    )


def _chart_matrices(u1: np.ndarray, u2: np.ndarray, grid: Grid) -> np.ndarray:
    """(X_i u^j) matrices on the grid, shape (nx, ny, nz, 2, 2)."""
    m = np.empty(grid.n + (2, 2))
    g1 = horizontal_gradient(u1, grid=grid)
    g2 = horizontal_gradient(u2, grid=grid)
    m[..., 0, 0] = g1[0]
    m[..., 1, 0] = g1[1]
    m[..., 0, 1] = g2[0]
    m[..., 1, 1] = g2[1]
    return m


def _quarter_ball(center, r: float, grid: Grid, interior: np.ndarray) -> np.ndarray:
    """Nodes near the center for the invertibility check: the gauge ball of
    radius r/4, widened to the innermost tenth of the mask when the lattice
    is too coarse to populate it."""
    pts = grid.points()
    gauge = koranyi_gauge(group_mul(group_inv(np.asarray(center)), pts))
    cut = max(r / 4.0, float(np.quantile(gauge[interior], 0.10)))
    return interior & (gauge <= cut)


def _build_coords(
    p,
    radii,
    metric: SubRiemannianMetric,
    params: OperatorParams | None,
    n: int,
    det_floor: float,
    tol: float,
) -> CoordChart:
    p = np.asarray(p, dtype=float)
    radii = [float(r) for r in radii]
    if not radii or any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("radii must be a decreasing list")
    q_mode = params is not None
    decay = []
    best = None
    for r in radii:
        grid = _ball_grid(p, r, n)
        mask = gauge_ball_mask(p, r, grid)
        pts = grid.points()
        inv, om = _metric_inverse(metric, pts)
        vol_w = om * grid.cell_volume
        coords_fields = (pts[..., 0], pts[..., 1])
        sols = []
        norm_acc = 0.0
        for bdata in coords_fields:
            if q_mode:
                sol, _ = solve_plaplacian(
                    mask, bdata, params, metric, tol=tol, with_monitors=False
                )
                u = sol.values
            else:
                u = solve_sublaplacian(mask, bdata, metric, tol=1e-13).values
            sols.append(u)
            w = u - bdata
            gw = horizontal_gradient(w, grid=grid)
            gnorm2 = _gtilde(inv, gw, gw)
            if q_mode:
                # unnormalized L^Q norm of the correction gradient
                norm_acc += float(np.sum((gnorm2 ** (params.p_exp / 2.0) * vol_w)[mask.interior]))
            else:
                # ball-averaged squared L^2 norm
                vol = float(np.sum(vol_w[mask.interior]))
                norm_acc += float(np.sum((gnorm2 * vol_w)[mask.interior])) / vol
        if q_mode:
            norm = norm_acc ** (1.0 / params.p_exp)
        else:
            norm = norm_acc
        decay.append((r, norm))

        quarter = _quarter_ball(p, r, grid, mask.interior)
        if not np.any(quarter):
            continue
        mats = _chart_matrices(sols[0], sols[1], grid)[quarter]
        dets = np.abs(mats[..., 0, 0] * mats[..., 1, 1] - mats[..., 0, 1] * mats[..., 1, 0])
        sv = np.linalg.svd(mats, compute_uv=False)
        cond = float(np.max(sv[..., 0] / np.maximum(sv[..., -1], 1e-300)))
        invertible = bool(np.min(dets) >= det_floor)
        if invertible:
            g1 = horizontal_gradient(sols[0], grid=grid)
            inv_q, _ = _metric_inverse(metric, pts)
            gn = np.sqrt(_gtilde(inv_q, g1, g1))
            best = CoordChart(
                center=p,
                radius=r,
                u1=ScalarField(grid, sols[0]),
                u2=ScalarField(grid, sols[1]),
                frame_matrix_cond=cond,
                min_grad_u1=float(np.min(gn[quarter])),
                corrections_norm=norm,
            )
    if best is None:
        raise MatrixSingular(
            "horizontal coordinate matrix not invertible at any candidate radius"
        )
    best.decay = decay
    return best


def build_harmonic_coords(
    p,
    radii,
    metric: SubRiemannianMetric,
    n: int = 40,
    det_floor: float = 0.2,
) -> CoordChart:
    """Horizontal harmonic coordinates: solve the linear Dirichlet problem on
    each gauge ball with the ambient coordinates as boundary data; the decay
    entry at radius r is the ball-averaged squared gradient of the correction,
    summed over both components."""
    return _build_coords(p, radii, metric, None, n, det_floor, tol=1e-12)


def build_qharmonic_coords(
    p,
    radii,
    params: OperatorParams,
    metric: SubRiemannianMetric,
    n: int = 40,
    det_floor: float = 0.2,
    tol: float = 1e-10,
) -> CoordChart:
    """Horizontal Q-harmonic coordinates; the decay entry is the L^Q(ball)
    norm of the correction gradient (expected exponent 1 + 1/(Q-1))."""
    return _build_coords(p, radii, metric, params, n, det_floor, tol=tol)


def fit_decay(decay) -> tuple[float, float]:
    """Least-squares slope of log(norm) against log(r) and the rms residual."""
    rs = np.array([r for r, _ in decay], dtype=float)
    ms = np.array([m for _, m in decay], dtype=float)
    if np.any(ms <= 0):
        return float("inf"), 0.0
    lx, ly = np.log(rs), np.log(ms)
    a = np.stack([lx, np.ones_like(lx)], axis=-1)
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - a @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def lift_vertical(gamma_h, z0: float = 0.0) -> np.ndarray:
    """Horizontal lift of a sampled planar curve by the midpoint rule.

    Integrates dz = (x dy - y dx)/2 between consecutive samples with midpoint
    coefficients, which is exact for polygonal curves (signed-area increments);
    the discrete velocity of the lift is exactly horizontal in the midpoint
    frame.
    """
    gh = np.asarray(gamma_h, dtype=float)
    if gh.ndim != 2 or gh.shape[-1] != 2 or gh.shape[0] < 1:
        raise ValueError("gamma_h must be an (N, 2) array of planar samples")
    x, y = gh[:, 0], gh[:, 1]
    dz = 0.5 * (x[:-1] * y[1:] - y[:-1] * x[1:])
    z = np.concatenate([[z0], z0 + np.cumsum(dz)])
    return np.stack([x, y, z], axis=-1)
