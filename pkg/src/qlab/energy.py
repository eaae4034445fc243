"""Regularized Q-energy, the nonlinear pairing, the flux field A_i and
finite-difference verification of its structure bounds.

The discrete energy sums the density omega (delta + gtilde(grad u, grad u))^{p/2}
over the mask's quadrature region (interior plus first stencil shell); the
discrete operator is defined as the gradient of this energy, so pinned-collar
minimizers are exact discrete weak solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, MetricDegenerate
from .grid import (
    Mask,
    ScalarField,
    _values,
    horizontal_gradient,
    transpose_horizontal_derivative,
)
from .heis import SubRiemannianMetric, _det2

__all__ = [
    "OperatorParams",
    "StructureBounds",
    "flux_A",
    "structure_bounds_check",
    "q_energy",
    "pairing_IQ",
    "weak_residual",
    "energy_and_gradient",
]


@dataclass(frozen=True)
class OperatorParams:
    """Exponent p >= 2, core regularization delta >= 0, Riemannian eps >= 0."""

    p_exp: float = 4.0
    delta: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if self.p_exp < 2:
            raise ValueError("p_exp must be >= 2")
        if self.delta < 0 or self.eps < 0:
            raise ValueError("delta and eps must be nonnegative")

    def replace(self, **kw) -> "OperatorParams":
        d = {"p_exp": self.p_exp, "delta": self.delta, "eps": self.eps}
        d.update(kw)
        return OperatorParams(**d)


@dataclass(frozen=True)
class StructureBounds:
    lam: float
    Lam: float

    def __post_init__(self):
        if not 0 < self.lam <= self.Lam:
            raise ValueError("need 0 < lam <= Lam")


def _metric_inverse(metric: SubRiemannianMetric, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse 2x2 metric matrices and the density at ``pts``."""
    g = metric.g_at(pts)
    det = _det2(g)
    if np.any(det <= 0) or np.any(g[..., 0, 0] <= 0):
        raise MetricDegenerate("metric not positive definite on the sample set")
    inv = np.empty_like(g)
    inv[..., 0, 0] = g[..., 1, 1] / det
    inv[..., 1, 1] = g[..., 0, 0] / det
    inv[..., 0, 1] = -g[..., 0, 1] / det
    inv[..., 1, 0] = -g[..., 1, 0] / det
    om = metric.omega_at(pts)
    if np.any(om <= 0):
        raise MetricDegenerate("volume density not positive on the sample set")
    return inv, om


def _gtilde(inv: np.ndarray, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Pairing gtilde(xi, eta) = xi_i g_eps^{ij} eta_j with xi = (X1u, X2u, eps X3u).

    The epsilon extension makes the third frame direction unit, so the
    inverse 3x3 matrix is blockdiag(g^{-1}, 1) acting on frame components.
    """
    h = (
        inv[..., 0, 0] * xi[0] * eta[0]
        + inv[..., 0, 1] * (xi[0] * eta[1] + xi[1] * eta[0])
        + inv[..., 1, 1] * xi[1] * eta[1]
    )
    return h + xi[2] * eta[2]


def flux_A(x, xi, params: OperatorParams, metric: SubRiemannianMetric) -> np.ndarray:
    """Flux A_i(x, xi) = omega (delta + gtilde(xi, xi))^{(p-2)/2} g_eps^{ik} xi_k.

    ``x`` has shape (..., 3) and ``xi`` shape (..., 3); returns (..., 3).
    """
    pts = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    inv, om = _metric_inverse(metric, pts)
    xs = np.moveaxis(xi, -1, 0)
    s = _gtilde(inv, xs, xs)
    fac = om * (params.delta + s) ** ((params.p_exp - 2.0) / 2.0)
    out = np.empty_like(xi)
    out[..., 0] = fac * (inv[..., 0, 0] * xs[0] + inv[..., 0, 1] * xs[1])
    out[..., 1] = fac * (inv[..., 1, 0] * xs[0] + inv[..., 1, 1] * xs[1])
    out[..., 2] = fac * xs[2]
    return out


def structure_bounds_check(
    params: OperatorParams,
    metric: SubRiemannianMetric,
    samples: int = 1000,
    seed: int = 0,
    box_half_width: float = 1.0,
    fd_step: float = 1e-5,
) -> dict:
    """Estimate the ellipticity bounds of dA/dxi and the x-derivative bound.

    Central finite differences at random (x, xi); checks
    lam (delta+|xi|^2)^{(p-2)/2} |chi|^2 <= dA/dxi chi chi <= Lam (...) |chi|^2
    and |dA/dx| <= Lam (delta+|xi|^2)^{(p-1)/2}; returns the tightest constants.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box_half_width, box_half_width, size=(samples, 3))
    xi = rng.standard_normal((samples, 3))
    # log-uniform magnitudes: away from the origin kink at delta = 0, and
    # large enough that the bounds are probed in the regime |xi|^2 >> delta
    norms = np.linalg.norm(xi, axis=-1, keepdims=True)
    radii = 10.0 ** rng.uniform(np.log10(0.3), np.log10(30.0), size=(samples, 1))
    xi = xi / norms * radii

    base = params.delta + np.sum(xi * xi, axis=-1)
    w_quad = base ** ((params.p_exp - 2.0) / 2.0)
    w_x = base ** ((params.p_exp - 1.0) / 2.0)

    # Jacobian dA_i/dxi_j by central differences
    jac = np.empty((samples, 3, 3))
    for j in range(3):
        dxi = np.zeros(3)
        dxi[j] = fd_step
        jac[:, :, j] = (
            flux_A(pts, xi + dxi, params, metric) - flux_A(pts, xi - dxi, params, metric)
        ) / (2 * fd_step)
    sym = 0.5 * (jac + np.transpose(jac, (0, 2, 1)))
    eigs = np.linalg.eigvalsh(sym)
    lam_est = float(np.min(eigs[:, 0] / w_quad))
    Lam_quad = float(np.max(eigs[:, -1] / w_quad))

    # x-derivative norm bound
    dx_norm = np.zeros(samples)
    for j in range(3):
        dp = np.zeros(3)
        dp[j] = fd_step
        d = (
            flux_A(pts + dp, xi, params, metric) - flux_A(pts - dp, xi, params, metric)
        ) / (2 * fd_step)
        dx_norm = np.maximum(dx_norm, np.max(np.abs(d), axis=-1))
    Lam_x = float(np.max(dx_norm / w_x)) if np.max(dx_norm) > 0 else 0.0

    Lam_est = max(Lam_quad, Lam_x)
    ok = lam_est > 0 and np.isfinite(Lam_est)
    return {
        "lambda_est": lam_est,
        "Lambda_est": Lam_est,
        "Lambda_quad": Lam_quad,
        "Lambda_x": Lam_x,
        "pass": bool(ok),
        "samples": samples,
    }


def _grad_and_geometry(u, mask: Mask, params: OperatorParams, metric: SubRiemannianMetric):
    grid = mask.grid
    vals = _values(u, grid)
    xi = horizontal_gradient(vals, eps=params.eps, grid=grid)
    pts = grid.points()
    inv, om = _metric_inverse(metric, pts)
    return vals, xi, inv, om


def q_energy(u, mask: Mask, params: OperatorParams, metric: SubRiemannianMetric) -> float:
    """Discrete energy sum over the quadrature region of
    (delta + |grad_H u|_g^2)^{p/2} omega h^3."""
    if mask.n_interior == 0:
        raise EmptyMask("mask has no interior nodes")
    _, xi, inv, om = _grad_and_geometry(u, mask, params, metric)
    s = _gtilde(inv, xi, xi)
    dens = om * (params.delta + s) ** (params.p_exp / 2.0)
    region = mask.quad_region
    return math.fsum(dens[region].ravel()) * mask.grid.cell_volume


def pairing_IQ(u, phi, mask: Mask, params: OperatorParams, metric: SubRiemannianMetric) -> float:
    """Nonlinear pairing sum of (delta+|grad u|^2)^{(p-2)/2} gtilde(grad u, grad phi)
    with the same quadrature as :func:`q_energy`."""
    if mask.n_interior == 0:
        raise EmptyMask("mask has no interior nodes")
    grid = mask.grid
    _, xi, inv, om = _grad_and_geometry(u, mask, params, metric)
    eta = horizontal_gradient(_values(phi, grid), eps=params.eps, grid=grid)
    s = _gtilde(inv, xi, xi)
    dens = om * (params.delta + s) ** ((params.p_exp - 2.0) / 2.0) * _gtilde(inv, xi, eta)
    region = mask.quad_region
    return math.fsum(dens[region].ravel()) * grid.cell_volume


def energy_and_gradient(
    u, mask: Mask, params: OperatorParams, metric: SubRiemannianMetric
) -> tuple[float, np.ndarray]:
    """Energy and its exact gradient with respect to all node values.

    The gradient is p h^3 sum_i (X_i^h)^T (1_quad A_i(x, grad u)); only interior
    entries are meaningful unknowns but the full array is returned.
    """
    grid = mask.grid
    vals, xi, inv, om = _grad_and_geometry(u, mask, params, metric)
    s = _gtilde(inv, xi, xi)
    core = params.delta + s
    region = mask.quad_region
    energy = math.fsum((om * core ** (params.p_exp / 2.0))[region].ravel()) * grid.cell_volume

    fac = np.where(region, om * core ** ((params.p_exp - 2.0) / 2.0), 0.0)
    a1 = fac * (inv[..., 0, 0] * xi[0] + inv[..., 0, 1] * xi[1])
    a2 = fac * (inv[..., 1, 0] * xi[0] + inv[..., 1, 1] * xi[1])
    a3 = fac * xi[2]
    grad = transpose_horizontal_derivative(a1, 1, grid=grid)
    grad += transpose_horizontal_derivative(a2, 2, grid=grid)
    if params.eps > 0:
        grad += transpose_horizontal_derivative(a3, 3, eps=params.eps, grid=grid)
    grad *= params.p_exp * grid.cell_volume
    return energy, grad


def weak_residual(u, mask: Mask, params: OperatorParams, metric: SubRiemannianMetric) -> ScalarField:
    """Discrete divergence-form operator: the energy gradient at u on interior
    nodes divided by the node measure omega h^3 (zero elsewhere)."""
    if mask.n_interior == 0:
        raise EmptyMask("mask has no interior nodes")
    grid = mask.grid
    _, grad = energy_and_gradient(u, mask, params, metric)
    om = metric.omega_at(grid.points())
    out = np.where(mask.interior, grad / (om * grid.cell_volume), 0.0)
    return ScalarField(grid, out)


def residual_norm(res: ScalarField, mask: Mask, metric: SubRiemannianMetric) -> float:
    """Discrete L2(vol) norm of a residual field over the mask interior."""
    om = metric.omega_at(mask.grid.points())
    vals = (res.values**2 * om)[mask.interior]
    return math.sqrt(math.fsum(vals.ravel()) * mask.grid.cell_volume)
