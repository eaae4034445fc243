"""Dirichlet solvers for the sublaplacian and the regularized p-Laplacian,
plus (eps, delta)-continuation sweeps with regularity monitors.

The p-Laplacian solver minimizes the strictly convex discrete energy by a
limited-memory secant method with backtracking line search; minimizers are
exact discrete weak solutions because the operator is the energy gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import OperatorParams, energy_and_gradient, q_energy
from .errors import EmptyMask, LineSearchStall, NonConvergence
from .grid import Grid, Mask, ScalarField, _values, horizontal_gradient
from .heis import SubRiemannianMetric, koranyi_gauge, orthonormalize

__all__ = [
    "SolveReport",
    "solve_sublaplacian",
    "solve_plaplacian",
    "continuation_sweep",
]

_DELTA_FLOOR = 1e-12


@dataclass
class SolveReport:
    """Convergence record plus uniform-regularity monitors."""

    iterations: int
    final_residual: float
    final_energy: float
    lip_ratio: float
    caccioppoli_ratio: float
    holder_seminorm: float
    eps: float = 0.0
    delta: float = 0.0
    p_exp: float = 2.0
    delta_floor_applied: bool = False

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "final_energy": self.final_energy,
            "lip_ratio": self.lip_ratio,
            "caccioppoli_ratio": self.caccioppoli_ratio,
            "holder_seminorm": self.holder_seminorm,
            "eps": self.eps,
            "delta": self.delta,
            "p_exp": self.p_exp,
            "delta_floor_applied": self.delta_floor_applied,
        }


@lru_cache(maxsize=16)
def _sparse_xops(grid: Grid):
    """Sparse matrices of D_x, D_y, D_z on the flattened (C-order) grid."""
    from .grid import _diff_matrix

    nx, ny, nz = grid.n
    hx, hy, hz = grid.h
    ix = sp.identity(nx, format="csr")
    iy = sp.identity(ny, format="csr")
    iz = sp.identity(nz, format="csr")
    dx = sp.kron(sp.kron(_diff_matrix(nx, hx), iy), iz, format="csr")
    dy = sp.kron(sp.kron(ix, _diff_matrix(ny, hy)), iz, format="csr")
    dz = sp.kron(sp.kron(ix, iy), _diff_matrix(nz, hz), format="csr")
    return dx, dy, dz


def _frame_matrices(grid: Grid, eps: float):
    """Sparse X1, X2 and (eps X3) on the flattened grid."""
    dx, dy, dz = _sparse_xops(grid)
    pts = grid.points()
    ycoef = sp.diags((-0.5 * pts[..., 1]).ravel())
    xcoef = sp.diags((0.5 * pts[..., 0]).ravel())
    x1 = (dx + ycoef @ dz).tocsr()
    x2 = (dy + xcoef @ dz).tocsr()
    x3 = (float(eps) * dz).tocsr() if eps > 0 else None
    return x1, x2, x3


def _stiffness(mask: Mask, metric: SubRiemannianMetric, eps: float) -> sp.csr_matrix:
    """SPD matrix of the quadratic energy u -> sum_quad omega |grad_eps u|_g^2 h^3."""
    grid = mask.grid
    pts = grid.points()
    a = orthonormalize(metric, pts)
    om = metric.omega_at(pts)
    w = np.where(mask.quad_region, om, 0.0).ravel() * grid.cell_volume
    x1, x2, x3 = _frame_matrices(grid, eps)
    c1 = sp.diags(a[..., 0, 0].ravel()) @ x1
    c2 = sp.diags(a[..., 1, 0].ravel()) @ x1 + sp.diags(a[..., 1, 1].ravel()) @ x2
    wd = sp.diags(w)
    k = (c1.T @ wd @ c1 + c2.T @ wd @ c2).tocsr()
    if x3 is not None:
        k = (k + x3.T @ wd @ x3).tocsr()
    return k


def _pinned_start(mask: Mask, boundary) -> np.ndarray:
    vals = _values(boundary, mask.grid).copy()
    return vals


def solve_sublaplacian(
    mask: Mask,
    boundary,
    metric: SubRiemannianMetric,
    eps: float = 0.0,
    tol: float = 1e-12,
    maxiter: int | None = None,
) -> ScalarField:
    """Solve the linear Dirichlet problem sum_i X_i^{h,*}(omega X_i^h u) = 0.

    ``boundary`` provides the pinned values on the collar (any full-grid field;
    only non-interior values are used).  Conjugate gradients with Jacobi
    preconditioning on the interior unknowns.
    """
    if mask.n_interior == 0:
        raise EmptyMask("mask has no interior nodes")
    grid = mask.grid
    k = _stiffness(mask, metric, eps)
    flat_int = mask.interior.ravel()
    idx = np.flatnonzero(flat_int)
    u = _pinned_start(mask, boundary).ravel()

    k_csr = k.tocsr()
    # b = -K_IB u_B = K_II u_I - (K u)_I evaluated at the start vector
    ku = k_csr @ u
    kii = k_csr[idx][:, idx].tocsr()
    b = kii @ u[idx] - ku[idx]
    diag = kii.diagonal()
    diag = np.where(diag > 0, diag, 1.0)
    precond = spla.LinearOperator(kii.shape, matvec=lambda x: x / diag)
    if maxiter is None:
        maxiter = max(2000, 40 * int(math.sqrt(idx.size)))
    sol, info = spla.cg(
        kii, b, x0=u[idx], rtol=tol, atol=0.0, maxiter=maxiter, M=precond
    )
    bnorm = float(np.linalg.norm(b))
    rnorm = float(np.linalg.norm(b - kii @ sol))
    if info != 0 and rnorm > 10 * tol * max(bnorm, 1e-300):
        raise NonConvergence(
            f"conjugate gradients stalled (info={info}, rel residual {rnorm / max(bnorm, 1e-300):.2e})"
        )
    out = u.copy()
    out[idx] = sol
    return ScalarField(grid, out.reshape(grid.n))


def _lbfgs_minimize(u, idx, f_and_g, rnorm, tol, maxiter, memory):
    """Limited-memory secant descent with Armijo backtracking on u[idx]."""
    energy, g = f_and_g(u)
    steps: list[np.ndarray] = []
    grads: list[np.ndarray] = []
    it = 0
    res = rnorm(g)
    while res > tol and it < max(maxiter, 0):
        d = -_lbfgs_direction(grads, steps, g)
        slope = float(np.dot(g, d))
        if slope >= 0:
            steps.clear()
            grads.clear()
            d = -g
            slope = -float(np.dot(g, g))
        t = 1.0
        ok = False
        for _ in range(60):
            u_try = u.copy()
            u_try[idx] += t * d
            e_try, g_try = f_and_g(u_try)
            if e_try <= energy + 1e-4 * t * slope:
                ok = True
                break
            t *= 0.5
        if not ok:
            if res <= 100 * tol:
                break
            raise LineSearchStall(
                f"no sufficient decrease after 60 backtracks (residual {res:.2e})"
            )
        s_vec = t * d
        y_vec = g_try - g
        if float(np.dot(s_vec, y_vec)) > 1e-300:
            steps.append(s_vec)
            grads.append(y_vec)
            if len(steps) > memory:
                steps.pop(0)
                grads.pop(0)
        u = u_try
        energy, g = e_try, g_try
        res = rnorm(g)
        it += 1
    return u, energy, g, res, it


def _lbfgs_direction(grads, steps, g):
    """Two-loop recursion for the limited-memory inverse Hessian."""
    q = g.copy()
    alphas = []
    rhos = [1.0 / float(np.dot(y, s)) for s, y in zip(steps, grads)]
    for (s, y), rho in zip(reversed(list(zip(steps, grads))), reversed(rhos)):
        a = rho * float(np.dot(s, q))
        alphas.append(a)
        q -= a * y
    if grads:
        s, y = steps[-1], grads[-1]
        q *= float(np.dot(s, y)) / float(np.dot(y, y))
    for (s, y), rho, a in zip(zip(steps, grads), rhos, reversed(alphas)):
        beta = rho * float(np.dot(y, q))
        q += (a - beta) * s
    return q


def solve_plaplacian(
    mask: Mask,
    boundary,
    params: OperatorParams,
    metric: SubRiemannianMetric,
    tol: float = 1e-9,
    maxiter: int = 2000,
    memory: int = 10,
    initial=None,
    with_monitors: bool = True,
) -> tuple[ScalarField, SolveReport]:
    """Minimize the convex discrete energy with pinned collar values.

    Limited-memory secant descent with Armijo backtracking; converged when the
    L2(vol) norm of the weak residual drops below ``tol``.  A delta floor of
    1e-12 is applied internally when p > 2 and delta = 0 (recorded in the
    report), keeping the energy twice differentiable at critical points.
    """
    if mask.n_interior == 0:
        raise EmptyMask("mask has no interior nodes")
    grid = mask.grid
    delta_floor = params.p_exp > 2 and params.delta == 0.0
    work = params.replace(delta=_DELTA_FLOOR) if delta_floor else params

    flat_int = mask.interior.ravel()
    idx = np.flatnonzero(flat_int)
    if initial is not None:
        u = _values(initial, grid).copy().ravel()
        pinned = _pinned_start(mask, boundary).ravel()
        u[~flat_int] = pinned[~flat_int]
    else:
        start = solve_sublaplacian(mask, boundary, metric, eps=params.eps)
        u = start.values.ravel().copy()

    om_flat = metric.omega_at(grid.points()).ravel()
    res_weight = 1.0 / (om_flat[idx] * grid.cell_volume)

    def rnorm(gint):
        # ||weak residual||_{L2(vol)} from the raw gradient entries
        return math.sqrt(math.fsum((gint * gint * res_weight).ravel()))

    # delta-continuation: the energy flattens as delta -> 0, so warm through
    # a short geometric delta ladder before the target stage
    stages = [d for d in (1e-2, 1e-4) if d > work.delta and params.p_exp > 2]
    stages.append(work.delta)
    it = 0
    for stage_delta in stages:
        stage = work.replace(delta=stage_delta)
        stage_tol = tol if stage_delta == work.delta else max(tol, 1e-5)

        def f_and_g(uvec):
            e, grad = energy_and_gradient(uvec.reshape(grid.n), mask, stage, metric)
            return e, grad.ravel()[idx]

        u, energy, g, res, used = _lbfgs_minimize(
            u, idx, f_and_g, rnorm, stage_tol, maxiter - it, memory
        )
        it += used
        if it >= maxiter and res > stage_tol:
            raise NonConvergence(
                f"residual {res:.2e} > tol {stage_tol:.2e} after {it} iterations"
            )

    field = ScalarField(grid, u.reshape(grid.n))
    final_energy = q_energy(field.values, mask, params, metric)
    if with_monitors:
        lip, cacc, hold = _monitors(field, mask, work, metric)
    else:
        lip = cacc = hold = float("nan")
    report = SolveReport(
        iterations=it,
        final_residual=res,
        final_energy=final_energy,
        lip_ratio=lip,
        caccioppoli_ratio=cacc,
        holder_seminorm=hold,
        eps=params.eps,
        delta=params.delta,
        p_exp=params.p_exp,
        delta_floor_applied=delta_floor,
    )
    return field, report


def _cutoff(mask: Mask) -> np.ndarray:
    """Smoothstep cutoff: 1 on the deep half of the interior, 0 at the rim."""
    depth = mask.interior_depth().astype(float)
    dmax = depth.max()
    if dmax <= 2:
        return mask.interior.astype(float)
    s = np.clip((depth - 1.0) / max(1.0, 0.5 * dmax), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _monitors(u: ScalarField, mask: Mask, params: OperatorParams, metric: SubRiemannianMetric):
    """Lipschitz, Caccioppoli and Hölder-seminorm monitors of a solution."""
    grid = u.grid
    q = params.p_exp
    xi = horizontal_gradient(u.values, eps=params.eps, grid=grid)
    speed2 = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
    core = params.delta + speed2

    inner = mask.inner_half()
    # sup_B |grad_eps u| / (avg_{2B} (delta + |grad_eps u|^2)^{Q/2})^{1/Q}
    sup_b = math.sqrt(float(np.max(speed2[inner])))
    avg = float(np.mean((core ** (q / 2.0))[mask.interior]))
    lip_ratio = sup_b / avg ** (1.0 / q) if avg > 0 else float("inf")

    # Caccioppoli ratio with an explicit cutoff
    eta = _cutoff(mask)
    from .grid import apply_horizontal_derivative

    eta1 = apply_horizontal_derivative(eta, 1, grid=grid)
    eta2 = apply_horizontal_derivative(eta, 2, grid=grid)
    eta3 = apply_horizontal_derivative(eta, 3, eps=params.eps, grid=grid)
    eta_z = grid.diff(eta, 2)
    grad_eta_sup2 = float(np.max((eta1**2 + eta2**2 + eta3**2)[mask.interior]))
    x3_eta_sup = float(np.max(np.abs(eta_z[mask.interior])))

    second = np.zeros(grid.n)
    fields = [xi[0], xi[1], xi[2]]
    for v in fields:
        for j, e in ((1, 0.0), (2, 0.0), (3, params.eps)):
            d = apply_horizontal_derivative(v, j, eps=e, grid=grid)
            second += d * d
    lhs = float(np.sum((core ** ((q - 2.0) / 2.0) * second * eta * eta)[mask.interior]))
    supp = eta > 0
    rhs = (1.0 + grad_eta_sup2 + x3_eta_sup) * float(np.sum((core ** (q / 2.0))[supp]))
    cacc_ratio = lhs / rhs if rhs > 0 else float("inf")

    # discrete C^{0,1/2} seminorm of grad_eps u on the inner half-mask
    pts = grid.points()
    sel = np.flatnonzero(inner.ravel())
    if sel.size > 400:
        stride = sel.size // 400
        sel = sel[::stride][:400]
    pp = pts.reshape(-1, 3)[sel]
    gg = np.stack([x.ravel()[sel] for x in xi], axis=-1)
    diff_g = np.linalg.norm(gg[:, None, :] - gg[None, :, :], axis=-1)
    rel = np.stack(
        [
            pp[None, :, 0] - pp[:, None, 0],
            pp[None, :, 1] - pp[:, None, 1],
            pp[None, :, 2] - pp[:, None, 2]
            + 0.5
            * (
                pp[:, None, 1] * pp[None, :, 0]
                - pp[:, None, 0] * pp[None, :, 1]
            ),
        ],
        axis=-1,
    )
    dist = koranyi_gauge(rel)
    np.fill_diagonal(dist, np.inf)
    hold = float(np.max(diff_g / np.sqrt(dist)))
    return lip_ratio, cacc_ratio, hold


def continuation_sweep(
    mask: Mask,
    boundary,
    schedule,
    params: OperatorParams,
    metric: SubRiemannianMetric | None = None,
    tol: float = 1e-9,
    maxiter: int = 2000,
) -> list[SolveReport]:
    """Solve along a decreasing (eps, delta) schedule with warm starts.

    Each stage reuses the previous solution as the initial guess; every report
    carries the regularity monitors so uniformity across the schedule can be
    checked directly.
    """
    schedule = [(float(e), float(d)) for e, d in schedule]
    if not schedule:
        raise ValueError("schedule must be nonempty")
    for (e0, d0), (e1, d1) in zip(schedule, schedule[1:]):
        if e1 > e0 or d1 > d0:
            raise ValueError("schedule must be monotone decreasing")
    if metric is None:
        metric = SubRiemannianMetric.standard()
    reports = []
    current = None
    for e, d in schedule:
        stage = params.replace(eps=e, delta=d)
        current, rep = solve_plaplacian(
            mask, boundary, stage, metric, tol=tol, maxiter=maxiter, initial=current
        )
        reports.append(rep)
    return reports
