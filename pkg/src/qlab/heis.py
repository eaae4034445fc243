"""Exact Heisenberg group operations on H^1: group law, dilations, frames,
metrics, gauges and the step-2 Popp construction.

Points are array-likes of shape (..., 3) holding coordinates (x, y, z);
x, y span the first layer and z the second.  All operations are pure and
vectorized over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import MetricDegenerate

__all__ = [
    "FrameVectors",
    "SubRiemannianMetric",
    "PoppData",
    "group_mul",
    "group_inv",
    "dilate",
    "frame_at",
    "left_translation_differential",
    "orthonormalize",
    "popp_step2",
    "koranyi_gauge",
    "GAUGE_Z_CONSTANT",
]

# Constant c in the gauge ((x^2+y^2)^2 + c z^2)^(1/4); any fixed positive
# value gives a homogeneous norm comparable to the CC distance.
GAUGE_Z_CONSTANT = 16.0


def _pts(p) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if a.shape[-1] != 3:
        raise ValueError("points must have shape (..., 3)")
    return a


def group_mul(p, q) -> np.ndarray:
    """Group product p * q, (x,y,z)*(x',y',z') = (x+x', y+y', z+z'+(xy'-yx')/2)."""
    p, q = _pts(p), _pts(q)
    out = np.empty(np.broadcast_shapes(p.shape, q.shape), dtype=float)
    out[..., 0] = p[..., 0] + q[..., 0]
    out[..., 1] = p[..., 1] + q[..., 1]
    out[..., 2] = (
        p[..., 2]
        + q[..., 2]
        + 0.5 * (p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0])
    )
    return out


def group_inv(p) -> np.ndarray:
    """Group inverse, p^{-1} = -p."""
    return -_pts(p)


def dilate(lam: float, p) -> np.ndarray:
    """Anisotropic dilation (x,y,z) -> (lam x, lam y, lam^2 z); lam > 0."""
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    p = _pts(p)
    out = p * lam
    out[..., 2] = p[..., 2] * lam * lam
    return out


class FrameVectors(NamedTuple):
    """Left-invariant frame at a point, coefficients in (dx, dy, dz)."""

    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray


def frame_at(p, eps: float = 1.0) -> FrameVectors:
    """Frame X1 = (1,0,-y/2), X2 = (0,1,x/2), X3^eps = (0,0,eps) at p."""
    p = _pts(p)
    shape = p.shape
    z = np.zeros(shape[:-1])
    v1 = np.stack([np.ones(shape[:-1]), z, -0.5 * p[..., 1]], axis=-1)
    v2 = np.stack([z, np.ones(shape[:-1]), 0.5 * p[..., 0]], axis=-1)
    v3 = np.stack([z, z, np.full(shape[:-1], float(eps))], axis=-1)
    return FrameVectors(v1, v2, v3)


def left_translation_differential(p) -> np.ndarray:
    """Differential of q -> p*q at the origin, a (..., 3, 3) matrix."""
    p = _pts(p)
    d = np.zeros(p.shape[:-1] + (3, 3))
    d[..., 0, 0] = 1.0
    d[..., 1, 1] = 1.0
    d[..., 2, 2] = 1.0
    d[..., 2, 0] = -0.5 * p[..., 1]
    d[..., 2, 1] = 0.5 * p[..., 0]
    return d


def koranyi_gauge(p) -> np.ndarray:
    """Homogeneous gauge ((x^2+y^2)^2 + 16 z^2)^(1/4)."""
    p = _pts(p)
    rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
    return (rho2 * rho2 + GAUGE_Z_CONSTANT * p[..., 2] ** 2) ** 0.25


@dataclass(frozen=True)
class SubRiemannianMetric:
    """Smooth metric on span(X1, X2) plus a volume density against Lebesgue.

    ``g`` maps point arrays (..., 3) to SPD matrices (..., 2, 2) in the frame
    (X1, X2); ``omega`` maps point arrays to positive densities.  The default
    volume is the Popp density det g; pass ``omega`` explicitly for any other
    smooth volume.
    """

    g: Callable[[np.ndarray], np.ndarray]
    omega: Callable[[np.ndarray], np.ndarray] = field(default=None)  # type: ignore[assignment]
    name: str = "custom"

    def __post_init__(self):
        if self.omega is None:
            gfun = self.g
            object.__setattr__(
                self, "omega",
                lambda p: _det2(gfun(_pts(p))),
            )

    def g_at(self, p) -> np.ndarray:
        m = np.asarray(self.g(_pts(p)), dtype=float)
        return m

    def omega_at(self, p) -> np.ndarray:
        return np.asarray(self.omega(_pts(p)), dtype=float)

    def left_shifted(self, base) -> "SubRiemannianMetric":
        """Metric pulled back by the left translation q -> base * q.

        The frame is left-invariant, so the frame matrix just shifts its
        base point; the standard metric is unchanged by this operation.
        """
        base = np.asarray(base, dtype=float)
        gfun, ofun = self.g, self.omega
        return SubRiemannianMetric(
            g=lambda p: gfun(group_mul(base, _pts(p))),
            omega=lambda p: ofun(group_mul(base, _pts(p))),
            name=f"{self.name}<<shift",
        )

    @staticmethod
    def standard() -> "SubRiemannianMetric":
        """Left-invariant metric making (X1, X2) orthonormal; Popp = Lebesgue."""

        def g(p):
            p = _pts(p)
            m = np.zeros(p.shape[:-1] + (2, 2))
            m[..., 0, 0] = 1.0
            m[..., 1, 1] = 1.0
            return m

        return SubRiemannianMetric(g=g, omega=lambda p: np.ones(_pts(p).shape[:-1]), name="standard")

    @staticmethod
    def diagonal_poly(g11_coeffs, g22_coeffs, volume: str = "popp") -> "SubRiemannianMetric":
        """Diagonal metric diag(a(x), b(x)) with polynomial coefficients in x.

        ``g11_coeffs``/``g22_coeffs`` are ascending power coefficients.
        ``volume`` selects the density: "popp" (det g) or "lebesgue" (1).
        """
        c1 = np.asarray(g11_coeffs, dtype=float)
        c2 = np.asarray(g22_coeffs, dtype=float)

        def g(p):
            p = _pts(p)
            x = p[..., 0]
            m = np.zeros(p.shape[:-1] + (2, 2))
            m[..., 0, 0] = np.polynomial.polynomial.polyval(x, c1)
            m[..., 1, 1] = np.polynomial.polynomial.polyval(x, c2)
            return m

        omega = None
        if volume == "lebesgue":
            omega = lambda p: np.ones(_pts(p).shape[:-1])  # noqa: E731
        elif volume != "popp":
            raise ValueError("volume must be 'popp' or 'lebesgue'")
        name = f"diag({list(c1)},{list(c2)};{volume})"
        return SubRiemannianMetric(g=g, omega=omega, name=name)


def _det2(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def orthonormalize(metric: SubRiemannianMetric, p) -> np.ndarray:
    """Lower-triangular a with a g(p) a^T = I, positive diagonal (inverse Cholesky).

    The rows of ``a`` give the orthonormal frame Y_i = a_i^j X_j.  Raises
    MetricDegenerate when g(p) is not positive definite.
    """
    g = metric.g_at(p)
    return _orthonormalize_matrix(g)


def _orthonormalize_matrix(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    g11 = g[..., 0, 0]
    det = _det2(g)
    sym = np.max(np.abs(g[..., 0, 1] - g[..., 1, 0]))
    if np.any(g11 <= 0) or np.any(det <= 0) or not np.isfinite(g).all():
        raise MetricDegenerate("metric matrix is not positive definite")
    if sym > 1e-12 * max(1.0, float(np.max(np.abs(g)))):
        raise MetricDegenerate("metric matrix is not symmetric")
    # Cholesky g = L L^T, a = L^{-1}: a11=1/l11, a21=-l21/(l11 l22), a22=1/l22.
    l11 = np.sqrt(g11)
    l21 = g[..., 1, 0] / l11
    l22 = np.sqrt(g[..., 1, 1] - l21 * l21)
    a = np.zeros_like(g)
    a[..., 0, 0] = 1.0 / l11
    a[..., 1, 0] = -l21 / (l11 * l22)
    a[..., 1, 1] = 1.0 / l22
    return a


@dataclass(frozen=True)
class PoppData:
    """Step-2 Popp construction output for a metric matrix on the first layer.

    ``m`` is the half-length of the bracket segment [B,B] = [-m, m] X3,
    ``g2`` the squared-norm coefficient making m X3 a unit vector, and
    ``density`` the Popp volume density against Lebesgue.
    """

    m: float
    g2: float
    density: Callable[[np.ndarray], np.ndarray]
    density_value: float


def popp_step2(g1) -> PoppData:
    """Popp data for the constant metric ``g1`` (2x2 SPD) on span(X1, X2).

    [aX1+bX2, cX1+dX2] = (ad-bc) X3, so the bracket image of the unit ball
    B of g1 is the segment [-m, m] X3 with m = max |ad-bc| over pairs in B,
    i.e. m = det(g1)^{-1/2}.  The extended metric diag(g1, g2) with
    g2 = 1/m^2 has Riemannian volume density det(g1) against Lebesgue
    (the frame-to-coordinates matrix is unimodular).
    """
    g1 = np.asarray(g1, dtype=float)
    if g1.shape != (2, 2):
        raise ValueError("g1 must be a 2x2 matrix")
    _orthonormalize_matrix(g1)  # validates SPD
    det = float(_det2(g1))
    m = det ** -0.5
    g2 = 1.0 / (m * m)
    dens = float(np.sqrt(det * g2))
    return PoppData(
        m=m,
        g2=g2,
        density=lambda p: np.full(_pts(p).shape[:-1], dens),
        density_value=dens,
    )


def popp_density(metric: SubRiemannianMetric, p) -> np.ndarray:
    """Pointwise Popp density det(g(p)) of a variable metric."""
    return _det2(metric.g_at(p))
