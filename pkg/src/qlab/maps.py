"""Closed-form smooth maps of the model: compositions of left translations,
dilations, z-axis rotations and diagonal shears, with exact differentials.

Every primitive is a contact diffeomorphism (the push-forward of a horizontal
vector stays horizontal); this is re-checked numerically at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContactViolation
from .heis import frame_at, group_mul

__all__ = ["MapSpec"]


def _step_apply(step, p: np.ndarray) -> np.ndarray:
    kind, args = step
    if kind == "identity":
        return p
    if kind == "left":
        return group_mul(np.asarray(args, dtype=float), p)
    if kind == "dilation":
        (lam,) = args
        out = p * lam
        out[..., 2] = p[..., 2] * lam * lam
        return out
    if kind == "rotation":
        (th,) = args
        c, s = math.cos(th), math.sin(th)
        out = np.empty_like(p)
        out[..., 0] = c * p[..., 0] - s * p[..., 1]
        out[..., 1] = s * p[..., 0] + c * p[..., 1]
        out[..., 2] = p[..., 2]
        return out
    if kind == "shear":
        a, b = args
        out = np.empty_like(p)
        out[..., 0] = a * p[..., 0]
        out[..., 1] = b * p[..., 1]
        out[..., 2] = a * b * p[..., 2]
        return out
    raise ValueError(f"unknown map step {kind!r}")


def _step_jacobian(step, p: np.ndarray) -> np.ndarray:
    kind, args = step
    shape = p.shape[:-1]
    j = np.zeros(shape + (3, 3))
    if kind == "identity":
        j[..., 0, 0] = j[..., 1, 1] = j[..., 2, 2] = 1.0
    elif kind == "left":
        gx, gy, _ = args
        j[..., 0, 0] = j[..., 1, 1] = j[..., 2, 2] = 1.0
        j[..., 2, 0] = -0.5 * gy
        j[..., 2, 1] = 0.5 * gx
    elif kind == "dilation":
        (lam,) = args
        j[..., 0, 0] = lam
        j[..., 1, 1] = lam
        j[..., 2, 2] = lam * lam
    elif kind == "rotation":
        (th,) = args
        c, s = math.cos(th), math.sin(th)
        j[..., 0, 0] = c
        j[..., 0, 1] = -s
        j[..., 1, 0] = s
        j[..., 1, 1] = c
        j[..., 2, 2] = 1.0
    elif kind == "shear":
        a, b = args
        j[..., 0, 0] = a
        j[..., 1, 1] = b
        j[..., 2, 2] = a * b
    else:
        raise ValueError(f"unknown map step {kind!r}")
    return j


def _step_inverse(step):
    kind, args = step
    if kind == "identity":
        return step
    if kind == "left":
        g = np.asarray(args, dtype=float)
        return ("left", tuple(-g))
    if kind == "dilation":
        return ("dilation", (1.0 / args[0],))
    if kind == "rotation":
        return ("rotation", (-args[0],))
    if kind == "shear":
        return ("shear", (1.0 / args[0], 1.0 / args[1]))
    raise ValueError(f"unknown map step {kind!r}")


@dataclass(frozen=True)
class MapSpec:
    """Composition of closed-form contact maps, applied left to right."""

    steps: tuple = (("identity", ()),)

    def __post_init__(self):
        self._check_contact()

    # -- constructors -------------------------------------------------
    @staticmethod
    def identity() -> "MapSpec":
        return MapSpec()

    @staticmethod
    def left_translation(g) -> "MapSpec":
        g = tuple(float(v) for v in np.asarray(g, dtype=float))
        return MapSpec((("left", g),))

    @staticmethod
    def dilation(lam: float) -> "MapSpec":
        if lam <= 0:
            raise ValueError("dilation factor must be positive")
        return MapSpec((("dilation", (float(lam),)),))

    @staticmethod
    def rotation(theta: float) -> "MapSpec":
        return MapSpec((("rotation", (float(theta),)),))

    @staticmethod
    def shear(a: float, b: float) -> "MapSpec":
        if a <= 0 or b <= 0:
            raise ValueError("shear factors must be positive")
        return MapSpec((("shear", (float(a), float(b))),))

    def then(self, other: "MapSpec") -> "MapSpec":
        """Composition other o self (self applied first)."""
        return MapSpec(tuple(s for s in self.steps if s[0] != "identity")
                       + tuple(s for s in other.steps if s[0] != "identity")
                       or (("identity", ()),))

    # -- evaluation ----------------------------------------------------
    def apply(self, p) -> np.ndarray:
        out = np.asarray(p, dtype=float).copy()
        for step in self.steps:
            out = _step_apply(step, out)
        return out

    def __call__(self, p) -> np.ndarray:
        return self.apply(p)

    def differential(self, p) -> np.ndarray:
        """Full 3x3 Jacobian at p (chain rule over the steps)."""
        cur = np.asarray(p, dtype=float)
        jac = None
        for step in self.steps:
            js = _step_jacobian(step, cur)
            jac = js if jac is None else js @ jac
            cur = _step_apply(step, cur)
        return jac

    def inverse(self) -> "MapSpec":
        inv_steps = tuple(_step_inverse(s) for s in reversed(self.steps))
        return MapSpec(inv_steps)

    @property
    def kind(self) -> str:
        parts = []
        for k, args in self.steps:
            if args:
                parts.append(f"{k}({','.join(f'{a:g}' for a in np.ravel(args))})")
            else:
                parts.append(k)
        return " . ".join(reversed(parts))

    # -- validation ----------------------------------------------------
    def _check_contact(self, tol: float = 1e-8):
        rng = np.random.default_rng(12345)
        pts = rng.uniform(-1.0, 1.0, size=(32, 3))
        fr = frame_at(pts)
        jac = self.differential(pts)
        fpts = self.apply(pts)
        for v in (fr.v1, fr.v2):
            w = np.einsum("...ij,...j->...i", jac, v)
            c3 = w[..., 2] + 0.5 * (fpts[..., 1] * w[..., 0] - fpts[..., 0] * w[..., 1])
            if np.max(np.abs(c3)) > tol * max(1.0, float(np.max(np.abs(w)))):
                raise ContactViolation(
                    f"map {self.kind} pushes horizontal vectors out of the horizontal bundle"
                )

    @staticmethod
    def parse(spec: str) -> "MapSpec":
        """Parse e.g. 'dilation:2', 'shear:2,1', 'left:0.1,0.2,0', 'rotation:0.7',
        or compositions joined with '+' (applied left to right)."""
        out = MapSpec.identity()
        for tok in spec.split("+"):
            tok = tok.strip()
            if not tok:
                continue
            name, _, argstr = tok.partition(":")
            args = [float(a) for a in argstr.split(",") if a.strip()] if argstr else []
            name = name.strip().lower()
            if name in ("identity", "id"):
                piece = MapSpec.identity()
            elif name in ("left", "left_translation", "translation"):
                if len(args) != 3:
                    raise ValueError("left translation needs 3 coordinates")
                piece = MapSpec.left_translation(args)
            elif name == "dilation":
                if len(args) != 1:
                    raise ValueError("dilation needs one factor")
                piece = MapSpec.dilation(args[0])
            elif name == "rotation":
                if len(args) != 1:
                    raise ValueError("rotation needs one angle")
                piece = MapSpec.rotation(args[0])
            elif name == "shear":
                if len(args) != 2:
                    raise ValueError("shear needs two factors")
                piece = MapSpec.shear(args[0], args[1])
            else:
                raise ValueError(f"unknown map kind {name!r}")
            out = out.then(piece)
        return out
