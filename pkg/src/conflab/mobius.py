"""Orientation-preserving Möbius transformations of the sphere.

A transform is a unit-determinant matrix ``[[a, b], [c, d]]`` acting on the
NorthChart coordinate as ``z -> (a z + b) / (c z + d)``, equivalently by
matrix multiplication on spinors.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveScale
from .sphere import SOUTH_POLE, Points, SpherePoint


@dataclass(frozen=True)
class MobiusTransform:
    a: complex = 1.0
    b: complex = 0.0
    c: complex = 0.0
    d: complex = 1.0

    def __post_init__(self):
        det = complex(self.a) * complex(self.d) - complex(self.b) * complex(self.c)
        if det == 0:
            raise ValueError("singular Möbius matrix")
        r = cmath.sqrt(det)
        for name in "abcd":
            object.__setattr__(self, name, complex(getattr(self, name)) / r)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=complex)
        return cls(m[0, 0], m[0, 1], m[1, 0], m[1, 1])

    @classmethod
    def identity(cls):
        return cls()

    @property
    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def det(self):
        return self.a * self.d - self.b * self.c

    def compose(self, other: "MobiusTransform") -> "MobiusTransform":
        """``self ∘ other`` (apply ``other`` first)."""
        return MobiusTransform.from_matrix(self.matrix @ other.matrix)

    __matmul__ = compose

    def inverse(self) -> "MobiusTransform":
        return MobiusTransform(self.d, -self.b, -self.c, self.a)

    def apply_spinor(self, z1, z2):
        w1 = self.a * z1 + self.b * z2
        w2 = self.c * z1 + self.d * z2
        s = np.sqrt(np.abs(w1) ** 2 + np.abs(w2) ** 2)
        return w1 / s, w2 / s

    def apply(self, p: SpherePoint) -> SpherePoint:
        return SpherePoint.from_spinor(*self.apply_spinor(*p.spinor()))

    def apply_z(self, z):
        """Fractional-linear action on finite chart coordinates."""
        z = np.asarray(z, dtype=complex)
        return (self.a * z + self.b) / (self.c * z + self.d)

    def log_stretch(self, points: Points):
        """``log`` of the conformal stretch of ``self`` w.r.t. the round metric."""
        w1 = self.a * points.z1 + self.b * points.z2
        w2 = self.c * points.z1 + self.d * points.z2
        return -np.log(np.abs(w1) ** 2 + np.abs(w2) ** 2)

    def is_identity(self, tol=1e-12):
        m = self.matrix
        return bool(min(np.abs(m - np.eye(2)).max(), np.abs(m + np.eye(2)).max()) <= tol)

    def to_dict(self):
        return {k: [getattr(self, k).real, getattr(self, k).imag] for k in "abcd"}

    @classmethod
    def from_dict(cls, d):
        return cls(*(complex(*d[k]) for k in "abcd"))


def rotation(axis, angle: float) -> MobiusTransform:
    """Rotation of the sphere about ``axis`` by ``angle`` (right-hand rule)."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    c, s = math.cos(0.5 * angle), math.sin(0.5 * angle)
    return MobiusTransform(c + 1j * s * n[2], 1j * s * (n[0] + 1j * n[1]),
                           1j * s * (n[0] - 1j * n[1]), c - 1j * s * n[2])


def rotation_to_origin(p: SpherePoint) -> MobiusTransform:
    """Minimal geodesic rotation taking ``p`` to (0, 0, -1), the NorthChart origin.

    For ``p`` at (0, 0, 1) a half-turn about the x1-axis is used.
    """
    v = p.as_array()
    target = SOUTH_POLE.as_array()
    axis = np.cross(v, target)
    sn = np.linalg.norm(axis)
    cs = float(np.dot(v, target))
    if sn < 1e-15:
        if cs > 0:
            return MobiusTransform.identity()
        return rotation([1.0, 0.0, 0.0], math.pi)
    return rotation(axis / sn, math.atan2(sn, cs))


def dilation(s: float) -> MobiusTransform:
    """``z -> z / s`` in the NorthChart."""
    if not s > 0:
        raise NonPositiveScale(f"dilation scale must be positive, got {s}")
    r = math.sqrt(s)
    return MobiusTransform(1.0 / r, 0.0, 0.0, r)


def dilation_at(p: SpherePoint, s: float) -> MobiusTransform:
    """Dilation by ``1/s`` centred at ``p``: fixes ``p`` and its antipode.

    Pulling back the round metric by ``dilation_at(p, s)`` with small ``s``
    concentrates its area near ``p``.
    """
    if not s > 0:
        raise NonPositiveScale(f"dilation scale must be positive, got {s}")
    r = rotation_to_origin(p)
    return r.inverse() @ dilation(s) @ r


def random_mobius(rng: np.random.Generator, max_log_scale: float = 1.0) -> MobiusTransform:
    """Random rotation composed with a random dilation, ``|log s| <= max_log_scale``."""
    axis = rng.normal(size=3)
    rot = rotation(axis, rng.uniform(0, 2 * math.pi))
    p = SpherePoint(*rng.normal(size=3))
    return dilation_at(p, math.exp(rng.uniform(-max_log_scale, max_log_scale))) @ rot


def pullback(sigma: MobiusTransform, g, atlas=None):
    """``sigma^* g``; see :meth:`conflab.metrics.ConformalMetric.pullback`."""
    return g.pullback(sigma, atlas=atlas)
