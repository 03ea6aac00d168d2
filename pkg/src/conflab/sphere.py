"""Points, stereographic charts, grid fields and quadrature on the unit sphere.

Points are handled internally as normalized spinors ``(z1, z2)`` with
``|z1|**2 + |z2|**2 = 1``; the north-chart coordinate is ``z = z1 / z2``.
Spinors keep full relative precision near both poles, which matters for the
neck metrics whose caps live at stereographic scales like ``exp(-40)``.

Conventions
-----------
* NorthChart projects from ``(0, 0, 1)``: ``z = (x1 + i x2) / (1 - x3)``.
* SouthChart projects from ``(0, 0, -1)``: ``w = (x1 - i x2) / (1 + x3)``.
* On the overlap ``w = 1 / z``.
* Grid sample ``(i, j)`` sits at ``(-R + j h) + i (-R + i h)``, ``h = 2R/(n-1)``.

An :class:`Atlas` is an ordered list of charts banded in ``t = log|z|``,
glued by a quintic-smoothstep partition of unity.  The standard atlas is the
north/south pair; :func:`neck_atlas` adds a log-cylinder chart between two
shifted stereographic caps.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import InconsistentAtlas, PoleSingularity

DEFAULT_N = 257
DEFAULT_HALF_WIDTH = 2.0


# --------------------------------------------------------------------------- points

@dataclass(frozen=True)
class SpherePoint:
    x1: float
    x2: float
    x3: float

    def __post_init__(self):
        v = np.array([self.x1, self.x2, self.x3], dtype=float)
        norm = float(np.linalg.norm(v))
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("cannot normalize a zero or non-finite vector")
        v = v / norm
        object.__setattr__(self, "x1", float(v[0]))
        object.__setattr__(self, "x2", float(v[1]))
        object.__setattr__(self, "x3", float(v[2]))

    @classmethod
    def from_array(cls, v):
        return cls(*map(float, v))

    @classmethod
    def from_spinor(cls, z1, z2):
        x = ambient_from_spinor(np.asarray(z1), np.asarray(z2))
        return cls(float(x[0]), float(x[1]), float(x[2]))

    def as_array(self):
        return np.array([self.x1, self.x2, self.x3])

    def spinor(self):
        return spinor_from_ambient(self.x1, self.x2, self.x3)

    def antipode(self):
        return SpherePoint(-self.x1, -self.x2, -self.x3)


NORTH_POLE = SpherePoint(0.0, 0.0, 1.0)
SOUTH_POLE = SpherePoint(0.0, 0.0, -1.0)


def spinor_from_ambient(x1, x2, x3):
    """Normalized spinor of an ambient unit vector (branch chosen for stability)."""
    if x3 >= 0:
        s = math.sqrt(2.0 * (1.0 + x3))
        return complex((1.0 + x3) / s), complex(x1, -x2) / s
    s = math.sqrt(2.0 * (1.0 - x3))
    return complex(x1, x2) / s, complex((1.0 - x3) / s)


def ambient_from_spinor(z1, z2):
    """Ambient coordinates ``(x1, x2, x3)`` of normalized spinors (arrays ok)."""
    p = 2.0 * z1 * np.conj(z2)
    a1 = np.abs(z1) ** 2
    a2 = np.abs(z2) ** 2
    return np.stack([p.real, p.imag, (a1 - a2) / (a1 + a2)])


def normalize_spinor(z1, z2):
    s = np.sqrt(np.abs(z1) ** 2 + np.abs(z2) ** 2)
    return z1 / s, z2 / s


def spinor_from_z(z):
    """Spinor of north-chart coordinates (``inf`` allowed for the north pole)."""
    z = np.asarray(z, dtype=complex)
    big = np.abs(z) > 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(big, 1.0 / np.where(big, z, 1.0), 0.0)
    z1 = np.where(big, 1.0, z)
    z2 = np.where(big, w, 1.0)
    return normalize_spinor(z1.astype(complex), z2.astype(complex))


def chordal_geodesic(a, b):
    """Great-circle distance between spinors ``a=(a1,a2)`` and ``b=(b1,b2)``."""
    m = np.abs(a[0] * b[1] - a[1] * b[0])
    return 2.0 * np.arcsin(np.minimum(m, 1.0))


class Points:
    """Batch of sphere points (arbitrary array shape) given as spinors."""

    def __init__(self, z1, z2):
        self.z1, self.z2 = normalize_spinor(np.asarray(z1, dtype=complex),
                                            np.asarray(z2, dtype=complex))

    @property
    def shape(self):
        return self.z1.shape

    @cached_property
    def x(self):
        return ambient_from_spinor(self.z1, self.z2)

    @cached_property
    def t(self):
        """``log|z|`` clipped to ``[-700, 700]`` (poles map to the clip values)."""
        with np.errstate(divide="ignore"):
            t = np.log(np.abs(self.z1)) - np.log(np.abs(self.z2))
        return np.clip(t, -700.0, 700.0)

    @cached_property
    def z(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.z2 != 0, self.z1 / np.where(self.z2 != 0, self.z2, 1), np.inf)

    def mapped(self, sigma):
        return Points(*sigma.apply_spinor(self.z1, self.z2))


class ChartId(enum.Enum):
    NORTH = "north"
    SOUTH = "south"


def stereo_project(p: SpherePoint, chart: ChartId = ChartId.NORTH) -> complex:
    if chart is ChartId.NORTH:
        den = 1.0 - p.x3
        if math.hypot(p.x1, p.x2, den) <= 1e-9:
            raise PoleSingularity("point is the projection pole (0, 0, 1)")
        return complex(p.x1, p.x2) / den
    den = 1.0 + p.x3
    if math.hypot(p.x1, p.x2, den) <= 1e-9:
        raise PoleSingularity("point is the projection pole (0, 0, -1)")
    return complex(p.x1, -p.x2) / den


def stereo_lift(z: complex, chart: ChartId = ChartId.NORTH) -> SpherePoint:
    z = complex(z)
    r2 = abs(z) ** 2
    if chart is ChartId.NORTH:
        return SpherePoint(2 * z.real / (1 + r2), 2 * z.imag / (1 + r2), (r2 - 1) / (1 + r2))
    return SpherePoint(2 * z.real / (1 + r2), -2 * z.imag / (1 + r2), (1 - r2) / (1 + r2))


def round_factor(z):
    """Conformal exponent of the round metric in a stereographic chart."""
    return np.log(2.0) - np.log1p(np.abs(np.asarray(z)) ** 2)


def smoothstep5(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


# --------------------------------------------------------------------------- charts

def _log_cosh(t):
    a = np.abs(t)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


@dataclass(frozen=True)
class StereoChart:
    """Square stereographic chart, optionally shifted along the Möbius dilations.

    NorthChart-type: ``z = exp(shift) * zeta``.  SouthChart-type:
    ``z = exp(shift) / zeta``.  ``shift = 0`` gives the standard charts.
    """

    chart: ChartId
    n: int = DEFAULT_N
    half_width: float = DEFAULT_HALF_WIDTH
    shift: float = 0.0

    kind = "stereo"

    def __post_init__(self):
        if self.n < 33 or self.n % 2 == 0:
            raise ValueError(f"grid size must be odd and >= 33, got {self.n}")
        if not self.half_width > 1.0:
            raise ValueError("half_width must exceed 1 so the charts overlap")

    @property
    def h(self):
        return 2.0 * self.half_width / (self.n - 1)

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def periodic(self):
        return False

    def axis(self):
        return -self.half_width + self.h * np.arange(self.n)

    def coords(self):
        a = self.axis()
        return a[None, :] + 1j * a[:, None]

    def spinors(self, zeta=None):
        zeta = self.coords() if zeta is None else np.asarray(zeta, dtype=complex)
        e = math.exp(0.5 * self.shift)
        if self.chart is ChartId.NORTH:
            z1, z2 = e * zeta, np.full_like(zeta, 1.0 / e)
        else:
            z1, z2 = np.full_like(zeta, e), zeta / e
        return normalize_spinor(z1, z2)

    def to_local(self, z1, z2):
        e = math.exp(self.shift)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.chart is ChartId.NORTH:
                return z1 / (e * z2)
            return e * z2 / z1

    def log_modulus(self, zeta=None):
        zeta = self.coords() if zeta is None else zeta
        with np.errstate(divide="ignore"):
            lz = np.log(np.abs(zeta))
        return self.shift + lz if self.chart is ChartId.NORTH else self.shift - lz

    def round_log_factor(self, zeta=None):
        """``v0(z) + log|dz/dzeta|``: round conformal exponent in local coordinates."""
        zeta = self.coords() if zeta is None else zeta
        r2 = np.abs(zeta) ** 2
        c = self.shift
        if self.chart is ChartId.NORTH:
            return math.log(2.0) + c - np.logaddexp(0.0, 2.0 * c + np.log(r2 + 1e-300))
        return math.log(2.0) + c - np.logaddexp(np.log(r2 + 1e-300), 2.0 * c)

    def interior_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1] = True
        return m

    def to_dict(self):
        return {"chart": self.chart.value, "kind": self.kind, "n": self.n,
                "half_width": self.half_width, "shift": self.shift}


@dataclass(frozen=True)
class CylinderChart:
    """Log-polar chart ``zeta = t + i theta`` with ``z = exp(zeta)``.

    Rows are ``t = t_min + i h``; columns ``theta = j h`` for ``j < n - 1``
    (periodic), ``h = 2 pi / (n - 1)``.
    """

    t_min: float
    t_max: float
    n: int = DEFAULT_N

    kind = "cylinder"

    @property
    def h(self):
        return 2.0 * math.pi / (self.n - 1)

    @property
    def rows(self):
        return int(math.ceil((self.t_max - self.t_min) / self.h - 1e-9)) + 1

    @property
    def shape(self):
        return (self.rows, self.n - 1)

    @property
    def periodic(self):
        return True

    def t_axis(self):
        return self.t_min + self.h * np.arange(self.rows)

    def theta_axis(self):
        return self.h * np.arange(self.n - 1)

    def coords(self):
        return self.t_axis()[:, None] + 1j * self.theta_axis()[None, :]

    def spinors(self, zeta=None):
        zeta = self.coords() if zeta is None else np.asarray(zeta, dtype=complex)
        t, th = zeta.real, zeta.imag
        a = 1.0 / np.sqrt(1.0 + np.exp(-2.0 * np.abs(t)))
        b = np.exp(-np.abs(t)) * a
        ph = np.exp(0.5j * th)
        pos = t >= 0
        z1 = np.where(pos, a, b) * ph
        z2 = np.where(pos, b, a) / ph
        return z1, z2

    def to_local(self, z1, z2):
        with np.errstate(divide="ignore"):
            t = np.log(np.abs(z1)) - np.log(np.abs(z2))
        th = np.mod(np.angle(z1) - np.angle(z2), 2.0 * math.pi)
        return t + 1j * th

    def log_modulus(self, zeta=None):
        zeta = self.coords() if zeta is None else zeta
        return np.real(zeta) + 0.0 * np.imag(zeta)

    def round_log_factor(self, zeta=None):
        zeta = self.coords() if zeta is None else zeta
        return -_log_cosh(np.real(zeta)) + 0.0 * np.imag(zeta)

    def interior_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, :] = True
        return m

    def to_dict(self):
        return {"chart": "cylinder", "kind": self.kind, "n": self.n,
                "t_min": self.t_min, "t_max": self.t_max}


def chart_from_dict(d):
    if d.get("kind", "stereo") == "cylinder":
        return CylinderChart(float(d["t_min"]), float(d["t_max"]), int(d["n"]))
    return StereoChart(ChartId(d["chart"]), int(d["n"]), float(d["half_width"]),
                       float(d.get("shift", 0.0)))


@dataclass(frozen=True)
class Atlas:
    """Charts ordered by increasing ``log|z|``; ``bands[i]`` is the (a, b)
    interval of ``log|z|`` over which chart ``i`` hands over to chart ``i+1``."""

    charts: tuple
    bands: tuple

    def __post_init__(self):
        if len(self.bands) != len(self.charts) - 1:
            raise ValueError("need exactly one transition band between consecutive charts")
        for (a, b), (c, _) in zip(self.bands, self.bands[1:]):
            if not b <= c:
                raise ValueError("transition bands must not overlap")

    @property
    def n(self):
        return self.charts[0].n

    @property
    def is_standard(self):
        return (len(self.charts) == 2 and all(isinstance(c, StereoChart) and c.shift == 0.0
                                              for c in self.charts))

    def weight_of_t(self, i, t):
        w = np.ones_like(np.asarray(t, dtype=float))
        if i > 0:
            a, b = self.bands[i - 1]
            w = w * smoothstep5((t - a) / (b - a))
        if i < len(self.charts) - 1:
            a, b = self.bands[i]
            w = w * (1.0 - smoothstep5((t - a) / (b - a)))
        return w

    def owner(self, t):
        """Index of the chart with the largest partition weight at ``log|z| = t``."""
        t = np.asarray(t, dtype=float)
        idx = np.zeros(t.shape, dtype=int)
        for i, (a, b) in enumerate(self.bands):
            idx = np.where(t > 0.5 * (a + b), i + 1, idx)
        return idx

    def to_dict(self):
        return {"charts": [c.to_dict() for c in self.charts], "bands": [list(b) for b in self.bands]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(chart_from_dict(c) for c in d["charts"]),
                   tuple(tuple(map(float, b)) for b in d["bands"]))


@lru_cache(maxsize=8)
def standard_atlas(n: int = DEFAULT_N, half_width: float = DEFAULT_HALF_WIDTH) -> Atlas:
    lr = math.log(half_width)
    return Atlas((StereoChart(ChartId.NORTH, n, half_width), StereoChart(ChartId.SOUTH, n, half_width)),
                 ((-lr, lr),))


def neck_atlas(t_cap: float, n: int = DEFAULT_N, band: float = 0.5,
               cap_half_width: float = DEFAULT_HALF_WIDTH) -> Atlas:
    """Three-chart atlas for metrics symmetric about a long neck ``|log|z|| < t_cap``.

    Left cap (NorthChart type, shift ``-t_cap``) owns ``t < -t_cap``; the
    cylinder owns ``|t| < t_cap - band``; the right cap (SouthChart type,
    shift ``t_cap``) owns ``t > t_cap``.
    """
    if band >= math.log(cap_half_width):
        raise ValueError("transition band must fit inside the cap charts")
    cyl = CylinderChart(-t_cap - 2 * (2 * math.pi / (n - 1)), t_cap + 2 * (2 * math.pi / (n - 1)), n)
    return Atlas((StereoChart(ChartId.NORTH, n, cap_half_width, -t_cap), cyl,
                  StereoChart(ChartId.SOUTH, n, cap_half_width, t_cap)),
                 ((-t_cap, -t_cap + band), (t_cap - band, t_cap)))


class ChartGeometry:
    """Cached per-chart geometry inside an atlas."""

    def __init__(self, atlas: Atlas, index: int):
        chart = atlas.charts[index]
        self.chart = chart
        self.index = index
        self.zeta = chart.coords()
        self.z1, self.z2 = chart.spinors(self.zeta)
        self.t = chart.log_modulus(self.zeta)
        self.rlf = chart.round_log_factor(self.zeta)
        self.chi = atlas.weight_of_t(index, self.t)
        self.area = chart.h ** 2
        self.interior = chart.interior_mask()

    @cached_property
    def points(self):
        return Points(self.z1, self.z2)


@lru_cache(maxsize=6)
def atlas_geometry(atlas: Atlas):
    return tuple(ChartGeometry(atlas, i) for i in range(len(atlas.charts)))


# --------------------------------------------------------------------------- fields

@dataclass
class GridField:
    chart: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.chart.shape:
            raise ValueError(f"values shape {self.values.shape} != chart shape {self.chart.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def n(self):
        return self.chart.n

    @property
    def half_width(self):
        return getattr(self.chart, "half_width", None)


def _lagrange4(u):
    """Cubic Lagrange weights for nodes -1, 0, 1, 2 at offset ``u``."""
    return (-u * (u - 1) * (u - 2) / 6.0, (u + 1) * (u - 1) * (u - 2) / 2.0,
            -(u + 1) * u * (u - 2) / 2.0, (u + 1) * u * (u - 1) / 6.0)


def interpolate_chart(values, chart, zeta):
    """Local 4x4 cubic Lagrange interpolation of chart samples at ``zeta``.

    Stencils are clamped inside the grid (one-sided near the edge); the
    cylinder chart wraps in theta.
    """
    zeta = np.asarray(zeta, dtype=complex)
    nr, nc = values.shape
    if chart.kind == "cylinder":
        fr = (zeta.real - chart.t_min) / chart.h
        fc = np.mod(zeta.imag, 2 * math.pi) / chart.h
    else:
        fr = (zeta.imag + chart.half_width) / chart.h
        fc = (zeta.real + chart.half_width) / chart.h
    r0 = np.clip(np.floor(fr).astype(int) - 1, 0, nr - 4)
    wr = _lagrange4(fr - r0 - 1)
    if chart.kind == "cylinder":
        c0 = np.floor(fc).astype(int) - 1
    else:
        c0 = np.clip(np.floor(fc).astype(int) - 1, 0, nc - 4)
    wc = _lagrange4(fc - c0 - 1)
    out = np.zeros(zeta.shape)
    for a in range(4):
        acc = np.zeros(zeta.shape)
        for b in range(4):
            acc += wc[b] * (values[r0 + a, (c0 + b) % nc])
        out += wr[a] * acc
    return out


class SphereField:
    """Scalar field sampled on every chart of an atlas."""

    def __init__(self, atlas: Atlas, values, label: str = ""):
        self.atlas = atlas
        self.grids = tuple(GridField(c, v) for c, v in zip(atlas.charts, values))
        if len(self.grids) != len(atlas.charts):
            raise ValueError("one value array per chart required")
        self.label = label

    @property
    def values(self):
        return tuple(g.values for g in self.grids)

    @property
    def north(self):
        return self.grids[0]

    @property
    def south(self):
        return self.grids[-1]

    @property
    def n(self):
        return self.atlas.n

    @classmethod
    def from_function(cls, fn, atlas: Atlas | None = None, label: str = ""):
        """Sample ``fn(points: Points) -> array`` on every chart."""
        atlas = atlas or standard_atlas()
        geo = atlas_geometry(atlas)
        return cls(atlas, [np.asarray(fn(g.points), dtype=float) * np.ones(g.chart.shape) for g in geo],
                   label)

    @classmethod
    def constant(cls, value, atlas: Atlas | None = None, label: str = ""):
        atlas = atlas or standard_atlas()
        return cls(atlas, [np.full(c.shape, float(value)) for c in atlas.charts], label)

    def map(self, fn, label=None):
        return SphereField(self.atlas, [fn(v) for v in self.values], self.label if label is None else label)

    def __add__(self, other):
        if isinstance(other, SphereField):
            return SphereField(self.atlas, [a + b for a, b in zip(self.values, other.values)], self.label)
        return self.map(lambda v: v + other)

    def __mul__(self, other):
        if isinstance(other, SphereField):
            return SphereField(self.atlas, [a * b for a, b in zip(self.values, other.values)], self.label)
        return self.map(lambda v: v * other)

    __rmul__ = __mul__

    def evaluate(self, points: Points):
        """Interpolate at arbitrary points using the owning chart."""
        owner = self.atlas.owner(points.t)
        out = np.empty(points.shape)
        for i, (chart, grid) in enumerate(zip(self.atlas.charts, self.grids)):
            sel = owner == i
            if np.any(sel):
                zeta = chart.to_local(points.z1[sel], points.z2[sel])
                out[sel] = interpolate_chart(grid.values, chart, zeta)
        return out

    def overlap_disagreement(self):
        """Max |difference| between neighbouring charts on their shared band."""
        geo = atlas_geometry(self.atlas)
        worst = 0.0
        for i in range(len(geo) - 1):
            for a, b in ((i, i + 1), (i + 1, i)):
                ga = geo[a]
                sel = (ga.chi > 0) & (self.atlas.weight_of_t(b, ga.t) > 0) & ga.interior
                if not np.any(sel):
                    continue
                zeta_b = self.atlas.charts[b].to_local(ga.z1[sel], ga.z2[sel])
                other = interpolate_chart(self.grids[b].values, self.atlas.charts[b], zeta_b)
                worst = max(worst, float(np.max(np.abs(self.grids[a].values[sel] - other))))
        return worst

    def check_consistency(self, tol=None):
        """Raise :class:`InconsistentAtlas` if overlap disagreement exceeds ``tol``.

        Default tolerance is ``5 h**2`` of the coarsest chart (the allowance
        for FD-derived fields; pass ``1e-6`` for analytically sampled ones).
        """
        if tol is None:
            tol = 5.0 * max(c.h for c in self.atlas.charts) ** 2
        dis = self.overlap_disagreement()
        if dis > tol:
            raise InconsistentAtlas(f"chart overlap disagreement {dis:.3e} exceeds {tol:.3e}",
                                    disagreement=dis, tolerance=tol)
        return dis

    # serialization ------------------------------------------------------
    def to_dict(self):
        return {
            "label": self.label,
            "bands": [list(b) for b in self.atlas.bands],
            "charts": [dict(c.to_dict(), values=v.ravel().tolist())
                       for c, v in zip(self.atlas.charts, self.values)],
        }

    @classmethod
    def from_dict(cls, d):
        charts = tuple(chart_from_dict(c) for c in d["charts"])
        bands = d.get("bands")
        if bands is None:
            hw = charts[0].half_width
            bands = [(-math.log(hw), math.log(hw))]
        atlas = Atlas(charts, tuple(tuple(map(float, b)) for b in bands))
        values = [np.asarray(c["values"], dtype=float).reshape(ch.shape)
                  for c, ch in zip(d["charts"], charts)]
        return cls(atlas, values, d.get("label", ""))

    def dumps(self):
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.loads(fh.read())


# --------------------------------------------------------------------------- operators

def laplacian_array(values, periodic=False, h=1.0):
    """5-point Laplacian; non-evaluable boundary samples are set to 0."""
    v = np.asarray(values, dtype=float)
    out = np.zeros_like(v)
    if periodic:
        out[1:-1] = (v[2:] + v[:-2] + np.roll(v[1:-1], 1, axis=1)
                     + np.roll(v[1:-1], -1, axis=1) - 4.0 * v[1:-1]) / h ** 2
    else:
        out[1:-1, 1:-1] = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2]
                           - 4.0 * v[1:-1, 1:-1]) / h ** 2
    return out


def laplacian_flat(f: GridField) -> GridField:
    """Flat 5-point Laplacian in chart coordinates (boundary ring left at 0)."""
    if f.chart.n < 33:
        raise ValueError("laplacian_flat needs n >= 33")
    return GridField(f.chart, laplacian_array(f.values, f.chart.periodic, f.chart.h))


def quadrature_weights(atlas: Atlas):
    """Per-chart weights ``chi * exp(2 v0) * h**2`` (round area element)."""
    return tuple(g.chi * np.exp(2.0 * g.rlf) * g.area for g in atlas_geometry(atlas))


def integrate_sphere(f, density=None, check=False, tol=None) -> float:
    """Integral of ``f * density`` against the round area measure.

    ``f`` may be a :class:`SphereField` or a scalar; ``density`` a
    :class:`SphereField` or ``None`` (meaning 1).  Set ``check=True`` to
    validate chart consistency first.
    """
    if isinstance(f, SphereField):
        atlas = f.atlas
    elif isinstance(density, SphereField):
        atlas = density.atlas
    else:
        atlas = standard_atlas()
    if check:
        for fld in (f, density):
            if isinstance(fld, SphereField):
                fld.check_consistency(tol)
    total = 0.0
    for i, w in enumerate(quadrature_weights(atlas)):
        val = f.values[i] if isinstance(f, SphereField) else float(f)
        if isinstance(density, SphereField):
            val = val * density.values[i]
        total += float(np.sum(w * val))
    return total


def fibonacci_points(count: int = 1000):
    """Deterministic near-uniform sphere sample (golden-angle spiral)."""
    k = np.arange(count) + 0.5
    x3 = 1.0 - 2.0 * k / count
    r = np.sqrt(1.0 - x3 ** 2)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), x3], axis=1)
