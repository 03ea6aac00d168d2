"""Conformal metrics ``g = exp(2u) g_round`` on the sphere.

A :class:`ConformalMetric` holds the exponent ``u`` sampled on an atlas.  When
it was built from a closed form it also keeps that form as ``(base, sigma)``
with ``u(p) = base(sigma p) + log stretch_sigma(p)``, so Möbius pullbacks stay
exact (``sigma`` is simply composed) instead of being resampled.

Curvature comes from the isothermal formula ``K = -exp(-2w) Δw`` applied
per chart to ``w = u + v0 + log|dz/dzeta|``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .errors import ResolutionTooCoarse
from .mobius import MobiusTransform, dilation_at
from .sphere import (
    DEFAULT_HALF_WIDTH,
    DEFAULT_N,
    Points,
    SphereField,
    SpherePoint,
    atlas_geometry,
    laplacian_array,
    neck_atlas,
    smoothstep5,
    standard_atlas,
)

MAX_NODES = 2_500_000


@dataclass
class CurvatureField:
    K: SphereField

    def evaluate(self, points: Points):
        return self.K.evaluate(points)


@dataclass
class FunctionalReport:
    area: float
    entropy: float
    dev1: float
    devp: float
    p: float
    gauss_bonnet_residual: float = 0.0

    CSV_FIELDS = ("label", "k", "n", "area", "entropy", "dev1", "devp", "p",
                  "gauss_bonnet_residual")

    def csv_row(self, label="", k="", n=""):
        return dict(label=label, k=k, n=n, **asdict(self))


def write_functional_csv(rows, fh):
    w = csv.DictWriter(fh, fieldnames=FunctionalReport.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


class ConformalMetric:
    def __init__(self, u: SphereField, provenance: str = "custom", params=None,
                 base=None, sigma: MobiusTransform | None = None, base_curvature=None,
                 base_atlas=None):
        self.u = u
        self.provenance = provenance
        self.params = dict(params or {})
        self._base = base
        self._sigma = sigma or MobiusTransform.identity()
        self._base_curvature = base_curvature
        self._base_atlas = base_atlas or u.atlas

    # construction ---------------------------------------------------------
    @classmethod
    def from_function(cls, base, atlas=None, provenance="custom", params=None,
                      sigma: MobiusTransform | None = None, base_curvature=None, label=None,
                      base_atlas=None):
        atlas = atlas or standard_atlas()
        sigma = sigma or MobiusTransform.identity()
        ident = sigma.is_identity()

        def u_of(points):
            if ident:
                return base(points)
            return base(points.mapped(sigma)) + sigma.log_stretch(points)

        u = SphereField.from_function(u_of, atlas, label or provenance)
        return cls(u, provenance, params, base, sigma, base_curvature, base_atlas or atlas)

    @property
    def atlas(self):
        return self.u.atlas

    @property
    def is_analytic(self):
        return self._base is not None

    @property
    def sigma(self):
        return self._sigma

    @cached_property
    def frame(self) -> "ConformalMetric":
        """The closed form sampled without its Möbius factor (the adapted frame).

        A frame node ``q`` stands for the sphere point ``sigma^-1(q)``; area,
        curvature integrals, ball masses and distances of ``g`` equal those
        of the frame metric by change of variables, at the frame's
        resolution however strongly ``sigma`` concentrates ``g``.
        """
        if self._base is None or self._sigma.is_identity():
            return self
        return ConformalMetric.from_function(self._base, self._base_atlas, self.provenance,
                                             self.params, base_curvature=self._base_curvature,
                                             label=f"frame({self.u.label})")

    def frame_points(self):
        """Per-chart sphere points represented by the frame nodes."""
        geo = atlas_geometry(self.frame.atlas)
        if self.frame is self:
            return [g.points for g in geo]
        inv = self._sigma.inverse()
        return [g.points.mapped(inv) for g in geo]

    def evaluate(self, points: Points):
        """Exponent ``u`` at arbitrary points (exact if analytic, else interpolated)."""
        if self._base is None:
            return self.u.evaluate(points)
        if self._sigma.is_identity():
            return self._base(points)
        return self._base(points.mapped(self._sigma)) + self._sigma.log_stretch(points)

    def curvature_at(self, points: Points):
        if self._base_curvature is not None:
            q = points if self._sigma.is_identity() else points.mapped(self._sigma)
            return self._base_curvature(q) * np.ones(points.shape)
        return self.curvature.evaluate(points)

    # per-chart quantities --------------------------------------------------
    @cached_property
    def chart_exponents(self):
        """``w = u + v0 + log|dz/dzeta|`` per chart: metric is ``exp(2w)|dzeta|^2``."""
        return tuple(u + g.rlf for u, g in zip(self.u.values, atlas_geometry(self.atlas)))

    @cached_property
    def measure_weights(self):
        """Quadrature weights of ``dmu_g`` per chart (partition of unity applied)."""
        return tuple(g.chi * np.exp(2.0 * w) * g.area
                     for w, g in zip(self.chart_exponents, atlas_geometry(self.atlas)))

    @cached_property
    def curvature(self) -> CurvatureField:
        vals = []
        for w, g in zip(self.chart_exponents, atlas_geometry(self.atlas)):
            lap = laplacian_array(w, g.chart.periodic, g.chart.h)
            k = -np.exp(-2.0 * w) * lap
            vals.append(np.where(g.interior, k, 0.0))
        return CurvatureField(SphereField(self.atlas, vals, "K"))

    def integrate(self, values):
        """``∫ f dmu_g`` for per-chart arrays (or a SphereField) ``f``."""
        if isinstance(values, SphereField):
            values = values.values
        return float(sum(np.sum(w * v) for w, v in zip(self.measure_weights, values)))

    @cached_property
    def grid_area(self) -> float:
        """Area by quadrature on this metric's own samples."""
        return float(sum(np.sum(w) for w in self.measure_weights))

    @property
    def area(self) -> float:
        return self.frame.grid_area

    def total_curvature(self) -> float:
        return self.integrate(self.curvature.K)

    def gauss_bonnet_residual(self, adapted: bool = True) -> float:
        g = self.frame if adapted else self
        return g.total_curvature() - 4.0 * math.pi

    def functionals(self, p: float = 2.0, adapted: bool = True) -> FunctionalReport:
        """Area, curvature entropy and ``L^1`` / ``L^p`` deviation of ``K`` from 1.

        With ``adapted=False`` the integrals use this metric's own grid
        samples even when a closed form is available.
        """
        if p < 1:
            raise ValueError("p must be >= 1")
        if adapted and self.frame is not self:
            return self.frame.functionals(p)
        K = self.curvature.K.values
        aK = [np.abs(k) for k in K]
        return FunctionalReport(
            area=self.grid_area,
            entropy=self.integrate([a * np.log1p(a) for a in aK]),
            dev1=self._dev(1.0),
            devp=self._dev(p),
            p=float(p),
            gauss_bonnet_residual=self.total_curvature() - 4.0 * math.pi,
        )

    def _dev(self, p):
        return self.integrate([np.abs(k - 1.0) ** p for k in self.curvature.K.values])

    def center_of_mass(self):
        """Ambient centre of mass of ``dmu_g`` normalized by the area."""
        fr = self.frame
        c = np.zeros(3)
        for w, pts in zip(fr.measure_weights, self.frame_points()):
            c += np.tensordot(pts.x, w, axes=([1, 2], [0, 1]))
        return c / fr.grid_area

    def sup_abs_u(self) -> float:
        return float(max(np.max(np.abs(u[g.chi > 0]))
                         for u, g in zip(self.u.values, atlas_geometry(self.atlas))))

    # Möbius -------------------------------------------------------------------
    def pullback(self, sigma: MobiusTransform, atlas=None) -> "ConformalMetric":
        """``sigma^* g``: ``u'(p) = u(sigma p) + log stretch_sigma(p)``.

        Analytic metrics compose ``sigma`` into their closed form.  Sampled
        metrics are resampled with cubic interpolation, which is checked for
        chart consistency.
        """
        if sigma.is_identity() and atlas is None:
            return self
        if atlas is None:
            atlas = self.atlas if self.atlas.is_standard else standard_atlas(self.atlas.n)
        if self._base is not None:
            return ConformalMetric.from_function(
                self._base, atlas, "pullback", dict(self.params, source=self.provenance),
                sigma=self._sigma @ sigma, base_curvature=self._base_curvature,
                label=f"pullback({self.u.label})", base_atlas=self._base_atlas)
        src = self

        def resampled(points):
            return src.u.evaluate(points.mapped(sigma)) + sigma.log_stretch(points)

        u = SphereField.from_function(resampled, atlas, f"pullback({self.u.label})")
        u.check_consistency()
        return ConformalMetric(u, "pullback", dict(self.params, source=self.provenance))

    # geometry -----------------------------------------------------------------
    def diameter_estimate(self, sources=None, adapted: bool = True) -> float:
        """Upper-biased intrinsic diameter from Dijkstra on the chart grids."""
        return graph_diameter(self.frame if adapted else self, sources)

    # io ---------------------------------------------------------------------------
    def to_dict(self):
        d = self.u.to_dict()
        d["provenance"] = self.provenance
        d["params"] = {k: v for k, v in self.params.items() if _jsonable(v)}
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d):
        return cls(SphereField.from_dict(d), d.get("provenance", "custom"), d.get("params"))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _jsonable(v):
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


# ------------------------------------------------------------------------- factories

def make_round(n: int = DEFAULT_N, half_width: float = DEFAULT_HALF_WIDTH) -> ConformalMetric:
    return ConformalMetric.from_function(lambda pts: np.zeros(pts.shape), standard_atlas(n, half_width),
                                         "round", base_curvature=lambda pts: 1.0)


def make_dilated_round(p: SpherePoint, s: float, n: int = DEFAULT_N,
                       half_width: float = DEFAULT_HALF_WIDTH) -> ConformalMetric:
    """Round metric pulled back so its area concentrates at ``p`` on scale ``1/s``."""
    sigma = dilation_at(p, 1.0 / s)
    return ConformalMetric.from_function(lambda pts: np.zeros(pts.shape), standard_atlas(n, half_width),
                                         "dilated_round", {"p": list(p.as_array()), "s": s},
                                         sigma=sigma, base_curvature=lambda pts: 1.0,
                                         label=f"dilated_round(s={s:g})")


PERTURBATION_MODES = (
    lambda x: x[0],
    lambda x: x[1] * x[2],
    lambda x: x[2] ** 2 - 1.0 / 3.0,
)


def make_perturbed_round(seed: int, amplitude: float, n: int = DEFAULT_N,
                         half_width: float = DEFAULT_HALF_WIDTH) -> ConformalMetric:
    if not 0.0 <= amplitude <= 0.5:
        raise ValueError("amplitude must lie in [0, 0.5]")
    coef = np.random.default_rng(seed).normal(size=len(PERTURBATION_MODES))
    coef = coef / np.linalg.norm(coef)

    def base(pts):
        x = pts.x
        return amplitude * sum(c * m(x) for c, m in zip(coef, PERTURBATION_MODES))

    return ConformalMetric.from_function(base, standard_atlas(n, half_width), "perturbed_round",
                                         {"seed": seed, "amplitude": amplitude,
                                          "coefficients": coef.tolist()},
                                         label=f"perturbed_round(seed={seed},amp={amplitude:g})")


class NeckProfile:
    """Conformal exponent ``psi(t)`` of a capped hyperbolic neck in cylinder coordinates.

    The metric is ``exp(2 psi(t)) (dt^2 + dtheta^2)`` with ``z = exp(t + i theta)``.
    On ``|t| <= flat + T`` (``T = k pi^2 - 2 pi``) it is the hyperbolic neck
    factor ``1/(2 k pi cos(s/(2 k pi)))`` with ``s = max(|t| - flat, 0)``; the
    middle ``|t| <= flat`` is the flat cylinder of radius ``1/(2 k pi)``.  Past
    the neck end a cubic Taylor continuation of the neck runs for one unit
    and is then blended (quintic smoothstep) into a round cap matched in
    value and slope at the neck end; the whole collar has length ``2 pi``.
    Keeping the blend off the neck's stencil neighbours keeps the
    finite-difference curvature error there purely second order.
    """

    def __init__(self, k: int, flat: float = 0.0):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)
        self.flat = float(flat)
        self.a = 2.0 * k * math.pi
        self.T = k * math.pi ** 2 - 2.0 * math.pi
        self.collar = 2.0 * math.pi
        self.taylor_run = 1.0
        x = self.T / self.a
        sec2 = 1.0 / math.cos(x) ** 2
        self.d0 = -math.log(self.a * math.cos(x))
        self.d1 = math.tan(x) / self.a
        self.d2 = sec2 / self.a ** 2
        self.d3 = 2.0 * sec2 * math.tan(x) / self.a ** 3
        self.t_center = self.T + math.atanh(self.d1)
        self.log_cap_radius = self.d0 - 0.5 * math.log1p(-self.d1 ** 2)

    @property
    def neck_end(self):
        """``|t|`` where the hyperbolic neck formula stops."""
        return self.flat + self.T

    @property
    def cap_start(self):
        """``|t|`` beyond which the factor is exactly the round cap."""
        return self.flat + self.T + self.collar

    def neck(self, s):
        return -np.log(self.a * np.cos(np.asarray(s) / self.a))

    def cap(self, s):
        d = np.asarray(s) - self.t_center
        a = np.abs(d)
        return self.log_cap_radius - (a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0))

    def __call__(self, t):
        s = np.maximum(np.abs(np.asarray(t, dtype=float)) - self.flat, 0.0)
        out = np.empty_like(s)
        inner = s <= self.T
        out[inner] = self.neck(s[inner])
        rest = ~inner
        e = s[rest] - self.T
        taylor = self.d0 + e * (self.d1 + e * (0.5 * self.d2 + e * self.d3 / 6.0))
        blend = smoothstep5((e - self.taylor_run) / (self.collar - self.taylor_run))
        out[rest] = np.where(blend >= 1.0, self.cap(s[rest]),
                             (1.0 - blend) * taylor + blend * self.cap(s[rest]))
        return out

    def neck_area(self):
        """Closed form ``2 pi ∫ exp(2 psi) dt`` over the hyperbolic part(s)."""
        return 2.0 * math.cos(1.0 / self.k) / (self.k * math.sin(1.0 / self.k))

    def flat_area(self):
        return 2.0 * math.pi * 2.0 * self.flat * (1.0 / self.a) ** 2


def _neck_metric(profile: NeckProfile, provenance: str, n: int, label: str):
    t_cap = profile.cap_start
    h = 2.0 * math.pi / (n - 1)
    rows = (2.0 * t_cap) / h
    if rows * (n - 1) > MAX_NODES:
        per_k = math.pi ** 2
        budget_t = 0.5 * MAX_NODES / (n - 1) * h - profile.flat
        raise ResolutionTooCoarse(
            f"neck of length {2 * t_cap:.1f} needs {rows * (n - 1):.3g} cylinder nodes at n={n}",
            max_usable=max(int(budget_t // per_k), 0))
    atlas = neck_atlas(t_cap, n)

    def base(pts):
        t = pts.t
        a = np.abs(t)
        return profile(t) + a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)

    return ConformalMetric.from_function(base, atlas, provenance,
                                         {"k": profile.k, "flat": profile.flat,
                                          "neck_end": profile.neck_end, "cap_start": t_cap},
                                         label=label)


def make_cylinder_sphere(k: int, n: int = DEFAULT_N) -> ConformalMetric:
    """Sphere with a long hyperbolic (``K = -1``) neck between two round caps."""
    g = _neck_metric(NeckProfile(k), "cylinder_sphere", n, f"cylinder_sphere(k={k})")
    g.profile = NeckProfile(k)
    return g


def make_flat_neck_sphere(k: int, n: int = DEFAULT_N) -> ConformalMetric:
    """Capped neck as above with a flat middle segment of length ``2 k^2``."""
    prof = NeckProfile(k, flat=float(k) ** 2)
    g = _neck_metric(prof, "flat_neck_sphere", n, f"flat_neck_sphere(k={k})")
    g.profile = prof
    return g


def neck_band(g: ConformalMetric, t_lo: float, t_hi: float):
    """Cylinder-chart index and per-node weights of the band ``t_lo <= |t| <= t_hi``.

    Weights are a linear ramp across the cut (one grid step wide) so the
    node sum is second-order accurate.
    """
    for i, geo in enumerate(atlas_geometry(g.atlas)):
        if geo.chart.kind == "cylinder":
            a = np.abs(geo.t)
            h = geo.chart.h
            w = np.clip((t_hi - a) / h + 0.5, 0, 1) * np.clip((a - t_lo) / h + 0.5, 0, 1)
            if t_lo <= 0:
                w = np.clip((t_hi - a) / h + 0.5, 0, 1)
            return i, w
    raise ValueError("metric has no cylinder chart")


def neck_region_area(g: ConformalMetric, t_lo: float, t_hi: float) -> float:
    i, w = neck_band(g, t_lo, t_hi)
    geo = atlas_geometry(g.atlas)[i]
    return float(np.sum(w * np.exp(2.0 * g.chart_exponents[i]) * geo.area))


def neck_curvature(g: ConformalMetric, t_lo: float, t_hi: float):
    """Curvature samples on cylinder nodes with ``t_lo <= |t| <= t_hi``."""
    for i, geo in enumerate(atlas_geometry(g.atlas)):
        if geo.chart.kind == "cylinder":
            a = np.abs(geo.t)
            sel = (a >= t_lo) & (a <= t_hi) & geo.interior
            return g.curvature.K.values[i][sel]
    raise ValueError("metric has no cylinder chart")


# ------------------------------------------------------------------------- diameter

def diameter_sources():
    """26 fixed directions: the nonzero points of {-1, 0, 1}^3, normalized."""
    pts = []
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            for c in (-1, 0, 1):
                if (a, b, c) != (0, 0, 0):
                    pts.append(SpherePoint(a, b, c))
    return pts


_NEIGHBORS = ((0, 1, 1.0), (1, 0, 1.0), (1, 1, math.sqrt(2.0)), (1, -1, math.sqrt(2.0)))


def _build_graph(g: ConformalMetric):
    geo = atlas_geometry(g.atlas)
    offsets, valid, ids = [], [], []
    total = 0
    for gi in geo:
        v = (gi.chi > 0) & gi.interior
        idx = np.full(v.shape, -1, dtype=np.int64)
        idx[v] = total + np.arange(int(v.sum()))
        total += int(v.sum())
        valid.append(v)
        ids.append(idx)
    rows, cols, data = [], [], []
    for gi, w, v, idx in zip(geo, g.chart_exponents, valid, ids):
        ew = np.exp(w)
        h = gi.chart.h
        nr, nc = v.shape
        for di, dj, ln in _NEIGHBORS:
            if gi.chart.periodic:
                i0 = slice(0, nr - di)
                i1 = slice(di, nr)
                a_idx = idx[i0]
                b_idx = np.roll(idx[i1], -dj, axis=1)
                a_e = ew[i0]
                b_e = np.roll(ew[i1], -dj, axis=1)
            else:
                i0, i1 = slice(0, nr - di), slice(di, nr)
                j0 = slice(max(0, -dj), nc - max(0, dj))
                j1 = slice(max(0, dj), nc - max(0, -dj))
                a_idx, b_idx = idx[i0, j0], idx[i1, j1]
                a_e, b_e = ew[i0, j0], ew[i1, j1]
            ok = (a_idx >= 0) & (b_idx >= 0)
            rows.append(a_idx[ok])
            cols.append(b_idx[ok])
            data.append(0.5 * (a_e[ok] + b_e[ok]) * h * ln)
    # stitch neighbouring charts across their shared band
    for i in range(len(geo) - 1):
        for a, b in ((i, i + 1), (i + 1, i)):
            ga, gb = geo[a], geo[b]
            sel = valid[a] & (g.atlas.weight_of_t(b, ga.t) > 0)
            if not np.any(sel):
                continue
            zb = g.atlas.charts[b].to_local(ga.z1[sel], ga.z2[sel])
            rb, cb = _nearest_node(g.atlas.charts[b], zb)
            target = ids[b][rb, cb]
            ok = target >= 0
            dist = np.abs(zb[ok] - gb.zeta[rb[ok], cb[ok]])
            if gb.chart.periodic:
                dth = np.abs(np.angle(np.exp(1j * (zb[ok].imag - gb.zeta[rb[ok], cb[ok]].imag))))
                dist = np.hypot(zb[ok].real - gb.zeta[rb[ok], cb[ok]].real, dth)
            rows.append(ids[a][sel][ok])
            cols.append(target[ok])
            data.append(np.exp(g.chart_exponents[b][rb[ok], cb[ok]]) * dist + 1e-15)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    d = np.concatenate(data)
    graph = sparse.coo_matrix((np.concatenate([d, d]), (np.concatenate([r, c]), np.concatenate([c, r]))),
                              shape=(total, total)).tocsr()
    return graph, ids, valid


def _nearest_node(chart, zeta):
    if chart.kind == "cylinder":
        r = np.rint((zeta.real - chart.t_min) / chart.h).astype(int)
        c = np.rint(np.mod(zeta.imag, 2 * math.pi) / chart.h).astype(int) % (chart.n - 1)
        r = np.clip(r, 0, chart.rows - 1)
    else:
        r = np.clip(np.rint((zeta.imag + chart.half_width) / chart.h).astype(int), 0, chart.n - 1)
        c = np.clip(np.rint((zeta.real + chart.half_width) / chart.h).astype(int), 0, chart.n - 1)
    return r, c


def node_of_point(g: ConformalMetric, p: SpherePoint, ids=None):
    """Graph index of the grid node nearest ``p`` in its owning chart."""
    pts = Points(*[np.array([v]) for v in p.spinor()])
    i = int(g.atlas.owner(pts.t)[0])
    chart = g.atlas.charts[i]
    zeta = chart.to_local(pts.z1, pts.z2)
    r, c = _nearest_node(chart, zeta)
    return i, int(r[0]), int(c[0])


def graph_diameter(g: ConformalMetric, sources=None) -> float:
    graph, ids, valid = _build_graph(g)
    src = []
    for p in sources or diameter_sources():
        i, r, c = node_of_point(g, p)
        k = ids[i][r, c]
        if k < 0:
            raise ResolutionTooCoarse(f"source {p} falls outside the valid nodes of chart {i}")
        src.append(int(k))
    dist = dijkstra(graph, directed=False, indices=src)
    dist[~np.isfinite(dist)] = 0.0
    return float(dist.max())
