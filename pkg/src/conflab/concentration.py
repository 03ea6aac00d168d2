"""Concentration radius, Möbius normalization and bubble extraction.

The concentration radius of ``g = e^{2u} g_round`` at ``x`` is the round
radius of the smallest geodesic ball about ``x`` carrying mass ``eps1/2`` of
``e^{2u} dmu_round``.  Ball masses are node sums with a linear ramp of one
grid step across the ball's rim, so the mass is continuous and monotone in
the radius and bisection is well posed.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize

from . import kernels
from .disk import DiskField, fd_residual, grid_coords
from .errors import ConflabError, MassDeficient, NoConvergence, ResolutionTooCoarse
from .metrics import (
    ConformalMetric,
    make_cylinder_sphere,
    make_dilated_round,
    make_flat_neck_sphere,
    make_perturbed_round,
)
from .mobius import MobiusTransform, dilation_at, rotation_to_origin
from .sphere import Points, SpherePoint, atlas_geometry, chordal_geodesic, fibonacci_points

DEFAULT_EPSILON1 = 0.4
CENTER_TOL = 0.01
SCALE_RANGE = (0.5, 2.0)


def round_rho(eps1: float = DEFAULT_EPSILON1) -> float:
    """Concentration radius of the round sphere: ``2 pi (1 - cos r) = eps1 / 2``."""
    return math.acos(1.0 - eps1 / (4.0 * math.pi))


# --------------------------------------------------------------------------- rho

class _MassNodes:
    """Flattened node data of ``e^{2u} dmu_round`` for the ball-mass kernels."""

    def __init__(self, g: ConformalMetric):
        fr = g.frame
        inv = None if fr is g else g.sigma.inverse()
        p1, p2, w, d = [], [], [], []
        for geo, mw in zip(atlas_geometry(fr.atlas), fr.measure_weights):
            keep = mw > 0
            z1, z2 = geo.z1[keep], geo.z2[keep]
            delta = geo.chart.h * np.exp(geo.rlf[keep])
            if inv is not None:
                # frame node q stands for inv(q); the ramp width follows the stretch of inv
                delta = delta * np.exp(inv.log_stretch(Points(z1, z2)))
                z1, z2 = inv.apply_spinor(z1, z2)
            p1.append(z1)
            p2.append(z2)
            w.append(mw[keep])
            d.append(delta)
        self.p1 = np.ascontiguousarray(np.concatenate(p1))
        self.p2 = np.ascontiguousarray(np.concatenate(p2))
        self.w = np.ascontiguousarray(np.concatenate(w))
        self.delta = np.ascontiguousarray(np.concatenate(d))
        self.total = float(self.w.sum())


def _nodes(g: ConformalMetric) -> _MassNodes:
    nodes = getattr(g, "_mass_nodes", None)
    if nodes is None:
        nodes = _MassNodes(g)
        g._mass_nodes = nodes
    return nodes


def ball_mass(g: ConformalMetric, x: SpherePoint, r: float) -> float:
    nd = _nodes(g)
    x1, x2 = x.spinor()
    return kernels.ball_mass(nd.p1, nd.p2, nd.w, nd.delta, x1, x2, r)


def rho_at(g: ConformalMetric, x: SpherePoint, eps1: float = DEFAULT_EPSILON1,
           allow_infinite: bool = True) -> float:
    """Concentration radius at ``x``; ``math.inf`` when the total mass is below ``eps1/2``."""
    if not eps1 > 0:
        raise ValueError("eps1 must be positive")
    nd = _nodes(g)
    target = 0.5 * eps1
    if nd.total < target:
        if allow_infinite:
            return math.inf
        raise MassDeficient(f"total area {nd.total:.6g} is below eps1/2 = {target:.6g}", area=nd.total)
    x1, x2 = x.spinor()
    return kernels.rho_bisect(nd.p1, nd.p2, nd.w, nd.delta, x1, x2, target, 1e-7 * eps1)


@dataclass
class ConcentrationProfile:
    epsilon1: float
    samples: list
    rho_global: float
    argmin: SpherePoint


def _ring(center: SpherePoint, radius: float, count: int = 8):
    """``count`` points at geodesic distance ``radius`` around ``center``."""
    c = center.as_array()
    a = np.array([1.0, 0.0, 0.0]) if abs(c[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(c, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    out = []
    for k in range(count):
        phi = 2 * math.pi * k / count
        v = math.cos(radius) * c + math.sin(radius) * (math.cos(phi) * e1 + math.sin(phi) * e2)
        out.append(SpherePoint.from_array(v))
    return out


def rho_global(g: ConformalMetric, eps1: float = DEFAULT_EPSILON1, count: int = 1000,
               rounds: int = 3) -> ConcentrationProfile:
    """``inf_x rho(x)``: Fibonacci-spiral search, then shrinking local refinement."""
    area = _nodes(g).total
    if area < eps1:
        raise MassDeficient(f"area {area:.6g} is below eps1 = {eps1}", area=area)
    samples = []
    best, best_val = None, math.inf
    for v in fibonacci_points(count):
        p = SpherePoint.from_array(v)
        val = rho_at(g, p, eps1)
        samples.append((p, val))
        if val < best_val:
            best, best_val = p, val
    radius = math.sqrt(4.0 * math.pi / count)
    for _ in range(rounds):
        centre = best
        for p in _ring(centre, radius) + _ring(centre, 0.5 * radius):
            val = rho_at(g, p, eps1)
            samples.append((p, val))
            if val < best_val:
                best, best_val = p, val
        radius /= 3.0
    return ConcentrationProfile(eps1, samples, best_val, best)


# --------------------------------------------------------------------------- normalize

@dataclass
class NormalizationResult:
    sigma: MobiusTransform
    u_prime_sup: float
    rho_after: float
    iterations: int
    converged: bool
    rho_before: float = math.nan
    center_norm: float = math.nan
    metric: ConformalMetric | None = field(default=None, repr=False)


def _golden_section(fn, lo, hi, tol=1e-5):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def _centering_step(g, sigma):
    """One damped centring step: best ``dilation_at(c/|c|, s)``, ``s`` in the scale range."""
    cur = g.pullback(sigma)
    c = cur.center_of_mass()
    p = SpherePoint.from_array(c)
    cache = {}

    def cost(log_s):
        tau = dilation_at(p, math.exp(log_s))
        m = g.pullback(sigma @ tau)
        val = float(np.linalg.norm(m.center_of_mass()))
        cache[log_s] = (val, tau)
        return val

    best = _golden_section(cost, math.log(SCALE_RANGE[0]), math.log(SCALE_RANGE[1]))
    cost(best)
    return sigma @ cache[best][1]


def normalize(g: ConformalMetric, eps1: float = DEFAULT_EPSILON1, max_iter: int = 30,
              strategy: str = "centering", raise_on_failure: bool = False,
              rho_before: float | None = None) -> NormalizationResult:
    """Möbius-normalize ``g`` by centring its area measure.

    Returns the composed ``sigma`` with ``sigma^* g = e^{2u'} g_round``,
    ``sup|u'|`` and the concentration radius of ``sigma^* g``.
    """
    area = _nodes(g).total
    if area < eps1:
        raise MassDeficient(f"area {area:.6g} is below eps1 = {eps1}", area=area)
    if rho_before is None:
        rho_before = rho_global(g, eps1).rho_global
    sigma = MobiusTransform.identity()
    it = 0
    cnorm = float(np.linalg.norm(g.center_of_mass()))
    if strategy == "centering":
        while cnorm > CENTER_TOL and it < max_iter:
            sigma = _centering_step(g, sigma)
            it += 1
            cnorm = float(np.linalg.norm(g.pullback(sigma).center_of_mass()))
    elif strategy == "nelder_mead":
        if cnorm > CENTER_TOL:
            def sigma_of(b):
                nb = float(np.linalg.norm(b))
                if nb < 1e-12:
                    return MobiusTransform.identity()
                return dilation_at(SpherePoint.from_array(b), math.exp(-nb))

            def cost(b):
                return float(np.linalg.norm(g.pullback(sigma_of(b)).center_of_mass()))

            res = minimize(cost, np.zeros(3), method="Nelder-Mead",
                           options={"maxiter": 40 * max_iter, "xatol": 1e-6, "fatol": 1e-7,
                                    "initial_simplex": np.vstack([np.zeros(3), 0.5 * np.eye(3)])})
            sigma = sigma_of(res.x)
            it = int(res.nit)
            cnorm = float(res.fun)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    converged = cnorm <= CENTER_TOL
    gp = g.pullback(sigma)
    rho_after = rho_before if sigma.is_identity() else rho_global(gp, eps1).rho_global
    result = NormalizationResult(sigma, gp.sup_abs_u(), rho_after, it,
                                 converged, rho_before, cnorm, gp)
    if not converged and raise_on_failure:
        raise NoConvergence(f"centre of mass still {cnorm:.3g} after {it} iterations", result=result)
    return result


# --------------------------------------------------------------------------- blow-up

def _chart_points(x: SpherePoint, zeta):
    """Sphere points of the stereographic chart centred at ``x`` (``x`` at ``zeta = 0``)."""
    back = rotation_to_origin(x).inverse()
    z1 = np.asarray(zeta, dtype=complex)
    return Points(*back.apply_spinor(z1, np.ones_like(z1)))


def chart_factor(g: ConformalMetric, x: SpherePoint, radius: float, n: int = 257) -> DiskField:
    """``v = u∘lift + log(2/(1+|z|^2))`` on ``D_radius`` of the chart centred at ``x``."""
    X, Y = grid_coords(n, radius)
    pts = _chart_points(x, X + 1j * Y)
    v = g.evaluate(pts) + math.log(2.0) - np.log1p(X * X + Y * Y)
    return DiskField(v, radius)


def blow_up(g: ConformalMetric, x: SpherePoint, t: float, R: float, n: int = 257) -> DiskField:
    """``v'(z) = v(t z) + log t`` on ``D_R`` for the chart factor ``v`` centred at ``x``."""
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    if not g.is_analytic:
        src_h = min(c.h for c in g.atlas.charts)
        if 2.0 * R * t / src_h < 8:
            raise ResolutionTooCoarse(
                f"D_R at scale t={t:g} spans fewer than 8 source grid steps", max_usable=None)
    X, Y = grid_coords(n, R)
    tz = t * (X + 1j * Y)
    pts = _chart_points(x, tz)
    v = g.evaluate(pts) + math.log(2.0) - np.log1p(np.abs(tz) ** 2) + math.log(t)
    return DiskField(v, R)


def blow_up_residual(g: ConformalMetric, x: SpherePoint, t: float, vp: DiskField) -> float:
    X, Y = vp.coords
    K = g.curvature_at(_chart_points(x, t * (X + 1j * Y)))
    return fd_residual(vp, vp.like(np.broadcast_to(K, X.shape)))


# --------------------------------------------------------------------------- bubble

def bubble_value(x, y, x0=(0.0, 0.0), scale: float = 1.0):
    """``log(4 scale / (4 + scale^2 |x - x0|^2))``; ``scale = 1`` is the standard bubble."""
    r2 = (np.asarray(x) - x0[0]) ** 2 + (np.asarray(y) - x0[1]) ** 2
    return math.log(scale) - np.log1p(0.25 * scale * scale * r2)


def bubble_density(x, y, x0=(0.0, 0.0)):
    return np.exp(2.0 * bubble_value(x, y, x0))


def bubble_residual(x, y, x0=(0.0, 0.0)):
    """Analytic residual of ``-Δv = e^{2v}`` for the standard bubble (identically 0)."""
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


def standard_bubble(x0=(0.0, 0.0), R: float = 4.0, n: int = 257) -> DiskField:
    return DiskField.from_function(lambda x, y: bubble_value(x, y, x0), n, R)


def standard_bubble_mass(R: float) -> float:
    """Closed form of ``∫_{D_R(x0)} e^{2v}``."""
    return 4.0 * math.pi * R * R / (4.0 + R * R)


def bubble_mass_quadrature(R: float) -> float:
    """``∫_{D_R} e^{2v}`` by adaptive radial quadrature of the closed-form density."""
    val, _ = quad(lambda r: 2.0 * math.pi * r * 16.0 / (4.0 + r * r) ** 2, 0.0, R,
                  epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _peak(v: DiskField):
    """Sub-grid location and value of the maximum of ``v`` (separable parabola fit)."""
    vals = np.where(v.mask, v.values, -np.inf)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    X, Y = v.coords
    n, h = v.n, v.h
    off, peak = [0.0, 0.0], float(v.values[i, j])
    corr = 0.0
    for axis, (a, b, c) in enumerate((
            (v.values[i, j - 1], v.values[i, j], v.values[i, j + 1]) if 0 < j < n - 1 else (None,) * 3,
            (v.values[i - 1, j], v.values[i, j], v.values[i + 1, j]) if 0 < i < n - 1 else (None,) * 3)):
        if a is None:
            continue
        den = a - 2.0 * b + c
        if den < 0:
            s = 0.5 * (a - c) / den
            off[axis] = s * h
            corr += -0.125 * (a - c) ** 2 / den
    return (float(X[i, j] + off[0]), float(Y[i, j] + off[1])), peak + corr


def bubble_deviation(vp: DiskField) -> float:
    """Half the oscillation of ``v' - bubble`` on ``D_R`` after recentring at the peak.

    The reference bubble takes its centre from the sub-grid peak of ``v'``
    and its scale from the peak value (``v_scale(center) = log scale``);
    the additive constant is optimal in sup norm.
    """
    x0, top = _peak(vp)
    X, Y = vp.coords
    diff = vp.values - bubble_value(X, Y, x0, math.exp(top))
    d = diff[vp.mask]
    return float(0.5 * (d.max() - d.min()))


@dataclass
class BubbleReport:
    center: SpherePoint
    t: float
    v_prime: DiskField = field(repr=False)
    mass: float
    bubble_deviation: float
    pde_residual: float
    rho: float = math.nan


def bubble_extract(g: ConformalMetric, eps1: float = DEFAULT_EPSILON1, R: float = 4.0,
                   n: int = 257, profile: ConcentrationProfile | None = None) -> BubbleReport:
    """Blow up ``g`` at its concentration point on the mass-matched scale.

    ``t`` is the chart radius about the argmin with ``∫_{D_t} e^{2v} = eps1``;
    in the centred chart ``D_t`` is the round ball of radius ``2 arctan t``.
    """
    area = _nodes(g).total
    if area < 0.5 * eps1:
        raise MassDeficient(f"area {area:.6g} is below eps1/2", area=area)
    prof = profile or rho_global(g, eps1)
    x = prof.argmin
    r = rho_at(g, x, 2.0 * eps1)
    if not math.isfinite(r):
        raise MassDeficient(f"area {area:.6g} is below eps1 = {eps1}", area=area)
    t = min(math.tan(0.5 * r), 1.0)
    vp = blow_up(g, x, t, R, n)
    return BubbleReport(x, t, vp, vp.integrate(np.exp(2.0 * vp.values)), bubble_deviation(vp),
                        blow_up_residual(g, x, t, vp), prof.rho_global)


# --------------------------------------------------------------------------- sequences

FAMILIES = ("cylinder_sphere", "flat_neck_sphere", "dilated_round", "perturbed_round")
DIAGNOSTIC_FIELDS = ("family", "k", "n", "epsilon1", "area", "entropy", "dev1", "rho_before",
                     "rho_after", "u_prime_sup", "diameter", "bubble_deviation", "error")
DILATION_CENTER = SpherePoint(0.48, -0.36, 0.8)


def build_member(family: str, k, n: int = 257, seed: int = 0) -> ConformalMetric:
    if family == "cylinder_sphere":
        return make_cylinder_sphere(int(k), n)
    if family == "flat_neck_sphere":
        return make_flat_neck_sphere(int(k), n)
    if family == "dilated_round":
        return make_dilated_round(DILATION_CENTER, float(k), n)
    if family == "perturbed_round":
        return make_perturbed_round(seed, float(k), n)
    raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")


def diagnose(family: str, k, n: int = 257, eps1: float = DEFAULT_EPSILON1, R: float = 4.0,
             seed: int = 0, diameter: bool = True) -> dict:
    row = {f: "" for f in DIAGNOSTIC_FIELDS}
    row.update(family=family, k=k, n=n, epsilon1=eps1)
    try:
        g = build_member(family, k, n, seed)
        rep = g.functionals()
        row.update(area=rep.area, entropy=rep.entropy, dev1=rep.dev1)
        prof = rho_global(g, eps1)
        row["rho_before"] = prof.rho_global
        norm = normalize(g, eps1, rho_before=prof.rho_global)
        row.update(rho_after=norm.rho_after, u_prime_sup=norm.u_prime_sup)
        if diameter:
            row["diameter"] = g.diameter_estimate()
        row["bubble_deviation"] = bubble_extract(g, eps1, R, profile=prof).bubble_deviation
        if not norm.converged:
            row["error"] = f"normalize did not converge (|c|={norm.center_norm:.3g})"
    except (ConflabError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sequence_diagnostics(family: str, k_values, n: int = 257, eps1: float = DEFAULT_EPSILON1,
                         R: float = 4.0, seed: int = 0, diameter: bool = True, timings=None):
    """One diagnostic row per ``k``; failures land in the ``error`` column."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")
    rows = []
    for k in k_values:
        t0 = time.perf_counter()
        rows.append(diagnose(family, k, n, eps1, R, seed, diameter))
        if timings is not None:
            timings.append({"family": family, "k": k, "seconds": time.perf_counter() - t0})
    return rows


def write_diagnostics_csv(rows, fh):
    w = csv.DictWriter(fh, fieldnames=DIAGNOSTIC_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
