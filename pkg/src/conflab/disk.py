"""Elliptic testbed on a planar disk.

Grid fields live on a uniform ``n x n`` grid over ``[-R, R]^2`` with the disk
``|x| <= R`` as the active region.  Integrals over a disk use node weights
``clip((r - |x|)/h + 1/2, 0, 1) h^2``, a linear ramp across the rim that keeps
the quadrature second order for smooth integrands.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.signal import fftconvolve
from scipy.sparse.linalg import cg

from . import kernels
from .errors import (
    DegenerateSource,
    EmptyFamily,
    HypothesisViolated,
    InvalidExponent,
    SolverDivergence,
)


class DiskField:
    """Samples of a function on the grid covering the disk of radius ``radius``."""

    def __init__(self, values, radius: float = 1.0):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("values must be a square 2-D array")
        n = values.shape[0]
        if n < 65 or n % 2 == 0:
            raise ValueError(f"grid size must be odd and >= 65, got {n}")
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.values = values
        self.radius = float(radius)
        if not np.all(np.isfinite(values[self.mask])):
            raise ValueError("field values must be finite on the disk")

    @classmethod
    def from_function(cls, fn, n: int = 257, radius: float = 1.0):
        x, y = grid_coords(n, radius)
        return cls(np.broadcast_to(fn(x, y), x.shape).astype(float), radius)

    @classmethod
    def constant(cls, c, n: int = 257, radius: float = 1.0):
        return cls(np.full((n, n), float(c)), radius)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def h(self):
        return 2.0 * self.radius / (self.n - 1)

    @property
    def coords(self):
        return grid_coords(self.n, self.radius)

    @property
    def r(self):
        x, y = self.coords
        return np.hypot(x, y)

    @property
    def mask(self):
        return self.r <= self.radius + 1e-12

    def weights(self, r=None):
        """Quadrature weights of the disk of radius ``r`` (default: the whole disk)."""
        r = self.radius if r is None else r
        return np.clip((r - self.r) / self.h + 0.5, 0.0, 1.0) * self.h ** 2

    def integrate(self, values=None, r=None):
        v = self.values if values is None else values
        return float(np.sum(self.weights(r) * v))

    def to_dict(self):
        return {"kind": "disk_field", "n": self.n, "radius": self.radius,
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["values"], dtype=float), float(d.get("radius", 1.0)))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def like(self, values):
        return DiskField(values, self.radius)

    def __add__(self, other):
        return self.like(self.values + _vals(other))

    def __sub__(self, other):
        return self.like(self.values - _vals(other))

    def __mul__(self, a):
        return self.like(self.values * _vals(a))

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)


def _vals(x):
    return x.values if isinstance(x, DiskField) else x


def grid_coords(n, radius=1.0):
    a = np.linspace(-radius, radius, n)
    return np.meshgrid(a, a)


def laplacian(f: DiskField):
    """5-point Laplacian; zero on the outer ring of the grid."""
    v = f.values
    out = np.zeros_like(v)
    out[1:-1, 1:-1] = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2]
                       - 4.0 * v[1:-1, 1:-1]) / f.h ** 2
    return out


def gradient_norm(u: DiskField):
    """``|grad u|`` by centred differences (one-sided on the grid edge)."""
    gy, gx = np.gradient(u.values, u.h)
    return np.hypot(gx, gy)


# --------------------------------------------------------------------------- reports

@dataclass
class EstimateReport:
    op: str
    lhs: float
    rhs_bound: float
    constant_estimate: float
    holds: bool | None = None
    params: dict = field(default_factory=dict)
    n: int = 0

    CSV_FIELDS = ("op", "params", "lhs", "rhs_bound", "constant_estimate", "holds", "n")

    def csv_row(self):
        return {
            "op": self.op,
            "params": ";".join(f"{k}={_short(v)}" for k, v in sorted(self.params.items())),
            "lhs": repr(float(self.lhs)),
            "rhs_bound": repr(float(self.rhs_bound)),
            "constant_estimate": repr(float(self.constant_estimate)),
            "holds": "" if self.holds is None else str(bool(self.holds)).lower(),
            "n": self.n,
        }


def _short(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_short(x) for x in v) + "]"
    return str(v)


def write_estimate_csv(reports, fh):
    w = csv.DictWriter(fh, fieldnames=EstimateReport.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.csv_row())


# --------------------------------------------------------------------------- operators

def self_cell_log(h):
    """Mean of ``log|y|`` over the disk of area ``h^2`` centred at 0."""
    return math.log(h / math.sqrt(math.pi)) - 0.5


def newtonian_potential(f: DiskField, method: str = "fft") -> DiskField:
    """``I(f)(x) = ∫ f(y) log|x - y| dy`` over the disk, sampled on the whole grid.

    Both methods evaluate the same lattice sum; ``"direct"`` runs the pairwise
    kernel, ``"fft"`` does the identical convolution by FFT.
    """
    src = f.values * f.weights()
    h = f.h
    if method == "direct":
        x, y = f.coords
        keep = src != 0
        vals = kernels.log_potential(x[keep], y[keep], src[keep], x.ravel(), y.ravel(),
                                     self_cell_log(h), 0.25 * h * h)
        return f.like(vals.reshape(x.shape))
    if method != "fft":
        raise ValueError(f"unknown method {method!r}")
    n = f.n
    m = np.arange(-(n - 1), n) * h
    mx, my = np.meshgrid(m, m)
    r = np.hypot(mx, my)
    r[n - 1, n - 1] = 1.0
    ker = np.log(r)
    ker[n - 1, n - 1] = self_cell_log(h)
    return f.like(fftconvolve(src, ker, mode="valid"))


class _DirichletSystem:
    """Symmetric Shortley–Weller discretisation of ``-Δ`` with zero data on ``|x| = R``.

    A neighbour across the circle at fractional distance ``theta`` (exact,
    along the grid line) contributes ``1/(theta h^2)`` to the diagonal, which
    keeps the matrix symmetric positive definite.
    """

    def __init__(self, n, radius):
        h = 2.0 * radius / (n - 1)
        x, y = grid_coords(n, radius)
        inside = np.hypot(x, y) < radius * (1.0 - 1e-12)
        idx = np.full((n, n), -1, dtype=np.int64)
        idx[inside] = np.arange(int(inside.sum()))
        I, J = np.nonzero(inside)
        me = idx[I, J]
        N = len(me)
        diag = np.zeros(N)
        rows, cols = [], []
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = idx[I + di, J + dj]
            ok = nb >= 0
            rows.append(me[ok])
            cols.append(nb[ok])
            diag[me[ok]] += 1.0 / h ** 2
            bx, by = x[I[~ok], J[~ok]], y[I[~ok], J[~ok]]
            if dj:
                gap = np.sqrt(radius ** 2 - by ** 2) - np.abs(bx)
            else:
                gap = np.sqrt(radius ** 2 - bx ** 2) - np.abs(by)
            diag[me[~ok]] += 1.0 / (gap * h)
        r = np.concatenate(rows + [np.arange(N)])
        c = np.concatenate(cols + [np.arange(N)])
        d = np.concatenate([np.full(len(r) - N, -1.0 / h ** 2), diag])
        self.A = sparse.csr_matrix((d, (r, c)), shape=(N, N))
        self.precond = sparse.diags(1.0 / diag)
        self.inside = inside
        self.n = n

    def solve(self, rhs, rtol):
        b = rhs[self.inside]
        out = np.zeros((self.n, self.n))
        if not np.any(b):
            return out
        sol, info = cg(self.A, b, rtol=rtol, atol=0.0, M=self.precond, maxiter=20 * self.n)
        if info != 0:
            raise SolverDivergence(f"conjugate gradient did not reach rtol={rtol} in {20 * self.n} iterations")
        out[self.inside] = sol
        return out


_SYSTEMS: dict = {}


def _system(n, radius):
    key = (n, float(radius))
    if key not in _SYSTEMS:
        if len(_SYSTEMS) > 4:
            _SYSTEMS.clear()
        _SYSTEMS[key] = _DirichletSystem(n, radius)
    return _SYSTEMS[key]


def dirichlet_solve(f: DiskField, rtol: float = 1e-12) -> DiskField:
    """Solve ``-Δu = f`` in the disk with ``u = 0`` on its boundary (zero outside)."""
    return f.like(_system(f.n, f.radius).solve(f.values, rtol))


def l1_norm(f: DiskField) -> float:
    return f.integrate(np.abs(f.values))


def l1logl1_norm(f: DiskField) -> float:
    a = np.abs(f.values)
    return f.integrate(a * np.log1p(a))


def random_source(rng: np.random.Generator, n: int = 257, l1: float | None = None,
                  bumps: int = 3) -> DiskField:
    """Sum of Gaussian bumps of random sign in ``D_0.7``, scaled to ``||f||_1 = l1``.

    ``l1`` defaults to a uniform draw from ``[0.1, 1]``.
    """
    x, y = grid_coords(n)
    v = np.zeros_like(x)
    for _ in range(bumps):
        rad, ang = 0.7 * math.sqrt(rng.uniform()), rng.uniform(0, 2 * math.pi)
        cx, cy = rad * math.cos(ang), rad * math.sin(ang)
        w = rng.uniform(0.05, 0.3)
        v += rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0) * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w * w))
    f = DiskField(v)
    target = rng.uniform(0.1, 1.0) if l1 is None else l1
    return f * (target / l1_norm(f))


# --------------------------------------------------------------------------- estimates

def brezis_merle_check(f: DiskField, eps: float) -> EstimateReport:
    """Exponential integrability of the Dirichlet solution on the unit disk."""
    if not 0 < eps < 4 * math.pi:
        raise ValueError("eps must lie in (0, 4 pi)")
    norm = l1_norm(f)
    if norm <= 1e-12:
        raise DegenerateSource(f"||f||_1 = {norm:.3g} is too small for the exponent")
    u = dirichlet_solve(f)
    lhs = f.integrate(np.exp((4 * math.pi - eps) * np.abs(u.values) / norm))
    rhs = 4 * math.pi * (2.0 * f.radius) / eps ** 2
    return EstimateReport("brezis_merle", lhs, rhs, lhs / rhs, lhs <= rhs,
                          {"eps": float(eps), "l1": norm, "u_max": float(np.abs(u.values).max())}, f.n)


def _check_q(q):
    if not 0 < q < 2:
        raise InvalidExponent(f"q must lie in (0, 2), got {q}")


def lq_gradient_check(f: DiskField, q: float, radii=(0.125, 0.25, 0.5),
                      scaling: str = "literal") -> EstimateReport:
    """Scaled ``L^q`` gradient mass of the Dirichlet solution on balls about 0.

    ``scaling="literal"`` weights ``∫_{B_r} |grad u|^q`` by ``r^(2-q)``;
    ``"scale_invariant"`` uses ``r^(q-2)``, the weight under which the bound
    is invariant under ``u(x) -> u(tx)``.
    """
    _check_q(q)
    if any(not 0 < r <= 0.5 for r in radii):
        raise ValueError("radii must lie in (0, 1/2]")
    if scaling not in ("literal", "scale_invariant"):
        raise ValueError(f"unknown scaling {scaling!r}")
    norm = l1_norm(f)
    u = dirichlet_solve(f)
    g = gradient_norm(u) ** q
    expo = 2.0 - q if scaling == "literal" else q - 2.0
    per = []
    for r in radii:
        m = u.integrate(g, r)
        per.append(r ** expo * m)
    est = max(per) / norm if norm > 0 else 0.0
    return EstimateReport("lq_gradient", max(per), norm, est, None,
                          {"q": float(q), "radii": list(map(float, radii)), "scaling": scaling,
                           "scaled_mass": per, "l1": norm}, f.n)


def _inner_weights(f: DiskField):
    """Disk weights restricted to ``|x| <= R - 2h`` (away from boundary stencils)."""
    return f.weights(f.radius - 2.0 * f.h)


def osc_bound_check(f: DiskField, q: float, offset: DiskField | None = None) -> EstimateReport:
    """Oscillation plus ``L^2`` gradient on ``D_1/2`` against the driver.

    ``u`` is the Dirichlet solution of ``-Δu = f`` plus an optional harmonic
    ``offset``; ``c`` is the mean of ``u`` over ``D_1/2``.
    """
    _check_q(q)
    u = dirichlet_solve(f)
    if offset is not None:
        u = u + offset
    half = 0.5 * f.radius
    w_half = u.weights(half)
    c = float(np.sum(w_half * u.values) / np.sum(w_half))
    inner = u.r <= half
    grad = gradient_norm(u)
    osc = float(np.abs(u.values - c)[inner].max())
    l2 = math.sqrt(float(np.sum(w_half * grad ** 2)))
    lq = float(np.sum(_inner_weights(u) * grad ** q)) ** (1.0 / q)
    driver = 1.0 + l1logl1_norm(f) + lq
    lhs = osc + l2
    return EstimateReport("osc_bound", lhs, driver, lhs / driver, None,
                          {"q": float(q), "mean": c, "osc": osc, "grad_l2": l2, "grad_lq": lq}, f.n)


def fd_residual(u: DiskField, K: DiskField):
    """``max |-Δu - K e^(2u)|`` over nodes with ``|x| <= R - h``."""
    res = -laplacian(u) - K.values * np.exp(2.0 * u.values)
    sel = u.r <= u.radius - u.h + 1e-12
    return float(np.abs(res[sel]).max())


def _gate(family, eps, lam, budget, budget_name):
    if not family:
        raise EmptyFamily("the family is empty")
    stats = []
    for i, (u, K) in enumerate(family):
        res = fd_residual(u, K)
        if res > 1e-3:
            raise HypothesisViolated(f"member {i}: equation residual {res:.3g} > 1e-3",
                                     member=i, hypothesis="residual", value=res)
        mass = u.integrate(np.exp(2.0 * u.values))
        if mass > eps:
            raise HypothesisViolated(f"member {i}: area {mass:.4g} exceeds eps={eps}",
                                     member=i, hypothesis="area", value=mass)
        b = budget(u, K)
        if b > lam:
            raise HypothesisViolated(f"member {i}: {budget_name} {b:.4g} exceeds Lambda={lam}",
                                     member=i, hypothesis=budget_name, value=b)
        stats.append((res, mass, b))
    return stats


def epsilon_regularity_experiment(family, eps: float, lam: float) -> EstimateReport:
    """Local entropy ``∫_{D_1/2} |K|e^{2u} log(1 + |K|e^{2u})`` over a gated family."""

    def entropy(u, K):
        a = np.abs(K.values)
        return u.integrate(a * np.log1p(a) * np.exp(2.0 * u.values))

    stats = _gate(family, eps, lam, entropy, "entropy")
    vals = []
    for u, K in family:
        d = np.abs(K.values) * np.exp(2.0 * u.values)
        vals.append(u.integrate(d * np.log1p(d), 0.5 * u.radius))
    best = max(vals)
    return EstimateReport("epsilon_regularity", best, lam, best, None,
                          {"eps": float(eps), "Lambda": float(lam), "values": vals,
                           "max_residual": max(s[0] for s in stats),
                           "max_area": max(s[1] for s in stats),
                           "max_entropy": max(s[2] for s in stats)}, family[0][0].n)


def lp_regularity_experiment(family, eps: float, lam: float, p: float) -> EstimateReport:
    """``∫_{D_1/2} |K|^p e^{2pu}`` over a gated family."""
    if p < 1:
        raise InvalidExponent(f"p must be >= 1, got {p}")

    def budget(u, K):
        return u.integrate(np.abs(K.values) ** p * np.exp(2.0 * u.values))

    stats = _gate(family, eps, lam, budget, "lp_budget")
    vals = [u.integrate(np.abs(K.values) ** p * np.exp(2.0 * p * u.values), 0.5 * u.radius)
            for u, K in family]
    best = max(vals)
    return EstimateReport("lp_regularity", best, lam, best, None,
                          {"eps": float(eps), "Lambda": float(lam), "p": float(p), "values": vals,
                           "max_residual": max(s[0] for s in stats),
                           "max_area": max(s[1] for s in stats)}, family[0][0].n)


def scaled_bubble(t: float, n: int = 257, radius: float = 1.0):
    """``(v(t x) + log t, K = 1)`` for the standard bubble ``v = log(4/(4+|x|^2))``."""
    u = DiskField.from_function(lambda x, y: math.log(4.0 * t) - np.log(4.0 + t * t * (x * x + y * y)),
                                n, radius)
    return u, DiskField.constant(1.0, n, radius)


def bubble_family(eps: float = 0.05, members: int = 10, n: int = 257):
    """Scaled bubbles whose area on the unit disk runs up to ``0.9 eps``."""
    out = []
    for m in np.linspace(0.1, 0.9, members) * eps:
        # 4 pi t^2 / (4 + t^2) = m
        t = math.sqrt(4.0 * m / (4.0 * math.pi - m))
        out.append(scaled_bubble(t, n))
    return out
