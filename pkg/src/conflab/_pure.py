"""Numpy implementations of the compiled kernels (same arguments, same results)."""

import numpy as np


def geodesic_distances(p1, p2, x1, x2):
    m = np.abs(p1 * x2 - p2 * x1)
    return 2.0 * np.arcsin(np.minimum(m, 1.0))


def _ramp(r, d, delta):
    return np.clip((r - d) / delta + 0.5, 0.0, 1.0)


def ball_mass(p1, p2, w, delta, x1, x2, r):
    d = geodesic_distances(p1, p2, x1, x2)
    return float(np.sum(w * _ramp(r, d, delta)))


def rho_bisect(p1, p2, w, delta, x1, x2, target, tol, max_iter=200, nbins=4096):
    wa = np.asarray(w, dtype=float)
    da = np.asarray(delta, dtype=float)
    det = p1 * x2 - p2 * x1
    sq = np.minimum(det.real ** 2 + det.imag ** 2, 1.0)
    bins = np.minimum((sq * nbins).astype(np.int64), nbins - 1)
    cum = np.cumsum(np.bincount(bins, weights=wa, minlength=nbins))
    hit = np.nonzero(cum >= target)[0]
    kb = int(hit[0]) if len(hit) else nbins - 1
    dmax = float(da.max())
    lo = max(2.0 * np.arcsin(np.sqrt(kb / nbins)) - 0.5 * dmax, 0.0)
    hi = min(2.0 * np.arcsin(np.sqrt(min((kb + 1) / nbins, 1.0))) + 0.5 * dmax, np.pi)
    s_in = np.sin(0.5 * (lo - 0.5 * dmax)) ** 2 if lo - 0.5 * dmax > 0 else -1.0
    s_out = np.sin(0.5 * (hi + 0.5 * dmax)) ** 2 if hi + 0.5 * dmax < np.pi else 2.0
    base = float(np.sum(wa[sq <= s_in]))
    mid_band = (sq > s_in) & (sq < s_out)
    d = 2.0 * np.arcsin(np.sqrt(sq[mid_band]))
    wa, da = wa[mid_band], da[mid_band]
    half = 0.5 * da
    inside = d + half <= lo
    base += float(np.sum(wa[inside]))
    keep = ~inside & ~(d - half >= hi)
    d, wa, da = d[keep], wa[keep], da[keep]
    bw = (hi - lo) / nbins
    if bw > 0.0:
        half = 0.5 * da
        lo_bins = np.clip(((d - half - lo) / bw).astype(np.int64), 0, nbins - 1)
        hi_bins = np.clip(((d + half - lo) / bw).astype(np.int64), 0, nbins - 1)
        cum_lo = base + np.cumsum(np.bincount(lo_bins, weights=wa, minlength=nbins))
        cum_hi = base + np.cumsum(np.bincount(hi_bins, weights=wa, minlength=nbins))
        hit = np.nonzero(cum_lo >= target)[0]
        new_lo = lo + int(hit[0]) * bw if len(hit) else lo
        hit = np.nonzero(cum_hi >= target)[0]
        new_hi = min(lo + (int(hit[0]) + 1) * bw, hi) if len(hit) else hi
        lo, hi = new_lo, new_hi
        inside = d + half <= lo
        base += float(np.sum(wa[inside]))
        keep = ~inside & ~(d - half >= hi)
        d, wa, da = d[keep], wa[keep], da[keep]
    mid = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        mass = base + float(np.sum(wa * _ramp(mid, d, da)))
        if abs(mass - target) <= tol:
            break
        if mass < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
        half = 0.5 * da
        below = d + half <= lo
        above = d - half >= hi
        base += float(np.sum(wa[below]))
        keep = ~(below | above)
        d, wa, da = d[keep], wa[keep], da[keep]
    return mid


def log_potential(sx, sy, sw, tx, ty, self_value, coincide2, chunk=512):
    out = np.empty(len(tx))
    for start in range(0, len(tx), chunk):
        x = tx[start:start + chunk, None]
        y = ty[start:start + chunk, None]
        r2 = (x - sx[None, :]) ** 2 + (y - sy[None, :]) ** 2
        with np.errstate(divide="ignore"):
            lg = 0.5 * np.log(r2)
        lg[r2 <= coincide2] = self_value
        out[start:start + chunk] = lg @ sw
    return out
