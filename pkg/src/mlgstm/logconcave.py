"""Exact draws from one-dimensional densities proportional to

    exp{ a*x - sum_j exp(b_j*x + logk_j) },

which is the form every conditional log-gamma density takes along a line.
The log density is concave, so a three-piece tangent envelope (left tail,
flat top at the mode, right tail) gives a simple rejection sampler. All
functions work on P independent problems at once; rows are padded with
b = 0 and logk = -inf.
"""
from __future__ import annotations

import math

import numpy as np

_MAX_NEWTON = 200
_MAX_TRIES = 200


def _derivs(x, a, b, logk):
    e = np.exp(b * x[:, None] + logk)
    h = a * x - e.sum(axis=1)
    g = a - (b * e).sum(axis=1)
    hh = -(b * b * e).sum(axis=1)
    return h, g, hh


def log_density(x, a, b, logk):
    """Unnormalized log density at x (one point per problem)."""
    with np.errstate(over="ignore", invalid="ignore"):
        return a * x - np.exp(b * x[:, None] + logk).sum(axis=1)


def _balance(x, a, b, logk):
    """phi(x) = log(up-slope) - log(down-slope) and its derivative.

    The derivative of the log density is A(x) - B(x) with A collecting the
    positive pieces (a+ and rows with b < 0) and B the negative ones. phi has
    the same root, is decreasing, and is close to linear in x far from the
    mode, so Newton on phi converges from poor starting points.
    """
    P = x.shape[0]
    t = np.log(np.abs(b)) + b * x[:, None] + logk
    la = np.log(np.maximum(a, 0.0))[:, None]
    lb = np.log(np.maximum(-a, 0.0))[:, None]
    zero = np.zeros((P, 1))
    TA = np.concatenate([la, np.where(b < 0, t, -np.inf)], axis=1)
    TB = np.concatenate([lb, np.where(b > 0, t, -np.inf)], axis=1)
    BB = np.concatenate([zero, b], axis=1)
    out = []
    for T in (TA, TB):
        mx = T.max(axis=1)
        safe = np.where(np.isfinite(mx), mx, 0.0)
        w = np.exp(T - safe[:, None])
        tot = w.sum(axis=1)
        out.append((safe + np.log(tot), (w * BB).sum(axis=1) / tot))
    (logA, dA), (logB, dB) = out
    return logA - logB, dA - dB


def _find_mode(a, b, logk, x0, tol):
    P = a.shape[0]
    x = np.zeros(P) if x0 is None else np.array(x0, dtype=float).reshape(P)
    x[~np.isfinite(x)] = 0.0
    lo = np.full(P, -np.inf)
    hi = np.full(P, np.inf)
    span = np.ones(P)
    done = np.zeros(P, dtype=bool)
    idx = np.arange(P)
    for _ in range(_MAX_NEWTON):
        act = idx[~done]
        if act.size == 0:
            break
        xa = x[act]
        phi, dphi = _balance(xa, a[act], b[act], logk[act])
        pos = phi > 0
        lo[act] = np.where(pos, np.maximum(lo[act], xa), lo[act])
        hi[act] = np.where(pos, hi[act], np.minimum(hi[act], xa))
        newton = xa - phi / dphi
        l, h = lo[act], hi[act]
        close = np.isfinite(newton) & (np.abs(newton - xa) <= tol * (1.0 + np.abs(xa)))
        close |= phi == 0
        bad = ~np.isfinite(newton) | (newton <= l) | (newton >= h)
        both = np.isfinite(l) & np.isfinite(h)
        sp = span[act]
        fallback = np.where(both, 0.5 * (l + h), np.where(np.isfinite(h), xa - sp, xa + sp))
        span[act] = np.where(bad & ~both & ~close, 2.0 * sp, sp)
        xn = np.where(close, np.where(phi == 0, xa, newton), np.where(bad, fallback, newton))
        tight = both & (h - l <= tol * (1.0 + np.abs(xa)))
        x[act] = xn
        done[act] = close | tight
    return x


def _check_proper(a, b, logk):
    live = np.isfinite(logk) & (b != 0)
    up = np.any(live & (b > 0), axis=1) | (a < 0)
    down = np.any(live & (b < 0), axis=1) | (a > 0)
    if not np.all(up & down):
        raise ValueError("density is not normalizable: a tail is unbounded")


def find_mode(a, b, logk, x0=None, tol=1e-11):
    """Mode of each problem (Newton on the balance function inside a bracket)."""
    a = np.asarray(a, dtype=float).reshape(-1)
    P = a.shape[0]
    b = np.asarray(b, dtype=float).reshape(P, -1)
    logk = np.asarray(logk, dtype=float).reshape(P, -1)
    _check_proper(a, b, logk)
    with np.errstate(all="ignore"):
        return _find_mode(a, b, logk, x0, tol)


def sample(a, b, logk, rng: np.random.Generator, x0=None) -> np.ndarray:
    """One exact draw for each of the P problems."""
    a = np.asarray(a, dtype=float).reshape(-1)
    P = a.shape[0]
    b = np.asarray(b, dtype=float).reshape(P, -1)
    logk = np.asarray(logk, dtype=float).reshape(P, -1)
    if P > 1:
        _check_proper(a, b, logk)
    with np.errstate(all="ignore"):
        if P == 1:
            keep = np.isfinite(logk[0]) & (b[0] != 0)
            bk = b[0][keep]
            if not ((a[0] < 0 or np.any(bk > 0)) and (a[0] > 0 or np.any(bk < 0))):
                raise ValueError("density is not normalizable: a tail is unbounded")
            start = None if x0 is None else float(np.asarray(x0).reshape(-1)[0])
            return np.array([_sample_one(float(a[0]), b[0][keep], logk[0][keep], rng, start)])
        return _sample(a, b, logk, rng, x0)


def _half(x, la, lt, bb):
    """log of e^la + sum exp(lt + bb*x) and the bb-weighted share of the sum."""
    t = lt + bb * x
    m = la
    if t.size:
        m = max(m, float(t.max()))
    if m == -math.inf:
        return -math.inf, 0.0
    w = np.exp(t - m)
    tot = float(w.sum()) + (math.exp(la - m) if la > -math.inf else 0.0)
    return m + math.log(tot), float(w @ bb) / tot


def _mode_one(a, b, logk, x, tol=1e-11):
    pos = b > 0
    neg = b < 0
    bp, bn = b[pos], b[neg]
    lp = np.log(bp) + logk[pos]
    ln = np.log(-bn) + logk[neg]
    la = math.log(a) if a > 0 else -math.inf
    lb = math.log(-a) if a < 0 else -math.inf
    lo, hi, span = -math.inf, math.inf, 1.0
    for _ in range(_MAX_NEWTON):
        logA, dA = _half(x, la, ln, bn)
        logB, dB = _half(x, lb, lp, bp)
        phi = logA - logB
        dphi = dA - dB
        if phi == 0:
            return x
        if phi > 0:
            lo = max(lo, x)
        else:
            hi = min(hi, x)
        newton = x - phi / dphi if dphi != 0 else math.nan
        if math.isfinite(newton) and abs(newton - x) <= tol * (1.0 + abs(x)):
            return newton
        if not math.isfinite(newton) or newton <= lo or newton >= hi:
            if math.isfinite(lo) and math.isfinite(hi):
                newton = 0.5 * (lo + hi)
            else:
                newton = x - span if math.isfinite(hi) else x + span
                span *= 2.0
        if math.isfinite(lo) and math.isfinite(hi) and hi - lo <= tol * (1.0 + abs(x)):
            return newton
        x = newton
    return x


def _derivs_one(x, a, b, logk):
    e = np.exp(b * x + logk)
    be = b * e
    return a * x - float(e.sum()), a - float(be.sum()), -float(be @ b)


def _sample_one(a, b, logk, rng, x0):
    if b.size == 0:
        raise ValueError("improper one-dimensional density (no exponential terms)")
    mode = _mode_one(a, b, logk, 0.0 if x0 is None or not math.isfinite(x0) else x0)
    h_m, _, hh = _derivs_one(mode, a, b, logk)
    s = 1.0 / math.sqrt(max(-hh, 1e-300))
    c = 1.0
    for _ in range(60):
        xl, xr = mode - c * s, mode + c * s
        hl, gl, _ = _derivs_one(xl, a, b, logk)
        hr, gr, _ = _derivs_one(xr, a, b, logk)
        if gl > 0 and gr < 0 and math.isfinite(hl) and math.isfinite(hr):
            break
        c *= 2.0
    else:
        raise FloatingPointError("could not build a rejection envelope")
    z1 = min(xl + (h_m - hl) / gl, mode)
    z2 = max(xr + (h_m - hr) / gr, mode)
    wl, wm, wr = 1.0 / gl, z2 - z1, -1.0 / gr
    tot = wl + wm + wr
    for _ in range(_MAX_TRIES):
        u, v = rng.random(2)
        u *= tot
        if u < wl:
            x = z1 - rng.standard_exponential() / gl
            env = h_m - gl * (z1 - x)
        elif u < wl + wm:
            x = z1 + (u - wl)
            env = h_m
        else:
            x = z2 - rng.standard_exponential() / gr
            env = h_m + gr * (x - z2)
        hx = a * x - float(np.exp(b * x + logk).sum())
        if v > 0 and math.log(v) <= hx - env:
            return x
    raise FloatingPointError("rejection sampler did not accept within the try limit")


def _sample(a, b, logk, rng, x0):
    P = a.shape[0]
    mode = _find_mode(a, b, logk, x0, 1e-11)
    h_m, _, hh = _derivs(mode, a, b, logk)
    s = 1.0 / np.sqrt(np.maximum(-hh, 1e-300))

    # tangent points either side of the mode; widen where the slope there is
    # not strictly signed (flat-topped or badly scaled problems)
    c = np.ones(P)
    for _ in range(60):
        xl = mode - c * s
        xr = mode + c * s
        hl, gl, _ = _derivs(xl, a, b, logk)
        hr, gr, _ = _derivs(xr, a, b, logk)
        ok = (gl > 0) & (gr < 0) & np.isfinite(hl) & np.isfinite(hr)
        if np.all(ok):
            break
        c = np.where(ok, c, 2.0 * c)
    else:
        raise FloatingPointError("could not build a rejection envelope")

    z1 = np.minimum(xl + (h_m - hl) / gl, mode)
    z2 = np.maximum(xr + (h_m - hr) / gr, mode)
    wl = 1.0 / gl
    wm = z2 - z1
    wr = -1.0 / gr
    tot = wl + wm + wr

    out = np.empty(P)
    pending = np.arange(P)
    for _ in range(_MAX_TRIES):
        n = pending.size
        if n == 0:
            return out
        u = rng.random(n) * tot[pending]
        e = rng.standard_exponential(n)
        v = rng.random(n)
        wl_p, wm_p, z1_p, z2_p = wl[pending], wm[pending], z1[pending], z2[pending]
        gl_p, gr_p, hm_p = gl[pending], gr[pending], h_m[pending]
        left = u < wl_p
        mid = ~left & (u < wl_p + wm_p)
        x = np.where(left, z1_p - e / gl_p, np.where(mid, z1_p + (u - wl_p), z2_p - e / gr_p))
        env = np.where(left, hm_p - gl_p * (z1_p - x),
                       np.where(mid, hm_p, hm_p + gr_p * (x - z2_p)))
        hx = a[pending] * x - np.exp(b[pending] * x[:, None] + logk[pending]).sum(axis=1)
        acc = np.log(v) <= hx - env
        out[pending[acc]] = x[acc]
        pending = pending[~acc]
    raise FloatingPointError("rejection sampler did not accept within the try limit")
