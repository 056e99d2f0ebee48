"""Compiled inner loops. Random variates are always drawn by the caller."""

import math

import numpy as np
from numba import njit

NEWTON = 0
BISECTION = 1
FALLBACK = 2
NO_INFO = 3

PSEUDO_COUNT = 0.5
# Newton stops once a step is this small relative to the iterate
STEP_TOL = 1e-10


@njit(cache=True)
def log1pexp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@njit(cache=True)
def cond_loglik(y, m, off, w, c):
    s = 0.0
    for r in range(y.size):
        eta = off[r] + w[r] * c
        s += y[r] * eta - m[r] * log1pexp(eta)
    return s


@njit(cache=True)
def _grad_hess(y, m, off, w, c):
    g = 0.0
    h = 0.0
    for r in range(y.size):
        th = sigmoid(off[r] + w[r] * c)
        g += w[r] * (y[r] - m[r] * th)
        h -= w[r] * w[r] * m[r] * th * (1.0 - th)
    return g, h


@njit(cache=True)
def _gradient_shift(y, m, w):
    """Constant added to the score when the 1-D MLE is at +-infinity.

    Returns (shift, informative). The shift behaves like half a pseudo
    success (or failure) spread over the rows, which puts the centre of an
    intercept with no home runs at logit(1 / (2 * sum(m))).
    """
    g_lo = 0.0  # score as c -> -inf
    g_hi = 0.0  # score as c -> +inf
    wm = 0.0
    mm = 0.0
    for r in range(y.size):
        if w[r] > 0.0:
            g_lo += w[r] * y[r]
            g_hi += w[r] * (y[r] - m[r])
        elif w[r] < 0.0:
            g_lo += w[r] * (y[r] - m[r])
            g_hi += w[r] * y[r]
        if w[r] != 0.0:
            wm += abs(w[r]) * m[r]
            mm += m[r]
    if wm == 0.0:
        return 0.0, False
    if g_lo <= 0.0:
        return PSEUDO_COUNT * wm / mm, True
    if g_hi >= 0.0:
        return -PSEUDO_COUNT * wm / mm, True
    return 0.0, True


@njit(cache=True)
def _eval(y, m, off, w, c):
    """Log-likelihood, score and second derivative in one pass."""
    ll = 0.0
    g = 0.0
    h = 0.0
    for r in range(y.size):
        eta = off[r] + w[r] * c
        ex = math.exp(-abs(eta))
        if eta > 0.0:
            l1p = eta + math.log1p(ex)
            th = 1.0 / (1.0 + ex)
        else:
            l1p = math.log1p(ex)
            th = ex / (1.0 + ex)
        ll += y[r] * eta - m[r] * l1p
        g += w[r] * (y[r] - m[r] * th)
        h -= w[r] * w[r] * m[r] * th * (1.0 - th)
    return ll, g, h


@njit(cache=True)
def newton_center(y, m, off, w, c0, tol, max_iter):
    """Maximizer of the 1-D conditional log-likelihood.

    Returns (centre, second derivative at centre, status, log-likelihood at c0).
    """
    shift, informative = _gradient_shift(y, m, w)
    if not informative:
        return c0, 0.0, NO_INFO, cond_loglik(y, m, off, w, c0)
    c = c0 if math.isfinite(c0) else 0.0
    ll, g, h = _eval(y, m, off, w, c)
    ll0 = ll if c == c0 else -np.inf
    obj = ll + shift * c
    if not math.isfinite(obj):
        c = 0.0
        ll, g, h = _eval(y, m, off, w, c)
        obj = ll + shift * c
    for _ in range(max_iter):
        g += shift
        if abs(g) < tol:
            return c, h, NEWTON, ll0
        if h >= 0.0:
            break
        step = -g / h
        if abs(step) < STEP_TOL * (1.0 + abs(c)):
            return c + step, h, NEWTON, ll0
        # step halving keeps the concave objective increasing (up to rounding)
        slack = 1e-12 * (1.0 + abs(obj))
        accepted = False
        for _ in range(60):
            cand = c + step
            ll_n, g_n, h_n = _eval(y, m, off, w, cand)
            val = ll_n + shift * cand
            if val >= obj - slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        if cand == c:
            return c, h_n, NEWTON, ll0
        c = cand
        obj = val
        g = g_n
        h = h_n
    # bisection on the (decreasing) score
    lo = c0 if math.isfinite(c0) else 0.0
    hi = lo
    width = 1.0
    g_lo = _grad_hess(y, m, off, w, lo)[0] + shift
    found = False
    for _ in range(60):
        if g_lo > 0.0:
            hi = lo + width
            g_hi = _grad_hess(y, m, off, w, hi)[0] + shift
            if g_hi <= 0.0:
                found = True
                break
            lo = hi
            g_lo = g_hi
        else:
            hi = lo
            lo = hi - width
            g_lo = _grad_hess(y, m, off, w, lo)[0] + shift
            if g_lo > 0.0:
                found = True
                break
        width *= 2.0
    if not found:
        return c0, _grad_hess(y, m, off, w, c0)[1], FALLBACK, ll0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = _grad_hess(y, m, off, w, mid)[0] + shift
        if abs(gm) < tol or hi - lo < 1e-15 * max(1.0, abs(mid)):
            lo = mid
            hi = mid
            break
        if gm > 0.0:
            lo = mid
        else:
            hi = mid
    c = 0.5 * (lo + hi)
    return c, _grad_hess(y, m, off, w, c)[1], BISECTION, ll0


@njit(cache=True)
def gather(y, m, eta, rows, w, c):
    n = rows.size
    yy = np.empty(n)
    mm = np.empty(n)
    off = np.empty(n)
    for i in range(n):
        r = rows[i]
        yy[i] = y[r]
        mm[i] = m[r]
        off[i] = eta[r] - w[i] * c
    return yy, mm, off


@njit(cache=True)
def mh_coefficient(y, m, eta, rows, w, c, tau2, mult, lo, hi, z, logu, tol, max_iter, skip_empty):
    """One independence Metropolis-Hastings update of a single coefficient.

    The proposal is Normal(centre, sd^2) with the centre at the conditional
    MLE and ``sd = mult / sqrt(curvature + 1/tau2)``. ``eta`` (the full
    linear predictor) is updated in place on acceptance.

    Returns (value, accepted, centre, sd, status).
    """
    yy, mm, off = gather(y, m, eta, rows, w, c)
    center, h, status, ll_cur = newton_center(yy, mm, off, w, c, tol, max_iter)
    if status == NO_INFO:
        if skip_empty:
            return c, False, c, 0.0, status
        # likelihood is flat in c: propose from the prior
        center = 0.0
        sd = math.sqrt(tau2)
    else:
        sd = mult / math.sqrt(-h + 1.0 / tau2)
    prop = center + sd * z
    if not (lo < prop < hi):
        return c, False, center, sd, status
    log_ratio = (
        cond_loglik(yy, mm, off, w, prop) - ll_cur
        - 0.5 * (prop * prop - c * c) / tau2
        + 0.5 * ((prop - center) ** 2 - (c - center) ** 2) / (sd * sd)
    )
    if logu < log_ratio:
        d = prop - c
        for i in range(rows.size):
            eta[rows[i]] += w[i] * d
        return prop, True, center, sd, status
    return c, False, center, sd, status


@njit(cache=True)
def emission_loglik(y, m, base, alpha0, alpha1):
    """Per-row log-likelihood under each elite state (binomial coefficient dropped)."""
    n = y.size
    ll = np.empty((n, 2))
    for r in range(n):
        for e in range(2):
            eta = base[r] + (alpha0[r] if e == 0 else alpha1[r])
            ll[r, e] = -y[r] * log1pexp(-eta) - (m[r] - y[r]) * log1pexp(eta)
    return ll


@njit(cache=True)
def forward_filter(ll, trans, lo, hi, filt):
    """Filtered P(E_t | data up to t) for rows lo..hi-1, starting from E_0 = 0.

    ``trans[t]`` is the (nu00, nu01, nu10, nu11) row leading into row t.
    Returns False if both states have zero probability at some step.
    """
    p0 = 1.0
    p1 = 0.0
    for t in range(lo, hi):
        q0 = p0 * trans[t, 0] + p1 * trans[t, 2]
        q1 = p0 * trans[t, 1] + p1 * trans[t, 3]
        a0 = math.log(q0) + ll[t, 0] if q0 > 0.0 else -np.inf
        a1 = math.log(q1) + ll[t, 1] if q1 > 0.0 else -np.inf
        mx = max(a0, a1)
        if not math.isfinite(mx):
            return False
        e0 = math.exp(a0 - mx)
        e1 = math.exp(a1 - mx)
        p0 = e0 / (e0 + e1)
        p1 = e1 / (e0 + e1)
        filt[t, 0] = p0
        filt[t, 1] = p1
    return True


@njit(cache=True)
def backward_sample(filt, trans, lo, hi, u, out):
    e = 1 if u[hi - 1] < filt[hi - 1, 1] else 0
    out[hi - 1] = e
    for t in range(hi - 2, lo - 1, -1):
        w0 = filt[t, 0] * trans[t + 1, e]
        w1 = filt[t, 1] * trans[t + 1, 2 + e]
        p1 = w1 / (w0 + w1)
        e = 1 if u[t] < p1 else 0
        out[t] = e


@njit(cache=True)
def ffbs_all(ll, trans, offsets, u, out, filt):
    """Forward-filter, backward-sample every player. Returns -1 on success,
    otherwise the index of the first player whose filter collapsed."""
    for i in range(offsets.size - 1):
        lo = offsets[i]
        hi = offsets[i + 1]
        if hi == lo:
            continue
        if not forward_filter(ll, trans, lo, hi, filt):
            return i
        backward_sample(filt, trans, lo, hi, u, out)
    return -1
