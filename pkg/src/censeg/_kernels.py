"""Compiled inner loops for the fixed-shape rate fit.

With the shape held fixed, write ``mu = rate**shape``.  The negative
log-likelihood of a left-censored Weibull sample becomes

    mu * sum(a) - n_unc * log(mu) - sum_c log(1 - exp(-mu * b_c)) + const

with ``a = y**shape`` over quantified points and ``b = q**shape`` over
censored points.  It is strictly convex in ``t = log(mu)``, so the rate MLE
is the unique root of its derivative and a safeguarded Newton iteration
inside the feasibility bracket finds it to machine precision.
"""

import math

import numpy as np
from numba import njit

_TINY_X = 1e-8
_HUGE_X = 700.0


@njit(cache=True)
def log1mexp(z):
    """log(1 - exp(-z)) for z > 0."""
    if z < 0.6931471805599453:
        return math.log(-math.expm1(-z))
    return math.log1p(-math.exp(-z))


@njit(cache=True)
def solve_log_mu(n_unc, sum_a, bvals, counts, ng, t_lo, t_hi):
    """Return ``(t_hat, boundary)``, boundary -1/0/+1 for lower/interior/upper.

    Censored thresholds come as ``ng`` groups of ``(q**shape, count)``.
    """
    g_lo, _ = _score(t_lo, n_unc, sum_a, bvals, counts, ng)
    if g_lo >= 0.0:
        return t_lo, -1
    g_hi, _ = _score(t_hi, n_unc, sum_a, bvals, counts, ng)
    if g_hi <= 0.0:
        return t_hi, 1
    lo = t_lo
    hi = t_hi
    if n_unc > 0 and sum_a > 0.0:
        t = math.log(n_unc / sum_a)
    else:
        t = 0.5 * (lo + hi)
    if t <= lo or t >= hi:
        t = 0.5 * (lo + hi)
    for _ in range(300):
        g, c = _score(t, n_unc, sum_a, bvals, counts, ng)
        if g == 0.0:
            return t, 0
        if g < 0.0:
            lo = t
        else:
            hi = t
        t_new = t - g / c if c > 0.0 else 0.5 * (lo + hi)
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-14 * max(1.0, abs(t)) or hi - lo <= 1e-15 * max(1.0, abs(t)):
            return t_new, 0
        t = t_new
    return t, 0


@njit(cache=True)
def _score(t, n_unc, sum_a, bvals, counts, ng):
    mu = math.exp(t)
    grad = mu * sum_a - n_unc
    curv = mu * sum_a
    for i in range(ng):
        x = mu * bvals[i]
        w = counts[i]
        if x < _TINY_X:
            grad -= w * (1.0 - 0.5 * x)
            curv += w * 0.5 * x
        elif x < _HUGE_X:
            e = math.exp(-x)
            em = -math.expm1(-x)
            grad -= w * x * e / em
            curv += w * x * (x - em) * e / (em * em)
    return grad, curv


@njit(cache=True)
def fit_segments(starts, end, a, logy, group, bvals, shape, t_lo, t_hi):
    """Fit the rate on every segment ``(s, end]`` for ``s`` in ``starts``.

    ``a``/``logy`` hold ``y**shape``/``log(y)`` at quantified points.  At
    censored points ``group`` indexes the distinct value of ``q**shape`` in
    ``bvals``; it is -1 at quantified points.  Returns costs, log-mu
    estimates and boundary flags.
    """
    m = starts.shape[0]
    costs = np.empty(m)
    tvals = np.empty(m)
    flags = np.empty(m, dtype=np.int64)
    nvals = bvals.shape[0]
    counts = np.zeros(nvals)
    touched = np.empty(nvals, dtype=np.int64)
    gb = np.empty(nvals)
    gc = np.empty(nvals)
    log_shape = math.log(shape)
    for j in range(m):
        s = starts[j]
        n_unc = 0
        sum_a = 0.0
        sum_logy = 0.0
        ng = 0
        for k in range(s, end):
            g = group[k]
            if g >= 0:
                if counts[g] == 0.0:
                    touched[ng] = g
                    ng += 1
                counts[g] += 1.0
            else:
                n_unc += 1
                sum_a += a[k]
                sum_logy += logy[k]
        for i in range(ng):
            g = touched[i]
            gb[i] = bvals[g]
            gc[i] = counts[g]
            counts[g] = 0.0
        t, flag = solve_log_mu(n_unc, sum_a, gb, gc, ng, t_lo, t_hi)
        mu = math.exp(t)
        val = mu * sum_a - n_unc * (t + log_shape) - (shape - 1.0) * sum_logy
        for i in range(ng):
            val -= gc[i] * log1mexp(mu * gb[i])
        costs[j] = val
        tvals[j] = t
        flags[j] = flag
    return costs, tvals, flags
