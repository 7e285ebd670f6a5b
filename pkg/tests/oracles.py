"""Slow, independent reference implementations used as test oracles.

None of these share code with the package beyond its data containers.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats


# --- censored Weibull -------------------------------------------------------

def nll_scipy(rate, shape, x, q, censored):
    """Censored Weibull NLL through scipy.stats; broadcasts over rate/shape grids."""
    rate = np.asarray(rate, dtype=float)[..., None]
    shape = np.asarray(shape, dtype=float)[..., None]
    x, q, c = np.asarray(x), np.asarray(q), np.asarray(censored, dtype=bool)
    out = 0.0
    if (~c).any():
        out = -np.sum(stats.weibull_min.logpdf(x[~c], shape, scale=1.0 / rate), axis=-1)
    if c.any():
        out = out - np.sum(stats.weibull_min.logcdf(q[c], shape, scale=1.0 / rate), axis=-1)
    return out


def grid_mle(x, q, censored, center, *, span=0.5, n=31, rounds=4):
    """Zooming grid search of the NLL over (log rate, log shape) around ``center``."""
    lr, ls = math.log(center[0]), math.log(center[1])
    best = (math.inf, center)
    width = span
    for _ in range(rounds):
        r = np.exp(np.linspace(lr - width, lr + width, n))
        s = np.exp(np.linspace(ls - width, ls + width, n))
        R, S = np.meshgrid(r, s, indexing="ij")
        vals = nll_scipy(R, S, x, q, censored)
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        best = (float(vals[i, j]), (float(R[i, j]), float(S[i, j])))
        lr, ls = math.log(best[1][0]), math.log(best[1][1])
        width *= 4.0 / (n - 1)
    return best


def grid_rate(x, q, censored, shape, lo=1e-6, hi=1e6, n=100_000):
    """Rate minimising the NLL on a log-spaced grid, refined once around the best node."""
    r = np.exp(np.linspace(math.log(lo), math.log(hi), n))
    vals = np.concatenate([nll_scipy(chunk, shape, x, q, censored)
                           for chunk in np.array_split(r, 50)])
    k = int(np.argmin(vals))
    a, b = r[max(k - 1, 0)], r[min(k + 1, n - 1)]
    fine = np.exp(np.linspace(math.log(a), math.log(b), 2001))
    fv = nll_scipy(fine, shape, x, q, censored)
    k2 = int(np.argmin(fv))
    return float(fine[k2]), float(fv[k2])


# --- segmentation -----------------------------------------------------------

def segment_cost_table(y, q, censored, shape, lo=1e-6, hi=1e6, iters=64):
    """Costs of every segment ``(a, b]`` by vectorised bisection on the score.

    Returns ``(cost, rate)`` as ``(K+1, K+1)`` arrays, NaN where ``a >= b``.
    """
    y, q, c = np.asarray(y, float), np.asarray(q, float), np.asarray(censored, bool)
    K = y.size
    pairs = [(a, b) for b in range(1, K + 1) for a in range(b)]
    A = np.array([p[0] for p in pairs])
    B = np.array([p[1] for p in pairs])
    idx = np.arange(K)
    member = (idx[None, :] >= A[:, None]) & (idx[None, :] < B[:, None])
    unc_m = member & ~c[None, :]
    cen_m = member & c[None, :]
    ys = np.where(c, 1.0, y) ** shape
    qs = q**shape
    n_u = unc_m.sum(1)
    s_a = (unc_m * ys[None, :]).sum(1)

    def score(log_rate):
        mu = np.exp(shape * log_rate)[:, None]
        z = mu * qs[None, :]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            h = np.where(z > 700, 0.0, z / np.expm1(np.maximum(z, 1e-300)))
        h = np.where(z < 1e-300, 1.0, h)
        return mu[:, 0] * s_a - n_u - (cen_m * h).sum(1)

    lo_t = np.full(len(pairs), math.log(lo))
    hi_t = np.full(len(pairs), math.log(hi))
    for _ in range(iters):
        mid = 0.5 * (lo_t + hi_t)
        g = score(mid)
        lo_t = np.where(g < 0, mid, lo_t)
        hi_t = np.where(g < 0, hi_t, mid)
    t = 0.5 * (lo_t + hi_t)
    g_lo, g_hi = score(np.full_like(t, math.log(lo))), score(np.full_like(t, math.log(hi)))
    t = np.where(g_lo >= 0, math.log(lo), np.where(g_hi <= 0, math.log(hi), t))
    rate = np.exp(t)
    scale = 1.0 / rate[:, None]
    with np.errstate(divide="ignore"):
        lp = stats.weibull_min.logpdf(np.where(c, 1.0, y)[None, :], shape, scale=scale)
        lc = stats.weibull_min.logcdf(q[None, :], shape, scale=scale)
    cost = -(np.where(unc_m, lp, 0.0).sum(1) + np.where(cen_m, lc, 0.0).sum(1))
    C = np.full((K + 1, K + 1), np.nan)
    R = np.full((K + 1, K + 1), np.nan)
    C[A, B] = cost
    R[A, B] = rate
    return C, R


def optimal_partition(C, penalty, min_seg_len=1):
    """O(K^2) dynamic programme; returns ``(total cost, breaks)``."""
    K = C.shape[0] - 1
    F = np.full(K + 1, np.inf)
    F[0] = 0.0
    arg = np.zeros(K + 1, dtype=int)
    if K < min_seg_len:
        return C[0, K] + penalty, ()
    for t in range(min_seg_len, K + 1):
        for s in range(0, t - min_seg_len + 1):
            v = F[s] + C[s, t] + penalty
            if v < F[t]:
                F[t], arg[t] = v, s
    out, t = [], K
    while t > 0:
        t = arg[t]
        if t > 0:
            out.append(t)
    return float(F[K]), tuple(sorted(out))


def brute_elbow(x, y):
    """All two-line splits fitted with np.polyfit; first minimum wins."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    y = y / (np.ptp(y) or 1.0)
    best, arg = math.inf, None
    for j in range(1, len(x) - 1):
        sse = 0.0
        for xs, ys in ((x[: j + 1], y[: j + 1]), (x[j:], y[j:])):
            coef = np.polyfit(xs, ys, 1)
            sse += float(np.sum((np.polyval(coef, xs) - ys) ** 2))
        if sse < best - 1e-9:
            best, arg = sse, j
    return arg, best


# --- graphs and clustering --------------------------------------------------

def floyd_warshall(w):
    d = np.array(w, dtype=float)
    n = d.shape[0]
    np.fill_diagonal(d, 0.0)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


def inertia_direct(clusters, d):
    tot = 0.0
    for cl in clusters:
        cl = list(cl)
        tot += sum(d[i, j] ** 2 for i in cl for j in cl) / len(cl)
    return tot


def brute_ward(d):
    """Greedy agglomeration merging the pair with the smallest inertia increase.

    Returns the merge list ``(members_a, members_b, increase)``.
    """
    clusters = [frozenset([i]) for i in range(d.shape[0])]
    merges = []
    while len(clusters) > 1:
        base = inertia_direct(clusters, d)
        best = None
        for i, j in itertools.combinations(range(len(clusters)), 2):
            trial = [c for k, c in enumerate(clusters) if k not in (i, j)] + [clusters[i] | clusters[j]]
            inc = inertia_direct(trial, d) - base
            if best is None or inc < best[0]:
                best = (inc, i, j)
        inc, i, j = best
        merges.append((clusters[i], clusters[j], inc))
        merged = clusters[i] | clusters[j]
        clusters = [c for k, c in enumerate(clusters) if k not in (i, j)] + [merged]
    return merges


# --- Pareto -----------------------------------------------------------------

def dominates(p, r):
    """True when ``p`` dominates ``r`` (both axes maximised)."""
    return (p[0] >= r[0] and p[1] >= r[1]) and (p[0] > r[0] or p[1] > r[1])


def peel_levels(points):
    pts = [tuple(p) for p in points]
    level = [0] * len(pts)
    left = set(range(len(pts)))
    lv = 0
    while left:
        lv += 1
        front = {i for i in left if not any(dominates(pts[j], pts[i]) for j in left if j != i)}
        for i in front:
            level[i] = lv
        left -= front
    return level


def w1_sorted(a, b):
    """Equal-size 1-Wasserstein distance: mean absolute difference of sorted samples."""
    a, b = np.sort(a), np.sort(b)
    return float(np.mean(np.abs(a - b)))
