"""Penalised change-point detection for the coarse series.

The shape parameter is estimated once on the whole series and held fixed;
each segment gets its own rate.  Optimal segmentations for a given penalty
come from PELT, the penalty range is explored with CROPS and the final
segmentation is chosen by a two-line elbow fit of cost against number of
change-points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .ingest import CoarseSeries
from .weibull import DEFAULT_BOUNDS, Bounds, _clip_rate, fit_mle

DEFAULT_MIN_SEG_LEN = 2
DEFAULT_PENALTY_FACTORS = (0.2, 5.0)


class SegmentCost:
    """Memoised fixed-shape segment cost ``C(a, b)`` over entries ``(a, b]``.

    ``C`` is the censored Weibull NLL at the segment's own rate MLE, without
    penalty.  Entries are cached per ``(a, b)``, so one instance can be
    shared by every PELT run of a CROPS sweep.
    """

    def __init__(self, series: CoarseSeries, shape: float, bounds: Bounds = DEFAULT_BOUNDS):
        if not (bounds.shape_min <= shape <= bounds.shape_max):
            raise ValueError(f"shape {shape} outside [{bounds.shape_min}, {bounds.shape_max}]")
        self.series = series
        self.shape = float(shape)
        self.bounds = bounds
        cens = np.asarray(series.censored, dtype=bool)
        y = np.where(cens, 1.0, series.y_bar)
        self._a = np.where(cens, 0.0, y**shape)
        self._logy = np.where(cens, 0.0, np.log(y))
        self._bvals, inverse = np.unique(series.q_bar[cens] ** shape, return_inverse=True)
        self._group = np.full(len(series), -1, dtype=np.int64)
        self._group[cens] = inverse
        self._t_lo = shape * math.log(bounds.rate_min)
        self._t_hi = shape * math.log(bounds.rate_max)
        # per segment end b: (cost, log-mu, boundary flag) indexed by start a, NaN = unknown
        self._memo: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def __len__(self) -> int:
        return len(self.series)

    def _table(self, end: int):
        tab = self._memo.get(end)
        if tab is None:
            tab = (np.full(end, np.nan), np.empty(end), np.zeros(end, dtype=np.int64))
            self._memo[end] = tab
        return tab

    def fit(self, a: int, b: int) -> tuple[float, float, bool]:
        """Return ``(cost, rate, degenerate)`` for segment ``(a, b]``."""
        if not (0 <= a < b <= len(self.series)):
            raise IndexError(f"invalid segment ({a}, {b}] for K={len(self.series)}")
        self.batch(np.array([a], dtype=np.int64), b)
        costs, tvals, flags = self._memo[b]
        rate = _clip_rate(math.exp(tvals[a] / self.shape), int(flags[a]), self.bounds)
        return float(costs[a]), rate, bool(flags[a] != 0)

    def __call__(self, a: int, b: int) -> tuple[float, float]:
        cost, rate, _ = self.fit(a, b)
        return cost, rate

    def batch(self, starts: np.ndarray, end: int) -> np.ndarray:
        """Costs of segments ``(s, end]`` for every ``s`` in ``starts``."""
        costs, tvals, flags = self._table(end)
        out = costs[starts]
        miss = np.isnan(out)
        if miss.any():
            todo = np.ascontiguousarray(starts[miss], dtype=np.int64)
            c, t, f = _kernels.fit_segments(todo, end, self._a, self._logy, self._group,
                                            self._bvals, self.shape, self._t_lo, self._t_hi)
            costs[todo] = c
            tvals[todo] = t
            flags[todo] = f
            out[miss] = c
        return out


def segment_cost(series: CoarseSeries, a: int, b: int, shape: float,
                 bounds: Bounds = DEFAULT_BOUNDS) -> tuple[float, float]:
    """Unpenalised cost and fitted rate of entries ``(a, b]``."""
    return SegmentCost(series, shape, bounds)(a, b)


@dataclass(frozen=True)
class Segmentation:
    """A segmentation of ``n`` entries.

    ``breaks`` are the change-point indices ``0 < eta_1 < ... < eta_L < n``;
    segment ``l`` covers entries ``(eta_{l-1}, eta_l]``.
    """

    breaks: tuple[int, ...]
    rates: tuple[float, ...]
    segment_costs: tuple[float, ...]
    penalty: float
    shape: float
    n: int
    degenerate: tuple[bool, ...] = ()

    def __post_init__(self):
        edges = (0, *self.breaks, self.n)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"breaks must be strictly increasing inside (0, {self.n}): {self.breaks}")
        if len(self.rates) != len(self.breaks) + 1 or len(self.segment_costs) != len(self.rates):
            raise ValueError("need one rate and one cost per segment")
        if not self.degenerate:
            object.__setattr__(self, "degenerate", (False,) * len(self.rates))

    @property
    def n_changepoints(self) -> int:
        return len(self.breaks)

    @property
    def segments(self) -> list[tuple[int, int]]:
        edges = (0, *self.breaks, self.n)
        return list(zip(edges, edges[1:]))

    @property
    def nll(self) -> float:
        """Unpenalised total cost."""
        return math.fsum(self.segment_costs)

    @property
    def cost(self) -> float:
        """Penalised total cost."""
        return self.nll + self.penalty * (self.n_changepoints + 1)

    def segment_dates(self, days: Sequence[date]) -> list[tuple[date, date]]:
        return [(days[a], days[b - 1]) for a, b in self.segments]

    def to_dict(self, days: Optional[Sequence[date]] = None) -> dict:
        segs = []
        for i, ((a, b), rate, c, deg) in enumerate(
                zip(self.segments, self.rates, self.segment_costs, self.degenerate), start=1):
            seg = {"index": i, "start": a, "end": b, "rate": rate, "cost": c, "degenerate": deg}
            if days is not None:
                seg["first_day"] = days[a].isoformat()
                seg["last_day"] = days[b - 1].isoformat()
            segs.append(seg)
        out = {
            "sigma_hat": self.shape,
            "penalty": self.penalty,
            "K": self.n,
            "n_changepoints": self.n_changepoints,
            "break_indices": list(self.breaks),
            "rates": list(self.rates),
            "cost": self.cost,
            "nll": self.nll,
            "segments": segs,
        }
        if days is not None:
            # a break is dated by the first day of the segment it opens
            out["breaks"] = [days[e].isoformat() for e in self.breaks]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Segmentation":
        segs = d["segments"]
        return cls(
            breaks=tuple(int(e) for e in d["break_indices"]),
            rates=tuple(float(s["rate"]) for s in segs),
            segment_costs=tuple(float(s["cost"]) for s in segs),
            penalty=float(d["penalty"]),
            shape=float(d["sigma_hat"]),
            n=int(d["K"]),
            degenerate=tuple(bool(s["degenerate"]) for s in segs),
        )


def _from_boundaries(cost: SegmentCost, bounds_list, penalty: float) -> Segmentation:
    fits = [cost.fit(a, b) for a, b in bounds_list]
    return Segmentation(
        breaks=tuple(b for _, b in bounds_list[:-1]),
        rates=tuple(f[1] for f in fits),
        segment_costs=tuple(f[0] for f in fits),
        penalty=float(penalty),
        shape=cost.shape,
        n=len(cost),
        degenerate=tuple(f[2] for f in fits),
    )


def pelt(series: CoarseSeries, shape: float, penalty: float, *,
         min_seg_len: int = DEFAULT_MIN_SEG_LEN, cost: Optional[SegmentCost] = None,
         bounds: Bounds = DEFAULT_BOUNDS) -> Segmentation:
    """Exact minimiser of ``sum C(segment) + penalty * (L + 1)``.

    Pruning drops a candidate ``s`` once ``F(s) + C(s, t) > F(t)``.  With a
    minimum segment length ``m`` that argument only covers ends ``t' >= t + m``,
    so a pruned candidate stays eligible for the next ``m - 1`` steps.
    """
    if penalty < 0:
        raise ValueError("penalty must be nonnegative")
    if min_seg_len < 1:
        raise ValueError("min_seg_len must be >= 1")
    if cost is None:
        cost = SegmentCost(series, shape, bounds)
    K = len(series)
    if K < 1:
        raise ValueError("empty series")
    m = min_seg_len
    if K < 2 * m:
        return _from_boundaries(cost, [(0, K)], penalty)

    F = np.full(K + 1, np.inf)
    F[0] = 0.0
    last = np.zeros(K + 1, dtype=np.int64)
    never = K + m + 1
    pruned_at = np.full(K + 1, never, dtype=np.int64)
    cands = np.zeros(1, dtype=np.int64)
    for t in range(m, K + 1):
        if t - m >= m:
            cands = np.append(cands, t - m)
        cands = cands[pruned_at[cands] > t - m]
        fc = F[cands] + cost.batch(cands, t)
        vals = fc + penalty
        i = int(np.argmin(vals))
        F[t] = vals[i]
        last[t] = cands[i]
        tol = 1e-10 * (1.0 + abs(F[t]))
        hit = cands[fc > F[t] + tol]
        pruned_at[hit] = np.minimum(pruned_at[hit], t)

    segs = []
    t = K
    while t > 0:
        s = int(last[t])
        segs.append((s, t))
        t = s
    return _from_boundaries(cost, segs[::-1], penalty)


@dataclass(frozen=True)
class PathEntry:
    """A segmentation together with the penalty interval on which it is optimal."""

    penalty_min: float
    penalty_max: float
    segmentation: Segmentation

    @property
    def penalty(self) -> float:
        return self.penalty_min


@dataclass(frozen=True)
class PenaltyPath:
    """Distinct optimal segmentations ordered by increasing penalty."""

    entries: tuple[PathEntry, ...]
    beta_min: float
    beta_max: float

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i) -> PathEntry:
        return self.entries[i]

    def counts(self) -> list[int]:
        return [e.segmentation.n_changepoints for e in self.entries]

    def at_penalty(self, beta: float) -> PathEntry:
        for e in self.entries:
            if beta <= e.penalty_max:
                return e
        return self.entries[-1]

    def to_dict(self, days=None) -> dict:
        return {
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "entries": [
                {"penalty_min": e.penalty_min, "penalty_max": e.penalty_max,
                 "segmentation": e.segmentation.to_dict(days)}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PenaltyPath":
        return cls(
            tuple(PathEntry(float(e["penalty_min"]), float(e["penalty_max"]),
                            Segmentation.from_dict(e["segmentation"])) for e in d["entries"]),
            float(d["beta_min"]), float(d["beta_max"]),
        )


def crops(series: CoarseSeries, shape: float, beta_min: float, beta_max: float, *,
          min_seg_len: int = DEFAULT_MIN_SEG_LEN, cost: Optional[SegmentCost] = None,
          bounds: Bounds = DEFAULT_BOUNDS, min_width: float = 1e-6) -> PenaltyPath:
    """All optimal segmentations for penalties in ``[beta_min, beta_max]``.

    Between two computed segmentations with ``m0 > m1 + 1`` change-points,
    PELT is rerun at the penalty where their penalised costs are equal.  If
    that returns a third segmentation both sub-intervals are explored,
    otherwise nothing else is optimal in between.
    """
    if not (0 <= beta_min <= beta_max):
        raise ValueError(f"need 0 <= beta_min <= beta_max, got [{beta_min}, {beta_max}]")
    if cost is None:
        cost = SegmentCost(series, shape, bounds)
    found: dict[int, Segmentation] = {}

    def run(beta):
        seg = pelt(series, shape, beta, min_seg_len=min_seg_len, cost=cost)
        return found.setdefault(seg.n_changepoints, seg)

    lo = run(beta_min)
    if beta_max > beta_min:
        hi = run(beta_max)
        stack = [(beta_min, lo, beta_max, hi)]
        while stack:
            b0, s0, b1, s1 = stack.pop()
            m0, m1 = s0.n_changepoints, s1.n_changepoints
            if m0 <= m1 + 1 or b1 - b0 < min_width:
                continue
            b_star = (s1.nll - s0.nll) / (m0 - m1)
            b_star = min(max(b_star, b0), b1)
            s = run(b_star)
            if s.n_changepoints not in (m0, m1):
                stack.append((b_star, s, b1, s1))
                stack.append((b0, s0, b_star, s))

    segs = sorted(found.values(), key=lambda s: -s.n_changepoints)
    entries = []
    for i, s in enumerate(segs):
        if i == 0:
            pmin = beta_min
        else:
            prev = segs[i - 1]
            pmin = (s.nll - prev.nll) / (prev.n_changepoints - s.n_changepoints)
            pmin = min(max(pmin, beta_min), beta_max)
        entries.append(pmin)
    result = []
    for i, s in enumerate(segs):
        pmax = entries[i + 1] if i + 1 < len(segs) else beta_max
        result.append(PathEntry(entries[i], pmax, s))
    return PenaltyPath(tuple(result), float(beta_min), float(beta_max))


def _sse_line(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    sxy = float(xc @ yc)
    return max(float(yc @ yc) - sxy * sxy / sxx, 0.0)


def elbow_select(points: Sequence[tuple[float, float]]) -> int:
    """Index of the knee of a curve.

    Picks the split point minimising the summed residual sums of squares of
    two least-squares lines, one through the points up to and including the
    split and one from the split onwards.  Ties go to the smaller ``x``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (x, y) pairs")
    n = len(pts)
    if n < 5:
        raise ValueError(f"elbow selection needs at least 5 points, got {n}")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    scale = float(np.ptp(y)) or 1.0
    y = y / scale
    best, best_sse = 1, math.inf
    for j in range(1, n - 1):
        sse = _sse_line(x[: j + 1], y[: j + 1]) + _sse_line(x[j:], y[j:])
        if sse < best_sse - 1e-12:
            best, best_sse = j, sse
    return best


class SegmentationFit(NamedTuple):
    shape: float
    segmentation: Segmentation
    path: PenaltyPath


def select_from_path(path: PenaltyPath, K: int,
                     null_penalty: Optional[float] = None) -> PathEntry:
    """Elbow choice on ``(L, nll)``; short paths fall back to the BIC penalty.

    The elbow always lands on an interior knee, so on its own it segments
    stationary data too.  When ``null_penalty`` lies in the path's range and
    the segmentation optimal there has no change-point, that one is returned.
    """
    if null_penalty is not None and path.beta_min <= null_penalty <= path.beta_max:
        entry = path.at_penalty(null_penalty)
        if entry.segmentation.n_changepoints == 0:
            return entry
    if len(path) >= 5:
        ordered = sorted(path, key=lambda e: e.segmentation.n_changepoints)
        j = elbow_select([(e.segmentation.n_changepoints, e.segmentation.nll) for e in ordered])
        return ordered[j]
    return path.at_penalty(0.5 * math.log(K))


def segment_pipeline(series: CoarseSeries, *, min_seg_len: int = DEFAULT_MIN_SEG_LEN,
                     penalty_factors: tuple[float, float] = DEFAULT_PENALTY_FACTORS,
                     bounds: Bounds = DEFAULT_BOUNDS,
                     null_factor: Optional[float] = 1.0) -> SegmentationFit:
    """Global shape MLE, CROPS over ``[f0 log K, f1 log K]`` and elbow selection.

    ``null_factor`` sets the no-change guard penalty ``null_factor * log K``
    (see :func:`select_from_path`); ``None`` disables it.
    """
    if len(series) == 0:
        raise ValueError("empty series")
    if series.censored.all():
        raise ValueError("series has no quantified value; the shape cannot be estimated")
    shape = fit_mle(series.to_sample(), bounds).shape
    K = len(series)
    logk = math.log(K) if K > 1 else 1.0
    cost = SegmentCost(series, shape, bounds)
    path = crops(series, shape, penalty_factors[0] * logk, penalty_factors[1] * logk,
                 min_seg_len=min_seg_len, cost=cost)
    chosen = select_from_path(path, K, None if null_factor is None else null_factor * logk)
    seg = chosen.segmentation
    seg = Segmentation(seg.breaks, seg.rates, seg.segment_costs, chosen.penalty_min,
                       seg.shape, seg.n, seg.degenerate)
    return SegmentationFit(shape, seg, path)
