"""Cluster scoring and Pareto ranking.

Each spatial cluster gets a heterogeneity score (mean pairwise
1-Wasserstein distance between its stations' measurements) and an
intensity score (``1 / rate`` of a fixed-shape censored Weibull fit on the
pooled measurements).  Clusters are ranked by Pareto front level, level 1
being the non-dominated candidates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date
from itertools import combinations
from typing import Optional, Sequence, TextIO

import numpy as np

from .clustering import Clustering
from .ingest import Measurement, filter_interval, station_samples, to_censored_sample
from .weibull import DEFAULT_BOUNDS, Bounds, CensoredSample, fit_rate_fixed_shape


@dataclass(frozen=True)
class StationEmpirical:
    """Measurements of one station; censored values are replaced by their LOQ."""

    station_id: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError(f"station {self.station_id} has no values")
        if np.any(~(v > 0)):
            raise ValueError(f"station {self.station_id} has nonpositive values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_measurements(cls, station_id: str, ms: Sequence[Measurement]) -> "StationEmpirical":
        return cls(station_id, np.array([m.x for m in ms]))


def wasserstein1(a, b) -> float:
    """Exact 1-Wasserstein distance between two empirical distributions.

    Integrates ``|F_a - F_b|`` over the merged support, where both CDFs are
    piecewise constant.
    """
    a = np.sort(np.asarray(getattr(a, "values", a), dtype=float).ravel())
    b = np.sort(np.asarray(getattr(b, "values", b), dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein1 needs two nonempty samples")
    support = np.concatenate([a, b])
    support.sort(kind="mergesort")
    fa = np.searchsorted(a, support[:-1], side="right") / a.size
    fb = np.searchsorted(b, support[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * np.diff(support)))


def cluster_heterogeneity(stations: Sequence[StationEmpirical]) -> float:
    """Mean pairwise 1-Wasserstein distance; 0 for a single station."""
    n = len(stations)
    if n == 0:
        raise ValueError("empty cluster")
    if n == 1:
        return 0.0
    total = math.fsum(wasserstein1(a, b) for a, b in combinations(stations, 2))
    # each unordered pair stands for two ordered ones
    return 2.0 * total / (n * (n - 1))


def cluster_intensity(pooled: CensoredSample, shape: float,
                      bounds: Bounds = DEFAULT_BOUNDS) -> tuple[float, bool]:
    """``(1 / rate, degenerate)`` from a fixed-shape fit on the pooled sample."""
    fit = fit_rate_fixed_shape(pooled, shape, bounds)
    return 1.0 / fit.rate, fit.degenerate


def _maximal(w: np.ndarray, i: np.ndarray) -> np.ndarray:
    """Mask of points not dominated by any other point (sort-and-sweep)."""
    n = w.size
    order = np.lexsort((-i, -w))  # w descending, ties by i descending
    out = np.zeros(n, dtype=bool)
    best_i_above = -np.inf  # max i among strictly larger w
    k = 0
    while k < n:
        j = k
        wk = w[order[k]]
        while j < n and w[order[j]] == wk:
            j += 1
        group = order[k:j]
        top = i[group[0]]
        for p in group:
            out[p] = i[p] == top and not (best_i_above >= i[p])
        best_i_above = max(best_i_above, top)
        k = j
    return out


def pareto_levels(scores: Sequence[tuple[float, float]]) -> list[int]:
    """Pareto front level of each ``(W, I)`` point, both axes maximised.

    ``X`` is dominated by ``Y`` when ``Y`` is at least as large on both axes
    and strictly larger on one; identical points do not dominate each other.
    """
    pts = np.asarray(scores, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise ValueError("scores must be finite")
    n = len(pts)
    levels = np.zeros(n, dtype=int)
    remaining = np.arange(n)
    level = 0
    while remaining.size:
        level += 1
        front = _maximal(pts[remaining, 0], pts[remaining, 1])
        levels[remaining[front]] = level
        remaining = remaining[~front]
    return levels.tolist()


@dataclass(frozen=True)
class ClusterScore:
    cluster_id: int
    stations: tuple[str, ...]
    n_measurements: int
    n_quantified: int
    w_bar: float
    i_bar: float
    pareto_level: Optional[int] = None
    flags: tuple[str, ...] = field(default=())

    @property
    def support(self) -> tuple[int, int, int]:
        return len(self.stations), self.n_measurements, self.n_quantified

    def to_dict(self) -> dict:
        return {
            "id": self.cluster_id,
            "stations": list(self.stations),
            "n_measurements": self.n_measurements,
            "n_quantified": self.n_quantified,
            "W_bar": self.w_bar,
            "I_bar": self.i_bar,
            "pareto_level": self.pareto_level,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterScore":
        return cls(int(d["id"]), tuple(d["stations"]), int(d["n_measurements"]),
                   int(d["n_quantified"]), float(d["W_bar"]), float(d["I_bar"]),
                   d["pareto_level"], tuple(d["flags"]))


REPORT_CSV_HEADER = ("cluster_id", "n_stations", "n_measurements", "n_quantified",
                     "W_bar", "I_bar", "pareto_level", "flags")


def write_report_csv(scores: Sequence[ClusterScore], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_CSV_HEADER)
    for s in scores:
        w.writerow((s.cluster_id, len(s.stations), s.n_measurements, s.n_quantified,
                    repr(s.w_bar), repr(s.i_bar),
                    "" if s.pareto_level is None else s.pareto_level, ";".join(s.flags)))


def rank_clusters(clustering: Clustering, interval: tuple[date, date],
                  measurements: Sequence[Measurement], shape: float, *,
                  include_degenerate: bool = False,
                  bounds: Bounds = DEFAULT_BOUNDS) -> list[ClusterScore]:
    """Score every cluster on the measurements inside ``interval`` and rank them.

    Clusters whose pooled data are all censored get a boundary rate; they
    are reported with the ``degenerate`` flag and left out of the Pareto
    ranking unless ``include_degenerate`` is set.
    """
    inside = station_samples(filter_interval(measurements, *interval))
    scores = []
    for cid, members in enumerate(clustering.clusters, start=1):
        active = [s for s in members if s in inside]
        flags = []
        if not active:
            scores.append(ClusterScore(cid, tuple(members), 0, 0, 0.0, 0.0, None, ("empty",)))
            continue
        emp = [StationEmpirical.from_measurements(s, inside[s]) for s in active]
        pooled_ms = [m for s in active for m in inside[s]]
        pooled = to_censored_sample(pooled_ms)
        if len(active) == 1:
            flags.append("singleton")
        w_bar = cluster_heterogeneity(emp)
        i_bar, degenerate = cluster_intensity(pooled, shape, bounds)
        if degenerate:
            flags.append("degenerate")
        scores.append(ClusterScore(cid, tuple(members), len(pooled), pooled.n_quantified,
                                   w_bar, i_bar, None, tuple(flags)))

    ranked = [k for k, s in enumerate(scores)
              if "empty" not in s.flags and (include_degenerate or "degenerate" not in s.flags)]
    if ranked:
        levels = pareto_levels([(scores[k].w_bar, scores[k].i_bar) for k in ranked])
        for k, lev in zip(ranked, levels):
            s = scores[k]
            scores[k] = ClusterScore(s.cluster_id, s.stations, s.n_measurements, s.n_quantified,
                                     s.w_bar, s.i_bar, lev, s.flags)
    unranked_key = float("inf")
    return sorted(scores, key=lambda s: (unranked_key if s.pareto_level is None else s.pareto_level,
                                         -s.i_bar, s.cluster_id))
