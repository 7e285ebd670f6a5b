"""Graph-constrained hierarchical clustering of stations.

Every connected component gets its own Ward dendrogram on shortest-path
distances.  The dendrograms are merged into one global hierarchy starting
from one cluster per component; each level refines the component whose
next split removes the most inertia.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

import numpy as np
from scipy.cluster import hierarchy
from scipy.spatial.distance import squareform

from .changepoint import elbow_select
from .graph import StationGraph, shortest_path_matrix

MAX_CLUSTERS_DEFAULT = 35


class ClusteringError(ValueError):
    pass


def inertia(clusters: Sequence[Sequence], dist: np.ndarray, index: Optional[dict] = None) -> float:
    """Sum over clusters of ``(1/|C|) * sum_{i, j in C} d_ij**2`` (ordered pairs).

    ``clusters`` hold row indices into ``dist``, or keys of ``index``.
    """
    total = 0.0
    for c in clusters:
        rows = [index[s] for s in c] if index is not None else list(c)
        if len(rows) < 2:
            continue
        sub = dist[np.ix_(rows, rows)]
        if not np.all(np.isfinite(sub)):
            raise ClusteringError("cluster spans several connected components")
        total += float(np.sum(sub**2)) / len(rows)
    return total


@dataclass(frozen=True)
class Dendrogram:
    """Ward dendrogram of one component, in scipy linkage format."""

    station_ids: tuple[str, ...]
    linkage: np.ndarray

    def __len__(self) -> int:
        return len(self.station_ids)

    @property
    def heights(self) -> np.ndarray:
        return self.linkage[:, 2]

    def merges(self) -> list[tuple[tuple[str, ...], tuple[str, ...], float]]:
        """Merged member sets and heights, in merge order."""
        n = len(self.station_ids)
        members = {i: (i,) for i in range(n)}
        out = []
        for i, (a, b, h, _) in enumerate(self.linkage):
            ma, mb = members.pop(int(a)), members.pop(int(b))
            members[n + i] = tuple(sorted(ma + mb))
            out.append((tuple(self.station_ids[j] for j in ma),
                        tuple(self.station_ids[j] for j in mb), float(h)))
        return out

    def partitions(self) -> list[tuple[tuple[str, ...], ...]]:
        """Partitions into 1, 2, ..., n clusters; each splits one cluster of the previous."""
        n = len(self.station_ids)
        members = {i: (i,) for i in range(n)}
        snaps = [members.copy()]
        for i, (a, b, _, _) in enumerate(self.linkage):
            ma, mb = members.pop(int(a)), members.pop(int(b))
            members[n + i] = tuple(sorted(ma + mb))
            snaps.append(members.copy())
        out = []
        for snap in reversed(snaps):
            groups = sorted(snap.values(), key=min)
            out.append(tuple(tuple(self.station_ids[j] for j in g) for g in groups))
        return out


def ward_hierarchy(station_ids: Sequence[str], dist: np.ndarray) -> Dendrogram:
    """Agglomerative Ward clustering on a precomputed dissimilarity matrix.

    The Lance-Williams update with Ward coefficients is applied to squared
    dissimilarities; heights are reported as square roots, so ``height**2``
    equals the increase of the inertia caused by the merge.
    """
    ids = tuple(station_ids)
    d = np.asarray(dist, dtype=float)
    n = len(ids)
    if d.shape != (n, n):
        raise ClusteringError("distance matrix does not match station list")
    if n == 1:
        return Dendrogram(ids, np.empty((0, 4)))
    if not np.allclose(d, d.T) or np.any(np.diag(d) != 0):
        raise ClusteringError("distance matrix must be symmetric with zero diagonal")
    off = d[~np.eye(n, dtype=bool)]
    if np.any(~(off > 0)) or not np.all(np.isfinite(off)):
        raise ClusteringError("off-diagonal distances must be positive and finite")
    z = hierarchy.linkage(squareform(d, checks=False), method="ward")
    return Dendrogram(ids, z)


@dataclass(frozen=True)
class Clustering:
    clusters: tuple[tuple[str, ...], ...]
    inertia: float

    def __post_init__(self):
        seen = [s for c in self.clusters for s in c]
        if any(len(c) == 0 for c in self.clusters) or len(seen) != len(set(seen)):
            raise ClusteringError("clusters must be nonempty and disjoint")

    def __len__(self) -> int:
        return len(self.clusters)

    def labels(self) -> dict[str, int]:
        """Station id to 1-based cluster id."""
        return {s: k for k, c in enumerate(self.clusters, start=1) for s in c}

    def to_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("station_id", "cluster_id"))
        for k, c in enumerate(self.clusters, start=1):
            for s in c:
                w.writerow((s, k))

    @classmethod
    def from_csv(cls, fh: TextIO, inertia: float = float("nan")) -> "Clustering":
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("station_id", "cluster_id"):
            raise ClusteringError("expected header station_id,cluster_id")
        groups: dict[int, list[str]] = {}
        for row in reader:
            if row:
                groups.setdefault(int(row[1]), []).append(row[0].strip())
        return cls(tuple(tuple(groups[k]) for k in sorted(groups)), inertia)

    def to_dict(self) -> dict:
        return {"n_clusters": len(self), "inertia": self.inertia,
                "clusters": [{"id": k, "stations": list(c)}
                             for k, c in enumerate(self.clusters, start=1)]}

    @classmethod
    def from_dict(cls, d: dict) -> "Clustering":
        return cls(tuple(tuple(c["stations"]) for c in d["clusters"]), float(d["inertia"]))


@dataclass(frozen=True)
class ClusterHierarchy:
    """Chain of clusterings; level 0 has one cluster per component."""

    levels: tuple[Clustering, ...]
    split_components: tuple[int, ...]
    n_components: int

    @property
    def inertias(self) -> list[float]:
        return [c.inertia for c in self.levels]

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.levels]

    def with_clusters(self, m: int) -> Clustering:
        for c in self.levels:
            if len(c) == m:
                return c
        raise ClusteringError(f"no level with {m} clusters")

    def to_dict(self) -> dict:
        return {
            "n_components": self.n_components,
            "levels": [{"n_clusters": len(c), "inertia": c.inertia} for c in self.levels],
            "split_components": list(self.split_components),
        }


def distance_matrix(g: StationGraph) -> np.ndarray:
    """Shortest-path distances between all stations, ``inf`` across components."""
    n = len(g)
    d = np.full((n, n), np.inf)
    idx = g.index
    for comp in g.components:
        rows = [idx[s] for s in comp]
        d[np.ix_(rows, rows)] = shortest_path_matrix(g, comp)
    return d


def greedy_global_hierarchy(g: StationGraph) -> ClusterHierarchy:
    if len(g.components) == 0:
        raise ClusteringError("graph has no components")
    dist = distance_matrix(g)
    idx = g.index
    parts, local_w = [], []
    for comp in g.components:
        rows = [idx[s] for s in comp]
        dendro = ward_hierarchy(comp, dist[np.ix_(rows, rows)])
        p = dendro.partitions()
        parts.append(p)
        local_w.append([inertia(level, dist, idx) for level in p])

    k = [0] * len(parts)  # index into each component's partition list

    def snapshot():
        clusters = tuple(c for ci, ki in enumerate(k) for c in parts[ci][ki])
        return Clustering(clusters, float(sum(local_w[ci][ki] for ci, ki in enumerate(k))))

    levels = [snapshot()]
    split = []
    while True:
        best, best_gain = -1, -np.inf
        for ci, ki in enumerate(k):
            if ki + 1 < len(parts[ci]):
                gain = local_w[ci][ki] - local_w[ci][ki + 1]
                if gain > best_gain:
                    best, best_gain = ci, gain
        if best < 0:
            break
        k[best] += 1
        split.append(best)
        levels.append(snapshot())
    return ClusterHierarchy(tuple(levels), tuple(split), len(parts))


def default_m_range(h: ClusterHierarchy) -> tuple[int, int]:
    n = len(h.levels[-1])
    return h.n_components, max(h.n_components, min(MAX_CLUSTERS_DEFAULT, n - 1))


def select_clustering(h: ClusterHierarchy, m_range: Optional[tuple[int, int]] = None) -> Clustering:
    """Knee of the inertia-versus-cluster-count curve inside ``m_range``."""
    lo, hi = m_range if m_range is not None else default_m_range(h)
    cands = [c for c in h.levels if lo <= len(c) <= hi]
    if len(cands) < 5:
        raise ClusteringError(
            f"elbow selection needs at least 5 levels in [{lo}, {hi}], got {len(cands)}")
    j = elbow_select([(len(c), c.inertia) for c in cands])
    return cands[j]


def hierarchy_json(h: ClusterHierarchy, chosen: Clustering) -> str:
    return json.dumps({"selected": chosen.to_dict(), "hierarchy": h.to_dict()}, indent=2)
