"""Station graph built from a hydrographic line network.

Stations are snapped to the nearest river node; two stations are linked
whenever their nodes are joined by a river path, with the shortest-path
length (metres) as edge weight.  The river network is treated as
undirected and coordinates are assumed to be in a projected metric CRS.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, TextIO

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

# weight given to two stations snapped onto the same river node
COLOCATED_WEIGHT = 1.0


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class RiverNetwork:
    """Nodes (connecting points) and sections (edges weighted by length)."""

    coords: np.ndarray
    sections: np.ndarray
    node_ids: tuple = ()

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        sections = np.asarray(self.sections, dtype=float).reshape(-1, 3)
        n = coords.shape[0]
        if n == 0:
            raise GraphError("river network has no nodes")
        ends = sections[:, :2]
        if np.any(ends != np.round(ends)) or np.any(ends < 0) or np.any(ends >= n):
            raise GraphError("section endpoints must index existing nodes")
        if np.any(~(sections[:, 2] > 0)):
            raise GraphError("section lengths must be positive")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "sections", sections)
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(str(i) for i in range(n)))
        elif len(self.node_ids) != n:
            raise GraphError("node_ids and coords differ in length")

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric sparse adjacency keeping the shortest of parallel sections."""
        a = self.sections[:, 0].astype(np.int64)
        b = self.sections[:, 1].astype(np.int64)
        w = self.sections[:, 2]
        keep = a != b
        a, b, w = a[keep], b[keep], w[keep]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        order = np.lexsort((w, hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        first = np.ones(lo.size, dtype=bool)
        first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        lo, hi, w = lo[first], hi[first], w[first]
        n = self.n_nodes
        m = sparse.coo_matrix((np.r_[w, w], (np.r_[lo, hi], np.r_[hi, lo])), shape=(n, n))
        return m.tocsr()


def read_river_network(nodes_fh: TextIO, edges_fh: TextIO) -> RiverNetwork:
    """Parse ``node_id,x_m,y_m`` and ``node_a,node_b,length_m`` CSV files."""
    ids, coords = [], []
    for row in _rows(nodes_fh, ("node_id", "x_m", "y_m")):
        ids.append(row[0])
        coords.append((float(row[1]), float(row[2])))
    index = {nid: i for i, nid in enumerate(ids)}
    if len(index) != len(ids):
        raise GraphError("duplicate node_id in river nodes")
    sections = []
    for row in _rows(edges_fh, ("node_a", "node_b", "length_m")):
        try:
            sections.append((index[row[0]], index[row[1]], float(row[2])))
        except KeyError as exc:
            raise GraphError(f"section references unknown node {exc.args[0]}") from None
    return RiverNetwork(np.array(coords), np.array(sections).reshape(-1, 3), tuple(ids))


def write_river_network(river: RiverNetwork, nodes_fh: TextIO, edges_fh: TextIO) -> None:
    w = csv.writer(nodes_fh, lineterminator="\n")
    w.writerow(("node_id", "x_m", "y_m"))
    for nid, (x, y) in zip(river.node_ids, river.coords):
        w.writerow((nid, repr(float(x)), repr(float(y))))
    w = csv.writer(edges_fh, lineterminator="\n")
    w.writerow(("node_a", "node_b", "length_m"))
    for a, b, length in river.sections:
        w.writerow((river.node_ids[int(a)], river.node_ids[int(b)], repr(float(length))))


def river_network_from_geojson(obj: Mapping, ndigits: int = 3) -> RiverNetwork:
    """Build a river network from LineString / MultiLineString features.

    Each line becomes one section between its end points, weighted by its
    polyline length; end points closer than ``10**-ndigits`` metres are merged.
    """
    features = obj.get("features", [obj]) if obj.get("type") == "FeatureCollection" else [obj]
    index: dict[tuple, int] = {}
    coords, sections = [], []

    def node(pt):
        key = (round(float(pt[0]), ndigits), round(float(pt[1]), ndigits))
        if key not in index:
            index[key] = len(coords)
            coords.append(key)
        return index[key]

    for feat in features:
        geom = feat.get("geometry", feat)
        if geom["type"] == "LineString":
            lines = [geom["coordinates"]]
        elif geom["type"] == "MultiLineString":
            lines = geom["coordinates"]
        else:
            continue
        for line in lines:
            pts = np.asarray(line, dtype=float)[:, :2]
            if len(pts) < 2:
                continue
            length = float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))
            if length > 0:
                sections.append((node(pts[0]), node(pts[-1]), length))
    return RiverNetwork(np.array(coords, dtype=float), np.array(sections, dtype=float).reshape(-1, 3))


def _rows(fh: TextIO, header: tuple):
    reader = csv.reader(fh)
    got = next(reader, None)
    if got is None or tuple(h.strip() for h in got) != header:
        raise GraphError(f"expected header {','.join(header)}")
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise GraphError(f"line {reader.line_num}: expected {len(header)} fields")
        yield [c.strip() for c in row]


def read_stations(fh: TextIO) -> list[tuple[str, tuple[float, float]]]:
    """Parse ``station_id,x_m,y_m``."""
    return [(r[0], (float(r[1]), float(r[2]))) for r in _rows(fh, ("station_id", "x_m", "y_m"))]


def write_stations(stations, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("station_id", "x_m", "y_m"))
    for sid, (x, y) in stations:
        w.writerow((sid, repr(float(x)), repr(float(y))))


def snap_stations(stations: Sequence[tuple[str, Sequence[float]]], river: RiverNetwork,
                  chunk: int = 4096) -> dict[str, int]:
    """Map each station to its nearest river node (lowest index on ties)."""
    out = {}
    nodes = river.coords
    for sid, xy in stations:
        p = np.asarray(xy, dtype=float)
        best_d, best_i = math.inf, -1
        for start in range(0, nodes.shape[0], chunk):
            d = np.sum((nodes[start:start + chunk] - p) ** 2, axis=1)
            i = int(np.argmin(d))
            if d[i] < best_d:
                best_d, best_i = float(d[i]), start + i
        out[sid] = best_i
    return out


@dataclass(frozen=True)
class StationGraph:
    """Undirected weighted station graph.

    ``weights[i, j]`` is the edge weight between stations ``i`` and ``j``
    (``inf`` without an edge, 0 on the diagonal).  ``components`` lists the
    station ids of each connected component.
    """

    station_ids: tuple[str, ...]
    coords: np.ndarray
    weights: np.ndarray
    components: tuple[tuple[str, ...], ...] = field(default=())

    def __post_init__(self):
        n = len(self.station_ids)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (n, n):
            raise GraphError("weights must be an n x n matrix")
        if len(set(self.station_ids)) != n:
            raise GraphError("duplicate station ids")
        if not np.array_equal(w, w.T):
            raise GraphError("weights must be symmetric")
        off = ~np.eye(n, dtype=bool)
        if np.any(~(w[off] > 0)):
            raise GraphError("edge weights must be positive")
        w = w.copy()
        np.fill_diagonal(w, 0.0)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float).reshape(n, 2))
        if not self.components:
            object.__setattr__(self, "components", _components(self.station_ids, w))

    def __len__(self) -> int:
        return len(self.station_ids)

    @property
    def index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.station_ids)}

    @property
    def edges(self) -> list[tuple[str, str, float]]:
        iu, ju = np.nonzero(np.triu(np.isfinite(self.weights), k=1))
        return [(self.station_ids[i], self.station_ids[j], float(self.weights[i, j]))
                for i, j in zip(iu, ju)]

    def component_of(self) -> dict[str, int]:
        return {s: k for k, comp in enumerate(self.components) for s in comp}

    @classmethod
    def from_edges(cls, station_ids: Sequence[str], edges: Iterable[tuple[str, str, float]],
                   coords: Optional[np.ndarray] = None) -> "StationGraph":
        ids = tuple(station_ids)
        idx = {s: i for i, s in enumerate(ids)}
        w = np.full((len(ids), len(ids)), np.inf)
        for a, b, wt in edges:
            i, j = idx[a], idx[b]
            w[i, j] = w[j, i] = min(w[i, j], float(wt))
        if coords is None:
            coords = np.zeros((len(ids), 2))
        return cls(ids, coords, w)

    def to_json(self) -> dict:
        comp = self.component_of()
        return {
            "stations": [
                {"id": s, "x_m": float(x), "y_m": float(y), "component": comp[s]}
                for s, (x, y) in zip(self.station_ids, self.coords)
            ],
            "components": [list(c) for c in self.components],
            "edges": [{"source": a, "target": b, "weight": w} for a, b, w in self.edges],
        }

    @classmethod
    def from_json(cls, d: dict) -> "StationGraph":
        ids = [s["id"] for s in d["stations"]]
        coords = np.array([(s["x_m"], s["y_m"]) for s in d["stations"]], dtype=float)
        g = cls.from_edges(ids, [(e["source"], e["target"], e["weight"]) for e in d["edges"]], coords)
        return g


def _components(ids: Sequence[str], w: np.ndarray) -> tuple[tuple[str, ...], ...]:
    n = len(ids)
    if n == 0:
        return ()
    adj = sparse.csr_matrix(np.isfinite(w) & ~np.eye(n, dtype=bool))
    _, labels = csgraph.connected_components(adj, directed=False)
    groups: dict[int, list[str]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(ids[i])
    # order members as in the graph, components by their smallest station id
    return tuple(sorted((tuple(g) for g in groups.values()), key=min))


def build_station_graph(stations: Sequence[tuple[str, Sequence[float]]],
                        river: RiverNetwork) -> StationGraph:
    """Complete-within-component station graph weighted by river distance."""
    if not stations:
        raise GraphError("no stations")
    snapped = snap_stations(stations, river)
    ids = tuple(s for s, _ in stations)
    nodes = np.array([snapped[s] for s in ids], dtype=np.int64)
    uniq, inv = np.unique(nodes, return_inverse=True)
    dist = csgraph.dijkstra(river.adjacency(), directed=False, indices=uniq)
    w = dist[:, uniq][inv][:, inv]
    same = (nodes[:, None] == nodes[None, :]) & ~np.eye(len(ids), dtype=bool)
    w[same] = COLOCATED_WEIGHT
    # paths are symmetric in exact arithmetic; dijkstra sums may differ in the last bit
    w = np.minimum(w, w.T)
    coords = np.array([xy for _, xy in stations], dtype=float)
    return StationGraph(ids, coords, w)


def induced_subgraph(g: StationGraph, keep: Iterable[str]) -> StationGraph:
    """Restrict to ``keep``; remaining weights are left unchanged."""
    keep = set(keep)
    if not keep:
        raise GraphError("cannot induce a subgraph on no stations")
    missing = keep.difference(g.station_ids)
    if missing:
        raise GraphError(f"unknown stations: {sorted(missing)}")
    sel = [i for i, s in enumerate(g.station_ids) if s in keep]
    return StationGraph(tuple(g.station_ids[i] for i in sel), g.coords[sel],
                        g.weights[np.ix_(sel, sel)])


def shortest_path_matrix(g: StationGraph, component: Iterable[str]) -> np.ndarray:
    """All-pairs shortest-path distances inside one connected component.

    Rows follow the order of ``component`` (sorted if it is a set).
    """
    comp = sorted(component) if isinstance(component, (set, frozenset)) else list(component)
    idx = g.index
    try:
        sel = [idx[s] for s in comp]
    except KeyError as exc:
        raise GraphError(f"unknown station {exc.args[0]}") from None
    sub = g.weights[np.ix_(sel, sel)]
    adj = np.where(np.isfinite(sub), sub, 0.0)
    np.fill_diagonal(adj, 0.0)
    d = csgraph.dijkstra(sparse.csr_matrix(adj), directed=False)
    if not np.all(np.isfinite(d)):
        raise GraphError("stations do not form a connected component")
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return d
