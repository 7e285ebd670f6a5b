"""SVG figures for the pipeline reports.

All figures are written with a fixed hash salt and no date metadata so that
reruns produce identical files.
"""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .anomaly import ClusterScore  # noqa: E402
from .changepoint import PenaltyPath, Segmentation  # noqa: E402
from .clustering import ClusterHierarchy, Clustering  # noqa: E402
from .graph import RiverNetwork  # noqa: E402
from .ingest import CoarseSeries  # noqa: E402

plt.rcParams["svg.hashsalt"] = "censeg"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_segmentation(series: CoarseSeries, seg: Segmentation, path) -> None:
    """Daily maxima with break lines and the fitted median of each segment."""
    fig, ax = plt.subplots(figsize=(9, 3.5))
    days = np.array(series.days, dtype="datetime64[D]")
    cens = series.censored
    ax.scatter(days[~cens], series.y_bar[~cens], s=6, color="tab:blue", label="quantified")
    ax.scatter(days[cens], series.y_bar[cens], s=6, marker="v", color="0.6", label="below LOQ")
    for (a, b), rate in zip(seg.segments, seg.rates):
        med = np.log(2.0) ** (1.0 / seg.shape) / rate
        ax.hlines(med, days[a], days[b - 1], color="tab:red", lw=1.5)
    for e in seg.breaks:
        ax.axvline(days[e], color="k", lw=0.7, ls="--")
    ax.set_yscale("log")
    ax.set_ylabel("daily maximum (µg/L)")
    ax.legend(loc="upper left", fontsize=7)
    fig.autofmt_xdate()
    fig.tight_layout()
    _save(fig, path)


def plot_penalty_path(path: PenaltyPath, selected: Segmentation, out) -> None:
    """Unpenalized cost against segment count along the penalty path."""
    pts = sorted((e.segmentation.n_changepoints + 1, e.segmentation.nll) for e in path)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", ms=4)
    ax.axvline(selected.n_changepoints + 1, color="tab:red", ls="--", lw=1)
    ax.set_xlabel("number of segments")
    ax.set_ylabel("negative log-likelihood")
    fig.tight_layout()
    _save(fig, out)


def plot_inertia(h: ClusterHierarchy, chosen: Clustering, out,
                 m_range: Optional[tuple[int, int]] = None) -> None:
    sizes, w = np.array(h.sizes), np.array(h.inertias)
    if m_range is not None:
        keep = (sizes >= m_range[0]) & (sizes <= m_range[1])
        sizes, w = sizes[keep], w[keep]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(sizes, w, "o-", ms=4)
    ax.axvline(len(chosen), color="tab:red", ls="--", lw=1)
    ax.set_xlabel("number of clusters")
    ax.set_ylabel("inertia (m²)")
    fig.tight_layout()
    _save(fig, out)


def _level_colors(levels: Sequence[Optional[int]]):
    cmap = plt.get_cmap("viridis")
    top = max([lv for lv in levels if lv is not None], default=1)
    return ["0.7" if lv is None else cmap((lv - 1) / max(top - 1, 1)) for lv in levels]


def plot_pareto(scores: Sequence[ClusterScore], out) -> None:
    """Heterogeneity against intensity, coloured by Pareto level."""
    fig, ax = plt.subplots(figsize=(5, 4))
    colors = _level_colors([s.pareto_level for s in scores])
    ax.scatter([s.w_bar for s in scores], [s.i_bar for s in scores], c=colors, s=30)
    for s in scores:
        ax.annotate(str(s.cluster_id), (s.w_bar, s.i_bar), fontsize=7,
                    xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("mean pairwise W1 (µg/L)")
    ax.set_ylabel("intensity 1/λ (µg/L)")
    fig.tight_layout()
    _save(fig, out)


def plot_station_map(stations: Sequence[tuple[str, Sequence[float]]], scores: Sequence[ClusterScore],
                     out, river: Optional[RiverNetwork] = None) -> None:
    """Station positions coloured by the Pareto level of their cluster."""
    level = {sid: s.pareto_level for s in scores for sid in s.stations}
    shown = [(sid, xy) for sid, xy in stations if sid in level]
    fig, ax = plt.subplots(figsize=(5, 5))
    if river is not None and len(river.sections):
        xy = river.coords
        for a, b, _ in river.sections:
            a, b = int(a), int(b)
            ax.plot([xy[a, 0], xy[b, 0]], [xy[a, 1], xy[b, 1]], color="0.8", lw=0.6)
    if shown:
        pts = np.array([xy for _, xy in shown], dtype=float)
        ax.scatter(pts[:, 0], pts[:, 1], c=_level_colors([level[s] for s, _ in shown]), s=18, zorder=3)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    fig.tight_layout()
    _save(fig, out)
