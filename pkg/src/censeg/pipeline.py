"""End-to-end run: coarse series, segmentation, clustering and ranking."""

from __future__ import annotations

import configparser
import json
import logging
import os
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

from .anomaly import ClusterScore, rank_clusters, write_report_csv
from .changepoint import DEFAULT_MIN_SEG_LEN, DEFAULT_PENALTY_FACTORS, Segmentation, segment_pipeline
from .clustering import (ClusterHierarchy, Clustering, ClusteringError, default_m_range,
                         greedy_global_hierarchy, hierarchy_json, select_clustering)
from .graph import build_station_graph, induced_subgraph, read_river_network, read_stations
from .ingest import CoarseSeries, active_stations, build_coarse_series, read_measurements
from .weibull import Bounds

log = logging.getLogger(__name__)

SEED_ENV = "CENSEG_SEED"


class StageError(RuntimeError):
    """Failure inside one pipeline stage; ``module`` names the stage."""

    def __init__(self, module: str, cause: BaseException):
        self.module = module
        self.cause = cause
        super().__init__(f"{module}: {cause}")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    measurements: Path
    river_nodes: Path
    river_edges: Path
    stations: Path
    output_dir: Path = Path("out")
    penalty_factors: tuple[float, float] = DEFAULT_PENALTY_FACTORS
    m_range: Optional[tuple[int, int]] = None
    min_seg_len: int = DEFAULT_MIN_SEG_LEN
    bounds: Bounds = field(default_factory=Bounds)
    seed: int = 0
    interval: Optional[int] = None
    interval_date: Optional[date] = None
    all_intervals: bool = False
    include_degenerate: bool = False
    plots: bool = True
    simulate: bool = False

    def __post_init__(self):
        lo, hi = self.penalty_factors
        if not 0 < lo < hi:
            raise ConfigError("penalty factors must satisfy 0 < low < high")
        if self.m_range is not None and not 1 <= self.m_range[0] <= self.m_range[1]:
            raise ConfigError("cluster range must satisfy 1 <= low <= high")
        if self.min_seg_len < 1:
            raise ConfigError("min_seg_len must be at least 1")
        if self.interval is not None and self.interval < 1:
            raise ConfigError("interval is 1-based")


def _pair(text: str, cast):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ConfigError(f"expected two values, got {text!r}")
    return cast(parts[0]), cast(parts[1])


def load_config(path, *, environ=os.environ) -> tuple[PipelineConfig, configparser.ConfigParser]:
    """Read the ``[pipeline]`` section of an INI file.

    Relative paths are resolved against the config file's directory.  The
    ``CENSEG_SEED`` environment variable overrides ``seed``.
    """
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    if not cp.has_section("pipeline"):
        raise ConfigError(f"{path}: no [pipeline] section")
    s = cp["pipeline"]
    base = path.parent

    def p(key, default=None):
        v = s.get(key, default)
        if v is None:
            raise ConfigError(f"{path}: missing key {key}")
        return base / v

    try:
        seed = s.getint("seed", 0)
        if environ.get(SEED_ENV):
            seed = int(environ[SEED_ENV])
        box = Bounds(*(s.getfloat(k, d) for k, d in (("rate_min", 1e-6), ("rate_max", 1e6),
                                                       ("shape_min", 0.05), ("shape_max", 20.0))))
        cfg = PipelineConfig(
            measurements=p("measurements", "measurements.csv"),
            river_nodes=p("river_nodes", "river_nodes.csv"),
            river_edges=p("river_edges", "river_edges.csv"),
            stations=p("stations", "stations.csv"),
            output_dir=p("output_dir", "out"),
            penalty_factors=_pair(s["penalty_factors"], float) if "penalty_factors" in s
            else DEFAULT_PENALTY_FACTORS,
            m_range=_pair(s["m_range"], int) if "m_range" in s else None,
            min_seg_len=s.getint("min_seg_len", DEFAULT_MIN_SEG_LEN),
            bounds=box,
            seed=seed,
            interval=s.getint("interval") if "interval" in s else None,
            interval_date=date.fromisoformat(s["interval_date"]) if "interval_date" in s else None,
            all_intervals=s.getboolean("all_intervals", False),
            include_degenerate=s.getboolean("include_degenerate", False),
            plots=s.getboolean("plots", True),
            simulate=s.getboolean("simulate", False),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg, cp


def resolve_intervals(seg: Segmentation, days: Sequence[date], *, interval: Optional[int] = None,
                      interval_date: Optional[date] = None,
                      all_intervals: bool = False) -> list[tuple[int, date, date]]:
    """Pick the stationary segments analysed by the spatial stage.

    Returns ``(1-based index, first day, last day)`` triples.  Without any
    selector the longest segment (earliest on ties) is used.
    """
    spans = seg.segment_dates(days)
    if all_intervals:
        return [(k, a, b) for k, (a, b) in enumerate(spans, start=1)]
    if interval is not None:
        if not 1 <= interval <= len(spans):
            raise ValueError(f"interval {interval} out of range 1..{len(spans)}")
        return [(interval, *spans[interval - 1])]
    if interval_date is not None:
        for k, (a, b) in enumerate(spans, start=1):
            if a <= interval_date <= b:
                return [(k, a, b)]
        # falls in a gap between measured days: take the segment that follows
        for k, (a, b) in enumerate(spans, start=1):
            if interval_date < a:
                return [(k, a, b)]
        raise ValueError(f"{interval_date} is after the last measured day")
    lengths = [b - a for a, b in seg.segments]
    k = lengths.index(max(lengths))
    return [(k + 1, *spans[k])]


@dataclass
class IntervalResult:
    index: int
    start: date
    end: date
    hierarchy: ClusterHierarchy
    clustering: Clustering
    scores: list[ClusterScore]


@dataclass
class PipelineResult:
    series: CoarseSeries
    segmentation: Segmentation
    shape: float
    intervals: list[IntervalResult]
    output_dir: Path
    files: list[Path] = field(default_factory=list)


def _stage(module):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (StageError, FileNotFoundError):
                raise
            except Exception as exc:  # noqa: BLE001
                raise StageError(module, exc) from exc
        return inner
    return wrap


def _check_inputs(cfg: PipelineConfig) -> None:
    for p in (cfg.measurements, cfg.river_nodes, cfg.river_edges, cfg.stations):
        if not Path(p).is_file():
            raise FileNotFoundError(2, "input file not found", str(p))


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def choose_clustering(h: ClusterHierarchy, m_range=None) -> Clustering:
    lo, hi = m_range if m_range is not None else default_m_range(h)
    try:
        return select_clustering(h, (lo, hi))
    except ClusteringError as exc:
        log.warning("%s; keeping one cluster per connected component", exc)
        return h.levels[0]


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Run every stage and write the artifacts into ``cfg.output_dir``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _check_inputs(cfg)

    ms = _stage("ingest")(read_measurements)(cfg.measurements)
    series = _stage("ingest")(build_coarse_series)(ms)
    fit = _stage("changepoint")(segment_pipeline)(
        series, min_seg_len=cfg.min_seg_len, penalty_factors=cfg.penalty_factors, bounds=cfg.bounds)
    seg = fit.segmentation

    files = []
    coarse_path = out / "coarse.csv"
    with open(coarse_path, "w", newline="", encoding="utf-8") as fh:
        series.to_csv(fh)
    seg_path = out / "segmentation.json"
    _dump(seg.to_dict(series.days), seg_path)
    path_path = out / "penalty_path.json"
    _dump(fit.path.to_dict(series.days), path_path)
    files += [coarse_path, seg_path, path_path]

    def load_spatial():
        with open(cfg.river_nodes, encoding="utf-8") as n, open(cfg.river_edges, encoding="utf-8") as e:
            river = read_river_network(n, e)
        with open(cfg.stations, encoding="utf-8") as fh:
            stations = read_stations(fh)
        return river, stations, build_station_graph(stations, river)

    river, stations, graph = _stage("station_graph")(load_spatial)()
    selected = _stage("cli")(resolve_intervals)(
        seg, series.days, interval=cfg.interval, interval_date=cfg.interval_date,
        all_intervals=cfg.all_intervals)

    results = []
    for idx, start, end in selected:
        target = out / f"interval_{idx:02d}" if cfg.all_intervals else out

        def cluster_stage():
            sub = induced_subgraph(graph, active_stations(ms, start, end))
            if len(sub) == 0:
                raise ValueError(f"no station active between {start} and {end}")
            h = greedy_global_hierarchy(sub)
            return h, choose_clustering(h, cfg.m_range)

        h, clustering = _stage("spatial_cluster")(cluster_stage)()
        scores = _stage("anomaly")(rank_clusters)(
            clustering, (start, end), ms, fit.shape,
            include_degenerate=cfg.include_degenerate, bounds=cfg.bounds)
        target.mkdir(parents=True, exist_ok=True)
        files += _write_interval(target, idx, start, end, fit.shape, h, clustering, scores)
        if cfg.plots:
            files += _plot_interval(target, h, clustering, scores, stations, river, cfg.m_range)
        results.append(IntervalResult(idx, start, end, h, clustering, scores))

    if cfg.plots:
        from .plotting import plot_penalty_path, plot_segmentation
        plot_segmentation(series, seg, out / "segmentation.svg")
        plot_penalty_path(fit.path, seg, out / "penalty_path.svg")
        files += [out / "segmentation.svg", out / "penalty_path.svg"]
    return PipelineResult(series, seg, fit.shape, results, out, files)


def report_dict(idx: int, start: date, end: date, shape: float,
                scores: Sequence[ClusterScore]) -> dict:
    return {
        "interval": {"index": idx, "start": start.isoformat(), "end": end.isoformat()},
        "sigma_hat": shape,
        "clusters": [s.to_dict() for s in scores],
    }


def _write_interval(target: Path, idx, start, end, shape, h, clustering, scores) -> list[Path]:
    paths = [target / n for n in ("clustering.csv", "clustering.json",
                                  "anomaly_report.json", "anomaly_report.csv")]
    with open(paths[0], "w", newline="", encoding="utf-8") as fh:
        clustering.to_csv(fh)
    paths[1].write_text(hierarchy_json(h, clustering) + "\n", encoding="utf-8")
    _dump(report_dict(idx, start, end, shape, scores), paths[2])
    with open(paths[3], "w", newline="", encoding="utf-8") as fh:
        write_report_csv(scores, fh)
    return paths


def _plot_interval(target: Path, h, clustering, scores, stations, river, m_range) -> list[Path]:
    from .plotting import plot_inertia, plot_pareto, plot_station_map
    paths = [target / n for n in ("inertia.svg", "pareto.svg", "station_map.svg")]
    plot_inertia(h, clustering, paths[0], m_range or default_m_range(h))
    plot_pareto(scores, paths[1])
    plot_station_map(stations, scores, paths[2], river)
    return paths


def run_configured(cfg: PipelineConfig, cp: configparser.ConfigParser) -> PipelineResult:
    """Run the pipeline, first generating the inputs if ``cfg.simulate`` is set.

    Simulation reads the ``[simulate]`` section of ``cp`` with the pipeline
    seed.
    """
    if cfg.simulate:
        from .simulate import spec_from_config, write_simulation
        spec = _stage("simulate")(spec_from_config)(cp, seed=cfg.seed)
        _stage("simulate")(write_simulation)(
            spec, measurements=cfg.measurements, river_nodes=cfg.river_nodes,
            river_edges=cfg.river_edges, stations=cfg.stations,
            truth=Path(cfg.output_dir) / "ground_truth.json")
        cfg = replace(cfg, simulate=False)
    return run_pipeline(cfg)


def run_from_config(path, *, environ=os.environ, **overrides) -> PipelineResult:
    """Load a config file, apply ``overrides`` to its fields and run it."""
    cfg, cp = load_config(path, environ=environ)
    if overrides:
        cfg = replace(cfg, **overrides)
    return run_configured(cfg, cp)
