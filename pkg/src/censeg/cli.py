"""Command-line entry point: ``censeg <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

EX_OK = 0
EX_FAILURE = 1
EX_NOINPUT = 2
EX_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


class ModuleError(RuntimeError):
    def __init__(self, module: str, cause):
        self.module = module
        super().__init__(f"{module}: {cause}")


def _interval_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--interval", type=int, metavar="L",
                   help="1-based index of the stationary segment to analyse")
    g.add_argument("--interval-date", type=date.fromisoformat, metavar="YYYY-MM-DD",
                   help="analyse the segment containing this day")
    g.add_argument("--all-intervals", action="store_true", help="analyse every segment")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="censeg", description=(
        "Change-point detection and spatial anomaly ranking for left-censored "
        "water-quality measurements."))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate measurements and build the daily-maximum series")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", type=Path, default=Path("coarse.csv"))
    p.add_argument("--naiade", action="store_true",
                   help="input is a semicolon-separated analysis export (best effort)")
    p.add_argument("--parameter", help="parameter code to keep with --naiade")
    p.add_argument("--measurements-output", type=Path,
                   help="also write the validated measurements in the standard CSV schema")

    p = sub.add_parser("segment", help="segment a coarse series")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--output", type=Path, default=Path("segmentation.json"))
    p.add_argument("--path-output", type=Path, help="write the full penalty path as JSON")
    p.add_argument("--plot", type=Path, help="SVG step plot of the segmentation")
    p.add_argument("--min-seg-len", type=int, default=2)
    p.add_argument("--penalty-factors", type=float, nargs=2, default=(0.2, 5.0), metavar=("LOW", "HIGH"))

    for name, helptext in (("cluster", "cluster the stations active in an interval"),
                           ("rank", "score and rank clusters of an interval")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--measurements", required=True, type=Path)
        p.add_argument("--segmentation", required=True, type=Path)
        p.add_argument("--output-dir", type=Path, default=Path("."))
        _interval_args(p)
        if name == "cluster":
            p.add_argument("--river-nodes", required=True, type=Path)
            p.add_argument("--river-edges", required=True, type=Path)
            p.add_argument("--stations", required=True, type=Path)
            p.add_argument("--m-range", type=int, nargs=2, metavar=("LOW", "HIGH"))
        else:
            p.add_argument("--clustering", required=True, type=Path)
            p.add_argument("--stations", type=Path, help="station coordinates for the map plot")
            p.add_argument("--include-degenerate", action="store_true")
        p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("simulate", help="generate synthetic inputs with known ground truth")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--output-dir", type=Path, default=Path("."))
    p.add_argument("--seed", type=int)

    p = sub.add_parser("pipeline", help="run every stage from a config file")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--output-dir", type=Path)
    _interval_args(p)
    p.add_argument("--include-degenerate", action="store_true", default=None)
    p.add_argument("--no-plots", action="store_true")
    return parser


def _require(*paths: Path) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(2, "input file not found", str(p))


def _guard(module):
    def wrap(fn):
        def inner(*a, **k):
            try:
                return fn(*a, **k)
            except (FileNotFoundError, ModuleError):
                raise
            except Exception as exc:  # noqa: BLE001
                raise ModuleError(module, exc) from exc
        return inner
    return wrap


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def cmd_ingest(args) -> int:
    from .ingest import build_coarse_series, parse_measurements, parse_naiade, write_measurements
    _require(args.input)

    def load():
        with open(args.input, newline="", encoding="utf-8-sig") as fh:
            return parse_naiade(fh, args.parameter) if args.naiade else parse_measurements(fh)

    ms = _guard("ingest")(load)()
    series = _guard("ingest")(build_coarse_series)(ms)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        series.to_csv(fh)
    if args.measurements_output:
        with open(args.measurements_output, "w", newline="", encoding="utf-8") as fh:
            write_measurements(ms, fh)
    print(f"{len(ms)} measurements, {series.K} days -> {args.output}")
    return EX_OK


def cmd_segment(args) -> int:
    from .changepoint import segment_pipeline
    from .ingest import CoarseSeries
    _require(args.input)

    def load():
        with open(args.input, newline="", encoding="utf-8") as fh:
            return CoarseSeries.from_csv(fh)

    series = _guard("ingest")(load)()
    fit = _guard("changepoint")(segment_pipeline)(
        series, min_seg_len=args.min_seg_len, penalty_factors=tuple(args.penalty_factors))
    _write_json(fit.segmentation.to_dict(series.days), args.output)
    if args.path_output:
        _write_json(fit.path.to_dict(series.days), args.path_output)
    if args.plot:
        from .plotting import plot_segmentation
        plot_segmentation(series, fit.segmentation, args.plot)
    print(f"sigma_hat={fit.shape:.4g}, {fit.segmentation.n_changepoints} breaks -> {args.output}")
    return EX_OK


def _load_interval(args):
    from .changepoint import Segmentation
    from .ingest import build_coarse_series, read_measurements
    from .pipeline import resolve_intervals
    _require(args.measurements, args.segmentation)
    ms = _guard("ingest")(read_measurements)(args.measurements)
    days = build_coarse_series(ms).days
    seg_dict = json.loads(Path(args.segmentation).read_text(encoding="utf-8"))
    seg = _guard("changepoint")(Segmentation.from_dict)(seg_dict)
    if len(days) != seg.n:
        raise ModuleError("changepoint", "segmentation does not match the measurements")
    intervals = _guard("cli")(resolve_intervals)(
        seg, days, interval=args.interval, interval_date=args.interval_date,
        all_intervals=args.all_intervals)
    return ms, seg, intervals


def cmd_cluster(args) -> int:
    from .clustering import hierarchy_json
    from .graph import build_station_graph, induced_subgraph, read_river_network, read_stations
    from .ingest import active_stations
    from .pipeline import choose_clustering
    _require(args.river_nodes, args.river_edges, args.stations)
    ms, _, intervals = _load_interval(args)

    def graph():
        with open(args.river_nodes, encoding="utf-8") as n, open(args.river_edges, encoding="utf-8") as e:
            river = read_river_network(n, e)
        with open(args.stations, encoding="utf-8") as fh:
            return build_station_graph(read_stations(fh), river)

    g = _guard("station_graph")(graph)()
    for idx, start, end in intervals:
        out = args.output_dir / f"interval_{idx:02d}" if args.all_intervals else args.output_dir
        out.mkdir(parents=True, exist_ok=True)

        def run():
            from .clustering import greedy_global_hierarchy
            sub = induced_subgraph(g, active_stations(ms, start, end))
            h = greedy_global_hierarchy(sub)
            return h, choose_clustering(h, tuple(args.m_range) if args.m_range else None)

        h, chosen = _guard("spatial_cluster")(run)()
        with open(out / "clustering.csv", "w", newline="", encoding="utf-8") as fh:
            chosen.to_csv(fh)
        (out / "clustering.json").write_text(hierarchy_json(h, chosen) + "\n", encoding="utf-8")
        if not args.no_plots:
            from .clustering import default_m_range
            from .plotting import plot_inertia
            plot_inertia(h, chosen, out / "inertia.svg", tuple(args.m_range) if args.m_range
                         else default_m_range(h))
        print(f"interval {idx} [{start}, {end}]: {len(chosen)} clusters -> {out / 'clustering.csv'}")
    return EX_OK


def cmd_rank(args) -> int:
    from .anomaly import rank_clusters, write_report_csv
    from .clustering import Clustering
    from .pipeline import report_dict
    _require(args.clustering, args.stations)
    ms, seg, intervals = _load_interval(args)
    for idx, start, end in intervals:
        out = args.output_dir / f"interval_{idx:02d}" if args.all_intervals else args.output_dir
        src = args.clustering
        if args.all_intervals and (out / "clustering.csv").is_file():
            src = out / "clustering.csv"
        with open(src, newline="", encoding="utf-8") as fh:
            clustering = _guard("spatial_cluster")(Clustering.from_csv)(fh)
        scores = _guard("anomaly")(rank_clusters)(
            clustering, (start, end), ms, seg.shape, include_degenerate=args.include_degenerate)
        _write_json(report_dict(idx, start, end, seg.shape, scores), out / "anomaly_report.json")
        with open(out / "anomaly_report.csv", "w", newline="", encoding="utf-8") as fh:
            write_report_csv(scores, fh)
        if not args.no_plots:
            from .plotting import plot_pareto, plot_station_map
            plot_pareto(scores, out / "pareto.svg")
            if args.stations:
                from .graph import read_stations
                with open(args.stations, encoding="utf-8") as fh:
                    plot_station_map(read_stations(fh), scores, out / "station_map.svg")
        top = [s.cluster_id for s in scores if s.pareto_level == 1]
        print(f"interval {idx} [{start}, {end}]: level-1 clusters {top} -> {out / 'anomaly_report.json'}")
    return EX_OK


def cmd_simulate(args) -> int:
    import configparser

    from .simulate import spec_from_config, write_simulation
    _require(args.config)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(args.config, encoding="utf-8") as fh:
        cp.read_file(fh)
    seed = args.seed
    if seed is None and os.environ.get("CENSEG_SEED"):
        seed = int(os.environ["CENSEG_SEED"])
    spec = _guard("simulate")(spec_from_config)(cp, seed=seed)
    out = args.output_dir
    gt = _guard("simulate")(write_simulation)(
        spec, measurements=out / "measurements.csv", river_nodes=out / "river_nodes.csv",
        river_edges=out / "river_edges.csv", stations=out / "stations.csv",
        truth=out / "ground_truth.json")
    print(f"seed {spec.seed}: {len(gt['breaks'])} breaks -> {out}")
    return EX_OK


def cmd_pipeline(args) -> int:
    from .pipeline import ConfigError, StageError, load_config, run_configured
    _require(args.config)
    try:
        cfg, cp = load_config(args.config)
        overrides = {}
        if args.output_dir is not None:
            overrides["output_dir"] = args.output_dir
        if args.include_degenerate:
            overrides["include_degenerate"] = True
        if args.no_plots:
            overrides["plots"] = False
        if args.interval is not None or args.interval_date is not None or args.all_intervals:
            # a selector on the command line replaces the one in the config
            overrides.update(interval=args.interval, interval_date=args.interval_date,
                             all_intervals=args.all_intervals)
        res = run_configured(replace(cfg, **overrides), cp)
    except StageError as exc:
        raise ModuleError(exc.module, exc.cause) from exc
    except ConfigError as exc:
        raise ModuleError("cli", exc) from exc
    for iv in res.intervals:
        top = [s.cluster_id for s in iv.scores if s.pareto_level == 1]
        print(f"interval {iv.index} [{iv.start}, {iv.end}]: {len(iv.clustering)} clusters, "
              f"level-1 {top}")
    print(f"artifacts in {res.output_dir}")
    return EX_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "segment": cmd_segment,
    "cluster": cmd_cluster,
    "rank": cmd_rank,
    "simulate": cmd_simulate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"censeg: {exc.strerror or 'file not found'}: {exc.filename}", file=sys.stderr)
        return EX_NOINPUT
    except ModuleError as exc:
        print(f"censeg: {exc}", file=sys.stderr)
        return EX_FAILURE


if __name__ == "__main__":
    sys.exit(main())
