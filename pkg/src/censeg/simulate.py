"""Synthetic monitoring data with known ground truth.

Values follow a censored Weibull model whose rate changes at regime
boundaries; planted anomalies divide the rate of selected stations
(multiplying their concentrations) during one regime.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Optional, Sequence

import numpy as np

from .graph import RiverNetwork
from .ingest import CoarseSeries, Measurement
from .weibull import WeibullParams, weibull_inverse_cdf


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class Regime:
    start: date
    rate: float


@dataclass(frozen=True)
class Anomaly:
    stations: tuple[str, ...]
    regime: int
    factor: float


@dataclass(frozen=True)
class Layout:
    river: RiverNetwork
    stations: tuple[tuple[str, tuple[float, float]], ...]
    groups: tuple[tuple[str, ...], ...]


@dataclass(frozen=True)
class SimulationSpec:
    start: date
    end: date
    regimes: tuple[Regime, ...]
    shape: float
    loq: float = 0.02
    samples_mean: float = 32.0
    samples_spread: float = 0.0
    layout: str = "toy"
    n_stations: int = 337
    n_rivers: int = 5
    sampling: str = "independent"
    participation: float = 0.9
    anomalies: tuple[Anomaly, ...] = field(default=())
    seed: int = 0

    def __post_init__(self):
        if self.end < self.start:
            raise SimulationError("end before start")
        if not self.regimes:
            raise SimulationError("at least one regime is required")
        if self.regimes[0].start != self.start:
            raise SimulationError("first regime must begin at the simulation start")
        starts = [r.start for r in self.regimes]
        if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] > self.end:
            raise SimulationError("regime starts must be increasing and inside [start, end]")
        if any(not r.rate > 0 for r in self.regimes):
            raise SimulationError("regime rates must be positive")
        if not (self.shape > 0 and self.loq > 0 and self.samples_mean > 0):
            raise SimulationError("shape, loq and samples_mean must be positive")
        if self.sampling not in ("independent", "campaign"):
            raise SimulationError(f"unknown sampling scheme {self.sampling!r}")
        if not 0 < self.participation <= 1:
            raise SimulationError("participation must lie in (0, 1]")
        for a in self.anomalies:
            if not 0 <= a.regime < len(self.regimes):
                raise SimulationError(f"anomaly regime {a.regime} out of range")
            if not a.factor > 0:
                raise SimulationError("anomaly factor must be positive")

    @property
    def breaks(self) -> list[date]:
        return [r.start for r in self.regimes[1:]]

    def regime_index(self, d: date) -> int:
        k = 0
        for i, r in enumerate(self.regimes):
            if r.start <= d:
                k = i
        return k


def toy_layout() -> Layout:
    """Three disjoint rivers with two tight pairs of stations on each.

    The six pairs are the planted spatial groups.
    """
    coords, sections, stations, groups = [], [], [], []
    pair_x = [(2000.0, 2600.0, 19000.0, 19700.0),
              (3000.0, 3500.0, 21000.0, 21800.0),
              (1500.0, 2300.0, 17500.0, 18100.0)]
    for r in range(3):
        y0 = 50000.0 * r
        base = len(coords)
        xs = np.arange(0.0, 30001.0, 100.0)
        coords.extend((x, y0) for x in xs)
        sections.extend((base + i, base + i + 1, 100.0) for i in range(len(xs) - 1))
        ids = [f"R{r + 1}S{k + 1}" for k in range(4)]
        for sid, x in zip(ids, pair_x[r]):
            stations.append((sid, (x + 7.0, y0 + 30.0)))
        groups.extend([tuple(ids[:2]), tuple(ids[2:])])
    river = RiverNetwork(np.array(coords), np.array(sections, dtype=float))
    return Layout(river, tuple(stations), tuple(groups))


def random_layout(n_stations: int, n_rivers: int, rng: np.random.Generator) -> Layout:
    """Random branching rivers with stations scattered along them.

    Each river is a random tree of 1 km sections; stations are grouped by
    river.
    """
    coords, sections, stations, groups = [], [], [], []
    per_river = np.full(n_rivers, n_stations // n_rivers)
    per_river[: n_stations % n_rivers] += 1
    sid = 0
    for r in range(n_rivers):
        base = len(coords)
        origin = np.array([80000.0 * r, 0.0])
        n_nodes = max(4, 3 * int(per_river[r]))
        pts = [origin]
        for i in range(1, n_nodes):
            parent = int(rng.integers(0, i))
            ang = rng.uniform(0, 2 * math.pi)
            pts.append(pts[parent] + 1000.0 * np.array([math.cos(ang), math.sin(ang)]))
            sections.append((base + parent, base + i, 1000.0))
        coords.extend(map(tuple, pts))
        chosen = rng.choice(n_nodes, size=int(per_river[r]), replace=False)
        ids = []
        for node in sorted(chosen.tolist()):
            jitter = rng.normal(0, 50.0, size=2)
            name = f"S{sid:04d}"
            sid += 1
            stations.append((name, tuple(float(v) for v in pts[node] + jitter)))
            ids.append(name)
        groups.append(tuple(ids))
    river = RiverNetwork(np.array(coords), np.array(sections, dtype=float).reshape(-1, 3))
    return Layout(river, tuple(stations), tuple(groups))


def make_layout(spec: SimulationSpec) -> Layout:
    if spec.layout == "toy":
        return toy_layout()
    if spec.layout == "random":
        return random_layout(spec.n_stations, spec.n_rivers, np.random.default_rng(spec.seed + 7919))
    raise SimulationError(f"unknown layout {spec.layout!r}")


def simulate_measurements(spec: SimulationSpec, layout: Optional[Layout] = None):
    """Draw measurements for every station of the layout.

    With ``independent`` sampling each station draws a Poisson number of
    sampling days (mean drawn from a lognormal with median
    ``samples_mean * exp(-spread**2 / 2)``, so the mean over stations is
    ``samples_mean``), placed uniformly without replacement over the period.
    With ``campaign`` sampling a Poisson(``samples_mean``) number of
    campaign days is drawn once for the network and every station joins each
    campaign with probability ``participation``.

    Returns ``(measurements, ground_truth)``.
    """
    layout = layout or make_layout(spec)
    rng = np.random.default_rng(spec.seed)
    n_days = (spec.end - spec.start).days + 1
    factor = {}
    for a in spec.anomalies:
        for s in a.stations:
            factor[(s, a.regime)] = a.factor
    known = {s for s, _ in layout.stations}
    unknown = {s for a in spec.anomalies for s in a.stations} - known
    if unknown:
        raise SimulationError(f"anomaly stations not in layout: {sorted(unknown)}")

    if spec.sampling == "campaign":
        n_campaigns = min(int(rng.poisson(spec.samples_mean)), n_days)
        campaigns = np.sort(rng.choice(n_days, size=n_campaigns, replace=False))

    out = []
    for sid, _ in layout.stations:
        if spec.sampling == "campaign":
            days = campaigns[rng.random(campaigns.size) < spec.participation]
        else:
            mean = spec.samples_mean * math.exp(spec.samples_spread * rng.standard_normal()
                                                - 0.5 * spec.samples_spread**2)
            count = min(int(rng.poisson(mean)), n_days)
            days = np.sort(rng.choice(n_days, size=count, replace=False))
        u = 1.0 - rng.random(days.size)
        for d, uk in zip(days.tolist(), u.tolist()):
            day = spec.start + timedelta(days=d)
            k = spec.regime_index(day)
            rate = spec.regimes[k].rate / factor.get((sid, k), 1.0)
            y = float(weibull_inverse_cdf(WeibullParams(rate, spec.shape), uk))
            value = y if y >= spec.loq else None
            out.append(Measurement(sid, day, spec.loq, value))
    truth = {
        "seed": spec.seed,
        "shape": spec.shape,
        "breaks": [d.isoformat() for d in spec.breaks],
        "regimes": [{"start": r.start.isoformat(), "rate": r.rate} for r in spec.regimes],
        "groups": [list(g) for g in layout.groups],
        "anomalies": [{"stations": list(a.stations), "regime": a.regime, "factor": a.factor}
                      for a in spec.anomalies],
    }
    return out, truth


def simulate_coarse_series(lengths: Sequence[int], rates: Sequence[float], shape: float,
                           q, seed: int) -> tuple[CoarseSeries, list[int]]:
    """Piecewise-stationary coarse series with known change-points.

    ``q`` is a scalar threshold or one threshold per entry.  Returns the
    series and the true break indices.
    """
    if len(lengths) != len(rates) or not lengths:
        raise SimulationError("need one rate per segment")
    rng = np.random.default_rng(seed)
    n = int(sum(lengths))
    qv = np.broadcast_to(np.asarray(q, dtype=float), (n,)).copy()
    lam = np.repeat(np.asarray(rates, dtype=float), lengths)
    y = (-np.log(1.0 - rng.random(n))) ** (1.0 / shape) / lam
    cens = y < qv
    series = CoarseSeries.from_arrays(np.where(cens, qv, y), qv, cens)
    return series, np.cumsum(lengths)[:-1].tolist()


def censoring_threshold(rates: Sequence[float], shape: float, fraction: float) -> float:
    """Common threshold giving an average censoring ``fraction`` across ``rates``."""
    from scipy.optimize import brentq

    def excess(log_q):
        q = math.exp(log_q)
        return float(np.mean([-math.expm1(-(r * q) ** shape) for r in rates])) - fraction

    return math.exp(brentq(excess, -60.0, 60.0))


def _parse_regimes(text: str) -> tuple[Regime, ...]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            d, rate = item.split(":")
            out.append(Regime(date.fromisoformat(d.strip()), float(rate)))
        except ValueError:
            raise SimulationError(f"bad regime {item!r}, expected YYYY-MM-DD:rate") from None
    return tuple(out)


def spec_from_config(cp: configparser.ConfigParser, seed: Optional[int] = None) -> SimulationSpec:
    """Read the ``[simulate]`` section of an INI file."""
    if not cp.has_section("simulate"):
        raise SimulationError("config has no [simulate] section")
    s = cp["simulate"]
    anomalies = []
    if s.get("anomaly_stations"):
        anomalies.append(Anomaly(
            tuple(x.strip() for x in s["anomaly_stations"].split(",") if x.strip()),
            s.getint("anomaly_regime", 0), s.getfloat("anomaly_factor", 10.0)))
    try:
        return SimulationSpec(
            start=date.fromisoformat(s["start"]),
            end=date.fromisoformat(s["end"]),
            regimes=_parse_regimes(s["regimes"]),
            shape=s.getfloat("shape", 1.0),
            loq=s.getfloat("loq", 0.02),
            samples_mean=s.getfloat("samples_mean", 32.0),
            samples_spread=s.getfloat("samples_spread", 0.0),
            layout=s.get("layout", "toy"),
            n_stations=s.getint("n_stations", 337),
            n_rivers=s.getint("n_rivers", 5),
            sampling=s.get("sampling", "independent"),
            participation=s.getfloat("participation", 0.9),
            anomalies=tuple(anomalies),
            seed=seed if seed is not None else s.getint("seed", 0),
        )
    except KeyError as exc:
        raise SimulationError(f"missing key {exc.args[0]} in [simulate]") from None


def write_simulation(spec: SimulationSpec, *, measurements, river_nodes, river_edges, stations,
                     truth) -> dict:
    """Simulate and write every input file plus the ground-truth JSON."""
    import json
    from pathlib import Path

    from .graph import write_river_network, write_stations
    from .ingest import write_measurements

    layout = make_layout(spec)
    ms, gt = simulate_measurements(spec, layout)
    for p in (measurements, river_nodes, river_edges, stations, truth):
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    with open(measurements, "w", newline="", encoding="utf-8") as fh:
        write_measurements(ms, fh)
    with open(river_nodes, "w", newline="", encoding="utf-8") as n, \
            open(river_edges, "w", newline="", encoding="utf-8") as e:
        write_river_network(layout.river, n, e)
    with open(stations, "w", newline="", encoding="utf-8") as fh:
        write_stations(layout.stations, fh)
    Path(truth).write_text(json.dumps(gt, indent=2) + "\n", encoding="utf-8")
    return gt
