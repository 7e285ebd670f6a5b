import configparser
import json
import math
from datetime import date

import numpy as np
import pytest

from censeg.ingest import build_coarse_series, read_measurements
from censeg.simulate import (Anomaly, Regime, SimulationError, SimulationSpec, _parse_regimes,
                             censoring_threshold, make_layout, simulate_coarse_series,
                             simulate_measurements, spec_from_config, toy_layout, write_simulation)


def _spec(**kw):
    base = dict(start=date(2017, 1, 1), end=date(2017, 12, 31),
                regimes=(Regime(date(2017, 1, 1), 2.0), Regime(date(2017, 7, 1), 0.2)),
                shape=0.8, seed=3)
    base.update(kw)
    return SimulationSpec(**base)


def test_two_regime_truth():
    ms, truth = simulate_measurements(_spec())
    assert truth["breaks"] == ["2017-07-01"]
    assert len(truth["groups"]) == 6
    assert all(date(2017, 1, 1) <= m.day <= date(2017, 12, 31) for m in ms)
    again, _ = simulate_measurements(_spec())
    assert again == ms


def test_censoring_fraction_matches_theory():
    spec = _spec(regimes=(Regime(date(2017, 1, 1), 5.0),), samples_mean=2000.0, loq=0.1,
                 layout="random", n_stations=20, n_rivers=2)
    ms, _ = simulate_measurements(spec)
    p = -math.expm1(-(5.0 * 0.1) ** 0.8)
    n = len(ms)
    frac = np.mean([m.censored for m in ms])
    assert abs(frac - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_case_study_scale():
    spec = _spec(layout="random", n_stations=337, n_rivers=5, samples_mean=32.0, samples_spread=0.8)
    layout = make_layout(spec)
    assert len(layout.stations) == 337 and len(layout.groups) == 5
    ms, _ = simulate_measurements(spec, layout)
    per_station = len(ms) / 337
    assert 29 <= per_station <= 35


def test_campaign_sampling_shares_days():
    spec = _spec(sampling="campaign", samples_mean=40, participation=0.8)
    ms, _ = simulate_measurements(spec)
    days = {m.day for m in ms}
    assert len(days) <= 80
    per_day = build_coarse_series(ms)
    assert per_day.K == len(days)


def test_planted_anomaly_raises_values():
    spec = _spec(anomalies=(Anomaly(("R2S1", "R2S2"), 0, 10.0),), sampling="campaign",
                 samples_mean=150, participation=1.0)
    ms, truth = simulate_measurements(spec)
    first = [m for m in ms if m.day < date(2017, 7, 1)]
    planted = np.mean([m.x for m in first if m.station_id in ("R2S1", "R2S2")])
    normal = np.mean([m.x for m in first if m.station_id not in ("R2S1", "R2S2")])
    assert planted > 4 * normal
    assert truth["anomalies"][0]["stations"] == ["R2S1", "R2S2"]
    with pytest.raises(SimulationError):
        simulate_measurements(_spec(anomalies=(Anomaly(("nope",), 0, 2.0),)))


@pytest.mark.parametrize("kw", [
    dict(regimes=()),
    dict(regimes=(Regime(date(2017, 2, 1), 1.0),)),
    dict(regimes=(Regime(date(2017, 1, 1), 1.0), Regime(date(2016, 1, 1), 1.0))),
    dict(regimes=(Regime(date(2017, 1, 1), -1.0),)),
    dict(end=date(2016, 1, 1)),
    dict(sampling="weekly"),
    dict(participation=0.0),
    dict(anomalies=(Anomaly(("R1S1",), 5, 2.0),)),
])
def test_invalid_specs(kw):
    with pytest.raises(SimulationError):
        _spec(**kw)


def test_regime_parsing():
    assert _parse_regimes("2017-01-01:90, 2017-10-01:1.8") == (
        Regime(date(2017, 1, 1), 90.0), Regime(date(2017, 10, 1), 1.8))
    with pytest.raises(SimulationError):
        _parse_regimes("2017-01-01=3")


def test_config_and_files(tmp_path):
    cp = configparser.ConfigParser()
    cp.read_string("[simulate]\nstart = 2017-01-01\nend = 2017-06-30\n"
                   "regimes = 2017-01-01:3, 2017-04-01:0.3\nshape = 0.9\nseed = 4\n"
                   "anomaly_stations = R1S1\nanomaly_factor = 5\n")
    spec = spec_from_config(cp)
    assert spec.seed == 4 and spec.anomalies[0].factor == 5.0
    assert spec_from_config(cp, seed=9).seed == 9
    paths = {k: tmp_path / f"{k}.x" for k in ("measurements", "river_nodes", "river_edges",
                                             "stations", "truth")}
    gt = write_simulation(spec, **paths)
    assert json.loads(paths["truth"].read_text()) == gt
    assert len(read_measurements(paths["measurements"])) > 0
    with pytest.raises(SimulationError):
        spec_from_config(configparser.ConfigParser())
    bad = configparser.ConfigParser()
    bad.read_string("[simulate]\nstart = 2017-01-01\n")
    with pytest.raises(SimulationError):
        spec_from_config(bad)


def test_coarse_generator_and_threshold():
    rates = [4.0, 0.4]
    q = censoring_threshold(rates, 0.7, 0.5)
    frac = np.mean([-math.expm1(-(r * q) ** 0.7) for r in rates])
    assert frac == pytest.approx(0.5, abs=1e-9)
    s, breaks = simulate_coarse_series([30, 40], rates, 0.7, q, 1)
    assert s.K == 70 and breaks == [30]
    assert np.all(s.y_bar[s.censored] == q)
    with pytest.raises(SimulationError):
        simulate_coarse_series([10], [1.0, 2.0], 0.7, q, 1)


def test_toy_layout_shape():
    lay = toy_layout()
    assert len(lay.stations) == 12 and len(lay.groups) == 6
    assert lay.river.n_nodes == 3 * 301
