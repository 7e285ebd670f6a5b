import io
import random
from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest

from censeg.ingest import (CoarseSeries, IngestError, Measurement, active_stations,
                           build_coarse_series, filter_interval, parse_measurements,
                           parse_naiade, station_samples, to_censored_sample,
                           write_measurements)

HEADER = "station_id,date,loq,value\n"


def test_parse_rows():
    ms = parse_measurements(HEADER + "S1,2017-03-01,0.02,\nS1,2017-03-01,0.02,0.05\n")
    assert ms[0] == Measurement("S1", date(2017, 3, 1), 0.02, None)
    assert ms[0].censored and ms[0].x == 0.02
    assert ms[1].value == 0.05 and not ms[1].censored


@pytest.mark.parametrize("row, line", [
    ("S1,2017-03-01,0.02,0.01", 2),
    ("S1,2017-03-01,0,", 2),
    ("S1,2017-03-01,-1,", 2),
    ("S1,2017-13-01,0.02,", 2),
    ("S1,2017-03-01,abc,", 2),
    ("S1,2017-03-01,0.02", 2),
    (",2017-03-01,0.02,", 2),
])
def test_parse_errors_carry_line_number(row, line):
    with pytest.raises(IngestError) as err:
        parse_measurements(HEADER + row + "\n")
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_parse_error_on_later_line_and_bad_header():
    text = HEADER + "S1,2017-03-01,0.02,\n\nS2,2017-03-02,0.02,0.001\n"
    with pytest.raises(IngestError) as err:
        parse_measurements(text)
    assert err.value.line == 4
    with pytest.raises(IngestError):
        parse_measurements("a,b,c,d\n")
    with pytest.raises(IngestError):
        parse_measurements("")


def test_timestamps_truncate_to_utc_day():
    ms = parse_measurements(HEADER + "S1,2017-03-01T23:30:00-02:00,0.02,\n"
                            "S1,2017-03-01T10:00:00Z,0.02,\n")
    assert ms[0].day == date(2017, 3, 2)
    assert ms[1].day == date(2017, 3, 1)


def test_write_read_round_trip():
    ms = [Measurement("A", date(2017, 1, 2), 0.02, None),
          Measurement("B", datetime(2017, 1, 3, 8, tzinfo=timezone.utc), 0.1, 0.30000000000000004)]
    buf = io.StringIO()
    write_measurements(ms, buf)
    assert parse_measurements(buf.getvalue()) == ms


def test_coarse_singleton_and_mixed_day():
    c = build_coarse_series([Measurement("S", date(2017, 1, 1), 0.02)])
    assert c.K == 1 and c.y_bar[0] == 0.02 and c.q_bar[0] == 0.02 and c.censored[0]
    day = date(2017, 1, 1)
    c = build_coarse_series([Measurement("a", day, 0.02), Measurement("b", day, 0.01, 0.05),
                             Measurement("c", day, 0.01, 0.03)])
    assert (c.y_bar[0], c.q_bar[0], bool(c.censored[0])) == (0.05, 0.02, False)
    with pytest.raises(IngestError):
        build_coarse_series([])


def test_quantified_below_other_loq_is_still_uncensored():
    day = date(2017, 1, 1)
    c = build_coarse_series([Measurement("a", day, 0.5), Measurement("b", day, 0.01, 0.02)])
    assert not c.censored[0] and c.y_bar[0] == 0.02 and c.q_bar[0] == 0.5


def _random_measurements(rng, n=300, n_days=40):
    out = []
    for _ in range(n):
        loq = rng.choice([0.01, 0.02, 0.05])
        value = None if rng.random() < 0.6 else loq * (1 + rng.expovariate(1.0))
        out.append(Measurement(f"S{rng.randrange(12)}",
                               date(2017, 1, 1) + timedelta(days=rng.randrange(n_days)), loq, value))
    return out


def test_coarse_properties():
    rng = random.Random(0)
    ms = _random_measurements(rng)
    c = build_coarse_series(ms)
    assert c.K == len({m.day for m in ms})
    shuffled = ms[:]
    rng.shuffle(shuffled)
    assert build_coarse_series(shuffled) == c
    for k, d in enumerate(c.days):
        group = [m for m in ms if m.day == d]
        assert all(c.q_bar[k] >= m.loq for m in group)
        assert all(c.y_bar[k] >= m.value for m in group if m.value is not None)
        assert bool(c.censored[k]) == all(m.censored for m in group)
        if c.censored[k]:
            assert c.y_bar[k] == c.q_bar[k]


def test_filter_commutes_with_aggregation():
    ms = _random_measurements(random.Random(1))
    a, b = date(2017, 1, 10), date(2017, 1, 25)
    direct = build_coarse_series(filter_interval(ms, a, b))
    full = build_coarse_series(ms)
    keep = [k for k, d in enumerate(full.days) if a <= d <= b]
    sliced = CoarseSeries(tuple(full.days[k] for k in keep), full.y_bar[keep],
                          full.q_bar[keep], full.censored[keep])
    assert direct == sliced
    with pytest.raises(ValueError):
        filter_interval(ms, b, a)


def test_active_stations():
    ms = [Measurement("A", date(2017, 1, 5), 0.02), Measurement("B", date(2017, 2, 5), 0.02),
          Measurement("A", date(2017, 3, 5), 0.02, 0.04)]
    assert active_stations(ms, date(2018, 1, 1), date(2018, 2, 1)) == set()
    assert active_stations(ms, date(2017, 2, 5), date(2017, 2, 5)) == {"B"}
    assert active_stations(ms, date(2017, 1, 1), date(2017, 12, 31)) == {"A", "B"}
    groups = station_samples(ms)
    s = to_censored_sample(groups["A"])
    assert list(s.censored) == [True, False] and list(s.x) == [0.02, 0.04]


def test_coarse_csv_round_trip():
    c = build_coarse_series(_random_measurements(random.Random(2)))
    buf = io.StringIO()
    c.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "day,y_bar,q_bar,censored"
    buf.seek(0)
    back = CoarseSeries.from_csv(buf)
    assert back == c
    assert np.array_equal(back.to_sample(2, 5).x, c.y_bar[2:5])


def test_coarse_series_validation():
    with pytest.raises(ValueError):
        CoarseSeries.from_arrays([1.0, 2.0], [0.1], [False, False])
    d = date(2017, 1, 1)
    with pytest.raises(ValueError):
        CoarseSeries.from_arrays([1.0, 2.0], [0.1, 0.1], [False, False], days=[d, d])


NAIADE = """CdStationMesureEauxSurface;DatePrel;CdParametre;RsAna;LqAna;CdRqAna
04001000;2017-03-01;1107;0,05;0,02;1
04001000;2017-03-02;1107;0,02;0,02;10
04001000;2017-03-02;1108;3,1;0,1;1
04002000;2017-03-03;1107;0,01;0,02;1
04002000;2017-03-04;1107;;;0
"""


def test_parse_naiade():
    ms = parse_naiade(io.StringIO(NAIADE), parameter="1107")
    assert [(m.station_id, m.day.isoformat(), m.loq, m.value) for m in ms] == [
        ("04001000", "2017-03-01", 0.02, 0.05),
        ("04001000", "2017-03-02", 0.02, None),
        ("04002000", "2017-03-03", 0.02, 0.02),
    ]
    assert len(parse_naiade(io.StringIO(NAIADE))) == 4
    with pytest.raises(IngestError):
        parse_naiade(io.StringIO("a;b\n1;2\n"))
