import json
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import D, book, minute, trade
from spreadlab.errors import InsufficientDataError, ValidationError
from spreadlab.event_study import (
    EventWindow,
    condition4_event_adequacy,
    default_events,
    event_depth_profile,
    load_events,
    time_to_recovery,
)
from spreadlab.liquidity_metrics import depth_grid
from spreadlab.reconstruction import reconstruct_minute_books


def ep(i):
    return int(minute(i).timestamp())


# pre minutes 0..2, event minutes 3..7, post minutes 8..10
EVENT = EventWindow("shock", ep(3), ep(7), pad_before=180, pad_after=180)


def series(pre, during, post):
    values = list(pre) + list(during) + list(post)
    return {minute(i): D(v) for i, v in enumerate(values)}


def test_window_layout():
    assert EVENT.pre_minutes() == [minute(0), minute(1), minute(2)]
    assert EVENT.event_minutes() == [minute(i) for i in range(3, 8)]
    assert EVENT.post_minutes() == [minute(8), minute(9), minute(10)]
    with pytest.raises(ValidationError):
        EventWindow("bad", 10, 10)


def test_recovery_hand_example():
    rep = time_to_recovery(series([100] * 3, [100, 40, 50, 80, 100], [100] * 3), EVENT, D("0.75"))
    assert rep.baseline_depth == 100
    assert rep.trough_minute.minute == minute(4)
    assert rep.recovery_minutes == 2
    assert rep.recovered and rep.impaired


def test_never_impaired():
    rep = time_to_recovery(series([100] * 3, [90, 80, 76, 75, 99], [100] * 3), EVENT)
    assert rep.recovery_minutes == 0
    assert not rep.impaired


def test_never_recovered():
    rep = time_to_recovery(series([100] * 3, [100, 40, 50, 60, 70], [70, 74, 74]), EVENT)
    assert rep.recovery_minutes is None
    assert rep.to_record()["recovery_minutes"] == "not recovered"


def test_recovery_can_land_in_post_pad():
    rep = time_to_recovery(series([100] * 3, [100, 100, 100, 100, 10], [10, 75, 10]), EVENT)
    assert rep.trough_minute.minute == minute(7)
    assert rep.recovery_minutes == 2


def test_gap_and_zero_baseline_errors():
    s = series([100] * 3, [100, 40, 50, 80, 100], [100] * 3)
    del s[minute(5)]
    with pytest.raises(InsufficientDataError, match="2023-05-11T10:05:00Z"):
        time_to_recovery(s, EVENT)
    with pytest.raises(InsufficientDataError, match="zero baseline"):
        time_to_recovery(series([0] * 3, [1] * 5, [1] * 3), EVENT)


def brute_force(values, frac):
    pre, during, post = values[:3], values[3:8], values[8:]
    threshold = sum(pre) / 3 * frac
    for i, v in enumerate(during):
        if v < threshold:
            rest = (during + post)[i + 1:]
            for j, w in enumerate(rest, start=1):
                if w >= threshold:
                    return j
            return None
    return 0


depth_values = st.lists(st.integers(1, 1000), min_size=11, max_size=11)


@given(depth_values, st.sampled_from(["0.5", "0.75", "0.9"]))
@settings(max_examples=150, deadline=None)
def test_recovery_matches_brute_force(values, frac):
    rep = time_to_recovery(series(values[:3], values[3:8], values[8:]), EVENT, D(frac))
    assert rep.recovery_minutes == brute_force([D(v) for v in values], D(frac))


@given(depth_values, st.integers(1, 10_000))
@settings(max_examples=80, deadline=None)
def test_recovery_is_scale_invariant(values, k):
    base = time_to_recovery(series(values[:3], values[3:8], values[8:]), EVENT)
    scaled = time_to_recovery(series([v * k for v in values[:3]], [v * k for v in values[3:8]],
                                     [v * k for v in values[8:]]), EVENT)
    assert scaled.recovery_minutes == base.recovery_minutes
    assert scaled.trough_minute == base.trough_minute


def _grid(minutes, spreads=(10, 20)):
    # 1000 USD per side within 10 bps, a further 1000 USD between 10 and 20 bps
    books = [book([("99.95", D(1000) / D("99.95")), ("99.85", D(1000) / D("99.85"))],
                  [("100.05", D(1000) / D("100.05")), ("100.15", D(1000) / D("100.15"))], i)
             for i in minutes]
    return depth_grid(books, list(spreads))


SHORT = EventWindow("mini", ep(1), ep(1) + 30, pad_before=60, pad_after=60)


def test_three_minute_profile_means():
    books = [book([("99.95", D(v) / D("99.95"))], [("100.05", D(v) / D("100.05"))], i)
             for i, v in enumerate([300, 100, 500])]
    prof = event_depth_profile(depth_grid(books, [10]), [], SHORT, 10)
    assert [r.minute for r in prof.rows] == [minute(0), minute(1), minute(2)]
    assert prof.pre_mean == D(600)
    assert prof.post_mean == D(1000)
    assert prof.min_depth == D(200)
    assert prof.breach_count == 0


def test_breach_examples():
    grid = _grid(range(3))
    recon = reconstruct_minute_books([trade("BUY", 15, 100, i=1)])
    prof = event_depth_profile(grid, recon, SHORT, 10)
    assert [r.breach for r in prof.rows] == [False, True, False]
    assert prof.breach_count == 1
    assert event_depth_profile(grid, recon, SHORT, 20).breach_count == 0
    records = prof.to_records()
    assert records[1]["recon_ask"] == "1500" and records[1]["breach"] is True


def test_profile_requires_coverage():
    with pytest.raises(InsufficientDataError):
        event_depth_profile(_grid([0, 2]), [], SHORT, 10)


@given(st.lists(st.tuples(st.sampled_from(["BUY", "SELL"]), st.integers(1, 40), st.integers(0, 2)), max_size=12))
@settings(max_examples=60, deadline=None)
def test_wider_spread_never_adds_breaches(rows):
    grid = _grid(range(3))
    recon = reconstruct_minute_books([trade(s, z, 100, i=m, sec=k) for k, (s, z, m) in enumerate(rows)])
    narrow = event_depth_profile(grid, recon, SHORT, 10).breach_count
    wide = event_depth_profile(grid, recon, SHORT, 20).breach_count
    assert wide <= narrow


def test_condition4_tolerance():
    grid = _grid(range(3))
    clean = event_depth_profile(grid, [], SHORT, 10)
    dirty = event_depth_profile(grid, reconstruct_minute_books([trade("SELL", 15, 100, i=2)]), SHORT, 10)
    assert condition4_event_adequacy([clean, clean])
    assert not condition4_event_adequacy([clean, dirty])
    assert condition4_event_adequacy([clean, dirty], tolerance_breaches=1)
    with pytest.raises(ValueError):
        condition4_event_adequacy([])


def test_default_events_are_the_three_releases():
    events = default_events()
    assert [(e.name, e.start, e.end) for e in events] == [
        ("PPI", 1683804600, 1683811800),
        ("Initial Jobless Claims", 1684409400, 1684416600),
        ("FOMC Minutes", 1684947600, 1684954800),
    ]
    assert all(e.pad_before == e.pad_after == 3600 for e in events)


def test_load_events_json_and_toml(tmp_path):
    j = tmp_path / "e.json"
    j.write_text(json.dumps([{"name": "A", "start": 60, "end": 120, "pad_before": 0}]))
    assert load_events(j) == [EventWindow("A", 60, 120, 0, 3600)]
    t = tmp_path / "e.toml"
    t.write_text('[[events]]\nname = "B"\nstart = 60\nend = 600\n')
    assert load_events(t) == [EventWindow("B", 60, 600)]
    bad = tmp_path / "bad.json"
    bad.write_text('[{"name": "C", "start": 1}]')
    with pytest.raises(ValidationError, match="end"):
        load_events(bad)


def test_report_record_shape():
    rep = time_to_recovery(series([100] * 3, [100, 40, 50, 80, 100], [100] * 3), EVENT, market="X-USD",
                           spread_bps=Decimal(20))
    rec = rep.to_record()
    assert rec["market"] == "X-USD" and rec["spread_bps"] == "20" and rec["recovery_minutes"] == 2
