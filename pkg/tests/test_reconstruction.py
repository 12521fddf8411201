import io
from datetime import datetime, timezone
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import D, book, minute, trade
from spreadlab.errors import InsufficientDataError, ValidationError
from spreadlab.liquidity_metrics import depth_grid
from spreadlab.market_data import load_trades
from spreadlab.reconstruction import (
    RECON_COLUMNS,
    depth_adequacy_series,
    estimated_depth_required,
    reconstruct_minute_books,
    write_recon_csv,
)


def test_single_buy_lands_on_ask_side():
    (rb,) = reconstruct_minute_books([trade("BUY", 2, 10, i=120, sec=30)])
    assert rb.minute == minute(120)
    assert rb.ask_levels == {D(10): D(2)}
    assert rb.ask_notional == D(20)
    assert rb.bid_levels == {}


def test_same_price_accumulates():
    (rb,) = reconstruct_minute_books([trade("BUY", 1, 10, sec=1), trade("BUY", 3, 10, sec=2)])
    assert rb.ask_levels == {D(10): D(4)}


def test_sol_pair_minute(data_dir):
    recon = reconstruct_minute_books(load_trades(data_dir / "sol_trades.csv", market="SOL-USD"))
    by_minute = {r.minute: r for r in recon}
    assert by_minute[datetime(2023, 5, 23, 16, 38, tzinfo=timezone.utc)].ask_notional == D("492809.0014")


def test_rounding_modes():
    t = trade("SELL", 1, 10, i=5, sec=45)
    assert reconstruct_minute_books([t])[0].minute == minute(5)
    assert reconstruct_minute_books([t], rounding="nearest")[0].minute == minute(6)
    with pytest.raises(ValueError):
        reconstruct_minute_books([t], rounding="ceil")


def test_liquidation_filter_and_market_mixing():
    ts = [trade("SELL", 1, 10), trade("SELL", 5, 10, sec=3, liquidation=True)]
    assert reconstruct_minute_books(ts)[0].bid_notional == D(60)
    assert reconstruct_minute_books(ts, include_liquidations=False)[0].bid_notional == D(10)
    with pytest.raises(ValidationError):
        reconstruct_minute_books([trade("BUY", 1, 1), trade("BUY", 1, 1, market="X-USD")])


def test_required_depth_stats():
    recon = reconstruct_minute_books([trade("SELL", 10, 10, i=0), trade("SELL", 30, 10, i=1)])
    req = estimated_depth_required(recon)
    assert (req.mean_bid, req.max_bid) == (D(200), D(300))
    assert (req.mean_ask, req.median_ask, req.max_ask, req.p95_ask) == (0, 0, 0, 0)
    rec = req.to_record("TEST-USD")
    for col in ("avg_depth_bid", "median_depth_ask", "max_depth_bid", "ninetyfive_depth_bid", "ninetyfive_depth_ask"):
        assert col in rec
    with pytest.raises(InsufficientDataError, match="no trade-active minutes"):
        estimated_depth_required([])


def _grid_with(bid_usd, ask_usd, i=0):
    return book([(D(100) - D("0.01"), D(bid_usd) / D("99.99"))], [(D("100.01"), D(ask_usd) / D("100.01"))], i)


def test_adequacy_examples():
    grid = depth_grid([_grid_with(1000, 1000, 0), _grid_with(1000, 300, 1), _grid_with(1000, 1000, 2)], [10])
    recon = reconstruct_minute_books([
        trade("SELL", 5, 100, i=0), trade("BUY", 4, 100, i=0, sec=1),
        trade("SELL", 5, 100, i=1), trade("BUY", 4, 100, i=1, sec=1),
    ])
    series = depth_adequacy_series(grid, recon, 10)
    assert [r.adequate for r in series.rows] == [True, False]
    assert series.skipped == 1
    assert series.inadequate_minutes == 1
    filled = depth_adequacy_series(grid, recon, 10, zero_fill=True)
    assert filled.rows[-1].required_bid == 0 and filled.rows[-1].adequate


def test_adequacy_without_overlap():
    grid = depth_grid([_grid_with(1000, 1000, 0)], [10])
    with pytest.raises(InsufficientDataError):
        depth_adequacy_series(grid, reconstruct_minute_books([trade("BUY", 1, 1, i=9)]), 10)


def test_recon_csv_columns():
    buf = io.StringIO()
    write_recon_csv(reconstruct_minute_books([trade("BUY", 2, 10)]), buf)
    header, row = buf.getvalue().splitlines()
    assert header == ",".join(RECON_COLUMNS)
    assert row == "2023-05-11T10:00:00Z,0,20,0,1"


tape = st.lists(
    st.tuples(st.sampled_from(["BUY", "SELL"]),
              st.decimals(min_value="0.01", max_value="500", places=2),
              st.decimals(min_value="1", max_value="200", places=3),
              st.integers(0, 20), st.floats(0, 59.999)),
    max_size=60,
)


@given(tape)
@settings(max_examples=80, deadline=None)
def test_notional_is_conserved(rows):
    trades = [trade(s, z, p, i=m, sec=sec) for s, z, p, m, sec in rows]
    recon = reconstruct_minute_books(trades)
    total = sum((r.bid_notional + r.ask_notional for r in recon), Decimal(0))
    assert total == sum((t.notional for t in trades), Decimal(0))
    # every level traces to a trade at that price in that minute
    for r in recon:
        prices = {t.price for t in trades if t.created_at.replace(second=0, microsecond=0) == r.minute}
        assert set(r.bid_levels) | set(r.ask_levels) <= prices


@given(tape)
@settings(max_examples=40, deadline=None)
def test_buy_only_tape_has_no_bids(rows):
    trades = [trade("BUY", z, p, i=m, sec=sec) for _, z, p, m, sec in rows]
    assert all(not r.bid_levels for r in reconstruct_minute_books(trades))
