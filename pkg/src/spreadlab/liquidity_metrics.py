"""Per-snapshot and per-period liquidity measures.

Covers tick-constraint bps, spread density (USD per tick inside a band),
relative liquidity (probability-weighted depth by tick distance), daily trade
statistics and the minute-by-spread depth grid.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime
from decimal import ROUND_FLOOR, ROUND_HALF_EVEN, Decimal
from typing import IO, Iterable, Mapping, Sequence

from . import stats
from .errors import ValidationError
from .market_data import (
    BPS,
    BookSide,
    MarketSpec,
    MinuteBucket,
    MinuteKey,
    OrderBookSnapshot,
    Side,
    TradeRecord,
    compute_mid,
    depth_within_spread,
    format_bps,
    format_timestamp,
    side_depth,
    spread_bounds,
)

TRADE_SIZE_THRESHOLDS: tuple[Decimal, ...] = (
    Decimal(50_000),
    Decimal(100_000),
    Decimal(250_000),
    Decimal(500_000),
    Decimal(1_500_000),
)


@dataclass(frozen=True)
class SpreadDensity:
    side: BookSide
    spread_bps: Decimal
    depth_usd: Decimal
    tick_levels: int
    density: Decimal


@dataclass(frozen=True)
class RelativeLiquidity:
    side: BookSide
    spread_bps: Decimal
    weights: tuple[tuple[int, Decimal], ...]
    rlq: Decimal
    # USD notional aggregated per tick distance, aligned with ``weights``
    liquidity: tuple[Decimal, ...] = ()


@dataclass(frozen=True)
class TradeStats:
    market: str
    day: date
    trade_count: int
    mean_notional: Decimal
    std_notional: Decimal
    max_notional: Decimal
    counts_above: dict[Decimal, int]
    p95_minute_bid_demand: Decimal
    p95_minute_ask_demand: Decimal
    mean_minute_bid_demand: Decimal
    mean_minute_ask_demand: Decimal
    p95_trade_notional: Decimal
    active_minutes: int


# --------------------------------------------------------------------------- #

def min_tick_bps(spec: MarketSpec) -> Decimal:
    """One tick as a percentage of the index price (``x 100`` more gives bps)."""
    return spec.tick_size / spec.index_price * 100


def spread_density(book: OrderBookSnapshot, spec: MarketSpec, spread_bps: Decimal | int,
                   side: BookSide) -> SpreadDensity:
    spread = Decimal(spread_bps)
    if not book.side(side):
        raise ValidationError(f"{book.market}: {side.value} side is empty")
    depth = depth_within_spread(book, spread)
    depth_usd = depth.bid_depth_usd if side is BookSide.BID else depth.ask_depth_usd
    width = compute_mid(book) * spread / BPS
    ticks = int((width / spec.tick_size).to_integral_value(rounding=ROUND_FLOOR))
    if depth_usd == 0:
        return SpreadDensity(side, spread, depth_usd, ticks, Decimal(0))
    ticks = max(ticks, 1)
    return SpreadDensity(side, spread, depth_usd, ticks, depth_usd / ticks)


def relative_liquidity(book: OrderBookSnapshot, spread_bps: Decimal | int, side: BookSide,
                       tick_size: Decimal) -> RelativeLiquidity:
    """Depth weighted by its own empirical distribution over tick distance from the BBO.

    ``rlq = sum_i p_i * L_i`` with ``p_i = L_i / sum(L)``, where ``L_i`` is the USD
    notional resting ``i`` ticks behind the best price and inside the band.
    """
    spread = Decimal(spread_bps)
    levels = book.side(side)
    if not levels:
        raise ValidationError(f"{book.market}: {side.value} side is empty")
    lower, upper = spread_bounds(compute_mid(book), spread)
    best = levels[0].price
    per_tick: dict[int, Decimal] = defaultdict(Decimal)
    for lv in levels:
        if side is BookSide.BID:
            if lv.price < lower:
                break
            dist = (best - lv.price) / tick_size
        else:
            if lv.price > upper:
                break
            dist = (lv.price - best) / tick_size
        per_tick[int(dist.to_integral_value(rounding=ROUND_HALF_EVEN))] += lv.notional
    total = sum(per_tick.values(), Decimal(0))
    if total == 0:
        return RelativeLiquidity(side, spread, (), Decimal(0))
    ticks = sorted(per_tick)
    probs = [per_tick[t] / total for t in ticks]
    rlq = sum((p * per_tick[t] for p, t in zip(probs, ticks)), Decimal(0))
    return RelativeLiquidity(side, spread, tuple(zip(ticks, probs)), rlq,
                             tuple(per_tick[t] for t in ticks))


def trade_statistics(trades: Sequence[TradeRecord],
                     minute_buckets: Mapping[MinuteKey, MinuteBucket]) -> list[TradeStats]:
    """Daily notional statistics per (market, day).

    Minute demand percentiles use trade-active minutes only: buy notional is
    demand on the ask side, sell notional on the bid side.
    """
    by_day: dict[tuple[str, date], list[Decimal]] = defaultdict(list)
    for t in trades:
        by_day[(t.market, t.created_at.date())].append(t.notional)
    minutes_by_day: dict[tuple[str, date], list[MinuteBucket]] = defaultdict(list)
    for key, bucket in minute_buckets.items():
        minutes_by_day[(key.market, key.minute.date())].append(bucket)

    out: list[TradeStats] = []
    for (market, day) in sorted(by_day):
        notionals = by_day[(market, day)]
        buckets = minutes_by_day.get((market, day), [])
        bid_demand = [b.sell_notional for b in buckets] or [Decimal(0)]
        ask_demand = [b.buy_notional for b in buckets] or [Decimal(0)]
        out.append(TradeStats(
            market=market,
            day=day,
            trade_count=len(notionals),
            mean_notional=stats.mean(notionals),
            std_notional=stats.pstdev(notionals),
            max_notional=max(notionals),
            counts_above={th: sum(1 for n in notionals if n > th) for th in TRADE_SIZE_THRESHOLDS},
            p95_minute_bid_demand=stats.percentile(bid_demand, 95),
            p95_minute_ask_demand=stats.percentile(ask_demand, 95),
            mean_minute_bid_demand=stats.mean(bid_demand),
            mean_minute_ask_demand=stats.mean(ask_demand),
            p95_trade_notional=stats.percentile(notionals, 95),
            active_minutes=len(buckets),
        ))
    return out


# --------------------------------------------------------------------------- #
# depth grid
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class DepthGridRow:
    market: str
    minute: datetime
    bid: tuple[Decimal, ...]
    ask: tuple[Decimal, ...]
    one_sided: bool = False


@dataclass
class DepthGrid:
    """Minute x spread table of bid/ask USD depth."""

    spreads_bps: tuple[Decimal, ...]
    rows: list[DepthGridRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def index(self, spread_bps: Decimal | int) -> int:
        try:
            return self.spreads_bps.index(Decimal(spread_bps))
        except ValueError:
            raise KeyError(f"spread {spread_bps} bps not in grid {list(map(format_bps, self.spreads_bps))}") from None

    @property
    def markets(self) -> list[str]:
        return sorted({r.market for r in self.rows})

    def for_market(self, market: str) -> "DepthGrid":
        return DepthGrid(self.spreads_bps, [r for r in self.rows if r.market == market])

    def by_minute(self) -> dict[datetime, DepthGridRow]:
        if len(self.markets) > 1:
            raise ValidationError("by_minute needs a single-market grid; call for_market first")
        return {r.minute: r for r in self.rows}

    def depth_at(self, row: DepthGridRow, spread_bps: Decimal | int) -> tuple[Decimal, Decimal]:
        i = self.index(spread_bps)
        return row.bid[i], row.ask[i]

    def mean_depth(self, spread_bps: Decimal | int) -> tuple[Decimal, Decimal]:
        i = self.index(spread_bps)
        if not self.rows:
            return Decimal(0), Decimal(0)
        return (stats.mean([r.bid[i] for r in self.rows]),
                stats.mean([r.ask[i] for r in self.rows]))

    def series(self, spread_bps: Decimal | int, side: str = "total") -> dict[datetime, Decimal]:
        """Per-minute depth at one spread; ``side`` is ``bid``, ``ask`` or ``total``."""
        i = self.index(spread_bps)
        out = {}
        for r in self.rows:
            if side == "bid":
                out[r.minute] = r.bid[i]
            elif side == "ask":
                out[r.minute] = r.ask[i]
            elif side == "total":
                out[r.minute] = r.bid[i] + r.ask[i]
            else:
                raise ValueError(f"unknown side {side!r}")
        return out

    def columns(self) -> list[str]:
        cols = ["minute"]
        for s in self.spreads_bps:
            cols += [f"bid_{format_bps(s)}", f"ask_{format_bps(s)}"]
        return cols

    def to_records(self) -> list[dict]:
        recs = []
        for r in sorted(self.rows, key=lambda r: (r.market, r.minute)):
            rec: dict = {"market": r.market, "minute": format_timestamp(r.minute)}
            for s, b, a in zip(self.spreads_bps, r.bid, r.ask):
                rec[f"bid_{format_bps(s)}"] = str(b)
                rec[f"ask_{format_bps(s)}"] = str(a)
            rec["one_sided"] = r.one_sided
            recs.append(rec)
        return recs

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(self.columns())
        for rec in self.to_records():
            writer.writerow([rec[c] for c in self.columns()])


def _check_spreads(spreads_bps: Iterable[Decimal | int]) -> tuple[Decimal, ...]:
    spreads = tuple(Decimal(s) for s in spreads_bps)
    if not spreads:
        raise ValidationError("spread list is empty")
    if any(s <= 0 for s in spreads):
        raise ValidationError("spreads must be positive")
    if any(b <= a for a, b in zip(spreads, spreads[1:])):
        raise ValidationError(f"spreads must be strictly increasing, got {list(map(format_bps, spreads))}")
    return spreads


def depth_grid(books: Iterable[OrderBookSnapshot], spreads_bps: Sequence[Decimal | int]) -> DepthGrid:
    """Depth at every spread for every snapshot.

    A one-sided book has no mid; its band is anchored on the best price of the
    side that exists, the empty side reads zero and the row is flagged.
    """
    spreads = _check_spreads(spreads_bps)
    rows = []
    for book in sorted(books, key=lambda b: (b.market, b.ts)):
        if book.is_two_sided:
            bids, asks = [], []
            for s in spreads:
                d = depth_within_spread(book, s)
                bids.append(d.bid_depth_usd)
                asks.append(d.ask_depth_usd)
            rows.append(DepthGridRow(book.market, book.ts, tuple(bids), tuple(asks)))
            continue
        zero = tuple(Decimal(0) for _ in spreads)
        if book.bids:
            bids = tuple(side_depth(book.bids, BookSide.BID, spread_bounds(book.bids[0].price, s)[0])
                         for s in spreads)
            rows.append(DepthGridRow(book.market, book.ts, bids, zero, one_sided=True))
        elif book.asks:
            asks = tuple(side_depth(book.asks, BookSide.ASK, spread_bounds(book.asks[0].price, s)[1])
                         for s in spreads)
            rows.append(DepthGridRow(book.market, book.ts, zero, asks, one_sided=True))
        else:
            rows.append(DepthGridRow(book.market, book.ts, zero, zero, one_sided=True))
    return DepthGrid(spreads, rows)


def trade_stats_records(rows: Iterable[TradeStats]) -> list[dict]:
    recs = []
    for s in sorted(rows, key=lambda r: (r.market, r.day)):
        rec = {
            "market": s.market,
            "day": s.day.isoformat(),
            "trade_count": s.trade_count,
            "mean_notional": str(s.mean_notional),
            "std_notional": str(s.std_notional),
            "max_notional": str(s.max_notional),
        }
        for th in TRADE_SIZE_THRESHOLDS:
            rec[f"count_above_{int(th)}"] = s.counts_above[th]
        rec.update({
            "p95_minute_bid_demand": str(s.p95_minute_bid_demand),
            "p95_minute_ask_demand": str(s.p95_minute_ask_demand),
            "p95_trade_notional": str(s.p95_trade_notional),
            "active_minutes": s.active_minutes,
        })
        recs.append(rec)
    return recs


def trade_side_for_book(side: BookSide) -> Side:
    """Aggressor side that consumes liquidity resting on ``side``."""
    return Side.SELL if side is BookSide.BID else Side.BUY
