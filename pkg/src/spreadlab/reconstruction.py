"""Per-minute synthetic books rebuilt from the trade tape.

Every minute starts from an empty book. A BUY trade consumed resting asks, so
its size accrues on the ask side at the trade price; a SELL accrues on the
bid side. The resulting side notionals are the depth a book would have needed
to absorb that minute's flow, an upper bound used for calibration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal
from typing import IO, Iterable, Sequence

from . import stats
from .errors import InsufficientDataError, ValidationError
from .liquidity_metrics import DepthGrid
from .market_data import MinuteKey, Side, TradeRecord, floor_minute, format_timestamp, round_minute

ROUNDING_MODES = ("truncate", "nearest")


@dataclass(frozen=True)
class ReconstructedBook:
    key: MinuteKey
    bid_levels: dict[Decimal, Decimal] = field(default_factory=dict)
    ask_levels: dict[Decimal, Decimal] = field(default_factory=dict)

    @property
    def minute(self) -> datetime:
        return self.key.minute

    @property
    def market(self) -> str:
        return self.key.market

    @property
    def bid_notional(self) -> Decimal:
        return sum((p * s for p, s in self.bid_levels.items()), Decimal(0))

    @property
    def ask_notional(self) -> Decimal:
        return sum((p * s for p, s in self.ask_levels.items()), Decimal(0))


class _MinuteBook:
    """Mutable accumulator; reset for every minute."""

    def __init__(self) -> None:
        self.bids: dict[Decimal, Decimal] = {}
        self.asks: dict[Decimal, Decimal] = {}

    def add(self, trade: TradeRecord) -> None:
        book = self.asks if trade.side is Side.BUY else self.bids
        book[trade.price] = book.get(trade.price, Decimal(0)) + trade.size

    def freeze(self, key: MinuteKey) -> ReconstructedBook:
        return ReconstructedBook(
            key,
            {p: self.bids[p] for p in sorted(self.bids, reverse=True)},
            {p: self.asks[p] for p in sorted(self.asks)},
        )


def reconstruct_minute_books(trades: Iterable[TradeRecord], rounding: str = "truncate",
                             include_liquidations: bool = True) -> list[ReconstructedBook]:
    """Group trades by minute and rebuild one book per trade-active minute."""
    if rounding not in ROUNDING_MODES:
        raise ValueError(f"rounding must be one of {ROUNDING_MODES}, got {rounding!r}")
    to_minute = floor_minute if rounding == "truncate" else round_minute
    market = None
    books: dict[datetime, _MinuteBook] = {}
    for t in trades:
        if market is None:
            market = t.market
        elif t.market != market:
            raise ValidationError(f"reconstruction expects one market, got {market} and {t.market}")
        if t.liquidation and not include_liquidations:
            continue
        books.setdefault(to_minute(t.created_at), _MinuteBook()).add(t)
    return [books[m].freeze(MinuteKey(market, m)) for m in sorted(books)]  # type: ignore[arg-type]


@dataclass(frozen=True)
class DepthRequirement:
    mean_bid: Decimal
    mean_ask: Decimal
    median_bid: Decimal
    median_ask: Decimal
    max_bid: Decimal
    max_ask: Decimal
    p95_bid: Decimal
    p95_ask: Decimal
    minutes: int

    def to_record(self, market: str) -> dict:
        # column names follow the appendix layout of the source tables
        return {
            "market": market,
            "avg_depth_bid": str(self.mean_bid),
            "avg_depth_ask": str(self.mean_ask),
            "median_depth_bid": str(self.median_bid),
            "median_depth_ask": str(self.median_ask),
            "max_depth_bid": str(self.max_bid),
            "max_depth_ask": str(self.max_ask),
            "ninetyfive_depth_ask": str(self.p95_ask),
            "ninetyfive_depth_bid": str(self.p95_bid),
            "active_minutes": self.minutes,
        }


def estimated_depth_required(recon: Sequence[ReconstructedBook]) -> DepthRequirement:
    """Summary of per-minute side notionals over trade-active minutes only."""
    if not recon:
        raise InsufficientDataError("no trade-active minutes")
    bids = [r.bid_notional for r in recon]
    asks = [r.ask_notional for r in recon]
    return DepthRequirement(
        mean_bid=stats.mean(bids), mean_ask=stats.mean(asks),
        median_bid=stats.median(bids), median_ask=stats.median(asks),
        max_bid=max(bids), max_ask=max(asks),
        p95_bid=stats.percentile(bids, 95), p95_ask=stats.percentile(asks, 95),
        minutes=len(recon),
    )


@dataclass(frozen=True)
class AdequacyRow:
    minute: datetime
    book_bid: Decimal
    book_ask: Decimal
    required_bid: Decimal
    required_ask: Decimal

    @property
    def adequate(self) -> bool:
        return self.book_bid >= self.required_bid and self.book_ask >= self.required_ask


@dataclass
class AdequacySeries:
    rows: list[AdequacyRow]
    skipped: int = 0

    @property
    def inadequate_minutes(self) -> int:
        return sum(1 for r in self.rows if not r.adequate)


def depth_adequacy_series(grid: DepthGrid, recon: Sequence[ReconstructedBook], spread_bps: Decimal | int,
                          zero_fill: bool = False) -> AdequacySeries:
    """Compare book depth at ``spread_bps`` with reconstructed demand, minute by minute.

    Minutes present in only one source are skipped (and counted), unless
    ``zero_fill`` is set, in which case book minutes without trades are kept
    with zero required depth.
    """
    book_rows = grid.by_minute()
    need = {r.minute: r for r in recon}
    rows = []
    for minute in sorted(set(book_rows) | set(need)):
        row = book_rows.get(minute)
        rb = need.get(minute)
        if row is None or (rb is None and not zero_fill):
            continue
        bid, ask = grid.depth_at(row, spread_bps)
        rows.append(AdequacyRow(
            minute, bid, ask,
            rb.bid_notional if rb else Decimal(0),
            rb.ask_notional if rb else Decimal(0),
        ))
    if not rows:
        raise InsufficientDataError("order book and reconstructed series share no minutes")
    skipped = len(set(book_rows) | set(need)) - len(rows)
    return AdequacySeries(rows, skipped)


RECON_COLUMNS = ("minute", "bid_notional", "ask_notional", "level_count_bid", "level_count_ask")


def recon_records(recon: Iterable[ReconstructedBook]) -> list[dict]:
    return [
        {
            "market": r.market,
            "minute": format_timestamp(r.minute),
            "bid_notional": str(r.bid_notional),
            "ask_notional": str(r.ask_notional),
            "level_count_bid": len(r.bid_levels),
            "level_count_ask": len(r.ask_levels),
        }
        for r in sorted(recon, key=lambda r: r.key)
    ]


def write_recon_csv(recon: Iterable[ReconstructedBook], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(RECON_COLUMNS)
    for rec in recon_records(recon):
        writer.writerow([rec[c] for c in RECON_COLUMNS])
