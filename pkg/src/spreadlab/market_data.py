"""Loading, validation and basic primitives for books, trades and market specs.

All monetary values are :class:`~decimal.Decimal`. Timestamps are timezone-aware
UTC datetimes; book snapshots are truncated to the minute on load.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from .errors import NoMidPriceError, ParseError, ValidationError

logger = logging.getLogger(__name__)

BPS = Decimal(10_000)
VALID_BRACKETS = frozenset({10, 15, 20, 30, 40, 50})


class Side(str, Enum):
    """Aggressor side of a trade."""

    BUY = "BUY"
    SELL = "SELL"


class BookSide(str, Enum):
    BID = "BID"
    ASK = "ASK"


# --------------------------------------------------------------------------- #
# time helpers
# --------------------------------------------------------------------------- #

def parse_timestamp(value: str) -> datetime:
    """Parse an RFC3339 timestamp (``Z`` or offset suffix) into aware UTC."""
    text = value.strip()
    if not text:
        raise ValueError("empty timestamp")
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    # fromisoformat on 3.10 only accepts 3 or 6 fractional digits
    if "." in text:
        head, _, rest = text.partition(".")
        digits = ""
        while rest and rest[0].isdigit():
            digits, rest = digits + rest[0], rest[1:]
        text = f"{head}.{(digits + '000000')[:6]}{rest}"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    """Canonical RFC3339 form used by every writer: ``YYYY-MM-DDTHH:MM:SSZ``."""
    dt = dt.astimezone(timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def floor_minute(dt: datetime) -> datetime:
    return dt.replace(second=0, microsecond=0)


def round_minute(dt: datetime) -> datetime:
    """Nearest-minute rounding; exactly :30 rounds up."""
    base = floor_minute(dt)
    if dt - base >= timedelta(seconds=30):
        return base + timedelta(minutes=1)
    return base


def from_epoch(seconds: int | float) -> datetime:
    return datetime.fromtimestamp(seconds, tz=timezone.utc)


def to_decimal(value: object, what: str = "value") -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, bool):
        raise ValueError(f"{what}: boolean is not a number")
    if isinstance(value, float):
        # repr round-trips the shortest decimal form, avoiding binary noise
        value = repr(value)
    try:
        result = Decimal(str(value).strip())
    except (InvalidOperation, ValueError) as exc:
        raise ValueError(f"{what}: cannot parse {value!r} as a decimal") from exc
    if not result.is_finite():
        raise ValueError(f"{what}: {value!r} is not finite")
    return result


def format_bps(bps: Decimal | int) -> str:
    """Render a bps value without trailing zeros (``Decimal('10.0')`` -> ``'10'``)."""
    d = Decimal(bps)
    if d == d.to_integral_value():
        return str(d.to_integral_value())
    return format(d.normalize(), "f")


# --------------------------------------------------------------------------- #
# domain types
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class PriceLevel:
    price: Decimal
    size: Decimal

    def __post_init__(self) -> None:
        if self.price <= 0:
            raise ValidationError(f"price level price must be > 0, got {self.price}")
        if self.size <= 0:
            raise ValidationError(f"price level size must be > 0, got {self.size}")

    @property
    def notional(self) -> Decimal:
        return self.price * self.size


@dataclass(frozen=True)
class OrderBookSnapshot:
    """One minute-stamped two-sided book.

    Bids are strictly descending and asks strictly ascending; a crossed or
    locked book (best bid >= best ask) is rejected.
    """

    market: str
    ts: datetime
    bids: tuple[PriceLevel, ...] = ()
    asks: tuple[PriceLevel, ...] = ()

    def __post_init__(self) -> None:
        for a, b in zip(self.bids, self.bids[1:]):
            if not a.price > b.price:
                raise ValidationError(f"{self.market} {self.ts}: bids not strictly descending")
        for a, b in zip(self.asks, self.asks[1:]):
            if not a.price < b.price:
                raise ValidationError(f"{self.market} {self.ts}: asks not strictly ascending")
        if self.bids and self.asks and self.bids[0].price >= self.asks[0].price:
            raise ValidationError(
                f"crossed book for {self.market} at {format_timestamp(self.ts)}: "
                f"best bid {self.bids[0].price} >= best ask {self.asks[0].price}"
            )

    @classmethod
    def from_levels(
        cls,
        market: str,
        ts: datetime,
        bids: Iterable[tuple[object, object]],
        asks: Iterable[tuple[object, object]],
    ) -> "OrderBookSnapshot":
        """Build a canonical snapshot: sides sorted, equal prices merged, ts floored."""
        return cls(
            market=market,
            ts=floor_minute(ts.astimezone(timezone.utc)),
            bids=_canonical_side(bids, descending=True),
            asks=_canonical_side(asks, descending=False),
        )

    @property
    def best_bid(self) -> Decimal | None:
        return self.bids[0].price if self.bids else None

    @property
    def best_ask(self) -> Decimal | None:
        return self.asks[0].price if self.asks else None

    @property
    def is_two_sided(self) -> bool:
        return bool(self.bids) and bool(self.asks)

    @property
    def minute(self) -> datetime:
        return self.ts

    def side(self, side: BookSide) -> tuple[PriceLevel, ...]:
        return self.bids if side is BookSide.BID else self.asks

    def scaled(self, factor: Decimal) -> "OrderBookSnapshot":
        """Copy with every size multiplied by ``factor`` (> 0)."""
        return OrderBookSnapshot(
            self.market,
            self.ts,
            tuple(PriceLevel(lv.price, lv.size * factor) for lv in self.bids),
            tuple(PriceLevel(lv.price, lv.size * factor) for lv in self.asks),
        )


def _canonical_side(levels: Iterable[tuple[object, object]], descending: bool) -> tuple[PriceLevel, ...]:
    merged: dict[Decimal, Decimal] = {}
    for raw in levels:
        try:
            price_raw, size_raw = raw
        except (TypeError, ValueError) as exc:
            raise ValueError(f"price level must be a [price, size] pair, got {raw!r}") from exc
        price = to_decimal(price_raw, "price")
        size = to_decimal(size_raw, "size")
        merged[price] = merged.get(price, Decimal(0)) + size
    return tuple(PriceLevel(p, merged[p]) for p in sorted(merged, reverse=descending))


@dataclass(frozen=True)
class TradeRecord:
    market: str
    side: Side
    size: Decimal
    price: Decimal
    created_at: datetime
    liquidation: bool = False

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ValidationError(f"trade size must be > 0, got {self.size}")
        if self.price <= 0:
            raise ValidationError(f"trade price must be > 0, got {self.price}")

    @property
    def notional(self) -> Decimal:
        return self.size * self.price


@dataclass(frozen=True)
class MarketSpec:
    market: str
    tick_size: Decimal
    index_price: Decimal
    bracket_bps: int = 40

    def __post_init__(self) -> None:
        if self.tick_size <= 0:
            raise ValidationError(f"{self.market}: tick size must be > 0")
        if self.index_price <= 0:
            raise ValidationError(f"{self.market}: index price must be > 0")
        if self.bracket_bps not in VALID_BRACKETS:
            raise ValidationError(
                f"{self.market}: bracket {self.bracket_bps} bps not in {sorted(VALID_BRACKETS)}"
            )


@dataclass(frozen=True, order=True)
class MinuteKey:
    market: str
    minute: datetime

    def __post_init__(self) -> None:
        if self.minute.second or self.minute.microsecond:
            raise ValidationError(f"minute key {self.minute} has a seconds component")


@dataclass(frozen=True)
class MinuteBucket:
    buy_notional: Decimal = Decimal(0)
    sell_notional: Decimal = Decimal(0)
    trade_count: int = 0
    max_trade_notional: Decimal = Decimal(0)

    @property
    def total_notional(self) -> Decimal:
        return self.buy_notional + self.sell_notional


@dataclass(frozen=True)
class SpreadDepth:
    bid_depth_usd: Decimal
    ask_depth_usd: Decimal

    @property
    def total(self) -> Decimal:
        return self.bid_depth_usd + self.ask_depth_usd


@dataclass(frozen=True)
class QuotedSpread:
    absolute: Decimal
    bps: Decimal


@dataclass
class LoadReport:
    """Side-channel counters from a loader run."""

    records: int = 0
    duplicates: int = 0
    skipped: list[str] = field(default_factory=list)


# --------------------------------------------------------------------------- #
# file access
# --------------------------------------------------------------------------- #

def open_text(path: str | Path, mode: str = "r") -> IO[str]:
    """Open a text file, transparently gzip (de)compressing ``*.gz`` paths."""
    p = Path(path)
    if p.suffix == ".gz":
        return gzip.open(p, mode + "t", encoding="utf-8", newline="")  # type: ignore[return-value]
    return open(p, mode, encoding="utf-8", newline="")


# --------------------------------------------------------------------------- #
# order books
# --------------------------------------------------------------------------- #

def parse_orderbook_line(line: str, lineno: int | None = None, path: str | None = None) -> OrderBookSnapshot:
    try:
        obj = json.loads(line, parse_float=Decimal, parse_int=Decimal)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", lineno, path) from exc
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", lineno, path)
    missing = [k for k in ("ts", "market", "bids", "asks") if k not in obj]
    if missing:
        raise ParseError(f"missing field(s) {', '.join(missing)}", lineno, path)
    try:
        ts = parse_timestamp(str(obj["ts"]))
        bids = obj["bids"] or []
        asks = obj["asks"] or []
        if not isinstance(bids, list) or not isinstance(asks, list):
            raise ValueError("bids/asks must be arrays")
        return OrderBookSnapshot.from_levels(str(obj["market"]), ts, bids, asks)
    except ValidationError as exc:
        prefix = f"{path or '<books>'}:{lineno}: " if lineno is not None else ""
        raise ValidationError(f"{prefix}{exc}") from exc
    except ValueError as exc:
        raise ParseError(str(exc), lineno, path) from exc


def parse_orderbooks(lines: Iterable[str], path: str | None = None) -> tuple[list[OrderBookSnapshot], int]:
    """Parse JSON-lines text into snapshots sorted by (market, ts).

    Returns the snapshots and the number of duplicate (market, ts) lines that
    were superseded by a later line.
    """
    latest: dict[tuple[str, datetime], OrderBookSnapshot] = {}
    duplicates = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        snap = parse_orderbook_line(line, lineno, path)
        key = (snap.market, snap.ts)
        if key in latest:
            duplicates += 1
        latest[key] = snap
    return [latest[k] for k in sorted(latest)], duplicates


def load_orderbooks(path: str | Path, report: LoadReport | None = None) -> list[OrderBookSnapshot]:
    """Load a JSON-lines snapshot file (optionally gzipped)."""
    with open_text(path) as fh:
        snaps, duplicates = parse_orderbooks(fh, str(path))
    if duplicates:
        logger.warning("%s: %d duplicate (market, ts) snapshot(s) replaced by later lines", path, duplicates)
    if report is not None:
        report.records = len(snaps)
        report.duplicates = duplicates
    return snaps


def snapshot_to_dict(snap: OrderBookSnapshot) -> dict:
    return {
        "ts": format_timestamp(snap.ts),
        "market": snap.market,
        "bids": [[str(lv.price), str(lv.size)] for lv in snap.bids],
        "asks": [[str(lv.price), str(lv.size)] for lv in snap.asks],
    }


def dump_orderbooks(snaps: Iterable[OrderBookSnapshot], fh: IO[str]) -> None:
    for snap in sorted(snaps, key=lambda s: (s.market, s.ts)):
        fh.write(json.dumps(snapshot_to_dict(snap), separators=(",", ":")))
        fh.write("\n")


def dumps_orderbooks(snaps: Iterable[OrderBookSnapshot]) -> str:
    buf = io.StringIO()
    dump_orderbooks(snaps, buf)
    return buf.getvalue()


# --------------------------------------------------------------------------- #
# trades
# --------------------------------------------------------------------------- #

TRADE_COLUMNS = ("side", "size", "price", "createdAt", "liquidation")
_TRUE = {"true", "1", "yes", "t", "y"}
_FALSE = {"false", "0", "no", "f", "n", ""}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_trades(rows: Iterable[Mapping[str, str]], market: str | None = None,
                 path: str | None = None) -> list[TradeRecord]:
    """Convert CSV dict rows to trades sorted by ``created_at`` (stable).

    Row numbers in errors count the header as row 1.
    """
    trades: list[TradeRecord] = []
    for rowno, row in enumerate(rows, start=2):
        mkt = (row.get("market") or market or "").strip()
        if not mkt:
            raise ParseError("no market column and no market supplied for the file", rowno, path)
        try:
            created = parse_timestamp(row.get("createdAt") or "")
        except ValueError as exc:
            raise ParseError(f"bad createdAt {row.get('createdAt')!r}: {exc}", rowno, path) from exc
        try:
            side = Side(str(row.get("side", "")).strip().upper())
            size = to_decimal(row.get("size"), "size")
            price = to_decimal(row.get("price"), "price")
            liq = _parse_bool(row.get("liquidation") or "")
        except ValueError as exc:
            raise ParseError(str(exc), rowno, path) from exc
        try:
            trades.append(TradeRecord(mkt, side, size, price, created, liq))
        except ValidationError as exc:
            raise ValidationError(f"{path or '<trades>'}:{rowno}: {exc}") from exc
    trades.sort(key=lambda t: t.created_at)
    return trades


def load_trades(path: str | Path, market: str | None = None) -> list[TradeRecord]:
    """Load a trade CSV (``side,size,price,createdAt,liquidation[,market]``)."""
    with open_text(path) as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in TRADE_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {', '.join(missing)}", 1, str(path))
        return parse_trades(reader, market=market, path=str(path))


def dump_trades(trades: Iterable[TradeRecord], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([*TRADE_COLUMNS, "market"])
    for t in trades:
        writer.writerow([t.side.value, str(t.size), str(t.price), format_timestamp(t.created_at),
                         "True" if t.liquidation else "False", t.market])


# --------------------------------------------------------------------------- #
# market specs
# --------------------------------------------------------------------------- #

def load_market_specs(path: str | Path) -> dict[str, MarketSpec]:
    """Load ``market,tickSize,indexPrice,bracketBps``; extra columns are ignored."""
    specs: dict[str, MarketSpec] = {}
    with open_text(path) as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in ("market", "tickSize", "indexPrice") if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {', '.join(missing)}", 1, str(path))
        for rowno, row in enumerate(reader, start=2):
            try:
                bracket = int(row["bracketBps"]) if row.get("bracketBps") else 40
                spec = MarketSpec(
                    market=row["market"].strip(),
                    tick_size=to_decimal(row["tickSize"], "tickSize"),
                    index_price=to_decimal(row["indexPrice"], "indexPrice"),
                    bracket_bps=bracket,
                )
            except ValidationError as exc:
                raise ValidationError(f"{path}:{rowno}: {exc}") from exc
            except (ValueError, KeyError) as exc:
                raise ParseError(str(exc), rowno, str(path)) from exc
            specs[spec.market] = spec
    return dict(sorted(specs.items()))


# --------------------------------------------------------------------------- #
# primitives
# --------------------------------------------------------------------------- #

def bucket_trades_per_minute(trades: Iterable[TradeRecord]) -> "OrderedDict[MinuteKey, MinuteBucket]":
    """Aggregate trade notionals per minute, split by aggressor side."""
    acc: dict[MinuteKey, list] = {}
    market: str | None = None
    for t in trades:
        if market is None:
            market = t.market
        elif t.market != market:
            raise ValidationError(f"bucket_trades_per_minute expects one market, got {market} and {t.market}")
        key = MinuteKey(t.market, floor_minute(t.created_at))
        slot = acc.setdefault(key, [Decimal(0), Decimal(0), 0, Decimal(0)])
        n = t.notional
        if t.side is Side.BUY:
            slot[0] += n
        else:
            slot[1] += n
        slot[2] += 1
        if n > slot[3]:
            slot[3] = n
    return OrderedDict((k, MinuteBucket(*acc[k])) for k in sorted(acc))


def compute_mid(book: OrderBookSnapshot) -> Decimal:
    if not book.is_two_sided:
        raise NoMidPriceError(f"no mid price: {book.market} at {format_timestamp(book.ts)} is one-sided or empty")
    return (book.bids[0].price + book.asks[0].price) / 2


def quoted_spread(book: OrderBookSnapshot) -> QuotedSpread:
    mid = compute_mid(book)
    absolute = book.asks[0].price - book.bids[0].price
    return QuotedSpread(absolute=absolute, bps=absolute / mid * BPS)


def spread_bounds(anchor: Decimal, spread_bps: Decimal | int) -> tuple[Decimal, Decimal]:
    """Symmetric (lower, upper) price band of ``spread_bps`` around ``anchor``."""
    frac = Decimal(spread_bps) / BPS
    return anchor * (1 - frac), anchor * (1 + frac)


def side_depth(levels: Sequence[PriceLevel], side: BookSide, bound: Decimal) -> Decimal:
    """Notional of ``levels`` on the inside of ``bound`` (inclusive)."""
    total = Decimal(0)
    if side is BookSide.BID:
        for lv in levels:
            if lv.price < bound:
                break
            total += lv.notional
    else:
        for lv in levels:
            if lv.price > bound:
                break
            total += lv.notional
    return total


def depth_within_spread(book: OrderBookSnapshot, spread_bps: Decimal | int) -> SpreadDepth:
    """USD depth on each side within ``spread_bps`` of mid; boundary levels count."""
    if Decimal(spread_bps) <= 0:
        raise ValidationError(f"spread_bps must be > 0, got {spread_bps}")
    lower, upper = spread_bounds(compute_mid(book), spread_bps)
    return SpreadDepth(
        bid_depth_usd=side_depth(book.bids, BookSide.BID, lower),
        ask_depth_usd=side_depth(book.asks, BookSide.ASK, upper),
    )


def group_by_market(items: Iterable, attr: str = "market") -> dict[str, list]:
    out: dict[str, list] = {}
    for item in items:
        out.setdefault(getattr(item, attr), []).append(item)
    return dict(sorted(out.items()))
