"""Deterministic synthetic market data for demos and end-to-end tests.

Books are minute snapshots with levels on a fixed bps ladder around a slowly
drifting mid; depth is thinned during an optional shock window and recovers
geometrically afterwards. Trades are drawn per minute with heavier flow during
the shock. Everything comes from a single seeded ``random.Random``.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from .market_data import (
    OrderBookSnapshot,
    PriceLevel,
    Side,
    TradeRecord,
    dump_trades,
    dumps_orderbooks,
)


@dataclass(frozen=True)
class SyntheticMarket:
    market: str
    tick_size: Decimal
    index_price: Decimal
    bracket_bps: int
    # USD resting at each ladder rung in calm conditions
    level_usd: Decimal
    # mean trade notional in USD
    trade_usd: Decimal
    # expected trades per minute
    trade_rate: float


DEFAULT_MARKETS = (
    SyntheticMarket("LINK-USD", Decimal("0.001"), Decimal("6.500"), 20, Decimal(6000), Decimal(2500), 3.0),
    SyntheticMarket("SOL-USD", Decimal("0.001"), Decimal("20.054"), 20, Decimal(15000), Decimal(6000), 5.0),
    SyntheticMarket("UMA-USD", Decimal("0.01"), Decimal("2.336"), 40, Decimal(1500), Decimal(400), 1.0),
)
# 2023-05-11 10:00 UTC; the PPI release window 11:30-13:30 sits inside with an hour either side
DEFAULT_START = datetime(2023, 5, 11, 10, 0, tzinfo=timezone.utc)
DEFAULT_MINUTES = 300
DEFAULT_SHOCK = (1683804600, 1683811800)
LADDER_BPS = 2
LEVELS = 30


def _quantize(value: float | Decimal, step: Decimal) -> Decimal:
    return (Decimal(str(value)) / step).to_integral_value(rounding=ROUND_HALF_EVEN) * step


def _shock_factor(minute: datetime, shock: tuple[int, int] | None) -> float:
    """Depth multiplier: 1 outside the shock, a dip to 0.35 at its onset recovering
    geometrically towards 1."""
    if shock is None:
        return 1.0
    t = minute.timestamp()
    if t < shock[0]:
        return 1.0
    elapsed = (t - shock[0]) / 60.0
    return 1.0 - 0.65 * (0.85 ** elapsed)


def _book(m: SyntheticMarket, ts: datetime, mid: Decimal, factor: float, rng: random.Random) -> OrderBookSnapshot:
    step = max(m.tick_size, _quantize(mid * LADDER_BPS / 10000, m.tick_size))
    best_bid = _quantize(mid - step / 2, m.tick_size)
    best_ask = best_bid + step
    size_q = Decimal("0.01")
    bids, asks = [], []
    for k in range(LEVELS):
        for side, price in ((bids, best_bid - k * step), (asks, best_ask + k * step)):
            if price <= 0:
                continue
            usd = float(m.level_usd) * factor * (0.6 + 0.8 * rng.random()) * (1 + k / 10)
            size = _quantize(usd / float(price), size_q)
            if size > 0:
                side.append(PriceLevel(price, size))
    return OrderBookSnapshot(m.market, ts, tuple(bids), tuple(asks))


def generate_market(m: SyntheticMarket, seed: int, start: datetime = DEFAULT_START,
                    minutes: int = DEFAULT_MINUTES,
                    shock: tuple[int, int] | None = DEFAULT_SHOCK) -> tuple[list[OrderBookSnapshot], list[TradeRecord]]:
    rng = random.Random(f"{seed}:{m.market}")
    mid = m.index_price
    books: list[OrderBookSnapshot] = []
    trades: list[TradeRecord] = []
    for i in range(minutes):
        ts = start + timedelta(minutes=i)
        mid = max(m.tick_size * 10, mid * Decimal(str(round(1 + rng.gauss(0, 0.0004), 8))))
        factor = _shock_factor(ts, shock)
        book = _book(m, ts, mid, factor, rng)
        books.append(book)
        in_shock = shock is not None and shock[0] <= ts.timestamp() <= shock[1]
        rate = m.trade_rate * (2.5 if in_shock else 1.0)
        n = 0
        while rng.random() < rate / (rate + 1):
            n += 1
        for _ in range(n):
            side = Side.BUY if rng.random() < 0.5 else Side.SELL
            best = book.best_ask if side is Side.BUY else book.best_bid
            price = best if best is not None else mid
            usd = float(m.trade_usd) * rng.lognormvariate(0, 0.8)
            size = _quantize(usd / float(price), Decimal("0.01"))
            if size <= 0:
                continue
            at = ts + timedelta(milliseconds=rng.randrange(60_000))
            trades.append(TradeRecord(m.market, side, size, _quantize(price, m.tick_size), at,
                                      rng.random() < 0.02))
    trades.sort(key=lambda t: t.created_at)
    return books, trades


def generate_dataset(seed: int = 7, markets: tuple[SyntheticMarket, ...] = DEFAULT_MARKETS,
                     start: datetime = DEFAULT_START, minutes: int = DEFAULT_MINUTES,
                     shock: tuple[int, int] | None = DEFAULT_SHOCK):
    books: list[OrderBookSnapshot] = []
    trades: list[TradeRecord] = []
    for m in markets:
        b, t = generate_market(m, seed, start, minutes, shock)
        books += b
        trades += t
    trades.sort(key=lambda t: (t.market, t.created_at))
    return books, trades


def _gzip_bytes(text: str) -> bytes:
    buf = io.BytesIO()
    # a fixed mtime keeps the archive byte-identical across runs
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0, filename="") as gz:
        gz.write(text.encode("utf-8"))
    return buf.getvalue()


def write_dataset(out_dir: str | Path, seed: int = 7,
                  markets: tuple[SyntheticMarket, ...] = DEFAULT_MARKETS) -> dict[str, Path]:
    """Write books.jsonl.gz, trades.csv, markets.csv and events.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    books, trades = generate_dataset(seed, markets)
    paths = {
        "books": out / "books.jsonl.gz",
        "trades": out / "trades.csv",
        "markets": out / "markets.csv",
        "events": out / "events.json",
    }
    paths["books"].write_bytes(_gzip_bytes(dumps_orderbooks(books)))
    with open(paths["trades"], "w", encoding="utf-8", newline="") as fh:
        dump_trades(trades, fh)
    with open(paths["markets"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["market", "tickSize", "indexPrice", "bracketBps"])
        for m in sorted(markets, key=lambda m: m.market):
            w.writerow([m.market, str(m.tick_size), str(m.index_price), m.bracket_bps])
    events = {"events": [{"name": "PPI", "start": DEFAULT_SHOCK[0], "end": DEFAULT_SHOCK[1]}]}
    paths["events"].write_text(json.dumps(events, indent=2) + "\n", encoding="utf-8")
    return paths


def main() -> None:  # pragma: no cover - maintenance helper
    import argparse

    p = argparse.ArgumentParser(description="Regenerate the bundled synthetic sample dataset.")
    p.add_argument("out", type=Path)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()
    for name, path in write_dataset(args.out, args.seed).items():
        print(f"{name}: {path}")


if __name__ == "__main__":  # pragma: no cover
    main()


__all__ = ["SyntheticMarket", "DEFAULT_MARKETS", "generate_market", "generate_dataset", "write_dataset"]
