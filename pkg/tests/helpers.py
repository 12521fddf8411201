"""Small builders shared by the test modules."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from decimal import Decimal

from spreadlab.market_data import OrderBookSnapshot, Side, TradeRecord

T0 = datetime(2023, 5, 11, 10, 0, tzinfo=timezone.utc)
D = Decimal


def minute(i: int) -> datetime:
    return T0 + timedelta(minutes=i)


def book(bids, asks, i: int = 0, market: str = "TEST-USD") -> OrderBookSnapshot:
    return OrderBookSnapshot.from_levels(market, minute(i), bids, asks)


def trade(side: str, size, price, i: int = 0, sec: float = 0, market: str = "TEST-USD",
          liquidation: bool = False) -> TradeRecord:
    return TradeRecord(market, Side(side), D(str(size)), D(str(price)),
                       minute(i) + timedelta(seconds=sec), liquidation)
