"""Liquidity around declared high-impact events.

An event is a ``[start, end]`` window in epoch seconds with padding on each
side (one hour by default). The pre-event pad is the baseline; recovery is
measured from the first minute inside the event where depth drops below a
fraction of that baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from decimal import Decimal
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import stats
from .errors import InsufficientDataError, ValidationError
from .liquidity_metrics import DepthGrid
from .market_data import MinuteKey, floor_minute, format_bps, format_timestamp, from_epoch, open_text
from .reconstruction import ReconstructedBook

ONE_MINUTE = timedelta(minutes=1)
DEFAULT_PAD = 3600


@dataclass(frozen=True)
class EventWindow:
    name: str
    start: int
    end: int
    pad_before: int = DEFAULT_PAD
    pad_after: int = DEFAULT_PAD

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValidationError(f"event {self.name!r}: start must precede end")
        if self.pad_before < 0 or self.pad_after < 0:
            raise ValidationError(f"event {self.name!r}: padding must be non-negative")

    @property
    def start_minute(self) -> datetime:
        return floor_minute(from_epoch(self.start))

    @property
    def end_minute(self) -> datetime:
        return floor_minute(from_epoch(self.end))

    def pre_minutes(self) -> list[datetime]:
        return _minute_range(floor_minute(from_epoch(self.start - self.pad_before)),
                             self.start_minute - ONE_MINUTE)

    def event_minutes(self) -> list[datetime]:
        return _minute_range(self.start_minute, self.end_minute)

    def post_minutes(self) -> list[datetime]:
        return _minute_range(self.end_minute + ONE_MINUTE,
                             floor_minute(from_epoch(self.end + self.pad_after)))

    def window_minutes(self) -> list[datetime]:
        return self.pre_minutes() + self.event_minutes() + self.post_minutes()


def _minute_range(first: datetime, last: datetime) -> list[datetime]:
    out = []
    m = first
    while m <= last:
        out.append(m)
        m += ONE_MINUTE
    return out


def _require_minutes(have: Iterable[datetime], need: Sequence[datetime], what: str) -> None:
    present = set(have)
    missing = [m for m in need if m not in present]
    if missing:
        shown = ", ".join(format_timestamp(m) for m in missing[:5])
        more = f" (+{len(missing) - 5} more)" if len(missing) > 5 else ""
        raise InsufficientDataError(f"{what}: {len(missing)} missing minute(s) in window: {shown}{more}")


# --------------------------------------------------------------------------- #
# events file
# --------------------------------------------------------------------------- #

def _event_from_mapping(obj: Mapping) -> EventWindow:
    try:
        return EventWindow(
            name=str(obj["name"]),
            start=int(obj["start"]),
            end=int(obj["end"]),
            pad_before=int(obj.get("pad_before", DEFAULT_PAD)),
            pad_after=int(obj.get("pad_after", DEFAULT_PAD)),
        )
    except KeyError as exc:
        raise ValidationError(f"event entry missing field {exc.args[0]!r}") from None


def parse_events(obj: object) -> list[EventWindow]:
    if isinstance(obj, Mapping):
        obj = obj.get("events", [])
    if not isinstance(obj, list):
        raise ValidationError("events file must hold a list of {name, start, end} entries")
    return [_event_from_mapping(e) for e in obj]


def load_events(path: str | Path) -> list[EventWindow]:
    """Read events from ``.json`` or ``.toml`` (``[[events]]`` tables)."""
    p = Path(path)
    if p.suffix == ".toml":
        from ._compat import tomllib

        with open(p, "rb") as fh:
            return parse_events(tomllib.load(fh))
    with open_text(p) as fh:
        return parse_events(json.load(fh))


def default_events() -> list[EventWindow]:
    """Macro release windows bundled with the package."""
    text = resources.files("spreadlab.data").joinpath("events.json").read_text(encoding="utf-8")
    return parse_events(json.loads(text))


# --------------------------------------------------------------------------- #
# recovery
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class RecoveryReport:
    market: str
    spread_bps: Decimal | None
    event: str
    baseline_depth: Decimal
    threshold_fraction: Decimal
    trough_minute: MinuteKey | None
    recovery_minutes: int | None

    @property
    def recovered(self) -> bool:
        return self.recovery_minutes is not None

    @property
    def impaired(self) -> bool:
        return self.trough_minute is not None

    def to_record(self) -> dict:
        return {
            "market": self.market,
            "spread_bps": format_bps(self.spread_bps) if self.spread_bps is not None else "",
            "event": self.event,
            "baseline_depth": str(self.baseline_depth),
            "trough_minute": format_timestamp(self.trough_minute.minute) if self.trough_minute else "",
            "recovery_minutes": self.recovery_minutes if self.recovered else "not recovered",
        }


def time_to_recovery(depth_series: Mapping[datetime, Decimal], event: EventWindow,
                     threshold_fraction: Decimal | str = Decimal("0.75"), market: str = "",
                     spread_bps: Decimal | int | None = None) -> RecoveryReport:
    """Minutes from the first sub-threshold minute in the event to the first
    later minute back at or above ``threshold_fraction x baseline``.

    Never dipping gives 0; dipping without recovering before the end of the
    post-event pad gives ``recovery_minutes=None``.
    """
    frac = Decimal(threshold_fraction)
    _require_minutes(depth_series, event.window_minutes(), f"{market or 'series'} / {event.name}")
    pre = [depth_series[m] for m in event.pre_minutes()]
    if not pre:
        raise InsufficientDataError(f"event {event.name!r} has an empty baseline window")
    baseline = stats.mean(pre)
    if baseline <= 0:
        raise InsufficientDataError(f"zero baseline depth before {event.name!r}")
    threshold = baseline * frac
    spread = Decimal(spread_bps) if spread_bps is not None else None

    trough = next((m for m in event.event_minutes() if depth_series[m] < threshold), None)
    if trough is None:
        return RecoveryReport(market, spread, event.name, baseline, frac, None, 0)
    after = [m for m in event.event_minutes() + event.post_minutes() if m > trough]
    back = next((m for m in after if depth_series[m] >= threshold), None)
    minutes = None if back is None else int((back - trough) / ONE_MINUTE)
    return RecoveryReport(market, spread, event.name, baseline, frac, MinuteKey(market, trough), minutes)


# --------------------------------------------------------------------------- #
# book vs reconstructed demand
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class ProfileRow:
    minute: datetime
    book_bid: Decimal
    book_ask: Decimal
    recon_bid: Decimal
    recon_ask: Decimal

    @property
    def breach(self) -> bool:
        return self.recon_bid > self.book_bid or self.recon_ask > self.book_ask


@dataclass
class EventProfile:
    event: str
    market: str
    spread_bps: Decimal
    rows: list[ProfileRow] = field(default_factory=list)
    pre_mean: Decimal = Decimal(0)
    post_mean: Decimal = Decimal(0)
    min_depth: Decimal = Decimal(0)

    @property
    def breach_count(self) -> int:
        return sum(1 for r in self.rows if r.breach)

    def to_records(self) -> list[dict]:
        return [
            {
                "market": self.market,
                "event": self.event,
                "spread_bps": format_bps(self.spread_bps),
                "minute": format_timestamp(r.minute),
                "book_bid": str(r.book_bid),
                "book_ask": str(r.book_ask),
                "recon_bid": str(r.recon_bid),
                "recon_ask": str(r.recon_ask),
                "breach": r.breach,
            }
            for r in self.rows
        ]


def event_depth_profile(grid: DepthGrid, recon: Sequence[ReconstructedBook], event: EventWindow,
                        spread_bps: Decimal | int) -> EventProfile:
    """Minute-by-minute book depth vs reconstructed demand over the padded window.

    Depth summaries use bid + ask; ``min_depth`` is taken inside ``[start, end]``.
    """
    book = grid.by_minute()
    market = grid.markets[0] if grid.markets else ""
    _require_minutes(book, event.window_minutes(), f"{market} / {event.name}")
    need = {r.minute: r for r in recon}
    rows = []
    for m in event.window_minutes():
        bid, ask = grid.depth_at(book[m], spread_bps)
        rb = need.get(m)
        rows.append(ProfileRow(m, bid, ask,
                               rb.bid_notional if rb else Decimal(0),
                               rb.ask_notional if rb else Decimal(0)))
    total = {r.minute: r.book_bid + r.book_ask for r in rows}

    def _avg(minutes: list[datetime]) -> Decimal:
        return stats.mean([total[m] for m in minutes]) if minutes else Decimal(0)

    return EventProfile(
        event=event.name,
        market=market,
        spread_bps=Decimal(spread_bps),
        rows=rows,
        pre_mean=_avg(event.pre_minutes()),
        post_mean=_avg(event.post_minutes()),
        min_depth=min(total[m] for m in event.event_minutes()),
    )


def condition4_event_adequacy(profiles: Sequence[EventProfile], tolerance_breaches: int = 0) -> bool:
    """True when total breaches across all event profiles stay within tolerance."""
    if not profiles:
        raise ValueError("condition 4 needs at least one event profile")
    return sum(p.breach_count for p in profiles) <= tolerance_breaches
