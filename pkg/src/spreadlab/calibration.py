"""maxSpread calibration: the spread sweep, its acceptance conditions and
market bracket classification.

For every candidate spread the sweep measures mean book depth, spread density
and relative liquidity, then evaluates:

* C1, tick admissibility: one band is wider than a tick.
* C2, depth adequacy: mean depth covers the per-minute demand statistic.
* C3, stationarity: the per-minute total depth series passes ADF.
* C4, event adequacy: no reconstructed-demand breaches inside event windows.

The density and RLQ conditions are computed for every spread but only gate the
choice in draft mode. The chosen spread is the smallest one passing every
enabled condition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Iterable, Mapping, Sequence

from . import stats
from .errors import DegenerateSeriesError, InsufficientDataError, ValidationError
from .event_study import EventProfile, EventWindow, condition4_event_adequacy, event_depth_profile
from .liquidity_metrics import (
    DepthGrid,
    TradeStats,
    _check_spreads,
    depth_grid,
    min_tick_bps,
    relative_liquidity,
    spread_density,
    trade_statistics,
)
from .market_data import (
    BPS,
    BookSide,
    MarketSpec,
    MinuteBucket,
    MinuteKey,
    OrderBookSnapshot,
    TradeRecord,
    bucket_trades_per_minute,
    format_bps,
)
from .reconstruction import ReconstructedBook
from .stationarity import AdfResult, adf_test

log = logging.getLogger(__name__)

TICK_CONSTRAINED_BPS = Decimal(40)
C2_STATISTICS = ("mean", "p95", "max")


class Rationale(str, Enum):
    OK = "OK"
    TICK_CONSTRAINED = "TICK_CONSTRAINED"
    DEPTH_LIMITED = "DEPTH_LIMITED"


@dataclass(frozen=True)
class CalibrationConfig:
    spreads_bps: tuple[Decimal, ...] = tuple(Decimal(s) for s in (5, 10, 15, 20, 30, 40, 50))
    volume_coverage_fraction: Decimal = Decimal("0.80")
    insufficiency_threshold_initial: Decimal = Decimal("0.01")
    insufficiency_threshold_widen: Decimal = Decimal("0.05")
    adf_significance: Decimal = Decimal("0.05")
    recovery_fraction: Decimal = Decimal("0.75")
    draft_mode: bool = False
    # per-minute demand statistic mean depth must cover: "p95", "mean" or "max"
    c2_statistic: str = "p95"
    brackets_bps: tuple[Decimal, ...] = tuple(Decimal(s) for s in (15, 20, 30, 40))
    tick_constrained_bps: Decimal = TICK_CONSTRAINED_BPS
    event_tolerance_breaches: int = 0
    zero_fill: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "spreads_bps", _check_spreads(self.spreads_bps))
        object.__setattr__(self, "brackets_bps", _check_spreads(self.brackets_bps))
        for name in ("volume_coverage_fraction", "insufficiency_threshold_initial",
                     "insufficiency_threshold_widen", "recovery_fraction"):
            value = Decimal(getattr(self, name))
            if not Decimal(0) < value <= 1:
                raise ValidationError(f"{name} must lie in (0, 1], got {value}")
            object.__setattr__(self, name, value)
        if float(self.adf_significance) not in (0.01, 0.05, 0.10):
            raise ValidationError(f"adf_significance must be 0.01, 0.05 or 0.10, got {self.adf_significance}")
        if self.c2_statistic not in C2_STATISTICS:
            raise ValidationError(f"c2_statistic must be one of {C2_STATISTICS}, got {self.c2_statistic!r}")


@dataclass(frozen=True)
class ConditionVerdicts:
    c1_tick: bool
    c2_mean_depth: bool
    c3_stationary: bool
    c4_event_adequate: bool
    sd_condition: bool
    rlq_condition: bool

    def passes(self, draft_mode: bool = False) -> bool:
        final = self.c1_tick and self.c2_mean_depth and self.c3_stationary and self.c4_event_adequate
        if draft_mode:
            return final and self.sd_condition and self.rlq_condition
        return final


@dataclass(frozen=True)
class SpreadSummary:
    spread_bps: Decimal
    mean_bid_depth: Decimal
    mean_ask_depth: Decimal
    density_bid: Decimal
    density_ask: Decimal
    rlq_bid: Decimal
    rlq_ask: Decimal
    insufficiency_pct: Decimal
    verdicts: ConditionVerdicts
    adf: AdfResult | None = None
    notes: tuple[str, ...] = ()


@dataclass
class CalibrationResult:
    market: str
    bracket_bps: Decimal
    chosen_bps: Decimal
    rationale: Rationale
    min_tick_bps: Decimal
    summaries: list[SpreadSummary] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def summary_at(self, spread_bps: Decimal | int) -> SpreadSummary:
        for s in self.summaries:
            if s.spread_bps == Decimal(spread_bps):
                return s
        raise KeyError(f"{self.market}: no summary at {spread_bps} bps")

    def to_dict(self) -> dict:
        return {
            "market": self.market,
            "bracket_bps": format_bps(self.bracket_bps),
            "chosen_bps": format_bps(self.chosen_bps),
            "rationale": self.rationale.value,
            "min_tick_bps": str(self.min_tick_bps * 100),
            "notes": list(self.notes),
            "spreads": [
                {
                    "spread_bps": format_bps(s.spread_bps),
                    "mean_bid_depth": str(s.mean_bid_depth),
                    "mean_ask_depth": str(s.mean_ask_depth),
                    "density_bid": str(s.density_bid),
                    "density_ask": str(s.density_ask),
                    "rlq_bid": str(s.rlq_bid),
                    "rlq_ask": str(s.rlq_ask),
                    "insufficiency_pct": str(s.insufficiency_pct),
                    "adf_statistic": None if s.adf is None else round(s.adf.statistic, 10),
                    "adf_lag": None if s.adf is None else s.adf.lag,
                    "verdicts": {
                        "c1_tick": s.verdicts.c1_tick,
                        "c2_mean_depth": s.verdicts.c2_mean_depth,
                        "c3_stationary": s.verdicts.c3_stationary,
                        "c4_event_adequate": s.verdicts.c4_event_adequate,
                        "sd_condition": s.verdicts.sd_condition,
                        "rlq_condition": s.verdicts.rlq_condition,
                    },
                    "notes": list(s.notes),
                }
                for s in self.summaries
            ],
        }


# --------------------------------------------------------------------------- #
# individual conditions
# --------------------------------------------------------------------------- #

def condition1_tick(spec: MarketSpec, spread_bps: Decimal | int) -> bool:
    """Admissible when the band ``index x spread`` is strictly wider than one tick."""
    return spec.index_price * Decimal(spread_bps) / BPS > spec.tick_size


def is_tick_constrained(spec: MarketSpec, limit_bps: Decimal = TICK_CONSTRAINED_BPS) -> bool:
    return min_tick_bps(spec) * 100 >= limit_bps


def _demand(trade_stats: Sequence[TradeStats], statistic: str) -> tuple[Decimal, Decimal]:
    """Worst day's per-minute (bid, ask) demand for the chosen statistic."""
    if statistic == "mean":
        return (max(s.mean_minute_bid_demand for s in trade_stats),
                max(s.mean_minute_ask_demand for s in trade_stats))
    if statistic == "p95":
        return (max(s.p95_minute_bid_demand for s in trade_stats),
                max(s.p95_minute_ask_demand for s in trade_stats))
    raise ValueError(f"unsupported statistic {statistic!r}")


def condition2_depth(grid: DepthGrid, trade_stats: Sequence[TradeStats], spread_bps: Decimal | int,
                     statistic: str = "p95",
                     buckets: Mapping[MinuteKey, MinuteBucket] | None = None) -> bool:
    """Mean bid depth must cover sell demand and mean ask depth buy demand.

    Demand is the per-minute ``statistic`` over trade-active minutes, taken on
    the worst day (``max`` is the single busiest minute and needs ``buckets``).
    With no trade-active minutes the condition holds vacuously and a warning
    is logged.
    """
    active = [s for s in trade_stats if s.active_minutes > 0]
    if not active:
        log.warning("no trade-active minutes; depth condition holds vacuously")
        return True
    if statistic == "max":
        if buckets is None:
            raise ValueError("statistic 'max' needs the minute buckets")
        bid_need = max(b.sell_notional for b in buckets.values())
        ask_need = max(b.buy_notional for b in buckets.values())
    else:
        bid_need, ask_need = _demand(active, statistic)
    mean_bid, mean_ask = grid.mean_depth(spread_bps)
    return mean_bid >= bid_need and mean_ask >= ask_need


def condition3_stationary(series: Sequence[Decimal], significance: float = 0.05) -> tuple[bool, AdfResult | None, str]:
    """ADF on a depth series. Constant or too-short series cannot be tested and pass with a note."""
    try:
        res = adf_test(series, significance=significance)
    except DegenerateSeriesError:
        return True, None, "constant depth series; ADF not applicable"
    except InsufficientDataError as exc:
        return True, None, f"ADF skipped: {exc}"
    return res.stationary, res, ""


def insufficiency_percentage(grid: DepthGrid, minute_volumes: Mapping[MinuteKey, MinuteBucket],
                             spread_bps: Decimal | int, coverage_fraction: Decimal | str = Decimal("0.80"),
                             zero_fill: bool = False) -> Decimal:
    """Percent of overlapping minutes where either side's depth falls short of
    ``coverage_fraction x`` that minute's total traded notional.

    Overlap means minutes with both a book row and trades; ``zero_fill`` also
    counts book minutes without trades (which can never fail).
    """
    cov = Decimal(coverage_fraction)
    volumes = {k.minute: b.total_notional for k, b in minute_volumes.items()
               if not grid.markets or k.market in grid.markets}
    failing = total = 0
    for minute, row in sorted(grid.by_minute().items()):
        vol = volumes.get(minute)
        if vol is None:
            if not zero_fill:
                continue
            vol = Decimal(0)
        total += 1
        bid, ask = grid.depth_at(row, spread_bps)
        need = cov * vol
        if bid < need or ask < need:
            failing += 1
    if total == 0:
        raise InsufficientDataError("order book and trade minutes do not overlap")
    return Decimal(100) * failing / total


# --------------------------------------------------------------------------- #
# sweep
# --------------------------------------------------------------------------- #

def _mean_or_zero(values: list[Decimal]) -> Decimal:
    return stats.mean(values) if values else Decimal(0)


def sweep_max_spread(books: Sequence[OrderBookSnapshot], recon: Sequence[ReconstructedBook],
                     trades: Sequence[TradeRecord], spec: MarketSpec,
                     cfg: CalibrationConfig | None = None,
                     events: Sequence[EventWindow] = ()) -> CalibrationResult:
    """Evaluate every configured spread and pick the smallest passing one."""
    cfg = cfg or CalibrationConfig()
    books = [b for b in books if b.market == spec.market]
    trades = [t for t in trades if t.market == spec.market]
    grid = depth_grid(books, cfg.spreads_bps)
    buckets = bucket_trades_per_minute(trades)
    book_minutes = {r.minute for r in grid.rows}
    if not any(k.minute in book_minutes for k in buckets):
        raise InsufficientDataError(f"{spec.market}: no trade-active minute overlaps the book series")
    tstats = trade_statistics(trades, buckets)
    tick_bps = min_tick_bps(spec)
    notes: list[str] = []

    mean_trade = stats.mean([t.notional for t in trades])
    mean_sell = stats.mean([b.sell_notional for b in buckets.values()])
    mean_buy = stats.mean([b.buy_notional for b in buckets.values()])
    two_sided = [b for b in books if b.is_two_sided]
    if len(two_sided) < len(books):
        notes.append(f"{len(books) - len(two_sided)} one-sided snapshot(s) excluded from density and RLQ")

    summaries = []
    for spread in cfg.spreads_bps:
        s_notes: list[str] = []
        mean_bid, mean_ask = grid.mean_depth(spread)
        dens_bid = _mean_or_zero([spread_density(b, spec, spread, BookSide.BID).density for b in two_sided])
        dens_ask = _mean_or_zero([spread_density(b, spec, spread, BookSide.ASK).density for b in two_sided])
        rlq_bid = _mean_or_zero([relative_liquidity(b, spread, BookSide.BID, spec.tick_size).rlq for b in two_sided])
        rlq_ask = _mean_or_zero([relative_liquidity(b, spread, BookSide.ASK, spec.tick_size).rlq for b in two_sided])

        c1 = condition1_tick(spec, spread)
        c2 = condition2_depth(grid, tstats, spread, cfg.c2_statistic, buckets)
        series = [v for _, v in sorted(grid.series(spread).items())]
        c3, adf, note = condition3_stationary(series, float(cfg.adf_significance))
        if note:
            s_notes.append(note)
        c4 = True
        if events:
            profiles: list[EventProfile] = []
            for ev in events:
                try:
                    profiles.append(event_depth_profile(grid, recon, ev, spread))
                except InsufficientDataError as exc:
                    s_notes.append(f"event {ev.name} not evaluated: {exc}")
            if profiles:
                c4 = condition4_event_adequacy(profiles, cfg.event_tolerance_breaches)
        verdicts = ConditionVerdicts(
            c1_tick=c1,
            c2_mean_depth=c2,
            c3_stationary=c3,
            c4_event_adequate=c4,
            sd_condition=min(dens_bid, dens_ask) > mean_trade,
            rlq_condition=rlq_bid > mean_sell and rlq_ask > mean_buy,
        )
        insuff = insufficiency_percentage(grid, buckets, spread, cfg.volume_coverage_fraction, cfg.zero_fill)
        summaries.append(SpreadSummary(spread, mean_bid, mean_ask, dens_bid, dens_ask, rlq_bid, rlq_ask,
                                       insuff, verdicts, adf, tuple(s_notes)))

    if is_tick_constrained(spec, cfg.tick_constrained_bps):
        chosen, why = cfg.tick_constrained_bps, Rationale.TICK_CONSTRAINED
    else:
        passing = [s.spread_bps for s in summaries if s.verdicts.passes(cfg.draft_mode)]
        if passing:
            chosen, why = passing[0], Rationale.OK
        else:
            chosen, why = cfg.spreads_bps[-1], Rationale.DEPTH_LIMITED
    log.debug("%s: chosen %s bps (%s)", spec.market, format_bps(chosen), why.value)
    return CalibrationResult(spec.market, Decimal(spec.bracket_bps), chosen, why, tick_bps, summaries, notes)


# --------------------------------------------------------------------------- #
# classification
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class BracketRow:
    market: str
    original_bps: Decimal
    revised_bps: Decimal
    rationale: str

    def to_record(self) -> dict:
        return {
            "market": self.market,
            "original_bps": format_bps(self.original_bps),
            "revised_bps": format_bps(self.revised_bps),
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class InsufficiencyRow:
    key: str
    spread_bps: Decimal
    insufficiency_pct: Decimal
    status: str

    def to_record(self) -> dict:
        return {
            "key": self.key,
            "spread_bps": format_bps(self.spread_bps),
            "insufficiency_pct": str(self.insufficiency_pct),
            "status": self.status,
        }


def retest_key(market: str, spread_bps: Decimal) -> str:
    """Label for a widened re-test: the spread in percent, e.g. ``CELO-USD_0.4``."""
    pct = (Decimal(spread_bps) / 100).normalize()
    return f"{market}_{pct:f}"


def _status(pct: Decimal, cfg: CalibrationConfig) -> str:
    if pct >= cfg.insufficiency_threshold_widen * 100:
        return "widen"
    if pct > cfg.insufficiency_threshold_initial * 100:
        return "watch"
    return "pass"


def _bracket_for(spread: Decimal, brackets: Sequence[Decimal]) -> Decimal:
    for b in brackets:
        if b >= spread:
            return b
    return brackets[-1]


def classify_markets(results: Iterable[CalibrationResult],
                     cfg: CalibrationConfig | None = None) -> tuple[list[BracketRow], list[InsufficiencyRow]]:
    """Map each market to a bracket, widening once where insufficiency hits the threshold.

    Returns the bracket table and the insufficiency log (initial plus re-test rows).
    """
    cfg = cfg or CalibrationConfig()
    rows: list[BracketRow] = []
    log_rows: list[InsufficiencyRow] = []
    seen: set[str] = set()
    for res in sorted(results, key=lambda r: r.market):
        if res.market in seen:
            raise ValidationError(f"duplicate calibration result for {res.market}")
        seen.add(res.market)
        if res.rationale is Rationale.TICK_CONSTRAINED:
            rows.append(BracketRow(res.market, res.bracket_bps, cfg.brackets_bps[-1], res.rationale.value))
            continue
        chosen = res.chosen_bps
        rationale = res.rationale.value
        pct = res.summary_at(chosen).insufficiency_pct
        log_rows.append(InsufficiencyRow(res.market, chosen, pct, _status(pct, cfg)))
        if pct >= cfg.insufficiency_threshold_widen * 100:
            wider = [s for s in cfg.spreads_bps if s > chosen]
            if wider:
                chosen = wider[0]
                pct = res.summary_at(chosen).insufficiency_pct
                log_rows.append(InsufficiencyRow(retest_key(res.market, chosen), chosen, pct, _status(pct, cfg)))
                rationale = f"{rationale}+WIDENED"
        rows.append(BracketRow(res.market, res.bracket_bps, _bracket_for(chosen, cfg.brackets_bps), rationale))
    return rows, log_rows
