"""Command-line front end.

Every subcommand reads plain files and writes CSV or JSON tables plus a
``manifest.json`` into ``--out``. Per-market work can fan out to a process
pool (``--jobs``); results are sorted before writing so output bytes do not
depend on scheduling.

Exit codes: 0 success, 1 invalid data, 2 I/O failure, 64 bad usage.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Sequence

from . import __version__
from .calibration import (
    BracketRow,
    CalibrationConfig,
    CalibrationResult,
    classify_markets,
    sweep_max_spread,
)
from .errors import InsufficientDataError, SpreadLabError
from .event_study import EventProfile, EventWindow, RecoveryReport, event_depth_profile, load_events, time_to_recovery
from .liquidity_metrics import depth_grid, min_tick_bps, trade_statistics, trade_stats_records
from .market_data import (
    MarketSpec,
    OrderBookSnapshot,
    TradeRecord,
    bucket_trades_per_minute,
    format_bps,
    format_timestamp,
    load_market_specs,
    load_orderbooks,
    load_trades,
    parse_timestamp,
)
from .reconstruction import depth_adequacy_series, estimated_depth_required, reconstruct_minute_books, recon_records
from .report import FORMATS, ReportWriter, render_csv
from . import rewards as rw

log = logging.getLogger("spreadlab")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_USAGE = 64

DEFAULT_SPREADS = "5,10,15,20,30,40,50"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# --------------------------------------------------------------------------- #
# argument types
# --------------------------------------------------------------------------- #

def _decimal(text: str) -> Decimal:
    try:
        value = Decimal(str(text).strip())
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value.is_finite():
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return value


def _decimal_list(text: str) -> tuple[Decimal, ...]:
    parts = [p for p in re.split(r"[,\s]+", str(text).strip()) if p]
    if not parts:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(_decimal(p) for p in parts)


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in str(text).split(",") if p.strip())


def _when(text: str) -> datetime:
    text = str(text).strip()
    try:
        if re.fullmatch(r"\d{4}-\d{2}-\d{2}", text):
            return datetime.fromisoformat(text).replace(tzinfo=timezone.utc)
        return parse_timestamp(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad date/time {text!r}: {exc}") from None


# --------------------------------------------------------------------------- #
# parser
# --------------------------------------------------------------------------- #

def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    g = p.add_argument_group("run options")
    g.add_argument("--config", type=Path, help="TOML file whose keys mirror the flags (flags win)")
    g.add_argument("--out", type=Path, help="output directory" + ("" if out_required else " (default: stdout)"))
    g.add_argument("--format", choices=FORMATS, default="csv", help="table format (default csv)")


def _data(p: argparse.ArgumentParser, books: bool = True, specs: bool = False, events: bool = False) -> None:
    g = p.add_argument_group("inputs")
    if books:
        g.add_argument("--books", type=Path, help="order book snapshots, JSON lines (.gz ok)")
    g.add_argument("--trades", type=Path, help="trade tape CSV")
    g.add_argument("--trades-market", help="market id for a trade file without a market column")
    if specs:
        g.add_argument("--markets", type=Path, help="market spec CSV: market,tickSize,indexPrice,bracketBps")
    if events:
        g.add_argument("--events", type=Path, help="event windows, JSON or TOML")
    g.add_argument("--only", type=_name_list, default=(), help="comma-separated market filter")
    g.add_argument("--start", type=_when, help="keep data at or after this date/time (UTC)")
    g.add_argument("--end", type=_when, help="keep data before this date/time (UTC)")
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes (default: all cores)")
    g.add_argument("--no-liquidations", action="store_true", help="drop liquidation trades from reconstruction")
    g.add_argument("--rounding", choices=("truncate", "nearest"), default="truncate",
                   help="minute assignment for reconstructed trades")


def _spreads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spreads", type=_decimal_list, default=DEFAULT_SPREADS, help="bps grid (default %(default)s)")


def _calibration_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("calibration")
    g.add_argument("--coverage", type=_decimal, default="0.80", help="volume coverage fraction (default 0.80)")
    g.add_argument("--draft-mode", action="store_true", help="also enforce the density and RLQ conditions")
    g.add_argument("--zero-fill", action="store_true", help="count trade-free book minutes in backtests")
    g.add_argument("--c2-statistic", choices=("mean", "p95", "max"), default="p95",
                   help="per-minute demand statistic the mean depth must cover")
    g.add_argument("--brackets", type=_decimal_list, default="15,20,30,40", help="bracket set (default %(default)s)")
    g.add_argument("--widen-threshold", type=_decimal, default="0.05", help="insufficiency that triggers a re-test")
    g.add_argument("--adf-significance", type=_decimal, default="0.05")


def _event_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("events")
    g.add_argument("--threshold", type=_decimal, default="0.75", help="recovery fraction of baseline (default 0.75)")
    g.add_argument("--recovery-side", choices=("total", "bid", "ask"), default="total",
                   help="depth series tracked for recovery")


def build_parser() -> tuple[argparse.ArgumentParser, dict[tuple[str, ...], argparse.ArgumentParser]]:
    parser = _Parser(prog="spreadlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spreadlab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    leaves: dict[tuple[str, ...], argparse.ArgumentParser] = {}

    p = sub.add_parser("metrics", help="depth grid, tick bps and daily trade statistics")
    _common(p)
    _data(p, specs=True)
    _spreads(p)
    leaves[("metrics",)] = p

    p = sub.add_parser("reconstruct", help="per-minute books rebuilt from trades")
    _common(p)
    _data(p)
    _spreads(p)
    p.add_argument("--zero-fill", action="store_true", help="keep book minutes without trades in adequacy output")
    leaves[("reconstruct",)] = p

    p = sub.add_parser("calibrate", help="maxSpread sweep and bracket table")
    _common(p)
    _data(p, specs=True, events=True)
    _spreads(p)
    _calibration_flags(p)
    leaves[("calibrate",)] = p

    p = sub.add_parser("events", help="event-window depth profiles and time to recovery")
    _common(p)
    _data(p, events=True)
    _spreads(p)
    _event_flags(p)
    leaves[("events",)] = p

    p = sub.add_parser("report", help="full pipeline: metrics, reconstruction, calibration, events, tiers")
    _common(p)
    _data(p, specs=True, events=True)
    _spreads(p)
    _calibration_flags(p)
    _event_flags(p)
    p.add_argument("--fees", type=Path, help="fees CSV (market,fees) for the tier table")
    p.add_argument("--epochs", type=Path, help="epoch LP stats CSV for reward shares")
    p.add_argument("--sample", action="store_true", help="run on the bundled synthetic dataset")
    leaves[("report",)] = p

    p = sub.add_parser("rewards", help="LP reward, rebate and DMM arithmetic")
    rsub = p.add_subparsers(dest="rewards_command", metavar="ACTION", parser_class=_Parser)

    q = rsub.add_parser("qscore", help="Q score for one LP")
    _common(q, out_required=False)
    q.add_argument("--depth-score", type=_decimal, default="1")
    q.add_argument("--uptime", type=_decimal, default="1", help="fraction of samples with qualifying quotes")
    q.add_argument("--maker-volume", type=_decimal, default="1")
    _weights(q)
    q.add_argument("--volatile", action="store_true", help="apply the volatile-day multiplier")
    q.add_argument("--multiplier", type=_decimal, default=str(rw.VOLATILITY_MULTIPLIER))
    leaves[("rewards", "qscore")] = q

    q = rsub.add_parser("shares", help="reward shares from an epoch LP table")
    _common(q, out_required=False)
    q.add_argument("--epochs", type=Path)
    _weights(q)
    q.add_argument("--pool", type=_decimal, default=str(rw.LP_POOL_TOKENS), help="tokens to distribute")
    leaves[("rewards", "shares")] = q

    q = rsub.add_parser("rebates", help="rebate tier per LP from maker volume share")
    _common(q, out_required=False)
    q.add_argument("--epochs", type=Path)
    q.add_argument("--schedule", type=Path, help="rebate schedule JSON/TOML (default: normal schedule)")
    q.add_argument("--enhanced", action="store_true", help="use the enhanced schedule")
    q.add_argument("--exchange-volume", type=_decimal, help="30-day exchange volume in USD")
    leaves[("rewards", "rebates")] = q

    q = rsub.add_parser("curve", help="rebate cost against token rewards across volumes")
    _common(q, out_required=False)
    q.add_argument("--rewards-usd", type=_decimal, default="1841096")
    q.add_argument("--rate-low", type=_decimal, default="0.0001")
    q.add_argument("--rate-high", type=_decimal, default="0.000179")
    q.add_argument("--volumes", type=_decimal_list, help="explicit volume list")
    q.add_argument("--max-volume", type=_decimal, default="25000000000")
    q.add_argument("--steps", type=int, default=25)
    leaves[("rewards", "curve")] = q

    q = rsub.add_parser("dmm", help="DMM scores, stake, penalty and reward")
    _common(q, out_required=False)
    q.add_argument("--bids", type=Path, help="CSV account,metric,value,total (one row per metric)")
    q.add_argument("--daily-liquidity", type=_decimal, default="0")
    q.add_argument("--days", type=int, default=28)
    q.add_argument("--stake-rate", type=_decimal, default="0.0002")
    q.add_argument("--penalty-fraction", type=_decimal, default="0")
    q.add_argument("--reward-fraction", type=_decimal, default="0")
    leaves[("rewards", "dmm")] = q

    q = rsub.add_parser("tiers", help="fee revenue per market tier against reward allocation")
    _common(q, out_required=False)
    q.add_argument("--fees", type=Path)
    q.add_argument("--allocation", choices=("80", "100"), default="80", help="allocation plan (percent of pool)")
    q.add_argument("--pool-usd", type=_decimal, default=str(rw.LP_POOL_USD))
    leaves[("rewards", "tiers")] = q
    return parser, leaves


def _weights(p: argparse.ArgumentParser) -> None:
    p.add_argument("--market", default="", help="take default weights for this market")
    p.add_argument("--y", type=_decimal, help="depth-spread exponent")
    p.add_argument("--z", type=_decimal, help="maker volume exponent")


# --------------------------------------------------------------------------- #
# config
# --------------------------------------------------------------------------- #

def _config_defaults(path: Path, leaf: argparse.ArgumentParser, command: tuple[str, ...]) -> dict:
    from ._compat import tomllib

    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    merged: dict = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    section: object = raw
    for name in command:
        section = section.get(name, {}) if isinstance(section, dict) else {}
        if isinstance(section, dict):
            merged.update({k: v for k, v in section.items() if not isinstance(v, dict)})
    dests = {a.dest for a in leaf._actions}
    out = {}
    for key, value in merged.items():
        dest = key.replace("-", "_")
        if dest not in dests or dest == "config":
            raise UsageError(f"{path}: unknown setting {key!r} for {' '.join(command)}")
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            value = str(value)
        out[dest] = value
    return out


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser, leaves = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("spreadlab: error: a command is required")
    command = (args.command,) if args.command != "rewards" else ("rewards", args.rewards_command)
    if command[-1] is None:
        raise UsageError("spreadlab rewards: error: an action is required")
    if getattr(args, "config", None):
        leaf = leaves[command]
        leaf.set_defaults(**_config_defaults(args.config, leaf, command))
        args = parser.parse_args(argv)
    args.command_path = command
    return args


# --------------------------------------------------------------------------- #
# data loading
# --------------------------------------------------------------------------- #

@dataclass
class Inputs:
    books: dict[str, list[OrderBookSnapshot]] = field(default_factory=dict)
    trades: dict[str, list[TradeRecord]] = field(default_factory=dict)
    specs: dict[str, MarketSpec] = field(default_factory=dict)
    events: list[EventWindow] = field(default_factory=list)

    @property
    def markets(self) -> list[str]:
        return sorted(set(self.books) | set(self.trades))


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"spreadlab {' '.join(args.command_path)}: error: missing required input(s): {flags}")


def _check_paths(args: argparse.Namespace, *names: str) -> None:
    for n in names:
        p = getattr(args, n, None)
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(2, "input file not found", str(p))


def _in_range(ts: datetime, args: argparse.Namespace) -> bool:
    return (args.start is None or ts >= args.start) and (args.end is None or ts < args.end)


def load_inputs(args: argparse.Namespace, books: bool = True, specs: bool = False, events: bool = False) -> Inputs:
    if args.start and args.end and not args.start < args.end:
        raise SpreadLabError("--start must precede --end")
    inp = Inputs()
    keep = set(args.only)
    if books:
        for b in load_orderbooks(args.books):
            if (not keep or b.market in keep) and _in_range(b.ts, args):
                inp.books.setdefault(b.market, []).append(b)
    if args.trades is not None:
        for t in load_trades(args.trades, market=args.trades_market):
            if (not keep or t.market in keep) and _in_range(t.created_at, args):
                inp.trades.setdefault(t.market, []).append(t)
    if specs:
        inp.specs = {m: s for m, s in load_market_specs(args.markets).items() if not keep or m in keep}
    if events and getattr(args, "events", None) is not None:
        inp.events = load_events(args.events)
    return inp


# --------------------------------------------------------------------------- #
# per-market work (runs in worker processes)
# --------------------------------------------------------------------------- #

@dataclass
class MarketJob:
    market: str
    books: list[OrderBookSnapshot]
    trades: list[TradeRecord]
    spec: MarketSpec | None
    spreads: tuple[Decimal, ...]
    tasks: frozenset[str]
    rounding: str = "truncate"
    include_liquidations: bool = True
    zero_fill: bool = False
    cfg: CalibrationConfig | None = None
    events: tuple[EventWindow, ...] = ()
    threshold: Decimal = Decimal("0.75")
    recovery_side: str = "total"


@dataclass
class MarketOutput:
    market: str
    snapshots: int = 0
    trades: int = 0
    grid: list[dict] = field(default_factory=list)
    trade_stats: list[dict] = field(default_factory=list)
    tick: dict | None = None
    recon: list[dict] = field(default_factory=list)
    required: dict | None = None
    adequacy: list[dict] = field(default_factory=list)
    calibration: CalibrationResult | None = None
    profiles: list[EventProfile] = field(default_factory=list)
    recovery: list[RecoveryReport] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def run_market(job: MarketJob) -> MarketOutput:
    out = MarketOutput(job.market, len(job.books), len(job.trades))
    grid = depth_grid(job.books, job.spreads) if job.books else None
    recon = reconstruct_minute_books(job.trades, job.rounding, job.include_liquidations)

    if "metrics" in job.tasks:
        if grid is not None:
            out.grid = grid.to_records()
        if job.trades:
            out.trade_stats = trade_stats_records(trade_statistics(job.trades, bucket_trades_per_minute(job.trades)))
        if job.spec is not None:
            out.tick = {
                "market": job.market,
                "tick_size": str(job.spec.tick_size),
                "index_price": str(job.spec.index_price),
                "min_tick_pct": str(min_tick_bps(job.spec)),
                "min_tick_bps": str(min_tick_bps(job.spec) * 100),
            }

    if "reconstruct" in job.tasks:
        out.recon = recon_records(recon)
        if recon:
            out.required = estimated_depth_required(recon).to_record(job.market)
        if grid is not None and recon:
            for s in job.spreads:
                try:
                    series = depth_adequacy_series(grid, recon, s, job.zero_fill)
                except InsufficientDataError as exc:
                    out.warnings.append(f"adequacy: {exc}")
                    break
                for r in series.rows:
                    out.adequacy.append({
                        "market": job.market, "minute": format_timestamp(r.minute), "spread_bps": format_bps(s),
                        "book_bid": str(r.book_bid), "book_ask": str(r.book_ask),
                        "required_bid": str(r.required_bid), "required_ask": str(r.required_ask),
                        "adequate": r.adequate,
                    })

    if "calibrate" in job.tasks and job.spec is not None and job.cfg is not None:
        out.calibration = sweep_max_spread(job.books, recon, job.trades, job.spec, job.cfg, job.events)

    if "events" in job.tasks and grid is not None:
        for ev in job.events:
            for s in job.spreads:
                try:
                    out.profiles.append(event_depth_profile(grid, recon, ev, s))
                    out.recovery.append(time_to_recovery(grid.series(s, job.recovery_side), ev, job.threshold,
                                                         job.market, s))
                except InsufficientDataError as exc:
                    out.warnings.append(f"event {ev.name} at {format_bps(s)} bps skipped: {exc}")
    return out


def run_jobs(jobs: list[MarketJob], workers: int) -> list[MarketOutput]:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(run_market, jobs))
    else:
        results = [run_market(j) for j in jobs]
    # scheduling must never leak into output ordering
    return sorted(results, key=lambda r: r.market)


# --------------------------------------------------------------------------- #
# commands
# --------------------------------------------------------------------------- #

def _calibration_config(args: argparse.Namespace) -> CalibrationConfig:
    return CalibrationConfig(
        spreads_bps=args.spreads,
        volume_coverage_fraction=args.coverage,
        insufficiency_threshold_widen=args.widen_threshold,
        adf_significance=args.adf_significance,
        draft_mode=args.draft_mode,
        c2_statistic=args.c2_statistic,
        brackets_bps=args.brackets,
        zero_fill=args.zero_fill,
        recovery_fraction=getattr(args, "threshold", Decimal("0.75")),
    )


def _jobs_for(args: argparse.Namespace, inp: Inputs, tasks: set[str], cfg: CalibrationConfig | None = None,
              need_spec: bool = False) -> list[MarketJob]:
    jobs = []
    markets = inp.markets
    if need_spec:
        missing = [m for m in markets if m not in inp.specs]
        for m in missing:
            log.warning("%s: no market spec; skipped", m)
        markets = [m for m in markets if m in inp.specs]
    for m in markets:
        jobs.append(MarketJob(
            market=m,
            books=inp.books.get(m, []),
            trades=inp.trades.get(m, []),
            spec=inp.specs.get(m),
            spreads=args.spreads,
            tasks=frozenset(tasks),
            rounding=args.rounding,
            include_liquidations=not args.no_liquidations,
            zero_fill=getattr(args, "zero_fill", False),
            cfg=cfg,
            events=tuple(inp.events),
            threshold=getattr(args, "threshold", Decimal("0.75")),
            recovery_side=getattr(args, "recovery_side", "total"),
        ))
    if not jobs:
        raise InsufficientDataError("no markets to process after filtering")
    return jobs


GRID_BASE = ("market", "minute")
TICK_COLUMNS = ("market", "tick_size", "index_price", "min_tick_pct", "min_tick_bps")
ADEQUACY_COLUMNS = ("market", "minute", "spread_bps", "book_bid", "book_ask", "required_bid", "required_ask",
                    "adequate")
RECON_COLUMNS = ("market", "minute", "bid_notional", "ask_notional", "level_count_bid", "level_count_ask")
PROFILE_COLUMNS = ("market", "event", "spread_bps", "minute", "book_bid", "book_ask", "recon_bid", "recon_ask",
                   "breach")
RECOVERY_COLUMNS = ("market", "spread_bps", "event", "baseline_depth", "trough_minute", "recovery_minutes")
EVENT_SUMMARY_COLUMNS = ("market", "event", "spread_bps", "pre_mean", "post_mean", "min_depth", "breach_count")


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_") or "event"


def _grid_columns(spreads: Sequence[Decimal]) -> list[str]:
    cols = list(GRID_BASE)
    for s in spreads:
        cols += [f"bid_{format_bps(s)}", f"ask_{format_bps(s)}"]
    return cols + ["one_sided"]


def _write_metrics(w: ReportWriter, outs: list[MarketOutput], spreads: Sequence[Decimal]) -> None:
    w.table("depth_grid", [r for o in outs for r in o.grid], _grid_columns(spreads))
    stats_rows = [r for o in outs for r in o.trade_stats]
    w.table("trade_stats", stats_rows, list(stats_rows[0]) if stats_rows else ["market", "day"])
    w.table("tick_bps", [o.tick for o in outs if o.tick], TICK_COLUMNS)


def _write_reconstruct(w: ReportWriter, outs: list[MarketOutput]) -> None:
    w.table("recon", [r for o in outs for r in o.recon], RECON_COLUMNS)
    req = [o.required for o in outs if o.required]
    w.table("depth_required", req, list(req[0]) if req else ["market"])
    if any(o.adequacy for o in outs):
        rows = sorted((r for o in outs for r in o.adequacy),
                      key=lambda r: (r["market"], r["minute"], Decimal(r["spread_bps"])))
        w.table("adequacy", rows, ADEQUACY_COLUMNS, sort=False)


def _write_calibration(w: ReportWriter, outs: list[MarketOutput], cfg: CalibrationConfig) -> list[BracketRow]:
    results = [o.calibration for o in outs if o.calibration is not None]
    brackets, insuff = classify_markets(results, cfg)
    w.table("calibration", [b.to_record() for b in brackets], ("market", "original_bps", "revised_bps", "rationale"))
    w.table("insufficiency", [r.to_record() for r in insuff], ("key", "spread_bps", "insufficiency_pct", "status"),
            sort=False)
    w.document("calibration.json", {"markets": [r.to_dict() for r in results]}, len(results))
    return brackets


def _write_events(w: ReportWriter, outs: list[MarketOutput], events: Sequence[EventWindow]) -> None:
    for ev in sorted(events, key=lambda e: (e.start, e.name)):
        rows = [rec for o in outs for p in o.profiles if p.event == ev.name for rec in p.to_records()]
        rows.sort(key=lambda r: (r["market"], Decimal(r["spread_bps"]), r["minute"]))
        if rows:
            w.table(f"event_profile_{_slug(ev.name)}", rows, PROFILE_COLUMNS, sort=False)
    summary = [
        {"market": p.market, "event": p.event, "spread_bps": format_bps(p.spread_bps), "pre_mean": str(p.pre_mean),
         "post_mean": str(p.post_mean), "min_depth": str(p.min_depth), "breach_count": p.breach_count}
        for o in outs for p in o.profiles
    ]
    summary.sort(key=lambda r: (r["market"], r["event"], Decimal(r["spread_bps"])))
    w.table("event_summary", summary, EVENT_SUMMARY_COLUMNS, sort=False)
    rec = [r.to_record() for o in outs for r in o.recovery]
    rec.sort(key=lambda r: (r["market"], r["event"], Decimal(r["spread_bps"])))
    w.table("recovery", rec, RECOVERY_COLUMNS, sort=False)


def _writer(args: argparse.Namespace) -> ReportWriter:
    if args.out is None:
        raise UsageError(f"spreadlab {' '.join(args.command_path)}: error: --out is required")
    return ReportWriter(args.out, args.format)


def _warn(outs: list[MarketOutput]) -> None:
    for o in outs:
        for msg in o.warnings:
            log.warning("%s: %s", o.market, msg)


def cmd_metrics(args: argparse.Namespace) -> int:
    _require(args, "books", "markets")
    _check_paths(args, "books", "trades", "markets")
    w = _writer(args)
    inp = load_inputs(args, specs=True)
    outs = run_jobs(_jobs_for(args, inp, {"metrics"}), args.jobs)
    _write_metrics(w, outs, args.spreads)
    w.manifest()
    for o in outs:
        tick = f", min tick {o.tick['min_tick_bps']} bps" if o.tick else ""
        print(f"{o.market}: {o.snapshots} snapshots, {o.trades} trades{tick}")
    return EXIT_OK


def cmd_reconstruct(args: argparse.Namespace) -> int:
    _require(args, "trades")
    _check_paths(args, "books", "trades")
    w = _writer(args)
    inp = load_inputs(args, books=args.books is not None)
    outs = run_jobs(_jobs_for(args, inp, {"reconstruct"}), args.jobs)
    _warn(outs)
    _write_reconstruct(w, outs)
    w.manifest()
    for o in outs:
        print(f"{o.market}: {len(o.recon)} trade-active minutes from {o.trades} trades")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    _require(args, "books", "trades", "markets")
    _check_paths(args, "books", "trades", "markets", "events")
    w = _writer(args)
    cfg = _calibration_config(args)
    inp = load_inputs(args, specs=True, events=True)
    outs = run_jobs(_jobs_for(args, inp, {"calibrate"}, cfg, need_spec=True), args.jobs)
    brackets = _write_calibration(w, outs, cfg)
    w.manifest()
    for b in brackets:
        print(f"{b.market}: {format_bps(b.original_bps)} -> {format_bps(b.revised_bps)} bps ({b.rationale})")
    return EXIT_OK


def cmd_events(args: argparse.Namespace) -> int:
    _require(args, "books", "events")
    _check_paths(args, "books", "trades", "events")
    w = _writer(args)
    inp = load_inputs(args, events=True)
    if not inp.events:
        raise SpreadLabError(f"{args.events}: no events defined")
    outs = run_jobs(_jobs_for(args, inp, {"events"}), args.jobs)
    _warn(outs)
    if not any(o.recovery for o in outs):
        raise InsufficientDataError("no event window is covered by the order book data")
    _write_events(w, outs, inp.events)
    w.manifest()
    for o in outs:
        slow = [r for r in o.recovery if not r.recovered]
        worst = max((r.recovery_minutes for r in o.recovery if r.recovered), default=0)
        print(f"{o.market}: {len(o.recovery)} recovery checks, slowest {worst} min, {len(slow)} not recovered")
    return EXIT_OK


def _sample_path(name: str) -> Path:
    return Path(str(resources.files("spreadlab.data.sample").joinpath(name)))


def cmd_report(args: argparse.Namespace) -> int:
    if args.sample:
        for dest, name in (("books", "books.jsonl.gz"), ("trades", "trades.csv"), ("markets", "markets.csv"),
                           ("events", "events.json")):
            if getattr(args, dest) is None:
                setattr(args, dest, _sample_path(name))
    _require(args, "books", "trades", "markets")
    _check_paths(args, "books", "trades", "markets", "events", "fees", "epochs")
    w = _writer(args)
    cfg = _calibration_config(args)
    inp = load_inputs(args, specs=True, events=True)
    tasks = {"metrics", "reconstruct", "calibrate", "events"}
    outs = run_jobs(_jobs_for(args, inp, tasks, cfg), args.jobs)
    _warn(outs)
    _write_metrics(w, outs, args.spreads)
    _write_reconstruct(w, outs)
    brackets = {b.market: b for b in _write_calibration(w, outs, cfg)}
    if inp.events:
        _write_events(w, outs, inp.events)
    if args.fees is not None:
        w.table("tiers", [r.to_record() for r in rw.tier_allocation(rw.load_fees(args.fees))], sort=False)
    if args.epochs is not None:
        w.table("shares", _share_records(rw.load_epoch_stats(args.epochs), rw.QWeights.for_market(""),
                                         rw.LP_POOL_TOKENS), sort=False)
    w.manifest()
    for o in outs:
        b = brackets.get(o.market)
        cal = f"; {format_bps(b.original_bps)} -> {format_bps(b.revised_bps)} bps ({b.rationale})" if b else ""
        print(f"{o.market}: {o.snapshots} snapshots, {o.trades} trades{cal}")
    return EXIT_OK


# --------------------------------------------------------------------------- #
# rewards
# --------------------------------------------------------------------------- #

def _emit_small(args: argparse.Namespace, stem: str, records: list[dict], columns: Sequence[str]) -> None:
    if args.out is None:
        sys.stdout.write(render_csv(records, columns))
        return
    w = ReportWriter(args.out, args.format)
    w.table(stem, records, columns, sort=False)
    w.manifest()


def _weights_from(args: argparse.Namespace) -> rw.QWeights:
    base = rw.QWeights.for_market(args.market)
    return rw.QWeights(args.y if args.y is not None else base.y, args.z if args.z is not None else base.z)


def _share_records(rows: list[rw.EpochRow], w: rw.QWeights, pool: Decimal) -> list[dict]:
    samples = [r.sample() for r in rows]
    shares = rw.reward_shares(samples, w, pool)
    linear = rw.linear_volume_shares(samples, pool)
    out = []
    for r in sorted(rows, key=lambda r: r.account):
        s = shares[r.account]
        out.append({
            "account": r.account,
            "reported_share_pct": str(r.reward_share_pct),
            "maker_volume_pct": str(r.maker_volume_pct),
            "uptime_pct": str(r.uptime_pct),
            "q": str(s.q),
            "share_pct": str(s.share * 100),
            "tokens": str(s.tokens),
            "linear_share_pct": str(linear[r.account].share * 100),
        })
    return out


def cmd_rewards(args: argparse.Namespace) -> int:
    action = args.rewards_command
    if action == "qscore":
        w = _weights_from(args)
        q = rw.q_final(rw.LpEpochSample("lp", args.depth_score, args.uptime, args.maker_volume), w)
        q = rw.apply_volatility_multiplier(q, args.volatile, args.multiplier)
        _emit_small(args, "qscore", [{"y": str(w.y), "z": str(w.z), "q_final": str(q)}], ("y", "z", "q_final"))
    elif action == "shares":
        _require(args, "epochs")
        _check_paths(args, "epochs")
        recs = _share_records(rw.load_epoch_stats(args.epochs), _weights_from(args), args.pool)
        _emit_small(args, "shares", recs, list(recs[0]))
    elif action == "rebates":
        _require(args, "epochs")
        _check_paths(args, "epochs", "schedule")
        if args.schedule is not None:
            schedule = rw.load_rebate_schedule(args.schedule)
        else:
            schedule = rw.ENHANCED_SCHEDULE if args.enhanced else rw.NORMAL_SCHEDULE
        recs = []
        for r in sorted(rw.load_epoch_stats(args.epochs), key=lambda r: r.account):
            tier = rw.assign_rebate_tier(r.maker_volume_pct / 100, schedule)
            rate = tier.rebate_rate if tier else Decimal(0)
            usd = "" if args.exchange_volume is None else str(
                rw.rebate_value(args.exchange_volume * r.maker_volume_pct / 100, rate))
            recs.append({"account": r.account, "maker_volume_pct": str(r.maker_volume_pct),
                         "tier": tier.label if tier else "", "rate": str(rate), "rebate_usd": usd})
        _emit_small(args, "rebates", recs, ("account", "maker_volume_pct", "tier", "rate", "rebate_usd"))
    elif action == "curve":
        if args.volumes:
            volumes = list(args.volumes)
        else:
            if args.steps < 1:
                raise UsageError("spreadlab rewards curve: error: --steps must be >= 1")
            volumes = [args.max_volume * i / args.steps for i in range(args.steps + 1)]
        rows = rw.rebates_vs_rewards_curve(volumes, args.rate_low, args.rate_high, args.rewards_usd)
        recs = [r.to_record() for r in rows]
        _emit_small(args, "curve", recs, ("volume", "rebate_low", "rebate_high", "rewards", "crossover_low",
                                          "crossover_high"))
    elif action == "dmm":
        _check_paths(args, "bids")
        stake = rw.dmm_stake_requirement(args.daily_liquidity, args.days, args.stake_rate)
        pr = rw.dmm_penalty_reward(stake, args.penalty_fraction, args.reward_fraction)
        base = {"stake": str(stake), "penalty": str(pr["penalty"]), "reward": str(pr["reward"])}
        if args.bids is None:
            _emit_small(args, "dmm", [base], ("stake", "penalty", "reward"))
        else:
            bids = _load_dmm_bids(args.bids)
            scored = sorted(((rw.dmm_score(b), b.account) for b in bids), key=lambda t: (-t[0], t[1]))
            recs = [{"rank": i + 1, "account": acct, "score": str(score), **base}
                    for i, (score, acct) in enumerate(scored)]
            _emit_small(args, "dmm", recs, ("rank", "account", "score", "stake", "penalty", "reward"))
    elif action == "tiers":
        _require(args, "fees")
        _check_paths(args, "fees")
        alloc = rw.ALLOCATION_80 if args.allocation == "80" else rw.ALLOCATION_100
        rows = rw.tier_allocation(rw.load_fees(args.fees), allocation=alloc, pool_usd=args.pool_usd)
        recs = [r.to_record() for r in rows]
        _emit_small(args, "tiers", recs, list(recs[0]))
    return EXIT_OK


def _load_dmm_bids(path: Path) -> list[rw.DmmBid]:
    import csv

    from .market_data import open_text, to_decimal

    per: dict[str, list[tuple[str, Decimal, Decimal]]] = {}
    with open_text(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"account", "metric", "value", "total"} <= set(reader.fieldnames):
            raise SpreadLabError(f"{path}: DMM bids need columns account,metric,value,total")
        for row in reader:
            per.setdefault(row["account"].strip(), []).append(
                (row["metric"].strip(), to_decimal(row["value"]), to_decimal(row["total"])))
    bids = []
    for acct in sorted(per):
        metrics = sorted(per[acct])
        bids.append(rw.DmmBid(acct, tuple(m[1] for m in metrics), tuple(m[2] for m in metrics)))
    return bids


COMMANDS = {
    "metrics": cmd_metrics,
    "reconstruct": cmd_reconstruct,
    "calibrate": cmd_calibrate,
    "events": cmd_events,
    "report": cmd_report,
    "rewards": cmd_rewards,
}


def _configure_logging() -> None:
    level = os.environ.get("SPREADLAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run_command(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run the command; returns the process exit code."""
    _configure_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (SpreadLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        where = f": {exc.filename}" if getattr(exc, "filename", None) else ""
        print(f"I/O error: {exc.strerror or exc}{where}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":  # pragma: no cover
    main()
