"""Liquidity-provider incentive arithmetic.

Covers the epoch Q score and the resulting reward shares, the linear maker
volume alternative, maker rebate schedules and their cost against token
rewards, designated market maker (DMM) scoring and staking, and per-tier
reward allocation driven by fee revenue.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError
from .market_data import open_text, to_decimal

log = logging.getLogger(__name__)

DYDX_PRICE_USD = Decimal(2)
# tokens emitted to LPs per epoch and their USD value at the reference price
LP_POOL_TOKENS = Decimal(1_150_685)
LP_POOL_USD = LP_POOL_TOKENS * DYDX_PRICE_USD
VOLATILITY_MULTIPLIER = Decimal(2)
UPTIME_EXPONENT = Decimal(5)


@dataclass(frozen=True)
class QWeights:
    y: Decimal
    z: Decimal
    uptime_exponent: Decimal = UPTIME_EXPONENT

    def __post_init__(self) -> None:
        for name in ("y", "z", "uptime_exponent"):
            v = Decimal(getattr(self, name))
            if v < 0:
                raise ValidationError(f"weight {name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)

    @classmethod
    def for_market(cls, market: str) -> "QWeights":
        """Current weights: y=0.15 on the majors, 0.35 elsewhere; z = 1 - y."""
        base = market.upper().split("-")[0]
        y = Decimal("0.15") if base in ("BTC", "ETH") else Decimal("0.35")
        return cls(y, 1 - y)


@dataclass(frozen=True)
class LpEpochSample:
    account: str
    depth_spread_score: Decimal
    positive_sample_count: Decimal
    maker_volume: Decimal

    def __post_init__(self) -> None:
        for name in ("depth_spread_score", "positive_sample_count", "maker_volume"):
            v = Decimal(getattr(self, name))
            if v < 0:
                raise ValidationError(f"{self.account}: {name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)
        if self.positive_sample_count > 1:
            raise ValidationError(f"{self.account}: uptime must lie in [0, 1], got {self.positive_sample_count}")


def _pow(base: Decimal, exp: Decimal) -> Decimal:
    # a zero weight switches the factor off, so 0^0 is 1 only in that case
    if exp == 0:
        return Decimal(1)
    if base == 0:
        return Decimal(0)
    with localcontext() as ctx:
        ctx.prec = 34
        return +(base ** exp)


def q_final(sample: LpEpochSample, w: QWeights) -> Decimal:
    """``depth_spread_score^y * uptime^5 * maker_volume^z``."""
    return (_pow(sample.depth_spread_score, w.y)
            * _pow(sample.positive_sample_count, w.uptime_exponent)
            * _pow(sample.maker_volume, w.z))


def depth_spread_score(samples: Iterable[tuple[Decimal, Decimal]]) -> Decimal:
    """Sum of ``depth / spread`` over (depth, spread) pairs from both sides of the book."""
    total = Decimal(0)
    for depth, spread in samples:
        if Decimal(spread) <= 0:
            raise ValidationError(f"spread must be positive, got {spread}")
        total += Decimal(depth) / Decimal(spread)
    return total


@dataclass(frozen=True)
class RewardShare:
    account: str
    q: Decimal
    share: Decimal
    tokens: Decimal


def _shares(scores: Mapping[str, Decimal], pool: Decimal) -> dict[str, RewardShare]:
    # the total is summed exactly so equal scores get exactly equal shares
    total = sum((Fraction(q) for q in scores.values()), Fraction(0))
    if total <= 0:
        raise ValidationError("no eligible LPs: every Q score is zero")
    out = {}
    for a, q in sorted(scores.items()):
        frac = Fraction(q) / total
        out[a] = RewardShare(a, q, _to_decimal(frac), _to_decimal(frac * Fraction(Decimal(pool))))
    return out


def _to_decimal(value: Fraction) -> Decimal:
    return Decimal(value.numerator) / Decimal(value.denominator)


def reward_shares(samples: Sequence[LpEpochSample], w: QWeights,
                  pool: Decimal | int = LP_POOL_TOKENS) -> dict[str, RewardShare]:
    """Shares proportional to Q; ``tokens`` is each share of ``pool``."""
    return _shares({s.account: q_final(s, w) for s in samples}, Decimal(pool))


def linear_volume_q(samples: Sequence[LpEpochSample]) -> dict[str, Decimal]:
    """Q equal to maker volume."""
    return {s.account: s.maker_volume for s in samples}


def linear_volume_shares(samples: Sequence[LpEpochSample],
                         pool: Decimal | int = LP_POOL_TOKENS) -> dict[str, RewardShare]:
    return _shares(linear_volume_q(samples), Decimal(pool))


def apply_volatility_multiplier(q: Decimal, is_volatile: bool,
                                multiplier: Decimal = VOLATILITY_MULTIPLIER) -> Decimal:
    if Decimal(multiplier) < 1:
        raise ValidationError(f"volatility multiplier must be >= 1, got {multiplier}")
    return q * Decimal(multiplier) if is_volatile else q


# --------------------------------------------------------------------------- #
# rebates
# --------------------------------------------------------------------------- #

def rebate_value(volume: Decimal, rate: Decimal) -> Decimal:
    volume, rate = Decimal(volume), Decimal(rate)
    if volume < 0 or rate < 0:
        raise ValidationError("volume and rate must be non-negative")
    return volume * rate


def fee_margin(fee_revenue: Decimal, volume: Decimal, rebate_rate: Decimal,
               dmm_share: Decimal = Decimal("0.5")) -> Decimal:
    """Fee revenue left after paying rebates on ``dmm_share`` of volume."""
    fee_revenue, volume, rebate_rate, dmm_share = map(Decimal, (fee_revenue, volume, rebate_rate, dmm_share))
    if min(fee_revenue, volume, rebate_rate, dmm_share) < 0 or dmm_share > 1:
        raise ValidationError("fee_margin inputs must be non-negative and dmm_share <= 1")
    return fee_revenue - volume * rebate_rate * dmm_share


def crossover_volume(rewards_usd: Decimal, rate: Decimal) -> Decimal:
    """Volume at which a flat rebate costs as much as the token rewards."""
    rate = Decimal(rate)
    if not Decimal(0) < rate < 1:
        raise ValidationError(f"rebate rate must lie in (0, 1), got {rate}")
    return Decimal(rewards_usd) / rate


@dataclass(frozen=True)
class CurveRow:
    volume: Decimal
    rebate_low: Decimal
    rebate_high: Decimal
    rewards: Decimal
    crossover_low: Decimal
    crossover_high: Decimal

    def to_record(self) -> dict:
        return {k: str(getattr(self, k)) for k in
                ("volume", "rebate_low", "rebate_high", "rewards", "crossover_low", "crossover_high")}


def rebates_vs_rewards_curve(volumes: Iterable[Decimal], rate_low: Decimal, rate_high: Decimal,
                             rewards_usd: Decimal) -> list[CurveRow]:
    rewards = Decimal(rewards_usd)
    if rewards < 0:
        raise ValidationError("rewards must be non-negative")
    lo, hi = crossover_volume(rewards, rate_low), crossover_volume(rewards, rate_high)
    return [CurveRow(Decimal(v), rebate_value(v, rate_low), rebate_value(v, rate_high), rewards, lo, hi)
            for v in volumes]


@dataclass(frozen=True)
class RebateTier:
    label: str
    min_volume_share: Decimal
    rebate_rate: Decimal


def validate_schedule(schedule: Sequence[RebateTier]) -> tuple[RebateTier, ...]:
    tiers = tuple(schedule)
    if not tiers:
        raise ValidationError("rebate schedule is empty")
    for a, b in zip(tiers, tiers[1:]):
        if b.min_volume_share <= a.min_volume_share:
            raise ValidationError(f"tier {b.label}: volume thresholds must strictly increase")
        if b.rebate_rate < a.rebate_rate:
            raise ValidationError(f"tier {b.label}: rebate rates must not decrease")
    return tiers


def _tier(label: str, share_pct: str, rate_pct: str) -> RebateTier:
    return RebateTier(label, Decimal(share_pct) / 100, Decimal(rate_pct) / 100)


NORMAL_SCHEDULE = validate_schedule((
    _tier("Tier 1", "0.1", "0.0025"),
    _tier("Tier 2", "0.25", "0.0040"),
    _tier("Tier 3", "0.5", "0.0050"),
    _tier("Tier 4", "0.75", "0.0065"),
    _tier("Tier 5", "1", "0.0100"),
))

ENHANCED_SCHEDULE = validate_schedule((
    _tier("Tier 1", "5", "0.0125"),
    _tier("Tier 2", "10", "0.0150"),
))


def assign_rebate_tier(volume_share: Decimal, schedule: Sequence[RebateTier] = NORMAL_SCHEDULE) -> RebateTier | None:
    """Highest tier whose threshold the share meets; ``None`` below the first."""
    share = Decimal(volume_share)
    hit = None
    for tier in schedule:
        if share >= tier.min_volume_share:
            hit = tier
    return hit


def load_rebate_schedule(path: str | Path) -> tuple[RebateTier, ...]:
    """Read ``[{label, minVolumeShare, rate}]`` from JSON, or ``[[tiers]]`` from TOML.

    Shares and rates are fractions (0.01 means 1%).
    """
    p = Path(path)
    if p.suffix == ".toml":
        from ._compat import tomllib

        with open(p, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        with open_text(p) as fh:
            raw = json.load(fh, parse_float=Decimal)
    if isinstance(raw, Mapping):
        raw = raw.get("tiers", [])
    try:
        tiers = [RebateTier(str(t["label"]), to_decimal(str(t["minVolumeShare"])), to_decimal(str(t["rate"])))
                 for t in raw]
    except KeyError as exc:
        raise ValidationError(f"{p}: rebate tier missing field {exc.args[0]!r}") from None
    return validate_schedule(tiers)


# --------------------------------------------------------------------------- #
# designated market makers
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class DmmGroup:
    name: str
    markets: tuple[str, ...]
    rebate_rate: Decimal
    dydx_rewards: Decimal


DMM_GROUPS = (
    DmmGroup("More Active Markets", ("SOL", "MATIC", "LTC", "AVAX", "ADA", "DOGE", "ATOM"),
             Decimal("0.000125"), Decimal(7500)),
    DmmGroup("Less Active Markets", ("XLM", "COMP", "CELO", "ENJ", "ZRX", "ZEC", "RUNE", "UMA"),
             Decimal("0.000150"), Decimal(2500)),
)
DMM_ACTIVE_DEFAULT = DmmGroup("Active Markets", (), Decimal("0.000150"), Decimal(5000))


def dmm_group(market: str) -> DmmGroup:
    base = market.upper().split("-")[0]
    for g in DMM_GROUPS:
        if base in g.markets:
            return g
    return DMM_ACTIVE_DEFAULT


@dataclass(frozen=True)
class DmmBid:
    account: str
    metric_values: tuple[Decimal, ...]
    metric_totals: tuple[Decimal, ...]
    committed_liquidity: Decimal = Decimal(0)
    penalty_fraction: Decimal = Decimal(0)
    reward_fraction: Decimal = Decimal(0)

    def __post_init__(self) -> None:
        if len(self.metric_values) != len(self.metric_totals):
            raise ValidationError(f"{self.account}: metric values and totals differ in length")


def dmm_score(bid: DmmBid) -> Decimal:
    """``sum(x_i / total_i)`` across the bid's metrics."""
    # exact rational sum so the result does not depend on metric order
    score = Fraction(0)
    for x, total in zip(bid.metric_values, bid.metric_totals):
        if Decimal(total) <= 0:
            raise ValidationError(f"{bid.account}: metric total must be positive, got {total}")
        score += Fraction(Decimal(x)) / Fraction(Decimal(total))
    return _to_decimal(score)


def dmm_stake_requirement(daily_liquidity: Decimal, days: int, rate: Decimal = Decimal("0.0002")) -> Decimal:
    """Stake owed on an epoch's liquidity: ``daily x days x rate``."""
    if Decimal(daily_liquidity) < 0 or days < 0 or Decimal(rate) < 0:
        raise ValidationError("stake inputs must be non-negative")
    return Decimal(daily_liquidity) * days * Decimal(rate)


def dmm_penalty_reward(staked: Decimal, penalty_fraction: Decimal, reward_fraction: Decimal) -> dict[str, Decimal]:
    staked, pf, rf = Decimal(staked), Decimal(penalty_fraction), Decimal(reward_fraction)
    for name, v in (("penalty_fraction", pf), ("reward_fraction", rf)):
        if not Decimal(0) <= v <= 1:
            raise ValidationError(f"{name} must lie in [0, 1], got {v}")
    return {"penalty": staked * pf, "reward": staked * rf}


# --------------------------------------------------------------------------- #
# tiers
# --------------------------------------------------------------------------- #

SUGGESTED_TIERS: dict[str, tuple[str, ...]] = {
    "Tier 1": ("SOL", "MATIC", "LTC", "AVAX", "ADA", "DOGE", "ATOM"),
    "Tier 2": ("CRV", "FIL", "UNI", "LINK", "SNX", "AAVE", "TRX", "NEAR", "EOS", "DOT"),
    "Tier 3": ("ICP", "ALGO", "1INCH", "XTZ", "BCH", "MKR", "XMR", "YFI", "SUSHI", "ETC"),
    "Tier 4": ("XLM", "COMP", "CELO", "ENJ", "ZRX", "ZEC", "RUNE", "UMA"),
}
ALLOCATION_80 = {"Tier 1": Decimal("0.40"), "Tier 2": Decimal("0.20"), "Tier 3": Decimal("0.15"), "Tier 4": Decimal("0.05")}
ALLOCATION_100 = {"Tier 1": Decimal("0.50"), "Tier 2": Decimal("0.30"), "Tier 3": Decimal("0.15"), "Tier 4": Decimal("0.05")}


@dataclass(frozen=True)
class TierRow:
    tier: str
    markets: tuple[str, ...]
    fee_revenue: Decimal
    allocation: Decimal
    reward_usd: Decimal
    missing: tuple[str, ...] = ()

    @property
    def margin(self) -> Decimal:
        return self.fee_revenue - self.reward_usd

    def to_record(self) -> dict:
        return {
            "tier": self.tier,
            "markets": " ".join(self.markets),
            "fee_revenue": str(self.fee_revenue),
            "allocation": str(self.allocation),
            "reward_usd": str(self.reward_usd),
            "margin": str(self.margin),
            "warning": f"missing fees for {' '.join(self.missing)}" if self.missing else "",
        }


def _fee_lookup(fees: Mapping[str, Decimal]) -> dict[str, Decimal]:
    out: dict[str, Decimal] = {}
    for market, fee in fees.items():
        out[market.upper()] = Decimal(fee)
        out.setdefault(market.upper().split("-")[0], Decimal(fee))
    return out


def tier_allocation(fees_by_market: Mapping[str, Decimal], tiers: Mapping[str, Sequence[str]] = SUGGESTED_TIERS,
                    allocation: Mapping[str, Decimal] = ALLOCATION_80,
                    pool_usd: Decimal = LP_POOL_USD) -> list[TierRow]:
    """Fee revenue per tier against its share of the reward pool.

    Markets may be given as ``SOL`` or ``SOL-USD``; a tier market with no fee
    entry contributes nothing and is listed in the row's warning.
    """
    alloc = {k: Decimal(v) for k, v in allocation.items()}
    if sum(alloc.values(), Decimal(0)) > 1:
        raise ValidationError("tier allocations sum to more than 1")
    lookup = _fee_lookup(fees_by_market)
    rows = []
    for tier in sorted(tiers):
        markets = tuple(tiers[tier])
        missing = tuple(m for m in markets if m.upper() not in lookup)
        if missing:
            log.warning("%s: no fee entry for %s", tier, ", ".join(missing))
        revenue = sum((lookup[m.upper()] for m in markets if m.upper() in lookup), Decimal(0))
        frac = alloc.get(tier, Decimal(0))
        rows.append(TierRow(tier, markets, revenue, frac, Decimal(pool_usd) * frac, missing))
    return rows


# --------------------------------------------------------------------------- #
# loaders
# --------------------------------------------------------------------------- #

def load_fees(path: str | Path) -> dict[str, Decimal]:
    with open_text(Path(path)) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"market", "fees"} <= set(reader.fieldnames):
            raise ValidationError(f"{path}: fees file needs columns market,fees")
        out: dict[str, Decimal] = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                out[row["market"].strip()] = to_decimal(row["fees"])
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return out


@dataclass(frozen=True)
class EpochRow:
    account: str
    reward_share_pct: Decimal
    maker_volume_pct: Decimal
    uptime_pct: Decimal
    depth_spread_score: Decimal | None = None

    def sample(self) -> LpEpochSample:
        """Q inputs from the row; without a depth score that factor is held at 1."""
        score = self.depth_spread_score if self.depth_spread_score is not None else Decimal(1)
        return LpEpochSample(self.account, score, self.uptime_pct / 100, self.maker_volume_pct)


def load_epoch_stats(path: str | Path) -> list[EpochRow]:
    """Epoch LP table: ``account,rewardSharePct,makerVolumePct,uptimePct[,depthSpreadScore]``."""
    need = {"account", "rewardSharePct", "makerVolumePct", "uptimePct"}
    with open_text(Path(path)) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValidationError(f"{path}: epoch file needs columns {','.join(sorted(need))}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                score = row.get("depthSpreadScore")
                rows.append(EpochRow(
                    row["account"].strip(),
                    to_decimal(row["rewardSharePct"]),
                    to_decimal(row["makerVolumePct"]),
                    to_decimal(row["uptimePct"]),
                    to_decimal(score) if score not in (None, "") else None,
                ))
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return rows
