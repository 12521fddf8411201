import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import D
from spreadlab.errors import ValidationError
from spreadlab.rewards import (
    ALLOCATION_80,
    ENHANCED_SCHEDULE,
    LP_POOL_USD,
    DmmBid,
    LpEpochSample,
    QWeights,
    apply_volatility_multiplier,
    assign_rebate_tier,
    crossover_volume,
    depth_spread_score,
    dmm_group,
    dmm_penalty_reward,
    dmm_score,
    dmm_stake_requirement,
    fee_margin,
    linear_volume_q,
    linear_volume_shares,
    load_epoch_stats,
    load_fees,
    load_rebate_schedule,
    q_final,
    rebate_value,
    rebates_vs_rewards_curve,
    reward_shares,
    tier_allocation,
)

ALT = QWeights(D("0.35"), D("0.65"))
ALTCOIN_VOLUME = D("6276767740.46")
ALTCOIN_REWARDS = D(1_841_096)


def lp(account, score=1, uptime=1, volume=1):
    return LpEpochSample(account, D(score), D(uptime), D(volume))


# --------------------------------------------------------------------- Q score

def test_q_zero_uptime_and_identity():
    assert q_final(lp("a", 16, 0, 10**6), ALT) == 0
    for w in (ALT, QWeights(D("0.15"), D("0.85")), QWeights(D(0), D(1))):
        assert q_final(lp("a"), w) == 1


def test_q_worked_value():
    q = q_final(lp("a", 16, 1, 10**6), ALT)
    reference = 16 ** 0.35 * 10 ** 3.9
    assert abs(float(q) / reference - 1) < 1e-6
    assert abs(q - D("20962.6")) < D(1)


def test_weights_per_market():
    assert QWeights.for_market("BTC-USD") == QWeights(D("0.15"), D("0.85"))
    assert QWeights.for_market("SOL-USD") == ALT
    with pytest.raises(ValidationError):
        QWeights(D(-1), D(1))


def test_zero_weight_disables_factor():
    assert q_final(lp("a", 0, 1, 5), QWeights(D(0), D(1))) == 5
    assert q_final(lp("a", 0, 1, 5), ALT) == 0


def test_sample_validation():
    with pytest.raises(ValidationError):
        lp("a", uptime="1.2")
    with pytest.raises(ValidationError):
        lp("a", volume=-1)


def test_depth_spread_score_helper():
    assert depth_spread_score([(D(100), D(10)), (D(50), D(5))]) == D(20)
    with pytest.raises(ValidationError):
        depth_spread_score([(D(1), D(0))])


def test_share_examples():
    two = reward_shares([lp("a", 4, 1, 9), lp("b", 4, 1, 9)], ALT, pool=100)
    assert two["a"].share == two["b"].share == D("0.5")
    assert two["a"].tokens == 50
    solo = reward_shares([lp("a", 4, 1, 9), lp("b", 4, 0, 9)], ALT)
    assert solo["a"].share == 1 and solo["b"].share == 0
    with pytest.raises(ValidationError, match="no eligible LPs"):
        reward_shares([lp("a", 4, 0, 9)], ALT)


def test_linear_volume_examples():
    samples = [lp("a", volume=3), lp("b", volume=1)]
    assert linear_volume_q(samples) == {"a": 3, "b": 1}
    s = linear_volume_shares(samples)
    assert (s["a"].share, s["b"].share) == (D("0.75"), D("0.25"))
    eq = linear_volume_shares([lp("a", volume=7), lp("b", volume=7)])
    assert eq["a"].share == eq["b"].share


positive = st.decimals(min_value="0.01", max_value="1e7", places=2)
uptime = st.decimals(min_value="0.01", max_value="1", places=2)
weights = st.decimals(min_value="0", max_value="1", places=2)


@st.composite
def lp_sets(draw, min_size=1):
    n = draw(st.integers(min_size, 6))
    return [LpEpochSample(f"lp{i}", draw(positive), draw(uptime), draw(positive)) for i in range(n)]


@given(lp_sets(), weights)
@settings(max_examples=80, deadline=None)
def test_shares_sum_to_one(samples, y):
    shares = reward_shares(samples, QWeights(y, 1 - y))
    assert abs(sum(s.share for s in shares.values()) - 1) <= D("1e-9")


@given(lp_sets())
@settings(max_examples=60, deadline=None)
def test_linear_volume_equivalence(samples):
    full_uptime = [LpEpochSample(s.account, s.depth_spread_score, D(1), s.maker_volume) for s in samples]
    via_q = reward_shares(full_uptime, QWeights(D(0), D(1)))
    assert {a: r.share for a, r in via_q.items()} == {a: r.share for a, r in linear_volume_shares(samples).items()}


@given(lp_sets(min_size=2), weights)
@settings(max_examples=60, deadline=None)
def test_depth_scaling_keeps_ranking(samples, y):
    w = QWeights(y, 1 - y)
    scaled = [LpEpochSample(s.account, s.depth_spread_score * 7, s.positive_sample_count, s.maker_volume)
              for s in samples]
    base, moved = reward_shares(samples, w), reward_shares(scaled, w)
    order = sorted(base, key=lambda a: base[a].share)
    assert all(moved[a].share <= moved[b].share * (1 + D("1e-20")) for a, b in zip(order, order[1:]))


@given(lp_sets(), st.decimals(min_value="0.001", max_value="1000", places=3))
@settings(max_examples=60, deadline=None)
def test_shares_scale_free(samples, c):
    # scaling every maker volume scales every Q by the same factor c^z
    w = ALT
    base = reward_shares(samples, w)
    scaled = reward_shares([LpEpochSample(s.account, s.depth_spread_score, s.positive_sample_count,
                                          s.maker_volume * c) for s in samples], w)
    for a in base:
        assert abs(base[a].share - scaled[a].share) < D("1e-20")


@given(positive, positive, uptime, positive, st.decimals(min_value="0.01", max_value="1", places=2))
@settings(max_examples=60, deadline=None)
def test_q_increasing_in_volume(score, vol, up, extra, z):
    w = QWeights(1 - z, z)
    assert q_final(LpEpochSample("a", score, up, vol + extra), w) > q_final(LpEpochSample("a", score, up, vol), w)


def test_volatility_multiplier():
    assert apply_volatility_multiplier(D(10), True) == 20
    assert apply_volatility_multiplier(D(10), False) == 10
    assert apply_volatility_multiplier(D(10), True, D(1)) == 10
    with pytest.raises(ValidationError):
        apply_volatility_multiplier(D(10), True, D("0.5"))


# --------------------------------------------------------------------- rebates

def test_rebate_examples():
    assert rebate_value(ALTCOIN_VOLUME, D("0.0001")).quantize(D("0.01")) == D("627676.77")
    assert rebate_value(D(25 * 10**9) * D("0.90"), D("0.0001")) == D(2_250_000)
    assert rebate_value(0, D("0.0001")) == 0


def test_fee_margin_examples():
    assert fee_margin(D("1128679.07"), ALTCOIN_VOLUME, D("0.0001"), D("0.5")).quantize(D("0.01")) == D("814840.68")
    assert fee_margin(D(500), D(10**6), 0, D("0.5")) == 500
    assert fee_margin(D(300), D(10**6), D(300) / D(10**6), D(1)) == 0


def test_crossover_examples():
    hi = crossover_volume(ALTCOIN_REWARDS, D("0.000179"))
    assert D("9.5e9") <= hi <= D("11.5e9")
    assert hi.quantize(D("1e7")) == D("1.029e10")
    assert crossover_volume(ALTCOIN_REWARDS, D("0.0001")) == D("18410960000")
    assert crossover_volume(0, D("0.0001")) == 0
    rows = rebates_vs_rewards_curve([D(0), D(10**10)], D("0.0001"), D("0.000179"), ALTCOIN_REWARDS)
    assert rows[1].rebate_high == D(1_790_000) and rows[0].crossover_high == hi


def test_rebate_tiers():
    assert assign_rebate_tier(D("0.012")).label == "Tier 5"
    assert assign_rebate_tier(D("0.012")).rebate_rate == D("0.0001")
    assert assign_rebate_tier(D("0.0005")) is None
    assert assign_rebate_tier(D("0.0025")).label == "Tier 2"
    assert assign_rebate_tier(D("0.2"), ENHANCED_SCHEDULE).rebate_rate == D("0.00015")


@given(st.decimals(min_value="0", max_value="0.2", places=5), st.decimals(min_value="0", max_value="0.2", places=5))
def test_rebate_tier_monotone(a, b):
    lo, hi = sorted((a, b))
    def rate(share):
        return getattr(assign_rebate_tier(share), "rebate_rate", D(0))

    assert rate(lo) <= rate(hi)


def test_schedule_loading(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps([{"label": "A", "minVolumeShare": 0.001, "rate": 0.00002},
                             {"label": "B", "minVolumeShare": 0.01, "rate": 0.0001}]))
    sched = load_rebate_schedule(p)
    assert sched[1].rebate_rate == D("0.0001")
    t = tmp_path / "s.toml"
    t.write_text('[[tiers]]\nlabel = "A"\nminVolumeShare = 0.01\nrate = 0.0001\n')
    assert load_rebate_schedule(t)[0].min_volume_share == D("0.01")
    p.write_text(json.dumps([{"label": "A", "minVolumeShare": 0.01, "rate": 0.0001},
                             {"label": "B", "minVolumeShare": 0.001, "rate": 0.0002}]))
    with pytest.raises(ValidationError):
        load_rebate_schedule(p)


# --------------------------------------------------------------------- DMM

def test_dmm_score_from_table(data_dir):
    import csv

    bids = {}
    with open(data_dir / "dmm_bids.csv") as fh:
        for row in csv.DictReader(fh):
            vals, tots = bids.setdefault(row["account"], ([], []))
            vals.append(D(row["value"]))
            tots.append(D(row["total"]))
    scores = {a: dmm_score(DmmBid(a, tuple(v), tuple(t))) for a, (v, t) in bids.items()}
    assert scores["LP1"] == D("1.375")
    assert max(scores, key=scores.get) == "LP1"


def test_dmm_score_edges():
    assert dmm_score(DmmBid("a", (D(3),), (D(3),))) == 1
    assert dmm_score(DmmBid("a", (D(1), D(2)), (D(4), D(4)))) == dmm_score(DmmBid("b", (D(1), D(2)), (D(4), D(4))))
    with pytest.raises(ValidationError):
        dmm_score(DmmBid("a", (D(1),), (D(0),)))
    with pytest.raises(ValidationError):
        DmmBid("a", (D(1),), ())


@given(st.lists(st.tuples(st.integers(0, 100), st.integers(1, 100)), min_size=1, max_size=6), st.randoms())
def test_dmm_score_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = DmmBid("a", tuple(D(x) for x, _ in pairs), tuple(D(t) for _, t in pairs))
    b = DmmBid("a", tuple(D(x) for x, _ in shuffled), tuple(D(t) for _, t in shuffled))
    assert dmm_score(a) == dmm_score(b)


def test_dmm_stake_and_penalty():
    assert dmm_stake_requirement(D(5_000_000), 28) == D(28_000)
    assert dmm_stake_requirement(D(5_000_000), 0) == 0
    assert dmm_stake_requirement(D(1), 1) == D("0.0002")
    assert dmm_penalty_reward(D(28_000), D("0.1"), D("0.05")) == {"penalty": D(2800), "reward": D(1400)}
    assert dmm_penalty_reward(D(28_000), 0, 1) == {"penalty": 0, "reward": D(28_000)}
    with pytest.raises(ValidationError):
        dmm_penalty_reward(D(1), D(2), 0)


def test_dmm_groups():
    assert dmm_group("SOL-USD").rebate_rate == D("0.000125")
    assert dmm_group("UMA-USD").dydx_rewards == 2500
    assert dmm_group("CRV-USD").name == "Active Markets"


# --------------------------------------------------------------------- tiers

def test_tier_fee_sums(data_dir):
    rows = {r.tier: r for r in tier_allocation(load_fees(data_dir / "fees.csv"))}
    expected = {"Tier 1": "555494.79", "Tier 2": "276592.38", "Tier 3": "199288.70", "Tier 4": "97303.20"}
    for tier, value in expected.items():
        assert abs(rows[tier].fee_revenue - D(value)) <= D("0.01")
        assert not rows[tier].missing
    assert rows["Tier 1"].reward_usd == LP_POOL_USD * D("0.40")


def test_tier_missing_and_empty(caplog):
    rows = tier_allocation({"SOL-USD": D(10)}, {"A": ("SOL", "ZZZ"), "B": ()}, {"A": D("0.5")}, D(100))
    a, b = rows
    assert a.fee_revenue == 10 and a.missing == ("ZZZ",)
    assert "missing fees for ZZZ" in a.to_record()["warning"]
    assert b.fee_revenue == 0 and b.reward_usd == 0
    assert "ZZZ" in caplog.text
    with pytest.raises(ValidationError):
        tier_allocation({}, {}, {"A": D("0.7"), "B": D("0.7")})


def test_allocation_defaults_sum_below_one():
    assert sum(ALLOCATION_80.values()) == D("0.80")


def test_epoch_table(data_dir):
    rows = load_epoch_stats(data_dir / "epoch_btc.csv")
    assert rows[0].account == "0xd332"
    s = rows[0].sample()
    assert s.positive_sample_count == D("0.954") and s.depth_spread_score == 1
    shares = reward_shares([r.sample() for r in rows], QWeights.for_market("BTC-USD"))
    assert abs(sum(x.share for x in shares.values()) - 1) <= D("1e-9")
