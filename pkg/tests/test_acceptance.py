"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line straight to the terminal so
the run log doubles as a criterion checklist.
"""

import csv
import filecmp
import random
import time
from pathlib import Path

import numpy as np
import pytest

from helpers import D, book, trade
from oracles import exhaustive_choice, random_market
from spreadlab.calibration import Rationale, insufficiency_percentage, sweep_max_spread
from spreadlab.cli import run_command
from spreadlab.event_study import EventWindow, time_to_recovery
from spreadlab.liquidity_metrics import depth_grid, min_tick_bps
from spreadlab.market_data import MarketSpec, bucket_trades_per_minute, depth_within_spread, load_trades
from spreadlab.reconstruction import reconstruct_minute_books
from spreadlab.rewards import (
    LpEpochSample,
    QWeights,
    crossover_volume,
    dmm_penalty_reward,
    dmm_stake_requirement,
    load_fees,
    q_final,
    rebate_value,
    reward_shares,
    tier_allocation,
)
from spreadlab.stationarity import adf_test

DATA = Path(__file__).parent / "data"


@pytest.fixture
def report(capsys):
    """Yield a callable that runs a criterion body and prints its verdict line."""

    def run(number, title, body):
        try:
            body()
        except BaseException:
            with capsys.disabled():
                print(f"\nFAIL criterion {number:>2}: {title}")
            raise
        with capsys.disabled():
            print(f"\nPASS criterion {number:>2}: {title}")

    return run


def test_criterion_01_tick_table(report):
    def body():
        with open(DATA / "tick_sizes.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 37
        t0 = time.perf_counter()
        for r in rows:
            spec = MarketSpec(r["market"], D(r["tickSize"]), D(r["indexPrice"]))
            assert abs(min_tick_bps(spec) - D(r["minBps"])) <= D("0.001"), r["market"]
        assert time.perf_counter() - t0 < 1.0

    report(1, "min tick bps matches all 37 appendix rows within 0.001", body)


def test_criterion_02_sol_notionals(report):
    def body():
        trades = load_trades(DATA / "sol_trades.csv", market="SOL-USD")
        with open(DATA / "sol_trades.csv", newline="") as fh:
            printed = {D(r["size"]): r["notional"] for r in csv.DictReader(fh)}
        assert len(trades) == 5
        for t in trades:
            text = printed[t.size]
            # the printed column is the binary-float product; the exact value is its decimal reading
            assert D(text).quantize(t.notional) == t.notional
            assert repr(float(t.size) * float(t.price)) == text
        assert {t.size: t.notional for t in trades}[D("14087.6")] == D("282512.7304")

    report(2, "SOL trade notionals are exact in decimal arithmetic", body)


def test_criterion_03_rebates(report):
    def body():
        assert abs(rebate_value(D("6276767740.46"), D("0.0001")) - D("627676.77")) <= D("0.01")
        assert rebate_value(D(25_000_000_000) * D("0.90"), D("0.0001")) == D(2_250_000)

    report(3, "rebate arithmetic reproduces 627,676.77 and 2,250,000", body)


def test_criterion_04_tier_sums(report):
    def body():
        rows = {r.tier: r.fee_revenue for r in tier_allocation(load_fees(DATA / "fees.csv"))}
        for tier, value in (("Tier 1", "555494.79"), ("Tier 2", "276592.38"),
                            ("Tier 3", "199288.70"), ("Tier 4", "97303.20")):
            assert abs(rows[tier] - D(value)) <= D("0.01"), tier

    report(4, "tier fee sums match the allocation table within 0.01", body)


def test_criterion_05_dmm(report):
    def body():
        stake = dmm_stake_requirement(D(5_000_000), 28, D("0.0002"))
        assert stake == D(28_000)
        pr = dmm_penalty_reward(stake, D("0.1"), D("0.05"))
        assert pr == {"penalty": stake * D("0.1"), "reward": stake * D("0.05")}
        assert pr["penalty"] == D(2800) and pr["reward"] == D(1400)

    report(5, "DMM stake is 28,000 and penalty/reward are exact products", body)


def test_criterion_06_crossover(report):
    def body():
        x = crossover_volume(D(1_841_096), D("0.000179"))
        assert D("9.5e9") <= x <= D("11.5e9")

    report(6, "rebates-vs-rewards crossover lands in [9.5B, 11.5B]", body)


def test_criterion_07_reconstruction_conservation(report):
    def body():
        rng = random.Random(20230523)
        trades = [trade(rng.choice(["BUY", "SELL"]), D(rng.randint(1, 500000)) / 100, D(rng.randint(100, 90000)) / 1000,
                        i=rng.randrange(240), sec=rng.uniform(0, 59.999), liquidation=rng.random() < 0.05)
                  for _ in range(1000)]
        recon = reconstruct_minute_books(trades)
        assert sum(r.bid_notional + r.ask_notional for r in recon) == sum(t.notional for t in trades)
        buys = [t for t in trades if t.side.value == "BUY"]
        assert all(not r.bid_levels for r in reconstruct_minute_books(buys))

    report(7, "reconstruction conserves notional over 1,000 random trades", body)


def test_criterion_08_depth_monotonicity(report):
    def body():
        rng = np.random.default_rng(8)
        spreads = [5, 10, 15, 20, 30, 40, 50]
        snaps = []
        for i in range(100):
            mid = D(str(round(float(rng.uniform(1, 500)), 2)))
            bids = [(mid * (1 - D(int(o)) / 10000), D(str(round(float(rng.uniform(0.1, 50)), 2))))
                    for o in rng.integers(1, 80, size=8)]
            asks = [(mid * (1 + D(int(o)) / 10000), D(str(round(float(rng.uniform(0.1, 50)), 2))))
                    for o in rng.integers(1, 80, size=8)]
            snaps.append(book(bids, asks, i))
        for s in snaps:
            depths = [depth_within_spread(s, x) for x in spreads]
            for a, b in zip(depths, depths[1:]):
                assert a.bid_depth_usd <= b.bid_depth_usd and a.ask_depth_usd <= b.ask_depth_usd
        grid = depth_grid(snaps, spreads)
        tape = [trade("BUY", D(str(round(float(rng.uniform(1, 20)), 2))), 50, i=i) for i in range(100)]
        pcts = [insufficiency_percentage(grid, bucket_trades_per_minute(tape), x) for x in spreads]
        assert pcts == sorted(pcts, reverse=True)

    report(8, "depth is non-decreasing and insufficiency non-increasing in spread", body)


def test_criterion_09_adf_oracle(report):
    import json

    def body():
        oracle = json.loads((DATA / "adf_oracle.json").read_text())
        expected = {"white_noise": True, "random_walk": False, "ar1_phi_0_5": True}
        for name, verdict in expected.items():
            case = oracle[name]
            draws = np.random.default_rng(case["seed"]).standard_normal(500)
            if name == "white_noise":
                x = draws
            elif name == "random_walk":
                x = np.cumsum(draws)
            else:
                x = np.zeros(500)
                for t in range(1, 500):
                    x[t] = 0.5 * x[t - 1] + draws[t]
            res = adf_test(x)
            assert abs(res.statistic - case["statistic"]) <= 0.05, name
            assert res.stationary is verdict, name

    report(9, "ADF matches the frozen reference on three seeded series", body)


def test_criterion_10_sweep_oracle(report):
    pytest.importorskip("statsmodels")

    def body():
        for seed in range(20):
            books, tape, spec = random_market(seed, market=f"FIX{seed}-USD")
            res = sweep_max_spread(books, reconstruct_minute_books(tape), tape, spec)
            assert (res.chosen_bps, res.rationale.value) == exhaustive_choice(books, tape, spec), seed
        books, tape, _ = random_market(99, market="UMA-USD")
        uma = MarketSpec("UMA-USD", D("0.01"), D("2.336"))
        res = sweep_max_spread(books, [], tape, uma)
        assert (min_tick_bps(uma) * 100).quantize(D("0.1")) == D("42.8")
        assert (res.rationale, res.chosen_bps) == (Rationale.TICK_CONSTRAINED, D(40))

    report(10, "sweep matches the exhaustive oracle on 20 fixtures; UMA is tick-constrained at 40", body)


def test_criterion_11_time_to_recovery(report):
    def body():
        from helpers import minute

        ev = EventWindow("hand", int(minute(3).timestamp()), int(minute(7).timestamp()), 180, 180)

        def series(values):
            return {minute(i): D(v) for i, v in enumerate(values)}

        pre, post = [100] * 3, [100] * 3
        assert time_to_recovery(series(pre + [100, 40, 50, 80, 100] + post), ev, D("0.75")).recovery_minutes == 2
        assert time_to_recovery(series(pre + [100, 90, 80, 76, 100] + post), ev).recovery_minutes == 0
        assert time_to_recovery(series(pre + [100, 40, 50, 60, 70] + [70] * 3), ev).recovery_minutes is None

    report(11, "time to recovery returns 2, 0 and not-recovered on the hand fixtures", body)


def test_criterion_12_q_properties(report):
    def body():
        alt = QWeights(D("0.35"), D("0.65"))
        assert q_final(LpEpochSample("a", D(16), D(0), D(10**6)), alt) == 0
        assert q_final(LpEpochSample("a", D(1), D(1), D(1)), alt) == 1
        rng = random.Random(12)
        for _ in range(50):
            samples = [LpEpochSample(f"lp{k}", D(rng.randint(1, 10**6)) / 100, D(rng.randint(1, 100)) / 100,
                                     D(rng.randint(1, 10**9)) / 100) for k in range(rng.randint(2, 8))]
            shares = reward_shares(samples, alt)
            assert abs(sum(s.share for s in shares.values()) - 1) <= D("1e-9")
            linear = reward_shares([LpEpochSample(s.account, s.depth_spread_score, D(1), s.maker_volume)
                                    for s in samples], QWeights(D(0), D(1)))
            total = sum(s.maker_volume for s in samples)
            for s in samples:
                assert linear[s.account].share == s.maker_volume / total
            scaled = reward_shares([LpEpochSample(s.account, s.depth_spread_score * 7, s.positive_sample_count,
                                                  s.maker_volume) for s in samples], alt)
            rank = sorted(shares, key=lambda a: shares[a].share)
            assert rank == sorted(scaled, key=lambda a: scaled[a].share)

    report(12, "Q score zero/identity, share sums, linear-volume equivalence, scale ranking", body)


def test_criterion_13_determinism(report, tmp_path, capsys):
    def body():
        runs = []
        for jobs in ("1", "4"):
            out = tmp_path / f"jobs{jobs}"
            t0 = time.perf_counter()
            code = run_command(["report", "--sample", "--fees", str(DATA / "fees.csv"),
                                "--epochs", str(DATA / "epoch_btc.csv"), "--jobs", jobs, "--out", str(out)])
            assert code == 0
            assert time.perf_counter() - t0 < 30
            runs.append(out)
        capsys.readouterr()
        names = sorted(p.name for p in runs[0].iterdir())
        assert names == sorted(p.name for p in runs[1].iterdir())
        assert "manifest.json" in names and "calibration.csv" in names
        match, mismatch, errors = filecmp.cmpfiles(runs[0], runs[1], names, shallow=False)
        assert not mismatch and not errors

    report(13, "report output is byte-identical at 1 and 4 workers", body)
