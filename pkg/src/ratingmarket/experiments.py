"""Quantitative experiments: the restaurant worked example as a golden
replay, and the attacker-cost analysis.

The attack experiment seeds a market whose honest score sits at 1, then
lets a sybil attacker mint top-rating coins until the exact aggregated
score reaches a target. The coin count it takes has a closed form,
ceil(H*(T-1)/(n-T)) for H honest coins, and the simulation must land on it
exactly; the experiment reports both the gross outlay and the net cost
after subtracting what the attacker's own earlier coins earned back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import IO, Iterable, Sequence

from .agents import AgentKind, AgentRuntime, AgentSpec, attacker_step
from .journal import verify_ledger
from .market import (
    Market,
    MarketError,
    MarketParams,
    WeightFn,
    aggregated_score,
    format_fraction,
    seed_market,
)


class TargetUnreachable(MarketError):
    """No number of coins can push the score to the requested target."""


class ReportedMismatch(MarketError):
    """A replayed trace disagreed with its golden values."""


@dataclass(frozen=True)
class CostCurveRow:
    """One grid point of the attack-cost analysis.

    Costs are in units of ``alpha`` (the price of one coin). ``net_cost``
    subtracts the payouts the attacker's own coins earned during the attack;
    it is exact but fractional, because floored per-coin payouts live in
    minor units finer than alpha. None when the row came from the closed
    form alone.
    """

    honest_coins: int
    target_score: Fraction
    coins_needed: int
    gross_cost: int
    net_cost: Fraction | None = None


def attacker_cost_closed_form(
    H: int, target: Fraction, n: int = 5, alpha: int = 1
) -> CostCurveRow:
    """Least coin count pushing H rating-1 coins up to ``target``, and its price.

    Solves (H + n*k) / (H + k) >= target for the smallest integer k.
    """
    if H < 1:
        raise ValueError("need at least one honest coin")
    target = Fraction(target)
    if target < 1:
        raise ValueError("target below the bottom rating")
    if target >= n:
        raise TargetUnreachable(f"target {format_fraction(target)} needs score >= {n}")
    k = math.ceil(H * (target - 1) / (n - target))
    return CostCurveRow(
        honest_coins=H, target_score=target, coins_needed=k, gross_cost=k * alpha
    )


def default_experiment_params() -> MarketParams:
    """Market used for the cost curves: one coin costs 100 minor units."""
    return MarketParams(n=5, alpha=100, beta=50, gamma=50, score_decimals=2)


def default_target_grid() -> list[Fraction]:
    return [Fraction(t, 10) for t in range(10, 50)]


def _run_attack(H: int, target: Fraction, params: MarketParams) -> tuple[int, int]:
    """Seed H bottom-rating coins, attack to ``target``; return (coins, payouts received)."""
    market = Market(params)
    seed_market(market, (("honest-seed", 1) for _ in range(H)))
    spec = AgentSpec(
        kind=AgentKind.ATTACKER,
        budget=10**15,
        target_score=target,
        direction=params.n,
        identity_pool_size=1,
    )
    agent = AgentRuntime(spec, 0)
    identity = agent.identities()[0]
    while (action := attacker_step(agent, market)) is not None:
        market.buy_coin(agent.acting_identity(), action.rating)
    coins = len(market.journal) - H
    return coins, market.received_by_identity.get(identity, 0)


def attacker_cost_curve(
    H_values: Sequence[int],
    targets: Sequence[Fraction] | None = None,
    params: MarketParams | None = None,
    alpha: int = 1,
) -> list[CostCurveRow]:
    """Simulate the attack for every (honest coins, target) grid point.

    Each point runs an isolated market. The simulated coin count is checked
    against the closed form and a mismatch is an error, not a data point.
    Rows come back sorted by honest coins, then target.
    """
    if not H_values:
        raise ValueError("need at least one honest-coin count")
    if targets is None:
        targets = default_target_grid()
    if params is None:
        params = default_experiment_params()
    rows: list[CostCurveRow] = []
    for H in sorted(H_values):
        for target in sorted(Fraction(t) for t in targets):
            expected = attacker_cost_closed_form(H, target, params.n, alpha)
            coins, received = _run_attack(H, target, params)
            if coins != expected.coins_needed:
                raise ReportedMismatch(
                    f"H={H} target={format_fraction(target)}: simulated {coins} coins, "
                    f"closed form {expected.coins_needed}"
                )
            net = Fraction(alpha * (coins * params.alpha - received), params.alpha)
            rows.append(
                CostCurveRow(
                    honest_coins=H,
                    target_score=target,
                    coins_needed=coins,
                    gross_cost=coins * alpha,
                    net_cost=net,
                )
            )
    return rows


CSV_HEADER = "H,target,coins,gross_cost,net_cost"


def cost_curve_csv(rows: Iterable[CostCurveRow]) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        net = "" if row.net_cost is None else format_fraction(row.net_cost)
        lines.append(
            f"{row.honest_coins},{format_fraction(row.target_score)},"
            f"{row.coins_needed},{row.gross_cost},{net}"
        )
    return "\n".join(lines) + "\n"


def write_cost_curve_csv(rows: Iterable[CostCurveRow], out: str | Path | IO[str]) -> None:
    text = cost_curve_csv(rows)
    if hasattr(out, "write"):
        out.write(text)
    else:
        Path(out).write_text(text)


# The restaurant example: 4 one-star, 4 two-star, 2 three-star and 1
# four-star coin, built by scripted purchases in ascending rating order,
# then one top-rating buy (the promoter) and one two-star buy (the
# detractor). With alpha=200, beta=100, gamma=100 minor units the golden
# values below are forced.
WORKED_EXAMPLE_SEED = (1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 4)
_GOLDEN_PRE_COUNTS = (4, 4, 2, 1, 0)
_GOLDEN_MID_COUNTS = (4, 4, 2, 1, 1)
_GOLDEN_END_COUNTS = (4, 5, 2, 1, 1)
_GOLDEN_MINT1 = {"winners": frozenset({3, 4, 5}), "payouts": {3: 25, 4: 50}, "remainder": 0}
_GOLDEN_MINT2 = {"winners": frozenset({1, 2}), "payouts": {1: 8, 2: 16}, "remainder": 4}


@dataclass(frozen=True)
class GoldenCheck:
    name: str
    expected: str
    actual: str

    @property
    def ok(self) -> bool:
        return self.expected == self.actual


@dataclass
class ExampleReport:
    """Every golden assertion of the worked-example replay, pass or fail."""

    checks: list[GoldenCheck] = field(default_factory=list)
    market: Market | None = None

    @property
    def ok(self) -> bool:
        return all(check.ok for check in self.checks)

    def failures(self) -> list[GoldenCheck]:
        return [check for check in self.checks if not check.ok]

    def lines(self) -> list[str]:
        out = []
        for check in self.checks:
            mark = "ok" if check.ok else "MISMATCH"
            out.append(f"{mark:8s} {check.name}: expected {check.expected}, got {check.actual}")
        return out


def replay_worked_example(
    weight_fn: WeightFn = WeightFn.F1,
    score_decimals: int = 2,
    strict: bool = False,
) -> ExampleReport:
    """Replay the restaurant example and compare every step to its golden values.

    The golden payouts (50/25 on the top-side mint, 16/8 with remainder 4 on
    the low-side mint) hold for the halving weight function; running with the
    harmonic one shows up as mismatches, which is a sanity check that the
    harness really compares something. With ``strict`` a mismatch raises
    ReportedMismatch instead of just being reported.
    """
    params = MarketParams(
        n=5, alpha=200, beta=100, gamma=100,
        score_decimals=score_decimals, weight_fn=weight_fn,
    )
    market = Market(params)
    report = ExampleReport(market=market)

    def expect_score(name: str, counts: Sequence[int], actual) -> None:
        golden = aggregated_score(counts, score_decimals)
        report.checks.append(GoldenCheck(name, str(golden.published), str(actual)))

    def expect(name: str, expected, actual) -> None:
        report.checks.append(GoldenCheck(name, str(expected), str(actual)))

    seed_market(market, ((f"reviewer-{i}", r) for i, r in enumerate(WORKED_EXAMPLE_SEED)))
    expect("seeded counts", list(_GOLDEN_PRE_COUNTS), market.state.counts)
    expect_score("pre-mint score", _GOLDEN_PRE_COUNTS, market.score().published)

    first = market.buy_coin("promoter", 5)
    expect("mint1 winners", sorted(_GOLDEN_MINT1["winners"]), sorted(first.plan.winners))
    for rating, payout in sorted(_GOLDEN_MINT1["payouts"].items()):
        expect(
            f"mint1 payout per c{rating} coin",
            payout,
            first.plan.per_coin_payout.get(rating, 0),
        )
    expect("mint1 owner remainder", _GOLDEN_MINT1["remainder"], first.plan.owner_remainder)
    expect_score("score after mint1", _GOLDEN_MID_COUNTS, first.score_after)

    second = market.buy_coin("detractor", 2)
    expect("mint2 winners", sorted(_GOLDEN_MINT2["winners"]), sorted(second.plan.winners))
    for rating, payout in sorted(_GOLDEN_MINT2["payouts"].items()):
        expect(
            f"mint2 payout per c{rating} coin",
            payout,
            second.plan.per_coin_payout.get(rating, 0),
        )
    expect("mint2 owner remainder", _GOLDEN_MINT2["remainder"], second.plan.owner_remainder)
    expect_score("score after mint2", _GOLDEN_END_COUNTS, second.score_after)

    balance = verify_ledger(market.journal, params)
    expect("ledger", "balanced", "balanced" if balance.ok else balance.summary())

    if strict and not report.ok:
        raise ReportedMismatch(
            "; ".join(f"{c.name}: expected {c.expected}, got {c.actual}" for c in report.failures())
        )
    return report
