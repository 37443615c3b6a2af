"""Reviewer policies and the deterministic simulation driver.

Three player types act on a market: honest reviewers rate what they
believe and hold, attackers flood one end of the scale through a pool of
throwaway identities until the score reaches their target, and strategic
players buy whichever rating the recent mint history says will pay best.
A scenario fixes the population, budgets, schedule, and seed; the same
seed always produces the same trace, byte for byte.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .market import (
    JournalEvent,
    EventKind,
    Market,
    MarketError,
    MarketParams,
    MarketState,
    StakeholderBook,
    compute_distribution,
    format_fraction,
)


class InvalidScenario(MarketError):
    """Scenario configuration violates its invariants."""


class AgentKind(Enum):
    HONEST = "honest"
    ATTACKER = "attacker"
    STRATEGIC = "strategic"


class ArrivalOrder(Enum):
    ROUND_ROBIN = "round_robin"
    WEIGHTED_RANDOM = "weighted_random"


@dataclass(frozen=True)
class AgentSpec:
    """One agent's type, budget, and type-specific policy knobs.

    Honest agents need ``quality_belief`` (weights over ratings 1..n) and
    ``participation_prob``; attackers need ``target_score``, ``direction``
    (1 or n), and ``identity_pool_size``; strategic agents need
    ``belief_window``, ``horizon``, and ``min_profit_threshold``.
    """

    kind: AgentKind
    budget: int
    quality_belief: dict[int, float] | None = None
    participation_prob: float = 1.0
    target_score: Fraction | None = None
    direction: int | None = None
    identity_pool_size: int = 1
    belief_window: int = 20
    horizon: int = 1
    min_profit_threshold: int = 0

    def validate(self, params: MarketParams) -> None:
        if self.budget < 0:
            raise InvalidScenario("agent budget must be >= 0")
        if self.kind is AgentKind.HONEST:
            if not self.quality_belief:
                raise InvalidScenario("honest agent needs a quality_belief")
            if not all(1 <= r <= params.n for r in self.quality_belief):
                raise InvalidScenario("quality_belief ratings must lie in 1..n")
            if any(w < 0 for w in self.quality_belief.values()) or not any(
                w > 0 for w in self.quality_belief.values()
            ):
                raise InvalidScenario("quality_belief weights must be >= 0 and not all zero")
            if not 0.0 <= self.participation_prob <= 1.0:
                raise InvalidScenario("participation_prob must be in [0, 1]")
        elif self.kind is AgentKind.ATTACKER:
            if self.target_score is None or not 1 <= self.target_score <= params.n:
                raise InvalidScenario("attacker target_score must lie in [1, n]")
            if self.direction not in (1, params.n):
                raise InvalidScenario("attacker direction must be 1 or n")
            if self.identity_pool_size < 1:
                raise InvalidScenario("identity_pool_size must be >= 1")
        else:
            if self.belief_window < 1 or self.horizon < 1:
                raise InvalidScenario("belief_window and horizon must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    """A reproducible simulation setup; mirrors the scenario JSON file."""

    params: MarketParams
    agents: list[AgentSpec]
    steps: int
    seed: int
    arrival_order: ArrivalOrder = ArrivalOrder.ROUND_ROBIN

    def validate(self) -> None:
        if self.steps < 0:
            raise InvalidScenario("steps must be >= 0")
        if not self.agents:
            raise InvalidScenario("need at least one agent")
        for spec in self.agents:
            spec.validate(self.params)


@dataclass(frozen=True)
class Action:
    op: str  # "buy" or "sell"
    rating: int


@dataclass
class AgentRuntime:
    """Live per-agent bookkeeping while a simulation runs."""

    spec: AgentSpec
    index: int
    next_sybil: int = 0

    @property
    def name(self) -> str:
        return f"{self.spec.kind.value}-{self.index}"

    def identities(self) -> list[str]:
        if self.spec.kind is AgentKind.ATTACKER:
            return [f"{self.name}#{k}" for k in range(self.spec.identity_pool_size)]
        return [self.name]

    def acting_identity(self) -> str:
        if self.spec.kind is AgentKind.ATTACKER:
            identity = f"{self.name}#{self.next_sybil}"
            self.next_sybil = (self.next_sybil + 1) % self.spec.identity_pool_size
            return identity
        return self.name

    def cash(self, market: Market, baseline: dict[str, tuple[int, int]]) -> int:
        total = self.spec.budget
        for identity in self.identities():
            paid0, received0 = baseline.get(identity, (0, 0))
            total -= market.paid_by_identity.get(identity, 0) - paid0
            total += market.received_by_identity.get(identity, 0) - received0
        return total


def honest_step(
    agent: AgentRuntime,
    market: Market,
    rng: random.Random,
    baseline: dict[str, tuple[int, int]] | None = None,
) -> Action | None:
    """Truthful one-shot rating: sometimes participate, draw a rating from
    the agent's quality belief, buy it, and hold forever."""
    spec = agent.spec
    if agent.cash(market, baseline or {}) < market.params.alpha:
        return None
    if spec.participation_prob <= 0.0:
        return None
    if rng.random() >= spec.participation_prob:
        return None
    ratings = sorted(spec.quality_belief)
    weights = [spec.quality_belief[r] for r in ratings]
    return Action("buy", rng.choices(ratings, weights=weights)[0])


def attacker_step(
    agent: AgentRuntime,
    market: Market,
    baseline: dict[str, tuple[int, int]] | None = None,
) -> Action | None:
    """Flood one end of the scale until the aggregated score reaches target.

    Compares the exact (unrounded) score against the target, so the number
    of coins an attack takes matches the closed-form count instead of
    stopping a mint early whenever rounding grazes the target. Identities
    rotate through the sybil pool on each purchase.
    """
    spec = agent.spec
    if agent.cash(market, baseline or {}) < market.params.alpha:
        return None
    sigma = market.score()
    pushing_up = spec.direction == market.params.n
    if sigma is None:
        return Action("buy", spec.direction)
    if pushing_up and sigma.value < spec.target_score:
        return Action("buy", spec.direction)
    if not pushing_up and sigma.value > spec.target_score:
        return Action("buy", spec.direction)
    return None


def _mint_belief(history: Sequence[JournalEvent], window: int, n: int) -> dict[int, Fraction]:
    recent = [e.rating for e in history if e.kind is EventKind.MINT][-window:]
    total = len(recent) + n
    return {r: Fraction(recent.count(r) + 1, total) for r in range(1, n + 1)}


def strategic_step(
    agent: AgentRuntime,
    market: Market,
    history: Sequence[JournalEvent] | None = None,
    baseline: dict[str, tuple[int, int]] | None = None,
) -> Action | None:
    """Buy the rating with the best expected payout, if it clears the bar.

    Estimates the next mint's rating from the recent mint history (add-one
    smoothed), then for each candidate rating scores one new coin's expected
    per-mint payout on the post-purchase state, multiplied by the horizon,
    minus the round-trip spread. Ties go to the rating nearest the current
    score.
    """
    spec = agent.spec
    params = market.params
    if agent.cash(market, baseline or {}) < params.alpha:
        return None
    if history is None:
        history = market.journal
    belief = _mint_belief(history, spec.belief_window, params.n)

    gains: dict[int, Fraction] = {}
    for candidate in range(1, params.n + 1):
        counts = list(market.state.counts)
        counts[candidate - 1] += 1
        probe = MarketState(counts=counts, book=StakeholderBook())
        expected = Fraction(0)
        for rating, prob in belief.items():
            plan = compute_distribution(probe, rating, params)
            expected += prob * plan.per_coin_payout.get(candidate, 0)
        gains[candidate] = spec.horizon * expected - params.gamma

    best = max(gains.values())
    if best <= spec.min_profit_threshold:
        return None
    sigma = market.score()
    center = sigma.value if sigma is not None else Fraction(params.n + 1, 2)
    choice = min(
        (r for r in gains if gains[r] == best), key=lambda r: (abs(r - center), r)
    )
    return Action("buy", choice)


@dataclass
class Trace:
    """Everything a simulation run produced, enough to audit it end to end."""

    journal: list[JournalEvent]
    accounts: list[dict] = field(default_factory=list)
    score_series: list[tuple[int, str | None]] = field(default_factory=list)
    rejections: list[tuple[int, int, str]] = field(default_factory=list)
    market: Market | None = None


def run_simulation(scenario: ScenarioConfig, market: Market | None = None) -> Trace:
    """Drive the scenario's agents over the market for ``steps`` rounds.

    Round-robin polls every agent in listed order each round; weighted-random
    polls one uniformly drawn agent per round. Market rejections (identity
    limits, bad ratings) are recorded, not fatal. Same scenario, same seed,
    same starting market: identical trace.
    """
    scenario.validate()
    if market is None:
        market = Market(scenario.params)
    rng = random.Random(scenario.seed)
    agents = [AgentRuntime(spec, i) for i, spec in enumerate(scenario.agents)]
    baseline = {
        identity: (
            market.paid_by_identity.get(identity, 0),
            market.received_by_identity.get(identity, 0),
        )
        for agent in agents
        for identity in agent.identities()
    }
    start = len(market.journal)
    rejections: list[tuple[int, int, str]] = []

    for step in range(scenario.steps):
        if scenario.arrival_order is ArrivalOrder.ROUND_ROBIN:
            schedule = agents
        else:
            schedule = [agents[rng.randrange(len(agents))]]
        for agent in schedule:
            if agent.spec.kind is AgentKind.HONEST:
                action = honest_step(agent, market, rng, baseline)
            elif agent.spec.kind is AgentKind.ATTACKER:
                action = attacker_step(agent, market, baseline)
            else:
                action = strategic_step(agent, market, baseline=baseline)
            if action is None:
                continue
            identity = agent.acting_identity()
            try:
                if action.op == "buy":
                    market.buy_coin(identity, action.rating)
                else:
                    market.sell_coin(identity, action.rating)
            except MarketError as exc:
                rejections.append((step, agent.index, type(exc).__name__))

    accounts = []
    for agent in agents:
        spent = received = 0
        for identity in agent.identities():
            paid0, received0 = baseline[identity]
            spent += market.paid_by_identity.get(identity, 0) - paid0
            received += market.received_by_identity.get(identity, 0) - received0
        accounts.append(
            {
                "agent": agent.name,
                "kind": agent.spec.kind.value,
                "spent": spent,
                "received": received,
                "net": received - spent,
            }
        )
    events = market.journal[start:]
    return Trace(
        journal=list(market.journal),
        accounts=accounts,
        score_series=[
            (e.seq, None if e.score_after is None else str(e.score_after)) for e in events
        ],
        rejections=rejections,
        market=market,
    )


def _fraction_from_json(value) -> Fraction:
    # exact decimals: floats go through their shortest repr, never binary expansion
    return Fraction(str(value))


def scenario_to_dict(scenario: ScenarioConfig) -> dict:
    agents = []
    for spec in scenario.agents:
        entry: dict = {"kind": spec.kind.value, "budget": spec.budget}
        if spec.kind is AgentKind.HONEST:
            entry["quality_belief"] = {str(r): w for r, w in sorted(spec.quality_belief.items())}
            entry["participation_prob"] = spec.participation_prob
        elif spec.kind is AgentKind.ATTACKER:
            entry["target_score"] = format_fraction(spec.target_score)
            entry["direction"] = spec.direction
            entry["identity_pool_size"] = spec.identity_pool_size
        else:
            entry["belief_window"] = spec.belief_window
            entry["horizon"] = spec.horizon
            entry["min_profit_threshold"] = spec.min_profit_threshold
        agents.append(entry)
    return {
        "params": scenario.params.to_dict(),
        "agents": agents,
        "steps": scenario.steps,
        "seed": scenario.seed,
        "arrival_order": scenario.arrival_order.value,
    }


def scenario_from_dict(data: dict) -> ScenarioConfig:
    try:
        params = MarketParams.from_dict(data["params"])
        agents = []
        for entry in data["agents"]:
            kind = AgentKind(entry["kind"])
            spec = AgentSpec(
                kind=kind,
                budget=int(entry["budget"]),
                quality_belief=(
                    {int(r): float(w) for r, w in entry["quality_belief"].items()}
                    if "quality_belief" in entry
                    else None
                ),
                participation_prob=float(entry.get("participation_prob", 1.0)),
                target_score=(
                    _fraction_from_json(entry["target_score"])
                    if "target_score" in entry
                    else None
                ),
                direction=int(entry["direction"]) if "direction" in entry else None,
                identity_pool_size=int(entry.get("identity_pool_size", 1)),
                belief_window=int(entry.get("belief_window", 20)),
                horizon=int(entry.get("horizon", 1)),
                min_profit_threshold=int(entry.get("min_profit_threshold", 0)),
            )
            agents.append(spec)
        scenario = ScenarioConfig(
            params=params,
            agents=agents,
            steps=int(data["steps"]),
            seed=int(data["seed"]),
            arrival_order=ArrivalOrder(data.get("arrival_order", "round_robin")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidScenario(f"bad scenario document: {exc}") from exc
    scenario.validate()
    return scenario


def load_scenario(path: str | Path) -> ScenarioConfig:
    with open(path) as handle:
        return scenario_from_dict(json.load(handle))
