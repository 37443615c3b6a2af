"""Exact-arithmetic rating market: coin minting, burning, score aggregation,
and directional profit sharing.

Ratings are integer levels 1..n. Each purchase mints one indivisible coin
staked on a rating level; the published aggregated score is the
investment-weighted mean of all outstanding coins. Every mint carries a
fixed spread profit that is split among stakeholders whose coins point the
same way the new coin moves the score; the split is floored to integer
minor currency units and the flooring remainder goes to the market owner,
so every mint balances to the cent.

All money is integer minor units (e.g. cents). Score values are exact
rationals; the published score is a fixed-precision decimal rounded
half-up. No floats touch a money path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence


class MarketError(Exception):
    """Base class for domain errors raised by market operations."""


class InvalidParams(MarketError):
    """Market parameters violate their invariants."""


class InvalidRating(MarketError):
    """Rating index outside 1..n."""


class IdentityLimitExceeded(MarketError):
    """Identity already holds the maximum allowed number of coins."""


class NoSuchHolding(MarketError):
    """Identity owns no coin of the requested rating."""


class WeightFn(Enum):
    """Distance-decaying share weight used to split mint profit.

    F1 halves a stakeholder's weight for each step of distance between the
    staked rating and the minted rating; F2 decays harmonically. Both are
    strictly decreasing in that distance, which is all the mechanism needs.
    """

    F1 = "f1"
    F2 = "f2"


def weight(kind: WeightFn, w: int, j: int) -> Fraction:
    """Exact share weight of a rating-``w`` coin when a rating-``j`` coin is minted.

    F1: 1 / 2**(d+1) and F2: 1 / (2+d), where d = |w - j|.
    """
    d = abs(w - j)
    if kind is WeightFn.F1:
        return Fraction(1, 2 ** (d + 1))
    return Fraction(1, 2 + d)


def _scaled_weights(kind: WeightFn, j: int, n: int) -> list[int]:
    """Weights for ratings 1..n against mint rating ``j``, scaled to a common
    integer denominator (index 0 unused). Lets payout math stay in plain ints."""
    if kind is WeightFn.F1:
        # common denominator 2**(n+1); weight(d) * 2**(n+1) = 2**(n-d)
        return [0] + [2 ** (n - abs(w - j)) for w in range(1, n + 1)]
    lcm = math.lcm(*range(2, n + 2))
    return [0] + [lcm // (2 + abs(w - j)) for w in range(1, n + 1)]


@dataclass(frozen=True)
class MarketParams:
    """Mechanism constants for one market.

    alpha is the coin purchase price, beta the sell-back price, gamma the
    per-mint profit; alpha == beta + gamma always, so every outstanding coin
    is fully backed by beta held in reserve. All three are integer minor
    currency units.
    """

    n: int
    alpha: int
    beta: int
    gamma: int
    score_decimals: int = 2
    weight_fn: WeightFn = WeightFn.F1
    profit_cap: int | None = None
    max_coins_per_identity: int | None = None
    window: int | None = None

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InvalidParams(f"need at least 2 rating levels, got n={self.n}")
        if not (0 <= self.score_decimals <= 9):
            raise InvalidParams(f"score_decimals must be in 0..9, got {self.score_decimals}")
        if self.alpha <= 0 or self.beta <= 0 or self.gamma <= 0:
            raise InvalidParams("alpha, beta and gamma must all be positive")
        if self.alpha != self.beta + self.gamma:
            raise InvalidParams(
                f"alpha must equal beta + gamma ({self.alpha} != {self.beta} + {self.gamma})"
            )
        if self.profit_cap is not None and self.profit_cap <= 0:
            raise InvalidParams("profit_cap must be positive when set")
        if self.max_coins_per_identity is not None and self.max_coins_per_identity < 1:
            raise InvalidParams("max_coins_per_identity must be >= 1 when set")
        if self.window is not None and self.window < 1:
            raise InvalidParams("window must be >= 1 when set")

    def to_dict(self) -> dict:
        """JSON-ready mirror of the parameter fields."""
        return {
            "n": self.n,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "score_decimals": self.score_decimals,
            "weight_fn": self.weight_fn.value,
            "profit_cap": self.profit_cap,
            "max_coins_per_identity": self.max_coins_per_identity,
            "window": self.window,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MarketParams":
        try:
            weight_fn = WeightFn(data.get("weight_fn", "f1"))
        except ValueError as exc:
            raise InvalidParams(f"unknown weight_fn {data.get('weight_fn')!r}") from exc
        try:
            return cls(
                n=int(data["n"]),
                alpha=int(data["alpha"]),
                beta=int(data["beta"]),
                gamma=int(data["gamma"]),
                score_decimals=int(data.get("score_decimals", 2)),
                weight_fn=weight_fn,
                profit_cap=None if data.get("profit_cap") is None else int(data["profit_cap"]),
                max_coins_per_identity=(
                    None
                    if data.get("max_coins_per_identity") is None
                    else int(data["max_coins_per_identity"])
                ),
                window=None if data.get("window") is None else int(data["window"]),
            )
        except KeyError as exc:
            raise InvalidParams(f"missing parameter field {exc}") from exc


@dataclass(frozen=True)
class Score:
    """Aggregated score: the exact rational mean and its published rounding."""

    value: Fraction
    published: Decimal

    def __str__(self) -> str:
        return str(self.published)


def _round_half_up(num: int, den: int, decimals: int) -> Decimal:
    # floor(num/den * 10**decimals + 1/2), all in integers
    scaled = (2 * num * 10**decimals + den) // (2 * den)
    return Decimal(scaled).scaleb(-decimals)


def format_fraction(value: Fraction) -> str:
    """Render a rational as its exact decimal string, or ``n/d`` if it has none."""
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return str(value)
    digits = max(twos, fives, 1)
    scaled = abs(value.numerator) * 10**digits // value.denominator
    sign = "-" if value.numerator < 0 else ""
    return f"{sign}{scaled // 10**digits}.{scaled % 10**digits:0{digits}d}"


def aggregated_score(counts: Sequence[int], score_decimals: int) -> Score | None:
    """Investment-weighted mean rating of the outstanding coins.

    ``counts[k]`` is the number of coins staked on rating ``k+1``. Returns
    None for an empty market (no coins outstanding).
    """
    total = sum(counts)
    if total == 0:
        return None
    num = sum(c * (k + 1) for k, c in enumerate(counts))
    return Score(value=Fraction(num, total), published=_round_half_up(num, total, score_decimals))


def winner_set(sigma: Score, j: int, n: int) -> frozenset[int]:
    """Rating levels whose stakeholders share the profit of a rating-``j`` mint.

    A mint above the published score rewards the band strictly above it, a
    mint below rewards the band strictly below, and a mint exactly at the
    published score rewards everyone. The result is never empty: ``j``
    itself lies in the band in the directional cases.
    """
    pub = sigma.published
    if j > pub:
        return frozenset(i for i in range(1, n + 1) if i > pub)
    if j < pub:
        return frozenset(i for i in range(1, n + 1) if i < pub)
    return frozenset(range(1, n + 1))


@dataclass(frozen=True)
class DistributionPlan:
    """How one mint's profit is split.

    ``per_coin_payout`` maps each winner rating that has outstanding coins to
    the floored minor-unit payout per coin; the flooring remainder (or the
    whole profit when no winner rating has any coins) goes to the owner.
    """

    mint_rating: int
    winners: frozenset[int]
    per_coin_payout: dict[int, int]
    owner_remainder: int


@dataclass
class CoinLot:
    """Coins of one rating bought together by one identity.

    ``accrued_profit_per_coin`` is the lifetime profit each coin in the lot
    has earned so far; the optional profit cap is enforced against it.
    """

    identity: str
    rating: int
    count: int
    accrued_profit_per_coin: int = 0
    minted_at: int = 0


@dataclass
class StakeholderBook:
    """Who owns which coins, in mint order."""

    lots: list[CoinLot] = field(default_factory=list)
    by_identity_rating: dict[tuple[str, int], int] = field(default_factory=dict)

    def add_lot(self, lot: CoinLot) -> None:
        self.lots.append(lot)
        key = (lot.identity, lot.rating)
        self.by_identity_rating[key] = self.by_identity_rating.get(key, 0) + lot.count

    def holdings(self, identity: str) -> int:
        return sum(c for (ident, _), c in self.by_identity_rating.items() if ident == identity)

    def count_for(self, identity: str, rating: int) -> int:
        return self.by_identity_rating.get((identity, rating), 0)

    def lots_of_rating(self, rating: int) -> list[CoinLot]:
        return [lot for lot in self.lots if lot.rating == rating]

    def remove_coins(self, lot: CoinLot, count: int) -> None:
        """Burn ``count`` coins from ``lot``, dropping the lot when empty."""
        lot.count -= count
        key = (lot.identity, lot.rating)
        remaining = self.by_identity_rating[key] - count
        if remaining == 0:
            del self.by_identity_rating[key]
        else:
            self.by_identity_rating[key] = remaining
        if lot.count == 0:
            self.lots.remove(lot)

    def oldest_lot(self, identity: str, rating: int) -> CoinLot | None:
        for lot in self.lots:
            if lot.identity == identity and lot.rating == rating:
                return lot
        return None


@dataclass
class MarketState:
    """Live state of one market.

    ``reserve`` always equals beta times the number of outstanding coins, so
    a sell-back can never fail for lack of funds. ``seq`` counts journal
    events and doubles as the mint timestamp on coin lots.
    """

    counts: list[int]
    book: StakeholderBook
    reserve: int = 0
    owner_balance: int = 0
    seq: int = 0

    @classmethod
    def empty(cls, n: int) -> "MarketState":
        return cls(counts=[0] * n, book=StakeholderBook())

    def total_coins(self) -> int:
        return sum(self.counts)


class EventKind(Enum):
    MINT = "mint"
    BURN = "burn"
    BUYBACK = "buyback"


@dataclass(frozen=True)
class JournalEvent:
    """One append-only journal record; the journal is the source of truth."""

    seq: int
    kind: EventKind
    identity: str
    rating: int
    cash_in: int
    cash_out: int
    plan: DistributionPlan | None
    score_after: Decimal | None


def compute_distribution(state: MarketState, j: int, params: MarketParams) -> DistributionPlan:
    """Plan the profit split for minting a rating-``j`` coin on ``state``.

    Uses the pre-mint holdings and the pre-mint published score: the buyer's
    new coin neither votes on the winner band nor earns from its own mint.
    Per-coin payouts are floored to minor units and the remainder goes to
    the owner; when no winner rating has any outstanding coin (including the
    very first coin of a market) the owner keeps the whole profit.
    """
    n = params.n
    if not 1 <= j <= n:
        raise InvalidRating(f"rating {j} outside 1..{n}")
    sigma = aggregated_score(state.counts, params.score_decimals)
    if sigma is None:
        return DistributionPlan(j, frozenset(), {}, params.gamma)

    winners = winner_set(sigma, j, n)
    scaled = _scaled_weights(params.weight_fn, j, n)
    denom = sum(state.counts[w - 1] * scaled[w] for w in winners)
    if denom == 0:
        return DistributionPlan(j, winners, {}, params.gamma)

    payouts: dict[int, int] = {}
    distributed = 0
    for w in sorted(winners):
        coins = state.counts[w - 1]
        if coins == 0:
            continue
        per_coin = params.gamma * scaled[w] // denom
        payouts[w] = per_coin
        distributed += coins * per_coin
    return DistributionPlan(j, winners, payouts, params.gamma - distributed)


class Market:
    """A single rating market plus its append-only journal.

    All mutating operations go through one Market instance (single writer);
    reads may use snapshots. Every mutation appends the events it produced
    to ``journal`` in sequence order.
    """

    def __init__(self, params: MarketParams, state: MarketState | None = None):
        self.params = params
        self.state = state if state is not None else MarketState.empty(params.n)
        self.journal: list[JournalEvent] = []
        # lifetime cash per identity, rebuilt identically on replay
        self.paid_by_identity: dict[str, int] = {}
        self.received_by_identity: dict[str, int] = {}

    def score(self) -> Score | None:
        return aggregated_score(self.state.counts, self.params.score_decimals)

    def _published(self) -> Decimal | None:
        sigma = self.score()
        return None if sigma is None else sigma.published

    def _credit_winners(self, plan: DistributionPlan) -> None:
        for rating, per_coin in plan.per_coin_payout.items():
            if per_coin == 0:
                continue
            for lot in self.state.book.lots_of_rating(rating):
                lot.accrued_profit_per_coin += per_coin
                amount = per_coin * lot.count
                self.received_by_identity[lot.identity] = (
                    self.received_by_identity.get(lot.identity, 0) + amount
                )

    def buy_coin(self, identity: str, rating: int) -> JournalEvent:
        """Mint one rating-``rating`` coin for ``identity``.

        Atomic pipeline: charge alpha, split the profit over the pre-mint
        state, credit winners and the owner, escrow beta, add the coin,
        then run the profit-cap sweep. Exactly alpha enters the system:
        beta to reserve, the rest to payouts plus owner remainder.
        """
        params = self.params
        if not 1 <= rating <= params.n:
            raise InvalidRating(f"rating {rating} outside 1..{params.n}")
        limit = params.max_coins_per_identity
        if limit is not None and self.state.book.holdings(identity) >= limit:
            raise IdentityLimitExceeded(
                f"{identity} already holds {limit} coin{'s' if limit != 1 else ''}"
            )

        plan = compute_distribution(self.state, rating, params)
        self.paid_by_identity[identity] = self.paid_by_identity.get(identity, 0) + params.alpha
        self._credit_winners(plan)
        self.state.owner_balance += plan.owner_remainder
        self.state.reserve += params.beta
        self.state.seq += 1
        self.state.counts[rating - 1] += 1
        self.state.book.add_lot(
            CoinLot(identity=identity, rating=rating, count=1, minted_at=self.state.seq)
        )
        event = JournalEvent(
            seq=self.state.seq,
            kind=EventKind.MINT,
            identity=identity,
            rating=rating,
            cash_in=params.alpha,
            cash_out=0,
            plan=plan,
            score_after=self._published(),
        )
        self.journal.append(event)
        if params.profit_cap is not None:
            self.apply_profit_cap()
        return event

    def sell_coin(self, identity: str, rating: int) -> JournalEvent:
        """Burn one of ``identity``'s rating-``rating`` coins and pay beta back.

        Oldest lot first. Sells never trigger profit sharing.
        """
        if not 1 <= rating <= self.params.n:
            raise InvalidRating(f"rating {rating} outside 1..{self.params.n}")
        lot = self.state.book.oldest_lot(identity, rating)
        if lot is None:
            raise NoSuchHolding(f"{identity} holds no coin of rating {rating}")
        return self._burn(lot, EventKind.BURN)

    def _burn(self, lot: CoinLot, kind: EventKind) -> JournalEvent:
        beta = self.params.beta
        identity, rating = lot.identity, lot.rating
        self.state.book.remove_coins(lot, 1)
        self.state.counts[rating - 1] -= 1
        self.state.reserve -= beta
        self.received_by_identity[identity] = self.received_by_identity.get(identity, 0) + beta
        self.state.seq += 1
        event = JournalEvent(
            seq=self.state.seq,
            kind=kind,
            identity=identity,
            rating=rating,
            cash_in=0,
            cash_out=beta,
            plan=None,
            score_after=self._published(),
        )
        self.journal.append(event)
        return event

    def apply_profit_cap(self) -> list[JournalEvent]:
        """Buy back every coin whose lot has earned the configured profit cap.

        Lots are processed oldest mint first; each coin bought back pays beta
        from reserve and appends its own buyback event. No-op when the cap is
        disabled or nothing has reached it.
        """
        cap = self.params.profit_cap
        if cap is None:
            return []
        events: list[JournalEvent] = []
        # snapshot: buybacks mutate the lot list while we walk it
        capped = [lot for lot in self.state.book.lots if lot.accrued_profit_per_coin >= cap]
        for lot in capped:
            while lot.count > 0:
                events.append(self._burn(lot, EventKind.BUYBACK))
        return events


def apply_event(market: Market, event: JournalEvent) -> None:
    """Re-apply one journal event's recorded effects to ``market``.

    Replay is effect application, not policy re-execution: a mint credits
    the payouts its recorded plan states, a buyback burns the identity's
    oldest lot of that rating. Replaying a journal this way reproduces the
    original MarketState exactly.
    """
    state = market.state
    params = market.params
    if event.kind is EventKind.MINT:
        market.paid_by_identity[event.identity] = (
            market.paid_by_identity.get(event.identity, 0) + event.cash_in
        )
        if event.plan is not None:
            market._credit_winners(event.plan)
            state.owner_balance += event.plan.owner_remainder
        state.reserve += params.beta
        state.seq += 1
        state.counts[event.rating - 1] += 1
        state.book.add_lot(
            CoinLot(identity=event.identity, rating=event.rating, count=1, minted_at=state.seq)
        )
    else:
        lot = state.book.oldest_lot(event.identity, event.rating)
        if lot is None:
            raise NoSuchHolding(
                f"event {event.seq}: {event.identity} holds no coin of rating {event.rating}"
            )
        state.book.remove_coins(lot, 1)
        state.counts[event.rating - 1] -= 1
        state.reserve -= params.beta
        market.received_by_identity[event.identity] = (
            market.received_by_identity.get(event.identity, 0) + params.beta
        )
        state.seq += 1
    market.journal.append(event)


def snapshot(state: MarketState) -> MarketState:
    """Deep, structurally independent copy of a market state."""
    book = StakeholderBook(
        lots=[replace(lot) for lot in state.book.lots],
        by_identity_rating=dict(state.book.by_identity_rating),
    )
    return MarketState(
        counts=list(state.counts),
        book=book,
        reserve=state.reserve,
        owner_balance=state.owner_balance,
        seq=state.seq,
    )


def seed_market(market: Market, coins: Iterable[tuple[str, int]]) -> None:
    """Mint a scripted sequence of (identity, rating) coins through the market."""
    for identity, rating in coins:
        market.buy_coin(identity, rating)
