"""Append-only journal: line-delimited JSON persistence, replay, and the
budget-balance verifier.

Every mint, burn, and buyback is one JSON record on its own line. The
journal is the source of truth for a market: replaying it from an empty
state reproduces the live MarketState exactly, and ``verify_ledger``
re-checks the money identities event by event — each mint's payouts plus
owner remainder must equal the spread profit to the minor unit, the
reserve must always back every outstanding coin, and nothing may enter or
leave the system unaccounted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Sequence

from .market import (
    DistributionPlan,
    EventKind,
    JournalEvent,
    Market,
    MarketError,
    MarketParams,
    Score,
    aggregated_score,
    apply_event,
)


class CorruptJournal(MarketError):
    """Journal cannot be parsed or replayed (bad structure, not bad money)."""


def event_to_dict(event: JournalEvent) -> dict:
    """JSON-ready mirror of one journal event; money stays integer."""
    plan = None
    if event.plan is not None:
        plan = {
            "winners": sorted(event.plan.winners),
            "per_coin_payout": {str(r): p for r, p in sorted(event.plan.per_coin_payout.items())},
            "owner_remainder": event.plan.owner_remainder,
        }
    return {
        "seq": event.seq,
        "kind": event.kind.value,
        "identity": event.identity,
        "rating": event.rating,
        "cash_in": event.cash_in,
        "cash_out": event.cash_out,
        "plan": plan,
        "score_after": None if event.score_after is None else str(event.score_after),
    }


def event_from_dict(data: dict) -> JournalEvent:
    try:
        plan = None
        if data["plan"] is not None:
            raw = data["plan"]
            plan = DistributionPlan(
                mint_rating=int(data["rating"]),
                winners=frozenset(int(w) for w in raw["winners"]),
                per_coin_payout={int(r): int(p) for r, p in raw["per_coin_payout"].items()},
                owner_remainder=int(raw["owner_remainder"]),
            )
        score = None if data["score_after"] is None else Decimal(data["score_after"])
        return JournalEvent(
            seq=int(data["seq"]),
            kind=EventKind(data["kind"]),
            identity=str(data["identity"]),
            rating=int(data["rating"]),
            cash_in=int(data["cash_in"]),
            cash_out=int(data["cash_out"]),
            plan=plan,
            score_after=score,
        )
    except (KeyError, TypeError, ValueError, InvalidOperation) as exc:
        raise CorruptJournal(f"malformed event record: {exc}") from exc


def event_to_line(event: JournalEvent) -> str:
    return json.dumps(event_to_dict(event), separators=(",", ":"))


def write_journal(path: str | Path, events: Iterable[JournalEvent]) -> None:
    Path(path).write_text("".join(event_to_line(e) + "\n" for e in events))


def read_journal(path: str | Path) -> list[JournalEvent]:
    """Parse a journal file; raises CorruptJournal with the offending line number."""
    events: list[JournalEvent] = []
    with open(path, "r") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                events.append(event_from_dict(record))
            except (json.JSONDecodeError, CorruptJournal) as exc:
                raise CorruptJournal(f"line {lineno}: {exc}") from exc
    return events


def replay_events(events: Sequence[JournalEvent], params: MarketParams) -> Market:
    """Rebuild a market by applying each event's recorded effects in order."""
    market = Market(params)
    expected = 1
    for event in events:
        if event.seq != expected:
            raise CorruptJournal(f"event seq {event.seq}, expected {expected}")
        if (event.kind is EventKind.MINT) != (event.plan is not None):
            raise CorruptJournal(f"event {event.seq}: plan present iff mint")
        try:
            apply_event(market, event)
        except MarketError as exc:
            raise CorruptJournal(f"event {event.seq}: {exc}") from exc
        expected += 1
    return market


def rebuild_state(path: str | Path, params: MarketParams) -> Market:
    """Replay a journal file into a live market (state on ``.state``).

    Idempotent: rebuilding twice from the same file gives equal states.
    """
    return replay_events(read_journal(path), params)


@dataclass(frozen=True)
class BalanceReport:
    """Outcome of a ledger verification pass.

    ``ok`` means every event balanced; otherwise ``violation_seq`` and
    ``message`` pinpoint the first failure. Totals are included either way.
    """

    ok: bool
    events: int
    violation_seq: int | None
    message: str
    cash_in: int
    cash_out: int
    reserve: int
    owner_balance: int
    stakeholder_credits: int

    def summary(self) -> str:
        if self.ok:
            return f"balanced ({self.events} events)"
        return f"violation at seq {self.violation_seq}: {self.message}"


def _report(ok, events, seq, message, cash_in, cash_out, market) -> BalanceReport:
    return BalanceReport(
        ok=ok,
        events=events,
        violation_seq=seq,
        message=message,
        cash_in=cash_in,
        cash_out=cash_out,
        reserve=market.state.reserve,
        owner_balance=market.state.owner_balance,
        stakeholder_credits=sum(market.received_by_identity.values())
        - sum(e.cash_out for e in market.journal),
    )


def verify_ledger(events: Sequence[JournalEvent], params: MarketParams) -> BalanceReport:
    """Replay ``events`` and check the budget-balance identities.

    Per mint: distributed payouts (over pre-mint holdings) plus the owner
    remainder must equal gamma exactly, and exactly alpha must have come in.
    After every event: reserve == beta * outstanding coins. Cumulatively:
    cash in - cash out == reserve + owner balance + stakeholder credits.
    Returns the first violation found, or a balanced report.
    """
    market = Market(params)
    cash_in_total = 0
    cash_out_total = 0
    credits_total = 0
    expected = 1
    for i, event in enumerate(events):
        if event.seq != expected:
            raise CorruptJournal(f"event seq {event.seq}, expected {expected}")
        expected += 1

        def fail(message: str) -> BalanceReport:
            return _report(
                False, i + 1, event.seq, message, cash_in_total, cash_out_total, market
            )

        if event.kind is EventKind.MINT:
            plan = event.plan
            if plan is None:
                raise CorruptJournal(f"event {event.seq}: mint without plan")
            if event.cash_in != params.alpha or event.cash_out != 0:
                return fail(
                    f"mint cash flow {event.cash_in}/{event.cash_out}, "
                    f"expected {params.alpha}/0"
                )
            if any(p < 0 for p in plan.per_coin_payout.values()) or plan.owner_remainder < 0:
                return fail("negative payout or remainder")
            if not set(plan.per_coin_payout) <= set(plan.winners):
                return fail("payout to a rating outside the winner set")
            distributed = sum(
                market.state.counts[w - 1] * p for w, p in plan.per_coin_payout.items()
            )
            if distributed + plan.owner_remainder != params.gamma:
                return fail(
                    f"payouts {distributed} + remainder {plan.owner_remainder} "
                    f"!= gamma {params.gamma}"
                )
            credits_total += distributed
        else:
            if event.plan is not None:
                raise CorruptJournal(f"event {event.seq}: {event.kind.value} carries a plan")
            if event.cash_in != 0 or event.cash_out != params.beta:
                return fail(
                    f"{event.kind.value} cash flow {event.cash_in}/{event.cash_out}, "
                    f"expected 0/{params.beta}"
                )

        cash_in_total += event.cash_in
        cash_out_total += event.cash_out
        try:
            apply_event(market, event)
        except MarketError as exc:
            raise CorruptJournal(f"event {event.seq}: {exc}") from exc

        if market.state.reserve != params.beta * market.state.total_coins():
            return fail(
                f"reserve {market.state.reserve} != beta * coins "
                f"{params.beta * market.state.total_coins()}"
            )
        sigma = aggregated_score(market.state.counts, params.score_decimals)
        published = None if sigma is None else sigma.published
        if event.score_after != published:
            return fail(f"recorded score {event.score_after} != recomputed {published}")

    balance = market.state.reserve + market.state.owner_balance + credits_total
    if cash_in_total - cash_out_total != balance:
        return _report(
            False,
            len(events),
            events[-1].seq if events else None,
            f"conservation broken: net cash {cash_in_total - cash_out_total} != {balance}",
            cash_in_total,
            cash_out_total,
            market,
        )
    return _report(
        True, len(events), None, "balanced", cash_in_total, cash_out_total, market
    )


def windowed_score(
    events: Sequence[JournalEvent], window: int, score_decimals: int
) -> Score | None:
    """Aggregated score over only the last ``window`` journal events.

    Nets each rating's mints against its burns and buybacks inside the
    window; a rating whose net goes negative (its coin was minted before the
    window) contributes nothing. None when the window nets to zero coins.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    net: dict[int, int] = {}
    for event in events[-window:]:
        delta = 1 if event.kind is EventKind.MINT else -1
        net[event.rating] = net.get(event.rating, 0) + delta
    counts = {r: c for r, c in net.items() if c > 0}
    if not counts:
        return None
    top = max(counts)
    as_list = [counts.get(r, 0) for r in range(1, top + 1)]
    return aggregated_score(as_list, score_decimals)
