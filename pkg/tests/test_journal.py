"""Journal serialization, replay, windowed scores, and the ledger verifier."""

import dataclasses
import random

import pytest

from ratingmarket import (
    CorruptJournal,
    EventKind,
    Market,
    event_from_dict,
    event_to_dict,
    event_to_line,
    read_journal,
    rebuild_state,
    replay_events,
    verify_ledger,
    windowed_score,
    write_journal,
)


class TestSerialization:
    def test_round_trip_all_kinds(self, golden_market):
        golden_market.sell_coin("promoter", 5)
        for event in golden_market.journal:
            assert event_from_dict(event_to_dict(event)) == event

    def test_line_schema(self, golden_market):
        import json

        record = json.loads(event_to_line(golden_market.journal[11]))
        assert list(record) == [
            "seq", "kind", "identity", "rating", "cash_in", "cash_out", "plan", "score_after",
        ]
        assert record["kind"] == "mint"
        assert record["plan"]["winners"] == [3, 4, 5]
        assert record["plan"]["per_coin_payout"] == {"3": 25, "4": 50}
        assert record["plan"]["owner_remainder"] == 0
        assert record["score_after"] == "2.25"
        assert isinstance(record["cash_in"], int)

    def test_score_after_null_when_emptied(self, params):
        market = Market(params)
        market.buy_coin("alice", 4)
        event = market.sell_coin("alice", 4)
        assert event_to_dict(event)["score_after"] is None
        assert event_from_dict(event_to_dict(event)) == event

    def test_file_round_trip(self, golden_market, tmp_path):
        path = tmp_path / "journal.jsonl"
        write_journal(path, golden_market.journal)
        assert read_journal(path) == golden_market.journal

    def test_corrupt_line_number(self, golden_market, tmp_path):
        path = tmp_path / "journal.jsonl"
        lines = [event_to_line(e) for e in golden_market.journal]
        lines[2] = lines[2][: len(lines[2]) // 2]  # truncated mid-record
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptJournal, match="line 3"):
            read_journal(path)


class TestRebuild:
    def test_empty_file(self, params, tmp_path):
        path = tmp_path / "journal.jsonl"
        path.write_text("")
        market = rebuild_state(path, params)
        assert market.state.total_coins() == 0
        assert market.state.seq == 0

    def test_golden_journal(self, golden_market, params, tmp_path):
        path = tmp_path / "journal.jsonl"
        write_journal(path, golden_market.journal)
        rebuilt = rebuild_state(path, params)
        assert rebuilt.state.counts == [4, 5, 2, 1, 1]
        assert str(rebuilt.score().published) == "2.23"
        assert rebuilt.state == golden_market.state

    def test_idempotent(self, golden_market, params, tmp_path):
        path = tmp_path / "journal.jsonl"
        write_journal(path, golden_market.journal)
        assert rebuild_state(path, params).state == rebuild_state(path, params).state

    def test_rebuilds_cash_tallies(self, golden_market, params):
        rebuilt = replay_events(golden_market.journal, params)
        assert rebuilt.paid_by_identity == golden_market.paid_by_identity
        assert rebuilt.received_by_identity == golden_market.received_by_identity

    def test_non_monotone_seq(self, golden_market, params):
        events = list(golden_market.journal)
        events[5], events[6] = events[6], events[5]
        with pytest.raises(CorruptJournal):
            replay_events(events, params)

    def test_replay_after_random_ops(self, params):
        rng = random.Random(99)
        market = Market(params)
        for _ in range(300):
            if rng.random() < 0.75 or not market.state.book.lots:
                market.buy_coin(f"user-{rng.randrange(6)}", rng.randrange(1, 6))
            else:
                lot = rng.choice(market.state.book.lots)
                market.sell_coin(lot.identity, lot.rating)
        rebuilt = replay_events(market.journal, params)
        assert rebuilt.state == market.state
        assert rebuilt.journal == market.journal


class TestVerifyLedger:
    def test_empty_journal_balances(self, params):
        report = verify_ledger([], params)
        assert report.ok
        assert report.summary() == "balanced (0 events)"

    def test_golden_trace_balances(self, golden_market, params):
        report = verify_ledger(golden_market.journal, params)
        assert report.ok
        # two degenerate mints paid the owner in full, flooring added 7,
        # and the detractor's purchase left 4 more
        assert report.owner_balance == 2 * params.gamma + 7 + 4 == 211
        assert report.cash_in == 13 * params.alpha
        assert report.reserve == 13 * params.beta
        assert report.stakeholder_credits == 13 * params.gamma - 211

    def test_tampered_payout_caught(self, golden_market, params):
        events = list(golden_market.journal)
        victim = events[11]
        plan = dataclasses.replace(
            victim.plan,
            per_coin_payout={**victim.plan.per_coin_payout, 4: 51},
        )
        events[11] = dataclasses.replace(victim, plan=plan)
        report = verify_ledger(events, params)
        assert not report.ok
        assert report.violation_seq == 12
        assert "gamma" in report.message

    def test_tampered_cash_caught(self, golden_market, params):
        events = list(golden_market.journal)
        events[0] = dataclasses.replace(events[0], cash_in=events[0].cash_in + 1)
        report = verify_ledger(events, params)
        assert not report.ok
        assert report.violation_seq == 1

    def test_tampered_score_caught(self, golden_market, params):
        from decimal import Decimal

        events = list(golden_market.journal)
        events[12] = dataclasses.replace(events[12], score_after=Decimal("2.24"))
        report = verify_ledger(events, params)
        assert not report.ok
        assert report.violation_seq == 13

    def test_burn_without_holder_is_corrupt(self, golden_market, params):
        events = list(golden_market.journal)
        events[12] = dataclasses.replace(
            events[12], kind=EventKind.BURN, plan=None, cash_in=0, cash_out=params.beta
        )
        with pytest.raises(CorruptJournal):
            verify_ledger(events, params)

    def test_reserve_checked_after_every_event(self, golden_market, params):
        report = verify_ledger(golden_market.journal, params)
        assert report.reserve == params.beta * golden_market.state.total_coins()


class TestWindowedScore:
    def test_window_of_recent_mints(self, params):
        market = Market(params)
        for rating in (5, 5, 1):
            market.buy_coin("alice", rating)
        sigma = windowed_score(market.journal, 2, 2)
        assert str(sigma.published) == "3.00"  # one c5 and one c1 in the window

    def test_window_covering_everything(self, golden_market, params):
        sigma = windowed_score(golden_market.journal, 10_000, params.score_decimals)
        assert sigma.published == golden_market.score().published
        assert sigma.value == golden_market.score().value

    def test_window_netting_to_zero(self, params):
        market = Market(params)
        market.buy_coin("alice", 4)
        market.buy_coin("alice", 4)
        market.sell_coin("alice", 4)
        assert windowed_score(market.journal, 2, 2) is None

    def test_burn_of_older_coin_contributes_nothing(self, params):
        market = Market(params)
        market.buy_coin("alice", 3)
        market.buy_coin("bob", 5)
        market.sell_coin("alice", 3)
        sigma = windowed_score(market.journal, 2, 2)
        assert str(sigma.published) == "5.00"

    def test_rejects_bad_window(self, golden_market):
        with pytest.raises(ValueError):
            windowed_score(golden_market.journal, 0, 2)
