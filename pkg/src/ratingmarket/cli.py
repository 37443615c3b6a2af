"""Command-line surface: an event-sourced market directory plus the
simulation and experiment runners.

A market lives in a directory holding ``config.json`` (the market
parameters) and ``journal.jsonl`` (the append-only event log). Mutating
commands take an exclusive lock on the directory, replay the journal,
apply the operation, and append the new events with a write-temp-then-
rename so a crash can never leave a half-written line. Exit codes: 0 on
success, 1 on a domain error, 2 on a usage error.
"""

from __future__ import annotations

import fcntl
import json
import os
import sys
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

import click

from .agents import load_scenario, run_simulation
from .experiments import (
    attacker_cost_curve,
    cost_curve_csv,
    replay_worked_example,
)
from .journal import (
    event_to_line,
    read_journal,
    replay_events,
    verify_ledger,
    windowed_score,
    write_journal,
)
from .market import InvalidParams, Market, MarketError, MarketParams, WeightFn

CONFIG_NAME = "config.json"
JOURNAL_NAME = "journal.jsonl"
LOCK_NAME = ".lock"


def resolve_market_dir(option_value: str) -> Path:
    # REWARD_RATING_DIR wins over the --dir flag
    return Path(os.environ.get("REWARD_RATING_DIR") or option_value)


def load_params(market_dir: Path) -> MarketParams:
    config = market_dir / CONFIG_NAME
    if not config.exists():
        raise MarketError(f"no market at {market_dir} (missing {CONFIG_NAME}); run init first")
    with open(config) as handle:
        return MarketParams.from_dict(json.load(handle))


def load_market(market_dir: Path) -> Market:
    params = load_params(market_dir)
    journal = market_dir / JOURNAL_NAME
    events = read_journal(journal) if journal.exists() else []
    return replay_events(events, params)


@contextmanager
def market_lock(market_dir: Path):
    """Exclusive advisory lock for mutating commands."""
    lock_path = market_dir / LOCK_NAME
    with open(lock_path, "w") as handle:
        fcntl.flock(handle, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(handle, fcntl.LOCK_UN)


def append_events_atomic(market_dir: Path, new_lines: list[str]) -> None:
    """Append journal lines via write-temp-then-rename."""
    journal = market_dir / JOURNAL_NAME
    existing = journal.read_text() if journal.exists() else ""
    tmp = market_dir / (JOURNAL_NAME + ".tmp")
    tmp.write_text(existing + "".join(line + "\n" for line in new_lines))
    os.replace(tmp, journal)


def fail(error: MarketError) -> None:
    click.echo(f"{type(error).__name__}: {error}", err=True)
    sys.exit(1)


@click.group()
@click.option(
    "--dir",
    "market_dir",
    default="market",
    show_default=True,
    help="Market directory (REWARD_RATING_DIR overrides).",
)
@click.pass_context
def main(ctx: click.Context, market_dir: str) -> None:
    """Market-based rating system: invest in ratings, share mint profits."""
    ctx.obj = resolve_market_dir(market_dir)


@main.command()
@click.option("--n", default=5, show_default=True, help="Number of rating levels.")
@click.option("--alpha", default=200, show_default=True, help="Coin purchase price (minor units).")
@click.option("--beta", default=100, show_default=True, help="Coin sell-back price (minor units).")
@click.option("--gamma", default=100, show_default=True, help="Per-mint profit (minor units).")
@click.option("--score-decimals", default=2, show_default=True)
@click.option(
    "--weight-fn",
    type=click.Choice([w.value for w in WeightFn]),
    default=WeightFn.F1.value,
    show_default=True,
)
@click.option("--profit-cap", type=int, default=None, help="Per-coin lifetime profit cap.")
@click.option("--max-coins-per-identity", type=int, default=None)
@click.option("--window", type=int, default=None, help="Default score window (events).")
@click.pass_obj
def init(market_dir: Path, **options) -> None:
    """Create a market directory with its parameters and an empty journal."""
    try:
        params = MarketParams(
            n=options["n"],
            alpha=options["alpha"],
            beta=options["beta"],
            gamma=options["gamma"],
            score_decimals=options["score_decimals"],
            weight_fn=WeightFn(options["weight_fn"]),
            profit_cap=options["profit_cap"],
            max_coins_per_identity=options["max_coins_per_identity"],
            window=options["window"],
        )
    except InvalidParams as exc:
        fail(exc)
    config = market_dir / CONFIG_NAME
    if config.exists():
        fail(MarketError(f"market already initialized at {market_dir}"))
    market_dir.mkdir(parents=True, exist_ok=True)
    with market_lock(market_dir):
        config.write_text(json.dumps(params.to_dict(), indent=2) + "\n")
        (market_dir / JOURNAL_NAME).touch()
    click.echo(f"initialized market in {market_dir}")


@main.command()
@click.option("--user", required=True)
@click.option("--rating", required=True, type=int)
@click.pass_obj
def buy(market_dir: Path, user: str, rating: int) -> None:
    """Buy (mint) one coin of the given rating."""
    try:
        with market_lock(market_dir):
            market = load_market(market_dir)
            before = len(market.journal)
            market.buy_coin(user, rating)
            new = market.journal[before:]
            append_events_atomic(market_dir, [event_to_line(e) for e in new])
    except MarketError as exc:
        fail(exc)
    click.echo(f"minted c{rating} for {user}; score {new[0].score_after}")


@main.command()
@click.option("--user", required=True)
@click.option("--rating", required=True, type=int)
@click.pass_obj
def sell(market_dir: Path, user: str, rating: int) -> None:
    """Sell one coin of the given rating back to the system."""
    try:
        with market_lock(market_dir):
            market = load_market(market_dir)
            event = market.sell_coin(user, rating)
            append_events_atomic(market_dir, [event_to_line(event)])
    except MarketError as exc:
        fail(exc)
    score = "none" if event.score_after is None else str(event.score_after)
    click.echo(f"burned c{rating} of {user}; score {score}")


@main.command()
@click.option("--window", type=int, default=None, help="Only the last N events count.")
@click.pass_obj
def score(market_dir: Path, window: int | None) -> None:
    """Print the published aggregated score."""
    try:
        params = load_params(market_dir)
        journal = market_dir / JOURNAL_NAME
        events = read_journal(journal) if journal.exists() else []
        window = window if window is not None else params.window
        if window is not None:
            sigma = windowed_score(events, window, params.score_decimals)
        else:
            sigma = replay_events(events, params).score()
    except MarketError as exc:
        fail(exc)
    if sigma is None:
        fail(MarketError("market has no outstanding coins"))
    click.echo(str(sigma.published))


@main.command()
@click.pass_obj
def verify(market_dir: Path) -> None:
    """Replay the journal and check every budget-balance identity."""
    try:
        params = load_params(market_dir)
        journal = market_dir / JOURNAL_NAME
        events = read_journal(journal) if journal.exists() else []
        report = verify_ledger(events, params)
    except MarketError as exc:
        fail(exc)
    click.echo(report.summary())
    if not report.ok:
        sys.exit(1)


@main.command()
@click.option(
    "--scenario",
    "scenario_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option("--seed", type=int, default=None, help="Override the scenario's seed.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Journal output path.")
def simulate(scenario_path: str, seed: int | None, out: str | None) -> None:
    """Run an agent scenario and emit the resulting journal."""
    from dataclasses import replace

    try:
        scenario = load_scenario(scenario_path)
        if seed is not None:
            scenario = replace(scenario, seed=seed)
        trace = run_simulation(scenario)
    except MarketError as exc:
        fail(exc)
    if out is None:
        for event in trace.journal:
            click.echo(event_to_line(event))
    else:
        write_journal(out, trace.journal)
        final = trace.score_series[-1][1] if trace.score_series else None
        click.echo(
            f"{len(trace.journal)} events -> {out}; final score "
            f"{'none' if final is None else final}"
        )


@main.command(name="replay-example")
@click.option(
    "--weight-fn",
    type=click.Choice([w.value for w in WeightFn]),
    default=WeightFn.F1.value,
    show_default=True,
)
@click.option("--score-decimals", default=2, show_default=True)
def replay_example(weight_fn: str, score_decimals: int) -> None:
    """Replay the worked restaurant example against its golden values."""
    try:
        report = replay_worked_example(WeightFn(weight_fn), score_decimals)
    except MarketError as exc:
        fail(exc)
    for line in report.lines():
        click.echo(line)
    if not report.ok:
        sys.exit(1)
    click.echo("all golden values reproduced")


@main.group()
def experiment() -> None:
    """Batch experiments emitting CSV."""


@experiment.command(name="attacker-cost")
@click.option("--H", "h_values", default="100,200,500", show_default=True, help="Comma list.")
@click.option(
    "--targets",
    default=None,
    help="Comma list of target scores [default: 1.0..4.9 step 0.1].",
)
@click.option("--alpha", default=1, show_default=True, help="Reported price per coin.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV output path.")
def attacker_cost(h_values: str, targets: str | None, alpha: int, out: str | None) -> None:
    """Cost for an attacker to lift the score of an all-1 market."""
    try:
        hs = [int(v) for v in h_values.split(",") if v]
        grid = (
            None if targets is None else [Fraction(v) for v in targets.split(",") if v]
        )
    except ValueError as exc:
        raise click.UsageError(f"bad numeric list: {exc}") from exc
    try:
        rows = attacker_cost_curve(hs, grid, alpha=alpha)
    except MarketError as exc:
        fail(exc)
    csv_text = cost_curve_csv(rows)
    if out is None:
        click.echo(csv_text, nl=False)
    else:
        Path(out).write_text(csv_text)
        click.echo(f"{len(rows)} rows -> {out}")


if __name__ == "__main__":
    main()
