"""Market-based rating system with directional profit sharing.

Reviewers buy coins staked on rating levels; the published score is the
investment-weighted mean of all outstanding coins, and each purchase's
spread profit is shared among stakeholders positioned on the side of the
scale the new coin pushes toward. Includes agent simulations and the
attack-cost experiment harness.
"""

from .market import (
    CoinLot,
    DistributionPlan,
    EventKind,
    IdentityLimitExceeded,
    InvalidParams,
    InvalidRating,
    JournalEvent,
    Market,
    MarketError,
    MarketParams,
    MarketState,
    NoSuchHolding,
    Score,
    StakeholderBook,
    WeightFn,
    aggregated_score,
    compute_distribution,
    format_fraction,
    seed_market,
    snapshot,
    weight,
    winner_set,
)
from .journal import (
    BalanceReport,
    CorruptJournal,
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
from .agents import (
    Action,
    AgentKind,
    AgentRuntime,
    AgentSpec,
    ArrivalOrder,
    InvalidScenario,
    ScenarioConfig,
    Trace,
    attacker_step,
    honest_step,
    load_scenario,
    run_simulation,
    scenario_from_dict,
    scenario_to_dict,
    strategic_step,
)
from .experiments import (
    CostCurveRow,
    ExampleReport,
    ReportedMismatch,
    TargetUnreachable,
    attacker_cost_closed_form,
    attacker_cost_curve,
    cost_curve_csv,
    default_experiment_params,
    default_target_grid,
    replay_worked_example,
    write_cost_curve_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
