import pytest

from ratingmarket import Market, MarketParams, seed_market
from ratingmarket.experiments import WORKED_EXAMPLE_SEED


@pytest.fixture
def params():
    """Worked-example parameters: buy 200, sell back 100, profit 100."""
    return MarketParams(n=5, alpha=200, beta=100, gamma=100, score_decimals=2)


@pytest.fixture
def seeded_market(params):
    """The worked example's pre-state: counts (4, 4, 2, 1, 0)."""
    market = Market(params)
    seed_market(market, ((f"reviewer-{i}", r) for i, r in enumerate(WORKED_EXAMPLE_SEED)))
    return market


@pytest.fixture
def golden_market(seeded_market):
    """The full worked-example trace: the two sample purchases applied."""
    seeded_market.buy_coin("promoter", 5)
    seeded_market.buy_coin("detractor", 2)
    return seeded_market
