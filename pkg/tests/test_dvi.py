from __future__ import annotations

import math

import numpy as np
import pytest

from asphalt.distmc.distributions import (
    CategoricalDist,
    QuantileDist,
    ReprParams,
    SparseDist,
    cvar,
    mean,
)
from asphalt.distmc.dvi import (
    SlackGrid,
    build_slack_product,
    evaluate_policy,
    relative_deviation,
    risk_neutral_dvi,
    risk_sensitive_dvi,
    value_iteration,
)
from asphalt.distmc.exceptions import NonConvergence, NotAlmostSureReachable
from asphalt.distmc.forward import forward_distribution
from asphalt.distmc.models import Dtmc, Mdp, Policy, RewardStructure, induce_dtmc

from .oracles import memoryless_policies, optimal_cvar, random_mdp

#: integer atoms from 0 to 20, so rewards of the small test models project exactly
EXACT_GRID = ReprParams("categorical", 21, 0.0, 20.0)


@pytest.fixture
def gamble_mdp() -> Mdp:
    # state 0 can pay 5 to reach the goal (1) or pay 1 to gamble on a trap (2)
    return Mdp.from_choices(
        [
            [("safe", [(1, 1.0)]), ("gamble", [(1, 0.5), (2, 0.5)])],
            [("stay", [(1, 1.0)])],
            [("stay", [(2, 1.0)])],
        ],
        0,
        {"goal": [1]},
    )


def test_slack_grid() -> None:
    grid = SlackGrid(0.0, 10.0, 11)
    assert grid.stride == 1.0
    assert grid.atoms.tolist() == list(range(11))
    assert grid.round_down(np.array([-1.0, 0.0, 2.5, 3.0, 100.0])).tolist() == [
        0,
        0,
        2,
        3,
        10,
    ]


@pytest.mark.parametrize(
    "vmin, vmax, n, message",
    [
        pytest.param(0.0, 10.0, 1, "at least 2 atoms", id="atoms"),
        pytest.param(5.0, 5.0, 3, "vmin must be smaller", id="range"),
    ],
)
def test_slack_grid_validation(vmin: float, vmax: float, n: int, message: str) -> None:
    with pytest.raises(ValueError, match=message):
        SlackGrid(vmin, vmax, n)


def test_slack_product(two_route_mdp: Mdp, two_route_rewards: RewardStructure) -> None:
    slack = build_slack_product(two_route_mdp, two_route_rewards, SlackGrid(0.0, 3.0, 4))
    product = slack.mdp
    assert product.num_states == 12
    assert product.initial == 0
    assert slack.entry_states.tolist() == [0, 1, 2, 3]
    assert slack.state_map[7].tolist() == [1, 3]
    assert slack.lift(two_route_mdp.label_mask("goal")).tolist() == [False] * 8 + [True] * 4

    # risky and safe from <0, b=3>
    risky, safe = product.choices(3)
    indptr, indices = product.matrix.indptr, product.matrix.indices
    assert sorted(indices[indptr[risky] : indptr[risky + 1]].tolist()) == [6, 10]
    assert indices[indptr[safe] : indptr[safe + 1]].tolist() == [8]
    assert slack.rewards.values[[risky, safe]].tolist() == [1, 3]


def test_risk_neutral(two_route_mdp: Mdp, two_route_rewards: RewardStructure) -> None:
    goal = two_route_mdp.label_mask("goal")
    result = risk_neutral_dvi(two_route_mdp, two_route_rewards, goal, EXACT_GRID, 1e-9)
    assert isinstance(result.distribution, CategoricalDist)
    assert result.policy == Policy(np.array([0, 0, -1]))
    assert mean(result.distribution) == pytest.approx(2.0)
    assert result.distribution.probs[[1, 11]] == pytest.approx([0.9, 0.1])
    assert result.iterations == 3
    assert result.residual == 0.0
    assert not result.fallback
    assert mean(result.distribution_of(1)) == pytest.approx(10.0)
    assert mean(result.distribution_of(2)) == pytest.approx(0.0)


def test_risk_neutral_quantile(two_route_mdp: Mdp, two_route_rewards: RewardStructure) -> None:
    goal = two_route_mdp.label_mask("goal")
    result = risk_neutral_dvi(
        two_route_mdp, two_route_rewards, goal, ReprParams("quantile", 10), 1e-9
    )
    assert isinstance(result.distribution, QuantileDist)
    assert result.distribution.locations.tolist() == [1.0] * 9 + [11.0]
    assert result.policy[0] == 0


def test_distribution_of_unvisited_state(gamble_mdp: Mdp) -> None:
    rewards = RewardStructure(np.array([5, 1, 0, 0]))
    result = risk_neutral_dvi(gamble_mdp, rewards, gamble_mdp.label_mask("goal"), EXACT_GRID)
    with pytest.raises(KeyError):
        result.distribution_of(2)


def test_restricts_to_almost_sure_choices(gamble_mdp: Mdp) -> None:
    rewards = RewardStructure(np.array([5, 1, 0, 0]))
    goal = gamble_mdp.label_mask("goal")
    result = risk_neutral_dvi(gamble_mdp, rewards, goal, EXACT_GRID)
    assert result.policy[0] == 0
    assert mean(result.distribution) == pytest.approx(5.0)


def test_not_almost_sure_reachable() -> None:
    mdp = Mdp.from_choices(
        [
            [("gamble", [(1, 0.5), (2, 0.5)])],
            [("stay", [(1, 1.0)])],
            [("stay", [(2, 1.0)])],
        ],
        0,
        {"goal": [1]},
    )
    rewards = RewardStructure(np.array([1, 0, 0]))
    with pytest.raises(NotAlmostSureReachable) as exc:
        risk_neutral_dvi(mdp, rewards, mdp.label_mask("goal"), EXACT_GRID)

    assert exc.value.states == [0, 2]
    assert exc.value.exit_code == 3


def test_non_convergence(two_route_mdp: Mdp, two_route_rewards: RewardStructure) -> None:
    goal = two_route_mdp.label_mask("goal")
    with pytest.raises(NonConvergence) as exc:
        risk_neutral_dvi(
            two_route_mdp, two_route_rewards, goal, EXACT_GRID, 1e-9, max_iterations=1
        )

    assert exc.value.iterations == 1
    assert exc.value.exit_code == 4


def test_shrinking_residual_is_not_frozen(
    two_route_mdp: Mdp, two_route_rewards: RewardStructure, caplog: pytest.LogCaptureFixture
) -> None:
    goal = two_route_mdp.label_mask("goal")
    result = risk_neutral_dvi(
        two_route_mdp, two_route_rewards, goal, EXACT_GRID, 1e-9, freeze_after=1
    )
    assert not result.fallback
    assert result.iterations > 1
    assert result.policy[0] == 0
    assert mean(result.distribution) == pytest.approx(2.0)
    assert "freezing the current policy" not in caplog.text


def test_policy_freeze(caplog: pytest.LogCaptureFixture) -> None:
    # the cost 5 at the end of the chain travels back one state per sweep, so the residual
    # stays the same for three sweeps
    mdp = Mdp.from_choices(
        [
            [("chain", [(1, 1.0)]), ("direct", [(3, 1.0)])],
            [("go", [(2, 1.0)])],
            [("go", [(3, 1.0)])],
            [("stay", [(3, 1.0)])],
        ],
        0,
        {"goal": [3]},
    )
    rewards = RewardStructure(np.array([1, 8, 1, 5, 0]))
    result = risk_neutral_dvi(
        mdp, rewards, mdp.label_mask("goal"), EXACT_GRID, 1e-9, freeze_after=1
    )
    assert result.fallback
    assert result.policy[0] == 0
    assert mean(result.distribution) == pytest.approx(7.0)
    assert "freezing the current policy" in caplog.text


def test_clamp_warning(
    two_route_mdp: Mdp, two_route_rewards: RewardStructure, caplog: pytest.LogCaptureFixture
) -> None:
    goal = two_route_mdp.label_mask("goal")
    params = ReprParams("categorical", 6, 0.0, 5.0)
    result = risk_neutral_dvi(two_route_mdp, two_route_rewards, goal, params, 1e-9)
    assert result.overflow > 0
    assert "clamped onto the highest atom" in caplog.text


def test_single_action_matches_forward(
    geometric_dtmc: Dtmc, geometric_rewards: RewardStructure
) -> None:
    goal = geometric_dtmc.label_mask("goal")
    params = ReprParams("categorical", 61, 0.0, 60.0)
    result = risk_neutral_dvi(geometric_dtmc.as_mdp(), geometric_rewards, goal, params, 1e-10)
    exact = forward_distribution(geometric_dtmc, geometric_rewards, goal, 1e-12)
    approximate = result.distribution
    assert isinstance(approximate, CategoricalDist)
    assert approximate.probs[1:8] == pytest.approx(exact.distribution.probs[:7], abs=1e-8)
    assert mean(approximate) == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_risk_neutral_against_brute_force(seed: int) -> None:
    mdp, rewards = random_mdp(np.random.default_rng(seed), 5)
    goal = mdp.label_mask("goal")
    best = math.inf
    for policy in memoryless_policies(mdp):
        dtmc, state_rewards = induce_dtmc(mdp, policy, rewards, goal)
        best = min(best, mean(forward_distribution(dtmc, state_rewards, goal, 1e-10).distribution))

    params = ReprParams("categorical", 201, 0.0, 200.0)
    result = risk_neutral_dvi(mdp, rewards, goal, params, 1e-9, freeze_after=5000)
    assert mean(result.distribution) == pytest.approx(best, rel=1e-5)
    assert value_iteration(mdp, rewards, goal)[0] == pytest.approx(best, rel=1e-6)
    evaluation = evaluate_policy(mdp, result.policy, rewards, goal, 1e-10)
    assert evaluation.values["E"] == pytest.approx(best, rel=1e-6)


def test_risk_sensitive(two_route_mdp: Mdp, two_route_rewards: RewardStructure) -> None:
    goal = two_route_mdp.label_mask("goal")
    grid = SlackGrid(0.0, 20.0, 21)
    result = risk_sensitive_dvi(
        two_route_mdp, two_route_rewards, goal, 0.7, grid, EXACT_GRID, 1e-9
    )
    assert result.budget == 3.0
    assert result.initial == 3
    assert result.slack is not None
    assert result.policy[result.initial] == 1
    assert cvar(result.distribution, 0.7) == pytest.approx(3.0)
    risks = [cvar(dist, 0.7) for dist in result.budget_distributions]
    assert risks[:3] == pytest.approx([1.3 / 0.3] * 3)
    assert min(risks) == pytest.approx(3.0)

    evaluation = evaluate_policy(
        result.slack.mdp,
        result.policy,
        result.slack.rewards,
        result.slack.lift(goal),
        1e-10,
        [("CVaR", 0.7), ("E", None)],
        initial=result.initial,
        reference=result.distribution,
    )
    assert evaluation.values == {"CVaR@0.7": pytest.approx(3.0), "E": pytest.approx(3.0)}
    assert evaluation.deviations["CVaR@0.7"] == pytest.approx(0.0, abs=1e-9)
    assert evaluation.distribution.as_dict() == {3: pytest.approx(1.0)}


@pytest.mark.parametrize("seed", range(4))
def test_risk_sensitive_against_brute_force(seed: int) -> None:
    mdp, rewards = random_mdp(np.random.default_rng(seed), 5)
    # multiples of the coarsest budget stride keep every grid below exact
    rewards = RewardStructure(rewards.values * 4, rewards.name)
    goal = mdp.label_mask("goal")
    best = optimal_cvar(mdp, rewards, goal, 0.7)
    params = ReprParams("categorical", 201, 0.0, 800.0)
    gaps = []
    for n in (3, 5, 9, 17):
        result = risk_sensitive_dvi(
            mdp, rewards, goal, 0.7, SlackGrid(0.0, 8.0, n), params, 1e-10, freeze_after=5000
        )
        assert result.slack is not None
        evaluation = evaluate_policy(
            result.slack.mdp,
            result.policy,
            result.slack.rewards,
            result.slack.lift(goal),
            1e-12,
            [("CVaR", 0.7)],
            initial=result.initial,
        )
        gaps.append(evaluation.values["CVaR@0.7"] - best)

    assert min(gaps) >= -1e-6
    for coarse, fine in zip(gaps, gaps[1:]):
        assert fine <= coarse + 1e-6


def test_risk_sensitive_rejects_risk_level(
    two_route_mdp: Mdp, two_route_rewards: RewardStructure
) -> None:
    goal = two_route_mdp.label_mask("goal")
    with pytest.raises(ValueError, match="open interval"):
        risk_sensitive_dvi(
            two_route_mdp, two_route_rewards, goal, 1.0, SlackGrid(0, 20, 21), EXACT_GRID
        )


def test_value_iteration(two_route_mdp: Mdp, two_route_rewards: RewardStructure) -> None:
    result = value_iteration(
        two_route_mdp, two_route_rewards, two_route_mdp.label_mask("goal")
    )
    assert result.values.tolist() == pytest.approx([2.0, 10.0, 0.0])
    assert result[0] == pytest.approx(2.0)
    assert result.policy == Policy(np.array([0, 0, -1]))


def test_value_iteration_unvisited_states(gamble_mdp: Mdp) -> None:
    rewards = RewardStructure(np.array([5, 1, 0, 0]))
    result = value_iteration(gamble_mdp, rewards, gamble_mdp.label_mask("goal"))
    assert result[0] == pytest.approx(5.0)
    assert result[2] == math.inf


def test_evaluate_policy(two_route_mdp: Mdp, two_route_rewards: RewardStructure) -> None:
    goal = two_route_mdp.label_mask("goal")
    evaluation = evaluate_policy(
        two_route_mdp,
        Policy(np.array([0, 0, -1])),
        two_route_rewards,
        goal,
        1e-10,
        [("E", None), ("CVaR", 0.7), ("VaR", 0.95)],
        reference=SparseDist.from_mapping({1: 0.9, 10: 0.1}),
    )
    assert evaluation.values == {
        "E": pytest.approx(2.0),
        "CVaR@0.7": pytest.approx(1.3 / 0.3),
        "VaR@0.95": 11.0,
    }
    assert evaluation.deviations["E"] == pytest.approx(5.0)
    assert evaluation.distribution.as_dict() == {1: pytest.approx(0.9), 11: pytest.approx(0.1)}


@pytest.mark.parametrize(
    "approximate, exact, expected",
    [
        pytest.param(2.0, 2.0, 0.0, id="equal"),
        pytest.param(3.0, 2.0, 50.0, id="above"),
        pytest.param(1.0, 4.0, 75.0, id="below"),
        pytest.param(1.0, 0.0, math.inf, id="zero"),
        pytest.param(math.inf, 2.0, math.inf, id="infinite"),
    ],
)
def test_relative_deviation(approximate: float, exact: float, expected: float) -> None:
    assert relative_deviation(approximate, exact) == expected
