from __future__ import annotations

import numpy as np
import pytest

from asphalt.distmc.exceptions import UndefinedChoice
from asphalt.distmc.models import (
    Dtmc,
    Mdp,
    Policy,
    RewardStructure,
    almost_sure_reach_exists,
    bsccs,
    induce_dtmc,
    infinite_reward_states,
    reachable,
    validate,
)


def test_dtmc_from_rows(geometric_dtmc: Dtmc) -> None:
    assert geometric_dtmc.num_states == 2
    successors, probs = geometric_dtmc.successors(0)
    assert successors.tolist() == [0, 1]
    assert probs.tolist() == [0.5, 0.5]
    assert geometric_dtmc.labels_of(1) == frozenset({"goal"})
    assert not geometric_dtmc.label_mask("missing").any()
    assert validate(geometric_dtmc) == []


def test_mdp_from_choices(two_route_mdp: Mdp) -> None:
    assert two_route_mdp.num_states == 3
    assert two_route_mdp.num_choices == 4
    assert two_route_mdp.row_groups.tolist() == [0, 2, 3, 4]
    assert two_route_mdp.choice_state.tolist() == [0, 0, 1, 2]
    assert list(two_route_mdp.choices(0)) == [0, 1]
    assert two_route_mdp.num_actions(0) == 2
    assert two_route_mdp.actions == ("risky", "safe", "detour", "stay")
    assert validate(two_route_mdp) == []


def test_as_mdp(geometric_dtmc: Dtmc) -> None:
    mdp = geometric_dtmc.as_mdp()
    assert mdp.num_choices == mdp.num_states == 2
    assert mdp.actions == ("step", "step")
    assert mdp.initial == geometric_dtmc.initial
    assert np.array_equal(mdp.label_mask("goal"), geometric_dtmc.label_mask("goal"))


def test_equality_ignores_empty_labels(geometric_dtmc: Dtmc) -> None:
    same = Dtmc.from_rows(
        [[(0, 0.5), (1, 0.5)], [(1, 1.0)]], 0, {"goal": [1], "unused": []}
    )
    assert same == geometric_dtmc
    assert Dtmc.from_rows([[(1, 1.0)], [(1, 1.0)]], 0, {"goal": [1]}) != geometric_dtmc


@pytest.mark.parametrize(
    "rows, initial, message",
    [
        pytest.param([[(0, 0.5), (1, 0.4)], [(1, 1.0)]], 0, "row-sum", id="row_sum"),
        pytest.param([[(0, 0.0), (1, 1.0)], [(1, 1.0)]], 0, "zero-probability", id="zero"),
        pytest.param([[(1, 1.0)], [(1, 1.0)]], 5, "initial state 5", id="initial"),
    ],
)
def test_validate_dtmc(rows: list[list[tuple[int, float]]], initial: int, message: str) -> None:
    violations = validate(Dtmc.from_rows(rows, initial))
    assert any(message in violation for violation in violations)


def test_validate_mdp_without_actions() -> None:
    mdp = Mdp.from_choices([[("go", [(1, 1.0)])], []])
    assert "state 1: no-actions (A(s) is empty)" in validate(mdp)


def test_validate_duplicate_actions() -> None:
    mdp = Mdp.from_choices([[("go", [(0, 1.0)]), ("go", [(0, 1.0)])]])
    assert any("duplicate-action" in violation for violation in validate(mdp))


def test_validate_rewards(two_route_mdp: Mdp) -> None:
    short = RewardStructure(np.array([1, 2]), "short")
    assert validate(two_route_mdp, [short]) == [
        "reward structure 'short' has 2 entries, expected 4"
    ]


def test_non_integer_rewards() -> None:
    with pytest.raises(ValueError, match="non-integer"):
        RewardStructure(np.array([0.5, 1.0]))


def test_reachable() -> None:
    dtmc = Dtmc.from_rows([[(1, 1.0)], [(1, 1.0)], [(0, 1.0)]])
    assert reachable(dtmc).tolist() == [True, True, False]
    assert reachable(dtmc, 2).tolist() == [True, True, True]


def test_bsccs_and_infinite_states() -> None:
    # 0 splits into the goal (1) and a goal-free cycle (2 <-> 3)
    dtmc = Dtmc.from_rows(
        [[(1, 0.5), (2, 0.5)], [(1, 1.0)], [(3, 1.0)], [(2, 1.0)]], 0, {"goal": [1]}
    )
    components = bsccs(dtmc)
    assert [np.flatnonzero(component).tolist() for component in components] == [[1], [2, 3]]
    infinite = infinite_reward_states(dtmc, dtmc.label_mask("goal"))
    assert infinite.tolist() == [False, False, True, True]


def test_almost_sure_reach_exists() -> None:
    # state 0 can go to the goal or gamble on a trap, state 2 is the trap
    mdp = Mdp.from_choices(
        [
            [("safe", [(1, 1.0)]), ("gamble", [(1, 0.5), (2, 0.5)])],
            [("stay", [(1, 1.0)])],
            [("stay", [(2, 1.0)])],
        ],
        0,
        {"goal": [1]},
    )
    assert almost_sure_reach_exists(mdp, mdp.label_mask("goal")).tolist() == [
        True,
        True,
        False,
    ]


def test_policy_global_choices(two_route_mdp: Mdp) -> None:
    policy = Policy(np.array([1, 0, -1]))
    assert policy[0] == 1
    assert len(policy) == 3
    assert policy.global_choices(two_route_mdp).tolist() == [1, 2, -1]
    assert policy == Policy(np.array([1, 0, -1]))


def test_induce_dtmc(two_route_mdp: Mdp, two_route_rewards: RewardStructure) -> None:
    goal = two_route_mdp.label_mask("goal")
    dtmc, rewards = induce_dtmc(
        two_route_mdp, Policy(np.array([0, 0, -1])), two_route_rewards, goal
    )
    assert dtmc.successors(0)[0].tolist() == [1, 2]
    assert dtmc.successors(2)[0].tolist() == [2]
    assert rewards.values.tolist() == [1, 10, 0]
    assert rewards.name == "cost"


def test_induce_dtmc_undefined_choice(
    two_route_mdp: Mdp, two_route_rewards: RewardStructure
) -> None:
    goal = two_route_mdp.label_mask("goal")
    with pytest.raises(UndefinedChoice) as exc:
        induce_dtmc(two_route_mdp, Policy(np.array([0, -1, -1])), two_route_rewards, goal)

    assert exc.value.states == [1]
    assert exc.value.exit_code == 3
