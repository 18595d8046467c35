from __future__ import annotations

from typing import Any

import numpy as np
import pytest

from asphalt.distmc.benchmarks import BenchmarkSpec, explore, generate
from asphalt.distmc.dvi import value_iteration
from asphalt.distmc.exceptions import UnsupportedSpec
from asphalt.distmc.ltl import atoms, parse_cosafe
from asphalt.distmc.models import validate


@pytest.mark.parametrize(
    "spec",
    [
        pytest.param(BenchmarkSpec("betting", options={"stages": 3}), id="betting"),
        pytest.param(BenchmarkSpec("deepsea", options={"horizon": 4}), id="deepsea"),
        pytest.param(BenchmarkSpec("obstacle", size=4), id="obstacle"),
        pytest.param(BenchmarkSpec("energy", size=3, options={"battery": 5}), id="energy"),
        pytest.param(BenchmarkSpec("mudnails"), id="mudnails"),
    ],
)
def test_generated_models_are_valid(spec: BenchmarkSpec) -> None:
    benchmark = generate(spec)
    mdp = benchmark.mdp
    assert benchmark.name == spec.name
    assert validate(mdp, [benchmark.rewards]) == []
    assert mdp.label_mask("init").tolist() == [True] + [False] * (mdp.num_states - 1)
    assert (benchmark.rewards.values >= 0).all()
    assert atoms(parse_cosafe(benchmark.formula)) <= set(mdp.labels)
    assert benchmark.vmax > 0


def test_betting_single_bet() -> None:
    benchmark = generate(BenchmarkSpec("betting", options={"stages": 2}))
    mdp = benchmark.mdp
    assert mdp.num_states == 18
    assert mdp.num_choices == 23
    assert [mdp.actions[c] for c in mdp.choices(0)] == [f"bet{bet}" for bet in range(6)]

    # betting everything maximizes the expected money: 5 + 5 * (0.7 - 0.25 + 0.5)
    result = value_iteration(mdp, benchmark.rewards, mdp.label_mask("goal"))
    assert result[0] == pytest.approx(100 - 9.75)
    assert result.policy[0] == 5


def test_betting_cash_out_only() -> None:
    benchmark = generate(BenchmarkSpec("betting", options={"stages": 1}))
    mdp = benchmark.mdp
    assert [mdp.actions[c] for c in mdp.choices(0)] == ["cash"]
    result = value_iteration(mdp, benchmark.rewards, mdp.label_mask("goal"))
    assert result[0] == pytest.approx(95.0)


def test_betting_expected_cost() -> None:
    benchmark = generate(BenchmarkSpec("betting"))
    mdp = benchmark.mdp
    assert benchmark.vmax == 100.0
    result = value_iteration(mdp, benchmark.rewards, mdp.label_mask("goal"))
    assert result[0] == pytest.approx(61.9, abs=0.05)


def test_deepsea() -> None:
    benchmark = generate(BenchmarkSpec("deepsea"))
    mdp = benchmark.mdp
    assert [mdp.actions[c] for c in mdp.choices(0)] == ["north", "south", "east", "west"]
    assert benchmark.vmax == 800.0
    assert benchmark.rewards.values[0] == 5
    assert mdp.label_mask("treasure").any()


def test_deepsea_expected_cost() -> None:
    # no trip costs more than 5 * 15 + 124
    benchmark = generate(BenchmarkSpec("deepsea"))
    mdp = benchmark.mdp
    result = value_iteration(mdp, benchmark.rewards, mdp.label_mask("goal"))
    assert result[0] == pytest.approx(133.09, abs=0.01)


@pytest.mark.parametrize(
    "spec, vmax",
    [
        pytest.param(BenchmarkSpec("obstacle", size=15), 60.0, id="obstacle"),
        pytest.param(BenchmarkSpec("energy", size=15), 500.0, id="energy"),
        pytest.param(BenchmarkSpec("energy", size=6), 200.0, id="energy_small"),
    ],
)
def test_grid_vmax(spec: BenchmarkSpec, vmax: float) -> None:
    assert generate(spec).vmax == pytest.approx(vmax)


def test_obstacle_placement_is_seeded() -> None:
    first = generate(BenchmarkSpec("obstacle", size=5, seed=3))
    second = generate(BenchmarkSpec("obstacle", size=5, seed=3))
    assert first.mdp == second.mdp
    assert first.mdp.num_states == 25
    assert np.count_nonzero(first.mdp.label_mask("obstacle")) == 2
    assert set(first.rewards.values.tolist()) <= {0, 1, 11}


def test_energy() -> None:
    benchmark = generate(BenchmarkSpec("energy", size=3, options={"battery": 5}))
    assert benchmark.formula == "(F w1) & (F w2) & (F w3)"
    assert benchmark.budget_atoms == 51
    for name in ("w1", "w2", "w3", "station"):
        assert benchmark.mdp.label_mask(name).any()


def test_mudnails() -> None:
    benchmark = generate(BenchmarkSpec("mudnails"))
    mdp = benchmark.mdp
    # 21 cells and 9 cells a flat tyre can happen on the way into
    assert mdp.num_states == 30
    assert benchmark.formula == "F (g1 & F g2)"
    assert benchmark.vmax == 50.0
    assert set(benchmark.rewards.values.tolist()) == {1, 3, 5, 35}


@pytest.mark.parametrize(
    "spec, message",
    [
        pytest.param(BenchmarkSpec("roulette"), "unknown benchmark 'roulette'", id="name"),
        pytest.param(
            BenchmarkSpec("betting", options={"stake": 1}),
            "unknown option\\(s\\) for betting: stake",
            id="option",
        ),
        pytest.param(BenchmarkSpec("obstacle", size=1), "at least 2, got 1", id="size"),
        pytest.param(
            BenchmarkSpec("betting", options={"stages": 0}),
            "at least one stage, got 0",
            id="stages",
        ),
    ],
)
def test_unsupported_spec(spec: BenchmarkSpec, message: str) -> None:
    with pytest.raises(UnsupportedSpec, match=message) as exc:
        generate(spec)

    assert exc.value.exit_code == 2


def test_explore_merges_successors() -> None:
    def successors(key: Any) -> list[tuple[str, int, list[tuple[Any, float]]]]:
        if key == "end":
            return [("stay", 0, [("end", 1.0)])]

        return [("go", 2, [("end", 0.25), ("end", 0.5), ("start", 0.25)])]

    mdp, rewards, keys = explore(
        "start", successors, lambda key: ["goal"] if key == "end" else [], "time"
    )
    assert keys == ["start", "end"]
    assert sorted(mdp.matrix.data[: mdp.matrix.indptr[1]].tolist()) == [0.25, 0.75]
    assert rewards.values.tolist() == [2, 0]
    assert rewards.name == "time"
    assert mdp.labels_of(1) == frozenset({"goal"})
