"""
Generators for the case-study MDPs.

Every generator explores the reachable state space from the initial state and returns the
MDP, its reward structure, the co-safe formula to check and a suggested upper bound for
the distribution support.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Callable, Hashable, Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from asphalt.distmc.exceptions import UnsupportedSpec
from asphalt.distmc.models import Mdp, RewardStructure

logger = logging.getLogger(__name__)

Key = Hashable
Choice = tuple[str, int, list[tuple[Key, float]]]

DIRECTIONS: dict[str, tuple[int, int]] = {
    "north": (-1, 0),
    "east": (0, 1),
    "south": (1, 0),
    "west": (0, -1),
}


@dataclass(frozen=True)
class BenchmarkSpec:
    """
    Selects a case study.

    :param name: one of ``betting``, ``deepsea``, ``obstacle``, ``energy``, ``mudnails``
    :param size: grid size ``N`` for ``obstacle`` and ``energy``
    :param seed: seed for the obstacle placement
    :param options: generator specific constants (see the generator functions)
    """

    name: str
    size: Optional[int] = None
    seed: int = 0
    options: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Benchmark:
    name: str
    mdp: Mdp
    rewards: RewardStructure
    formula: str
    vmax: float
    budget_atoms: int = 101


def explore(
    initial: Key,
    successors: Callable[[Key], list[Choice]],
    labels: Callable[[Key], Iterable[str]],
    reward_name: str = "cost",
) -> tuple[Mdp, RewardStructure, list[Key]]:
    """
    Build an MDP by breadth-first exploration.

    :param initial: the initial state key (labeled ``init``)
    :param successors: maps a state key to its ``(action, reward, [(key, prob), ...])``
        choices; duplicate successor keys within a choice are merged
    :param labels: maps a state key to its labels
    :return: the MDP, its rewards and the state keys in index order

    """
    index: dict[Key, int] = {initial: 0}
    keys: list[Key] = [initial]
    choices: list[list[tuple[str, list[tuple[int, float]]]]] = []
    rewards: list[int] = []
    label_states: dict[str, list[int]] = {"init": [0]}
    queue = deque([initial])
    while queue:
        key = queue.popleft()
        for name in labels(key):
            label_states.setdefault(name, []).append(index[key])

        state_choices = []
        for action, reward, outcomes in successors(key):
            merged: dict[int, float] = {}
            for successor, prob in outcomes:
                if successor not in index:
                    index[successor] = len(keys)
                    keys.append(successor)
                    queue.append(successor)

                target = index[successor]
                merged[target] = merged.get(target, 0.0) + prob

            state_choices.append((action, list(merged.items())))
            rewards.append(reward)

        choices.append(state_choices)

    mdp = Mdp.from_choices(choices, 0, label_states)
    return mdp, RewardStructure(np.array(rewards, dtype=np.int64), reward_name), keys


def _option(options: Mapping[str, Any], name: str, default: Any) -> Any:
    return options.get(name, default)


def _check_options(spec: BenchmarkSpec, known: set[str]) -> None:
    unknown = set(spec.options) - known
    if unknown:
        raise UnsupportedSpec(
            f"unknown option(s) for {spec.name}: {', '.join(sorted(unknown))}"
        )


def _grid_size(spec: BenchmarkSpec, default: int) -> int:
    size = spec.size if spec.size is not None else default
    if size < 2:
        raise UnsupportedSpec(f"grid size must be at least 2, got {size}")

    return size


def betting(spec: BenchmarkSpec) -> Benchmark:
    """
    A gambler starts with 5 units of money and plays a game of 10 stages. In each stage
    but the last one the gambler bets ``0 <= λ <= min(5, money)``: with probability 0.7
    the bet is won (``+λ``), with 0.25 lost (``-λ``) and with 0.05 the jackpot pays
    ``+10λ``. Money is capped at 100. In the last stage the gambler cashes out, paying
    ``100 - money``, so the default game has 9 bets.

    Options: ``stages`` (10), ``initial_money`` (5), ``max_bet`` (5), ``cap`` (100).
    """
    _check_options(spec, {"stages", "initial_money", "max_bet", "cap"})
    stages = int(_option(spec.options, "stages", 10))
    max_bet = int(_option(spec.options, "max_bet", 5))
    cap = int(_option(spec.options, "cap", 100))
    if stages < 1:
        raise UnsupportedSpec(f"the game needs at least one stage, got {stages}")

    initial = (int(_option(spec.options, "initial_money", 5)), 1)

    def successors(key: Key) -> list[Choice]:
        if key == "done":
            return [("stay", 0, [("done", 1.0)])]

        money, stage = key  # type: ignore[misc]
        if stage == stages:
            return [("cash", cap - money, [("done", 1.0)])]

        return [
            (
                f"bet{bet}",
                0,
                [
                    ((min(money + bet, cap), stage + 1), 0.7),
                    ((money - bet, stage + 1), 0.25),
                    ((min(money + 10 * bet, cap), stage + 1), 0.05),
                ],
            )
            for bet in range(min(max_bet, money) + 1)
        ]

    def labels(key: Key) -> list[str]:
        return ["goal"] if key == "done" else []

    mdp, rewards, _ = explore(initial, successors, labels)
    return Benchmark("betting", mdp, rewards, "F goal", float(cap))


#: treasure depth (row) and value per column of the classic map
DEEP_SEA_TREASURES = ((1, 1), (2, 2), (3, 3), (4, 5), (4, 8), (4, 16), (7, 24), (7, 50),
                      (9, 74), (10, 124))


def deepsea(spec: BenchmarkSpec) -> Benchmark:
    """
    A submarine starting at the surface in the top-left corner searches for treasure on
    the classic 11 × 10 map. A move goes in the intended direction with probability 0.6
    and in each perpendicular direction with 0.2 (moves into rock or off the map stay in
    place). The trip ends on a treasure or after 15 steps; it costs 5 per step plus the
    difference between the largest treasure and the one collected.
    The suggested ``vmax`` is 800.

    Options: ``horizon`` (15), ``step_cost`` (5).
    """
    _check_options(spec, {"horizon", "step_cost"})
    horizon = int(_option(spec.options, "horizon", 15))
    step_cost = int(_option(spec.options, "step_cost", 5))
    depth = [row for row, _ in DEEP_SEA_TREASURES]
    value = {(row, col): v for col, (row, v) in enumerate(DEEP_SEA_TREASURES)}
    best = max(value.values())

    def valid(row: int, col: int) -> bool:
        return 0 <= col < len(depth) and 0 <= row <= depth[col]

    def move(row: int, col: int, direction: str) -> tuple[int, int]:
        d_row, d_col = DIRECTIONS[direction]
        return (row + d_row, col + d_col) if valid(row + d_row, col + d_col) else (row, col)

    perpendicular = {
        "north": ("east", "west"),
        "south": ("east", "west"),
        "east": ("north", "south"),
        "west": ("north", "south"),
    }

    def successors(key: Key) -> list[Choice]:
        if key == "done":
            return [("stay", 0, [("done", 1.0)])]

        row, col, steps = key  # type: ignore[misc]
        if (row, col) in value or steps == horizon:
            return [("surface", best - value.get((row, col), 0), [("done", 1.0)])]

        result = []
        for direction, (left, right) in perpendicular.items():
            outcomes = [
                ((*move(row, col, direction), steps + 1), 0.6),
                ((*move(row, col, left), steps + 1), 0.2),
                ((*move(row, col, right), steps + 1), 0.2),
            ]
            result.append((direction, step_cost, outcomes))

        return result

    def labels(key: Key) -> list[str]:
        if key == "done":
            return ["goal"]

        return ["treasure"] if key[:2] in value else []  # type: ignore[index]

    mdp, rewards, _ = explore((0, 0, 0), successors, labels)
    return Benchmark("deepsea", mdp, rewards, "F goal", 800.0)


def _grid_move(size: int, row: int, col: int, direction: str) -> tuple[int, int]:
    d_row, d_col = DIRECTIONS[direction]
    new_row, new_col = row + d_row, col + d_col
    if 0 <= new_row < size and 0 <= new_col < size:
        return new_row, new_col

    return row, col


def _slippery_outcomes(
    size: int, row: int, col: int, direction: str, intended: float
) -> list[tuple[tuple[int, int], float]]:
    others = [other for other in DIRECTIONS if other != direction]
    slip = (1.0 - intended) / len(others)
    return [(_grid_move(size, row, col, direction), intended)] + [
        (_grid_move(size, row, col, other), slip) for other in others
    ]


def obstacle(spec: BenchmarkSpec) -> Benchmark:
    """
    A robot crosses an ``N × N`` grid from the top-left to the bottom-right corner. Moves
    succeed with probability 0.9; otherwise the robot slips in one of the other three
    directions. Every step costs 1, leaving an obstacle cell costs an extra delay.
    The suggested ``vmax`` is ``4N`` (600 for ``N = 150``).

    Options: ``obstacles`` (number of obstacle cells, default ``N²/10``), ``delay`` (10),
    ``intended`` (0.9).
    """
    _check_options(spec, {"obstacles", "delay", "intended"})
    size = _grid_size(spec, 10)
    delay = int(_option(spec.options, "delay", 10))
    intended = float(_option(spec.options, "intended", 0.9))
    count = int(_option(spec.options, "obstacles", size * size // 10))
    goal = (size - 1, size - 1)
    free_cells = [
        cell for cell in range(size * size) if cell not in (0, size * size - 1)
    ]
    rng = np.random.default_rng(spec.seed)
    chosen = rng.choice(len(free_cells), size=min(count, len(free_cells)), replace=False)
    obstacles = {divmod(free_cells[i], size) for i in chosen.tolist()}

    def successors(key: Key) -> list[Choice]:
        if key == goal:
            return [("stay", 0, [(goal, 1.0)])]

        row, col = key  # type: ignore[misc]
        cost = 1 + (delay if key in obstacles else 0)
        return [
            (direction, cost, _slippery_outcomes(size, row, col, direction, intended))
            for direction in DIRECTIONS
        ]

    def labels(key: Key) -> list[str]:
        if key == goal:
            return ["goal"]

        return ["obstacle"] if key in obstacles else []

    mdp, rewards, _ = explore((0, 0), successors, labels)
    logger.debug("Placed %d obstacles with seed %d", len(obstacles), spec.seed)
    return Benchmark("obstacle", mdp, rewards, "F goal", 4.0 * size)


def energy(spec: BenchmarkSpec) -> Benchmark:
    """
    A robot on an ``N × N`` grid has to visit three waypoints (the other three corners).
    Moves succeed with probability 0.7, otherwise the robot slips in one of the other
    directions. Every move costs 1 and drains one unit of battery; the charging station
    in the top-left corner refills it. A robot running out of battery elsewhere is
    transported back to the station, which costs a delay.
    The suggested ``vmax`` is ``100N/3`` (500 for ``N = 15``).

    Options: ``battery`` (20), ``delay`` (10), ``intended`` (0.7).
    """
    _check_options(spec, {"battery", "delay", "intended"})
    size = _grid_size(spec, 10)
    capacity = int(_option(spec.options, "battery", 20))
    delay = int(_option(spec.options, "delay", 10))
    intended = float(_option(spec.options, "intended", 0.7))
    station = (0, 0)
    waypoints = {(0, size - 1): "w1", (size - 1, size - 1): "w2", (size - 1, 0): "w3"}

    def successors(key: Key) -> list[Choice]:
        row, col, battery = key  # type: ignore[misc]
        if battery == 0:
            return [("transport", delay, [((*station, capacity), 1.0)])]

        result = []
        for direction in DIRECTIONS:
            outcomes = []
            for cell, prob in _slippery_outcomes(size, row, col, direction, intended):
                remaining = capacity if cell == station else battery - 1
                outcomes.append(((*cell, remaining), prob))

            result.append((direction, 1, outcomes))

        return result

    def labels(key: Key) -> list[str]:
        cell = key[:2]  # type: ignore[index]
        names = []
        if cell in waypoints:
            names.append(waypoints[cell])
        if cell == station:
            names.append("station")

        return names

    mdp, rewards, _ = explore((*station, capacity), successors, labels)
    return Benchmark(
        "energy", mdp, rewards, "(F w1) & (F w2) & (F w3)", 100.0 * size / 3, 51
    )


#: the mud & nails map: S start, N nails, M mud, O obstacle, 1/2 the two goals, . free
MUD_NAILS_MAP = (
    "NNNN...",
    "SOOOO12",
    "MMMM...",
)


def mudnails(spec: BenchmarkSpec) -> Benchmark:
    """
    The mud & nails example: starting at ``S`` the robot must visit ``g1`` and then
    ``g2``. Moves are deterministic. Leaving a free cell costs 1, mud 3 and an obstacle
    35; leaving a nails cell costs 1 and, with probability 0.2, a flat tyre costing 5 more.

    Options: ``mud_cost`` (3), ``obstacle_cost`` (35), ``nail_cost`` (5),
    ``nail_probability`` (0.2).
    """
    _check_options(spec, {"mud_cost", "obstacle_cost", "nail_cost", "nail_probability"})
    mud_cost = int(_option(spec.options, "mud_cost", 3))
    obstacle_cost = int(_option(spec.options, "obstacle_cost", 35))
    nail_cost = int(_option(spec.options, "nail_cost", 5))
    nail_probability = float(_option(spec.options, "nail_probability", 0.2))
    rows, cols = len(MUD_NAILS_MAP), len(MUD_NAILS_MAP[0])
    cells = {(r, c): MUD_NAILS_MAP[r][c] for r in range(rows) for c in range(cols)}
    start = next(cell for cell, kind in cells.items() if kind == "S")
    names = {"N": "nails", "M": "mud", "O": "obstacle", "1": "g1", "2": "g2"}
    costs = {"M": mud_cost, "O": obstacle_cost}

    def successors(key: Key) -> list[Choice]:
        if key[0] == "flat":  # type: ignore[index]
            return [("repair", nail_cost, [(key[1], 1.0)])]  # type: ignore[index]

        row, col = key[1]  # type: ignore[index]
        kind = cells[(row, col)]
        result = []
        for direction, (d_row, d_col) in DIRECTIONS.items():
            target = (row + d_row, col + d_col)
            if target not in cells:
                continue

            if kind == "N":
                outcomes = [
                    (("at", target), 1.0 - nail_probability),
                    (("flat", target), nail_probability),
                ]
            else:
                outcomes = [(("at", target), 1.0)]

            result.append((direction, costs.get(kind, 1), outcomes))

        return result

    def labels(key: Key) -> list[str]:
        if key[0] == "flat":  # type: ignore[index]
            return []

        kind = cells[key[1]]  # type: ignore[index]
        return [names[kind]] if kind in names else []

    mdp, rewards, _ = explore(("at", start), successors, labels)
    return Benchmark("mudnails", mdp, rewards, "F (g1 & F g2)", 50.0)


GENERATORS: dict[str, Callable[[BenchmarkSpec], Benchmark]] = {
    "betting": betting,
    "deepsea": deepsea,
    "obstacle": obstacle,
    "energy": energy,
    "mudnails": mudnails,
}


def generate(spec: BenchmarkSpec) -> Benchmark:
    """
    Generate a case-study MDP.

    :raises UnsupportedSpec: for unknown benchmark names, options or invalid sizes

    """
    try:
        generator = GENERATORS[spec.name]
    except KeyError:
        raise UnsupportedSpec(
            f"unknown benchmark {spec.name!r}; choose from {', '.join(GENERATORS)}"
        ) from None

    benchmark = generator(spec)
    logger.info(
        "Generated %s with %d states and %d choices",
        spec.name,
        benchmark.mdp.num_states,
        benchmark.mdp.num_choices,
    )
    return benchmark
