"""
Sparse explicit-state models (DTMCs and MDPs), reward structures, memoryless policies
and the graph analyses the checking algorithms rely on.

Transition matrices are stored as :class:`scipy.sparse.csr_array` instances. For MDPs the
matrix has one row per *choice* (state/action pair) and ``row_groups[s]:row_groups[s + 1]``
is the range of choices belonging to state ``s``, in file/generator order. The position of a
choice within that range is its *action index*.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import numpy.typing as npt
from scipy.sparse import csr_array
from scipy.sparse.csgraph import breadth_first_order, connected_components

from asphalt.distmc.exceptions import UndefinedChoice

logger = logging.getLogger(__name__)

#: tolerance used when checking that probability rows sum to one
ROW_SUM_TOLERANCE = 1e-9

TargetSet = npt.NDArray[np.bool_]
Labels = Mapping[str, npt.NDArray[np.bool_]]


def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _label_masks(
    labels: Mapping[str, Iterable[int] | np.ndarray], num_states: int
) -> dict[str, np.ndarray]:
    masks: dict[str, np.ndarray] = {}
    for name, states in labels.items():
        if isinstance(states, np.ndarray) and states.dtype == np.bool_:
            mask = states.copy()
        else:
            mask = np.zeros(num_states, dtype=np.bool_)
            mask[np.fromiter(states, dtype=np.int64)] = True

        masks[name] = _freeze(mask)

    return masks


def _build_matrix(
    rows: Sequence[Sequence[tuple[int, float]]], num_columns: int
) -> csr_array:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(row) for row in rows])
    indices = np.fromiter(
        (dst for row in rows for dst, _ in row), dtype=np.int64, count=indptr[-1]
    )
    data = np.fromiter(
        (prob for row in rows for _, prob in row), dtype=np.float64, count=indptr[-1]
    )
    return csr_array((data, indices, indptr), shape=(len(rows), num_columns))


def _same_matrix(a: csr_array, b: csr_array) -> bool:
    if a.shape != b.shape:
        return False

    a = a.copy()
    b = b.copy()
    a.sort_indices()
    b.sort_indices()
    return (
        np.array_equal(a.indptr, b.indptr)
        and np.array_equal(a.indices, b.indices)
        and np.array_equal(a.data, b.data)
    )


def _same_labels(a: Labels, b: Labels) -> bool:
    nonempty_a = {name for name, mask in a.items() if mask.any()}
    nonempty_b = {name for name, mask in b.items() if mask.any()}
    return nonempty_a == nonempty_b and all(
        np.array_equal(a[name], b[name]) for name in nonempty_a
    )


@dataclass(frozen=True, eq=False)
class Dtmc:
    """
    A discrete-time Markov chain.

    :param matrix: square transition matrix (row = source state)
    :param initial: index of the initial state
    :param labels: mapping of atomic proposition name to a boolean state mask
    """

    matrix: csr_array
    initial: int
    labels: Labels = field(default_factory=dict)

    def __post_init__(self) -> None:
        matrix = csr_array(self.matrix, dtype=np.float64, copy=True)
        matrix.sort_indices()
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(
            self, "labels", _label_masks(self.labels, self.matrix.shape[0])
        )

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[Sequence[tuple[int, float]]],
        initial: int = 0,
        labels: Mapping[str, Iterable[int] | np.ndarray] | None = None,
    ) -> Dtmc:
        """
        Build a DTMC from per-state lists of ``(successor, probability)`` pairs.

        Entries are stored as given (no merging, no renormalization); use :func:`validate`
        to check them.
        """
        return cls(_build_matrix(rows, len(rows)), initial, labels or {})

    @property
    def num_states(self) -> int:
        return int(self.matrix.shape[0])

    def successors(self, state: int) -> tuple[np.ndarray, np.ndarray]:
        start, end = self.matrix.indptr[state], self.matrix.indptr[state + 1]
        return self.matrix.indices[start:end], self.matrix.data[start:end]

    def labels_of(self, state: int) -> frozenset[str]:
        return frozenset(name for name, mask in self.labels.items() if mask[state])

    def label_mask(self, name: str) -> np.ndarray:
        try:
            return self.labels[name]
        except KeyError:
            return np.zeros(self.num_states, dtype=np.bool_)

    def as_mdp(self, action: str = "step") -> Mdp:
        """Return this chain as an MDP with a single action per state."""
        return Mdp(
            self.matrix,
            np.arange(self.num_states + 1, dtype=np.int64),
            (action,) * self.num_states,
            self.initial,
            self.labels,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dtmc):
            return NotImplemented

        return (
            self.initial == other.initial
            and _same_matrix(self.matrix, other.matrix)
            and _same_labels(self.labels, other.labels)
        )


@dataclass(frozen=True, eq=False)
class Mdp:
    """
    A Markov decision process in choice-row form.

    :param matrix: ``num_choices × num_states`` transition matrix
    :param row_groups: choice offsets per state (length ``num_states + 1``)
    :param actions: action label of each choice
    :param initial: index of the initial state
    :param labels: mapping of atomic proposition name to a boolean state mask
    """

    matrix: csr_array
    row_groups: np.ndarray
    actions: tuple[str, ...]
    initial: int
    labels: Labels = field(default_factory=dict)

    def __post_init__(self) -> None:
        matrix = csr_array(self.matrix, dtype=np.float64, copy=True)
        matrix.sort_indices()
        object.__setattr__(self, "matrix", matrix)
        row_groups = np.asarray(self.row_groups, dtype=np.int64).copy()
        object.__setattr__(self, "row_groups", _freeze(row_groups))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(
            self, "labels", _label_masks(self.labels, self.matrix.shape[1])
        )
        choice_state = np.repeat(
            np.arange(len(row_groups) - 1, dtype=np.int64), np.diff(row_groups)
        )
        object.__setattr__(self, "_choice_state", _freeze(choice_state))

    @classmethod
    def from_choices(
        cls,
        choices: Sequence[Sequence[tuple[str, Sequence[tuple[int, float]]]]],
        initial: int = 0,
        labels: Mapping[str, Iterable[int] | np.ndarray] | None = None,
    ) -> Mdp:
        """
        Build an MDP from per-state lists of ``(action, [(successor, probability), ...])``.
        """
        rows = [row for state_choices in choices for _, row in state_choices]
        actions = [action for state_choices in choices for action, _ in state_choices]
        row_groups = np.zeros(len(choices) + 1, dtype=np.int64)
        row_groups[1:] = np.cumsum([len(state_choices) for state_choices in choices])
        return cls(
            _build_matrix(rows, len(choices)),
            row_groups,
            tuple(actions),
            initial,
            labels or {},
        )

    @property
    def num_states(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def num_choices(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def choice_state(self) -> np.ndarray:
        """The owning state of every choice."""
        return self._choice_state  # type: ignore[attr-defined,no-any-return]

    def choices(self, state: int) -> range:
        return range(int(self.row_groups[state]), int(self.row_groups[state + 1]))

    def num_actions(self, state: int) -> int:
        return int(self.row_groups[state + 1] - self.row_groups[state])

    def successors(self, choice: int) -> tuple[np.ndarray, np.ndarray]:
        start, end = self.matrix.indptr[choice], self.matrix.indptr[choice + 1]
        return self.matrix.indices[start:end], self.matrix.data[start:end]

    def labels_of(self, state: int) -> frozenset[str]:
        return frozenset(name for name, mask in self.labels.items() if mask[state])

    def label_mask(self, name: str) -> np.ndarray:
        try:
            return self.labels[name]
        except KeyError:
            return np.zeros(self.num_states, dtype=np.bool_)

    def state_graph(self) -> csr_array:
        """Return the ``num_states × num_states`` graph of all available moves."""
        selector = csr_array(
            (
                np.ones(self.num_choices),
                (self.choice_state, np.arange(self.num_choices)),
            ),
            shape=(self.num_states, self.num_choices),
        )
        return csr_array(selector @ self.matrix)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mdp):
            return NotImplemented

        return (
            self.initial == other.initial
            and np.array_equal(self.row_groups, other.row_groups)
            and self.actions == other.actions
            and _same_matrix(self.matrix, other.matrix)
            and _same_labels(self.labels, other.labels)
        )


Model = Union[Dtmc, Mdp]


@dataclass(frozen=True, eq=False)
class RewardStructure:
    """
    Nonnegative integer rewards, per state for a DTMC and per choice for an MDP.

    Rational rewards must be scaled to integers by the user (multiply every value by the
    least common denominator and divide the resulting statistics by it).
    """

    values: np.ndarray
    name: str = "default"

    def __post_init__(self) -> None:
        values = np.asarray(self.values)
        if values.size and not np.all(np.equal(np.mod(values, 1), 0)):
            raise ValueError(f"reward structure {self.name!r} has non-integer values")

        object.__setattr__(self, "values", _freeze(values.astype(np.int64)))

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RewardStructure):
            return NotImplemented

        return self.name == other.name and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class Policy:
    """
    A memoryless policy: the chosen action index for every state, or ``-1`` where the
    policy is undefined.
    """

    choices: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "choices", _freeze(np.asarray(self.choices, dtype=np.int64).copy())
        )

    def __getitem__(self, state: int) -> int:
        return int(self.choices[state])

    def __len__(self) -> int:
        return len(self.choices)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Policy):
            return NotImplemented

        return np.array_equal(self.choices, other.choices)

    def global_choices(self, mdp: Mdp) -> np.ndarray:
        """Return the choice row of each state (``-1`` where undefined)."""
        return np.where(self.choices >= 0, mdp.row_groups[:-1] + self.choices, -1)


def validate(
    model: Model, rewards: Iterable[RewardStructure] = ()
) -> list[str]:
    """
    Check the structural invariants of a model (and optionally its reward structures).

    :return: a list of human readable violations (empty if the model is valid)

    """
    violations: list[str] = []
    matrix = model.matrix
    num_states = model.num_states
    if not 0 <= model.initial < num_states:
        violations.append(f"initial state {model.initial} out of range [0, {num_states})")

    if isinstance(model, Dtmc):
        if matrix.shape[0] != matrix.shape[1]:
            violations.append(f"transition matrix is not square: {matrix.shape}")

        row_names = [f"state {s}" for s in range(matrix.shape[0])]
    else:
        row_names = [
            f"state {s} action {model.actions[c]!r}"
            for s in range(num_states)
            for c in model.choices(s)
        ]
        if len(model.actions) != matrix.shape[0]:
            violations.append(
                f"{len(model.actions)} action labels for {matrix.shape[0]} choices"
            )

        for state in np.flatnonzero(np.diff(model.row_groups) == 0):
            violations.append(f"state {state}: no-actions (A(s) is empty)")

        for state in range(num_states):
            labels = [model.actions[c] for c in model.choices(state)]
            if len(set(labels)) != len(labels):
                violations.append(f"state {state}: duplicate-action labels {labels}")

    entry_rows = np.repeat(np.arange(matrix.shape[0]), np.diff(matrix.indptr))
    if matrix.nnz and (matrix.indices.min() < 0 or matrix.indices.max() >= num_states):
        violations.append("successor state out of range")

    for row in np.unique(entry_rows[matrix.data <= 0]):
        violations.append(f"{row_names[row]}: zero-probability entry")

    for row in np.unique(entry_rows[matrix.data > 1]):
        violations.append(f"{row_names[row]}: probability above 1")

    row_sums = np.asarray(matrix.sum(axis=1)).ravel()
    for row in np.flatnonzero(np.abs(row_sums - 1.0) > ROW_SUM_TOLERANCE):
        violations.append(f"{row_names[row]}: row-sum {row_sums[row]:.12g} != 1")

    for name, mask in model.labels.items():
        if len(mask) != num_states:
            violations.append(f"label {name!r} has {len(mask)} entries, not {num_states}")

    expected = num_states if isinstance(model, Dtmc) else model.num_choices
    for reward in rewards:
        if len(reward) != expected:
            violations.append(
                f"reward structure {reward.name!r} has {len(reward)} entries, "
                f"expected {expected}"
            )
        elif np.any(reward.values < 0):
            violations.append(f"reward structure {reward.name!r} has negative values")

    return violations


def reachable(model: Model, start: int | None = None) -> TargetSet:
    """Return the states reachable from ``start`` (default: the initial state)."""
    graph = model.matrix if isinstance(model, Dtmc) else model.state_graph()
    order = breadth_first_order(
        graph,
        model.initial if start is None else start,
        directed=True,
        return_predecessors=False,
    )
    mask = np.zeros(model.num_states, dtype=np.bool_)
    mask[order] = True
    return mask


def bsccs(dtmc: Dtmc) -> list[TargetSet]:
    """
    Compute the bottom strongly connected components of a DTMC.

    Components are returned ordered by their smallest state index.
    """
    num_components, component = connected_components(
        dtmc.matrix, directed=True, connection="strong"
    )
    coo = dtmc.matrix.tocoo()
    leaving = component[coo.row] != component[coo.col]
    not_bottom = np.zeros(num_components, dtype=np.bool_)
    not_bottom[component[coo.row[leaving]]] = True
    result = [
        component == index for index in range(num_components) if not not_bottom[index]
    ]
    result.sort(key=lambda mask: int(np.argmax(mask)))
    return result


def infinite_reward_states(dtmc: Dtmc, target: TargetSet) -> TargetSet:
    """Return the union of all BSCCs that contain no target state."""
    result = np.zeros(dtmc.num_states, dtype=np.bool_)
    for component in bsccs(dtmc):
        if not np.any(component & target):
            result |= component

    return result


def _any_per_state(mdp: Mdp, flags: np.ndarray) -> np.ndarray:
    counts = np.bincount(
        mdp.choice_state, weights=flags.astype(np.float64), minlength=mdp.num_states
    )
    return counts > 0


def almost_sure_reach_exists(mdp: Mdp, target: TargetSet) -> TargetSet:
    """
    Compute the states from which some policy reaches ``target`` with probability 1.

    This is the usual nested fixpoint over the graph of the MDP: the outer loop shrinks
    the candidate set ``U``, the inner loop collects the states that can move towards the
    target while staying inside ``U``.
    """
    structure = csr_array(
        (np.ones(mdp.matrix.nnz), mdp.matrix.indices, mdp.matrix.indptr),
        shape=mdp.matrix.shape,
    )
    candidates = np.ones(mdp.num_states, dtype=np.bool_)
    while True:
        leaves = (structure @ (~candidates).astype(np.float64)) > 0
        safe_choices = ~leaves
        good = target.copy()
        while True:
            hits = (structure @ good.astype(np.float64)) > 0
            extended = good | (candidates & _any_per_state(mdp, safe_choices & hits))
            if np.array_equal(extended, good):
                break

            good = extended

        if np.array_equal(good, candidates):
            return good

        candidates = good


def staying_choices(mdp: Mdp, states: TargetSet) -> np.ndarray:
    """Return a mask of the choices whose successors all lie within ``states``."""
    structure = csr_array(
        (np.ones(mdp.matrix.nnz), mdp.matrix.indices, mdp.matrix.indptr),
        shape=mdp.matrix.shape,
    )
    return ~((structure @ (~states).astype(np.float64)) > 0)


def induce_dtmc(
    mdp: Mdp,
    policy: Policy,
    rewards: RewardStructure,
    target: TargetSet | None = None,
) -> tuple[Dtmc, RewardStructure]:
    """
    Build the DTMC induced by a memoryless policy.

    States without a policy entry become absorbing (self-loop, reward 0). That is only
    allowed for states not reachable under the policy, and for ``target`` states, where
    reward accumulation stops anyway.

    :raises UndefinedChoice: if a reachable non-target state has no policy entry

    """
    chosen = policy.global_choices(mdp)
    stop = target if target is not None else np.zeros(mdp.num_states, dtype=np.bool_)
    missing: list[int] = []
    seen = np.zeros(mdp.num_states, dtype=np.bool_)
    seen[mdp.initial] = True
    queue = deque([mdp.initial])
    while queue:
        state = queue.popleft()
        if chosen[state] < 0:
            if not stop[state]:
                missing.append(state)

            continue

        for successor in mdp.successors(int(chosen[state]))[0]:
            if not seen[successor]:
                seen[successor] = True
                queue.append(int(successor))

    if missing:
        raise UndefinedChoice(sorted(missing))

    rows: list[Sequence[tuple[int, float]]] = []
    state_rewards = np.zeros(mdp.num_states, dtype=np.int64)
    for state in range(mdp.num_states):
        choice = int(chosen[state])
        if choice < 0:
            rows.append([(state, 1.0)])
        else:
            successors, probs = mdp.successors(choice)
            rows.append(list(zip(successors.tolist(), probs.tolist())))
            state_rewards[state] = rewards.values[choice]

    dtmc = Dtmc.from_rows(rows, mdp.initial, mdp.labels)
    return dtmc, RewardStructure(state_rewards, rewards.name)
