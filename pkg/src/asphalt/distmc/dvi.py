"""
Distributional value iteration on MDPs.

Every state carries an approximate distribution of the reward still to be collected until
the target is reached. A sweep computes, for every choice, the distribution
``r + Σ P(s') μ_s'`` projected onto the representation, selects per state the choice
minimizing the objective and replaces the state's distribution by that choice's. Sweeps
are synchronous: the new table is computed entirely from the old one.

The risk-sensitive variant runs the same iteration on the product of the MDP with a grid
of residual budgets and minimizes ``E([X - b]^+)`` instead of ``E(X)``; the budget at the
initial state is then chosen to minimize the conditional value-at-risk.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.sparse import csr_array

from asphalt.distmc.distributions import (
    CDF_SLACK,
    CategoricalDist,
    Dist,
    QuantileDist,
    ReprParams,
    cvar,
    project_categorical_batch,
    statistic,
    statistic_label,
)
from asphalt.distmc.exceptions import NonConvergence, NotAlmostSureReachable
from asphalt.distmc.forward import DEFAULT_MAX_ITERATIONS as FORWARD_MAX_ITERATIONS
from asphalt.distmc.forward import ForwardResult, forward_distribution
from asphalt.distmc.models import (
    Mdp,
    Policy,
    RewardStructure,
    TargetSet,
    almost_sure_reach_exists,
    induce_dtmc,
    reachable,
    staying_choices,
)

logger = logging.getLogger(__name__)

DEFAULT_CONVERGENCE = 0.01
DEFAULT_MAX_ITERATIONS = 10_000
DEFAULT_FREEZE_AFTER = 1_000
#: choices whose objective is within this (relative) distance of the best count as tied
TIE_TOLERANCE = 1e-12
#: mass clamped onto the highest atom above which a warning is logged
CLAMP_WARNING = 1e-6
CHUNK_SIZE = 4096


@dataclass(frozen=True)
class SlackGrid:
    """
    Evenly spaced budget atoms ``b_1 < ... < b_n`` from ``vmin`` to ``vmax``.
    """

    vmin: float
    vmax: float
    n: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("a budget grid needs at least 2 atoms")
        if not self.vmin < self.vmax:
            raise ValueError("vmin must be smaller than vmax")

    @property
    def stride(self) -> float:
        return (self.vmax - self.vmin) / (self.n - 1)

    @property
    def atoms(self) -> np.ndarray:
        return self.vmin + self.stride * np.arange(self.n)

    def round_down(self, budgets: np.ndarray) -> np.ndarray:
        """Return the index of the largest atom not above each budget (at least 0)."""
        position = (np.maximum(budgets, self.vmin) - self.vmin) / self.stride
        return np.clip(np.floor(position + 1e-9).astype(np.int64), 0, self.n - 1)


@dataclass(frozen=True, eq=False)
class SlackProduct:
    """
    Product of an MDP with a budget grid.

    State ``s * n + j`` stands for ``⟨s, b_j⟩``.

    :ivar mdp: the product MDP (its initial state is ``⟨s0, b_1⟩``)
    :ivar rewards: the original per-choice rewards
    :ivar grid: the budget grid
    :ivar state_map: ``num_states × 2`` array of ``(model state, budget index)``
    :ivar entry_states: the product states ``⟨s0, b⟩`` for every budget atom
    """

    mdp: Mdp
    rewards: RewardStructure
    grid: SlackGrid
    state_map: np.ndarray
    entry_states: np.ndarray

    def lift(self, mask: TargetSet) -> TargetSet:
        """Lift a state mask of the original MDP to the product."""
        return np.asarray(mask, dtype=np.bool_)[self.state_map[:, 0]]


def build_slack_product(mdp: Mdp, rewards: RewardStructure, grid: SlackGrid) -> SlackProduct:
    """
    Build the product of ``mdp`` with the budget grid.

    Taking choice ``a`` in ``⟨s, b⟩`` leads to ``⟨s', b'⟩`` with probability
    ``P(s, a, s')``, where ``b'`` is ``b - r(s, a)`` rounded down to the grid (and raised
    to ``vmin`` if it falls below).
    """
    n = grid.n
    num_states = mdp.num_states
    product_states = np.arange(num_states * n, dtype=np.int64)
    model_states = product_states // n
    budgets = product_states % n
    counts = np.diff(mdp.row_groups)[model_states]
    owner = np.repeat(product_states, counts)
    choices = np.arange(len(owner)) - np.repeat(np.cumsum(counts) - counts, counts)
    choices += mdp.row_groups[model_states][owner]
    next_budget = grid.round_down(grid.atoms[budgets[owner]] - rewards.values[choices])

    indptr = mdp.matrix.indptr
    widths = indptr[choices + 1] - indptr[choices]
    entry_owner = np.repeat(np.arange(len(choices)), widths)
    entries = np.arange(len(entry_owner)) - np.repeat(np.cumsum(widths) - widths, widths)
    entries += indptr[choices][entry_owner]
    columns = mdp.matrix.indices[entries].astype(np.int64) * n + next_budget[entry_owner]
    product_indptr = np.zeros(len(choices) + 1, dtype=np.int64)
    np.cumsum(widths, out=product_indptr[1:])
    matrix = csr_array(
        (mdp.matrix.data[entries], columns, product_indptr),
        shape=(len(choices), num_states * n),
    )
    row_groups = np.zeros(num_states * n + 1, dtype=np.int64)
    np.cumsum(counts, out=row_groups[1:])
    labels = {name: mask[model_states] for name, mask in mdp.labels.items()}
    product = Mdp(
        matrix,
        row_groups,
        tuple(mdp.actions[c] for c in choices.tolist()),
        mdp.initial * n,
        labels,
    )
    state_map = np.stack((model_states, budgets), axis=1)
    entry_states = mdp.initial * n + np.arange(n, dtype=np.int64)
    logger.debug(
        "Slack product has %d states and %d choices", product.num_states, product.num_choices
    )
    return SlackProduct(
        product,
        RewardStructure(rewards.values[choices], rewards.name),
        grid,
        state_map,
        entry_states,
    )


@dataclass(frozen=True, eq=False)
class _Restricted:
    """The part of an MDP that value iteration works on."""

    matrix: csr_array
    row_groups: np.ndarray
    rewards: np.ndarray
    target: np.ndarray
    states: np.ndarray
    choices: np.ndarray

    @property
    def num_states(self) -> int:
        return len(self.states)

    def local(self, states: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.states, states)


def _check_almost_sure(mdp: Mdp, target: TargetSet) -> np.ndarray:
    winning = almost_sure_reach_exists(mdp, target)
    if not winning[mdp.initial]:
        offending = np.flatnonzero(reachable(mdp) & ~winning)
        raise NotAlmostSureReachable(offending.tolist())

    return winning


def _restrict(
    mdp: Mdp,
    rewards: RewardStructure,
    target: TargetSet,
    winning: TargetSet,
    starts: np.ndarray,
) -> _Restricted:
    """
    Keep the states reachable from ``starts`` through choices that stay inside
    ``winning``; target states keep no choices.
    """
    allowed = (
        staying_choices(mdp, winning)
        & winning[mdp.choice_state]
        & ~target[mdp.choice_state]
    )
    structure = csr_array(
        (
            allowed[np.repeat(np.arange(mdp.num_choices), np.diff(mdp.matrix.indptr))]
            .astype(np.float64),
            mdp.matrix.indices,
            mdp.matrix.indptr,
        ),
        shape=mdp.matrix.shape,
    )
    graph = csr_array(
        (np.ones(mdp.num_choices), (mdp.choice_state, np.arange(mdp.num_choices))),
        shape=(mdp.num_states, mdp.num_choices),
    ) @ structure
    seen = np.zeros(mdp.num_states, dtype=np.bool_)
    seen[starts] = True
    frontier = seen.copy()
    while np.any(frontier):
        expanded = (graph.T @ frontier.astype(np.float64)) > 0
        frontier = expanded & ~seen
        seen |= frontier

    states = np.flatnonzero(seen)
    choices = np.flatnonzero(allowed & seen[mdp.choice_state])
    local_owner = np.searchsorted(states, mdp.choice_state[choices])
    row_groups = np.zeros(len(states) + 1, dtype=np.int64)
    np.cumsum(np.bincount(local_owner, minlength=len(states)), out=row_groups[1:])
    matrix = csr_array(mdp.matrix[choices][:, states])
    return _Restricted(
        matrix,
        row_groups,
        rewards.values[choices].astype(np.float64),
        target[states],
        states,
        choices,
    )


def _state_chunks(row_groups: np.ndarray) -> Iterator[tuple[int, int]]:
    first = 0
    num_states = len(row_groups) - 1
    while first < num_states:
        limit = row_groups[first] + CHUNK_SIZE
        last = int(np.searchsorted(row_groups, limit, side="right")) - 1
        last = min(max(last, first + 1), num_states)
        yield first, last
        first = last


def _first_minimum(scores: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """
    Return, per nonempty group of consecutive scores, the position of the first score
    within the tie tolerance of the group minimum.
    """
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[counts > 0]
    sizes = counts[counts > 0]
    minima = np.minimum.reduceat(scores, starts)
    tolerance = TIE_TOLERANCE * np.maximum(1.0, np.abs(minima))
    candidates = np.where(
        scores <= np.repeat(minima + tolerance, sizes),
        np.arange(len(scores)),
        len(scores),
    )
    return np.minimum.reduceat(candidates, starts)


class _Backup:
    """Distributional Bellman backups of all choices of a restricted MDP."""

    def __init__(self, restricted: _Restricted, params: ReprParams):
        self.restricted = restricted
        self.params = params
        self.atoms = params.atoms
        self.taus = (2.0 * np.arange(1, params.m + 1) - 1.0) / (2.0 * params.m)

    def initial_table(self) -> np.ndarray:
        num_states = self.restricted.num_states
        if self.params.kind == "categorical":
            projected, _ = project_categorical_batch(
                np.zeros((1, 1)), np.ones((1, 1)), self.params
            )
            return np.tile(projected[0], (num_states, 1))

        return np.zeros((num_states, self.params.m))

    def choices(self, table: np.ndarray, lo: int, hi: int) -> tuple[np.ndarray, float]:
        """
        Back up choices ``lo`` to ``hi``.

        :return: one projected distribution per choice, and the largest mass clamped from
            above ``vmax``

        """
        block = self.restricted.matrix[lo:hi]
        rewards = self.restricted.rewards[lo:hi]
        if self.params.kind == "categorical":
            mixture = np.asarray(block @ table)
            values = self.atoms[None, :] + rewards[:, None]
            projected, overflow = project_categorical_batch(values, mixture, self.params)
            return projected, float(overflow.max(initial=0.0))

        return self._quantile_choices(csr_array(block), table, rewards), 0.0

    def _quantile_choices(
        self, block: csr_array, table: np.ndarray, rewards: np.ndarray
    ) -> np.ndarray:
        m = self.params.m
        num_choices = block.shape[0]
        owner = np.repeat(np.arange(num_choices), np.diff(block.indptr))
        values = (table[block.indices] + rewards[owner][:, None]).ravel()
        weights = np.repeat(block.data / m, m)
        value_owner = np.repeat(owner, m)
        order = np.lexsort((values, value_owner))
        sorted_values = values[order]
        sorted_owner = value_owner[order]
        cumulative = np.cumsum(weights[order])
        group_start = np.searchsorted(sorted_owner, np.arange(num_choices))
        group_end = np.searchsorted(sorted_owner, np.arange(num_choices), side="right")
        base = np.where(group_start > 0, cumulative[np.maximum(group_start - 1, 0)], 0.0)
        keys = sorted_owner + (cumulative - base[sorted_owner])
        queries = np.arange(num_choices)[:, None] + self.taus[None, :] - CDF_SLACK
        positions = np.searchsorted(keys, queries.ravel(), side="left").reshape(
            num_choices, m
        )
        positions = np.minimum(positions, (group_end - 1)[:, None])
        return sorted_values[positions]

    def scores(self, projected: np.ndarray, budgets: Optional[np.ndarray]) -> np.ndarray:
        if self.params.kind == "categorical":
            if budgets is None:
                return projected @ self.atoms

            excess = np.maximum(self.atoms[None, :] - budgets[:, None], 0.0)
            return np.einsum("ij,ij->i", projected, excess)

        if budgets is None:
            return projected.mean(axis=1)

        return np.maximum(projected - budgets[:, None], 0.0).mean(axis=1)

    def distance(self, new: np.ndarray, old: np.ndarray) -> np.ndarray:
        """Cramér distance for categorical tables, 1-Wasserstein for quantile tables."""
        if self.params.kind == "categorical":
            difference = np.cumsum(new - old, axis=1)
            return np.sqrt(self.params.stride * np.einsum("ij,ij->i", difference, difference))

        return np.abs(new - old).mean(axis=1)

    def dist(self, row: np.ndarray) -> Dist:
        if self.params.kind == "categorical":
            return CategoricalDist(self.params.vmin, self.params.stride, row)

        return QuantileDist(row)


@dataclass(frozen=True)
class _Solution:
    table: np.ndarray
    choice: np.ndarray
    iterations: int
    residual: float
    fallback: bool
    overflow: float


def _iterate(
    restricted: _Restricted,
    backup: _Backup,
    budgets: Optional[np.ndarray],
    convergence: float,
    max_iterations: int,
    freeze_after: int,
) -> _Solution:
    row_groups = restricted.row_groups
    counts = np.diff(row_groups)
    deciding = ~restricted.target
    table = backup.initial_table()
    frozen: Optional[np.ndarray] = None
    overflow = 0.0
    iteration = 0
    # smallest residual before the current window and within it
    best = window_best = math.inf
    while True:
        iteration += 1
        new_table = table.copy()
        choice = np.full(restricted.num_states, -1, dtype=np.int64)
        overflow = 0.0
        for first, last in _state_chunks(row_groups):
            lo, hi = int(row_groups[first]), int(row_groups[last])
            if lo == hi:
                continue

            projected, clamped = backup.choices(table, lo, hi)
            overflow = max(overflow, clamped)
            chunk_counts = counts[first:last]
            if frozen is None:
                budget_slice = None
                if budgets is not None:
                    budget_slice = np.repeat(budgets[first:last], chunk_counts)

                positions = _first_minimum(backup.scores(projected, budget_slice), chunk_counts)
            else:
                positions = frozen[first:last][chunk_counts > 0] - lo

            owners = np.arange(first, last)[chunk_counts > 0]
            new_table[owners] = projected[positions]
            choice[owners] = positions + lo

        distances = backup.distance(new_table, table)
        residual = float(distances[deciding].max(initial=0.0))
        table = new_table
        if residual <= convergence:
            break

        if iteration >= max_iterations:
            raise NonConvergence(
                "distributional value iteration did not converge",
                iterations=iteration,
                residual=residual,
            )

        window_best = min(window_best, residual)
        if frozen is None and iteration % freeze_after == 0:
            if window_best >= best:
                logger.warning(
                    "Value iteration stalled after %d sweeps (residual %g, no progress in the "
                    "last %d); freezing the current policy and evaluating it",
                    iteration,
                    residual,
                    freeze_after,
                )
                frozen = choice

            best = min(best, window_best)
            window_best = math.inf

        if iteration % 100 == 0:
            logger.debug("Sweep %d: residual %g", iteration, residual)

    if overflow > CLAMP_WARNING:
        logger.warning(
            "Up to %g probability mass was clamped onto the highest atom; vmax is probably "
            "too small",
            overflow,
        )

    return _Solution(table, choice, iteration, residual, frozen is not None, overflow)


def _policy(mdp: Mdp, restricted: _Restricted, choice: np.ndarray) -> Policy:
    actions = np.full(mdp.num_states, -1, dtype=np.int64)
    defined = choice >= 0
    states = restricted.states[defined]
    actions[states] = restricted.choices[choice[defined]] - mdp.row_groups[states]
    return Policy(actions)


@dataclass(frozen=True, eq=False)
class DviResult:
    """
    Outcome of distributional value iteration.

    :ivar policy: the extracted policy on the solved MDP (the slack product for
        risk-sensitive runs)
    :ivar distribution: the approximate distribution at the initial state
    :ivar iterations: number of sweeps
    :ivar residual: the sup-distance between the last two tables
    :ivar fallback: ``True`` if the policy was frozen because the iteration kept moving
    :ivar overflow: the largest mass clamped onto the highest atom in the last sweep
    :ivar initial: the initial state the policy is meant for
    :ivar budget: the chosen initial budget (risk-sensitive runs only)
    :ivar budget_distributions: the initial distribution for every budget atom
        (risk-sensitive runs only)
    :ivar slack: the slack product (risk-sensitive runs only)
    """

    policy: Policy
    distribution: Dist
    iterations: int
    residual: float
    fallback: bool
    overflow: float
    initial: int
    states: np.ndarray = field(repr=False)
    table: np.ndarray = field(repr=False)
    params: ReprParams
    budget: Optional[float] = None
    budget_distributions: tuple[Dist, ...] = ()
    slack: Optional[SlackProduct] = None

    def distribution_of(self, state: int) -> Dist:
        """Return the approximate distribution of a state visited by the iteration."""
        position = int(np.searchsorted(self.states, state))
        if position >= len(self.states) or self.states[position] != state:
            raise KeyError(state)

        row = self.table[position]
        if self.params.kind == "categorical":
            return CategoricalDist(self.params.vmin, self.params.stride, row)

        return QuantileDist(row)


def risk_neutral_dvi(
    mdp: Mdp,
    rewards: RewardStructure,
    target: TargetSet,
    params: ReprParams,
    convergence: float = DEFAULT_CONVERGENCE,
    *,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    freeze_after: int = DEFAULT_FREEZE_AFTER,
) -> DviResult:
    """
    Find a policy minimizing the expected reward until ``target``, together with an
    approximation of its reward distribution.

    The convergence threshold bounds the change between the last two sweeps, not the
    distance to the true distribution; use :func:`evaluate_policy` for that.

    :param mdp: the MDP (usually a product with an automaton)
    :param rewards: per-choice rewards
    :param target: mask of target states
    :param params: distribution representation
    :param convergence: threshold on the sup-distance between consecutive tables
    :param max_iterations: cap on the number of sweeps
    :param freeze_after: length of the window of sweeps; the policy is frozen when the
        residual did not drop below its earlier minimum during a whole window
    :raises NotAlmostSureReachable: if no policy reaches the target almost surely from
        the initial state
    :raises NonConvergence: if the cap is hit

    """
    target = np.asarray(target, dtype=np.bool_)
    winning = _check_almost_sure(mdp, target)
    restricted = _restrict(mdp, rewards, target, winning, np.array([mdp.initial]))
    backup = _Backup(restricted, params)
    solution = _iterate(
        restricted, backup, None, convergence, max_iterations, freeze_after
    )
    initial_row = solution.table[restricted.local(np.array([mdp.initial]))[0]]
    logger.info(
        "Risk-neutral value iteration converged after %d sweeps (residual %g)",
        solution.iterations,
        solution.residual,
    )
    return DviResult(
        policy=_policy(mdp, restricted, solution.choice),
        distribution=backup.dist(initial_row),
        iterations=solution.iterations,
        residual=solution.residual,
        fallback=solution.fallback,
        overflow=solution.overflow,
        initial=mdp.initial,
        states=restricted.states,
        table=solution.table,
        params=params,
    )


def risk_sensitive_dvi(
    mdp: Mdp,
    rewards: RewardStructure,
    target: TargetSet,
    alpha: float,
    grid: SlackGrid,
    params: ReprParams,
    convergence: float = DEFAULT_CONVERGENCE,
    *,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    freeze_after: int = DEFAULT_FREEZE_AFTER,
) -> DviResult:
    """
    Find a finite-memory policy minimizing the conditional value-at-risk of the reward
    until ``target``.

    The returned policy lives on the slack product and is meant to be started in
    ``⟨s0, b*⟩`` (:attr:`DviResult.initial`), where ``b*`` is the budget whose
    approximate initial distribution has the smallest CVaR.

    :raises NotAlmostSureReachable: if no policy reaches the target almost surely from
        the initial state
    :raises NonConvergence: if the cap is hit

    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"risk level must lie in the open interval (0, 1), got {alpha}")

    target = np.asarray(target, dtype=np.bool_)
    winning = _check_almost_sure(mdp, target)
    slack = build_slack_product(mdp, rewards, grid)
    slack_target = slack.lift(target)
    restricted = _restrict(
        slack.mdp, slack.rewards, slack_target, slack.lift(winning), slack.entry_states
    )
    backup = _Backup(restricted, params)
    budgets = grid.atoms[slack.state_map[restricted.states, 1]]
    solution = _iterate(
        restricted, backup, budgets, convergence, max_iterations, freeze_after
    )
    entry_rows = restricted.local(slack.entry_states)
    budget_distributions = tuple(backup.dist(solution.table[row]) for row in entry_rows)
    risks = np.array([cvar(dist, alpha) for dist in budget_distributions])
    best = int(np.flatnonzero(risks <= risks.min() + TIE_TOLERANCE * max(1.0, risks.min()))[0])
    logger.info(
        "Risk-sensitive value iteration converged after %d sweeps (residual %g); "
        "initial budget %g",
        solution.iterations,
        solution.residual,
        grid.atoms[best],
    )
    return DviResult(
        policy=_policy(slack.mdp, restricted, solution.choice),
        distribution=budget_distributions[best],
        iterations=solution.iterations,
        residual=solution.residual,
        fallback=solution.fallback,
        overflow=solution.overflow,
        initial=int(slack.entry_states[best]),
        states=restricted.states,
        table=solution.table,
        params=params,
        budget=float(grid.atoms[best]),
        budget_distributions=budget_distributions,
        slack=slack,
    )


@dataclass(frozen=True, eq=False)
class ValueIterationResult:
    """Outcome of scalar value iteration: minimal expected rewards and a policy."""

    values: np.ndarray
    policy: Policy
    iterations: int

    def __getitem__(self, state: int) -> float:
        return float(self.values[state])


def value_iteration(
    mdp: Mdp,
    rewards: RewardStructure,
    target: TargetSet,
    tolerance: float = 1e-10,
    *,
    max_iterations: int = 1_000_000,
) -> ValueIterationResult:
    """
    Compute the minimal expected reward until ``target`` with classical value iteration.

    States not visited from the initial state through choices that keep the target almost
    surely reachable get the value ``inf``.
    """
    target = np.asarray(target, dtype=np.bool_)
    winning = _check_almost_sure(mdp, target)
    restricted = _restrict(mdp, rewards, target, winning, np.array([mdp.initial]))
    counts = np.diff(restricted.row_groups)
    values = np.zeros(restricted.num_states)
    choice = np.full(restricted.num_states, -1, dtype=np.int64)
    for iteration in range(1, max_iterations + 1):
        scores = restricted.rewards + restricted.matrix @ values
        new_values = np.zeros(restricted.num_states)
        if len(scores):
            positions = _first_minimum(scores, counts)
            owners = np.flatnonzero(counts > 0)
            new_values[owners] = scores[positions]
            choice[owners] = positions

        change = float(np.abs(new_values - values).max(initial=0.0))
        values = new_values
        if change <= tolerance * max(1.0, float(np.abs(values).max(initial=0.0))):
            break
    else:
        raise NonConvergence(
            "value iteration did not converge", iterations=max_iterations, residual=change
        )

    full_values = np.full(mdp.num_states, math.inf)
    full_values[restricted.states] = values
    return ValueIterationResult(full_values, _policy(mdp, restricted, choice), iteration)


@dataclass(frozen=True)
class PolicyEvaluation:
    """
    Exact evaluation of a policy.

    :ivar values: statistic label to value on the exact distribution
    :ivar deviations: statistic label to relative deviation (in percent) of the
        approximate distribution's statistic from the exact one
    :ivar forward: the forward computation on the induced DTMC
    """

    values: dict[str, float]
    deviations: dict[str, float]
    forward: ForwardResult

    @property
    def distribution(self) -> Dist:
        return self.forward.distribution


def relative_deviation(approximate: float, exact: float) -> float:
    """Return ``100 · |approximate - exact| / |exact|``."""
    if approximate == exact:
        return 0.0
    elif exact == 0 or math.isinf(exact) or math.isinf(approximate):
        return math.inf

    return 100.0 * abs(approximate - exact) / abs(exact)


def evaluate_policy(
    mdp: Mdp,
    policy: Policy,
    rewards: RewardStructure,
    target: TargetSet,
    epsilon: float,
    queries: Sequence[tuple[str, Optional[float]]] = (("E", None),),
    *,
    initial: Optional[int] = None,
    reference: Optional[Dist] = None,
    max_iterations: int = FORWARD_MAX_ITERATIONS,
) -> PolicyEvaluation:
    """
    Evaluate a policy precisely on the DTMC it induces.

    :param mdp: the MDP the policy is defined on
    :param policy: the policy
    :param rewards: per-choice rewards
    :param target: mask of target states
    :param epsilon: accuracy of the forward computation
    :param queries: ``(statistic, risk level)`` pairs to evaluate
    :param initial: start state, if different from the MDP's initial state
    :param reference: an approximate distribution (typically from value iteration) to
        compare against
    :raises UndefinedChoice: if the policy is undefined on a reachable non-target state

    """
    target = np.asarray(target, dtype=np.bool_)
    if initial is not None and initial != mdp.initial:
        mdp = replace(mdp, initial=initial)

    dtmc, state_rewards = induce_dtmc(mdp, policy, rewards, target)
    result = forward_distribution(
        dtmc, state_rewards, target, epsilon, max_iterations=max_iterations
    )
    values: dict[str, float] = {}
    deviations: dict[str, float] = {}
    for name, alpha in queries:
        label = statistic_label(name, alpha)
        values[label] = statistic(result.distribution, name, alpha)
        if reference is not None:
            deviations[label] = relative_deviation(
                statistic(reference, name, alpha), values[label]
            )

    return PolicyEvaluation(values, deviations, result)
