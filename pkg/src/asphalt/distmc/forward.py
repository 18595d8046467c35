"""
Forward generation of the exact reward distribution of a DTMC.

Probability mass is pushed through the chain one step at a time, tracking for every
``(state, accumulated reward)`` pair the probability of being there. Mass that enters a
target state is settled at its accumulated reward; mass that enters a bottom strongly
connected component without target states is settled at infinity. The loop stops once the
mass still in flight drops to the requested accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from asphalt.distmc.distributions import SparseDist, statistic
from asphalt.distmc.exceptions import NonConvergence
from asphalt.distmc.models import Dtmc, RewardStructure, TargetSet, infinite_reward_states

logger = logging.getLogger(__name__)

#: frontier cells below this probability are dropped (and accounted for)
PRUNE_THRESHOLD = 1e-15
DEFAULT_MAX_ITERATIONS = 10_000_000


@dataclass(frozen=True)
class ForwardResult:
    """
    Outcome of :func:`forward_distribution`.

    :ivar distribution: the computed distribution; mass still in flight at termination is
        reported at its current accumulated reward
    :ivar settled: only the mass that reached a target state or infinity
    :ivar residual: probability mass still in flight at termination
    :ivar pruned: probability mass dropped from the frontier for being negligible
    :ivar iterations: number of steps taken
    :ivar max_seen: largest accumulated reward encountered
    """

    distribution: SparseDist
    settled: SparseDist
    residual: float
    pruned: float
    iterations: int
    max_seen: int

    @property
    def error_bound(self) -> float:
        """Upper bound on ``|μ̂(i) - μ(i)|`` for every value ``i``."""
        return self.residual + self.pruned

    def bounds(self, name: str, alpha: float | None = None) -> tuple[float, float]:
        """
        Bracket a monotone statistic (``E``, ``VaR``, ``CVaR``) of the true distribution.

        The lower end evaluates the statistic on the computed distribution, where in-flight
        mass sits at the reward accumulated so far. The upper end moves the in-flight and
        pruned mass to infinity, so it is infinite for ``E`` and ``CVaR`` unless the
        computation settled all mass.
        """
        lower = statistic(self.distribution, name, alpha)
        if self.error_bound == 0:
            return lower, lower

        upper_dist = SparseDist(
            self.settled.values,
            self.settled.probs,
            self.settled.p_inf + max(0.0, 1.0 - self.settled.total_mass),
        )
        return lower, statistic(upper_dist, name, alpha)


def forward_distribution(
    dtmc: Dtmc,
    rewards: RewardStructure,
    target: TargetSet,
    epsilon: float,
    *,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> ForwardResult:
    """
    Compute the distribution of the reward accumulated until ``target`` is reached.

    :param dtmc: the Markov chain
    :param rewards: per-state rewards, collected when leaving a state
    :param target: mask of target states
    :param epsilon: accuracy; every probability of the result is within ``epsilon`` of
        the true one
    :param max_iterations: cap on the number of steps
    :raises NonConvergence: if the cap is hit before reaching the requested accuracy

    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")

    target = np.asarray(target, dtype=np.bool_)
    infinite = infinite_reward_states(dtmc, target) & ~target
    state_rewards = rewards.values
    indptr, indices, data = dtmc.matrix.indptr, dtmc.matrix.indices, dtmc.matrix.data
    num_states = dtmc.num_states

    if target[dtmc.initial]:
        distribution = SparseDist.dirac(0)
        return ForwardResult(distribution, distribution, 0.0, 0.0, 0, 0)
    if infinite[dtmc.initial]:
        distribution = SparseDist(np.array([]), np.array([]), 1.0)
        return ForwardResult(distribution, distribution, 0.0, 0.0, 0, 0)

    frontier_states = np.array([dtmc.initial], dtype=np.int64)
    frontier_rewards = np.zeros(1, dtype=np.int64)
    frontier_probs = np.ones(1)
    absorbed = np.zeros(1)
    p_inf = 0.0
    pruned = 0.0
    max_seen = 0
    iterations = 0
    residual = 1.0
    while residual + pruned > epsilon and len(frontier_states):
        if iterations >= max_iterations:
            raise NonConvergence(
                "forward computation did not reach the requested accuracy",
                iterations=iterations,
                residual=residual,
            )

        iterations += 1
        counts = indptr[frontier_states + 1] - indptr[frontier_states]
        cell = np.repeat(np.arange(len(frontier_states)), counts)
        entry = np.arange(len(cell)) - np.repeat(np.cumsum(counts) - counts, counts)
        entry += indptr[frontier_states][cell]
        next_states = indices[entry].astype(np.int64)
        next_probs = frontier_probs[cell] * data[entry]
        next_rewards = (frontier_rewards + state_rewards[frontier_states])[cell]
        if len(next_rewards):
            max_seen = max(max_seen, int(next_rewards.max()))

        hit = target[next_states]
        if np.any(hit):
            hit_rewards = next_rewards[hit]
            if hit_rewards.max() >= len(absorbed):
                absorbed = np.pad(absorbed, (0, int(hit_rewards.max()) + 1 - len(absorbed)))

            absorbed += np.bincount(
                hit_rewards, weights=next_probs[hit], minlength=len(absorbed)
            )

        lost = infinite[next_states]
        p_inf += float(next_probs[lost].sum())

        live = ~(hit | lost)
        keys = next_rewards[live] * num_states + next_states[live]
        unique_keys, inverse = np.unique(keys, return_inverse=True)
        merged = np.bincount(
            inverse.ravel(), weights=next_probs[live], minlength=len(unique_keys)
        )
        keep = merged >= PRUNE_THRESHOLD
        pruned += float(merged[~keep].sum())
        frontier_states = unique_keys[keep] % num_states
        frontier_rewards = unique_keys[keep] // num_states
        frontier_probs = merged[keep]
        residual = float(frontier_probs.sum())
        if iterations % 10_000 == 0:
            logger.debug(
                "Forward step %d: %d frontier cells, residual %g",
                iterations,
                len(frontier_states),
                residual,
            )

    settled_values = np.flatnonzero(absorbed)
    settled = SparseDist.from_arrays(settled_values, absorbed[settled_values], p_inf)
    distribution = SparseDist.from_arrays(
        np.concatenate((settled_values, frontier_rewards)),
        np.concatenate((absorbed[settled_values], frontier_probs)),
        p_inf,
    )
    logger.debug(
        "Forward computation finished after %d steps (residual %g, pruned %g)",
        iterations,
        residual,
        pruned,
    )
    return ForwardResult(distribution, settled, residual, pruned, iterations, max_seen)


def truncation_mass(result: ForwardResult) -> float:
    """Return the probability mass missing from the settled part of the result."""
    return max(0.0, 1.0 - result.settled.total_mass)

