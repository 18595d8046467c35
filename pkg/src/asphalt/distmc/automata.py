"""
Deterministic automata for co-safe formulas and their products with DTMCs and MDPs.

The automaton is built by formula progression. An automaton state is a formula kept in
disjunctive normal form: a set of clauses, each clause a set of pending obligations
(literals, ``X``, ``U`` and ``F`` subformulas). Reading a letter progresses every
obligation through one step. States from which every continuation is accepted are merged
into the single accepting state, which is absorbing.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from typing import FrozenSet, Union

import numpy as np
from scipy.sparse import csr_array

from asphalt.distmc.exceptions import AtomMismatch, StateBlowup
from asphalt.distmc.ltl import (
    And,
    Atom,
    Constant,
    Eventually,
    Formula,
    Next,
    Or,
    Until,
    atoms,
)
from asphalt.distmc.models import Dtmc, Mdp, RewardStructure, TargetSet

logger = logging.getLogger(__name__)

MAX_DFA_STATES = 1_000_000
MAX_ATOMS = 20

Clause = FrozenSet[Formula]
Dnf = FrozenSet[Clause]

_TRUE_DNF: Dnf = frozenset([frozenset()])
_FALSE_DNF: Dnf = frozenset()


def _simplify(clauses: Iterable[Clause]) -> Dnf:
    consistent = [
        clause
        for clause in set(clauses)
        if not any(
            isinstance(item, Atom) and Atom(item.name, not item.negated) in clause
            for item in clause
        )
    ]
    consistent.sort(key=len)
    kept: list[Clause] = []
    for clause in consistent:
        if not any(other <= clause for other in kept):
            kept.append(clause)

    return frozenset(kept)


def _conjoin(left: Dnf, right: Dnf) -> Dnf:
    return _simplify(a | b for a in left for b in right)


def _disjoin(left: Dnf, right: Dnf) -> Dnf:
    return _simplify(left | right)


def _to_dnf(formula: Formula) -> Dnf:
    if isinstance(formula, Constant):
        return _TRUE_DNF if formula.value else _FALSE_DNF
    elif isinstance(formula, And):
        return _conjoin(_to_dnf(formula.left), _to_dnf(formula.right))
    elif isinstance(formula, Or):
        return _disjoin(_to_dnf(formula.left), _to_dnf(formula.right))
    else:
        return frozenset([frozenset([formula])])


def _progress(obligation: Formula, letter: frozenset[str]) -> Dnf:
    if isinstance(obligation, Atom):
        holds = (obligation.name in letter) != obligation.negated
        return _TRUE_DNF if holds else _FALSE_DNF
    elif isinstance(obligation, Next):
        return _to_dnf(obligation.operand)
    elif isinstance(obligation, Until):
        return _disjoin(
            _progress_formula(obligation.right, letter),
            _conjoin(_progress_formula(obligation.left, letter), _to_dnf(obligation)),
        )
    elif isinstance(obligation, Eventually):
        return _disjoin(_progress_formula(obligation.operand, letter), _to_dnf(obligation))
    else:
        return _progress_dnf(_to_dnf(obligation), letter)


def _progress_formula(formula: Formula, letter: frozenset[str]) -> Dnf:
    return _progress_dnf(_to_dnf(formula), letter)


def _progress_dnf(state: Dnf, letter: frozenset[str]) -> Dnf:
    result = _FALSE_DNF
    for clause in state:
        progressed = _TRUE_DNF
        for obligation in clause:
            progressed = _conjoin(progressed, _progress(obligation, letter))
            if not progressed:
                break

        result = _disjoin(result, progressed)
        if result == _TRUE_DNF:
            break

    return result


@dataclass(frozen=True, eq=False)
class Dfa:
    """
    A deterministic automaton over valuations of ``atoms``.

    Letter ``v`` is the valuation in which atom ``atoms[i]`` holds iff bit ``i`` of ``v``
    is set.

    :ivar atoms: the alphabet's atomic propositions, sorted
    :ivar transitions: ``num_states × 2**len(atoms)`` successor table
    :ivar initial: the initial state
    :ivar accepting: mask of accepting (absorbing) states
    """

    atoms: tuple[str, ...]
    transitions: np.ndarray
    initial: int
    accepting: np.ndarray

    @property
    def num_states(self) -> int:
        return int(self.transitions.shape[0])

    def letter(self, labels: Iterable[str]) -> int:
        present = set(labels)
        return sum(1 << index for index, atom in enumerate(self.atoms) if atom in present)

    def step(self, state: int, labels: Iterable[str]) -> int:
        return int(self.transitions[state, self.letter(labels)])

    def run(self, word: Iterable[Iterable[str]]) -> int:
        state = self.initial
        for labels in word:
            state = self.step(state, labels)

        return state

    def accepts(self, word: Iterable[Iterable[str]]) -> bool:
        """Return ``True`` if ``word`` is a good prefix."""
        return bool(self.accepting[self.run(word)])


def to_dfa(formula: Formula) -> Dfa:
    """
    Build the automaton accepting exactly the good prefixes of a co-safe formula.

    :raises StateBlowup: if the automaton would exceed the state limit

    """
    alphabet = tuple(sorted(atoms(formula)))
    if len(alphabet) > MAX_ATOMS:
        raise StateBlowup(f"formula has {len(alphabet)} atoms (the limit is {MAX_ATOMS})")

    letters = [
        frozenset(atom for index, atom in enumerate(alphabet) if value >> index & 1)
        for value in range(1 << len(alphabet))
    ]
    initial = _to_dnf(formula)
    index: dict[Dnf, int] = {initial: 0}
    states = [initial]
    rows: list[list[int]] = []
    while len(rows) < len(states):
        state = states[len(rows)]
        row = []
        for letter in letters:
            successor = _progress_dnf(state, letter)
            if successor not in index:
                if len(states) >= MAX_DFA_STATES:
                    raise StateBlowup(
                        f"automaton for {formula} exceeds {MAX_DFA_STATES} states"
                    )

                index[successor] = len(states)
                states.append(successor)

            row.append(index[successor])

        rows.append(row)

    transitions = np.array(rows, dtype=np.int64)
    valid = np.array([state == _TRUE_DNF for state in states], dtype=np.bool_)
    while True:
        extended = valid | np.all(valid[transitions], axis=1)
        if np.array_equal(extended, valid):
            break

        valid = extended

    # collapse every valid state into one accepting state, keeping discovery order
    representative = np.arange(len(states))
    if np.any(valid):
        representative[valid] = int(np.flatnonzero(valid)[0])

    kept, renumber = np.unique(representative, return_inverse=True)
    transitions = renumber.ravel()[transitions[kept]]
    accepting = valid[kept]
    logger.debug("Automaton for %s has %d states", formula, len(kept))
    return Dfa(alphabet, transitions, int(renumber.ravel()[0]), accepting)


@dataclass(frozen=True, eq=False)
class Product:
    """
    A model-automaton product.

    :ivar model: the product DTMC or MDP
    :ivar rewards: rewards lifted to the product
    :ivar target: mask of product states whose automaton component is accepting
    :ivar state_map: ``num_states × 2`` array of ``(model state, automaton state)``
    :ivar dfa: the automaton
    """

    model: Union[Dtmc, Mdp]
    rewards: RewardStructure
    target: TargetSet
    state_map: np.ndarray
    dfa: Dfa

    def model_state(self, state: int) -> int:
        return int(self.state_map[state, 0])


def _letters(model: Union[Dtmc, Mdp], dfa: Dfa) -> np.ndarray:
    missing = [atom for atom in dfa.atoms if atom not in model.labels]
    if missing:
        raise AtomMismatch(missing)

    letters = np.zeros(model.num_states, dtype=np.int64)
    for bit, atom in enumerate(dfa.atoms):
        letters |= model.labels[atom].astype(np.int64) << bit

    return letters


def _build_product(
    matrix_indptr: np.ndarray,
    matrix_indices: np.ndarray,
    matrix_data: np.ndarray,
    row_groups: np.ndarray,
    initial: int,
    letters: np.ndarray,
    dfa: Dfa,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Explore the reachable product level by level.

    :return: keys of the product states in id order, choice counts per product state,
        the model choice of every product choice, and the CSR arrays (indptr, columns,
        probabilities) of the product choices

    """
    num_automaton = dfa.num_states
    num_states = len(row_groups) - 1
    ids = np.full(num_states * num_automaton, -1, dtype=np.int64)
    start_key = initial * num_automaton + int(dfa.transitions[dfa.initial, letters[initial]])
    ids[start_key] = 0
    frontier = np.array([start_key], dtype=np.int64)
    state_keys = [frontier]
    choice_counts = []
    model_choices = []
    entry_counts = []
    entry_keys = []
    entry_probs = []
    num_product = 1
    while len(frontier):
        states = frontier // num_automaton
        automaton = frontier % num_automaton
        accepting = dfa.accepting[automaton]
        counts = row_groups[states + 1] - row_groups[states]
        owner = np.repeat(np.arange(len(frontier)), counts)
        choices = np.arange(len(owner)) - np.repeat(np.cumsum(counts) - counts, counts)
        choices += row_groups[states][owner]
        choice_accepting = accepting[owner]
        widths = np.where(
            choice_accepting, 1, matrix_indptr[choices + 1] - matrix_indptr[choices]
        )
        entry_owner = np.repeat(np.arange(len(choices)), widths)
        entries = np.arange(len(entry_owner)) - np.repeat(np.cumsum(widths) - widths, widths)
        entries += matrix_indptr[choices][entry_owner]
        entries = np.minimum(entries, max(len(matrix_indices) - 1, 0))
        absorbing = choice_accepting[entry_owner]
        successors = matrix_indices[entries].astype(np.int64)
        successor_automaton = dfa.transitions[automaton[owner][entry_owner], letters[successors]]
        keys = np.where(
            absorbing,
            frontier[owner][entry_owner],
            successors * num_automaton + successor_automaton,
        )
        probs = np.where(absorbing, 1.0, matrix_data[entries])

        choice_counts.append(counts)
        model_choices.append(choices)
        entry_counts.append(widths)
        entry_keys.append(keys)
        entry_probs.append(probs)

        fresh = np.unique(keys[ids[keys] < 0])
        ids[fresh] = np.arange(num_product, num_product + len(fresh))
        num_product += len(fresh)
        if fresh.size:
            state_keys.append(fresh)

        frontier = fresh

    widths = np.concatenate(entry_counts)
    indptr = np.zeros(len(widths) + 1, dtype=np.int64)
    np.cumsum(widths, out=indptr[1:])
    return (
        np.concatenate(state_keys),
        np.concatenate(choice_counts),
        np.concatenate(model_choices),
        indptr,
        ids[np.concatenate(entry_keys)],
        np.concatenate(entry_probs),
    )


def product_mdp(mdp: Mdp, rewards: RewardStructure, dfa: Dfa) -> Product:
    """
    Build the reachable product of an MDP with an automaton.

    The automaton reads the label of every state entered, starting with the initial
    state. Target product states keep their actions, each as a self-loop.

    :raises AtomMismatch: if the automaton refers to labels the MDP does not define

    """
    letters = _letters(mdp, dfa)
    keys, counts, choices, indptr, columns, probs = _build_product(
        mdp.matrix.indptr,
        mdp.matrix.indices,
        mdp.matrix.data,
        mdp.row_groups,
        mdp.initial,
        letters,
        dfa,
    )
    state_map = np.stack((keys // dfa.num_states, keys % dfa.num_states), axis=1)
    row_groups = np.zeros(len(keys) + 1, dtype=np.int64)
    np.cumsum(counts, out=row_groups[1:])
    matrix = csr_array((probs, columns, indptr), shape=(len(choices), len(keys)))
    labels = {name: mask[state_map[:, 0]] for name, mask in mdp.labels.items()}
    product = Mdp(
        matrix, row_groups, tuple(mdp.actions[c] for c in choices.tolist()), 0, labels
    )
    target = dfa.accepting[state_map[:, 1]]
    logger.debug(
        "MDP product has %d states and %d choices", product.num_states, product.num_choices
    )
    return Product(
        product, RewardStructure(rewards.values[choices], rewards.name), target, state_map, dfa
    )


def product_dtmc(dtmc: Dtmc, rewards: RewardStructure, dfa: Dfa) -> Product:
    """
    Build the reachable product of a DTMC with an automaton.

    :raises AtomMismatch: if the automaton refers to labels the DTMC does not define

    """
    letters = _letters(dtmc, dfa)
    keys, _, choices, indptr, columns, probs = _build_product(
        dtmc.matrix.indptr,
        dtmc.matrix.indices,
        dtmc.matrix.data,
        np.arange(dtmc.num_states + 1, dtype=np.int64),
        dtmc.initial,
        letters,
        dfa,
    )
    state_map = np.stack((keys // dfa.num_states, keys % dfa.num_states), axis=1)
    matrix = csr_array((probs, columns, indptr), shape=(len(keys), len(keys)))
    labels = {name: mask[state_map[:, 0]] for name, mask in dtmc.labels.items()}
    product = Dtmc(matrix, 0, labels)
    target = dfa.accepting[state_map[:, 1]]
    logger.debug("DTMC product has %d states", product.num_states)
    return Product(
        product, RewardStructure(rewards.values[choices], rewards.name), target, state_map, dfa
    )
