"""
Reading and writing the explicit model format, distributions and policies.

A model consists of a transitions file (``.tra``), an optional labels file (``.lab``) and
any number of reward files (``.rew``)::

    # transitions of a DTMC           # transitions of an MDP
    STATES 2                          STATES 2
    0 1 1.0                           0 go 1 0.5
    1 1 1.0                           0 go 0 0.5
                                      1 stay 1 1.0

    # labels                          # rewards (DTMC / MDP)
    0: init                           0 3        0 go 3
    1: goal done

The state labeled ``init`` is the initial state (state 0 if no state carries it). Lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional, Union

import numpy as np

from asphalt.distmc.distributions import Dist, SparseDist
from asphalt.distmc.exceptions import ParseError, ValidationError
from asphalt.distmc.models import (
    ROW_SUM_TOLERANCE,
    Dtmc,
    Mdp,
    Model,
    Policy,
    RewardStructure,
    validate,
)

logger = logging.getLogger(__name__)

INITIAL_LABEL = "init"
_LABEL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class ModelFiles:
    """
    Locations of the files making up one model.

    :param transitions: the ``.tra`` file
    :param labels: the ``.lab`` file, if any
    :param rewards: reward structure name → ``.rew`` file
    """

    transitions: Path
    labels: Optional[Path] = None
    rewards: Mapping[str, Path] = field(default_factory=dict)

    @classmethod
    def from_stem(cls, stem: PathLike, reward_names: tuple[str, ...] = ()) -> ModelFiles:
        """
        Locate ``<stem>.tra``, ``<stem>.lab`` and ``<stem>.<name>.rew`` (or ``<stem>.rew``
        for a structure named ``default``).
        """
        base = Path(stem)
        labels = base.with_name(base.name + ".lab")
        rewards = {
            name: base.with_name(
                f"{base.name}.rew" if name == "default" else f"{base.name}.{name}.rew"
            )
            for name in reward_names
        }
        return cls(
            base.with_name(base.name + ".tra"),
            labels if labels.exists() else None,
            rewards,
        )


def _lines(path: Path) -> Iterator[tuple[int, list[str]]]:
    with path.open(encoding="utf-8") as stream:
        for number, line in enumerate(stream, start=1):
            stripped = line.strip()
            if stripped and not stripped.startswith("#"):
                yield number, stripped.split()


def _int(token: str, path: Path, line: int, what: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {token!r}", path=str(path), line=line)

    if value < 0:
        raise ParseError(f"{what} must not be negative", path=str(path), line=line)

    return value


def _float(token: str, path: Path, line: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"{what} must be a number, got {token!r}", path=str(path), line=line)


def _read_labels(path: Path, num_states: int) -> tuple[dict[str, list[int]], int]:
    labels: dict[str, list[int]] = {}
    initial: Optional[int] = None
    for line, tokens in _lines(path):
        head, _, _ = tokens[0].partition(":")
        if not tokens[0].endswith(":"):
            raise ParseError("expected 'state: label ...'", path=str(path), line=line)

        state = _int(head, path, line, "state")
        if state >= num_states:
            raise ParseError(f"state {state} out of range", path=str(path), line=line)

        for name in tokens[1:]:
            if not _LABEL_RE.match(name):
                raise ParseError(f"invalid label {name!r}", path=str(path), line=line)

            labels.setdefault(name, []).append(state)
            if name == INITIAL_LABEL:
                if initial is not None and initial != state:
                    raise ParseError(
                        "more than one state is labeled init", path=str(path), line=line
                    )

                initial = state

    return labels, initial or 0


def _read_transitions(
    path: Path, kind: Literal["dtmc", "mdp"]
) -> tuple[int, list[dict[str, list[tuple[int, float]]]]]:
    lines = _lines(path)
    try:
        line, tokens = next(lines)
    except StopIteration:
        raise ParseError("empty transitions file", path=str(path))

    if len(tokens) != 2 or tokens[0] != "STATES":
        raise ParseError("expected header 'STATES n'", path=str(path), line=line)

    num_states = _int(tokens[1], path, line, "number of states")
    choices: list[dict[str, list[tuple[int, float]]]] = [{} for _ in range(num_states)]
    expected = 3 if kind == "dtmc" else 4
    for line, tokens in lines:
        if len(tokens) != expected:
            raise ParseError(
                f"expected {expected} fields, got {len(tokens)}", path=str(path), line=line
            )

        source = _int(tokens[0], path, line, "source state")
        target = _int(tokens[-2], path, line, "target state")
        for state in (source, target):
            if state >= num_states:
                raise ParseError(f"state {state} out of range", path=str(path), line=line)

        action = "step" if kind == "dtmc" else tokens[1]
        probability = _float(tokens[-1], path, line, "probability")
        choices[source].setdefault(action, []).append((target, probability))

    return num_states, choices


def _renormalized(
    choices: list[dict[str, list[tuple[int, float]]]],
) -> list[dict[str, list[tuple[int, float]]]]:
    result = []
    for state, actions in enumerate(choices):
        fixed = {}
        for action, row in actions.items():
            total = math.fsum(prob for _, prob in row)
            if total > 0 and abs(total - 1.0) > ROW_SUM_TOLERANCE:
                logger.warning(
                    "Renormalizing state %d action %s (row sum %.12g)", state, action, total
                )
                row = [(target, prob / total) for target, prob in row]

            fixed[action] = row

        result.append(fixed)

    return result


def _read_rewards(path: Path, name: str, model: Model) -> RewardStructure:
    if isinstance(model, Dtmc):
        values = np.zeros(model.num_states, dtype=np.int64)
        expected = 2
    else:
        values = np.zeros(model.num_choices, dtype=np.int64)
        expected = 3

    for line, tokens in _lines(path):
        if len(tokens) != expected:
            raise ParseError(
                f"expected {expected} fields, got {len(tokens)}", path=str(path), line=line
            )

        state = _int(tokens[0], path, line, "state")
        if state >= model.num_states:
            raise ParseError(f"state {state} out of range", path=str(path), line=line)

        value = _float(tokens[-1], path, line, "reward")
        if value < 0 or not value.is_integer():
            raise ParseError(
                f"rewards must be nonnegative integers, got {tokens[-1]}",
                path=str(path),
                line=line,
            )

        if isinstance(model, Dtmc):
            values[state] = int(value)
        else:
            for choice in model.choices(state):
                if model.actions[choice] == tokens[1]:
                    values[choice] = int(value)
                    break
            else:
                raise ParseError(
                    f"state {state} has no action {tokens[1]!r}", path=str(path), line=line
                )

    return RewardStructure(values, name)


def parse_model(
    files: ModelFiles,
    kind: Literal["dtmc", "mdp"],
    *,
    renormalize: bool = False,
) -> tuple[Model, dict[str, RewardStructure]]:
    """
    Read a model and its reward structures from the explicit format.

    :param files: the files to read
    :param kind: ``dtmc`` or ``mdp``
    :param renormalize: divide every transition row by its sum instead of rejecting rows
        that do not sum to 1
    :raises ParseError: on malformed input
    :raises ValidationError: if the model violates a structural invariant
    :raises OSError: if a file cannot be read

    """
    num_states, choices = _read_transitions(files.transitions, kind)
    labels: dict[str, list[int]] = {}
    initial = 0
    if files.labels is not None:
        labels, initial = _read_labels(files.labels, num_states)

    if renormalize:
        choices = _renormalized(choices)

    model: Model
    if kind == "dtmc":
        model = Dtmc.from_rows(
            [actions.get("step", []) for actions in choices], initial, labels
        )
    else:
        model = Mdp.from_choices(
            [list(actions.items()) for actions in choices], initial, labels
        )

    rewards = {
        name: _read_rewards(path, name, model) for name, path in files.rewards.items()
    }
    violations = validate(model, rewards.values())
    if violations:
        raise ValidationError(violations)

    logger.info(
        "Read %s with %d states from %s", kind.upper(), model.num_states, files.transitions
    )
    return model, rewards


def _format_number(value: float) -> str:
    if math.isinf(value):
        return "inf"
    elif float(value).is_integer():
        return str(int(value))

    return repr(float(value))


def write_model(
    model: Model,
    rewards: Mapping[str, RewardStructure],
    stem: PathLike,
) -> ModelFiles:
    """
    Write a model and its reward structures in the explicit format.

    The initial state is written with the ``init`` label.

    :return: the locations of the written files

    """
    located = ModelFiles.from_stem(stem, tuple(rewards))
    labels_path = located.transitions.with_suffix(".lab")
    files = ModelFiles(located.transitions, labels_path, located.rewards)
    matrix = model.matrix
    with files.transitions.open("w", encoding="utf-8") as stream:
        stream.write(f"STATES {model.num_states}\n")
        for row in range(matrix.shape[0]):
            start, end = matrix.indptr[row], matrix.indptr[row + 1]
            if isinstance(model, Dtmc):
                prefix = f"{row}"
            else:
                prefix = f"{model.choice_state[row]} {model.actions[row]}"

            for target, prob in zip(matrix.indices[start:end], matrix.data[start:end]):
                stream.write(f"{prefix} {target} {float(prob)!r}\n")

    names = sorted(model.labels)
    with labels_path.open("w", encoding="utf-8") as stream:
        for state in range(model.num_states):
            present = [name for name in names if model.labels[name][state]]
            if state == model.initial and INITIAL_LABEL not in present:
                present.insert(0, INITIAL_LABEL)

            if present:
                stream.write(f"{state}: {' '.join(present)}\n")

    for name, structure in rewards.items():
        with files.rewards[name].open("w", encoding="utf-8") as stream:
            for index, value in enumerate(structure.values.tolist()):
                if value == 0:
                    continue
                elif isinstance(model, Dtmc):
                    stream.write(f"{index} {value}\n")
                else:
                    state = model.choice_state[index]
                    stream.write(f"{state} {model.actions[index]} {value}\n")

    logger.debug("Wrote model to %s", files.transitions)
    return files


def _distribution_rows(dist: Dist) -> tuple[list[float], list[float], float]:
    values, probs = dist.atoms()
    if not isinstance(dist, SparseDist):
        merged, inverse = np.unique(values, return_inverse=True)
        probs = np.bincount(inverse.ravel(), weights=probs, minlength=len(merged))
        values = merged

    return values.tolist(), probs.tolist(), dist.p_inf


def distribution_document(dist: Dist) -> dict[str, Any]:
    """Return a distribution as a JSON-compatible ``support``/``probs``/``p_inf`` mapping."""
    values, probs, p_inf = _distribution_rows(dist)
    return {
        "support": [int(v) if float(v).is_integer() else v for v in values],
        "probs": probs,
        "p_inf": p_inf,
    }


def write_distribution(
    dist: Dist, path: PathLike, format: Optional[Literal["csv", "json"]] = None
) -> None:
    """
    Write a distribution as CSV (``value,probability`` rows, with an ``inf`` row for the
    mass at infinity) or JSON (``{"support": [...], "probs": [...], "p_inf": x}``).

    :param format: ``csv`` or ``json``; inferred from the file suffix if omitted

    """
    path = Path(path)
    format = format or ("json" if path.suffix.lower() == ".json" else "csv")
    if format == "json":
        path.write_text(json.dumps(distribution_document(dist)) + "\n", encoding="utf-8")
        return

    values, probs, p_inf = _distribution_rows(dist)
    with path.open("w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["value", "probability"])
        for value, prob in zip(values, probs):
            writer.writerow([_format_number(value), repr(prob)])

        if p_inf > 0:
            writer.writerow(["inf", repr(p_inf)])


def read_distribution(path: PathLike) -> SparseDist:
    """
    Read back a distribution written by :func:`write_distribution`.

    :raises ParseError: if the file is malformed or its support is not integral

    """
    path = Path(path)
    values: list[float] = []
    probs: list[float] = []
    p_inf = 0.0
    if path.suffix.lower() == ".json":
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
            values = [float(v) for v in document["support"]]
            probs = [float(p) for p in document["probs"]]
            p_inf = float(document.get("p_inf", 0.0))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"malformed distribution: {exc}", path=str(path)) from exc
    else:
        with path.open(encoding="utf-8", newline="") as stream:
            reader = csv.reader(stream)
            header = next(reader, None)
            if header != ["value", "probability"]:
                raise ParseError("expected header 'value,probability'", path=str(path), line=1)

            for line, row in enumerate(reader, start=2):
                if len(row) != 2:
                    raise ParseError("expected 2 fields", path=str(path), line=line)

                prob = _float(row[1], path, line, "probability")
                if row[0] == "inf":
                    p_inf += prob
                else:
                    values.append(_float(row[0], path, line, "value"))
                    probs.append(prob)

    if not all(float(v).is_integer() and v >= 0 for v in values):
        raise ParseError("distribution support is not a set of naturals", path=str(path))

    return SparseDist.from_arrays([int(v) for v in values], probs, p_inf)


def write_policy(
    policy: Policy,
    mdp: Mdp,
    path: PathLike,
    *,
    states: Optional[np.ndarray] = None,
    automaton_states: Optional[np.ndarray] = None,
    budgets: Optional[np.ndarray] = None,
) -> None:
    """
    Write a policy as ``state [q<automaton state>] [budget] action-label`` lines.

    States where the policy is undefined are skipped.

    :param policy: a policy on ``mdp``
    :param mdp: the MDP the policy was computed on (usually a product)
    :param states: the model state to print for each state of ``mdp`` (default: the
        state itself)
    :param automaton_states: the automaton state of each state of ``mdp``, written as
        memory column
    :param budgets: the remaining budget of each state of ``mdp``, written as memory
        column

    """
    with Path(path).open("w", encoding="utf-8") as stream:
        for state in range(len(policy)):
            choice = policy[state]
            if choice < 0:
                continue

            fields = [str(state if states is None else int(states[state]))]
            if automaton_states is not None:
                fields.append(f"q{int(automaton_states[state])}")

            if budgets is not None:
                fields.append(_format_number(float(budgets[state])))

            fields.append(mdp.actions[int(mdp.row_groups[state]) + choice])
            stream.write(" ".join(fields) + "\n")


def read_policy(path: PathLike, mdp: Mdp) -> Policy:
    """
    Read a memoryless policy written as ``state action-label`` lines.

    States without a line are left undefined.

    :raises ParseError: on malformed lines, unknown actions or finite-memory policy files

    """
    path = Path(path)
    choices = np.full(mdp.num_states, -1, dtype=np.int64)
    for line, tokens in _lines(path):
        if len(tokens) > 2:
            raise ParseError(
                "finite-memory policies (with memory columns) cannot be read as memoryless",
                path=str(path),
                line=line,
            )
        elif len(tokens) != 2:
            raise ParseError(f"expected 2 fields, got {len(tokens)}", path=str(path), line=line)

        state = _int(tokens[0], path, line, "state")
        if state >= mdp.num_states:
            raise ParseError(f"state {state} out of range", path=str(path), line=line)

        if choices[state] >= 0:
            raise ParseError(f"duplicate entry for state {state}", path=str(path), line=line)

        for choice in mdp.choices(state):
            if mdp.actions[choice] == tokens[1]:
                choices[state] = choice - int(mdp.row_groups[state])
                break
        else:
            raise ParseError(
                f"state {state} has no action {tokens[1]!r}", path=str(path), line=line
            )

    return Policy(choices)
