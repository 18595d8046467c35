"""
The query language.

A query asks for a statistic of the reward accumulated until a co-safe formula is
satisfied::

    R{E,cost}=? [ F goal ]                 statistic of a DTMC (or of a fixed policy)
    R{CVaR@0.7,cost}min=? [ F (g1 & F g2) ]   the policy minimizing the statistic

Supported statistics are ``E``, ``Var``, ``sd``, ``mode``, ``VaR@α`` and ``CVaR@α``;
minimization is only available for ``E`` and ``CVaR@α``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal, Optional

from asphalt.distmc.distributions import statistic_label
from asphalt.distmc.exceptions import QuerySyntaxError, UnsupportedObjective
from asphalt.distmc.ltl import Formula, parse_cosafe

STATISTICS = ("E", "Var", "sd", "mode", "VaR", "CVaR")
RISK_STATISTICS = ("VaR", "CVaR")
OPTIMIZABLE = ("E", "CVaR")

_QUERY_RE = re.compile(
    r"""
    \s*R\s*\{\s*(?P<statistic>[A-Za-z]+)\s*(?:@\s*(?P<alpha>[^,\s}]+))?\s*
    ,\s*(?P<reward>[A-Za-z_][A-Za-z0-9_]*)\s*\}
    \s*(?P<direction>min)?\s*=\s*\?\s*
    \[(?P<formula>.*)\]\s*$
    """,
    re.VERBOSE | re.DOTALL,
)
_STATISTIC_RE = re.compile(
    r"\s*(?P<statistic>[A-Za-z]+)\s*(?:@\s*(?P<alpha>\S+))?\s*$"
)


@dataclass(frozen=True)
class Query:
    """
    A parsed query.

    :ivar statistic: the statistic name
    :ivar alpha: the risk level of ``VaR``/``CVaR`` (``None`` otherwise)
    :ivar reward: the name of the reward structure
    :ivar direction: ``eval`` or ``min``
    :ivar formula: the co-safe formula
    """

    statistic: str
    alpha: Optional[float]
    reward: str
    direction: Literal["eval", "min"]
    formula: Formula

    @property
    def label(self) -> str:
        return statistic_label(self.statistic, self.alpha)

    @property
    def is_optimization(self) -> bool:
        return self.direction == "min"

    def __str__(self) -> str:
        statistic = self.statistic if self.alpha is None else f"{self.statistic}@{self.alpha!r}"
        direction = "min" if self.direction == "min" else ""
        return f"R{{{statistic},{self.reward}}}{direction}=? [ {self.formula} ]"


def _statistic(text: str, match: re.Match[str]) -> tuple[str, Optional[float]]:
    statistic = match.group("statistic")
    if statistic not in STATISTICS:
        raise QuerySyntaxError(
            f"unknown statistic {statistic!r}", text, match.start("statistic")
        )

    if match.group("alpha") is None:
        if statistic in RISK_STATISTICS:
            raise QuerySyntaxError(
                f"{statistic} needs a risk level ({statistic}@alpha)",
                text,
                match.end("statistic"),
            )

        return statistic, None

    if statistic not in RISK_STATISTICS:
        raise QuerySyntaxError(f"{statistic} takes no risk level", text, match.start("alpha"))

    try:
        alpha = float(match.group("alpha"))
    except ValueError:
        raise QuerySyntaxError("invalid risk level", text, match.start("alpha")) from None

    if not 0.0 < alpha < 1.0:
        raise QuerySyntaxError(
            "risk level must lie strictly between 0 and 1", text, match.start("alpha")
        )

    return statistic, alpha


def parse_query(text: str) -> Query:
    """
    Parse a query.

    :raises QuerySyntaxError: on malformed input
    :raises NotCosafe: if the formula is not in the co-safe fragment
    :raises UnsupportedObjective: when minimizing a statistic other than ``E``/``CVaR``

    """
    match = _QUERY_RE.match(text)
    if not match:
        raise QuerySyntaxError(
            "expected R{statistic,reward}=? [formula] or R{statistic,reward}min=? [formula]",
            text,
            0,
        )

    statistic, alpha = _statistic(text, match)
    direction: Literal["eval", "min"] = "min" if match.group("direction") else "eval"
    if direction == "min" and statistic not in OPTIMIZABLE:
        raise UnsupportedObjective(
            f"cannot minimize {statistic}; only {' and '.join(OPTIMIZABLE)} can be optimized"
        )

    formula = parse_cosafe(match.group("formula"), offset=match.start("formula"))
    return Query(statistic, alpha, match.group("reward"), direction, formula)


def parse_statistic(text: str) -> tuple[str, Optional[float]]:
    """
    Parse a bare statistic such as ``E``, ``sd`` or ``CVaR@0.9``.

    :raises QuerySyntaxError: on unknown statistics or invalid risk levels

    """
    match = _STATISTIC_RE.match(text)
    if not match:
        raise QuerySyntaxError("expected a statistic such as E or CVaR@0.9", text, 0)

    return _statistic(text, match)
