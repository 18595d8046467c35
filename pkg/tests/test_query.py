from __future__ import annotations

import pytest

from asphalt.distmc.exceptions import NotCosafe, QuerySyntaxError, UnsupportedObjective
from asphalt.distmc.ltl import And, Atom, Eventually
from asphalt.distmc.query import Query, parse_query, parse_statistic


def test_parse_evaluation_query() -> None:
    query = parse_query("R{E,cost}=? [ F goal ]")
    assert query == Query("E", None, "cost", "eval", Eventually(Atom("goal")))
    assert query.label == "E"
    assert not query.is_optimization


def test_parse_optimization_query() -> None:
    query = parse_query("  R{ CVaR@0.7 , time }min =? [F (g1 & F g2)]  ")
    assert query.statistic == "CVaR"
    assert query.alpha == 0.7
    assert query.reward == "time"
    assert query.is_optimization
    assert query.formula == Eventually(And(Atom("g1"), Eventually(Atom("g2"))))
    assert query.label == "CVaR@0.7"


@pytest.mark.parametrize(
    "text",
    [
        pytest.param("R{E,cost}=? [ F goal ]", id="expectation"),
        pytest.param("R{VaR@0.95,cost}=? [ (a U b) ]", id="value_at_risk"),
        pytest.param("R{CVaR@0.5,energy}min=? [ (F w1 & F w2) ]", id="minimization"),
    ],
)
def test_str_parses_back(text: str) -> None:
    query = parse_query(text)
    assert str(query) == text
    assert parse_query(str(query)) == query


@pytest.mark.parametrize(
    "text, message, position",
    [
        pytest.param("P=? [ F goal ]", "expected R{statistic,reward}", 0, id="shape"),
        pytest.param("R{median,cost}=? [ F goal ]", "unknown statistic 'median'", 2, id="stat"),
        pytest.param("R{CVaR,cost}=? [ F goal ]", "CVaR needs a risk level", 6, id="no_alpha"),
        pytest.param("R{E@0.5,cost}=? [ F goal ]", "E takes no risk level", 4, id="alpha"),
        pytest.param("R{VaR@x,cost}=? [ F goal ]", "invalid risk level", 6, id="not_number"),
        pytest.param(
            "R{VaR@1,cost}=? [ F goal ]", "strictly between 0 and 1", 6, id="out_of_range"
        ),
        pytest.param("R{E,cost}=? [ F goal & ]", "expected a formula", 23, id="formula"),
    ],
)
def test_syntax_errors(text: str, message: str, position: int) -> None:
    with pytest.raises(QuerySyntaxError, match=message) as exc:
        parse_query(text)

    assert exc.value.position == position
    assert exc.value.exit_code == 2


@pytest.mark.parametrize("statistic", ["Var", "sd", "mode", "VaR@0.9"])
def test_unsupported_objective(statistic: str) -> None:
    with pytest.raises(UnsupportedObjective, match="only E and CVaR can be optimized"):
        parse_query(f"R{{{statistic},cost}}min=? [ F goal ]")


def test_not_cosafe() -> None:
    with pytest.raises(NotCosafe):
        parse_query("R{E,cost}=? [ G safe ]")


@pytest.mark.parametrize(
    "text, expected",
    [
        pytest.param("E", ("E", None), id="expectation"),
        pytest.param(" sd ", ("sd", None), id="whitespace"),
        pytest.param("CVaR@0.9", ("CVaR", 0.9), id="cvar"),
        pytest.param("VaR @ 0.25", ("VaR", 0.25), id="spaced"),
    ],
)
def test_parse_statistic(text: str, expected: tuple[str, float | None]) -> None:
    assert parse_statistic(text) == expected


@pytest.mark.parametrize(
    "text, message",
    [
        pytest.param("", "expected a statistic", id="empty"),
        pytest.param("E@0.5", "E takes no risk level", id="alpha"),
        pytest.param("CVaR@0", "strictly between", id="range"),
        pytest.param("mean", "unknown statistic", id="unknown"),
    ],
)
def test_parse_statistic_errors(text: str, message: str) -> None:
    with pytest.raises(QuerySyntaxError, match=message):
        parse_statistic(text)
