from __future__ import annotations

import random

import pytest

from asphalt.distmc.exceptions import NotCosafe, QuerySyntaxError
from asphalt.distmc.ltl import (
    FALSE,
    TRUE,
    And,
    Atom,
    Eventually,
    Next,
    Or,
    Until,
    atoms,
    depth,
    parse_cosafe,
)

from .oracles import random_formula

a, b, c, d = Atom("a"), Atom("b"), Atom("c"), Atom("d")


@pytest.mark.parametrize(
    "text, expected",
    [
        pytest.param("a", a, id="atom"),
        pytest.param("true", TRUE, id="true"),
        pytest.param("!false", TRUE, id="negated_constant"),
        pytest.param("!!a", a, id="double_negation"),
        pytest.param("a | b & c U d", Or(a, And(b, Until(c, d))), id="precedence"),
        pytest.param("a U b U c", Until(a, Until(b, c)), id="until_right_assoc"),
        pytest.param("a & b & c", And(And(a, b), c), id="and_left_assoc"),
        pytest.param("F !a & X b", And(Eventually(Atom("a", True)), Next(b)), id="unary"),
        pytest.param("F (a | b)", Eventually(Or(a, b)), id="parentheses"),
        pytest.param("X F a U b", Until(Next(Eventually(a)), b), id="unary_binds_tighter"),
        pytest.param("  goal_1 ", Atom("goal_1"), id="whitespace"),
    ],
)
def test_parse(text: str, expected: object) -> None:
    assert parse_cosafe(text) == expected


@pytest.mark.parametrize(
    "text, message, position",
    [
        pytest.param("", "expected a formula", 0, id="empty"),
        pytest.param("a &", "expected a formula", 3, id="dangling_operator"),
        pytest.param("(a | b", r"expected '\)'", 6, id="unbalanced"),
        pytest.param("a b", "unexpected token 'b'", 2, id="juxtaposition"),
        pytest.param("a $ b", "unexpected character", 2, id="character"),
        pytest.param("U a", "expected a formula", 0, id="leading_until"),
    ],
)
def test_syntax_errors(text: str, message: str, position: int) -> None:
    with pytest.raises(QuerySyntaxError, match=message) as exc:
        parse_cosafe(text)

    assert exc.value.position == position
    assert exc.value.text == text
    assert exc.value.exit_code == 2


def test_error_offset() -> None:
    with pytest.raises(QuerySyntaxError) as exc:
        parse_cosafe("a &", offset=10)

    assert exc.value.position == 13


@pytest.mark.parametrize(
    "text, subformula",
    [
        pytest.param("G a", "G a", id="globally"),
        pytest.param("F G a", "G a", id="nested_globally"),
        pytest.param("!(a & b)", "!(a & b)", id="negated_and"),
        pytest.param("!F a", "!F a", id="negated_eventually"),
        pytest.param("a U !X b", "!X b", id="negated_next"),
    ],
)
def test_not_cosafe(text: str, subformula: str) -> None:
    with pytest.raises(NotCosafe) as exc:
        parse_cosafe(text)

    assert exc.value.subformula == subformula
    assert exc.value.exit_code == 2


def test_atoms_and_depth() -> None:
    formula = parse_cosafe("a U (b & F !c) | true")
    assert atoms(formula) == {"a", "b", "c"}
    assert depth(formula) == 4
    assert atoms(FALSE) == frozenset()
    assert depth(a) == 0


def test_str() -> None:
    assert str(parse_cosafe("F !a & X (b U c)")) == "(F !a & X (b U c))"


@pytest.mark.parametrize("seed", range(20))
def test_str_parses_back(seed: int) -> None:
    formula = random_formula(random.Random(seed), ["a", "b", "c"], 4)
    assert parse_cosafe(str(formula)) == formula
