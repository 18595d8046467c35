"""
Syntax of the co-safe LTL fragment: formula classes and a parser.

Concrete syntax::

    formula := formula '|' formula
             | formula '&' formula
             | formula 'U' formula
             | '!' atom | 'X' formula | 'F' formula
             | atom | 'true' | 'false' | '(' formula ')'

``F``, ``X`` and ``!`` bind tightest, then ``U`` (right associative), then ``&``, then
``|``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NoReturn, Union

from asphalt.distmc.exceptions import NotCosafe, QuerySyntaxError

_TOKEN_RE = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[!&|()]))")


@dataclass(frozen=True)
class Constant:
    value: bool

    def __str__(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Atom:
    name: str
    negated: bool = False

    def __str__(self) -> str:
        return f"!{self.name}" if self.negated else self.name


@dataclass(frozen=True)
class And:
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or:
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} | {self.right})"


@dataclass(frozen=True)
class Next:
    operand: Formula

    def __str__(self) -> str:
        return f"X {self.operand}"


@dataclass(frozen=True)
class Until:
    left: Formula
    right: Formula

    def __str__(self) -> str:
        return f"({self.left} U {self.right})"


@dataclass(frozen=True)
class Eventually:
    operand: Formula

    def __str__(self) -> str:
        return f"F {self.operand}"


Formula = Union[Constant, Atom, And, Or, Next, Until, Eventually]
TRUE = Constant(True)
FALSE = Constant(False)


def atoms(formula: Formula) -> frozenset[str]:
    """Return the names of all atomic propositions in the formula."""
    if isinstance(formula, Atom):
        return frozenset([formula.name])
    elif isinstance(formula, (And, Or, Until)):
        return atoms(formula.left) | atoms(formula.right)
    elif isinstance(formula, (Next, Eventually)):
        return atoms(formula.operand)
    else:
        return frozenset()


def depth(formula: Formula) -> int:
    """Return the nesting depth of the formula (atoms and constants have depth 0)."""
    if isinstance(formula, (And, Or, Until)):
        return 1 + max(depth(formula.left), depth(formula.right))
    elif isinstance(formula, (Next, Eventually)):
        return 1 + depth(formula.operand)
    else:
        return 0


class _Parser:
    def __init__(self, text: str, offset: int = 0):
        self.text = text
        self.offset = offset
        self.tokens: list[tuple[str, int]] = []
        position = 0
        while position < len(text):
            if text[position:].isspace():
                break

            match = _TOKEN_RE.match(text, position)
            if not match:
                self.fail("unexpected character", len(text) - len(text[position:].lstrip()))

            token = match.group("ident") or match.group("op")
            self.tokens.append((token, match.start(match.lastgroup or 0)))
            position = match.end()

        self.index = 0

    def fail(self, message: str, position: int | None = None) -> NoReturn:
        if position is None:
            position = (
                self.tokens[self.index][1] if self.index < len(self.tokens) else len(self.text)
            )

        raise QuerySyntaxError(message, self.text, self.offset + position)

    def peek(self) -> str | None:
        return self.tokens[self.index][0] if self.index < len(self.tokens) else None

    def take(self) -> str:
        token = self.peek()
        if token is None:
            self.fail("unexpected end of formula")

        self.index += 1
        return token

    def parse(self) -> Formula:
        formula = self.parse_or()
        if self.peek() is not None:
            self.fail(f"unexpected token {self.peek()!r}")

        return formula

    def parse_or(self) -> Formula:
        formula = self.parse_and()
        while self.peek() == "|":
            self.take()
            formula = Or(formula, self.parse_and())

        return formula

    def parse_and(self) -> Formula:
        formula = self.parse_until()
        while self.peek() == "&":
            self.take()
            formula = And(formula, self.parse_until())

        return formula

    def parse_until(self) -> Formula:
        formula = self.parse_unary()
        if self.peek() == "U":
            self.take()
            return Until(formula, self.parse_until())

        return formula

    def parse_unary(self) -> Formula:
        token = self.peek()
        if token == "!":
            self.take()
            operand = self.parse_unary()
            if isinstance(operand, Atom):
                return Atom(operand.name, not operand.negated)
            elif isinstance(operand, Constant):
                return Constant(not operand.value)

            raise NotCosafe(f"!{operand}")
        elif token == "X":
            self.take()
            return Next(self.parse_unary())
        elif token == "F":
            self.take()
            return Eventually(self.parse_unary())
        elif token == "G":
            self.take()
            raise NotCosafe(f"G {self.parse_unary()}")

        return self.parse_primary()

    def parse_primary(self) -> Formula:
        token = self.peek()
        if token == "(":
            self.take()
            formula = self.parse_or()
            if self.peek() != ")":
                self.fail("expected ')'")

            self.take()
            return formula
        elif token is None or token in ("&", "|", ")", "U"):
            self.fail("expected a formula")

        self.take()
        if token == "true":
            return TRUE
        elif token == "false":
            return FALSE

        return Atom(token)


def parse_cosafe(text: str, *, offset: int = 0) -> Formula:
    """
    Parse a formula of the co-safe LTL fragment.

    :param text: the formula text
    :param offset: position of ``text`` within a larger input, used in error messages
    :raises QuerySyntaxError: on malformed input
    :raises NotCosafe: if the formula leaves the co-safe fragment (``G``, or negation
        applied to anything but an atom)

    """
    return _Parser(text, offset).parse()
