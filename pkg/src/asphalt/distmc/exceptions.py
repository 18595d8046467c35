from __future__ import annotations

from collections.abc import Iterable, Sequence


class ModelCheckingError(Exception):
    """
    Base class for all errors raised by the model checking pipeline.

    :ivar stage: name of the pipeline stage that raised the error (filled in by the
        orchestrator when it is not known at the raise site)
    """

    exit_code = 1

    def __init__(self, message: str, *, stage: str | None = None) -> None:
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        message = super().__str__()
        return f"[{self.stage}] {message}" if self.stage else message


class ParseError(ModelCheckingError):
    exit_code = 2

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        location = ":".join(str(part) for part in (path, line) if part is not None)
        super().__init__(f"{location}: {message}" if location else message)
        self.path = path
        self.line = line


class ValidationError(ModelCheckingError):
    exit_code = 2

    def __init__(self, violations: Sequence[str]) -> None:
        super().__init__(
            f"model failed validation with {len(violations)} violation(s): "
            + "; ".join(violations[:10])
        )
        self.violations = list(violations)


class QuerySyntaxError(ModelCheckingError):
    """Raised on malformed formula or query text."""

    exit_code = 2

    def __init__(self, message: str, text: str, position: int) -> None:
        super().__init__(f"{message} at position {position}: {text!r}")
        self.text = text
        self.position = position


class NotCosafe(ModelCheckingError):
    exit_code = 2

    def __init__(self, subformula: str) -> None:
        super().__init__(f"formula is not syntactically co-safe: {subformula}")
        self.subformula = subformula


class UnsupportedObjective(ModelCheckingError):
    exit_code = 2


class UnsupportedSpec(ModelCheckingError):
    exit_code = 2


class AtomMismatch(ModelCheckingError):
    exit_code = 2

    def __init__(self, atoms: Iterable[str]) -> None:
        self.atoms = sorted(atoms)
        super().__init__(
            "formula refers to labels the model does not define: "
            + ", ".join(self.atoms)
        )


class StateBlowup(ModelCheckingError):
    exit_code = 3


class UndefinedChoice(ModelCheckingError):
    exit_code = 3

    def __init__(self, states: Sequence[int]) -> None:
        super().__init__(
            f"policy has no choice for {len(states)} reachable state(s): "
            + ", ".join(str(s) for s in states[:20])
        )
        self.states = list(states)


class NotAlmostSureReachable(ModelCheckingError):
    exit_code = 3

    def __init__(self, states: Sequence[int]) -> None:
        super().__init__(
            f"no policy reaches the target with probability 1 from {len(states)} "
            "reachable state(s): " + ", ".join(str(s) for s in states[:20])
        )
        self.states = list(states)


class InfiniteMass(ModelCheckingError):
    exit_code = 3


class ParamMismatch(ModelCheckingError):
    exit_code = 3


class NotAnOptimization(ModelCheckingError):
    exit_code = 3


class NonConvergence(ModelCheckingError):
    exit_code = 4

    def __init__(self, message: str, *, iterations: int, residual: float) -> None:
        super().__init__(f"{message} (iterations={iterations}, residual={residual:g})")
        self.iterations = iterations
        self.residual = residual
