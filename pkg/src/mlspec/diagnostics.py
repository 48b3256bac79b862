"""Source locations and the exception hierarchy shared by all compiler phases.

Errors fall into three classes, mirrored by the CLI exit codes:
user errors (bad source, bad artifacts), runtime errors raised while a
program executes, and internal errors that indicate a bug in the
compiler itself rather than in user input.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Loc:
    """1-based line/column position in a source file."""

    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class MlError(Exception):
    """Base class for user-facing errors (CLI exit code 1)."""

    def __init__(self, msg: str, loc: Loc | None = None):
        self.msg = msg
        self.loc = loc
        super().__init__(f"{loc}: {msg}" if loc is not None else msg)


class ParseError(MlError):
    pass


class TypeCheckError(MlError):
    pass


class ArtifactError(MlError):
    """Malformed or incompatible compiled-unit data (bad s-expression,
    version mismatch, interface/implementation disagreement)."""


class EvalError(Exception):
    """Runtime failure of the evaluated program (CLI exit code 2):
    out-of-bounds access, division by zero, exceeded step budget."""


class CompilerBug(Exception):
    """Internal invariant violation (CLI exit code 3). Never a user error."""


class MatchFailure(CompilerBug):
    """One-directional unification was asked to match a scheme against a
    type that is not an instance of it."""


class KindSoundnessViolation(CompilerBug):
    """A specialized array access met an array whose runtime representation
    tag disagrees with the static kind."""
