"""mlspec: a mini-ML compiler and instrumented interpreter.

The pipeline (parse, infer, lower, inline, evaluate) demonstrates how
partial array-kind annotations plus explicit type applications let an
inliner turn generic array accesses into representation-specialized
ones, including across separately compiled units.
"""

from .diagnostics import (
    ArtifactError,
    CompilerBug,
    EvalError,
    KindSoundnessViolation,
    Loc,
    MatchFailure,
    MlError,
    ParseError,
    TypeCheckError,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactError",
    "CompilerBug",
    "EvalError",
    "KindSoundnessViolation",
    "Loc",
    "MatchFailure",
    "MlError",
    "ParseError",
    "TypeCheckError",
    "__version__",
]
