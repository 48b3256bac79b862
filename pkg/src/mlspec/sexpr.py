"""Tiny s-expression reader/writer.

This is the substrate for every textual artifact the compiler produces:
IR dumps and compiled-unit files. Atoms are ints, floats or symbols
(bare tokens); floats always carry a '.' or an exponent so the three
atom classes never overlap.
"""

from __future__ import annotations

import re

from .diagnostics import ArtifactError

SExpr = int | float | str | list

_INT_RE = re.compile(r"^[-+]?[0-9]+$")
_FLOAT_RE = re.compile(r"^[-+]?([0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)([eE][-+]?[0-9]+)?$")
_TOKEN_RE = re.compile(r"[()]|[^\s()]+")


def dumps(x: SExpr) -> str:
    if isinstance(x, bool):
        raise ArtifactError("bare booleans have no atom form")
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, str):
        return x
    return "(" + " ".join(dumps(e) for e in x) + ")"


def _classify(tok: str) -> SExpr:
    if _INT_RE.match(tok):
        return int(tok)
    if ("." in tok or "e" in tok or "E" in tok) and _FLOAT_RE.match(tok):
        return float(tok)
    return tok


def loads(text: str) -> SExpr:
    """Parse exactly one form; trailing junk is an error."""
    forms = loads_many(text)
    if len(forms) != 1:
        raise ArtifactError(f"expected one s-expression form, found {len(forms)}")
    return forms[0]


def loads_many(text: str) -> list[SExpr]:
    stack: list[list] = []
    out: list[SExpr] = []
    for m in _TOKEN_RE.finditer(text):
        tok = m.group()
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise ArtifactError("unbalanced ')'")
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                out.append(done)
        else:
            atom = _classify(tok)
            if stack:
                stack[-1].append(atom)
            else:
                out.append(atom)
    if stack:
        raise ArtifactError("unbalanced '('")
    return out
