"""Lexer, parser and printer for the mini-ML source language.

The language is a small OCaml-like subset: let/let rec (top level and
local), lambdas, conditionals, int and float arithmetic with distinct
operator families (+ vs +.), comparisons, arrays with get/set/literal
syntax, tuples, sequencing, and `open` for cross-unit references.
Float literals require a decimal point, so inference needs no
overloading. Source files use extension `.mx`.

Every AST node carries a source location; locations are excluded from
structural equality so that parse/print round-trips compare equal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Iterator

from .diagnostics import Loc, ParseError

KEYWORDS = {
    "let", "rec", "in", "fun", "if", "then", "else",
    "open", "true", "false", "mod",
}

# Multi-char operators must come before their prefixes.
_OPERATORS = [
    "+.", "-.", "*.", "/.", "->", "<-", "<=", ">=", "&&", "||", ";;",
    "[|", "|]", "+", "-", "*", "/", "=", "<", ">", "(", ")", ".", ",", ";",
]

_LIDENT_RE = re.compile(r"[a-z_][A-Za-z0-9_']*")
_UIDENT_RE = re.compile(r"[A-Z][A-Za-z0-9_']*")
_NUMBER_RE = re.compile(r"[0-9]+(\.[0-9]*([eE][-+]?[0-9]+)?|[eE][-+]?[0-9]+)?")


@dataclass(frozen=True)
class Token:
    kind: str  # INT FLOAT LIDENT UIDENT KEYWORD OP EOF
    text: str
    loc: Loc


def tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("(*", i):
            depth, j, l2, c2 = 1, i + 2, line, col + 2
            while j < n and depth:
                if text.startswith("(*", j):
                    depth, j, c2 = depth + 1, j + 2, c2 + 2
                elif text.startswith("*)", j):
                    depth, j, c2 = depth - 1, j + 2, c2 + 2
                elif text[j] == "\n":
                    j, l2, c2 = j + 1, l2 + 1, 1
                else:
                    j += 1
                    c2 += 1
            if depth:
                raise ParseError("unterminated comment", Loc(line, col))
            i, line, col = j, l2, c2
            continue
        loc = Loc(line, col)
        m = _NUMBER_RE.match(text, i)
        if m:
            lit = m.group()
            kind = "FLOAT" if ("." in lit or "e" in lit or "E" in lit) else "INT"
            toks.append(Token(kind, lit, loc))
            i += len(lit)
            col += len(lit)
            continue
        m = _LIDENT_RE.match(text, i)
        if m:
            word = m.group()
            toks.append(Token("KEYWORD" if word in KEYWORDS else "LIDENT", word, loc))
            i += len(word)
            col += len(word)
            continue
        m = _UIDENT_RE.match(text, i)
        if m:
            toks.append(Token("UIDENT", m.group(), loc))
            i += len(m.group())
            col += len(m.group())
            continue
        for op in _OPERATORS:
            if text.startswith(op, i):
                toks.append(Token("OP", op, loc))
                i += len(op)
                col += len(op)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", loc)
    toks.append(Token("EOF", "", Loc(line, col)))
    return toks


# ---------------------------------------------------------------------------
# AST


@dataclass(eq=True)
class Expr:
    loc: Loc = field(kw_only=True, compare=False, repr=False)
    # Filled in by type inference; never part of structural equality.
    ty: Any = field(default=None, kw_only=True, compare=False, repr=False)


@dataclass(eq=True)
class IntLit(Expr):
    value: int


@dataclass(eq=True)
class FloatLit(Expr):
    value: float


@dataclass(eq=True)
class BoolLit(Expr):
    value: bool


@dataclass(eq=True)
class UnitLit(Expr):
    pass


@dataclass(eq=True)
class Var(Expr):
    name: str
    scheme: Any = field(default=None, kw_only=True, compare=False, repr=False)
    origin: Any = field(default=None, kw_only=True, compare=False, repr=False)


@dataclass(eq=True)
class QualVar(Expr):
    unit: str
    name: str
    scheme: Any = field(default=None, kw_only=True, compare=False, repr=False)
    origin: Any = field(default=None, kw_only=True, compare=False, repr=False)


@dataclass(eq=True)
class Param:
    loc: Loc = field(kw_only=True, compare=False, repr=False)


@dataclass(eq=True)
class PVar(Param):
    name: str


@dataclass(eq=True)
class PUnit(Param):
    pass


@dataclass(eq=True)
class PTuple(Param):
    names: tuple[str, ...]


@dataclass(eq=True)
class Lambda(Expr):
    params: tuple[Param, ...]
    body: Expr


@dataclass(eq=True)
class App(Expr):
    fn: Expr
    arg: Expr


@dataclass(eq=True)
class LetIn(Expr):
    rec: bool
    name: str
    params: tuple[Param, ...]
    bound: Expr
    body: Expr


@dataclass(eq=True)
class If(Expr):
    cond: Expr
    then: Expr
    els: Expr


@dataclass(eq=True)
class BinOp(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(eq=True)
class Get(Expr):
    arr: Expr
    idx: Expr


@dataclass(eq=True)
class Set(Expr):
    arr: Expr
    idx: Expr
    value: Expr


@dataclass(eq=True)
class ArrayLit(Expr):
    elems: tuple[Expr, ...]


@dataclass(eq=True)
class TupleLit(Expr):
    elems: tuple[Expr, ...]


@dataclass(eq=True)
class Seq(Expr):
    first: Expr
    second: Expr


@dataclass(eq=True)
class Item:
    loc: Loc = field(kw_only=True, compare=False, repr=False)


@dataclass(eq=True)
class OpenItem(Item):
    unit: str


@dataclass(eq=True)
class LetItem(Item):
    rec: bool
    name: str
    params: tuple[Param, ...]
    expr: Expr


@dataclass(eq=True)
class SurfaceUnit:
    unit_name: str
    items: tuple[Item, ...]


INT_OPS = {"+", "-", "*", "/", "mod"}
FLOAT_OPS = {"+.", "-.", "*.", "/."}
CMP_OPS = {"=", "<", ">", "<=", ">="}
BOOL_OPS = {"&&", "||"}


# ---------------------------------------------------------------------------
# Parser (recursive descent, one token of lookahead)


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at_op(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "OP" and t.text == text

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "KEYWORD" and t.text == word

    def expect_op(self, text: str) -> Token:
        if not self.at_op(text):
            raise ParseError(f"expected {text!r}, got {self.peek().text!r}", self.peek().loc)
        return self.next()

    def expect_kw(self, word: str) -> Token:
        if not self.at_kw(word):
            raise ParseError(f"expected {word!r}, got {self.peek().text!r}", self.peek().loc)
        return self.next()

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind}, got {t.text!r}", t.loc)
        return self.next()

    # -- items

    def parse_unit(self, unit_name: str) -> SurfaceUnit:
        items: list[Item] = []
        seen: set[str] = set()
        while self.peek().kind != "EOF":
            if self.at_op(";;"):
                self.next()
                continue
            items.append(self.parse_item(seen))
        return SurfaceUnit(unit_name, tuple(items))

    def parse_item(self, seen: set[str]) -> Item:
        t = self.peek()
        if self.at_kw("open"):
            self.next()
            u = self.expect("UIDENT")
            return OpenItem(u.text, loc=t.loc)
        if self.at_kw("let"):
            self.next()
            rec = False
            if self.at_kw("rec"):
                self.next()
                rec = True
            name = self.expect("LIDENT")
            if name.text in seen:
                raise ParseError(f"duplicate top-level name {name.text!r}", name.loc)
            seen.add(name.text)
            params = self.parse_params()
            self.expect_op("=")
            expr = self.parse_expr()
            return LetItem(rec, name.text, params, expr, loc=t.loc)
        raise ParseError(f"expected 'let' or 'open', got {t.text!r}", t.loc)

    def parse_params(self) -> tuple[Param, ...]:
        params: list[Param] = []
        while True:
            t = self.peek()
            if t.kind == "LIDENT":
                self.next()
                params.append(PVar(t.text, loc=t.loc))
            elif self.at_op("(") and self.peek(1).kind == "OP" and self.peek(1).text == ")":
                self.next()
                self.next()
                params.append(PUnit(loc=t.loc))
            elif (
                self.at_op("(")
                and self.peek(1).kind == "LIDENT"
                and self.peek(2).kind == "OP"
                and self.peek(2).text in (",", ")")
            ):
                self.next()
                names = [self.expect("LIDENT").text]
                while self.at_op(","):
                    self.next()
                    names.append(self.expect("LIDENT").text)
                self.expect_op(")")
                if len(names) == 1:
                    params.append(PVar(names[0], loc=t.loc))
                else:
                    params.append(PTuple(tuple(names), loc=t.loc))
            else:
                break
        return tuple(params)

    # -- expressions, lowest precedence first

    def parse_expr(self) -> Expr:
        e = self.parse_noseq()
        if self.at_op(";"):
            loc = self.next().loc
            rest = self.parse_expr()
            return Seq(e, rest, loc=loc)
        return e

    def parse_noseq(self) -> Expr:
        t = self.peek()
        if self.at_kw("if"):
            self.next()
            cond = self.parse_noseq()
            self.expect_kw("then")
            then = self.parse_noseq()
            self.expect_kw("else")
            els = self.parse_noseq()
            return If(cond, then, els, loc=t.loc)
        if self.at_kw("fun"):
            self.next()
            params = self.parse_params()
            if not params:
                raise ParseError("fun requires at least one parameter", t.loc)
            self.expect_op("->")
            # lambda and let-in bodies extend over `;`, like OCaml
            body = self.parse_expr()
            return Lambda(params, body, loc=t.loc)
        if self.at_kw("let"):
            self.next()
            rec = False
            if self.at_kw("rec"):
                self.next()
                rec = True
            name = self.expect("LIDENT")
            params = self.parse_params()
            self.expect_op("=")
            bound = self.parse_expr()
            self.expect_kw("in")
            body = self.parse_expr()
            return LetIn(rec, name.text, params, bound, body, loc=t.loc)
        return self.parse_or()

    def parse_or(self) -> Expr:
        e = self.parse_and()
        if self.at_op("||"):
            loc = self.next().loc
            return BinOp("||", e, self.parse_or(), loc=loc)
        return e

    def parse_and(self) -> Expr:
        e = self.parse_cmp()
        if self.at_op("&&"):
            loc = self.next().loc
            return BinOp("&&", e, self.parse_and(), loc=loc)
        return e

    def parse_cmp(self) -> Expr:
        e = self.parse_add()
        while self.peek().kind == "OP" and self.peek().text in CMP_OPS:
            op = self.next()
            e = BinOp(op.text, e, self.parse_add(), loc=op.loc)
        return e

    def parse_add(self) -> Expr:
        e = self.parse_mul()
        while self.peek().kind == "OP" and self.peek().text in ("+", "-", "+.", "-."):
            op = self.next()
            e = BinOp(op.text, e, self.parse_mul(), loc=op.loc)
        return e

    def parse_mul(self) -> Expr:
        e = self.parse_app()
        while (self.peek().kind == "OP" and self.peek().text in ("*", "/", "*.", "/.")) or self.at_kw("mod"):
            op = self.next()
            e = BinOp(op.text, e, self.parse_app(), loc=op.loc)
        return e

    def _starts_atom(self) -> bool:
        t = self.peek()
        if t.kind in ("INT", "FLOAT", "LIDENT", "UIDENT"):
            return True
        if t.kind == "KEYWORD" and t.text in ("true", "false"):
            return True
        return t.kind == "OP" and t.text in ("(", "[|")

    def parse_app(self) -> Expr:
        e = self.parse_postfix()
        while self._starts_atom():
            arg = self.parse_postfix()
            e = App(e, arg, loc=arg.loc)
        return e

    def parse_postfix(self) -> Expr:
        e = self.parse_atom()
        while self.at_op(".") and self.peek(1).kind == "OP" and self.peek(1).text == "(":
            loc = self.next().loc
            self.expect_op("(")
            idx = self.parse_expr()
            self.expect_op(")")
            if self.at_op("<-"):
                self.next()
                value = self.parse_noseq()
                return Set(e, idx, value, loc=loc)
            e = Get(e, idx, loc=loc)
        return e

    def parse_atom(self) -> Expr:
        t = self.peek()
        if t.kind == "INT":
            self.next()
            return IntLit(int(t.text), loc=t.loc)
        if t.kind == "FLOAT":
            self.next()
            return FloatLit(float(t.text), loc=t.loc)
        if self.at_kw("true") or self.at_kw("false"):
            self.next()
            return BoolLit(t.text == "true", loc=t.loc)
        if t.kind == "LIDENT":
            self.next()
            return Var(t.text, loc=t.loc)
        if t.kind == "UIDENT":
            self.next()
            self.expect_op(".")
            name = self.expect("LIDENT")
            return QualVar(t.text, name.text, loc=t.loc)
        if self.at_op("[|"):
            self.next()
            elems: list[Expr] = []
            if not self.at_op("|]"):
                elems.append(self.parse_noseq())
                while self.at_op(";"):
                    self.next()
                    elems.append(self.parse_noseq())
            self.expect_op("|]")
            return ArrayLit(tuple(elems), loc=t.loc)
        if self.at_op("("):
            self.next()
            if self.at_op(")"):
                self.next()
                return UnitLit(loc=t.loc)
            e = self.parse_expr()
            if self.at_op(","):
                elems = [e]
                while self.at_op(","):
                    self.next()
                    elems.append(self.parse_noseq())
                self.expect_op(")")
                return TupleLit(tuple(elems), loc=t.loc)
            self.expect_op(")")
            return e
        raise ParseError(f"expected an expression, got {t.text!r}", t.loc)


def parse_unit(source_text: str, unit_name: str) -> SurfaceUnit:
    """Parse one compilation unit. Deterministic; raises ParseError with a
    location on malformed input or a duplicate top-level name."""
    parser = _Parser(tokenize(source_text))
    return parser.parse_unit(unit_name)


def parse_expr(source_text: str) -> Expr:
    parser = _Parser(tokenize(source_text))
    e = parser.parse_expr()
    tail = parser.peek()
    if tail.kind != "EOF":
        raise ParseError(f"trailing input {tail.text!r}", tail.loc)
    return e


# ---------------------------------------------------------------------------
# Printer. Output is fully parenthesized where needed and parses back to a
# structurally identical tree.


def _print_access_base(arr: Expr) -> str:
    # `70.(i)` would lex the number as the float `70.`; keep numeric
    # literals in access position parenthesized
    s = print_expr(arr)
    if isinstance(arr, (IntLit, FloatLit)):
        return f"({s})"
    return s


def _print_param(p: Param) -> str:
    if isinstance(p, PVar):
        return p.name
    if isinstance(p, PUnit):
        return "()"
    assert isinstance(p, PTuple)
    return "(" + ", ".join(p.names) + ")"


def print_expr(e: Expr) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        return repr(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, UnitLit):
        return "()"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, QualVar):
        return f"{e.unit}.{e.name}"
    if isinstance(e, Lambda):
        ps = " ".join(_print_param(p) for p in e.params)
        return f"(fun {ps} -> {print_expr(e.body)})"
    if isinstance(e, App):
        return f"({print_expr(e.fn)} {print_expr(e.arg)})"
    if isinstance(e, LetIn):
        head = "let rec" if e.rec else "let"
        ps = "".join(" " + _print_param(p) for p in e.params)
        return f"({head} {e.name}{ps} = {print_expr(e.bound)} in {print_expr(e.body)})"
    if isinstance(e, If):
        return f"(if {print_expr(e.cond)} then {print_expr(e.then)} else {print_expr(e.els)})"
    if isinstance(e, BinOp):
        return f"({print_expr(e.lhs)} {e.op} {print_expr(e.rhs)})"
    if isinstance(e, Get):
        return f"{_print_access_base(e.arr)}.({print_expr(e.idx)})"
    if isinstance(e, Set):
        return f"({_print_access_base(e.arr)}.({print_expr(e.idx)}) <- {print_expr(e.value)})"
    if isinstance(e, ArrayLit):
        return "[|" + "; ".join(print_expr(x) for x in e.elems) + "|]"
    if isinstance(e, TupleLit):
        return "(" + ", ".join(print_expr(x) for x in e.elems) + ")"
    if isinstance(e, Seq):
        return f"({print_expr(e.first)}; {print_expr(e.second)})"
    raise TypeError(f"unknown expression node {e!r}")


def print_unit(u: SurfaceUnit) -> str:
    lines = []
    for item in u.items:
        if isinstance(item, OpenItem):
            lines.append(f"open {item.unit}")
        else:
            assert isinstance(item, LetItem)
            head = "let rec" if item.rec else "let"
            ps = "".join(" " + _print_param(p) for p in item.params)
            lines.append(f"{head} {item.name}{ps} = {print_expr(item.expr)}")
    return "\n".join(lines) + ("\n" if lines else "")


def iter_exprs(e: Expr) -> Iterator[Expr]:
    """Pre-order traversal of an expression tree."""
    yield e
    for child in _children(e):
        yield from iter_exprs(child)


def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Lambda):
        return (e.body,)
    if isinstance(e, App):
        return (e.fn, e.arg)
    if isinstance(e, LetIn):
        return (e.bound, e.body)
    if isinstance(e, If):
        return (e.cond, e.then, e.els)
    if isinstance(e, BinOp):
        return (e.lhs, e.rhs)
    if isinstance(e, Get):
        return (e.arr, e.idx)
    if isinstance(e, Set):
        return (e.arr, e.idx, e.value)
    if isinstance(e, (ArrayLit, TupleLit)):
        return tuple(e.elems)
    if isinstance(e, Seq):
        return (e.first, e.second)
    return ()
