"""Instrumented tree-walking interpreter for linked IR units.

Arrays live in one of three concrete representations: machine ints
(which also hold bools and unit), unboxed floats, or a uniform boxed
sequence. Every executed array get/set lands in exactly one statistics
bucket according to its static kind; accesses whose kind is a type
variable or the generic fallback dispatch on the representation tag at
runtime. A specialized access asserts that its kind agrees with the
tag and raises KindSoundnessViolation otherwise, since a disagreement
means the compiler produced unsound kinds.

Evaluation is strict and left-to-right; top-level bindings run in file
order, dependencies first. Integers wrap at 64 bits, floats are IEEE
doubles printed in shortest round-trip form.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import ir
from .diagnostics import EvalError, KindSoundnessViolation

_INT_MASK = (1 << 64) - 1
_INT_SIGN = 1 << 63

DEFAULT_STEP_BUDGET = 10**9


def _wrap64(n: int) -> int:
    n &= _INT_MASK
    return n - (1 << 64) if n & _INT_SIGN else n


class Value:
    __slots__ = ()


@dataclass(frozen=True)
class IntV(Value):
    value: int


@dataclass(frozen=True)
class FloatV(Value):
    value: float


@dataclass(frozen=True)
class BoolV(Value):
    value: bool


@dataclass(frozen=True)
class UnitV(Value):
    pass


UNIT_V = UnitV()


@dataclass(frozen=True)
class TupleV(Value):
    items: tuple[Value, ...]


@dataclass
class ClosureV(Value):
    params: tuple[str, ...]
    body: ir.IrTerm
    env: "Env"


INT_TAG = "int"
FLOAT_TAG = "float"
ADDR_TAG = "addr"


@dataclass
class ArrayCell:
    """Backing store with a representation tag fixed at creation.
    Float cells hold raw Python floats (the unboxed representation);
    int cells hold immediates; addr cells hold arbitrary values."""

    tag: str
    items: list

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class ArrayV(Value):
    cell: ArrayCell


@dataclass
class AccessStats:
    reads: dict[str, int] = field(
        default_factory=lambda: {"gen": 0, "spec_int": 0, "spec_float": 0, "spec_addr": 0}
    )
    writes: dict[str, int] = field(
        default_factory=lambda: {"gen": 0, "spec_int": 0, "spec_float": 0, "spec_addr": 0}
    )
    float_boxings: int = 0

    def _bucket(self, name: str) -> int:
        return self.reads[name] + self.writes[name]

    @property
    def gen(self) -> int:
        return self._bucket("gen")

    @property
    def spec_int(self) -> int:
        return self._bucket("spec_int")

    @property
    def spec_float(self) -> int:
        return self._bucket("spec_float")

    @property
    def spec_addr(self) -> int:
        return self._bucket("spec_addr")

    @property
    def all(self) -> int:
        return self.gen + self.spec_int + self.spec_float + self.spec_addr

    @property
    def gen_pct(self) -> float:
        if self.all == 0:
            return 0.0
        return round(100.0 * self.gen / self.all, 1)

    def to_dict(self) -> dict:
        return {
            "all": self.all,
            "gen": self.gen,
            "spec_int": self.spec_int,
            "spec_float": self.spec_float,
            "spec_addr": self.spec_addr,
            "gen_pct": self.gen_pct,
            "float_boxings": self.float_boxings,
            "reads": dict(self.reads),
            "writes": dict(self.writes),
        }


def report_stats(stats: AccessStats, format: str = "tsv") -> str:
    """Render counters; gen percentage has one decimal, defined as 0.0
    for an empty run."""
    d = stats.to_dict()
    if format == "json":
        return json.dumps(d)
    if format == "tsv":
        cols = ["all", "gen", "spec_int", "spec_float", "spec_addr", "gen_pct", "float_boxings"]
        header = "\t".join(cols)
        row = "\t".join(f"{d[c]:.1f}" if c == "gen_pct" else str(d[c]) for c in cols)
        return header + "\n" + row + "\n"
    raise ValueError(f"unknown stats format {format!r}")


class Env:
    __slots__ = ("frame", "parent")

    def __init__(self, parent: Optional["Env"] = None):
        self.frame: dict[str, Value] = {}
        self.parent = parent

    def child(self) -> "Env":
        return Env(self)

    def lookup(self, name: str) -> Value:
        env: Env | None = self
        while env is not None:
            v = env.frame.get(name)
            if v is not None:
                return v
            env = env.parent
        raise EvalError(f"unbound variable {name!r}")


def float_repr(f: float) -> str:
    return repr(f)


def make_array(kind: ir.ArrayKind, length: int, init: Value) -> ArrayV:
    """Allocate an array. Concrete kinds pick their representation;
    deferred kinds inspect the initializer, and a zero-length deferred
    array gets the addr representation by convention."""
    if length < 0:
        raise EvalError(f"negative array length {length}")
    if isinstance(kind, ir.KindInt):
        tag = INT_TAG
    elif isinstance(kind, ir.KindFloat):
        tag = FLOAT_TAG
    elif isinstance(kind, ir.KindAddr):
        tag = ADDR_TAG
    else:
        if length == 0:
            tag = ADDR_TAG
        elif isinstance(init, FloatV):
            tag = FLOAT_TAG
        elif isinstance(init, (IntV, BoolV, UnitV)):
            tag = INT_TAG
        else:
            tag = ADDR_TAG
    return ArrayV(_fill_cell(tag, length, init))


def _fill_cell(tag: str, length: int, init: Value) -> ArrayCell:
    if tag == FLOAT_TAG:
        if length and not isinstance(init, FloatV):
            raise KindSoundnessViolation(f"float array initialized with {init!r}")
        return ArrayCell(FLOAT_TAG, [init.value] * length if length else [])
    if tag == INT_TAG:
        if length and not isinstance(init, (IntV, BoolV, UnitV)):
            raise KindSoundnessViolation(f"int array initialized with {init!r}")
        return ArrayCell(INT_TAG, [init] * length)
    return ArrayCell(ADDR_TAG, [init] * length)


def _lit_array(kind: ir.ArrayKind, values: list[Value]) -> ArrayV:
    if isinstance(kind, ir.KindInt):
        tag = INT_TAG
    elif isinstance(kind, ir.KindFloat):
        tag = FLOAT_TAG
    elif isinstance(kind, ir.KindAddr):
        tag = ADDR_TAG
    elif not values:
        tag = ADDR_TAG
    elif isinstance(values[0], FloatV):
        tag = FLOAT_TAG
    elif isinstance(values[0], (IntV, BoolV, UnitV)):
        tag = INT_TAG
    else:
        tag = ADDR_TAG
    if tag == FLOAT_TAG:
        items: list = []
        for v in values:
            if not isinstance(v, FloatV):
                raise KindSoundnessViolation(f"float array literal element {v!r}")
            items.append(v.value)
    elif tag == INT_TAG:
        for v in values:
            if not isinstance(v, (IntV, BoolV, UnitV)):
                raise KindSoundnessViolation(f"int array literal element {v!r}")
        items = list(values)
    else:
        items = list(values)
    return ArrayV(ArrayCell(tag, items))


_SPEC_TAG = {ir.KindInt: INT_TAG, ir.KindFloat: FLOAT_TAG, ir.KindAddr: ADDR_TAG}
_TAG_BUCKET = {INT_TAG: "spec_int", FLOAT_TAG: "spec_float", ADDR_TAG: "spec_addr"}


class Evaluator:
    def __init__(self, budget: int | None = DEFAULT_STEP_BUDGET):
        self.globals: dict[tuple[str, str], Value] = {}
        self.stats = AccessStats()
        self.out = io.StringIO()
        self.budget = budget
        self.steps = 0
        self.site = ("?", "?")  # (unit, binding) being evaluated, for bug reports

    # -- array access instrumentation

    def _read(self, kind: ir.ArrayKind, arr: Value, idx: Value) -> Value:
        cell = self._expect_array(arr)
        i = self._expect_int(idx)
        if not 0 <= i < len(cell.items):
            raise EvalError(f"index {i} out of bounds for array of length {len(cell.items)}")
        if isinstance(kind, (ir.KindVar, ir.KindGeneric)):
            self.stats.reads["gen"] += 1
            if cell.tag == FLOAT_TAG:
                self.stats.float_boxings += 1
                return FloatV(cell.items[i])
            return cell.items[i]
        expected = _SPEC_TAG[type(kind)]
        if cell.tag != expected:
            raise KindSoundnessViolation(
                f"{expected} read of {cell.tag} array at {self.site[0]}.{self.site[1]}"
            )
        self.stats.reads[_TAG_BUCKET[expected]] += 1
        if cell.tag == FLOAT_TAG:
            return FloatV(cell.items[i])
        return cell.items[i]

    def _write(self, kind: ir.ArrayKind, arr: Value, idx: Value, value: Value) -> Value:
        cell = self._expect_array(arr)
        i = self._expect_int(idx)
        if not 0 <= i < len(cell.items):
            raise EvalError(f"index {i} out of bounds for array of length {len(cell.items)}")
        generic = isinstance(kind, (ir.KindVar, ir.KindGeneric))
        if generic:
            self.stats.writes["gen"] += 1
        else:
            expected = _SPEC_TAG[type(kind)]
            if cell.tag != expected:
                raise KindSoundnessViolation(
                    f"{expected} write to {cell.tag} array at {self.site[0]}.{self.site[1]}"
                )
            self.stats.writes[_TAG_BUCKET[expected]] += 1
        if cell.tag == FLOAT_TAG:
            if not isinstance(value, FloatV):
                raise KindSoundnessViolation(
                    f"non-float {value!r} written into float array at {self.site[0]}.{self.site[1]}"
                )
            cell.items[i] = value.value
        elif cell.tag == INT_TAG:
            if not isinstance(value, (IntV, BoolV, UnitV)):
                raise KindSoundnessViolation(
                    f"boxed value {value!r} written into int array at {self.site[0]}.{self.site[1]}"
                )
            cell.items[i] = value
        else:
            cell.items[i] = value
        return UNIT_V

    @staticmethod
    def _expect_array(v: Value) -> ArrayCell:
        if not isinstance(v, ArrayV):
            raise EvalError(f"expected an array, got {v!r}")
        return v.cell

    @staticmethod
    def _expect_int(v: Value) -> int:
        if not isinstance(v, IntV):
            raise EvalError(f"expected an int, got {v!r}")
        return v.value

    @staticmethod
    def _expect_float(v: Value) -> float:
        if not isinstance(v, FloatV):
            raise EvalError(f"expected a float, got {v!r}")
        return v.value

    # -- core evaluation
    #
    # Tail positions (let/seq bodies, conditional branches, saturated
    # call bodies) are handled iteratively, so the mini-language's
    # loop-by-recursion idiom does not consume Python stack.

    def eval(self, t: ir.IrTerm, env: Env) -> Value:
        while True:
            self.steps += 1
            if self.budget is not None and self.steps > self.budget:
                raise EvalError(f"step budget exceeded ({self.budget})")
            if isinstance(t, ir.Const):
                v = t.value
                if v is None:
                    return UNIT_V
                if isinstance(v, bool):
                    return BoolV(v)
                if isinstance(v, int):
                    return IntV(v)
                return FloatV(v)
            if isinstance(t, ir.Var):
                return env.lookup(t.name)
            if isinstance(t, ir.GlobalVar):
                key = (t.unit, t.name)
                v = self.globals.get(key)
                if v is None:
                    raise EvalError(f"unresolved global {t.unit}.{t.name}")
                return v
            if isinstance(t, ir.Fun):
                return ClosureV(t.params, t.body, env)
            if isinstance(t, ir.App):
                fn = self.eval(t.fn, env)
                args = [self.eval(a, env) for a in t.args]
                tail = self._apply_until_tail(fn, args)
                if isinstance(tail, Value):
                    return tail
                t, env = tail
                continue
            if isinstance(t, ir.Let):
                inner = env.child()
                if t.rec:
                    # a recursive closure captures `inner`, so writing the
                    # frame afterwards lets the body find itself
                    inner.frame[t.name] = self.eval(t.bound, inner)
                else:
                    inner.frame[t.name] = self.eval(t.bound, env)
                t, env = t.body, inner
                continue
            if isinstance(t, ir.If):
                cond = self.eval(t.cond, env)
                if not isinstance(cond, BoolV):
                    raise EvalError(f"condition is not a boolean: {cond!r}")
                t = t.then if cond.value else t.els
                continue
            if isinstance(t, ir.PrimOp):
                args = [self.eval(a, env) for a in t.args]
                return self.prim(t.op, args)
            if isinstance(t, ir.ArrayGet):
                arr = self.eval(t.arr, env)
                idx = self.eval(t.idx, env)
                return self._read(t.kind, arr, idx)
            if isinstance(t, ir.ArraySet):
                arr = self.eval(t.arr, env)
                idx = self.eval(t.idx, env)
                value = self.eval(t.value, env)
                return self._write(t.kind, arr, idx, value)
            if isinstance(t, ir.ArrayMake):
                length = self.eval(t.length, env)
                init = self.eval(t.init, env)
                return make_array(t.kind, self._expect_int(length), init)
            if isinstance(t, ir.ArrayLit):
                return _lit_array(t.kind, [self.eval(e, env) for e in t.elems])
            if isinstance(t, ir.ArrayLen):
                return IntV(len(self._expect_array(self.eval(t.arr, env)).items))
            if isinstance(t, ir.Tuple):
                return TupleV(tuple(self.eval(e, env) for e in t.elems))
            if isinstance(t, ir.TupleProj):
                v = self.eval(t.tuple_, env)
                if not isinstance(v, TupleV) or t.index >= len(v.items):
                    raise EvalError(f"bad tuple projection {t.index} on {v!r}")
                return v.items[t.index]
            if isinstance(t, ir.Seq):
                self.eval(t.first, env)
                t = t.second
                continue
            if isinstance(t, ir.Specialized):
                # residual type applications carry no runtime payload
                t = t.inner
                continue
            raise EvalError(f"unknown IR node {t!r}")

    def _apply_until_tail(self, fn: Value, args: list[Value]):
        """Consume arguments until one saturated body remains, which the
        caller evaluates in tail position. Returns either a Value
        (partial application) or a (body, env) pair."""
        while True:
            if not isinstance(fn, ClosureV):
                raise EvalError(f"cannot apply non-function {fn!r}")
            nparams = len(fn.params)
            taken, rest = args[:nparams], args[nparams:]
            env = fn.env.child()
            for p, a in zip(fn.params, taken):
                env.frame[p] = a
            if len(taken) < nparams:
                return ClosureV(fn.params[len(taken):], fn.body, env)
            if not rest:
                return (fn.body, env)
            fn = self.eval(fn.body, env)
            args = rest

    def apply(self, fn: Value, args: list[Value]) -> Value:
        tail = self._apply_until_tail(fn, args)
        if isinstance(tail, Value):
            return tail
        body, env = tail
        return self.eval(body, env)

    # -- primitives

    def prim(self, op: str, args: list[Value]) -> Value:
        if op == "iadd":
            return IntV(_wrap64(self._expect_int(args[0]) + self._expect_int(args[1])))
        if op == "isub":
            return IntV(_wrap64(self._expect_int(args[0]) - self._expect_int(args[1])))
        if op == "imul":
            return IntV(_wrap64(self._expect_int(args[0]) * self._expect_int(args[1])))
        if op in ("idiv", "imod"):
            a, b = self._expect_int(args[0]), self._expect_int(args[1])
            if b == 0:
                raise EvalError("division by zero")
            q = abs(a) // abs(b)
            if (a < 0) != (b < 0):
                q = -q
            if op == "idiv":
                return IntV(_wrap64(q))
            return IntV(_wrap64(a - b * q))
        if op == "fadd":
            return FloatV(self._expect_float(args[0]) + self._expect_float(args[1]))
        if op == "fsub":
            return FloatV(self._expect_float(args[0]) - self._expect_float(args[1]))
        if op == "fmul":
            return FloatV(self._expect_float(args[0]) * self._expect_float(args[1]))
        if op == "fdiv":
            a = self._expect_float(args[0])
            b = self._expect_float(args[1])
            if b == 0.0:
                # IEEE semantics, which Python's ZeroDivisionError hides
                if a == 0.0 or a != a:
                    return FloatV(float("nan"))
                return FloatV(math.copysign(1.0, a) * math.copysign(1.0, b) * float("inf"))
            return FloatV(a / b)
        if op in ("eq", "lt", "gt", "le", "ge"):
            c = self.compare(args[0], args[1])
            return BoolV(
                c == 0 if op == "eq"
                else c < 0 if op == "lt"
                else c > 0 if op == "gt"
                else c <= 0 if op == "le"
                else c >= 0
            )
        if op == "print_int":
            self.out.write(str(self._expect_int(args[0])))
            return UNIT_V
        if op == "print_float":
            self.out.write(float_repr(self._expect_float(args[0])))
            return UNIT_V
        if op == "newline":
            self.out.write("\n")
            return UNIT_V
        raise EvalError(f"unknown primitive {op!r}")

    def compare(self, a: Value, b: Value) -> int:
        """Structural comparison; closures are not comparable."""
        if isinstance(a, IntV) and isinstance(b, IntV):
            return (a.value > b.value) - (a.value < b.value)
        if isinstance(a, FloatV) and isinstance(b, FloatV):
            return (a.value > b.value) - (a.value < b.value)
        if isinstance(a, BoolV) and isinstance(b, BoolV):
            return (a.value > b.value) - (a.value < b.value)
        if isinstance(a, UnitV) and isinstance(b, UnitV):
            return 0
        if isinstance(a, TupleV) and isinstance(b, TupleV) and len(a.items) == len(b.items):
            for x, y in zip(a.items, b.items):
                c = self.compare(x, y)
                if c:
                    return c
            return 0
        if isinstance(a, ArrayV) and isinstance(b, ArrayV):
            xs, ys = a.cell.items, b.cell.items
            for i in range(min(len(xs), len(ys))):
                x = FloatV(xs[i]) if a.cell.tag == FLOAT_TAG else xs[i]
                y = FloatV(ys[i]) if b.cell.tag == FLOAT_TAG else ys[i]
                c = self.compare(x, y)
                if c:
                    return c
            return (len(xs) > len(ys)) - (len(xs) < len(ys))
        raise EvalError(f"values not comparable: {a!r} vs {b!r}")


def link_order(units: Iterable[ir.IrUnit], entry: str) -> list[ir.IrUnit]:
    """Order units so that every global reference points at an already
    evaluated unit; the entry unit comes last."""
    by_name = {u.name: u for u in units}
    if entry not in by_name:
        raise EvalError(f"entry unit {entry!r} not linked")
    deps: dict[str, set[str]] = {}
    for u in by_name.values():
        refs = set()
        for _, term in u.bindings:
            for sub in ir.iter_subterms(term):
                if isinstance(sub, ir.GlobalVar) and sub.unit != u.name:
                    refs.add(sub.unit)
        deps[u.name] = refs
    order: list[str] = []
    state: dict[str, int] = {}

    def visit(name: str) -> None:
        st = state.get(name)
        if st == 2:
            return
        if st == 1:
            raise EvalError(f"cyclic unit dependency through {name!r}")
        state[name] = 1
        for d in sorted(deps.get(name, ())):
            if d in by_name:
                visit(d)
        state[name] = 2
        order.append(name)

    for name in sorted(by_name):
        visit(name)
    order.remove(entry)
    order.append(entry)
    return [by_name[n] for n in order]


def eval_program(
    units: Iterable[ir.IrUnit], entry: str, budget: int | None = DEFAULT_STEP_BUDGET
) -> tuple[str, AccessStats]:
    """Evaluate the linked program and return (captured output, stats)."""
    ev = Evaluator(budget)
    for unit in link_order(list(units), entry):
        top = Env()
        for name, term in unit.bindings:
            ev.site = (unit.name, name)
            value = ev.eval(term, top)
            top.frame[name] = value
            ev.globals[(unit.name, name)] = value
    return ev.out.getvalue(), ev.stats
