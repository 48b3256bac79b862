"""Translation from the typed tree to the IR.

Every array primitive receives the kind of its statically inferred
element type. Every occurrence of a let-bound polymorphic variable is
wrapped in a Specialized node whose kind map is recovered by matching
the binding's scheme against the occurrence type; the map covers all
quantified variables of the scheme, each sent through kind_of_type.
Monomorphic occurrences are emitted bare.

Builtins are special-cased here rather than in the IR: saturated calls
of Array.make / Array.length / print_int / print_float / newline lower
to dedicated primitives, and first-class uses eta-expand around them.
Boolean && and || become conditionals, preserving short-circuiting.
"""

from __future__ import annotations

from typing import NamedTuple

from . import ir
from . import surface as s
from .diagnostics import CompilerBug
from .inference import (
    OriginBuiltin,
    OriginGlobal,
    OriginLocal,
    TArray,
    TArrow,
    Ty,
    TypedUnit,
    match_scheme,
)

_INT_PRIM = {"+": "iadd", "-": "isub", "*": "imul", "/": "idiv", "mod": "imod"}
_FLOAT_PRIM = {"+.": "fadd", "-.": "fsub", "*.": "fmul", "/.": "fdiv"}
_CMP_PRIM = {"=": "eq", "<": "lt", ">": "gt", "<=": "le", ">=": "ge"}


class _Lowerer:
    def __init__(self, unit_name: str):
        self.unit_name = unit_name
        self._fresh = 0

    def fresh(self, base: str) -> str:
        self._fresh += 1
        return f"{base}#{self._fresh}"

    # -- variable occurrences

    def lower_occurrence(self, e: s.Expr) -> ir.IrTerm:
        origin = e.origin
        if isinstance(origin, OriginBuiltin):
            return self.lower_builtin(e, ())
        if isinstance(origin, OriginLocal):
            assert isinstance(e, s.Var)
            base: ir.IrTerm = ir.Var(e.name)
        elif isinstance(origin, OriginGlobal):
            base = ir.GlobalVar(origin.unit, origin.name)
        else:
            raise CompilerBug(f"occurrence without origin at {e.loc}")
        scheme = e.scheme
        if scheme is not None and scheme.is_polymorphic():
            try:
                inst = match_scheme(scheme, e.ty)
            except Exception as exc:
                raise CompilerBug(
                    f"occurrence at {e.loc} is not an instance of its scheme: {exc}"
                ) from exc
            kmap = ir.KindMap.of({q: ir.kind_of_type(t) for q, t in inst.items()})
            return ir.Specialized(base, kmap)
        return base

    # -- builtins

    def lower_builtin(self, head: s.Expr, args: tuple[ir.IrTerm, ...]) -> ir.IrTerm:
        origin = head.origin
        assert isinstance(origin, OriginBuiltin)
        name = origin.name
        if name == "Array.make":
            kind = self._make_kind(head.ty)
            if len(args) == 2:
                return ir.ArrayMake(kind, args[0], args[1])
            eta = self._eta_make(kind)
            return ir.App(eta, args) if args else eta
        if name == "Array.length":
            if len(args) == 1:
                return ir.ArrayLen(args[0])
            p = self.fresh("a")
            return ir.Fun((p,), ir.ArrayLen(ir.Var(p)))
        if name in ("print_int", "print_float", "newline"):
            if len(args) == 1:
                return ir.PrimOp(name, args)
            p = self.fresh("x")
            return ir.Fun((p,), ir.PrimOp(name, (ir.Var(p),)))
        raise CompilerBug(f"unknown builtin {name}")

    def _make_kind(self, occurrence_ty: Ty) -> ir.ArrayKind:
        # occurrence type is int -> elem -> elem array
        if isinstance(occurrence_ty, TArrow):
            ret = occurrence_ty.result
            if isinstance(ret, TArrow) and isinstance(ret.result, TArray):
                return ir.kind_of_type(ret.result.elem)
        raise CompilerBug(f"unexpected Array.make occurrence type {occurrence_ty!r}")

    def _eta_make(self, kind: ir.ArrayKind) -> ir.IrTerm:
        n = self.fresh("n")
        v = self.fresh("v")
        return ir.Fun((n, v), ir.ArrayMake(kind, ir.Var(n), ir.Var(v)))

    # -- parameters

    def lower_params(self, params: tuple[s.Param, ...]) -> tuple[tuple[str, ...], list]:
        """IR parameter names plus (name, index, tuple_param) projections
        to prepend to the body for tuple patterns."""
        names: list[str] = []
        projections: list[tuple[str, int, str]] = []
        for p in params:
            if isinstance(p, s.PVar):
                names.append(p.name)
            elif isinstance(p, s.PUnit):
                names.append(self.fresh("u"))
            else:
                assert isinstance(p, s.PTuple)
                tmp = self.fresh("t")
                names.append(tmp)
                for i, field_name in enumerate(p.names):
                    projections.append((field_name, i, tmp))
        return tuple(names), projections

    def lower_fn_form(self, params: tuple[s.Param, ...], body: s.Expr) -> ir.IrTerm:
        if not params:
            return self.lower(body)
        names, projections = self.lower_params(params)
        inner = self.lower(body)
        for field_name, i, tmp in reversed(projections):
            inner = ir.Let(False, field_name, ir.TupleProj(i, ir.Var(tmp)), inner)
        # merge immediately nested lambdas so saturated calls inline whole
        if not projections and isinstance(inner, ir.Fun):
            return ir.Fun(names + inner.params, inner.body)
        return ir.Fun(names, inner)

    # -- expressions

    def lower(self, e: s.Expr) -> ir.IrTerm:
        if isinstance(e, s.IntLit):
            return ir.Const(e.value)
        if isinstance(e, s.FloatLit):
            return ir.Const(e.value)
        if isinstance(e, s.BoolLit):
            return ir.Const(e.value)
        if isinstance(e, s.UnitLit):
            return ir.Const(None)
        if isinstance(e, (s.Var, s.QualVar)):
            return self.lower_occurrence(e)
        if isinstance(e, s.Lambda):
            return self.lower_fn_form(e.params, e.body)
        if isinstance(e, s.App):
            head = e
            rev_args: list[s.Expr] = []
            while isinstance(head, s.App):
                rev_args.append(head.arg)
                head = head.fn
            args = tuple(self.lower(a) for a in reversed(rev_args))
            if isinstance(head, (s.Var, s.QualVar)) and isinstance(head.origin, OriginBuiltin):
                return self.lower_builtin(head, args)
            return ir.App(self.lower(head), args)
        if isinstance(e, s.LetIn):
            bound = self.lower_fn_form(e.params, e.bound)
            return ir.Let(e.rec, e.name, bound, self.lower(e.body))
        if isinstance(e, s.If):
            return ir.If(self.lower(e.cond), self.lower(e.then), self.lower(e.els))
        if isinstance(e, s.BinOp):
            lhs = self.lower(e.lhs)
            rhs = self.lower(e.rhs)
            if e.op == "&&":
                return ir.If(lhs, rhs, ir.Const(False))
            if e.op == "||":
                return ir.If(lhs, ir.Const(True), rhs)
            op = _INT_PRIM.get(e.op) or _FLOAT_PRIM.get(e.op) or _CMP_PRIM.get(e.op)
            if op is None:
                raise CompilerBug(f"unknown operator {e.op}")
            return ir.PrimOp(op, (lhs, rhs))
        if isinstance(e, s.Get):
            return ir.ArrayGet(self._elem_kind(e.arr), self.lower(e.arr), self.lower(e.idx))
        if isinstance(e, s.Set):
            return ir.ArraySet(
                self._elem_kind(e.arr), self.lower(e.arr), self.lower(e.idx), self.lower(e.value)
            )
        if isinstance(e, s.ArrayLit):
            assert isinstance(e.ty, TArray)
            kind = ir.kind_of_type(e.ty.elem)
            return ir.ArrayLit(kind, tuple(self.lower(x) for x in e.elems))
        if isinstance(e, s.TupleLit):
            return ir.Tuple(tuple(self.lower(x) for x in e.elems))
        if isinstance(e, s.Seq):
            return ir.Seq(self.lower(e.first), self.lower(e.second))
        raise CompilerBug(f"unknown surface node {e!r}")

    def _elem_kind(self, arr: s.Expr) -> ir.ArrayKind:
        if not isinstance(arr.ty, TArray):
            raise CompilerBug(f"array expression with non-array type {arr.ty!r} at {arr.loc}")
        return ir.kind_of_type(arr.ty.elem)


def lower_unit(tu: TypedUnit) -> ir.IrUnit:
    lw = _Lowerer(tu.unit_name)
    bindings: list[tuple[str, ir.IrTerm]] = []
    for item in tu.items:
        if isinstance(item, s.LetItem):
            bindings.append((item.name, lw.lower_fn_form(item.params, item.expr)))
    exports = tuple((name, tu.exported[name]) for name, _ in bindings)
    return ir.IrUnit(tu.unit_name, tuple(bindings), exports)


class GenericCount(NamedTuple):
    total_array_ops: int
    generic_ops: int


def static_generic_count(u: ir.IrUnit) -> GenericCount:
    """Count ArrayGet/ArraySet nodes; an op is generic when its kind is a
    type variable or the generic fallback."""
    total = 0
    generic = 0
    for _, term in u.bindings:
        for sub in ir.iter_subterms(term):
            if isinstance(sub, (ir.ArrayGet, ir.ArraySet)):
                total += 1
                if isinstance(sub.kind, (ir.KindVar, ir.KindGeneric)):
                    generic += 1
    return GenericCount(total, generic)
