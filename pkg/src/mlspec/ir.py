"""Untyped lambda-style IR with partial array-kind annotations.

Array primitives carry an ArrayKind that picks the runtime memory
representation (int / float / address), defers the choice to a type
variable, or falls back to fully generic dispatch. A Specialized node
wraps a variable occurrence together with a kind map: the explicit type
application that lets the inliner substitute concrete kinds into the
callee's body.

Terms are immutable values; all transformations build new trees.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

from . import sexpr
from .diagnostics import ArtifactError
from .inference import (
    TArray,
    TArrow,
    TBool,
    TFloat,
    TInt,
    TTuple,
    TUnit,
    TVar,
    Ty,
    TypeScheme,
    TvId,
)


class ArrayKind:
    __slots__ = ()


@dataclass(frozen=True)
class KindVar(ArrayKind):
    tvar: TvId


@dataclass(frozen=True)
class KindInt(ArrayKind):
    pass


@dataclass(frozen=True)
class KindFloat(ArrayKind):
    pass


@dataclass(frozen=True)
class KindAddr(ArrayKind):
    pass


@dataclass(frozen=True)
class KindGeneric(ArrayKind):
    pass


INT_KIND = KindInt()
FLOAT_KIND = KindFloat()
ADDR_KIND = KindAddr()
GENERIC_KIND = KindGeneric()


def kind_of_type(t: Ty) -> ArrayKind:
    """Array kind for an element type. Immediates (int, bool, unit) share
    the int representation; anything boxed is an address."""
    if isinstance(t, (TInt, TBool, TUnit)):
        return INT_KIND
    if isinstance(t, TFloat):
        return FLOAT_KIND
    if isinstance(t, TVar):
        return KindVar(t.id)
    if isinstance(t, (TArray, TArrow, TTuple)):
        return ADDR_KIND
    raise TypeError(f"unknown element type {t!r}")


@dataclass(frozen=True)
class KindMap:
    """Finite map from type-variable ids to kinds, kept in ascending key
    order so printing is deterministic."""

    entries: tuple[tuple[TvId, ArrayKind], ...]

    @staticmethod
    def of(pairs) -> "KindMap":
        items = list(pairs.items()) if isinstance(pairs, dict) else list(pairs)
        d = dict(items)
        if len(d) != len(items):
            raise ValueError("duplicate kind map keys")
        return KindMap(tuple(sorted(d.items())))

    def get(self, key: TvId) -> ArrayKind | None:
        for k, v in self.entries:
            if k == key:
                return v
        return None

    def keys(self) -> frozenset[TvId]:
        return frozenset(k for k, _ in self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


class IrTerm:
    __slots__ = ()


@dataclass(frozen=True)
class Const(IrTerm):
    value: int | float | bool | None  # None is the unit value


@dataclass(frozen=True)
class Var(IrTerm):
    name: str


@dataclass(frozen=True)
class GlobalVar(IrTerm):
    unit: str
    name: str


@dataclass(frozen=True)
class Fun(IrTerm):
    params: tuple[str, ...]
    body: IrTerm


@dataclass(frozen=True)
class App(IrTerm):
    fn: IrTerm
    args: tuple[IrTerm, ...]


@dataclass(frozen=True)
class Let(IrTerm):
    rec: bool
    name: str
    bound: IrTerm
    body: IrTerm


@dataclass(frozen=True)
class If(IrTerm):
    cond: IrTerm
    then: IrTerm
    els: IrTerm


@dataclass(frozen=True)
class PrimOp(IrTerm):
    op: str
    args: tuple[IrTerm, ...]


@dataclass(frozen=True)
class ArrayGet(IrTerm):
    kind: ArrayKind
    arr: IrTerm
    idx: IrTerm


@dataclass(frozen=True)
class ArraySet(IrTerm):
    kind: ArrayKind
    arr: IrTerm
    idx: IrTerm
    value: IrTerm


@dataclass(frozen=True)
class ArrayMake(IrTerm):
    kind: ArrayKind
    length: IrTerm
    init: IrTerm


@dataclass(frozen=True)
class ArrayLit(IrTerm):
    kind: ArrayKind
    elems: tuple[IrTerm, ...]


@dataclass(frozen=True)
class ArrayLen(IrTerm):
    arr: IrTerm


@dataclass(frozen=True)
class Tuple(IrTerm):
    elems: tuple[IrTerm, ...]


@dataclass(frozen=True)
class TupleProj(IrTerm):
    index: int
    tuple_: IrTerm


@dataclass(frozen=True)
class Seq(IrTerm):
    first: IrTerm
    second: IrTerm


@dataclass(frozen=True)
class Specialized(IrTerm):
    """Explicit type application: `inner` must be a Var or GlobalVar and
    the map must be non-empty (empty maps are elided at construction)."""

    inner: IrTerm
    map: KindMap

    def __post_init__(self) -> None:
        if not isinstance(self.inner, (Var, GlobalVar)):
            raise ValueError("Specialized wraps only Var or GlobalVar")
        if not self.map:
            raise ValueError("Specialized kind map must be non-empty")


@dataclass(frozen=True)
class IrUnit:
    name: str
    bindings: tuple[tuple[str, IrTerm], ...]
    exports: tuple[tuple[str, TypeScheme], ...]

    def export_map(self) -> dict[str, TypeScheme]:
        return dict(self.exports)

    def binding_map(self) -> dict[str, IrTerm]:
        return dict(self.bindings)


# ---------------------------------------------------------------------------
# Structural helpers


def children(t: IrTerm) -> tuple[IrTerm, ...]:
    if isinstance(t, Fun):
        return (t.body,)
    if isinstance(t, App):
        return (t.fn,) + t.args
    if isinstance(t, Let):
        return (t.bound, t.body)
    if isinstance(t, If):
        return (t.cond, t.then, t.els)
    if isinstance(t, PrimOp):
        return t.args
    if isinstance(t, ArrayGet):
        return (t.arr, t.idx)
    if isinstance(t, ArraySet):
        return (t.arr, t.idx, t.value)
    if isinstance(t, ArrayMake):
        return (t.length, t.init)
    if isinstance(t, ArrayLit):
        return t.elems
    if isinstance(t, ArrayLen):
        return (t.arr,)
    if isinstance(t, Tuple):
        return t.elems
    if isinstance(t, TupleProj):
        return (t.tuple_,)
    if isinstance(t, Seq):
        return (t.first, t.second)
    if isinstance(t, Specialized):
        return (t.inner,)
    return ()


def iter_subterms(t: IrTerm) -> Iterator[IrTerm]:
    yield t
    for c in children(t):
        yield from iter_subterms(c)


def node_count(t: IrTerm) -> int:
    return sum(1 for _ in iter_subterms(t))


def map_kinds(t: IrTerm, fk: Callable[[ArrayKind], ArrayKind]) -> IrTerm:
    """Rewrite every ArrayKind position: the annotation on each array
    primitive and the ranges (not the keys) of every kind map."""
    if isinstance(t, (Const, Var, GlobalVar)):
        return t
    if isinstance(t, Fun):
        return Fun(t.params, map_kinds(t.body, fk))
    if isinstance(t, App):
        return App(map_kinds(t.fn, fk), tuple(map_kinds(a, fk) for a in t.args))
    if isinstance(t, Let):
        return Let(t.rec, t.name, map_kinds(t.bound, fk), map_kinds(t.body, fk))
    if isinstance(t, If):
        return If(map_kinds(t.cond, fk), map_kinds(t.then, fk), map_kinds(t.els, fk))
    if isinstance(t, PrimOp):
        return PrimOp(t.op, tuple(map_kinds(a, fk) for a in t.args))
    if isinstance(t, ArrayGet):
        return ArrayGet(fk(t.kind), map_kinds(t.arr, fk), map_kinds(t.idx, fk))
    if isinstance(t, ArraySet):
        return ArraySet(
            fk(t.kind), map_kinds(t.arr, fk), map_kinds(t.idx, fk), map_kinds(t.value, fk)
        )
    if isinstance(t, ArrayMake):
        return ArrayMake(fk(t.kind), map_kinds(t.length, fk), map_kinds(t.init, fk))
    if isinstance(t, ArrayLit):
        return ArrayLit(fk(t.kind), tuple(map_kinds(e, fk) for e in t.elems))
    if isinstance(t, ArrayLen):
        return ArrayLen(map_kinds(t.arr, fk))
    if isinstance(t, Tuple):
        return Tuple(tuple(map_kinds(e, fk) for e in t.elems))
    if isinstance(t, TupleProj):
        return TupleProj(t.index, map_kinds(t.tuple_, fk))
    if isinstance(t, Seq):
        return Seq(map_kinds(t.first, fk), map_kinds(t.second, fk))
    if isinstance(t, Specialized):
        new_map = KindMap(tuple((k, fk(v)) for k, v in t.map.entries))
        inner = map_kinds(t.inner, fk)
        return Specialized(inner, new_map)
    raise TypeError(f"unknown IR node {t!r}")


def subst_kinds(term: IrTerm, mapping: KindMap | Mapping[TvId, ArrayKind]) -> IrTerm:
    """Replace kind type variables by their images under `mapping`, in
    every kind position including the ranges of nested kind maps. Map
    keys act as binder references and are never rewritten."""
    if isinstance(mapping, KindMap):
        table = dict(mapping.entries)
    else:
        table = dict(mapping)
    if not table:
        return term

    def fk(k: ArrayKind) -> ArrayKind:
        if isinstance(k, KindVar) and k.tvar in table:
            return table[k.tvar]
        return k

    return map_kinds(term, fk)


def free_kind_tvars(term: IrTerm) -> frozenset[TvId]:
    """All type-variable ids occurring in kind positions: primitive
    annotations and kind-map ranges. Keys do not contribute."""
    out: set[TvId] = set()

    def fk(k: ArrayKind) -> ArrayKind:
        if isinstance(k, KindVar):
            out.add(k.tvar)
        return k

    map_kinds(term, fk)
    return frozenset(out)


def unit_free_kind_tvars(u: IrUnit) -> frozenset[TvId]:
    out: frozenset[TvId] = frozenset()
    for _, term in u.bindings:
        out |= free_kind_tvars(term)
    return out


def free_vars(t: IrTerm) -> frozenset[str]:
    """Free local variable names (GlobalVars are not tracked)."""
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, Fun):
        return free_vars(t.body) - frozenset(t.params)
    if isinstance(t, Let):
        bound_free = free_vars(t.bound)
        if t.rec:
            bound_free -= {t.name}
        return bound_free | (free_vars(t.body) - {t.name})
    out: frozenset[str] = frozenset()
    for c in children(t):
        out |= free_vars(c)
    return out


def recursive_bindings(u: IrUnit) -> frozenset[str]:
    """Top-level bindings that can reach themselves through same-unit
    references. Forward references cannot parse, so in practice these
    are the explicit `let rec` bindings, but the graph check also
    rejects cycles in hand-crafted units."""
    names = {n for n, _ in u.bindings}
    graph: dict[str, set[str]] = {}
    for name, term in u.bindings:
        refs = set()
        for sub in iter_subterms(term):
            if isinstance(sub, GlobalVar) and sub.unit == u.name and sub.name in names:
                refs.add(sub.name)
        graph[name] = refs
    out = set()
    for start in names:
        seen: set[str] = set()
        stack = list(graph[start])
        while stack:
            n = stack.pop()
            if n == start:
                out.add(start)
                break
            if n in seen:
                continue
            seen.add(n)
            stack.extend(graph.get(n, ()))
    return frozenset(out)


# ---------------------------------------------------------------------------
# Textual form. One top-level form per unit:
#   (unit NAME (export NAME SCHEME)* (def NAME TERM)*)
# Kinds print as int|float|addr|gen|(tvar N); schemes as
#   (forall (IDS*) TYPE).


def kind_to_sexpr(k: ArrayKind) -> sexpr.SExpr:
    if isinstance(k, KindVar):
        return ["tvar", k.tvar]
    if isinstance(k, KindInt):
        return "int"
    if isinstance(k, KindFloat):
        return "float"
    if isinstance(k, KindAddr):
        return "addr"
    if isinstance(k, KindGeneric):
        return "gen"
    raise TypeError(f"unknown kind {k!r}")


def kind_from_sexpr(x: sexpr.SExpr) -> ArrayKind:
    if x == "int":
        return INT_KIND
    if x == "float":
        return FLOAT_KIND
    if x == "addr":
        return ADDR_KIND
    if x == "gen":
        return GENERIC_KIND
    if isinstance(x, list) and len(x) == 2 and x[0] == "tvar" and isinstance(x[1], int):
        return KindVar(x[1])
    raise ArtifactError(f"bad array kind {sexpr.dumps(x)}")


def type_to_sexpr(t: Ty) -> sexpr.SExpr:
    if isinstance(t, TInt):
        return "int"
    if isinstance(t, TFloat):
        return "float"
    if isinstance(t, TBool):
        return "bool"
    if isinstance(t, TUnit):
        return "unit"
    if isinstance(t, TVar):
        return ["tvar", t.id]
    if isinstance(t, TArray):
        return ["array", type_to_sexpr(t.elem)]
    if isinstance(t, TArrow):
        return ["arrow", type_to_sexpr(t.param), type_to_sexpr(t.result)]
    if isinstance(t, TTuple):
        return ["tuple"] + [type_to_sexpr(e) for e in t.elems]
    raise TypeError(f"unknown type {t!r}")


def type_from_sexpr(x: sexpr.SExpr) -> Ty:
    from . import inference as inf

    if x == "int":
        return inf.INT
    if x == "float":
        return inf.FLOAT
    if x == "bool":
        return inf.BOOL
    if x == "unit":
        return inf.UNIT
    if isinstance(x, list) and x:
        head = x[0]
        if head == "tvar" and len(x) == 2 and isinstance(x[1], int):
            return TVar(x[1])
        if head == "array" and len(x) == 2:
            return TArray(type_from_sexpr(x[1]))
        if head == "arrow" and len(x) == 3:
            return TArrow(type_from_sexpr(x[1]), type_from_sexpr(x[2]))
        if head == "tuple":
            return TTuple(tuple(type_from_sexpr(e) for e in x[1:]))
    raise ArtifactError(f"bad type form {sexpr.dumps(x)}")


def scheme_to_sexpr(sc: TypeScheme) -> sexpr.SExpr:
    return ["forall", sorted(sc.quantified), type_to_sexpr(sc.body)]


def scheme_from_sexpr(x: sexpr.SExpr) -> TypeScheme:
    if (
        isinstance(x, list)
        and len(x) == 3
        and x[0] == "forall"
        and isinstance(x[1], list)
        and all(isinstance(i, int) for i in x[1])
    ):
        return TypeScheme(frozenset(x[1]), type_from_sexpr(x[2]))
    raise ArtifactError(f"bad scheme form {sexpr.dumps(x)}")


def term_to_sexpr(t: IrTerm) -> sexpr.SExpr:
    if isinstance(t, Const):
        v = t.value
        if v is None:
            return []
        if isinstance(v, bool):
            return "true" if v else "false"
        return v
    if isinstance(t, Var):
        return t.name
    if isinstance(t, GlobalVar):
        return ["gvar", t.unit, t.name]
    if isinstance(t, Fun):
        return ["fun", list(t.params), term_to_sexpr(t.body)]
    if isinstance(t, App):
        return ["app", term_to_sexpr(t.fn)] + [term_to_sexpr(a) for a in t.args]
    if isinstance(t, Let):
        return ["letrec" if t.rec else "let", t.name, term_to_sexpr(t.bound), term_to_sexpr(t.body)]
    if isinstance(t, If):
        return ["if", term_to_sexpr(t.cond), term_to_sexpr(t.then), term_to_sexpr(t.els)]
    if isinstance(t, PrimOp):
        return ["prim", t.op] + [term_to_sexpr(a) for a in t.args]
    if isinstance(t, ArrayGet):
        return ["aget", kind_to_sexpr(t.kind), term_to_sexpr(t.arr), term_to_sexpr(t.idx)]
    if isinstance(t, ArraySet):
        return [
            "aset",
            kind_to_sexpr(t.kind),
            term_to_sexpr(t.arr),
            term_to_sexpr(t.idx),
            term_to_sexpr(t.value),
        ]
    if isinstance(t, ArrayMake):
        return ["amake", kind_to_sexpr(t.kind), term_to_sexpr(t.length), term_to_sexpr(t.init)]
    if isinstance(t, ArrayLit):
        return ["alit", kind_to_sexpr(t.kind)] + [term_to_sexpr(e) for e in t.elems]
    if isinstance(t, ArrayLen):
        return ["alen", term_to_sexpr(t.arr)]
    if isinstance(t, Tuple):
        return ["tuple"] + [term_to_sexpr(e) for e in t.elems]
    if isinstance(t, TupleProj):
        return ["proj", t.index, term_to_sexpr(t.tuple_)]
    if isinstance(t, Seq):
        return ["seq", term_to_sexpr(t.first), term_to_sexpr(t.second)]
    if isinstance(t, Specialized):
        entries = [[k, kind_to_sexpr(v)] for k, v in t.map.entries]
        return ["spec", term_to_sexpr(t.inner), entries]
    raise TypeError(f"unknown IR node {t!r}")


_HEADS = {
    "gvar", "fun", "app", "let", "letrec", "if", "prim", "aget", "aset",
    "amake", "alit", "alen", "tuple", "proj", "seq", "spec",
}


def term_from_sexpr(x: sexpr.SExpr) -> IrTerm:
    if isinstance(x, bool):
        raise ArtifactError("unexpected boolean atom")
    if isinstance(x, int):
        return Const(x)
    if isinstance(x, float):
        return Const(x)
    if isinstance(x, str):
        if x == "true":
            return Const(True)
        if x == "false":
            return Const(False)
        return Var(x)
    if isinstance(x, list):
        if not x:
            return Const(None)
        head = x[0]
        rest = x[1:]

        def arity(n: int) -> None:
            if len(rest) != n:
                raise ArtifactError(f"{head} expects {n} arguments, got {len(rest)}")

        if head == "gvar":
            arity(2)
            if not (isinstance(rest[0], str) and isinstance(rest[1], str)):
                raise ArtifactError("gvar expects two names")
            return GlobalVar(rest[0], rest[1])
        if head == "fun":
            arity(2)
            params = rest[0]
            if not isinstance(params, list) or not all(isinstance(p, str) for p in params):
                raise ArtifactError("fun expects a parameter name list")
            return Fun(tuple(params), term_from_sexpr(rest[1]))
        if head == "app":
            if not rest:
                raise ArtifactError("app expects a function")
            return App(term_from_sexpr(rest[0]), tuple(term_from_sexpr(a) for a in rest[1:]))
        if head in ("let", "letrec"):
            arity(3)
            if not isinstance(rest[0], str):
                raise ArtifactError("let expects a name")
            return Let(head == "letrec", rest[0], term_from_sexpr(rest[1]), term_from_sexpr(rest[2]))
        if head == "if":
            arity(3)
            return If(*(term_from_sexpr(a) for a in rest))
        if head == "prim":
            if not rest or not isinstance(rest[0], str):
                raise ArtifactError("prim expects an operator name")
            return PrimOp(rest[0], tuple(term_from_sexpr(a) for a in rest[1:]))
        if head == "aget":
            arity(3)
            return ArrayGet(kind_from_sexpr(rest[0]), term_from_sexpr(rest[1]), term_from_sexpr(rest[2]))
        if head == "aset":
            arity(4)
            return ArraySet(
                kind_from_sexpr(rest[0]),
                term_from_sexpr(rest[1]),
                term_from_sexpr(rest[2]),
                term_from_sexpr(rest[3]),
            )
        if head == "amake":
            arity(3)
            return ArrayMake(kind_from_sexpr(rest[0]), term_from_sexpr(rest[1]), term_from_sexpr(rest[2]))
        if head == "alit":
            if not rest:
                raise ArtifactError("alit expects a kind")
            return ArrayLit(kind_from_sexpr(rest[0]), tuple(term_from_sexpr(e) for e in rest[1:]))
        if head == "alen":
            arity(1)
            return ArrayLen(term_from_sexpr(rest[0]))
        if head == "tuple":
            return Tuple(tuple(term_from_sexpr(e) for e in rest))
        if head == "proj":
            arity(2)
            if not isinstance(rest[0], int) or isinstance(rest[0], bool):
                raise ArtifactError("proj expects an integer index")
            return TupleProj(rest[0], term_from_sexpr(rest[1]))
        if head == "seq":
            arity(2)
            return Seq(term_from_sexpr(rest[0]), term_from_sexpr(rest[1]))
        if head == "spec":
            arity(2)
            entries = rest[1]
            if not isinstance(entries, list):
                raise ArtifactError("spec expects a kind map")
            pairs = []
            for ent in entries:
                if not (isinstance(ent, list) and len(ent) == 2 and isinstance(ent[0], int)):
                    raise ArtifactError("bad kind map entry")
                pairs.append((ent[0], kind_from_sexpr(ent[1])))
            return Specialized(term_from_sexpr(rest[0]), KindMap.of(pairs))
        if isinstance(head, str) and head in _HEADS:
            raise ArtifactError(f"bad {head} form")
        raise ArtifactError(f"unknown head symbol {sexpr.dumps(head)}")
    raise ArtifactError(f"bad term {x!r}")


def unit_to_sexpr(u: IrUnit) -> sexpr.SExpr:
    form: list = ["unit", u.name]
    for name, sc in u.exports:
        form.append(["export", name, scheme_to_sexpr(sc)])
    for name, term in u.bindings:
        form.append(["def", name, term_to_sexpr(term)])
    return form


def unit_from_sexpr(x: sexpr.SExpr) -> IrUnit:
    if not (isinstance(x, list) and len(x) >= 2 and x[0] == "unit" and isinstance(x[1], str)):
        raise ArtifactError("expected (unit NAME ...)")
    exports: list[tuple[str, TypeScheme]] = []
    bindings: list[tuple[str, IrTerm]] = []
    for entry in x[2:]:
        if not (isinstance(entry, list) and len(entry) == 3 and isinstance(entry[1], str)):
            raise ArtifactError(f"bad unit entry {sexpr.dumps(entry)}")
        if entry[0] == "export":
            exports.append((entry[1], scheme_from_sexpr(entry[2])))
        elif entry[0] == "def":
            bindings.append((entry[1], term_from_sexpr(entry[2])))
        else:
            raise ArtifactError(f"unknown unit entry {sexpr.dumps(entry[0])}")
    return IrUnit(x[1], tuple(bindings), tuple(exports))


def print_ir(u: IrUnit) -> str:
    lines = [f"(unit {u.name}"]
    for name, sc in u.exports:
        lines.append("  " + sexpr.dumps(["export", name, scheme_to_sexpr(sc)]))
    for name, term in u.bindings:
        lines.append("  " + sexpr.dumps(["def", name, term_to_sexpr(term)]))
    return "\n".join(lines) + ")\n"


def parse_ir(text: str) -> IrUnit:
    return unit_from_sexpr(sexpr.loads(text))
