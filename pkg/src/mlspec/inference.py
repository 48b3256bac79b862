"""Hindley-Milner type inference for the surface language.

Type variables are plain integers drawn from one process-wide monotone
supply, shared by every unit compiled in a session. Schemes carry no
binder node: quantification is a side set of variable ids, so an
instantiated occurrence can later be matched back against its scheme by
one-directional unification (`match_scheme`) to recover exactly which
type each quantified variable was instantiated to.

Inference annotates the surface tree in place: every expression node
gets its monomorphic type, and every variable occurrence additionally
records the scheme of its binding and where that binding came from
(local, a unit's top level, or a builtin).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional

from . import surface as s
from .diagnostics import Loc, MatchFailure, TypeCheckError

TvId = int


class TyVarSupply:
    """Strictly increasing id allocator; safe to share across threads."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._next = 0

    def fresh(self) -> TvId:
        with self._lock:
            v = self._next
            self._next += 1
            return v


_SUPPLY = TyVarSupply()


def fresh_tvar_id() -> TvId:
    return _SUPPLY.fresh()


# ---------------------------------------------------------------------------
# Types and schemes


class Ty:
    __slots__ = ()


@dataclass(frozen=True)
class TInt(Ty):
    pass


@dataclass(frozen=True)
class TFloat(Ty):
    pass


@dataclass(frozen=True)
class TBool(Ty):
    pass


@dataclass(frozen=True)
class TUnit(Ty):
    pass


@dataclass(frozen=True)
class TVar(Ty):
    id: TvId


@dataclass(frozen=True)
class TArray(Ty):
    elem: Ty


@dataclass(frozen=True)
class TArrow(Ty):
    param: Ty
    result: Ty


@dataclass(frozen=True)
class TTuple(Ty):
    elems: tuple[Ty, ...]


INT = TInt()
FLOAT = TFloat()
BOOL = TBool()
UNIT = TUnit()


@dataclass(frozen=True)
class TypeScheme:
    """Polymorphic type; `quantified` is a subset of the body's free vars."""

    quantified: frozenset[TvId]
    body: Ty

    def is_polymorphic(self) -> bool:
        return bool(self.quantified)


def mono(t: Ty) -> TypeScheme:
    return TypeScheme(frozenset(), t)


def free_tvars(t: Ty) -> frozenset[TvId]:
    if isinstance(t, TVar):
        return frozenset((t.id,))
    if isinstance(t, TArray):
        return free_tvars(t.elem)
    if isinstance(t, TArrow):
        return free_tvars(t.param) | free_tvars(t.result)
    if isinstance(t, TTuple):
        out: frozenset[TvId] = frozenset()
        for e in t.elems:
            out |= free_tvars(e)
        return out
    return frozenset()


def scheme_free_tvars(sc: TypeScheme) -> frozenset[TvId]:
    return free_tvars(sc.body) - sc.quantified


def apply_mapping(t: Ty, m: Mapping[TvId, Ty]) -> Ty:
    """Replace variables per `m`; unmapped variables stay put."""
    if isinstance(t, TVar):
        return m.get(t.id, t)
    if isinstance(t, TArray):
        return TArray(apply_mapping(t.elem, m))
    if isinstance(t, TArrow):
        return TArrow(apply_mapping(t.param, m), apply_mapping(t.result, m))
    if isinstance(t, TTuple):
        return TTuple(tuple(apply_mapping(e, m) for e in t.elems))
    return t


# ---------------------------------------------------------------------------
# Substitutions and unification


class UnificationError(Exception):
    pass


class OccursCheck(UnificationError):
    pass


class TypeClash(UnificationError):
    pass


class Subst:
    """Mutable triangular substitution. `apply` resolves bindings
    transitively, so the observable substitution is idempotent."""

    def __init__(self) -> None:
        self.map: dict[TvId, Ty] = {}

    def prune(self, t: Ty) -> Ty:
        while isinstance(t, TVar) and t.id in self.map:
            t = self.map[t.id]
        return t

    def apply(self, t: Ty) -> Ty:
        t = self.prune(t)
        if isinstance(t, TArray):
            return TArray(self.apply(t.elem))
        if isinstance(t, TArrow):
            return TArrow(self.apply(t.param), self.apply(t.result))
        if isinstance(t, TTuple):
            return TTuple(tuple(self.apply(e) for e in t.elems))
        return t

    def occurs(self, vid: TvId, t: Ty) -> bool:
        t = self.prune(t)
        if isinstance(t, TVar):
            return t.id == vid
        if isinstance(t, TArray):
            return self.occurs(vid, t.elem)
        if isinstance(t, TArrow):
            return self.occurs(vid, t.param) or self.occurs(vid, t.result)
        if isinstance(t, TTuple):
            return any(self.occurs(vid, e) for e in t.elems)
        return False


def unify(t1: Ty, t2: Ty, subst: Subst) -> Subst:
    """Extend `subst` to a most general unifier of t1 and t2.

    The argument is mutated and returned. Raises OccursCheck or
    TypeClash (both UnificationError) when no unifier exists."""
    a = subst.prune(t1)
    b = subst.prune(t2)
    if isinstance(a, TVar):
        if isinstance(b, TVar) and a.id == b.id:
            return subst
        if subst.occurs(a.id, b):
            raise OccursCheck(f"occurs check: '{a.id} in {type_to_str(subst.apply(b))}")
        subst.map[a.id] = b
        return subst
    if isinstance(b, TVar):
        return unify(b, a, subst)
    if type(a) is type(b):
        if isinstance(a, (TInt, TFloat, TBool, TUnit)):
            return subst
        if isinstance(a, TArray):
            return unify(a.elem, b.elem, subst)
        if isinstance(a, TArrow):
            unify(a.param, b.param, subst)
            return unify(a.result, b.result, subst)
        if isinstance(a, TTuple):
            assert isinstance(b, TTuple)
            if len(a.elems) == len(b.elems):
                for x, y in zip(a.elems, b.elems):
                    unify(x, y, subst)
                return subst
    raise TypeClash(
        f"type clash: {type_to_str(subst.apply(a))} vs {type_to_str(subst.apply(b))}"
    )


def generalize(env: "TypeEnv", t: Ty, is_syntactic_value: bool, subst: Subst | None = None) -> TypeScheme:
    """Quantify the free variables of `t` not free in `env`; under the
    value restriction, non-values get an empty quantifier set."""
    if subst is not None:
        t = subst.apply(t)
    if not is_syntactic_value:
        return mono(t)
    env_free = env.free_tvars(subst)
    q = free_tvars(t) - env_free
    return TypeScheme(q, t)


def instantiate(sc: TypeScheme) -> Ty:
    if not sc.quantified:
        return sc.body
    m = {q: TVar(fresh_tvar_id()) for q in sorted(sc.quantified)}
    return apply_mapping(sc.body, m)


def match_scheme(scheme: TypeScheme, occurrence: Ty) -> dict[TvId, Ty]:
    """One-directional unification: bind only the scheme's quantified
    variables so that the body maps onto `occurrence`.

    The occurrence must be a fully substituted instance of the scheme;
    anything else raises MatchFailure, which callers treat as an
    internal error, never as a recoverable condition."""
    out: dict[TvId, Ty] = {}

    def go(pat: Ty, t: Ty) -> None:
        if isinstance(pat, TVar):
            if pat.id in scheme.quantified:
                if pat.id in out:
                    if out[pat.id] != t:
                        raise MatchFailure(
                            f"'{pat.id} bound to both {type_to_str(out[pat.id])} and {type_to_str(t)}"
                        )
                else:
                    out[pat.id] = t
                return
            if isinstance(t, TVar) and t.id == pat.id:
                return
            raise MatchFailure(f"rigid variable '{pat.id} vs {type_to_str(t)}")
        if type(pat) is not type(t):
            raise MatchFailure(f"{type_to_str(pat)} vs {type_to_str(t)}")
        if isinstance(pat, TArray):
            go(pat.elem, t.elem)
        elif isinstance(pat, TArrow):
            go(pat.param, t.param)
            go(pat.result, t.result)
        elif isinstance(pat, TTuple):
            if len(pat.elems) != len(t.elems):
                raise MatchFailure("tuple arity mismatch")
            for x, y in zip(pat.elems, t.elems):
                go(x, y)

    go(scheme.body, occurrence)
    missing = scheme.quantified - out.keys()
    if missing:
        # quantified vars are a subset of the body's free vars, so a full
        # traversal must have bound every one of them
        raise MatchFailure(f"unbound quantified vars {sorted(missing)}")
    return out


# ---------------------------------------------------------------------------
# Concrete syntax for types and schemes ('a-style names)


def _tvar_name(i: int) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    name = letters[i % 26]
    while i >= 26:
        i = i // 26 - 1
        name = letters[i % 26] + name
    return "'" + name


def type_to_str(t: Ty, names: dict[TvId, str] | None = None) -> str:
    if names is None:
        names = {}

    def fresh_name(vid: TvId) -> str:
        if vid not in names:
            names[vid] = _tvar_name(len(names))
        return names[vid]

    def go(t: Ty, prec: int) -> str:
        # prec: 0 arrow position, 1 product position, 2 postfix position
        if isinstance(t, TInt):
            return "int"
        if isinstance(t, TFloat):
            return "float"
        if isinstance(t, TBool):
            return "bool"
        if isinstance(t, TUnit):
            return "unit"
        if isinstance(t, TVar):
            return fresh_name(t.id)
        if isinstance(t, TArray):
            return go(t.elem, 2) + " array"
        if isinstance(t, TArrow):
            inner = go(t.param, 1) + " -> " + go(t.result, 0)
            return f"({inner})" if prec > 0 else inner
        if isinstance(t, TTuple):
            inner = " * ".join(go(e, 2) for e in t.elems)
            return f"({inner})" if prec > 1 else inner
        raise TypeError(f"unknown type {t!r}")

    return go(t, 0)


def scheme_to_str(sc: TypeScheme) -> str:
    """Canonical rendering: variables named in first-occurrence order, so
    alpha-equivalent schemes print identically."""
    return type_to_str(sc.body)


def parse_scheme(text: str, loc: Loc | None = None) -> TypeScheme:
    """Parse `.mxi` type syntax. Every quoted variable becomes a fresh
    TyVarId, quantified implicitly."""
    toks = _scheme_tokens(text, loc)
    pos = 0
    vars_seen: dict[str, TvId] = {}

    def peek() -> str:
        return toks[pos] if pos < len(toks) else ""

    def advance() -> str:
        nonlocal pos
        t = peek()
        pos += 1
        return t

    def parse_arrow() -> Ty:
        left = parse_product()
        if peek() == "->":
            advance()
            return TArrow(left, parse_arrow())
        return left

    def parse_product() -> Ty:
        first = parse_postfix()
        if peek() != "*":
            return first
        elems = [first]
        while peek() == "*":
            advance()
            elems.append(parse_postfix())
        return TTuple(tuple(elems))

    def parse_postfix() -> Ty:
        t = parse_atom()
        while peek() == "array":
            advance()
            t = TArray(t)
        return t

    def parse_atom() -> Ty:
        t = advance()
        if t == "int":
            return INT
        if t == "float":
            return FLOAT
        if t == "bool":
            return BOOL
        if t == "unit":
            return UNIT
        if t.startswith("'"):
            if t not in vars_seen:
                vars_seen[t] = fresh_tvar_id()
            return TVar(vars_seen[t])
        if t == "(":
            inner = parse_arrow()
            if advance() != ")":
                raise TypeCheckError(f"expected ')' in type {text!r}", loc)
            return inner
        raise TypeCheckError(f"bad type syntax near {t!r} in {text!r}", loc)

    body = parse_arrow()
    if pos != len(toks):
        raise TypeCheckError(f"trailing tokens in type {text!r}", loc)
    return TypeScheme(frozenset(vars_seen.values()), body)


def _scheme_tokens(text: str, loc: Loc | None) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()*":
            out.append(c)
            i += 1
        elif text.startswith("->", i):
            out.append("->")
            i += 2
        elif c == "'":
            j = i + 1
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            if j == i + 1:
                raise TypeCheckError(f"bad type variable in {text!r}", loc)
            out.append(text[i:j])
            i = j
        elif c.isalpha():
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(text[i:j])
            i = j
        else:
            raise TypeCheckError(f"bad character {c!r} in type {text!r}", loc)
    return out


# ---------------------------------------------------------------------------
# Environments, origins, builtins


@dataclass(frozen=True)
class OriginLocal:
    pass


@dataclass(frozen=True)
class OriginGlobal:
    unit: str
    name: str


@dataclass(frozen=True)
class OriginBuiltin:
    name: str


ORIGIN_LOCAL = OriginLocal()


@dataclass(frozen=True)
class EnvEntry:
    scheme: TypeScheme
    origin: object


class TypeEnv:
    def __init__(self, parent: Optional["TypeEnv"] = None):
        self.parent = parent
        self.frame: dict[str, EnvEntry] = {}

    def child(self) -> "TypeEnv":
        return TypeEnv(self)

    def bind(self, name: str, entry: EnvEntry) -> None:
        self.frame[name] = entry

    def lookup(self, name: str) -> EnvEntry | None:
        env: TypeEnv | None = self
        while env is not None:
            e = env.frame.get(name)
            if e is not None:
                return e
            env = env.parent
        return None

    def entries(self) -> Iterator[EnvEntry]:
        env: TypeEnv | None = self
        while env is not None:
            yield from env.frame.values()
            env = env.parent

    def free_tvars(self, subst: Subst | None = None) -> frozenset[TvId]:
        out: frozenset[TvId] = frozenset()
        for e in self.entries():
            body = e.scheme.body if subst is None else subst.apply(e.scheme.body)
            out |= free_tvars(body) - e.scheme.quantified
        return out


def _poly1(build) -> TypeScheme:
    a = fresh_tvar_id()
    return TypeScheme(frozenset((a,)), build(TVar(a)))


# `Array` is a builtin namespace, not a compilation unit.
ARRAY_BUILTINS: dict[str, TypeScheme] = {
    "make": _poly1(lambda a: TArrow(INT, TArrow(a, TArray(a)))),
    "length": _poly1(lambda a: TArrow(TArray(a), INT)),
}

PLAIN_BUILTINS: dict[str, TypeScheme] = {
    "print_int": mono(TArrow(INT, UNIT)),
    "print_float": mono(TArrow(FLOAT, UNIT)),
    "newline": mono(TArrow(UNIT, UNIT)),
}


def is_syntactic_value(e: s.Expr) -> bool:
    """Literals, variables, lambdas and tuples of values generalize; array
    literals and applications (including Array.make) do not."""
    if isinstance(e, (s.IntLit, s.FloatLit, s.BoolLit, s.UnitLit, s.Var, s.QualVar, s.Lambda)):
        return True
    if isinstance(e, s.TupleLit):
        return all(is_syntactic_value(x) for x in e.elems)
    return False


# ---------------------------------------------------------------------------
# Unit inference


@dataclass
class TypedUnit:
    unit_name: str
    items: tuple[s.Item, ...]  # annotated in place
    exported: dict[str, TypeScheme]
    opens: tuple[str, ...]


class _Inferencer:
    def __init__(self, unit_name: str, imports: Mapping[str, Mapping[str, TypeScheme]]):
        self.unit_name = unit_name
        self.imports = imports
        self.subst = Subst()

    def error(self, msg: str, loc: Loc) -> TypeCheckError:
        return TypeCheckError(msg, loc)

    # -- parameters

    def bind_params(self, params: tuple[s.Param, ...], env: TypeEnv) -> list[Ty]:
        tys: list[Ty] = []
        for p in params:
            if isinstance(p, s.PVar):
                t: Ty = TVar(fresh_tvar_id())
                env.bind(p.name, EnvEntry(mono(t), ORIGIN_LOCAL))
            elif isinstance(p, s.PUnit):
                t = UNIT
            else:
                assert isinstance(p, s.PTuple)
                elem_tys = []
                for name in p.names:
                    et: Ty = TVar(fresh_tvar_id())
                    env.bind(name, EnvEntry(mono(et), ORIGIN_LOCAL))
                    elem_tys.append(et)
                t = TTuple(tuple(elem_tys))
            tys.append(t)
        return tys

    def infer_fn_form(
        self, params: tuple[s.Param, ...], body: s.Expr, env: TypeEnv
    ) -> Ty:
        """Type `fun p1 .. pn -> body` (or a let binding with params)."""
        if not params:
            return self.infer(body, env)
        inner = env.child()
        param_tys = self.bind_params(params, inner)
        result = self.infer(body, inner)
        for pt in reversed(param_tys):
            result = TArrow(pt, result)
        return result

    # -- expressions

    def infer(self, e: s.Expr, env: TypeEnv) -> Ty:
        t = self._infer(e, env)
        e.ty = t
        return t

    def _unify(self, t1: Ty, t2: Ty, loc: Loc) -> None:
        try:
            unify(t1, t2, self.subst)
        except UnificationError as exc:
            raise self.error(str(exc), loc) from exc

    def _infer(self, e: s.Expr, env: TypeEnv) -> Ty:
        if isinstance(e, s.IntLit):
            return INT
        if isinstance(e, s.FloatLit):
            return FLOAT
        if isinstance(e, s.BoolLit):
            return BOOL
        if isinstance(e, s.UnitLit):
            return UNIT
        if isinstance(e, s.Var):
            entry = env.lookup(e.name)
            if entry is None and e.name in PLAIN_BUILTINS:
                entry = EnvEntry(PLAIN_BUILTINS[e.name], OriginBuiltin(e.name))
            if entry is None:
                raise self.error(f"unbound variable {e.name!r}", e.loc)
            e.scheme = entry.scheme
            e.origin = entry.origin
            return instantiate(entry.scheme)
        if isinstance(e, s.QualVar):
            if e.unit == "Array":
                sc = ARRAY_BUILTINS.get(e.name)
                if sc is None:
                    raise self.error(f"unknown builtin Array.{e.name}", e.loc)
                e.scheme = sc
                e.origin = OriginBuiltin(f"Array.{e.name}")
                return instantiate(sc)
            unit_schemes = self.imports.get(e.unit)
            if unit_schemes is None:
                raise self.error(f"unknown unit {e.unit!r}", e.loc)
            sc = unit_schemes.get(e.name)
            if sc is None:
                raise self.error(f"unbound variable {e.unit}.{e.name}", e.loc)
            e.scheme = sc
            e.origin = OriginGlobal(e.unit, e.name)
            return instantiate(sc)
        if isinstance(e, s.Lambda):
            return self.infer_fn_form(e.params, e.body, env)
        if isinstance(e, s.App):
            tf = self.infer(e.fn, env)
            ta = self.infer(e.arg, env)
            beta = TVar(fresh_tvar_id())
            self._unify(tf, TArrow(ta, beta), e.loc)
            return beta
        if isinstance(e, s.LetIn):
            sc = self.infer_binding(e.rec, e.name, e.params, e.bound, env)
            inner = env.child()
            inner.bind(e.name, EnvEntry(sc, ORIGIN_LOCAL))
            return self.infer(e.body, inner)
        if isinstance(e, s.If):
            self._unify(self.infer(e.cond, env), BOOL, e.cond.loc)
            t_then = self.infer(e.then, env)
            t_else = self.infer(e.els, env)
            self._unify(t_else, t_then, e.loc)
            return t_then
        if isinstance(e, s.BinOp):
            tl = self.infer(e.lhs, env)
            tr = self.infer(e.rhs, env)
            if e.op in s.INT_OPS:
                self._unify(tl, INT, e.lhs.loc)
                self._unify(tr, INT, e.rhs.loc)
                return INT
            if e.op in s.FLOAT_OPS:
                self._unify(tl, FLOAT, e.lhs.loc)
                self._unify(tr, FLOAT, e.rhs.loc)
                return FLOAT
            if e.op in s.CMP_OPS:
                self._unify(tr, tl, e.loc)
                return BOOL
            assert e.op in s.BOOL_OPS
            self._unify(tl, BOOL, e.lhs.loc)
            self._unify(tr, BOOL, e.rhs.loc)
            return BOOL
        if isinstance(e, s.Get):
            elem = TVar(fresh_tvar_id())
            self._unify(self.infer(e.arr, env), TArray(elem), e.arr.loc)
            self._unify(self.infer(e.idx, env), INT, e.idx.loc)
            return elem
        if isinstance(e, s.Set):
            elem = TVar(fresh_tvar_id())
            self._unify(self.infer(e.arr, env), TArray(elem), e.arr.loc)
            self._unify(self.infer(e.idx, env), INT, e.idx.loc)
            self._unify(self.infer(e.value, env), elem, e.value.loc)
            return UNIT
        if isinstance(e, s.ArrayLit):
            elem = TVar(fresh_tvar_id())
            for x in e.elems:
                self._unify(self.infer(x, env), elem, x.loc)
            return TArray(elem)
        if isinstance(e, s.TupleLit):
            return TTuple(tuple(self.infer(x, env) for x in e.elems))
        if isinstance(e, s.Seq):
            self._unify(self.infer(e.first, env), UNIT, e.first.loc)
            return self.infer(e.second, env)
        raise TypeError(f"unknown expression node {e!r}")

    def infer_binding(
        self,
        rec: bool,
        name: str,
        params: tuple[s.Param, ...],
        bound: s.Expr,
        env: TypeEnv,
        self_origin: object = ORIGIN_LOCAL,
    ) -> TypeScheme:
        if rec:
            # monomorphic within its own body, generalized afterwards
            self_ty: Ty = TVar(fresh_tvar_id())
            inner = env.child()
            inner.bind(name, EnvEntry(mono(self_ty), self_origin))
            t = self.infer_fn_form(params, bound, inner)
            self._unify(self_ty, t, bound.loc)
        else:
            t = self.infer_fn_form(params, bound, env)
        value = bool(params) or is_syntactic_value(bound)
        return generalize(env, t, value, self.subst)

    # -- zonking: push the final substitution into every annotation

    def zonk_expr(self, e: s.Expr) -> None:
        for node in s.iter_exprs(e):
            if node.ty is not None:
                node.ty = self.subst.apply(node.ty)
            sc = getattr(node, "scheme", None)
            if sc is not None:
                node.scheme = TypeScheme(sc.quantified, self.subst.apply(sc.body))


def infer_unit(
    u: s.SurfaceUnit, imports: Mapping[str, Mapping[str, TypeScheme]]
) -> tuple[TypedUnit, dict[str, TypeScheme]]:
    """Infer every top-level binding of a unit, in order.

    `imports` maps unit names to their exported schemes; every unit
    named by an `open` item must be present. Returns the annotated unit
    and the scheme of each top-level name."""
    inf = _Inferencer(u.unit_name, imports)
    env = TypeEnv()
    opens: list[str] = []
    exported: dict[str, TypeScheme] = {}
    top_origin = {}

    for item in u.items:
        if isinstance(item, s.OpenItem):
            unit_schemes = imports.get(item.unit)
            if unit_schemes is None:
                raise TypeCheckError(f"cannot open unknown unit {item.unit!r}", item.loc)
            for name, sc in unit_schemes.items():
                env.bind(name, EnvEntry(sc, OriginGlobal(item.unit, name)))
            opens.append(item.unit)
            continue
        assert isinstance(item, s.LetItem)
        sc = inf.infer_binding(
            item.rec,
            item.name,
            item.params,
            item.expr,
            env,
            # a top-level binding's self-reference is a unit global, so the
            # inliner can see the recursion
            self_origin=OriginGlobal(u.unit_name, item.name),
        )
        env.bind(item.name, EnvEntry(sc, OriginGlobal(u.unit_name, item.name)))
        exported[item.name] = sc
        top_origin[item.name] = item

    # zonk annotations and schemes now that unification is complete
    for item in u.items:
        if isinstance(item, s.LetItem):
            inf.zonk_expr(item.expr)
    exported = {
        name: TypeScheme(sc.quantified, inf.subst.apply(sc.body))
        for name, sc in exported.items()
    }
    return TypedUnit(u.unit_name, u.items, exported, tuple(opens)), exported
