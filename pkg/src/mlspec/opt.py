"""Inliner/specializer and supporting IR rewrites.

`inline_pass` replaces saturated applications of known non-recursive
functions with a copy of the callee body: the arguments are let-bound
to the (freshly renamed) parameters and the call site's kind map is
substituted into the copy, which is where generic array accesses turn
into specialized ones. Recursive functions are never inlined, nor are
bindings whose stored body exceeds the policy's size threshold.
Specialized nodes that are not the head of an inlined application
(higher-order or escaping uses) survive and execute generically.

A local let-bound function may close over surrounding variables; it is
inlined only where those variables still resolve to the same binders,
which is tracked with per-name binder generations. Sites where the
definition is shadowed are refused and reported as `unknown-head`.

`beta_cleanup` tidies the let chains inlining leaves behind without
changing semantics or dynamic array-access counts. `erase_kinds`
produces the baseline compiler's view: every kind type variable decays
to the generic fallback and explicit type applications disappear.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from . import ir

ImportResolver = Callable[[str, str], Optional["ResolvedDef"]]


@dataclass(frozen=True)
class ResolvedDef:
    term: ir.IrTerm
    recursive: bool
    size: int


@dataclass(frozen=True)
class InlinePolicy:
    threshold: int | None = None  # max callee node count; None is unbounded
    max_rounds: int = 10


@dataclass(frozen=True)
class InlineDecision:
    binding: str
    callee: str
    action: str  # inlined | recursive | too-big | unknown-head | higher-order


@dataclass(frozen=True)
class _LocalDef:
    term: ir.IrTerm
    recursive: bool
    fv_gens: tuple[tuple[str, int], ...]


class _NameSupply:
    def __init__(self) -> None:
        self.n = 0

    def fresh(self, base: str) -> str:
        self.n += 1
        root = base.split("#", 1)[0]
        return f"{root}#{self.n}"


def _rename_binders(t: ir.IrTerm, supply: _NameSupply, env: dict[str, str]) -> ir.IrTerm:
    """Alpha-rename every binder in `t`; free variables are left alone."""
    if isinstance(t, ir.Var):
        return ir.Var(env.get(t.name, t.name))
    if isinstance(t, (ir.Const, ir.GlobalVar)):
        return t
    if isinstance(t, ir.Fun):
        fresh = [supply.fresh(p) for p in t.params]
        inner = dict(env, **dict(zip(t.params, fresh)))
        return ir.Fun(tuple(fresh), _rename_binders(t.body, supply, inner))
    if isinstance(t, ir.Let):
        fresh_name = supply.fresh(t.name)
        inner = dict(env)
        inner[t.name] = fresh_name
        bound_env = inner if t.rec else env
        return ir.Let(
            t.rec,
            fresh_name,
            _rename_binders(t.bound, supply, bound_env),
            _rename_binders(t.body, supply, inner),
        )
    if isinstance(t, ir.Specialized):
        inner_term = _rename_binders(t.inner, supply, env)
        return ir.Specialized(inner_term, t.map)
    return _rebuild(t, lambda c: _rename_binders(c, supply, env))


def _rebuild(t: ir.IrTerm, f: Callable[[ir.IrTerm], ir.IrTerm]) -> ir.IrTerm:
    if isinstance(t, ir.App):
        return ir.App(f(t.fn), tuple(f(a) for a in t.args))
    if isinstance(t, ir.If):
        return ir.If(f(t.cond), f(t.then), f(t.els))
    if isinstance(t, ir.PrimOp):
        return ir.PrimOp(t.op, tuple(f(a) for a in t.args))
    if isinstance(t, ir.ArrayGet):
        return ir.ArrayGet(t.kind, f(t.arr), f(t.idx))
    if isinstance(t, ir.ArraySet):
        return ir.ArraySet(t.kind, f(t.arr), f(t.idx), f(t.value))
    if isinstance(t, ir.ArrayMake):
        return ir.ArrayMake(t.kind, f(t.length), f(t.init))
    if isinstance(t, ir.ArrayLit):
        return ir.ArrayLit(t.kind, tuple(f(e) for e in t.elems))
    if isinstance(t, ir.ArrayLen):
        return ir.ArrayLen(f(t.arr))
    if isinstance(t, ir.Tuple):
        return ir.Tuple(tuple(f(e) for e in t.elems))
    if isinstance(t, ir.TupleProj):
        return ir.TupleProj(t.index, f(t.tuple_))
    if isinstance(t, ir.Seq):
        return ir.Seq(f(t.first), f(t.second))
    raise TypeError(f"unknown IR node {t!r}")


class _Scope:
    __slots__ = ("parent", "defs")

    def __init__(self, parent: Optional["_Scope"]):
        self.parent = parent
        self.defs: dict[str, _LocalDef | None] = {}

    def child(self) -> "_Scope":
        return _Scope(self)

    def lookup(self, name: str) -> _LocalDef | None:
        sc: _Scope | None = self
        while sc is not None:
            if name in sc.defs:
                return sc.defs[name]
            sc = sc.parent
        return None


class _Inliner:
    def __init__(self, u: ir.IrUnit, resolve_import: ImportResolver, policy: InlinePolicy):
        self.unit = u
        self.resolve_import = resolve_import
        self.policy = policy
        self.supply = _NameSupply()
        self.own: dict[str, ResolvedDef] = {}
        self.inlined: list[InlineDecision] = []
        self.refused: list[InlineDecision] = []
        self.gens: dict[str, int] = {}
        self.recursive_names: frozenset[str] = frozenset()
        self.changed = False
        self.current_binding = "?"

    @property
    def report(self) -> list[InlineDecision]:
        # everything that was ever inlined, plus the refusals still
        # standing after the last round
        return self.inlined + self.refused

    def bump(self, name: str) -> None:
        self.gens[name] = self.gens.get(name, 0) + 1

    def run(self) -> ir.IrUnit:
        bindings = list(self.unit.bindings)
        for _round in range(self.policy.max_rounds):
            self.changed = False
            self.own = {}
            self.refused = []
            new_bindings: list[tuple[str, ir.IrTerm]] = []
            self.recursive_names = ir.recursive_bindings(
                ir.IrUnit(self.unit.name, tuple(bindings), ())
            )
            for name, term in bindings:
                self.current_binding = name
                new_term = self.visit(term, _Scope(None))
                new_bindings.append((name, new_term))
                self.own[name] = ResolvedDef(
                    new_term, name in self.recursive_names, ir.node_count(new_term)
                )
            bindings = new_bindings
            if not self.changed:
                break
        return ir.IrUnit(self.unit.name, tuple(bindings), self.unit.exports)

    # -- traversal

    def visit(self, t: ir.IrTerm, scope: _Scope) -> ir.IrTerm:
        if isinstance(t, (ir.Const, ir.Var, ir.GlobalVar)):
            return t
        if isinstance(t, ir.Specialized):
            # a surviving occurrence outside call position: higher-order use
            self.log(t.inner, "higher-order")
            return t
        if isinstance(t, ir.Fun):
            inner = scope.child()
            for p in t.params:
                self.bump(p)
                inner.defs[p] = None
            return ir.Fun(t.params, self.visit(t.body, inner))
        if isinstance(t, ir.Let):
            inner = scope.child()
            if t.rec:
                self.bump(t.name)
                inner.defs[t.name] = self.describe_local(t.bound, recursive=True)
                bound = self.visit(t.bound, inner)
                inner.defs[t.name] = self.describe_local(bound, recursive=True)
            else:
                bound = self.visit(t.bound, scope)
                self.bump(t.name)
                inner.defs[t.name] = self.describe_local(bound, recursive=False)
            return ir.Let(t.rec, t.name, bound, self.visit(t.body, inner))
        if isinstance(t, ir.App):
            fn = t.fn
            if not isinstance(fn, (ir.Var, ir.GlobalVar, ir.Specialized)):
                fn = self.visit(fn, scope)
            args = tuple(self.visit(a, scope) for a in t.args)
            return self.try_inline(fn, args, scope)
        return _rebuild(t, lambda c: self.visit(c, scope))

    def describe_local(self, bound: ir.IrTerm, recursive: bool) -> _LocalDef | None:
        if not isinstance(bound, ir.Fun):
            return None
        fvs = sorted(ir.free_vars(bound))
        return _LocalDef(bound, recursive, tuple((v, self.gens.get(v, 0)) for v in fvs))

    # -- the call-site rewrite

    def try_inline(self, head: ir.IrTerm, args: tuple[ir.IrTerm, ...], scope: _Scope) -> ir.IrTerm:
        kmap: ir.KindMap | None = None
        inner = head
        if isinstance(inner, ir.Specialized):
            kmap = inner.map
            inner = inner.inner
        if isinstance(inner, ir.Var):
            local = scope.lookup(inner.name)
            if local is None:
                return self.refuse(head, args, inner, "unknown-head")
            if local.recursive:
                return self.refuse(head, args, inner, "recursive")
            for v, gen in local.fv_gens:
                if self.gens.get(v, 0) != gen:
                    # definition shadowed at this site; not usable here
                    return self.refuse(head, args, inner, "unknown-head")
            if self.policy.threshold is not None and ir.node_count(local.term) > self.policy.threshold:
                return self.refuse(head, args, inner, "too-big")
            return self.splice(head, args, inner, local.term, kmap)
        if isinstance(inner, ir.GlobalVar):
            if inner.unit == self.unit.name:
                if inner.name in self.recursive_names:
                    return self.refuse(head, args, inner, "recursive")
                own = self.own.get(inner.name)
                if own is None:
                    return self.refuse(head, args, inner, "unknown-head")
                if own.recursive:
                    return self.refuse(head, args, inner, "recursive")
                if not isinstance(own.term, ir.Fun):
                    return self.refuse(head, args, inner, "higher-order")
                if self.too_big(own.size):
                    return self.refuse(head, args, inner, "too-big")
                return self.splice(head, args, inner, own.term, kmap)
            imported = self.resolve_import(inner.unit, inner.name)
            if imported is None:
                return self.refuse(head, args, inner, "unknown-head")
            if imported.recursive:
                return self.refuse(head, args, inner, "recursive")
            if not isinstance(imported.term, ir.Fun):
                return self.refuse(head, args, inner, "higher-order")
            if self.too_big(imported.size):
                return self.refuse(head, args, inner, "too-big")
            return self.splice(head, args, inner, imported.term, kmap)
        # computed heads are left as they are
        return ir.App(head, args)

    def too_big(self, size: int) -> bool:
        return self.policy.threshold is not None and size > self.policy.threshold

    def splice(
        self,
        head: ir.IrTerm,
        args: tuple[ir.IrTerm, ...],
        callee: ir.IrTerm,
        fn_term: ir.IrTerm,
        kmap: ir.KindMap | None,
    ) -> ir.IrTerm:
        if not isinstance(fn_term, ir.Fun):
            return self.refuse(head, args, callee, "higher-order")
        if len(fn_term.params) != len(args):
            return self.refuse(head, args, callee, "higher-order")
        copy = _rename_binders(fn_term, self.supply, {})
        if kmap is not None:
            copy = ir.subst_kinds(copy, kmap)
        assert isinstance(copy, ir.Fun)
        result = copy.body
        for param, arg in zip(reversed(copy.params), reversed(args)):
            result = ir.Let(False, param, arg, result)
        self.log(callee, "inlined")
        self.changed = True
        return result

    def refuse(
        self, head: ir.IrTerm, args: tuple[ir.IrTerm, ...], callee: ir.IrTerm, reason: str
    ) -> ir.IrTerm:
        self.log(callee, reason)
        return ir.App(head, args)

    def log(self, callee: ir.IrTerm, action: str) -> None:
        if isinstance(callee, ir.GlobalVar):
            desc = f"{callee.unit}.{callee.name}"
        elif isinstance(callee, ir.Var):
            desc = callee.name
        else:
            desc = "?"
        decision = InlineDecision(self.current_binding, desc, action)
        if action == "inlined":
            self.inlined.append(decision)
        else:
            self.refused.append(decision)


def inline_pass(
    u: ir.IrUnit, resolve_import: ImportResolver, policy: InlinePolicy = InlinePolicy()
) -> tuple[ir.IrUnit, list[InlineDecision]]:
    """Inline within a unit, consulting `resolve_import` for bodies of
    other units. Iterates until a fixpoint or policy.max_rounds."""
    worker = _Inliner(u, resolve_import, policy)
    out = worker.run()
    return out, worker.report


# ---------------------------------------------------------------------------
# Cleanup


def _is_removable(t: ir.IrTerm) -> bool:
    # safe to drop when dead: cannot fault, perform effects, or touch arrays
    if isinstance(t, (ir.Const, ir.Var, ir.GlobalVar, ir.Fun)):
        return True
    if isinstance(t, ir.Specialized):
        return True
    if isinstance(t, ir.Tuple):
        return all(_is_removable(e) for e in t.elems)
    if isinstance(t, ir.TupleProj):
        return _is_removable(t.tuple_)
    return False


def _subst_var(t: ir.IrTerm, x: str, rep: ir.IrTerm, rep_free: frozenset[str]):
    """Replace free occurrences of x; None when a binder would capture
    the replacement's variables."""

    def go(t: ir.IrTerm):
        if isinstance(t, ir.Var):
            return rep if t.name == x else t
        if isinstance(t, (ir.Const, ir.GlobalVar)):
            return t
        if isinstance(t, ir.Fun):
            if x in t.params:
                return t
            if rep_free & set(t.params):
                if x in ir.free_vars(t.body):
                    return None
                return t
            body = go(t.body)
            return None if body is None else ir.Fun(t.params, body)
        if isinstance(t, ir.Let):
            shadows = t.name == x
            captures = t.name in rep_free
            if t.rec:
                # the binder scopes over both sides
                if shadows:
                    return t
                if captures:
                    if x in ir.free_vars(t.bound) or x in ir.free_vars(t.body):
                        return None
                    return t
                bound = go(t.bound)
                body = go(t.body)
                if bound is None or body is None:
                    return None
                return ir.Let(True, t.name, bound, body)
            bound = go(t.bound)
            if bound is None:
                return None
            if shadows:
                return ir.Let(False, t.name, bound, t.body)
            if captures:
                if x in ir.free_vars(t.body):
                    return None
                return ir.Let(False, t.name, bound, t.body)
            body = go(t.body)
            return None if body is None else ir.Let(False, t.name, bound, body)
        if isinstance(t, ir.Specialized):
            inner = go(t.inner)
            if inner is None:
                return None
            if not isinstance(inner, (ir.Var, ir.GlobalVar)):
                # substituting a non-variable under a type application
                # would break its shape; keep the let instead
                return None
            return ir.Specialized(inner, t.map)
        parts = ir.children(t)
        new_parts = []
        for p in parts:
            q = go(p)
            if q is None:
                return None
            new_parts.append(q)
        it = iter(new_parts)
        return _rebuild(t, lambda _c: next(it))

    return go(t)


def _cleanup_once(t: ir.IrTerm) -> ir.IrTerm:
    if isinstance(t, (ir.Const, ir.Var, ir.GlobalVar, ir.Specialized)):
        return t
    if isinstance(t, ir.Fun):
        return ir.Fun(t.params, _cleanup_once(t.body))
    if isinstance(t, ir.Let):
        bound = _cleanup_once(t.bound)
        body = _cleanup_once(t.body)
        if not t.rec:
            if isinstance(bound, (ir.Var, ir.GlobalVar, ir.Const)):
                rep_free = ir.free_vars(bound)
                new_body = _subst_var(body, t.name, bound, rep_free)
                if new_body is not None:
                    return new_body
            if t.name not in ir.free_vars(body) and _is_removable(bound):
                return body
        return ir.Let(t.rec, t.name, bound, body)
    return _rebuild(t, _cleanup_once)


def beta_cleanup(u: ir.IrUnit) -> ir.IrUnit:
    """Substitute lets that bind a variable, constant or global; drop dead
    lets whose bound expression cannot fault or perform effects. Runs to
    a fixpoint, so the pass is idempotent."""
    new_bindings = []
    for name, term in u.bindings:
        while True:
            next_term = _cleanup_once(term)
            if next_term == term:
                break
            term = next_term
        new_bindings.append((name, term))
    return ir.IrUnit(u.name, tuple(new_bindings), u.exports)


# ---------------------------------------------------------------------------
# Baseline erasure


def _erase_term(t: ir.IrTerm) -> ir.IrTerm:
    if isinstance(t, ir.Specialized):
        return t.inner
    if isinstance(t, (ir.Const, ir.Var, ir.GlobalVar)):
        return t
    if isinstance(t, ir.Fun):
        return ir.Fun(t.params, _erase_term(t.body))
    if isinstance(t, ir.Let):
        return ir.Let(t.rec, t.name, _erase_term(t.bound), _erase_term(t.body))
    return _rebuild(t, _erase_term)


def erase_kinds(u: ir.IrUnit) -> ir.IrUnit:
    """The pre-specialization compiler's view: type-variable kinds decay
    to generic dispatch and explicit type applications vanish. Concrete
    kinds from directly monomorphic code are kept."""

    def fk(k: ir.ArrayKind) -> ir.ArrayKind:
        return ir.GENERIC_KIND if isinstance(k, ir.KindVar) else k

    new_bindings = tuple(
        (name, ir.map_kinds(_erase_term(term), fk)) for name, term in u.bindings
    )
    return ir.IrUnit(u.name, new_bindings, u.exports)
