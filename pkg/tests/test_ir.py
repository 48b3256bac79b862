import random

import pytest

from irgen import random_term
from mlspec.diagnostics import ArtifactError
from mlspec import inference as inf
from mlspec import ir
from mlspec.ir import (
    ADDR_KIND,
    App,
    ArrayGet,
    Const,
    FLOAT_KIND,
    Fun,
    GlobalVar,
    INT_KIND,
    IrUnit,
    KindMap,
    KindVar,
    Specialized,
    Var,
    free_kind_tvars,
    kind_of_type,
    node_count,
    parse_ir,
    print_ir,
    subst_kinds,
    term_from_sexpr,
    term_to_sexpr,
)


# -- kind_of_type


def test_kind_of_type_examples():
    assert kind_of_type(inf.INT) == INT_KIND
    assert kind_of_type(inf.FLOAT) == FLOAT_KIND
    assert kind_of_type(inf.TVar(7)) == KindVar(7)
    assert kind_of_type(inf.TTuple((inf.INT, inf.INT))) == ADDR_KIND
    # immediates share the int representation
    assert kind_of_type(inf.BOOL) == INT_KIND
    assert kind_of_type(inf.UNIT) == INT_KIND
    assert kind_of_type(inf.TArray(inf.FLOAT)) == ADDR_KIND
    assert kind_of_type(inf.TArrow(inf.INT, inf.INT)) == ADDR_KIND


# -- KindMap


def test_kind_map_sorted_and_unique():
    m = KindMap.of([(5, INT_KIND), (2, FLOAT_KIND)])
    assert [k for k, _ in m.entries] == [2, 5]
    with pytest.raises(ValueError):
        KindMap.of([(1, INT_KIND), (1, FLOAT_KIND)])


def test_specialized_shape_enforced():
    with pytest.raises(ValueError):
        Specialized(Const(1), KindMap.of({1: INT_KIND}))
    with pytest.raises(ValueError):
        Specialized(Var("f"), KindMap.of({}))


# -- subst_kinds


def test_subst_example_concrete():
    t = ArrayGet(KindVar(1), Var("a"), Const(0))
    assert subst_kinds(t, {1: INT_KIND}) == ArrayGet(INT_KIND, Var("a"), Const(0))


def test_subst_empty_map_is_identity():
    rng = random.Random(7)
    for _ in range(20):
        t = random_term(rng, 4, [1, 2, 3])
        assert subst_kinds(t, {}) == t


def test_subst_composition_through_var():
    t = ArrayGet(KindVar(10), Var("a"), Const(0))
    step1 = subst_kinds(t, {10: KindVar(20)})
    step2 = subst_kinds(step1, {20: FLOAT_KIND})
    assert step2 == subst_kinds(t, {10: FLOAT_KIND})


def _oracle_free_tvars(t: ir.IrTerm) -> frozenset[int]:
    """Independent oracle: an id is free exactly when substituting it
    changes the term (probed over every id mentioned anywhere)."""
    candidates = set()
    for sub in ir.iter_subterms(t):
        if isinstance(sub, (ir.ArrayGet, ir.ArraySet, ir.ArrayMake, ir.ArrayLit)):
            if isinstance(sub.kind, KindVar):
                candidates.add(sub.kind.tvar)
        if isinstance(sub, Specialized):
            for k, v in sub.map.entries:
                candidates.add(k)
                if isinstance(v, KindVar):
                    candidates.add(v.tvar)
    return frozenset(
        vid for vid in candidates if subst_kinds(t, {vid: ADDR_KIND}) != t
    )


def test_free_kind_tvars_examples_against_oracle():
    t1 = ArrayGet(KindVar(3), Var("a"), Const(0))
    assert _oracle_free_tvars(t1) == frozenset({3})
    assert free_kind_tvars(t1) == frozenset({3})

    t2 = ArrayGet(INT_KIND, Var("a"), Const(0))
    assert _oracle_free_tvars(t2) == frozenset()
    assert free_kind_tvars(t2) == frozenset()

    # ranges contribute, keys do not
    t3 = Specialized(Var("f"), KindMap.of({5: KindVar(9)}))
    assert _oracle_free_tvars(t3) == frozenset({9})
    assert free_kind_tvars(t3) == frozenset({9})


@pytest.mark.parametrize("seed", range(30))
def test_free_kind_tvars_matches_oracle_on_random_terms(seed):
    rng = random.Random(seed)
    t = random_term(rng, 4, [1, 2, 3, 9])
    assert free_kind_tvars(t) == _oracle_free_tvars(t)


@pytest.mark.parametrize("seed", range(30))
def test_subst_idempotent_when_range_disjoint(seed):
    rng = random.Random(100 + seed)
    t = random_term(rng, 4, [1, 2, 3])
    m = {1: INT_KIND, 2: FLOAT_KIND, 3: ADDR_KIND}
    once = subst_kinds(t, m)
    assert subst_kinds(once, m) == once


@pytest.mark.parametrize("seed", range(30))
def test_subst_completeness_law(seed):
    rng = random.Random(200 + seed)
    t = random_term(rng, 4, [1, 2, 3, 4])
    m = {1: KindVar(50), 2: INT_KIND}
    before = free_kind_tvars(t)
    after = free_kind_tvars(subst_kinds(t, m))
    expected = (before - m.keys()) | ({50} if 1 in before else set())
    assert after == expected


# -- textual form


def test_print_format_examples():
    t = ArrayGet(KindVar(1), Var("a"), Const(0))
    assert ir.sexpr.dumps(term_to_sexpr(t)) == "(aget (tvar 1) a 0)"
    t2 = Specialized(GlobalVar("A", "get0"), KindMap.of({1: INT_KIND}))
    assert ir.sexpr.dumps(term_to_sexpr(t2)) == "(spec (gvar A get0) ((1 int)))"


def test_term_round_trip_random():
    rng = random.Random(42)
    for _ in range(80):
        t = random_term(rng, 4, [1, 2, 3])
        assert term_from_sexpr(term_to_sexpr(t)) == t


def test_unit_round_trip():
    a = inf.fresh_tvar_id()
    sc = inf.TypeScheme(frozenset((a,)), inf.TArrow(inf.TArray(inf.TVar(a)), inf.TVar(a)))
    u = IrUnit(
        "A",
        (("get0", Fun(("x",), ArrayGet(KindVar(a), Var("x"), Const(0)))),),
        (("get0", sc),),
    )
    text = print_ir(u)
    assert parse_ir(text) == u


def test_parse_ir_errors():
    with pytest.raises(ArtifactError):
        parse_ir("(unit A (def x (nonsense 1)))")
    with pytest.raises(ArtifactError):
        parse_ir("(unit A (def x (aget int a)))")  # arity
    with pytest.raises(ArtifactError):
        parse_ir("(unit A (def x (aget int a 0))")  # unbalanced


def test_unit_constant_prints_as_empty_parens():
    t = ir.Seq(ir.PrimOp("newline", (Const(None),)), Const(None))
    assert term_from_sexpr(term_to_sexpr(t)) == t
    assert "()" in ir.sexpr.dumps(term_to_sexpr(t))


def test_node_count():
    t = App(Var("f"), (Const(1), Const(2)))
    assert node_count(t) == 4


def test_recursive_bindings_detects_self_reference():
    u = IrUnit(
        "A",
        (
            ("f", Fun(("x",), App(GlobalVar("A", "f"), (Var("x"),)))),
            ("g", Fun(("x",), App(GlobalVar("A", "f"), (Var("x"),)))),
        ),
        (),
    )
    assert ir.recursive_bindings(u) == frozenset({"f"})


def test_free_vars():
    t = ir.Let(False, "x", Var("y"), Fun(("z",), App(Var("x"), (Var("z"), Var("w")))))
    assert ir.free_vars(t) == frozenset({"y", "w"})
    t_rec = ir.Let(True, "f", Fun(("x",), App(Var("f"), (Var("x"),))), Var("f"))
    assert ir.free_vars(t_rec) == frozenset()
