import pytest

from helpers import infer_source
from mlspec.diagnostics import ArtifactError
from mlspec import inference as inf
from mlspec import ir
from mlspec.lowering import lower_unit
from mlspec.units import (
    FORMAT_VERSION,
    RenamingTable,
    adjust_impl_tvars,
    artifact_from_text,
    artifact_to_text,
    emit_artifact,
    fetch_body_for_inlining,
    import_interface,
    parse_mxi,
    read_artifact,
    write_artifact,
)


def _build_get0(iface_text=None):
    tu, exported = infer_source("let get0 a = a.(0)", "A")
    impl = lower_unit(tu)
    iface = parse_mxi(iface_text) if iface_text else None
    return emit_artifact(iface, exported, impl), exported


# -- parse_mxi


def test_parse_mxi():
    out = parse_mxi("val get0 : 'a array -> 'a\n\nval n : int\n")
    assert set(out) == {"get0", "n"}
    assert inf.scheme_to_str(out["get0"]) == "'a array -> 'a"


def test_parse_mxi_bad_line():
    with pytest.raises(ArtifactError):
        parse_mxi("let x = 3")


# -- emit + adjust


def test_emit_without_interface_exports_inferred():
    artifact, exported = _build_get0()
    assert artifact.interface.keys() == exported.keys()
    assert artifact.interface["get0"] == exported["get0"]


def test_adjustment_renames_impl_ids_to_interface_ids():
    artifact, exported = _build_get0("val get0 : 'a array -> 'a")
    (iface_var,) = artifact.interface["get0"].quantified
    (inferred_var,) = exported["get0"].quantified
    assert iface_var != inferred_var  # independent inference
    body = artifact.impl.binding_map()["get0"]
    assert ir.free_kind_tvars(body) == frozenset({iface_var})


def test_interface_more_general_than_impl_rejected():
    tu, exported = infer_source("let get0 a = a.(0) + 0", "A")  # int array -> int
    impl = lower_unit(tu)
    iface = parse_mxi("val get0 : 'a array -> 'a")
    with pytest.raises(ArtifactError, match="less general"):
        emit_artifact(iface, exported, impl)


def test_interface_declaring_missing_name_rejected():
    tu, exported = infer_source("let get0 a = a.(0)", "A")
    impl = lower_unit(tu)
    iface = parse_mxi("val nope : int")
    with pytest.raises(ArtifactError, match="does not define"):
        emit_artifact(iface, exported, impl)


def test_interface_can_restrict_generality_by_concretizing():
    # a monomorphic declaration over a polymorphic implementation pins
    # the implementation's kinds
    artifact, _ = _build_get0("val get0 : int array -> int")
    body = artifact.impl.binding_map()["get0"]
    assert ir.free_kind_tvars(body) == frozenset()
    gets = [s for s in ir.iter_subterms(body) if isinstance(s, ir.ArrayGet)]
    assert gets[0].kind == ir.INT_KIND


def test_interface_hides_undeclared_names():
    tu, exported = infer_source("let helper a = a.(0)\nlet pub a = helper a", "A")
    impl = lower_unit(tu)
    iface = parse_mxi("val pub : 'a array -> 'a")
    artifact = emit_artifact(iface, exported, impl)
    assert set(artifact.interface) == {"pub"}
    assert set(artifact.impl.binding_map()) == {"helper", "pub"}
    table = RenamingTable()
    import_interface(artifact, table)
    with pytest.raises(ArtifactError, match="does not export"):
        fetch_body_for_inlining(artifact, "helper", table)


def test_shared_inferred_tvar_with_distinct_iface_ids_rejected():
    # cannot arise from per-binding generalization; oracle: per-name
    # alpha comparison succeeds, but the combined renaming conflicts
    shared = inf.fresh_tvar_id()
    shared_sc = inf.TypeScheme(
        frozenset((shared,)), inf.TArrow(inf.TVar(shared), inf.TVar(shared))
    )
    inferred = {"f": shared_sc, "g": shared_sc}
    ia, ib = inf.parse_scheme("'a -> 'a"), inf.parse_scheme("'b -> 'b")
    for name, sc in inferred.items():
        assert inf.match_scheme(sc, (ia if name == "f" else ib).body)  # per-name ok
    impl = ir.IrUnit(
        "A",
        (("f", ir.Fun(("x",), ir.Var("x"))), ("g", ir.Fun(("x",), ir.Var("x")))),
        tuple(inferred.items()),
    )
    with pytest.raises(ArtifactError, match="conflicting"):
        adjust_impl_tvars(impl, inferred, {"f": ia, "g": ib})


def test_collapsing_interface_leaves_call_site_keys_internal():
    # `pair` is used internally at (int, float); an interface collapsing
    # its two variables into one must not make the caller's kind-map
    # keys collide
    src = "let pair x y = (x, y)\nlet use = pair 1 2.5"
    tu, exported = infer_source(src, "A")
    impl = lower_unit(tu)
    iface = parse_mxi("val pair : 'a -> 'a -> 'a * 'a\nval use : int * float")
    artifact = emit_artifact(iface, exported, impl)
    use_term = artifact.impl.binding_map()["use"]
    specs = [s for s in ir.iter_subterms(use_term) if isinstance(s, ir.Specialized)]
    assert len(specs) == 1
    assert specs[0].map.keys() == exported["pair"].quantified
    assert inf.scheme_to_str(artifact.interface["pair"]) == "'a -> 'a -> 'a * 'a"


def test_adjust_monomorphic_impl_unchanged():
    tu, exported = infer_source("let one = 1\nlet two = one + 1", "A")
    impl = lower_unit(tu)
    adjusted = adjust_impl_tvars(impl, exported, exported)
    assert adjusted.bindings == impl.bindings


# -- import / fetch


def test_import_renames_quantified_vars_and_is_idempotent():
    artifact, _ = _build_get0("val get0 : 'a array -> 'a")
    (iface_var,) = artifact.interface["get0"].quantified
    table = RenamingTable()
    schemes = import_interface(artifact, table)
    (new_var,) = schemes["get0"].quantified
    assert new_var != iface_var
    assert table.by_unit["A"] == {iface_var: new_var}
    again = import_interface(artifact, table)
    assert again == schemes
    assert table.by_unit["A"] == {iface_var: new_var}


def test_import_of_monomorphic_unit_has_empty_renaming():
    tu, exported = infer_source("let n = 41", "A")
    artifact = emit_artifact(None, exported, lower_unit(tu))
    table = RenamingTable()
    import_interface(artifact, table)
    assert table.by_unit["A"] == {}


def test_import_version_mismatch():
    artifact, _ = _build_get0()
    artifact.format_version = "mlspec-unit-0"
    with pytest.raises(ArtifactError, match="format"):
        import_interface(artifact, RenamingTable())


def test_fetch_applies_renaming_and_specializes():
    artifact, _ = _build_get0("val get0 : 'a array -> 'a")
    table = RenamingTable()
    schemes = import_interface(artifact, table)
    (session_var,) = schemes["get0"].quantified
    body = fetch_body_for_inlining(artifact, "get0", table)
    assert ir.free_kind_tvars(body) == frozenset({session_var})
    # composing the import renaming with a concrete map specializes fully
    final = ir.subst_kinds(body, {session_var: ir.INT_KIND})
    gets = [s for s in ir.iter_subterms(final) if isinstance(s, ir.ArrayGet)]
    assert gets[0].kind == ir.INT_KIND


def test_fetch_monomorphic_body_unchanged():
    tu, exported = infer_source("let one = 1", "A")
    artifact = emit_artifact(None, exported, lower_unit(tu))
    table = RenamingTable()
    import_interface(artifact, table)
    assert fetch_body_for_inlining(artifact, "one", table) == ir.Const(1)


def test_fetch_freshens_hidden_ids():
    # a hidden polymorphic helper's ids must not leak into the importer
    tu, exported = infer_source("let helper a = a.(0)\nlet pub a = helper a", "A")
    impl = lower_unit(tu)
    artifact = emit_artifact(parse_mxi("val pub : 'a array -> 'a"), exported, impl)
    helper_ids = ir.free_kind_tvars(artifact.impl.binding_map()["helper"])
    table = RenamingTable()
    import_interface(artifact, table)
    body = fetch_body_for_inlining(artifact, "pub", table)
    for sub in ir.iter_subterms(body):
        if isinstance(sub, ir.Specialized):
            for k, v in sub.map.entries:
                assert k not in helper_ids
    assert not (ir.free_kind_tvars(body) & helper_ids)


def test_fetch_requires_prior_import():
    artifact, _ = _build_get0()
    with pytest.raises(ArtifactError, match="not imported"):
        fetch_body_for_inlining(artifact, "get0", RenamingTable())


# -- file round-trip


def test_artifact_round_trip(tmp_path):
    artifact, _ = _build_get0("val get0 : 'a array -> 'a")
    path = tmp_path / "a.unit"
    write_artifact(path, artifact)
    loaded = read_artifact(path)
    assert loaded.unit_name == artifact.unit_name
    assert loaded.interface == artifact.interface
    assert loaded.impl == artifact.impl
    assert loaded.meta == artifact.meta
    assert loaded.format_version == FORMAT_VERSION


def test_artifact_text_shape():
    artifact, _ = _build_get0()
    text = artifact_to_text(artifact)
    assert text.startswith(f"(unit-artifact {FORMAT_VERSION}")
    assert "(iface (val get0 (forall (" in text
    assert "(impl (unit A" in text
    assert "(meta (size get0 " in text
    assert artifact_from_text(text).impl == artifact.impl


def test_stale_version_on_disk_rejected(tmp_path):
    artifact, _ = _build_get0()
    text = artifact_to_text(artifact).replace(FORMAT_VERSION, "mlspec-unit-0")
    path = tmp_path / "a.unit"
    path.write_text(text)
    with pytest.raises(ArtifactError, match="format"):
        read_artifact(path)


def test_meta_records_size_and_recursion():
    src = "let rec spin i = spin (i + 1)\nlet flat x = x + 1"
    tu, exported = infer_source(src, "A")
    artifact = emit_artifact(None, exported, lower_unit(tu))
    assert artifact.meta["spin"].recursive
    assert not artifact.meta["flat"].recursive
    assert artifact.meta["flat"].size == ir.node_count(artifact.impl.binding_map()["flat"])
