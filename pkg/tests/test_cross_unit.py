"""End-to-end separate-compilation scenarios over several units."""

from mlspec import cli, ir, units


def _build(lib, name, text, mode="full", mxi=None):
    (lib / f"{name}.mx").write_text(text)
    if mxi is not None:
        (lib / f"{name}.mxi").write_text(mxi)
    return cli.build_file(lib / f"{name}.mx", lib, mode, None)


def test_two_hop_transitive_specialization(tmp_path):
    # C calls B.wrap which calls A.get0; the kind map must compose
    # through both unit boundaries and both renaming tables
    _build(tmp_path, "a", "let get0 a = a.(0)\n", mxi="val get0 : 'a array -> 'a\n")
    _build(tmp_path, "b", "open A\nlet wrap a = get0 a\n")
    path_c, _ = _build(
        tmp_path,
        "c",
        """open B
let iv = Array.make 2 7
let fv = Array.make 2 0.5
let show = print_int (wrap iv); newline (); print_float (wrap fv); newline ()
""",
    )
    c = units.read_artifact(path_c)
    kinds = [
        s.kind
        for _, term in c.impl.bindings
        for s in ir.iter_subterms(term)
        if isinstance(s, ir.ArrayGet)
    ]
    assert sorted(type(k).__name__ for k in kinds) == ["KindFloat", "KindInt"]
    assert ir.unit_free_kind_tvars(c.impl) == frozenset()
    out, stats = cli.run_unit(path_c, tmp_path)
    assert out == "7\n0.5\n"
    assert stats.gen == 0


def test_two_hop_generic_without_kind_maps(tmp_path):
    # the same program built in inline-only mode inlines both hops but
    # every access stays generic
    _build(tmp_path, "a", "let get0 a = a.(0)\n", mode="inline-only")
    _build(tmp_path, "b", "open A\nlet wrap a = get0 a\n", mode="inline-only")
    path_c, _ = _build(
        tmp_path,
        "c",
        "open B\nlet x = wrap (Array.make 1 5)\nlet show = print_int x\n",
        mode="inline-only",
    )
    out, stats = cli.run_unit(path_c, tmp_path)
    assert out == "5"
    assert stats.gen == stats.all == 1


def test_unit_used_by_two_importers_at_different_types(tmp_path):
    _build(tmp_path, "a", "let get0 a = a.(0)\n", mxi="val get0 : 'a array -> 'a\n")
    _build(tmp_path, "b", "open A\nlet bi = get0 (Array.make 1 3)\n")
    path_c, _ = _build(
        tmp_path,
        "c",
        """open A
open B
let cf = get0 (Array.make 1 0.25)
let show = print_int bi; newline (); print_float cf; newline ()
""",
    )
    out, stats = cli.run_unit(path_c, tmp_path)
    assert out == "3\n0.25\n"
    assert stats.gen == 0
    assert stats.spec_int == 1
    assert stats.spec_float == 1


def test_weak_exported_array_stays_generic_but_runs(tmp_path):
    # a top-level array literal is not generalized; its element type may
    # stay an unresolved variable that every mode runs generically
    _build(tmp_path, "w", "let empty = [||]\n")
    path_u, _ = _build(
        tmp_path,
        "u",
        "open W\nlet n = Array.length empty\nlet show = print_int n\n",
    )
    out, stats = cli.run_unit(path_u, tmp_path)
    assert out == "0"
    assert stats.all == 0  # length is not an access


def test_qualified_access_without_open(tmp_path):
    _build(tmp_path, "a", "let get0 a = a.(0)\n")
    path_b, _ = _build(
        tmp_path, "b", "let x = A.get0 (Array.make 1 9)\nlet show = print_int x\n"
    )
    out, stats = cli.run_unit(path_b, tmp_path)
    assert out == "9"
    assert stats.gen == 0


def test_hidden_helper_call_survives_and_runs_generic(tmp_path):
    # pub's body calls a helper hidden by the interface; importers cannot
    # inline the helper, and its accesses stay generic at runtime
    _build(
        tmp_path,
        "a",
        "let helper a = a.(0)\nlet pub a = helper a\n",
        mode="none",
        mxi="val pub : 'a array -> 'a\n",
    )
    path_b, _ = _build(
        tmp_path,
        "b",
        "open A\nlet x = pub (Array.make 1 11)\nlet show = print_int x\n",
        mode="none",
    )
    out, stats = cli.run_unit(path_b, tmp_path)
    assert out == "11"
    assert stats.gen == 1


def test_dump_ir_by_bare_unit_name(tmp_path, capsys, monkeypatch):
    _build(tmp_path, "a", "let get0 a = a.(0)\n", mxi="val get0 : 'a array -> 'a\n")
    _build(
        tmp_path,
        "b",
        """open A
let iv = Array.make 1 42
let fv = Array.make 1 2.5
let i = get0 iv
let f = get0 fv
""",
    )
    monkeypatch.setenv("MLSPEC_LIB", str(tmp_path))
    assert cli.main(["dump-ir", "b", "--stage", "optimized"]) == 0
    text = capsys.readouterr().out
    assert "tvar" not in text
    assert text.count("(aget int") == 1
    assert text.count("(aget float") == 1
