"""Separate-compilation artifacts and type-variable consistency.

A compiled unit is stored as a single `.unit` file holding two
sections: the interface (exported schemes, possibly declared in a
`.mxi` file and inferred independently) and the implementation IR kept
for cross-unit inlining, plus per-binding inlining metadata.

Three renaming steps keep type-variable identifiers coherent across
units:

 * at emit time, implementation ids are adjusted to the interface ids
   (interfaces are checked only after inference, so the two sides may
   have inferred the same scheme under different ids);
 * also at emit time, kind-map keys that refer to an imported unit's
   schemes are rewritten to that unit's canonical interface ids, so
   stored bodies never leak this session's ids;
 * at import time, interface ids are renamed to fresh ids of the
   importing session, recorded per unit in a RenamingTable, and bodies
   fetched for inlining are renamed through that table (ids the table
   does not cover, e.g. a hidden helper's variables, are freshened so
   they can never collide with the importer's ids).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from . import ir, sexpr
from .diagnostics import ArtifactError, MatchFailure
from .inference import (
    TVar,
    TvId,
    TypeScheme,
    apply_mapping,
    fresh_tvar_id,
    match_scheme,
    parse_scheme,
    scheme_to_str,
)

FORMAT_VERSION = "mlspec-unit-1"


@dataclass(frozen=True)
class BindingMeta:
    size: int
    recursive: bool


@dataclass
class UnitArtifact:
    unit_name: str
    interface: dict[str, TypeScheme]
    impl: ir.IrUnit
    meta: dict[str, BindingMeta]
    format_version: str = FORMAT_VERSION


class RenamingTable:
    """Per-imported-unit map from artifact interface ids to this
    session's ids. Importing a unit twice is idempotent."""

    def __init__(self) -> None:
        self.by_unit: dict[str, dict[TvId, TvId]] = {}
        self._schemes: dict[str, dict[str, TypeScheme]] = {}

    def mapping(self, unit: str) -> dict[TvId, TvId] | None:
        return self.by_unit.get(unit)


# ---------------------------------------------------------------------------
# Generic id-rewriting walk. Kind positions (primitive annotations and
# kind-map ranges) go through `kind_fn`; kind-map keys go through
# `key_fn`, which sees the wrapped variable so the key's owning unit is
# known.


def _retag(
    term: ir.IrTerm,
    kind_fn: Callable[[ir.ArrayKind], ir.ArrayKind],
    key_fn: Callable[[ir.IrTerm, TvId], TvId],
) -> ir.IrTerm:
    def go(t: ir.IrTerm) -> ir.IrTerm:
        if isinstance(t, ir.Specialized):
            entries = tuple((key_fn(t.inner, k), kind_fn(v)) for k, v in t.map.entries)
            return ir.Specialized(t.inner, ir.KindMap.of(entries))
        if isinstance(t, (ir.Const, ir.Var, ir.GlobalVar)):
            return t
        if isinstance(t, ir.Fun):
            return ir.Fun(t.params, go(t.body))
        if isinstance(t, ir.App):
            return ir.App(go(t.fn), tuple(go(a) for a in t.args))
        if isinstance(t, ir.Let):
            return ir.Let(t.rec, t.name, go(t.bound), go(t.body))
        if isinstance(t, ir.If):
            return ir.If(go(t.cond), go(t.then), go(t.els))
        if isinstance(t, ir.PrimOp):
            return ir.PrimOp(t.op, tuple(go(a) for a in t.args))
        if isinstance(t, ir.ArrayGet):
            return ir.ArrayGet(kind_fn(t.kind), go(t.arr), go(t.idx))
        if isinstance(t, ir.ArraySet):
            return ir.ArraySet(kind_fn(t.kind), go(t.arr), go(t.idx), go(t.value))
        if isinstance(t, ir.ArrayMake):
            return ir.ArrayMake(kind_fn(t.kind), go(t.length), go(t.init))
        if isinstance(t, ir.ArrayLit):
            return ir.ArrayLit(kind_fn(t.kind), tuple(go(e) for e in t.elems))
        if isinstance(t, ir.ArrayLen):
            return ir.ArrayLen(go(t.arr))
        if isinstance(t, ir.Tuple):
            return ir.Tuple(tuple(go(e) for e in t.elems))
        if isinstance(t, ir.TupleProj):
            return ir.TupleProj(t.index, go(t.tuple_))
        if isinstance(t, ir.Seq):
            return ir.Seq(go(t.first), go(t.second))
        raise TypeError(f"unknown IR node {t!r}")

    return go(term)


# ---------------------------------------------------------------------------
# Interface files


def parse_mxi(text: str) -> dict[str, TypeScheme]:
    """Parse `val NAME : TYPE` lines; each line's variables are scoped to
    that line and allocated fresh ids."""
    out: dict[str, TypeScheme] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("(*"):
            continue
        if not line.startswith("val "):
            raise ArtifactError(f"bad interface line {line!r}")
        rest = line[4:]
        if ":" not in rest:
            raise ArtifactError(f"missing ':' in interface line {line!r}")
        name, ty_text = rest.split(":", 1)
        name = name.strip()
        if not name or name in out:
            raise ArtifactError(f"bad or duplicate interface name {name!r}")
        out[name] = parse_scheme(ty_text.strip())
    return out


# ---------------------------------------------------------------------------
# Emission


def adjust_impl_tvars(
    impl: ir.IrUnit,
    inferred: Mapping[str, TypeScheme],
    iface: Mapping[str, TypeScheme],
) -> ir.IrUnit:
    """Rename kind ids so exported bodies use the interface's ids.

    For alpha-equivalent schemes this is the id renaming recovered per
    name by one-directional unification. When the interface restricts
    generality (for example a monomorphic declaration over a polymorphic
    implementation), the affected kinds are concretized instead. A
    variable shared between two inferred schemes that maps to distinct
    interface ids is rejected: per-binding generalization can never
    produce it, so it signals inconsistent input."""
    var_renames: dict[TvId, TvId] = {}
    concrete: dict[TvId, ir.ArrayKind] = {}
    key_renames: dict[TvId, TvId] = {}
    bindings = impl.binding_map()
    for name, iface_sc in iface.items():
        if name not in bindings:
            raise ArtifactError(f"interface declares {name!r} but the unit does not define it")
        inferred_sc = inferred.get(name)
        if inferred_sc is None:
            raise ArtifactError(f"no inferred scheme for exported name {name!r}")
        try:
            inst = match_scheme(inferred_sc, iface_sc.body)
        except MatchFailure as exc:
            raise ArtifactError(
                f"{name!r}: implementation type {scheme_to_str(inferred_sc)} is less general "
                f"than its interface {scheme_to_str(iface_sc)} ({exc})"
            ) from exc
        var_imgs: dict[TvId, TvId] = {}
        for q, image in inst.items():
            if isinstance(image, TVar):
                if var_renames.get(q, image.id) != image.id or q in concrete:
                    raise ArtifactError(
                        f"type variable shared across exports maps to conflicting interface ids"
                        f" (while adjusting {name!r})"
                    )
                var_renames[q] = image.id
                var_imgs[q] = image.id
            else:
                k = ir.kind_of_type(image)
                if q in var_renames or concrete.get(q, k) != k:
                    raise ArtifactError(
                        f"type variable shared across exports maps to conflicting interface ids"
                        f" (while adjusting {name!r})"
                    )
                concrete[q] = k
        # kind-map keys follow only a pure bijective renaming; a
        # generality-restricting interface (concretized or collapsed
        # variables) leaves same-unit call-site keys at their internal
        # ids, which nothing can match afterwards and the runtime ignores
        if len(inst) == len(var_imgs) == len(set(var_imgs.values())):
            key_renames.update(var_imgs)

    def kind_fn(k: ir.ArrayKind) -> ir.ArrayKind:
        if isinstance(k, ir.KindVar):
            if k.tvar in var_renames:
                return ir.KindVar(var_renames[k.tvar])
            if k.tvar in concrete:
                return concrete[k.tvar]
        return k

    def key_fn(inner: ir.IrTerm, key: TvId) -> TvId:
        # keys under a foreign global refer to that unit's interface ids,
        # which must not be touched by this unit's adjustment
        if isinstance(inner, ir.GlobalVar) and inner.unit != impl.name:
            return key
        return key_renames.get(key, key)

    new_bindings = tuple((n, _retag(t, kind_fn, key_fn)) for n, t in impl.bindings)
    order = [n for n, _ in impl.bindings if n in iface]
    exports = tuple((n, iface[n]) for n in order)
    return ir.IrUnit(impl.name, new_bindings, exports)


def _canonicalize_foreign_keys(impl: ir.IrUnit, table: RenamingTable) -> ir.IrUnit:
    """Rewrite kind-map keys under imported globals back to the exporting
    artifact's interface ids, inverting this session's import renaming."""
    inverted = {
        unit: {new: old for old, new in mapping.items()}
        for unit, mapping in table.by_unit.items()
    }

    def key_fn(inner: ir.IrTerm, key: TvId) -> TvId:
        if isinstance(inner, ir.GlobalVar) and inner.unit != impl.name:
            return inverted.get(inner.unit, {}).get(key, key)
        return key

    new_bindings = tuple(
        (n, _retag(t, lambda k: k, key_fn)) for n, t in impl.bindings
    )
    return ir.IrUnit(impl.name, new_bindings, impl.exports)


def emit_artifact(
    iface_schemes: Optional[Mapping[str, TypeScheme]],
    inferred: Mapping[str, TypeScheme],
    impl: ir.IrUnit,
    imports_renaming: RenamingTable | None = None,
) -> UnitArtifact:
    """Build the storable artifact: check the declared interface (if any)
    against the inferred schemes, canonicalize foreign ids, adjust
    implementation ids to the interface, and record inlining metadata."""
    iface: Mapping[str, TypeScheme] = iface_schemes if iface_schemes is not None else dict(inferred)
    if imports_renaming is not None:
        impl = _canonicalize_foreign_keys(impl, imports_renaming)
    adjusted = adjust_impl_tvars(impl, inferred, iface)
    recursive = ir.recursive_bindings(adjusted)
    meta = {
        name: BindingMeta(size=ir.node_count(term), recursive=name in recursive)
        for name, term in adjusted.bindings
    }
    return UnitArtifact(adjusted.name, dict(adjusted.exports), adjusted, meta)


# ---------------------------------------------------------------------------
# Import side


def import_interface(artifact: UnitArtifact, table: RenamingTable) -> dict[str, TypeScheme]:
    """Rename the artifact's interface into fresh session ids, recording
    old -> new per unit. A second import returns identical schemes."""
    if artifact.format_version != FORMAT_VERSION:
        raise ArtifactError(
            f"unit {artifact.unit_name!r} has format {artifact.format_version!r}, "
            f"expected {FORMAT_VERSION!r}"
        )
    cached = table._schemes.get(artifact.unit_name)
    if cached is not None:
        return dict(cached)
    mapping: dict[TvId, TvId] = {}
    renamed: dict[str, TypeScheme] = {}
    for name, sc in artifact.interface.items():
        for q in sorted(sc.quantified):
            if q not in mapping:
                mapping[q] = fresh_tvar_id()
        body = apply_mapping(sc.body, {q: TVar(mapping[q]) for q in sc.quantified})
        renamed[name] = TypeScheme(frozenset(mapping[q] for q in sc.quantified), body)
    table.by_unit[artifact.unit_name] = mapping
    table._schemes[artifact.unit_name] = renamed
    return dict(renamed)


def fetch_body_for_inlining(artifact: UnitArtifact, name: str, table: RenamingTable) -> ir.IrTerm:
    """Return `name`'s stored body with its kind ids renamed into the
    importing session: interface ids go through the renaming table (the
    owner's table for kind-map keys), all other ids are freshened."""
    if name not in artifact.interface:
        raise ArtifactError(f"unit {artifact.unit_name!r} does not export {name!r}")
    body = artifact.impl.binding_map()[name]
    own = table.mapping(artifact.unit_name)
    if own is None:
        raise ArtifactError(f"unit {artifact.unit_name!r} was not imported before fetch")
    fresh: dict[TvId, TvId] = {}

    def rename(mapping: Mapping[TvId, TvId], vid: TvId) -> TvId:
        if vid in mapping:
            return mapping[vid]
        if vid not in fresh:
            fresh[vid] = fresh_tvar_id()
        return fresh[vid]

    def kind_fn(k: ir.ArrayKind) -> ir.ArrayKind:
        if isinstance(k, ir.KindVar):
            return ir.KindVar(rename(own, k.tvar))
        return k

    def key_fn(inner: ir.IrTerm, key: TvId) -> TvId:
        if isinstance(inner, ir.GlobalVar):
            owner = table.mapping(inner.unit) or {}
            return rename(owner, key)
        return rename({}, key)

    return _retag(body, kind_fn, key_fn)


# ---------------------------------------------------------------------------
# File format:
#   (unit-artifact VERSION (iface (val NAME SCHEME)*) (impl IR)
#                  (meta (size NAME N)* (rec NAME)*))


def artifact_to_sexpr(a: UnitArtifact) -> sexpr.SExpr:
    iface: list = ["iface"]
    for name, sc in a.interface.items():
        iface.append(["val", name, ir.scheme_to_sexpr(sc)])
    meta: list = ["meta"]
    for name, m in a.meta.items():
        meta.append(["size", name, m.size])
    for name, m in a.meta.items():
        if m.recursive:
            meta.append(["rec", name])
    return ["unit-artifact", a.format_version, iface, ["impl", ir.unit_to_sexpr(a.impl)], meta]


def artifact_from_sexpr(x: sexpr.SExpr) -> UnitArtifact:
    if not (isinstance(x, list) and len(x) == 5 and x[0] == "unit-artifact" and isinstance(x[1], str)):
        raise ArtifactError("expected (unit-artifact VERSION ...)")
    version = x[1]
    iface_form, impl_form, meta_form = x[2], x[3], x[4]
    if not (isinstance(iface_form, list) and iface_form and iface_form[0] == "iface"):
        raise ArtifactError("missing iface section")
    interface: dict[str, TypeScheme] = {}
    for entry in iface_form[1:]:
        if not (isinstance(entry, list) and len(entry) == 3 and entry[0] == "val" and isinstance(entry[1], str)):
            raise ArtifactError(f"bad iface entry {sexpr.dumps(entry)}")
        interface[entry[1]] = ir.scheme_from_sexpr(entry[2])
    if not (isinstance(impl_form, list) and len(impl_form) == 2 and impl_form[0] == "impl"):
        raise ArtifactError("missing impl section")
    impl = ir.unit_from_sexpr(impl_form[1])
    if not (isinstance(meta_form, list) and meta_form and meta_form[0] == "meta"):
        raise ArtifactError("missing meta section")
    sizes: dict[str, int] = {}
    recs: set[str] = set()
    for entry in meta_form[1:]:
        if isinstance(entry, list) and len(entry) == 3 and entry[0] == "size" and isinstance(entry[1], str):
            sizes[entry[1]] = entry[2]
        elif isinstance(entry, list) and len(entry) == 2 and entry[0] == "rec" and isinstance(entry[1], str):
            recs.add(entry[1])
        else:
            raise ArtifactError(f"bad meta entry {sexpr.dumps(entry)}")
    meta = {name: BindingMeta(size=sizes[name], recursive=name in recs) for name in sizes}
    a = UnitArtifact(impl.name, interface, impl, meta, version)
    return a


def artifact_to_text(a: UnitArtifact) -> str:
    form = artifact_to_sexpr(a)
    lines = [f"(unit-artifact {a.format_version}"]
    for section in form[2:]:
        lines.append("  " + sexpr.dumps(section))
    return "\n".join(lines) + ")\n"


def artifact_from_text(text: str) -> UnitArtifact:
    return artifact_from_sexpr(sexpr.loads(text))


def write_artifact(path, artifact: UnitArtifact) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(artifact_to_text(artifact))


def read_artifact(path) -> UnitArtifact:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ArtifactError(f"cannot read unit file {path}: {exc}") from exc
    a = artifact_from_text(text)
    if a.format_version != FORMAT_VERSION:
        raise ArtifactError(
            f"{path}: format {a.format_version!r}, expected {FORMAT_VERSION!r}"
        )
    return a
