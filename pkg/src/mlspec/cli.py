"""Command-line driver: build units, run them, benchmark, dump IR.

    mlspec build FILE [--lib DIR] [--mode none|inline-only|full]
                      [--inline-threshold N] [-o OUT] [--report]
    mlspec run UNIT [--lib DIR] [--stats tsv|json]
    mlspec bench NAME [--scale N]
    mlspec dump-ir UNIT --stage lowered|optimized [--lib DIR]

The library directory defaults to $MLSPEC_LIB, then the current
directory. A unit named `Foo_bar` lives in `foo_bar.unit`.

Exit codes: 0 ok, 1 user error (syntax, types, artifacts), 2 runtime
error, 3 internal compiler error.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
import tempfile
from importlib import resources
from pathlib import Path

from . import inference, interp, ir, lowering, opt, surface, units
from .diagnostics import CompilerBug, EvalError, MlError

MODES = ("none", "inline-only", "full")
_SCALE_RE = re.compile(r"^let scale = \d+$", re.MULTILINE)


def unit_name_for(path: Path) -> str:
    stem = path.stem
    return stem[0].upper() + stem[1:]


def artifact_filename(unit_name: str) -> str:
    return unit_name[0].lower() + unit_name[1:] + ".unit"


def referenced_units(su: surface.SurfaceUnit) -> set[str]:
    refs: set[str] = set()
    for item in su.items:
        if isinstance(item, surface.OpenItem):
            refs.add(item.unit)
        elif isinstance(item, surface.LetItem):
            for e in surface.iter_exprs(item.expr):
                if isinstance(e, surface.QualVar) and e.unit != "Array":
                    refs.add(e.unit)
    return refs


def load_import_closure(wanted: set[str], lib_dir: Path) -> dict[str, units.UnitArtifact]:
    """Load the requested artifacts plus everything their stored bodies
    reference, so cross-unit inlining and linking can always resolve."""
    artifacts: dict[str, units.UnitArtifact] = {}
    queue = sorted(wanted)
    while queue:
        name = queue.pop()
        if name in artifacts or name == "Array":
            continue
        path = lib_dir / artifact_filename(name)
        if not path.exists():
            raise MlError(f"missing unit {name!r}: no {path}")
        art = units.read_artifact(path)
        artifacts[name] = art
        for _, term in art.impl.bindings:
            for sub in ir.iter_subterms(term):
                if isinstance(sub, ir.GlobalVar) and sub.unit != name:
                    queue.append(sub.unit)
    return artifacts


class BuildResult:
    def __init__(self, lowered, optimized, artifact, report):
        self.lowered = lowered
        self.optimized = optimized
        self.artifact = artifact
        self.report = report


def compile_source(
    text: str,
    unit_name: str,
    lib_dir: Path,
    mode: str = "full",
    threshold: int | None = None,
    iface_text: str | None = None,
) -> BuildResult:
    su = surface.parse_unit(text, unit_name)
    artifacts = load_import_closure(referenced_units(su), lib_dir)
    table = units.RenamingTable()
    imports = {n: units.import_interface(a, table) for n, a in artifacts.items()}
    tu, exported = inference.infer_unit(su, imports)
    lowered = lowering.lower_unit(tu)

    def resolve(unit: str, name: str) -> opt.ResolvedDef | None:
        art = artifacts.get(unit)
        if art is None or name not in art.interface:
            return None
        meta = art.meta[name]
        body = units.fetch_body_for_inlining(art, name, table)
        return opt.ResolvedDef(body, meta.recursive, meta.size)

    policy = opt.InlinePolicy(threshold=threshold)
    report: list[opt.InlineDecision] = []
    if mode == "none":
        final = opt.erase_kinds(lowered)
    elif mode == "inline-only":
        final, report = opt.inline_pass(opt.erase_kinds(lowered), resolve, policy)
        final = opt.beta_cleanup(final)
    elif mode == "full":
        final, report = opt.inline_pass(lowered, resolve, policy)
        final = opt.beta_cleanup(final)
    else:
        raise MlError(f"unknown mode {mode!r}")

    iface = units.parse_mxi(iface_text) if iface_text is not None else None
    artifact = units.emit_artifact(iface, exported, final, table)
    return BuildResult(lowered, final, artifact, report)


def build_file(
    src: Path,
    lib_dir: Path,
    mode: str,
    threshold: int | None,
    out: Path | None = None,
) -> tuple[Path, BuildResult]:
    try:
        text = src.read_text(encoding="utf-8")
    except OSError as exc:
        raise MlError(f"cannot read {src}: {exc}") from exc
    iface_path = src.with_suffix(".mxi")
    iface_text = iface_path.read_text(encoding="utf-8") if iface_path.exists() else None
    name = unit_name_for(src)
    result = compile_source(text, name, lib_dir, mode, threshold, iface_text)
    out_path = out if out is not None else lib_dir / artifact_filename(name)
    units.write_artifact(out_path, result.artifact)
    return out_path, result


def run_unit(entry_path: Path, lib_dir: Path, budget: int | None = None):
    entry = units.read_artifact(entry_path)
    deps: set[str] = set()
    for _, term in entry.impl.bindings:
        for sub in ir.iter_subterms(term):
            if isinstance(sub, ir.GlobalVar) and sub.unit != entry.unit_name:
                deps.add(sub.unit)
    artifacts = load_import_closure(deps, lib_dir)
    linked = [entry.impl] + [a.impl for a in artifacts.values()]
    kwargs = {} if budget is None else {"budget": budget}
    return interp.eval_program(linked, entry.unit_name, **kwargs)


# ---------------------------------------------------------------------------
# Bench corpus

BENCHES: dict[str, list[str]] = {
    "simple": ["paccess.mx", "simple.mx"],
    "random": ["paccess.mx", "random.mx"],
    "rec_residual": ["rec_residual.mx"],
}


def bench_source(filename: str, scale: int) -> str:
    text = resources.files("mlspec").joinpath("benches").joinpath(filename).read_text("utf-8")
    return _SCALE_RE.sub(f"let scale = {scale}", text)


def run_bench(name: str, scale: int, mode: str, threshold: int | None = None):
    """Build the bench corpus in a scratch directory and run its entry
    unit; returns the evaluation (output, stats)."""
    files = BENCHES.get(name)
    if files is None:
        raise MlError(f"unknown bench {name!r} (choose from {', '.join(sorted(BENCHES))})")
    with tempfile.TemporaryDirectory(prefix="mlspec-bench-") as tmp:
        tmp_path = Path(tmp)
        entry_path: Path | None = None
        for filename in files:
            src = tmp_path / filename
            src.write_text(bench_source(filename, scale), encoding="utf-8")
            entry_path, _ = build_file(src, tmp_path, mode, threshold)
        assert entry_path is not None
        return run_unit(entry_path, tmp_path)


def bench_table(names: list[str], scale: int) -> str:
    lines = ["bench\tmode\tall\tgen\tgen_pct"]
    for name in names:
        for mode in ("none", "full"):
            _, stats = run_bench(name, scale, mode)
            lines.append(f"{name}\t{mode}\t{stats.all}\t{stats.gen}\t{stats.gen_pct:.1f}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Commands


def _lib_dir(arg: str | None) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get("MLSPEC_LIB")
    return Path(env) if env else Path(".")


def cmd_build(args) -> int:
    src = Path(args.file)
    out = Path(args.output) if args.output else None
    out_path, result = build_file(src, _lib_dir(args.lib), args.mode, args.inline_threshold, out)
    if args.report:
        for d in result.report:
            print(f"{d.binding}: {d.callee} {d.action}")
    print(f"wrote {out_path}", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    output, stats = run_unit(Path(args.unit), _lib_dir(args.lib))
    sys.stdout.write(output)
    sys.stdout.flush()
    sys.stderr.write(interp.report_stats(stats, args.stats))
    return 0


def cmd_bench(args) -> int:
    names = sorted(BENCHES) if args.name == "all" else [args.name]
    sys.stdout.write(bench_table(names, args.scale))
    return 0


def cmd_dump_ir(args) -> int:
    target = Path(args.unit)
    lib_dir = _lib_dir(args.lib)
    candidates = [
        target,
        lib_dir / artifact_filename(args.unit) if not target.suffix else None,
        Path(args.unit + ".mx"),
        lib_dir / (args.unit + ".mx"),
    ]
    for cand in candidates:
        if cand is None or not cand.exists():
            continue
        if cand.suffix == ".unit":
            artifact = units.read_artifact(cand)
            sys.stdout.write(ir.print_ir(artifact.impl))
            return 0
        if cand.suffix == ".mx":
            iface_path = cand.with_suffix(".mxi")
            iface_text = iface_path.read_text("utf-8") if iface_path.exists() else None
            result = compile_source(
                cand.read_text("utf-8"),
                unit_name_for(cand),
                lib_dir,
                args.mode,
                args.inline_threshold,
                iface_text,
            )
            chosen = result.lowered if args.stage == "lowered" else result.optimized
            sys.stdout.write(ir.print_ir(chosen))
            return 0
    raise MlError(f"cannot find a unit or source for {args.unit!r}")


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mlspec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="compile a .mx file into a .unit artifact")
    b.add_argument("file")
    b.add_argument("--lib", default=None)
    b.add_argument("--mode", choices=MODES, default="full")
    b.add_argument("--inline-threshold", type=int, default=None)
    b.add_argument("-o", "--output", default=None)
    b.add_argument("--report", action="store_true", help="print per-site inlining decisions")
    b.set_defaults(fn=cmd_build)

    r = sub.add_parser("run", help="evaluate a built unit")
    r.add_argument("unit")
    r.add_argument("--lib", default=None)
    r.add_argument("--stats", choices=("tsv", "json"), default="tsv")
    r.set_defaults(fn=cmd_run)

    be = sub.add_parser("bench", help="run a bundled benchmark in before/after modes")
    be.add_argument("name", choices=sorted(BENCHES) + ["all"])
    be.add_argument("--scale", type=int, default=1000)
    be.set_defaults(fn=cmd_bench)

    d = sub.add_parser("dump-ir", help="print the textual IR of a unit")
    d.add_argument("unit")
    d.add_argument("--stage", choices=("lowered", "optimized"), required=True)
    d.add_argument("--lib", default=None)
    d.add_argument("--mode", choices=MODES, default="full")
    d.add_argument("--inline-threshold", type=int, default=None)
    d.set_defaults(fn=cmd_dump_ir)
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except MlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EvalError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    except CompilerBug as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
