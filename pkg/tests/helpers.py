"""Shared pipeline helpers for the test suite."""

from __future__ import annotations

from pathlib import Path

from mlspec import cli, inference, interp, lowering, surface


def infer_source(src: str, unit_name: str = "Main", imports=None):
    u = surface.parse_unit(src, unit_name)
    return inference.infer_unit(u, imports or {})


def lower_source(src: str, unit_name: str = "Main", imports=None):
    tu, _ = infer_source(src, unit_name, imports)
    return lowering.lower_unit(tu)


def build_sources(
    sources: list[tuple[str, str]],
    lib: Path,
    mode: str = "full",
    threshold: int | None = None,
):
    """Write and build `(filename, text)` pairs in order; returns the path
    and BuildResult of the last one."""
    out = None
    for filename, text in sources:
        src = lib / filename
        src.write_text(text, encoding="utf-8")
        out = cli.build_file(src, lib, mode, threshold)
    assert out is not None
    return out


def run_sources(
    sources: list[tuple[str, str]],
    lib: Path,
    mode: str = "full",
    threshold: int | None = None,
    budget: int | None = 10_000_000,
):
    entry_path, _ = build_sources(sources, lib, mode, threshold)
    return cli.run_unit(entry_path, lib, budget=budget)


def eval_single(src: str, mode: str = "full", budget: int | None = 10_000_000):
    """Compile one importless unit in memory and evaluate it."""
    result = cli.compile_source(src, "Main", Path("."), mode)
    return interp.eval_program([result.artifact.impl], "Main", budget=budget)
