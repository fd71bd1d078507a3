"""Command line interface.

Every subcommand takes long-form flags only. Logs go to stderr; data goes
to output files or stdout. File writes are atomic, output names are
deterministic, and a rerun over identical inputs reproduces identical
bytes, so the tool is safe to restart.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analytics, classify, io, synth, timeseries, unmix
from .core import (
    ClassLabel,
    ClassMap,
    DegenerateInputError,
    FormatError,
    Grid,
    ManifestEntry,
    SceneManifest,
    UndefinedMetricError,
    WaterMapError,
)

log = logging.getLogger("watermap")


def _load_configs(path: str | None) -> tuple[classify.ClassifyConfig, unmix.UnmixConfig]:
    """Split one flat key=value file between the two config owners."""
    if path is None:
        return classify.ClassifyConfig(), unmix.UnmixConfig()
    raw = io.read_kv_config(path)
    classify_keys = {
        "tc4_threshold", "per_scene_otsu", "slope_threshold_deg",
        "maxvis_threshold", "cloud_skip_fraction",
    }
    unmix_keys = {"window", "abundance_threshold"}
    unknown = sorted(set(raw) - classify_keys - unmix_keys)
    if unknown:
        raise FormatError(f"{path}: unknown config keys: {unknown}")
    ccfg = classify.ClassifyConfig.from_mapping(
        {k: v for k, v in raw.items() if k in classify_keys}
    )
    ucfg = unmix.UnmixConfig.from_mapping({k: v for k, v in raw.items() if k in unmix_keys})
    return ccfg, ucfg


def _load_roi(path: str | None, shape: tuple[int, int]) -> np.ndarray:
    if path is None:
        return np.ones(shape, dtype=bool)
    roi = io.read_roi(path)
    if roi.shape != shape:
        raise FormatError(f"roi {roi.shape} does not match rasters {shape}")
    return roi


def _parallel(jobs: int, work, items):
    """Run work(item) for each item, preserving input order of results."""
    if jobs <= 1 or len(items) <= 1:
        return [work(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(work, items))


def _read_maps_dir(maps_dir: str) -> list[ClassMap]:
    paths = sorted(Path(maps_dir).glob("*.class"))
    if not paths:
        raise FormatError(f"no .class maps found in {maps_dir}")
    return [io.read_classmap(p) for p in paths]


# ---------------------------------------------------------------------------
# stages shared by subcommands

def _classify_archive(
    manifest: SceneManifest,
    dem: Grid,
    roi: np.ndarray,
    ccfg: classify.ClassifyConfig,
    outdir: Path,
    jobs: int,
) -> tuple[list[ManifestEntry], list[tuple[str, str]]]:
    """Classify every scene; returns (kept entries, skipped (id, reason) rows)."""
    outdir.mkdir(parents=True, exist_ok=True)
    slope = classify.slope_from_dem(dem)

    def work(entry: ManifestEntry):
        scene = io.read_scene(entry.path)
        if scene.shape != dem.shape:
            raise FormatError(
                f"scene {entry.scene_id} shape {scene.shape} does not match DEM {dem.shape}"
            )
        cmap = classify.classify_scene(scene, slope, ccfg)
        fraction = classify.cloud_fraction(cmap, roi)
        if fraction > ccfg.cloud_skip_fraction:
            reason = (
                f"cloud_fraction {fraction:.6f} > {ccfg.cloud_skip_fraction:.6f}"
            )
            log.info("skipping %s: %s", entry.scene_id, reason)
            return entry, None, reason
        io.write_classmap(cmap, outdir / f"{entry.scene_id}.class")
        log.info("classified %s (cloud fraction %.3f)", entry.scene_id, fraction)
        return entry, cmap, None

    results = _parallel(jobs, work, list(manifest.entries))
    kept = [entry for entry, cmap, _ in results if cmap is not None]
    skipped = [(entry.scene_id, reason) for entry, cmap, reason in results if cmap is None]
    return kept, skipped


def _write_skip_report(skipped: list[tuple[str, str]], path: Path) -> None:
    lines = ["scene_id,reason"]
    lines += [f"{sid},{reason}" for sid, reason in skipped]
    path.parent.mkdir(parents=True, exist_ok=True)
    io._atomic_write_text(path, "\n".join(lines) + "\n")


def _refine_archive(
    manifest_entries: Sequence[ManifestEntry],
    maps_dir: Path,
    ucfg: unmix.UnmixConfig,
    outdir: Path,
    jobs: int,
) -> None:
    outdir.mkdir(parents=True, exist_ok=True)

    def work(entry: ManifestEntry):
        scene = io.read_scene(entry.path)
        cmap = io.read_classmap(maps_dir / f"{entry.scene_id}.class")
        refined, abundance = unmix.refine_boundary(scene, cmap, ucfg)
        io.write_classmap(refined, outdir / f"{entry.scene_id}.class")
        io.write_grid(
            abundance,
            outdir / f"{entry.scene_id}.abund.f32",
            name="water_fraction",
            scene_id=entry.scene_id,
            date=entry.date,
        )
        log.info("refined %s", entry.scene_id)

    _parallel(jobs, work, list(manifest_entries))


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_synth(args: argparse.Namespace) -> int:
    text = Path(args.spec).read_text("utf-8")
    try:
        plan = synth.load_synth_plan(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{args.spec}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    except ValueError as exc:
        raise FormatError(f"{args.spec}: {exc}") from exc
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    if plan.seasonal_base is not None:
        archive = synth.seasonal_stack(plan.seasonal_base, **dict(plan.seasonal_args))
        rendered = list(archive.scenes)
    else:
        rendered = [synth.generate(spec) for spec in plan.specs]

    entries = []
    for item in rendered:
        scene = item.scene
        io.write_scene(scene, outdir / scene.scene_id)
        io.write_classmap(item.truth, outdir / "truth" / f"{scene.scene_id}.class")
        entries.append(
            ManifestEntry(scene.scene_id, scene.date, scene.sensor, scene.scene_id)
        )
    io.write_grid(rendered[0].dem, outdir / "dem.f32", name="elevation_m")
    entries.sort(key=lambda e: (e.date, e.scene_id))
    io.write_manifest(entries, outdir / "manifest.csv")
    log.info("wrote %d scene(s) to %s", len(rendered), outdir)
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    ccfg, _ = _load_configs(args.config)
    manifest = io.read_manifest(args.manifest)
    dem = io.read_grid(args.dem)
    roi = _load_roi(args.roi, dem.shape)
    outdir = Path(args.out)
    kept, skipped = _classify_archive(manifest, dem, roi, ccfg, outdir, args.jobs)
    _write_skip_report(skipped, outdir / "skipped.csv")
    log.info("classified %d scene(s), skipped %d", len(kept), len(skipped))
    return 0


def cmd_unmix(args: argparse.Namespace) -> int:
    _, ucfg = _load_configs(args.config)
    manifest = io.read_manifest(args.manifest)
    maps_dir = Path(args.maps)
    have = {p.stem for p in maps_dir.glob("*.class")}
    entries = [e for e in manifest.entries if e.scene_id in have]
    if not entries:
        raise FormatError(f"no manifest scenes have class maps in {maps_dir}")
    _refine_archive(entries, maps_dir, ucfg, Path(args.out), args.jobs)
    return 0


def cmd_interp(args: argparse.Namespace) -> int:
    stack = timeseries.build_stack(_read_maps_dir(args.maps))
    filled = timeseries.interpolate(stack)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for cmap in filled.maps:
        io.write_classmap(cmap, outdir / f"{cmap.scene_id}.class")
    log.info("interpolated %d map(s)", len(filled))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    stack = timeseries.build_stack(_read_maps_dir(args.maps))
    roi = _load_roi(args.roi, stack.shape)
    records = analytics.area_series(stack, roi)
    io.write_area_csv(records, args.out)
    summary = analytics.annual_extrema(records)
    for year in sorted(summary.by_year):
        mx, mn = summary.by_year[year]
        print(f"{year} max_month {mx} min_month {mn}")
    log.info("wrote %d record(s) to %s", len(records), args.out)
    return 0


def cmd_landscape(args: argparse.Namespace) -> int:
    cmap = io.read_classmap(args.map)
    roi = _load_roi(args.roi, cmap.shape)
    water = cmap.mask(ClassLabel.WATER) & roi
    patches = analytics.connected_components(water)
    print(f"patches {patches.num_patches}")
    try:
        print(f"division_index {analytics.division_index(water):.6f}")
    except UndefinedMetricError:
        print("division_index undefined")
    if args.out:
        io.write_patches(patches.labels, cmap.pixel_size_m, args.out)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    cmap = io.read_classmap(args.map)
    rows = io.read_samples_csv(args.samples)
    samples = [analytics.SamplePoint(r, c, truth) for r, c, truth in rows]
    cm = analytics.confusion(cmap, samples)
    excluded = len(samples) - cm.total
    print(f"tp {cm.tp}")
    print(f"fp {cm.fp}")
    print(f"fn {cm.fn}")
    print(f"tn {cm.tn}")
    print(f"excluded {excluded}")
    for name, fn in (
        ("oa", analytics.overall_accuracy),
        ("precision", analytics.precision),
        ("recall", analytics.recall),
    ):
        try:
            print(f"{name} {fn(cm):.1f}")
        except UndefinedMetricError:
            print(f"{name} undefined")
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    ccfg, ucfg = _load_configs(args.config)
    manifest = io.read_manifest(args.manifest)
    dem = io.read_grid(args.dem)
    roi = _load_roi(args.roi, dem.shape)
    outdir = Path(args.out)

    classify_dir = outdir / "classify"
    refined_dir = outdir / "refined"
    interp_dir = outdir / "interp"

    kept, skipped = _classify_archive(manifest, dem, roi, ccfg, classify_dir, args.jobs)
    _write_skip_report(skipped, outdir / "skipped.csv")
    if not kept:
        raise WaterMapError("no usable scenes: every scene exceeded the cloud skip fraction")

    _refine_archive(kept, classify_dir, ucfg, refined_dir, args.jobs)

    maps = [io.read_classmap(refined_dir / f"{e.scene_id}.class") for e in kept]
    stack = timeseries.build_stack(maps)
    filled = timeseries.interpolate(stack)
    interp_dir.mkdir(parents=True, exist_ok=True)
    for cmap in filled.maps:
        io.write_classmap(cmap, interp_dir / f"{cmap.scene_id}.class")

    io.write_grid(timeseries.coverage_rate(filled), outdir / "coverage.f32", name="coverage")
    io.write_area_csv(analytics.area_series(filled, roi), outdir / "areas.csv")
    log.info(
        "pipeline complete: %d scene(s) used, %d skipped, outputs in %s",
        len(kept), len(skipped), outdir,
    )
    return 0


# ---------------------------------------------------------------------------
# parser wiring

def _add_jobs(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--jobs", type=int, default=os.cpu_count() or 1,
        help="scene-level worker threads (default: processor count)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="watermap",
        description="Surface water mapping and reservoir analytics for scene archives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render synthetic scenes from a JSON recipe")
    p.add_argument("--spec", required=True, help="JSON synthesis recipe")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("classify", help="classify every scene in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dem", required=True, help="elevation grid (path to .f32)")
    p.add_argument("--roi", help="region of interest grid (nonzero = inside)")
    p.add_argument("--config", help="key=value threshold overrides")
    p.add_argument("--out", required=True, help="output directory")
    _add_jobs(p)
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("unmix", help="refine water boundaries of classified maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--maps", required=True, help="directory of .class maps")
    p.add_argument("--config", help="key=value threshold overrides")
    p.add_argument("--out", required=True, help="output directory")
    _add_jobs(p)
    p.set_defaults(handler=cmd_unmix)

    p = sub.add_parser("interp", help="gap-fill cloud and ice labels across dates")
    p.add_argument("--maps", required=True, help="directory of .class maps")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_interp)

    p = sub.add_parser("stats", help="per-date area and fragmentation table")
    p.add_argument("--maps", required=True, help="directory of interpolated .class maps")
    p.add_argument("--roi", help="region of interest grid")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("landscape", help="patch structure of one class map")
    p.add_argument("--map", required=True, help="a .class map")
    p.add_argument("--roi", help="region of interest grid")
    p.add_argument("--out", help="write patch ids as .i32 raster")
    p.set_defaults(handler=cmd_landscape)

    p = sub.add_parser("validate", help="score a class map against truth samples")
    p.add_argument("--map", required=True, help="a .class map")
    p.add_argument("--samples", required=True, help="CSV of row,col,truth")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("pipeline", help="classify, refine, gap-fill, and summarize")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dem", required=True)
    p.add_argument("--roi", help="region of interest grid")
    p.add_argument("--config", help="key=value threshold overrides")
    p.add_argument("--out", required=True, help="output directory")
    _add_jobs(p)
    p.set_defaults(handler=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (WaterMapError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
