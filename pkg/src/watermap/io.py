"""File formats: raw rasters with JSON sidecars, plus the CSV tables.

Raster container
    Sample data lives in a raw little-endian file, band-sequential and
    row-major. A JSON sidecar next to it (same name, ``.json`` suffix)
    carries the header::

        {"width", "height", "pixel_size_m", "nodata_value",
         "bands": [...], "sensor", "date", "scene_id"}

    Float grids use 32-bit IEEE floats (``.f32``), class maps 8-bit codes
    (``.class``), patch labelings 32-bit signed integers (``.i32``).
    ``sensor``/``date``/``scene_id`` are null where not applicable.

All writers are atomic (temp file + rename) and byte-deterministic for
identical inputs. Readers validate instead of repairing: length and header
inconsistencies raise FormatError, nothing is silently truncated.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import (
    BAND_ORDER,
    AreaRecord,
    BandRole,
    ClassLabel,
    ClassMap,
    FormatError,
    Grid,
    ManifestEntry,
    ReflectanceScene,
    SceneManifest,
    SensorKind,
    VALID_LABEL_CODES,
)

MANIFEST_HEADER = ["scene_id", "date", "sensor", "path"]
AREA_HEADER = ["date", "water_area_km2", "division_index", "valid_fraction"]
SAMPLES_HEADER = ["row", "col", "truth"]


def _sidecar_path(data_path: Path) -> Path:
    return data_path.with_suffix(".json")


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _write_sidecar(
    path: Path,
    width: int,
    height: int,
    pixel_size_m: float,
    nodata_value: float,
    bands: Sequence[str],
    sensor: str | None,
    date: dt.date | None,
    scene_id: str | None,
) -> None:
    header = {
        "width": width,
        "height": height,
        "pixel_size_m": pixel_size_m,
        "nodata_value": nodata_value,
        "bands": list(bands),
        "sensor": sensor,
        "date": date.isoformat() if date is not None else None,
        "scene_id": scene_id,
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
    _atomic_write_text(_sidecar_path(path), text)


def _read_sidecar(path: Path) -> dict:
    sc = _sidecar_path(path)
    if not sc.exists():
        raise FormatError(f"missing sidecar header: {sc}")
    try:
        header = json.loads(sc.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{sc}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    required = {"width", "height", "pixel_size_m", "nodata_value", "bands"}
    missing = required - header.keys()
    if missing:
        raise FormatError(f"{sc}: sidecar is missing keys {sorted(missing)}")
    w, h = header["width"], header["height"]
    if not (isinstance(w, int) and isinstance(h, int) and w > 0 and h > 0):
        raise FormatError(f"{sc}: width/height must be positive integers, got {w}x{h}")
    if not isinstance(header["bands"], list) or not header["bands"]:
        raise FormatError(f"{sc}: 'bands' must be a non-empty list")
    return header


def _read_raw(path: Path, dtype: str, count: int) -> np.ndarray:
    if not path.exists():
        raise FormatError(f"missing raster file: {path}")
    raw = path.read_bytes()
    itemsize = np.dtype(dtype).itemsize
    if len(raw) != count * itemsize:
        raise FormatError(
            f"{path}: raw file holds {len(raw)} bytes, header implies {count * itemsize}"
        )
    return np.frombuffer(raw, dtype=dtype)


def _parse_date(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}: bad ISO date {text!r}") from exc


def _parse_sensor(text: str, where: str) -> SensorKind:
    try:
        return SensorKind(text)
    except ValueError as exc:
        known = [s.value for s in SensorKind]
        raise FormatError(f"{where}: unknown sensor {text!r}, expected one of {known}") from exc


# ---------------------------------------------------------------------------
# float grids

def write_grid(
    grid: Grid,
    path: str | Path,
    name: str = "grid",
    scene_id: str | None = None,
    date: dt.date | None = None,
) -> None:
    path = Path(path)
    _atomic_write_bytes(path, grid.data.astype("<f4").tobytes())
    _write_sidecar(
        path, grid.width, grid.height, grid.pixel_size_m, grid.nodata_value,
        [name], None, date, scene_id,
    )


def read_grid(path: str | Path) -> Grid:
    path = Path(path)
    header = _read_sidecar(path)
    w, h = header["width"], header["height"]
    if len(header["bands"]) != 1:
        raise FormatError(f"{path}: expected a single-band grid, got {header['bands']}")
    flat = _read_raw(path, "<f4", w * h)
    return Grid(flat.reshape(h, w), header["pixel_size_m"], header["nodata_value"])


def read_roi(path: str | Path) -> np.ndarray:
    """Read a region-of-interest grid: inside where valid and nonzero."""
    g = read_grid(path)
    return g.valid_mask() & (g.data != 0)


# ---------------------------------------------------------------------------
# patch labelings (int32)

def write_patches(labels: np.ndarray, pixel_size_m: float, path: str | Path) -> None:
    path = Path(path)
    arr = np.asarray(labels)
    if arr.ndim != 2 or arr.dtype != np.int32:
        raise ValueError(f"patch labels must be 2-D int32, got {arr.dtype} {arr.shape}")
    _atomic_write_bytes(path, arr.astype("<i4").tobytes())
    _write_sidecar(
        path, arr.shape[1], arr.shape[0], pixel_size_m, 0.0, ["patches"], None, None, None
    )


def read_patches(path: str | Path) -> tuple[np.ndarray, float]:
    path = Path(path)
    header = _read_sidecar(path)
    w, h = header["width"], header["height"]
    flat = _read_raw(path, "<i4", w * h)
    return flat.reshape(h, w).astype(np.int32), header["pixel_size_m"]


# ---------------------------------------------------------------------------
# scenes

def write_scene(scene: ReflectanceScene, prefix: str | Path) -> None:
    """Write a scene as ``<prefix>.f32`` plus ``<prefix>.json``."""
    prefix = Path(prefix)
    nodatas = {scene.bands[r].nodata_value for r in BAND_ORDER}
    if len(nodatas) != 1:
        raise FormatError(
            f"scene {scene.scene_id}: bands disagree on nodata_value: {sorted(nodatas)}"
        )
    cube = scene.band_cube().astype("<f4")
    path = prefix.with_suffix(".f32")
    _atomic_write_bytes(path, cube.tobytes())
    _write_sidecar(
        path, scene.width, scene.height, scene.pixel_size_m, nodatas.pop(),
        [r.value for r in BAND_ORDER], scene.sensor.value, scene.date, scene.scene_id,
    )


def read_scene(prefix: str | Path) -> ReflectanceScene:
    """Read a scene written by write_scene, given the same path prefix."""
    prefix = Path(prefix)
    path = prefix.with_suffix(".f32")
    header = _read_sidecar(path)
    w, h = header["width"], header["height"]
    roles = []
    for name in header["bands"]:
        try:
            roles.append(BandRole(name))
        except ValueError as exc:
            known = [r.value for r in BAND_ORDER]
            raise FormatError(f"{path}: unknown band role {name!r}, expected {known}") from exc
    missing = [r.value for r in BAND_ORDER if r not in roles]
    if missing:
        raise FormatError(f"{path}: missing band roles {missing}")
    if len(roles) != len(set(roles)):
        raise FormatError(f"{path}: duplicate band roles in {header['bands']}")
    for key in ("sensor", "date", "scene_id"):
        if not header.get(key):
            raise FormatError(f"{path}: scene sidecar must set {key!r}")
    flat = _read_raw(path, "<f4", len(roles) * w * h)
    cube = flat.reshape(len(roles), h, w)
    px, nd = header["pixel_size_m"], header["nodata_value"]
    bands = {role: Grid(cube[i], px, nd) for i, role in enumerate(roles)}
    return ReflectanceScene(
        scene_id=header["scene_id"],
        date=_parse_date(header["date"], str(path)),
        sensor=_parse_sensor(header["sensor"], str(path)),
        bands=bands,
    )


# ---------------------------------------------------------------------------
# class maps

def write_classmap(cmap: ClassMap, path: str | Path) -> None:
    path = Path(path)
    _atomic_write_bytes(path, cmap.labels.tobytes())
    _write_sidecar(
        path, cmap.width, cmap.height, cmap.pixel_size_m, float(ClassLabel.NODATA),
        ["class"], None, cmap.date, cmap.scene_id,
    )


def read_classmap(path: str | Path) -> ClassMap:
    path = Path(path)
    header = _read_sidecar(path)
    w, h = header["width"], header["height"]
    if header["bands"] != ["class"]:
        raise FormatError(f"{path}: expected bands ['class'], got {header['bands']}")
    for key in ("date", "scene_id"):
        if not header.get(key):
            raise FormatError(f"{path}: class map sidecar must set {key!r}")
    flat = _read_raw(path, "u1", w * h)
    bad = sorted(set(np.unique(flat).tolist()) - VALID_LABEL_CODES)
    if bad:
        raise FormatError(f"{path}: unknown class codes {bad}")
    return ClassMap(
        scene_id=header["scene_id"],
        date=_parse_date(header["date"], str(path)),
        labels=flat.reshape(h, w).astype(np.uint8),
        pixel_size_m=header["pixel_size_m"],
    )


# ---------------------------------------------------------------------------
# manifest CSV

def write_manifest(entries: Iterable[ManifestEntry], path: str | Path) -> None:
    entries = list(entries)
    SceneManifest(tuple(entries))  # reuse ordering/uniqueness validation
    lines = [",".join(MANIFEST_HEADER)]
    for e in entries:
        lines.append(f"{e.scene_id},{e.date.isoformat()},{e.sensor.value},{e.path}")
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_manifest(
    path: str | Path,
    dem_path: str | None = None,
    roi_path: str | None = None,
) -> SceneManifest:
    """Read a scene manifest. Relative scene paths resolve against the CSV's directory."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing manifest: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows or rows[0] != MANIFEST_HEADER:
        raise FormatError(
            f"{path}: expected header {','.join(MANIFEST_HEADER)!r}, "
            f"got {','.join(rows[0]) if rows else '<empty file>'!r}"
        )
    entries = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise FormatError(f"{path}: line {i}: expected 4 fields, got {len(row)}")
        scene_id, date_s, sensor_s, scene_path = (f.strip() for f in row)
        resolved = Path(scene_path)
        if not resolved.is_absolute():
            resolved = path.parent / resolved
        entries.append(
            ManifestEntry(
                scene_id=scene_id,
                date=_parse_date(date_s, f"{path}: line {i}"),
                sensor=_parse_sensor(sensor_s, f"{path}: line {i}"),
                path=str(resolved),
            )
        )
    try:
        return SceneManifest(tuple(entries), dem_path=dem_path, roi_path=roi_path)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# area series CSV

def write_area_csv(records: Sequence[AreaRecord], path: str | Path) -> None:
    """Write per-date area records; input must already be sorted by date."""
    for a, b in zip(records, records[1:]):
        if b.date <= a.date:
            raise FormatError(
                f"area records out of order: {a.date.isoformat()} then {b.date.isoformat()}"
            )
    lines = [",".join(AREA_HEADER)]
    for r in records:
        di = "nan" if math.isnan(r.division_index) else f"{r.division_index:.6f}"
        lines.append(
            f"{r.date.isoformat()},{r.water_area_km2:.6f},{di},{r.valid_fraction:.6f}"
        )
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


def read_area_csv(path: str | Path) -> list[AreaRecord]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing area table: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or rows[0] != AREA_HEADER:
        raise FormatError(f"{path}: expected header {','.join(AREA_HEADER)!r}")
    records = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise FormatError(f"{path}: line {i}: expected 4 fields, got {len(row)}")
        try:
            rec = AreaRecord(
                date=_parse_date(row[0], f"{path}: line {i}"),
                water_area_km2=float(row[1]),
                division_index=float(row[2]),
                valid_fraction=float(row[3]),
            )
        except ValueError as exc:
            raise FormatError(f"{path}: line {i}: {exc}") from exc
        records.append(rec)
    for a, b in zip(records, records[1:]):
        if b.date <= a.date:
            raise FormatError(f"{path}: records out of order at {b.date.isoformat()}")
    return records


# ---------------------------------------------------------------------------
# validation samples CSV

def read_samples_csv(path: str | Path) -> list[tuple[int, int, ClassLabel]]:
    """Read (row, col, truth) validation samples; truth is 'water' or 'land'."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing samples table: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or rows[0] != SAMPLES_HEADER:
        raise FormatError(f"{path}: expected header {','.join(SAMPLES_HEADER)!r}")
    samples = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise FormatError(f"{path}: line {i}: expected 3 fields, got {len(row)}")
        try:
            r, c = int(row[0]), int(row[1])
        except ValueError as exc:
            raise FormatError(f"{path}: line {i}: bad coordinates {row[:2]}") from exc
        truth_s = row[2].strip().lower()
        if truth_s == "water":
            truth = ClassLabel.WATER
        elif truth_s == "land":
            truth = ClassLabel.LAND
        else:
            raise FormatError(
                f"{path}: line {i}: truth must be 'water' or 'land', got {row[2]!r}"
            )
        if r < 0 or c < 0:
            raise FormatError(f"{path}: line {i}: negative coordinates {row[:2]}")
        samples.append((r, c, truth))
    return samples


# ---------------------------------------------------------------------------
# flat key=value config files

def read_kv_config(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key = value`` text file. '#' starts a comment line."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"missing config file: {path}")
    out: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text("utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}: line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise FormatError(f"{path}: line {lineno}: empty key")
        if key in out:
            raise FormatError(f"{path}: line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out
