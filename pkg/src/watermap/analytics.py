"""Reservoir statistics: areas, patch structure, seasonal extrema, accuracy.

Patch structure uses 8-connectivity throughout: diagonal water pixels
belong to the same patch.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    AreaRecord,
    ClassLabel,
    ClassMap,
    ConfusionMatrix,
    DegenerateInputError,
    UndefinedMetricError,
    pixel_area_km2,
)
from .timeseries import ClassStack


@dataclass(frozen=True)
class PatchLabeling:
    """Dense patch ids (1..n) over a binary mask; 0 is background."""

    labels: np.ndarray
    patch_sizes: dict[int, int]

    @property
    def num_patches(self) -> int:
        return len(self.patch_sizes)


@dataclass(frozen=True)
class SamplePoint:
    """One ground-truth validation sample."""

    row: int
    col: int
    truth: ClassLabel

    def __post_init__(self) -> None:
        if self.truth not in (ClassLabel.WATER, ClassLabel.LAND):
            raise ValueError(f"sample truth must be water or land, got {self.truth!r}")
        if self.row < 0 or self.col < 0:
            raise ValueError(f"sample coordinates must be non-negative, got {self}")


SampleSet = list[SamplePoint]


def _foreground(water: np.ndarray, roi: np.ndarray | None) -> np.ndarray:
    water = np.asarray(water, dtype=bool)
    if water.ndim != 2:
        raise ValueError(f"water mask must be 2-D, got shape {water.shape}")
    if roi is None:
        return water
    roi = np.asarray(roi, dtype=bool)
    if roi.shape != water.shape:
        raise ValueError(f"roi {roi.shape} does not match water mask {water.shape}")
    return water & roi


def connected_components(
    water: np.ndarray, roi: np.ndarray | None = None
) -> PatchLabeling:
    """Label 8-connected patches with two-pass union-find.

    Ids are dense, 1..n, in order of first appearance in row-major scan.
    """
    fg = _foreground(water, roi)
    height, width = fg.shape
    flat_fg = np.ascontiguousarray(fg).ravel()
    indices = np.flatnonzero(flat_fg).tolist()

    labels = [0] * (height * width)
    parent = [0]  # parent[i] for provisional label i; label 0 unused
    size = [0]

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]  # path halving
            x = parent[x]
        return x

    def union(a: int, b: int) -> int:
        ra, rb = find(a), find(b)
        if ra == rb:
            return ra
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
        return ra

    # First pass: scan row-major, union with the already-visited neighbors
    # (west, northwest, north, northeast).
    next_label = 1
    for i in indices:
        c = i % width
        best = 0
        if c > 0 and labels[i - 1]:
            best = labels[i - 1]
        if i >= width:
            up = i - width
            if c > 0 and labels[up - 1]:
                best = union(best, labels[up - 1]) if best else labels[up - 1]
            if labels[up]:
                best = union(best, labels[up]) if best else labels[up]
            if c < width - 1 and labels[up + 1]:
                best = union(best, labels[up + 1]) if best else labels[up + 1]
        if best == 0:
            parent.append(next_label)
            size.append(1)
            best = next_label
            next_label += 1
        labels[i] = best

    # Second pass: collapse to roots and renumber densely in scan order.
    dense: dict[int, int] = {}
    sizes: dict[int, int] = {}
    out = np.zeros((height, width), dtype=np.int32)
    flat_out = out.ravel()
    for i in indices:
        root = find(labels[i])
        pid = dense.get(root)
        if pid is None:
            pid = len(dense) + 1
            dense[root] = pid
            sizes[pid] = 0
        sizes[pid] += 1
        flat_out[i] = pid
    return PatchLabeling(out, sizes)


def division_index(water: np.ndarray, roi: np.ndarray | None = None) -> float:
    """Landscape division: probability two random water pixels fall in
    different patches, ``1 - sum(s_k^2) / s^2``.

    0 for a single patch, approaching 1 as water fragments. Raises
    UndefinedMetricError when there is no water in the region.
    """
    fg = _foreground(water, roi)
    total = int(np.count_nonzero(fg))
    if total == 0:
        raise UndefinedMetricError("no water pixels; division index is undefined")
    patches = connected_components(fg)
    sq = sum(s * s for s in patches.patch_sizes.values())
    return 1.0 - sq / (total * total)


def water_area(cmap: ClassMap, roi: np.ndarray | None = None) -> float:
    """Water area in km^2: water pixel count times pixel area."""
    water = cmap.mask(ClassLabel.WATER)
    if roi is not None:
        roi = np.asarray(roi, dtype=bool)
        if roi.shape != cmap.shape:
            raise ValueError(f"roi {roi.shape} does not match map {cmap.shape}")
        if not roi.any():
            raise DegenerateInputError("region of interest is empty")
        water = water & roi
    return int(np.count_nonzero(water)) * pixel_area_km2(cmap)


def area_series(stack: ClassStack, roi: np.ndarray | None = None) -> list[AreaRecord]:
    """Per-date water area, division index, and valid fraction.

    Requires an interpolated stack. Dates without water record a NaN
    division index.
    """
    if stack.has_hidden_labels():
        raise ValueError(
            "stack still holds cloud or ice/snow labels; run interpolate() first"
        )
    if roi is not None:
        roi = np.asarray(roi, dtype=bool)
        if roi.shape != stack.shape:
            raise ValueError(f"roi {roi.shape} does not match stack {stack.shape}")
        if not roi.any():
            raise DegenerateInputError("region of interest is empty")
        denom = int(np.count_nonzero(roi))
    else:
        denom = stack.shape[0] * stack.shape[1]

    records = []
    for cmap in stack.maps:
        water = cmap.mask(ClassLabel.WATER)
        observed = cmap.observed_mask()
        if roi is not None:
            water = water & roi
            observed = observed & roi
        try:
            di = division_index(water)
        except UndefinedMetricError:
            di = math.nan
        records.append(
            AreaRecord(
                date=cmap.date,
                water_area_km2=int(np.count_nonzero(water)) * pixel_area_km2(cmap),
                division_index=di,
                valid_fraction=int(np.count_nonzero(observed)) / denom,
            )
        )
    return records


@dataclass(frozen=True)
class ExtremaSummary:
    """Argmax/argmin months per year plus how often each month wins."""

    by_year: dict[int, tuple[int, int]]  # year -> (max_month, min_month)
    max_month_counts: tuple[int, ...]  # index 0 = January
    min_month_counts: tuple[int, ...]


def annual_extrema(records: Sequence[AreaRecord]) -> ExtremaSummary:
    """Month of each year's largest and smallest water area.

    Ties take the earlier date, hence the earlier month.
    """
    if not records:
        raise DegenerateInputError("no area records")
    by_year: dict[int, list[AreaRecord]] = {}
    for rec in sorted(records, key=lambda r: r.date):
        by_year.setdefault(rec.date.year, []).append(rec)

    extrema: dict[int, tuple[int, int]] = {}
    max_counts = [0] * 12
    min_counts = [0] * 12
    for year in sorted(by_year):
        recs = by_year[year]
        best_max = max(recs, key=lambda r: (r.water_area_km2, -r.date.toordinal()))
        best_min = min(recs, key=lambda r: (r.water_area_km2, r.date.toordinal()))
        extrema[year] = (best_max.date.month, best_min.date.month)
        max_counts[best_max.date.month - 1] += 1
        min_counts[best_min.date.month - 1] += 1
    return ExtremaSummary(extrema, tuple(max_counts), tuple(min_counts))


def confusion(cmap: ClassMap, samples: Sequence[SamplePoint]) -> ConfusionMatrix:
    """Tally water-vs-land agreement between a map and truth samples.

    Samples landing on cloud, ice/snow, or nodata pixels are excluded.
    Raises when a sample is out of bounds or every sample is excluded.
    """
    tp = fp = fn = tn = 0
    for s in samples:
        if s.row >= cmap.height or s.col >= cmap.width:
            raise ValueError(f"sample ({s.row}, {s.col}) outside map {cmap.shape}")
        predicted = int(cmap.labels[s.row, s.col])
        if predicted not in (int(ClassLabel.WATER), int(ClassLabel.LAND)):
            continue
        is_water_pred = predicted == int(ClassLabel.WATER)
        is_water_true = s.truth == ClassLabel.WATER
        if is_water_pred and is_water_true:
            tp += 1
        elif is_water_pred and not is_water_true:
            fp += 1
        elif not is_water_pred and is_water_true:
            fn += 1
        else:
            tn += 1
    cm = ConfusionMatrix(tp, fp, fn, tn)
    if cm.total == 0:
        raise DegenerateInputError(
            "every sample fell on cloud/ice/nodata; nothing to score"
        )
    return cm


def overall_accuracy(cm: ConfusionMatrix) -> float:
    """(TP+TN)/total as a percentage."""
    if cm.total == 0:
        raise UndefinedMetricError("confusion matrix is empty")
    return 100.0 * (cm.tp + cm.tn) / cm.total


def precision(cm: ConfusionMatrix) -> float:
    """TP/(TP+FP) as a percentage; undefined with no predicted water."""
    if cm.tp + cm.fp == 0:
        raise UndefinedMetricError("no predicted water; precision is undefined")
    return 100.0 * cm.tp / (cm.tp + cm.fp)


def recall(cm: ConfusionMatrix) -> float:
    """TP/(TP+FN) as a percentage; undefined with no true water."""
    if cm.tp + cm.fn == 0:
        raise UndefinedMetricError("no true water samples; recall is undefined")
    return 100.0 * cm.tp / (cm.tp + cm.fn)
