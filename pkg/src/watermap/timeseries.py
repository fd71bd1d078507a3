"""Gap filling across a dated stack of class maps.

Cloud and ice/snow observations hide the surface; every such label is
replaced by the pixel's nearest valid observation (water or land), where
distance is measured in calendar days and ties go to the earlier date.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ClassLabel, ClassMap, Grid

_ROW_CHUNK = 256  # bounds interpolate()'s working set for long stacks


@dataclass(frozen=True)
class ClassStack:
    """Aligned class maps in strictly increasing date order."""

    dates: tuple[dt.date, ...]
    maps: tuple[ClassMap, ...]

    def __post_init__(self) -> None:
        if not self.maps:
            raise ValueError("stack must hold at least one map")
        if len(self.dates) != len(self.maps):
            raise ValueError(
                f"{len(self.dates)} dates for {len(self.maps)} maps"
            )
        for d, m in zip(self.dates, self.maps):
            if d != m.date:
                raise ValueError(f"stack date {d} does not match map date {m.date}")
        ref = self.maps[0]
        for m in self.maps[1:]:
            if m.shape != ref.shape or m.pixel_size_m != ref.pixel_size_m:
                raise ValueError(
                    f"map {m.scene_id} is not aligned: {m.shape}@{m.pixel_size_m}m "
                    f"vs {ref.shape}@{ref.pixel_size_m}m"
                )
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise ValueError(f"stack dates must strictly increase: {a} then {b}")

    def __len__(self) -> int:
        return len(self.maps)

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps[0].shape

    @property
    def pixel_size_m(self) -> float:
        return self.maps[0].pixel_size_m

    def has_hidden_labels(self) -> bool:
        """True when any map still holds cloud or ice/snow labels."""
        return any(
            np.any(m.mask(ClassLabel.CLOUD)) or np.any(m.mask(ClassLabel.ICE_SNOW))
            for m in self.maps
        )


def build_stack(maps: Sequence[ClassMap]) -> ClassStack:
    """Assemble maps into a stack sorted by date, without copying pixel data."""
    maps = list(maps)
    if not maps:
        raise ValueError("cannot build a stack from zero maps")
    dates = [m.date for m in maps]
    if len(set(dates)) != len(dates):
        dupes = sorted({d for d in dates if dates.count(d) > 1})
        raise ValueError(f"duplicate dates in stack: {[d.isoformat() for d in dupes]}")
    maps.sort(key=lambda m: m.date)
    return ClassStack(tuple(m.date for m in maps), tuple(maps))


def interpolate(stack: ClassStack) -> ClassStack:
    """Replace cloud and ice/snow labels with each pixel's nearest valid label.

    Nearest is by calendar-day distance; ties take the earlier observation.
    A pixel with no water/land observation anywhere in the stack becomes
    NODATA at every date. Water, land, and nodata labels pass through, so
    the operation is idempotent. Inputs are left untouched; the result is a
    new stack.
    """
    n = len(stack)
    height, width = stack.shape
    days = np.array([d.toordinal() for d in stack.dates], dtype=np.int64)
    out = np.empty((n, height, width), dtype=np.uint8)

    water = np.uint8(ClassLabel.WATER)
    land = np.uint8(ClassLabel.LAND)
    cloud = np.uint8(ClassLabel.CLOUD)
    ice = np.uint8(ClassLabel.ICE_SNOW)
    big = np.int64(1 << 40)

    idx = np.arange(n, dtype=np.int64)[:, None, None]
    for r0 in range(0, height, _ROW_CHUNK):
        r1 = min(height, r0 + _ROW_CHUNK)
        lab = np.stack([m.labels[r0:r1] for m in stack.maps])
        valid = (lab == water) | (lab == land)

        prev = np.maximum.accumulate(np.where(valid, idx, -1), axis=0)
        rev = np.where(valid, (n - 1) - idx, -1)[::-1]
        nxt = (n - 1) - np.maximum.accumulate(rev, axis=0)[::-1]  # n where none ahead

        day_here = days[:, None, None]
        dist_prev = np.where(prev >= 0, day_here - days[np.maximum(prev, 0)], big)
        dist_next = np.where(nxt <= n - 1, days[np.minimum(nxt, n - 1)] - day_here, big)
        take_prev = dist_prev <= dist_next  # tie -> earlier observation
        chosen = np.where(take_prev, prev, nxt)
        reachable = (prev >= 0) | (nxt <= n - 1)

        filled = np.take_along_axis(lab, np.clip(chosen, 0, n - 1), axis=0)
        hidden = (lab == cloud) | (lab == ice)
        block = lab.copy()
        block[hidden] = np.where(
            reachable, filled, np.uint8(ClassLabel.NODATA)
        )[hidden]
        out[:, r0:r1] = block

    new_maps = tuple(
        ClassMap(m.scene_id, m.date, out[i], m.pixel_size_m)
        for i, m in enumerate(stack.maps)
    )
    return ClassStack(stack.dates, new_maps)


def coverage_rate(stack: ClassStack) -> Grid:
    """Per-pixel water frequency: water count over valid count.

    Requires an interpolated stack (no cloud or ice/snow labels left).
    Pixels with zero valid observations get the grid's nodata value.
    """
    if stack.has_hidden_labels():
        raise ValueError(
            "stack still holds cloud or ice/snow labels; run interpolate() first"
        )
    height, width = stack.shape
    water_n = np.zeros((height, width), dtype=np.int64)
    valid_n = np.zeros((height, width), dtype=np.int64)
    for m in stack.maps:
        water_n += m.mask(ClassLabel.WATER)
        valid_n += m.observed_mask()
    nodata = -1.0
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(valid_n > 0, water_n / np.maximum(valid_n, 1), nodata)
    return Grid(rate.astype(np.float32), stack.pixel_size_m, nodata)
