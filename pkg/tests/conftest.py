"""Shared builders for tests."""
from __future__ import annotations

import datetime as dt

import numpy as np

from watermap.core import (
    BAND_ORDER,
    ClassLabel,
    ClassMap,
    Grid,
    ReflectanceScene,
    SensorKind,
)

JUNE = dt.date(2001, 6, 15)


def scene_from_cube(
    cube,
    sensor: SensorKind = SensorKind.TM,
    scene_id: str = "test-scene",
    date: dt.date = JUNE,
    pixel_size_m: float = 30.0,
    nodata: float = -9999.0,
) -> ReflectanceScene:
    """Build a scene from a (6, h, w) array in band order."""
    cube = np.asarray(cube, dtype=np.float32)
    assert cube.shape[0] == 6
    bands = {
        role: Grid(cube[i].copy(), pixel_size_m, nodata)
        for i, role in enumerate(BAND_ORDER)
    }
    return ReflectanceScene(scene_id, date, sensor, bands)


def uniform_scene(spectrum, height=4, width=4, **kwargs) -> ReflectanceScene:
    """A scene where every pixel holds the same six-band spectrum."""
    spectrum = np.asarray(spectrum, dtype=np.float32)
    cube = np.broadcast_to(spectrum[:, None, None], (6, height, width)).copy()
    return scene_from_cube(cube, **kwargs)


def labels_map(
    codes,
    scene_id: str = "test-map",
    date: dt.date = JUNE,
    pixel_size_m: float = 30.0,
) -> ClassMap:
    """Build a class map from an int array of label codes."""
    return ClassMap(scene_id, date, np.asarray(codes, dtype=np.uint8), pixel_size_m)


def flat_dem(height, width, value=100.0, pixel_size_m=30.0) -> Grid:
    return Grid(np.full((height, width), value, dtype=np.float32), pixel_size_m)


def zero_slope(height, width, pixel_size_m=30.0) -> Grid:
    """Slope grid for flat terrain."""
    return Grid(np.zeros((height, width), dtype=np.float32), pixel_size_m)


# Spectra for hand-built scenes: match the generator defaults.
WATER = (0.06, 0.08, 0.05, 0.03, 0.01, 0.008)
LAND = (0.10, 0.14, 0.18, 0.25, 0.30, 0.28)
CLOUD = (0.60, 0.60, 0.60, 0.60, 0.40, 0.30)
SNOW_BRIGHT = (0.60, 0.55, 0.50, 0.40, 0.10, 0.08)
# A dimmer snow spectrum whose tc4 stays above the cloud cutoff, so the
# visible-brightness ice test is what fires.
SNOW_DIM = (0.15, 0.20, 0.24, 0.18, 0.06, 0.05)
SHADOW = (0.03, 0.035, 0.03, 0.025, 0.02, 0.018)
