"""Shared raster, scene, and label types for the water mapping pipeline.

All grids are single-band, row-major, float32, with a sentinel nodata value.
Arrays passed into the constructors are taken over and marked read-only;
callers that need to keep mutating a buffer should pass in a copy.
"""
from __future__ import annotations

import datetime as dt
import enum
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

DEFAULT_PIXEL_SIZE_M = 30.0
DEFAULT_NODATA = -9999.0
REFLECTANCE_MAX = 1.5  # tolerant upper bound; calibrated reflectance may overshoot 1


class WaterMapError(Exception):
    """Base class for errors raised by this package."""


class FormatError(WaterMapError):
    """Serialized data is malformed or inconsistent with its header."""


class DegenerateInputError(WaterMapError):
    """Input admits no meaningful result (constant histogram, equal
    endmembers, empty window, empty region of interest...)."""


class UndefinedMetricError(WaterMapError):
    """A ratio metric was requested with a zero denominator."""


class BandRole(enum.Enum):
    BLUE = "blue"
    GREEN = "green"
    RED = "red"
    NIR = "nir"
    SWIR1 = "swir1"
    SWIR2 = "swir2"


# Canonical storage and coefficient order.
BAND_ORDER = (
    BandRole.BLUE,
    BandRole.GREEN,
    BandRole.RED,
    BandRole.NIR,
    BandRole.SWIR1,
    BandRole.SWIR2,
)
VISIBLE_BANDS = (BandRole.BLUE, BandRole.GREEN, BandRole.RED)
SWIR_BANDS = (BandRole.SWIR1, BandRole.SWIR2)


class SensorKind(enum.Enum):
    TM = "TM"
    OLI = "OLI"


class ClassLabel(enum.IntEnum):
    """Pixel classes. Codes are part of the on-disk format; never renumber."""

    LAND = 0
    WATER = 1
    CLOUD = 2
    ICE_SNOW = 3
    NODATA = 255


VALID_LABEL_CODES = frozenset(int(c) for c in ClassLabel)
# Labels that carry an actual surface observation.
OBSERVED_LABELS = (ClassLabel.LAND, ClassLabel.WATER)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Grid:
    """Single-band float32 raster with square pixels."""

    data: np.ndarray
    pixel_size_m: float = DEFAULT_PIXEL_SIZE_M
    nodata_value: float = DEFAULT_NODATA

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"grid data must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"grid must have positive dimensions, got {arr.shape}")
        if not (self.pixel_size_m > 0):
            raise ValueError(f"pixel_size_m must be positive, got {self.pixel_size_m}")
        object.__setattr__(self, "data", _freeze(arr))

    @classmethod
    def from_values(
        cls,
        values: Sequence[float] | np.ndarray,
        width: int,
        height: int,
        pixel_size_m: float = DEFAULT_PIXEL_SIZE_M,
        nodata_value: float = DEFAULT_NODATA,
    ) -> "Grid":
        """Build a grid from a flat row-major value buffer."""
        flat = np.asarray(values, dtype=np.float32).ravel()
        if flat.size != width * height:
            raise ValueError(
                f"value buffer has {flat.size} samples, expected {width * height} "
                f"for a {width}x{height} grid"
            )
        return cls(flat.reshape(height, width), pixel_size_m, nodata_value)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def valid_mask(self) -> np.ndarray:
        """True where the sample is finite and not the nodata sentinel."""
        return np.isfinite(self.data) & (self.data != np.float32(self.nodata_value))


@dataclass(frozen=True)
class ReflectanceScene:
    """One multispectral acquisition: six aligned reflectance bands."""

    scene_id: str
    date: dt.date
    sensor: SensorKind
    bands: Mapping[BandRole, Grid]

    def __post_init__(self) -> None:
        if not self.scene_id:
            raise ValueError("scene_id must be a non-empty string")
        if not isinstance(self.sensor, SensorKind):
            raise ValueError(f"sensor must be a SensorKind, got {self.sensor!r}")
        missing = [r.value for r in BAND_ORDER if r not in self.bands]
        if missing:
            raise ValueError(f"scene {self.scene_id} is missing bands: {missing}")
        extra = [k for k in self.bands if k not in BAND_ORDER]
        if extra:
            raise ValueError(f"scene {self.scene_id} has unknown bands: {extra}")
        ref = self.bands[BandRole.BLUE]
        for role in BAND_ORDER:
            g = self.bands[role]
            if g.shape != ref.shape or g.pixel_size_m != ref.pixel_size_m:
                raise ValueError(
                    f"band {role.value} is not aligned with blue: "
                    f"{g.shape}@{g.pixel_size_m}m vs {ref.shape}@{ref.pixel_size_m}m"
                )
        object.__setattr__(self, "bands", MappingProxyType(dict(self.bands)))

    @property
    def width(self) -> int:
        return self.bands[BandRole.BLUE].width

    @property
    def height(self) -> int:
        return self.bands[BandRole.BLUE].height

    @property
    def shape(self) -> tuple[int, int]:
        return self.bands[BandRole.BLUE].shape

    @property
    def pixel_size_m(self) -> float:
        return self.bands[BandRole.BLUE].pixel_size_m

    def band_cube(self) -> np.ndarray:
        """Stack bands into a (6, height, width) float32 cube in BAND_ORDER."""
        return np.stack([self.bands[r].data for r in BAND_ORDER])

    def valid_mask(self) -> np.ndarray:
        """True where every band holds a plausible reflectance.

        A pixel is valid when all six samples are finite, not nodata, and
        inside [0, REFLECTANCE_MAX].
        """
        out = np.ones(self.shape, dtype=bool)
        for role in BAND_ORDER:
            g = self.bands[role]
            out &= g.valid_mask() & (g.data >= 0.0) & (g.data <= REFLECTANCE_MAX)
        return out


@dataclass(frozen=True)
class ClassMap:
    """Per-pixel class labels for one scene."""

    scene_id: str
    date: dt.date
    labels: np.ndarray
    pixel_size_m: float = DEFAULT_PIXEL_SIZE_M

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels)
        if arr.dtype != np.uint8:
            raise ValueError(f"labels must be uint8, got {arr.dtype}")
        if arr.ndim != 2:
            raise ValueError(f"labels must be 2-D, got shape {arr.shape}")
        if not (self.pixel_size_m > 0):
            raise ValueError(f"pixel_size_m must be positive, got {self.pixel_size_m}")
        bad = set(np.unique(arr).tolist()) - VALID_LABEL_CODES
        if bad:
            raise ValueError(f"unknown class codes in map: {sorted(bad)}")
        object.__setattr__(self, "labels", _freeze(arr))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def mask(self, label: ClassLabel) -> np.ndarray:
        return self.labels == np.uint8(label)

    def observed_mask(self) -> np.ndarray:
        """True where the pixel is an actual surface observation (water/land)."""
        return self.mask(ClassLabel.WATER) | self.mask(ClassLabel.LAND)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary water-vs-land confusion counts."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class AreaRecord:
    """Per-date reservoir summary.

    division_index is NaN when undefined (no water that date).
    """

    date: dt.date
    water_area_km2: float
    division_index: float
    valid_fraction: float

    def __post_init__(self) -> None:
        if self.water_area_km2 < 0:
            raise ValueError(f"water_area_km2 must be >= 0, got {self.water_area_km2}")
        if not (0.0 <= self.valid_fraction <= 1.0):
            raise ValueError(f"valid_fraction must be in [0, 1], got {self.valid_fraction}")
        if not math.isnan(self.division_index) and not (0.0 <= self.division_index < 1.0):
            raise ValueError(
                f"division_index must be NaN or in [0, 1), got {self.division_index}"
            )


@dataclass(frozen=True)
class ManifestEntry:
    """One archive scene: identity plus the path prefix of its raster pair."""

    scene_id: str
    date: dt.date
    sensor: SensorKind
    path: str

    def __post_init__(self) -> None:
        if not self.scene_id:
            raise ValueError("scene_id must be non-empty")
        if not self.path:
            raise ValueError(f"scene {self.scene_id}: path must be non-empty")


@dataclass(frozen=True)
class SceneManifest:
    """Ordered scene listing for one archive, with optional shared rasters."""

    entries: tuple[ManifestEntry, ...]
    dem_path: str | None = None
    roi_path: str | None = None

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        for a, b in zip(entries, entries[1:]):
            if b.date < a.date:
                raise ValueError(
                    f"manifest entries out of order: {a.scene_id} ({a.date}) "
                    f"precedes {b.scene_id} ({b.date})"
                )
        seen: set[str] = set()
        for e in entries:
            if e.scene_id in seen:
                raise ValueError(f"duplicate scene_id in manifest: {e.scene_id}")
            seen.add(e.scene_id)
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def pixel_area_km2(grid: Grid | ClassMap) -> float:
    """Area of one square pixel in km^2 (30 m pixels -> 0.0009 km^2)."""
    return grid.pixel_size_m * grid.pixel_size_m / 1e6
