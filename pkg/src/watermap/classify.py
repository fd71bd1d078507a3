"""Per-scene water classification.

The decision chain per pixel, in precedence order:

1. nodata in any band              -> NODATA
2. fourth tasseled-cap component   -> CLOUD where tc4 <= threshold
3. visible-vs-SWIR maximum test    -> WATER where max(B,G,R) > max(SWIR1,SWIR2)
4. terrain slope over the DEM      -> water on slopes steeper than the cutoff
                                      is shadow, reassigned to LAND
5. visible brightness              -> bright water (max(B,G,R) >= cutoff)
                                      is ICE_SNOW

Thresholds come from ClassifyConfig; the cloud threshold can optionally be
re-derived per scene.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .core import (
    BAND_ORDER,
    ClassLabel,
    ClassMap,
    DegenerateInputError,
    FormatError,
    Grid,
    ReflectanceScene,
    SensorKind,
    SWIR_BANDS,
    VISIBLE_BANDS,
)

# Fourth tasseled-cap component weights, indexed like BAND_ORDER
# (blue, green, red, nir, swir1, swir2).
TC4_COEFFICIENTS = {
    SensorKind.TM: np.array(
        [-0.8242, 0.0849, 0.4392, -0.058, 0.2012, -0.2768], dtype=np.float64
    ),
    SensorKind.OLI: np.array(
        [-0.8239, 0.0849, 0.4396, -0.058, 0.2013, -0.2773], dtype=np.float64
    ),
}

OTSU_BINS = 256


@dataclass(frozen=True)
class ClassifyConfig:
    """Thresholds for the per-scene classifier."""

    tc4_threshold: float = -0.046
    per_scene_otsu: bool = False
    slope_threshold_deg: float = 4.0
    maxvis_threshold: float = 0.15
    cloud_skip_fraction: float = 0.8

    def __post_init__(self) -> None:
        if not np.isfinite(self.tc4_threshold):
            raise ValueError(f"tc4_threshold must be finite, got {self.tc4_threshold}")
        if not (self.slope_threshold_deg >= 0):
            raise ValueError(
                f"slope_threshold_deg must be >= 0, got {self.slope_threshold_deg}"
            )
        if not (self.maxvis_threshold > 0):
            raise ValueError(f"maxvis_threshold must be > 0, got {self.maxvis_threshold}")
        if not (0.0 <= self.cloud_skip_fraction <= 1.0):
            raise ValueError(
                f"cloud_skip_fraction must be in [0, 1], got {self.cloud_skip_fraction}"
            )

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "ClassifyConfig":
        """Build from string key=value pairs; unknown keys are errors."""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise FormatError(f"unknown classify config keys: {unknown}")
        kwargs: dict = {}
        for key, value in raw.items():
            if key == "per_scene_otsu":
                kwargs[key] = _parse_bool(key, value)
            else:
                try:
                    kwargs[key] = float(value)
                except ValueError as exc:
                    raise FormatError(f"config key {key}: bad number {value!r}") from exc
        return cls(**kwargs)


def _parse_bool(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise FormatError(f"config key {key}: expected a boolean, got {value!r}")


def tc4(scene: ReflectanceScene) -> Grid:
    """Fourth tasseled-cap component per pixel, nodata where any band is invalid."""
    coef = TC4_COEFFICIENTS[scene.sensor]
    valid = scene.valid_mask()
    acc = np.zeros(scene.shape, dtype=np.float64)
    for c, role in zip(coef, BAND_ORDER):
        acc += c * scene.bands[role].data.astype(np.float64)
    out = acc.astype(np.float32)
    nodata = np.float32(-9999.0)
    out[~valid] = nodata
    return Grid(out, scene.pixel_size_m, float(nodata))


def otsu_threshold(samples: np.ndarray, bins: int = OTSU_BINS) -> float:
    """Histogram threshold maximizing between-class variance.

    The sample range is split into ``bins`` uniform bins; candidate
    thresholds are the interior bin edges and ties break toward the lower
    edge. Raises DegenerateInputError when fewer than two distinct finite
    samples exist.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    s = np.asarray(samples, dtype=np.float64).ravel()
    s = s[np.isfinite(s)]
    if s.size < 2:
        raise DegenerateInputError(f"need at least 2 finite samples, got {s.size}")
    mn, mx = float(s.min()), float(s.max())
    if mn == mx:
        raise DegenerateInputError(f"all {s.size} samples equal {mn}; histogram is degenerate")
    hist, edges = np.histogram(s, bins=bins, range=(mn, mx))
    p = hist.astype(np.float64) / s.size
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(p)[:-1]              # class weight below edge k, k = 1..bins-1
    w1 = 1.0 - w0
    m0 = np.cumsum(p * centers)[:-1]    # unnormalized class mean below edge k
    mt = float(np.sum(p * centers))
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = np.where(w0 > 0, m0 / w0, 0.0)
        mu1 = np.where(w1 > 0, (mt - m0) / w1, 0.0)
        var_between = np.where((w0 > 0) & (w1 > 0), w0 * w1 * (mu0 - mu1) ** 2, 0.0)
    k = int(np.argmax(var_between)) + 1  # argmax takes the first (lowest) maximizer
    return float(edges[k])


def cloud_mask(tc4_grid: Grid, threshold: float) -> np.ndarray:
    """True where tc4 <= threshold (inclusive); nodata pixels are never cloud."""
    if not np.isfinite(threshold):
        raise ValueError(f"cloud threshold must be finite, got {threshold}")
    return tc4_grid.valid_mask() & (tc4_grid.data <= np.float32(threshold))


def water_index(scene: ReflectanceScene) -> np.ndarray:
    """True where the visible maximum strictly exceeds the SWIR maximum.

    Equality counts as non-water. Pixels with any invalid band are never
    water; NODATA labeling is classify_scene's job.
    """
    vis = np.maximum.reduce([scene.bands[r].data for r in VISIBLE_BANDS])
    swir = np.maximum.reduce([scene.bands[r].data for r in SWIR_BANDS])
    return scene.valid_mask() & (vis > swir)


def max_visible(scene: ReflectanceScene) -> np.ndarray:
    """Per-pixel maximum over the blue/green/red bands."""
    return np.maximum.reduce([scene.bands[r].data for r in VISIBLE_BANDS])


def slope_from_dem(dem: Grid) -> Grid:
    """Terrain slope in degrees from a 3x3 finite-difference kernel.

    Border cells reuse the edge row/column (replication). Cells whose 3x3
    window touches an invalid DEM sample get nodata.
    """
    z = dem.data.astype(np.float64)
    zp = np.pad(z, 1, mode="edge")
    nw, n_, ne = zp[:-2, :-2], zp[:-2, 1:-1], zp[:-2, 2:]
    w_, e_ = zp[1:-1, :-2], zp[1:-1, 2:]
    sw, s_, se = zp[2:, :-2], zp[2:, 1:-1], zp[2:, 2:]
    cell = dem.pixel_size_m
    dzdx = ((ne + 2.0 * e_ + se) - (nw + 2.0 * w_ + sw)) / (8.0 * cell)
    dzdy = ((sw + 2.0 * s_ + se) - (nw + 2.0 * n_ + ne)) / (8.0 * cell)
    slope = np.degrees(np.arctan(np.hypot(dzdx, dzdy))).astype(np.float32)

    vp = np.pad(dem.valid_mask(), 1, mode="edge")
    ok = np.ones(dem.shape, dtype=bool)
    for dr in (0, 1, 2):
        for dc in (0, 1, 2):
            ok &= vp[dr : dr + dem.height, dc : dc + dem.width]
    nodata = np.float32(-9999.0)
    slope[~ok] = nodata
    return Grid(slope, dem.pixel_size_m, float(nodata))


def shadow_filter(water: np.ndarray, slope: Grid, threshold_deg: float) -> np.ndarray:
    """Drop water strictly steeper than the slope cutoff (terrain shadow).

    Water on a pixel with an invalid slope is kept.
    """
    if water.shape != slope.shape:
        raise ValueError(f"water mask {water.shape} does not match slope {slope.shape}")
    steep = slope.valid_mask() & (slope.data > np.float32(threshold_deg))
    return water & ~steep


def snow_ice_filter(
    water: np.ndarray, scene: ReflectanceScene, maxvis_threshold: float
) -> tuple[np.ndarray, np.ndarray]:
    """Split bright water into (remaining water, ice/snow).

    Only water pixels are eligible; the test is max(B,G,R) >= threshold,
    inclusive.
    """
    if water.shape != scene.shape:
        raise ValueError(f"water mask {water.shape} does not match scene {scene.shape}")
    ice = water & scene.valid_mask() & (max_visible(scene) >= np.float32(maxvis_threshold))
    return water & ~ice, ice


def classify_scene(
    scene: ReflectanceScene, slope: Grid, config: ClassifyConfig | None = None
) -> ClassMap:
    """Label every pixel of a scene as land, water, cloud, ice/snow, or nodata."""
    config = config or ClassifyConfig()
    if slope.shape != scene.shape:
        raise ValueError(
            f"slope grid {slope.shape} does not match scene {scene.shape}"
        )
    valid = scene.valid_mask()
    t4 = tc4(scene)
    threshold = config.tc4_threshold
    if config.per_scene_otsu:
        # Re-derive the cloud cutoff from this scene's tc4 distribution.
        threshold = otsu_threshold(t4.data[valid])
    cloud = cloud_mask(t4, threshold)
    water = water_index(scene) & ~cloud
    water = shadow_filter(water, slope, config.slope_threshold_deg)
    water, ice = snow_ice_filter(water, scene, config.maxvis_threshold)

    labels = np.full(scene.shape, np.uint8(ClassLabel.LAND))
    labels[water] = np.uint8(ClassLabel.WATER)
    labels[ice] = np.uint8(ClassLabel.ICE_SNOW)
    labels[cloud] = np.uint8(ClassLabel.CLOUD)
    labels[~valid] = np.uint8(ClassLabel.NODATA)
    return ClassMap(scene.scene_id, scene.date, labels, scene.pixel_size_m)


def cloud_fraction(cmap: ClassMap, roi: np.ndarray) -> float:
    """Fraction of region-of-interest pixels labeled cloud."""
    if roi.shape != cmap.shape:
        raise ValueError(f"roi {roi.shape} does not match map {cmap.shape}")
    n = int(np.count_nonzero(roi))
    if n == 0:
        raise DegenerateInputError("region of interest is empty")
    return int(np.count_nonzero(cmap.mask(ClassLabel.CLOUD) & roi)) / n
