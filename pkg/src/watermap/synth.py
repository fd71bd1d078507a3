"""Deterministic synthetic scene generation for tests and demos.

Scenes are composed from spectral class templates painted into simple
geometric features over a uniform background. With mixing enabled,
feature-boundary pixels get area-weighted blends of the overlapping
templates (the sub-pixel coverage is measured on a supersampled grid) and
the true water fraction of each blended pixel is recorded.

Randomness comes from numpy's Philox bit generator, a named 64-bit
counter-based PRNG (Random123 family), so a given seed reproduces the same
archive everywhere. Scene pixel noise is drawn first from the scene seed;
blob shapes use side streams keyed by (seed, feature index), so adding or
removing one feature never perturbs the rest of the scene.

Coordinates are continuous pixel units: pixel (row, col) spans
x in [col, col+1), y in [row, row+1).
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .core import (
    BAND_ORDER,
    BandRole,
    ClassLabel,
    ClassMap,
    DEFAULT_NODATA,
    DEFAULT_PIXEL_SIZE_M,
    Grid,
    ReflectanceScene,
    SensorKind,
)
from .classify import TC4_COEFFICIENTS

FEATURE_SHAPES = ("disk", "ellipse", "line", "blob")
FEATURE_CLASSES = ("water", "cloud", "ice_snow", "shadow")
SPECTRUM_CLASSES = ("water", "land", "vegetation", "snow", "cloud", "shadow")

# Six-band reflectance templates (blue, green, red, nir, swir1, swir2).
DEFAULT_SPECTRA: dict[str, tuple[tuple[float, ...], float]] = {
    "water": ((0.06, 0.08, 0.05, 0.03, 0.01, 0.008), 0.005),
    "land": ((0.10, 0.14, 0.18, 0.25, 0.30, 0.28), 0.005),
    "vegetation": ((0.04, 0.06, 0.04, 0.40, 0.22, 0.12), 0.005),
    "snow": ((0.60, 0.55, 0.50, 0.40, 0.10, 0.08), 0.005),
    "cloud": ((0.60, 0.60, 0.60, 0.60, 0.40, 0.30), 0.005),
    "shadow": ((0.03, 0.035, 0.03, 0.025, 0.02, 0.018), 0.005),
}

_SPECTRUM_FOR_FEATURE = {"water": "water", "cloud": "cloud", "ice_snow": "snow", "shadow": "shadow"}
_LABEL_FOR_SPECTRUM = {
    "water": ClassLabel.WATER,
    "land": ClassLabel.LAND,
    "vegetation": ClassLabel.LAND,
    "shadow": ClassLabel.LAND,
    "snow": ClassLabel.ICE_SNOW,
    "cloud": ClassLabel.CLOUD,
}
# Tie order for truth labels; water first so an exact 50/50 boundary pixel
# is true water, matching the refinement threshold convention.
_TRUTH_ORDER = (ClassLabel.WATER, ClassLabel.ICE_SNOW, ClassLabel.CLOUD, ClassLabel.LAND)

_TEMPLATE_MARGIN = 0.01  # templates must clear classifier thresholds by this
_SEED_STRIDE = 1_000_003  # per-scene child seeds: base*stride + 1 + index


@dataclass(frozen=True)
class SpectrumSpec:
    """A class template plus per-band noise standard deviation."""

    template: tuple[float, ...]
    noise_std: tuple[float, ...]

    def __post_init__(self) -> None:
        t = tuple(float(v) for v in self.template)
        if len(t) != 6:
            raise ValueError(f"template must have 6 bands, got {len(t)}")
        if any(v < 0 or v > 1.5 for v in t):
            raise ValueError(f"template reflectance outside [0, 1.5]: {t}")
        ns = self.noise_std
        if isinstance(ns, (int, float)):
            ns = (float(ns),) * 6
        else:
            ns = tuple(float(v) for v in ns)
        if len(ns) != 6:
            raise ValueError(f"noise_std must be scalar or 6 values, got {len(ns)}")
        if any(v < 0 for v in ns):
            raise ValueError(f"noise_std must be >= 0, got {ns}")
        object.__setattr__(self, "template", t)
        object.__setattr__(self, "noise_std", ns)


@dataclass(frozen=True)
class Feature:
    """One painted region: a shape, its surface class, and geometry params."""

    shape: str
    label: str
    params: Mapping[str, float]

    _REQUIRED = {
        "disk": ("cx", "cy", "r"),
        "ellipse": ("cx", "cy", "rx", "ry"),
        "line": ("x0", "y0", "x1", "y1", "width_px"),
        "blob": ("cx", "cy", "r"),
    }
    _OPTIONAL = {
        "ellipse": ("angle_deg",),
        "blob": ("irregularity", "lobes"),
    }

    def __post_init__(self) -> None:
        if self.shape not in FEATURE_SHAPES:
            raise ValueError(f"unknown feature shape {self.shape!r}, expected {FEATURE_SHAPES}")
        if self.label not in FEATURE_CLASSES:
            raise ValueError(f"unknown feature class {self.label!r}, expected {FEATURE_CLASSES}")
        params = {k: float(v) for k, v in dict(self.params).items()}
        required = self._REQUIRED[self.shape]
        allowed = set(required) | set(self._OPTIONAL.get(self.shape, ()))
        missing = [k for k in required if k not in params]
        if missing:
            raise ValueError(f"{self.shape} feature is missing params {missing}")
        unknown = sorted(set(params) - allowed)
        if unknown:
            raise ValueError(f"{self.shape} feature has unknown params {unknown}")
        for key in ("r", "rx", "ry", "width_px"):
            if key in params and params[key] <= 0:
                raise ValueError(f"{self.shape} feature: {key} must be > 0")
        irr = params.get("irregularity", 0.3)
        if self.shape == "blob" and not (0.0 <= irr < 1.0):
            raise ValueError(f"blob irregularity must be in [0, 1), got {irr}")
        if self.shape == "blob" and params.get("lobes", 4) < 1:
            raise ValueError("blob lobes must be >= 1")
        object.__setattr__(self, "params", params)


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for one synthetic scene."""

    width: int
    height: int
    seed: int
    scene_id: str = "synthetic-0001"
    date: dt.date = dt.date(2000, 6, 15)
    sensor: SensorKind = SensorKind.TM
    pixel_size_m: float = DEFAULT_PIXEL_SIZE_M
    features: tuple[Feature, ...] = ()
    spectra: Mapping[str, SpectrumSpec] = field(default_factory=dict)
    mixing: bool = True
    background: str = "land"
    supersample: int = 4
    dem_base_m: float = 100.0
    shadow_ramp_m_per_px: float = 5.0

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"canvas must be positive, got {self.width}x{self.height}")
        if self.supersample < 1:
            raise ValueError(f"supersample must be >= 1, got {self.supersample}")
        if self.background not in ("land", "vegetation"):
            raise ValueError(f"background must be land or vegetation, got {self.background!r}")
        if self.shadow_ramp_m_per_px <= 0:
            raise ValueError("shadow_ramp_m_per_px must be > 0")
        unknown = sorted(set(self.spectra) - set(SPECTRUM_CLASSES))
        if unknown:
            raise ValueError(f"unknown spectrum classes {unknown}, expected {SPECTRUM_CLASSES}")
        merged = {
            name: SpectrumSpec(*DEFAULT_SPECTRA[name]) for name in SPECTRUM_CLASSES
        }
        for name, spec in self.spectra.items():
            merged[name] = spec if isinstance(spec, SpectrumSpec) else SpectrumSpec(*spec)
        _validate_spectra(merged)
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "spectra", merged)


def _validate_spectra(spectra: Mapping[str, SpectrumSpec]) -> None:
    """Templates must land on the right side of every classifier test."""
    for name, s in spectra.items():
        vis = max(s.template[:3])
        swir = max(s.template[4:])
        if name in ("water", "shadow") and not (vis > swir):
            raise ValueError(
                f"{name} template must have max visible > max SWIR, got {vis} vs {swir}"
            )
        if name in ("land", "vegetation") and not (swir > vis):
            raise ValueError(
                f"{name} template must have max SWIR > max visible, got {swir} vs {vis}"
            )
        if name == "snow" and not (vis >= 0.15 + _TEMPLATE_MARGIN):
            raise ValueError(
                f"snow template max visible must clear 0.15 with margin, got {vis}"
            )
        if name == "cloud":
            for sensor, coef in TC4_COEFFICIENTS.items():
                t4 = float(np.dot(coef, np.asarray(s.template)))
                if not (t4 <= -0.046 - _TEMPLATE_MARGIN):
                    raise ValueError(
                        f"cloud template tc4 ({sensor.value}) must clear -0.046 "
                        f"with margin, got {t4:.4f}"
                    )


@dataclass(frozen=True)
class SyntheticScene:
    """Generator output: scene, intended truth, terrain, recorded mixing."""

    scene: ReflectanceScene
    truth: ClassMap
    dem: Grid
    water_fraction: Grid  # true water fraction on blended pixels, nodata elsewhere


def _blob_radius_profile(feature: Feature, spec: SceneSpec, index: int) -> np.ndarray:
    """Radius as a function of angle, sampled densely over [0, 2*pi)."""
    params = feature.params
    lobes = int(params.get("lobes", 4))
    irregularity = params.get("irregularity", 0.3)
    rng = np.random.Generator(np.random.Philox([spec.seed, 7000 + index]))
    coefs = rng.standard_normal((lobes, 2))
    theta = np.linspace(0.0, 2.0 * np.pi, 1024, endpoint=False)
    raw = np.zeros_like(theta)
    for k in range(lobes):
        raw += coefs[k, 0] * np.cos((k + 1) * theta) + coefs[k, 1] * np.sin((k + 1) * theta)
    peak = np.max(np.abs(raw))
    if peak > 0:
        raw = raw / peak * irregularity
    return params["r"] * (1.0 + raw)


def _inside(
    feature: Feature,
    spec: SceneSpec,
    index: int,
    xs: np.ndarray,
    ys: np.ndarray,
    margin: float,
) -> np.ndarray:
    """Boolean membership of (ys[:,None], xs[None,:]) points, dilated by margin."""
    p = feature.params
    x = xs[None, :]
    y = ys[:, None]
    if feature.shape == "disk":
        rr = p["r"] + margin
        return (x - p["cx"]) ** 2 + (y - p["cy"]) ** 2 <= rr * rr
    if feature.shape == "ellipse":
        a = math.radians(p.get("angle_deg", 0.0))
        u = math.cos(a) * (x - p["cx"]) + math.sin(a) * (y - p["cy"])
        v = -math.sin(a) * (x - p["cx"]) + math.cos(a) * (y - p["cy"])
        return (u / (p["rx"] + margin)) ** 2 + (v / (p["ry"] + margin)) ** 2 <= 1.0
    if feature.shape == "line":
        ax, ay, bx, by = p["x0"], p["y0"], p["x1"], p["y1"]
        dx, dy = bx - ax, by - ay
        seg2 = dx * dx + dy * dy
        if seg2 == 0:
            t = np.zeros_like(x + y)
        else:
            t = np.clip(((x - ax) * dx + (y - ay) * dy) / seg2, 0.0, 1.0)
        px = ax + t * dx
        py = ay + t * dy
        half = p["width_px"] / 2.0 + margin
        return (x - px) ** 2 + (y - py) ** 2 <= half * half
    # blob
    profile = _blob_radius_profile(feature, spec, index)
    dx = x - p["cx"]
    dy = y - p["cy"]
    theta = np.arctan2(dy, dx) % (2.0 * np.pi)
    pos = theta / (2.0 * np.pi) * profile.size
    wrapped = np.concatenate([profile, profile[:1]])
    r_at = np.interp(pos.ravel(), np.arange(profile.size + 1), wrapped).reshape(pos.shape)
    return dx * dx + dy * dy <= (r_at + margin) ** 2


def _coverage(feature: Feature, spec: SceneSpec, index: int, margin: float = 0.0) -> np.ndarray:
    """Fraction of each pixel covered by the feature, from supersampling."""
    s = spec.supersample
    xs = ((np.arange(spec.width * s) + 0.5) / s).astype(np.float32)
    ys = ((np.arange(spec.height * s) + 0.5) / s).astype(np.float32)
    inside = _inside(feature, spec, index, xs, ys, margin)
    return (
        inside.reshape(spec.height, s, spec.width, s)
        .mean(axis=(1, 3), dtype=np.float64)
    )


def generate(spec: SceneSpec) -> SyntheticScene:
    """Render a spec into a scene, its truth map, a DEM, and mixing records."""
    h, w = spec.height, spec.width
    rng = np.random.Generator(np.random.Philox(spec.seed))
    # Drawn first and with a feature-independent layout, so two specs that
    # differ only in their feature lists share the same noise field.
    z = rng.standard_normal((h, w, 6))

    frac = {name: np.zeros((h, w), dtype=np.float64) for name in SPECTRUM_CLASSES}
    frac[spec.background][:] = 1.0
    for index, feature in enumerate(spec.features):
        cov = _coverage(feature, spec, index)
        if not spec.mixing:
            cov = (cov >= 0.5).astype(np.float64)
        key = _SPECTRUM_FOR_FEATURE[feature.label]
        keep = 1.0 - cov
        for name in SPECTRUM_CLASSES:
            frac[name] *= keep
        frac[key] += cov

    refl = np.zeros((h, w, 6), dtype=np.float64)
    std = np.zeros((h, w, 6), dtype=np.float64)
    for name in SPECTRUM_CLASSES:
        s = spec.spectra[name]
        weight = frac[name][:, :, None]
        refl += weight * np.asarray(s.template)
        std += weight * np.asarray(s.noise_std)
    data = np.clip(refl + std * z, 0.0, None).astype(np.float32)

    bands = {
        role: Grid(data[:, :, i], spec.pixel_size_m, DEFAULT_NODATA)
        for i, role in enumerate(BAND_ORDER)
    }
    scene = ReflectanceScene(spec.scene_id, spec.date, spec.sensor, bands)

    label_frac = {label: np.zeros((h, w), dtype=np.float64) for label in _TRUTH_ORDER}
    for name in SPECTRUM_CLASSES:
        label_frac[_LABEL_FOR_SPECTRUM[name]] += frac[name]
    stacked = np.stack([label_frac[label] for label in _TRUTH_ORDER])
    codes = np.array([int(label) for label in _TRUTH_ORDER], dtype=np.uint8)
    truth_labels = codes[np.argmax(stacked, axis=0)]  # first max wins ties
    truth = ClassMap(spec.scene_id, spec.date, truth_labels, spec.pixel_size_m)

    dem = np.full((h, w), spec.dem_base_m, dtype=np.float64)
    for index, feature in enumerate(spec.features):
        if feature.label != "shadow":
            continue
        # Ramp a margin beyond the feature so every feature pixel sees the
        # full gradient through the 3x3 slope kernel.
        mask = _coverage(feature, spec, index, margin=3.0) >= 0.5
        if not mask.any():
            continue
        cols = np.nonzero(mask.any(axis=0))[0]
        ramp = (np.arange(w) - cols[0] + 1.0) * spec.shadow_ramp_m_per_px
        dem = np.where(mask, spec.dem_base_m + ramp[None, :], dem)
    dem_grid = Grid(dem.astype(np.float32), spec.pixel_size_m, DEFAULT_NODATA)

    wf = frac["water"]
    blended = (wf > 0.0) & (wf < 1.0)
    wf_arr = np.where(blended, wf, DEFAULT_NODATA).astype(np.float32)
    water_fraction = Grid(wf_arr, spec.pixel_size_m, DEFAULT_NODATA)
    return SyntheticScene(scene, truth, dem_grid, water_fraction)


# ---------------------------------------------------------------------------
# seasonal archives

@dataclass(frozen=True)
class SeasonalArchive:
    """A multi-year lake archive with known per-date truth."""

    scenes: tuple[SyntheticScene, ...]
    dates: tuple[dt.date, ...]
    true_areas_km2: tuple[float, ...]
    dem: Grid


def seasonal_radius(t_months: float, radius_min_px: float, radius_max_px: float) -> float:
    """Smooth annual radius cycle peaking mid-September, troughing mid-May.

    The rise (May to September) and fall (September to next May) are half
    cosine waves on their own time bases, so the curve is periodic and
    differentiable with extremes exactly at t=9 and t=5 (months, 1-based,
    mid-month sampling).
    """
    span = radius_max_px - radius_min_px
    t = t_months % 12.0
    if 5.0 <= t <= 9.0:
        u = (t - 5.0) / 4.0
        return radius_min_px + span * (1.0 - math.cos(math.pi * u)) / 2.0
    v = ((t - 9.0) % 12.0) / 8.0
    return radius_max_px - span * (1.0 - math.cos(math.pi * v)) / 2.0


def child_seed(base_seed: int, index: int) -> int:
    """Derived per-scene seed; documented so archives reproduce exactly."""
    return base_seed * _SEED_STRIDE + 1 + index


def seasonal_stack(
    spec: SceneSpec,
    years: int,
    scenes_per_year: int = 12,
    *,
    radius_min_px: float = 20.0,
    radius_max_px: float = 32.0,
    radius_noise_px: float = 0.05,
    start_year: int = 1986,
) -> SeasonalArchive:
    """Generate a lake whose radius follows the annual cycle.

    ``spec`` supplies the canvas, spectra, and base seed; its feature list
    is ignored. scenes_per_year must be a multiple of 12 so every month is
    observed. Radius noise comes from a dedicated Philox stream keyed by
    (seed, date index).
    """
    if years < 1:
        raise ValueError(f"years must be >= 1, got {years}")
    if scenes_per_year < 12 or scenes_per_year % 12 != 0:
        raise ValueError(
            f"scenes_per_year must be a positive multiple of 12, got {scenes_per_year}"
        )
    if not (0 < radius_min_px <= radius_max_px):
        raise ValueError(
            f"need 0 < radius_min_px <= radius_max_px, got {radius_min_px}, {radius_max_px}"
        )
    half_canvas = min(spec.width, spec.height) / 2.0
    if radius_max_px + 4.0 > half_canvas:
        raise ValueError(
            f"radius_max_px {radius_max_px} does not fit a {spec.width}x{spec.height} canvas"
        )
    per_month = scenes_per_year // 12
    noise_rng = np.random.Generator(np.random.Philox([spec.seed, 0x5EA50]))

    cx, cy = spec.width / 2.0, spec.height / 2.0
    scenes: list[SyntheticScene] = []
    dates: list[dt.date] = []
    areas: list[float] = []
    index = 0
    for year_off in range(years):
        year = start_year + year_off
        for month in range(1, 13):
            for j in range(per_month):
                day = 15 if per_month == 1 else 1 + round(j * 27 / (per_month - 1))
                date = dt.date(year, month, day)
                t = month + (day - 15) / 30.0
                radius = seasonal_radius(t, radius_min_px, radius_max_px)
                radius += radius_noise_px * float(noise_rng.standard_normal())
                radius = max(radius, 1.0)
                lake = Feature("disk", "water", {"cx": cx, "cy": cy, "r": radius})
                sub = replace(
                    spec,
                    scene_id=f"{spec.scene_id}-{date.isoformat()}",
                    date=date,
                    seed=child_seed(spec.seed, index),
                    features=(lake,),
                )
                rendered = generate(sub)
                scenes.append(rendered)
                dates.append(date)
                areas.append(
                    int(np.count_nonzero(rendered.truth.mask(ClassLabel.WATER)))
                    * spec.pixel_size_m ** 2
                    / 1e6
                )
                index += 1
    return SeasonalArchive(tuple(scenes), tuple(dates), tuple(areas), scenes[0].dem)


# ---------------------------------------------------------------------------
# JSON recipes

@dataclass(frozen=True)
class SynthPlan:
    """Parsed synthesis recipe: explicit scenes or a seasonal archive."""

    specs: tuple[SceneSpec, ...] = ()
    seasonal_base: SceneSpec | None = None
    seasonal_args: Mapping[str, object] | None = None


def _spectra_from_json(raw: dict) -> dict[str, SpectrumSpec]:
    out = {}
    for name, body in raw.items():
        if not isinstance(body, dict) or "template" not in body:
            raise ValueError(f"spectrum {name!r} must be an object with a 'template'")
        out[name] = SpectrumSpec(
            tuple(body["template"]), body.get("noise_std", DEFAULT_SPECTRA["land"][1])
        )
    return out


def _features_from_json(raw: list) -> tuple[Feature, ...]:
    feats = []
    for i, body in enumerate(raw):
        if not isinstance(body, dict):
            raise ValueError(f"feature #{i} must be an object")
        body = dict(body)
        try:
            shape = body.pop("shape")
            label = body.pop("class")
        except KeyError as exc:
            raise ValueError(f"feature #{i} is missing {exc.args[0]!r}") from exc
        feats.append(Feature(shape, label, body))
    return tuple(feats)


def load_synth_plan(text: str) -> SynthPlan:
    """Parse a synthesis recipe from JSON text.

    Top level keys: canvas/seed fields shared by all scenes, optional
    ``spectra`` overrides, and either a ``scenes`` list (each entry:
    scene_id, date, sensor, features) or a ``seasonal`` object (years,
    scenes_per_year, radius_min_px, radius_max_px, radius_noise_px,
    start_year). Per-scene seeds derive from the shared seed by index.
    """
    import json

    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("synthesis recipe must be a JSON object")
    known = {
        "width", "height", "pixel_size_m", "seed", "mixing", "background",
        "supersample", "dem_base_m", "shadow_ramp_m_per_px", "spectra",
        "scenes", "seasonal", "scene_id", "sensor",
    }
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown recipe keys: {unknown}")
    for key in ("width", "height", "seed"):
        if key not in doc:
            raise ValueError(f"recipe is missing required key {key!r}")

    base_kwargs = dict(
        width=int(doc["width"]),
        height=int(doc["height"]),
        seed=int(doc["seed"]),
        pixel_size_m=float(doc.get("pixel_size_m", DEFAULT_PIXEL_SIZE_M)),
        mixing=bool(doc.get("mixing", True)),
        background=doc.get("background", "land"),
        supersample=int(doc.get("supersample", 4)),
        dem_base_m=float(doc.get("dem_base_m", 100.0)),
        shadow_ramp_m_per_px=float(doc.get("shadow_ramp_m_per_px", 5.0)),
        spectra=_spectra_from_json(doc.get("spectra", {})),
        scene_id=str(doc.get("scene_id", "synthetic")),
        sensor=SensorKind(doc.get("sensor", "TM")),
    )

    has_scenes = "scenes" in doc
    has_seasonal = "seasonal" in doc
    if has_scenes == has_seasonal:
        raise ValueError("recipe must define exactly one of 'scenes' or 'seasonal'")

    if has_seasonal:
        body = dict(doc["seasonal"])
        if "years" not in body:
            raise ValueError("seasonal recipe is missing 'years'")
        args: dict[str, object] = {"years": int(body.pop("years"))}
        if "scenes_per_year" in body:
            args["scenes_per_year"] = int(body.pop("scenes_per_year"))
        for key in ("radius_min_px", "radius_max_px", "radius_noise_px"):
            if key in body:
                args[key] = float(body.pop(key))
        if "start_year" in body:
            args["start_year"] = int(body.pop("start_year"))
        if body:
            raise ValueError(f"unknown seasonal keys: {sorted(body)}")
        return SynthPlan(seasonal_base=SceneSpec(**base_kwargs), seasonal_args=args)

    specs = []
    scenes = doc["scenes"]
    if not isinstance(scenes, list) or not scenes:
        raise ValueError("'scenes' must be a non-empty list")
    for i, body in enumerate(scenes):
        if not isinstance(body, dict):
            raise ValueError(f"scene #{i} must be an object")
        extra = sorted(set(body) - {"scene_id", "date", "sensor", "features"})
        if extra:
            raise ValueError(f"scene #{i} has unknown keys: {extra}")
        for key in ("scene_id", "date"):
            if key not in body:
                raise ValueError(f"scene #{i} is missing {key!r}")
        kwargs = dict(base_kwargs)
        kwargs.update(
            scene_id=str(body["scene_id"]),
            date=dt.date.fromisoformat(body["date"]),
            sensor=SensorKind(body.get("sensor", base_kwargs["sensor"].value)),
            seed=child_seed(base_kwargs["seed"], i),
            features=_features_from_json(body.get("features", [])),
        )
        specs.append(SceneSpec(**kwargs))
    return SynthPlan(specs=tuple(specs))
