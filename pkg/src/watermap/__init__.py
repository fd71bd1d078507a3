"""Surface water mapping and reservoir analytics for multispectral archives."""

from .core import (
    AreaRecord,
    BandRole,
    ClassLabel,
    ClassMap,
    ConfusionMatrix,
    DegenerateInputError,
    FormatError,
    Grid,
    ManifestEntry,
    ReflectanceScene,
    SceneManifest,
    SensorKind,
    UndefinedMetricError,
    WaterMapError,
    pixel_area_km2,
)

__version__ = "0.1.0"

__all__ = [
    "AreaRecord",
    "BandRole",
    "ClassLabel",
    "ClassMap",
    "ConfusionMatrix",
    "DegenerateInputError",
    "FormatError",
    "Grid",
    "ManifestEntry",
    "ReflectanceScene",
    "SceneManifest",
    "SensorKind",
    "UndefinedMetricError",
    "WaterMapError",
    "pixel_area_km2",
    "__version__",
]
