"""Sub-pixel boundary refinement by two-endmember linear unmixing.

Water/land boundary pixels are mixtures of two spectra. For every pixel in
the mixed region (water or land touching the opposite class within its
8-neighborhood) we pick local endmembers from a surrounding window, solve a
fully constrained two-endmember least-squares problem for the water
fraction, and relabel the pixel by thresholding that fraction.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    ClassLabel,
    ClassMap,
    DegenerateInputError,
    FormatError,
    Grid,
    ReflectanceScene,
)

log = logging.getLogger(__name__)

# A water-fraction grid: c_w on refined pixels, nodata elsewhere.
AbundanceMap = Grid

ABUNDANCE_NODATA = -9999.0


@dataclass(frozen=True)
class UnmixConfig:
    """Window size and relabel threshold for boundary refinement."""

    window: int = 5
    abundance_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be an odd integer >= 3, got {self.window}")
        if not (0.0 < self.abundance_threshold < 1.0):
            raise ValueError(
                f"abundance_threshold must be in (0, 1), got {self.abundance_threshold}"
            )

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "UnmixConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise FormatError(f"unknown unmix config keys: {unknown}")
        kwargs: dict = {}
        for key, value in raw.items():
            try:
                kwargs[key] = int(value) if key == "window" else float(value)
            except ValueError as exc:
                raise FormatError(f"config key {key}: bad number {value!r}") from exc
        return cls(**kwargs)


def _dilate8(mask: np.ndarray) -> np.ndarray:
    """True where any of the 8 neighbors is true (center excluded)."""
    p = np.pad(mask, 1, mode="constant", constant_values=False)
    h, w = mask.shape
    out = np.zeros_like(mask)
    for dr in (0, 1, 2):
        for dc in (0, 1, 2):
            if dr == 1 and dc == 1:
                continue
            out |= p[dr : dr + h, dc : dc + w]
    return out


def mixed_region(cmap: ClassMap) -> np.ndarray:
    """Water and land pixels 8-adjacent to at least one pixel of the opposite class."""
    water = cmap.mask(ClassLabel.WATER)
    land = cmap.mask(ClassLabel.LAND)
    return (water & _dilate8(land)) | (land & _dilate8(water))


def fcls2(r: np.ndarray, e_w: np.ndarray, e_l: np.ndarray) -> float:
    """Water fraction of spectrum ``r`` between endmembers ``e_w`` and ``e_l``.

    Solves min_c || r - c*e_w - (1-c)*e_l ||^2 subject to 0 <= c <= 1,
    whose closed form is the projection of r onto the endmember segment::

        c = clamp( <r - e_l, e_w - e_l> / ||e_w - e_l||^2, 0, 1 )

    Raises DegenerateInputError when the endmembers coincide.
    """
    r = np.asarray(r, dtype=np.float64).ravel()
    e_w = np.asarray(e_w, dtype=np.float64).ravel()
    e_l = np.asarray(e_l, dtype=np.float64).ravel()
    if not (r.shape == e_w.shape == e_l.shape):
        raise ValueError(
            f"spectra must share a shape, got {r.shape}, {e_w.shape}, {e_l.shape}"
        )
    d = e_w - e_l
    denom = float(np.dot(d, d))
    if denom == 0.0:
        raise DegenerateInputError("endmembers coincide; water fraction is undefined")
    c = float(np.dot(r - e_l, d)) / denom
    return min(1.0, max(0.0, c))


def find_endmembers(
    scene: ReflectanceScene,
    cmap: ClassMap,
    pixel: tuple[int, int],
    window: int = 5,
    mixed: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Local water and land endmember spectra around ``pixel``.

    Candidates are ranked by their summed reflectance over the six bands:
    the water endmember is the lowest-sum non-mixed water pixel in the
    window, the land endmember the highest-sum non-mixed land pixel. When a
    class has no non-mixed candidate the search falls back to the
    unrestricted minimum/maximum over all valid pixels in the window. The
    window is clipped at image borders. Raises DegenerateInputError when
    the window holds no valid pixel.

    ``mixed`` lets callers pass a precomputed mixed_region(cmap) to avoid
    recomputing it per pixel.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be an odd integer >= 3, got {window}")
    if cmap.shape != scene.shape:
        raise ValueError(f"class map {cmap.shape} does not match scene {scene.shape}")
    row, col = pixel
    if not (0 <= row < scene.height and 0 <= col < scene.width):
        raise ValueError(f"pixel {pixel} outside {scene.shape}")
    if mixed is None:
        mixed = mixed_region(cmap)

    half = window // 2
    r0, r1 = max(0, row - half), min(scene.height, row + half + 1)
    c0, c1 = max(0, col - half), min(scene.width, col + half + 1)

    cube = scene.band_cube()[:, r0:r1, c0:c1].astype(np.float64)
    sums = cube.sum(axis=0).ravel()
    valid = scene.valid_mask()[r0:r1, c0:c1].ravel()
    labels = cmap.labels[r0:r1, c0:c1].ravel()
    is_mixed = mixed[r0:r1, c0:c1].ravel()
    if not valid.any():
        raise DegenerateInputError(f"window around {pixel} holds no valid pixel")

    spectra = cube.reshape(6, -1)

    def pick(cand: np.ndarray, take_max: bool) -> np.ndarray:
        use = cand if cand.any() else valid
        ranked = np.where(use, sums, -np.inf if take_max else np.inf)
        idx = int(np.argmax(ranked) if take_max else np.argmin(ranked))
        return spectra[:, idx].copy()

    water_cand = valid & ~is_mixed & (labels == np.uint8(ClassLabel.WATER))
    land_cand = valid & ~is_mixed & (labels == np.uint8(ClassLabel.LAND))
    return pick(water_cand, take_max=False), pick(land_cand, take_max=True)


def refine_boundary(
    scene: ReflectanceScene, cmap: ClassMap, config: UnmixConfig | None = None
) -> tuple[ClassMap, AbundanceMap]:
    """Relabel mixed-region pixels by their unmixed water fraction.

    Every mixed pixel becomes water when its fraction reaches the
    threshold, land otherwise; all other pixels are untouched. Decisions
    read only the input map. Pixels whose endmember search degenerates are
    left unchanged with nodata abundance and counted in a warning.
    """
    config = config or UnmixConfig()
    if cmap.shape != scene.shape:
        raise ValueError(f"class map {cmap.shape} does not match scene {scene.shape}")

    out_labels = cmap.labels.copy()
    abundance = np.full(scene.shape, np.float32(ABUNDANCE_NODATA))
    mixed = mixed_region(cmap)
    rows, cols = np.nonzero(mixed)
    n = rows.size
    if n == 0:
        return (
            ClassMap(cmap.scene_id, cmap.date, out_labels, cmap.pixel_size_m),
            Grid(abundance, cmap.pixel_size_m, ABUNDANCE_NODATA),
        )

    w = config.window
    half = w // 2
    cube = scene.band_cube().astype(np.float64)
    sums = cube.sum(axis=0)
    valid = scene.valid_mask()

    # Window gathering: pad so every mixed pixel has a full w x w view, with
    # padding cells marked invalid so they are never selected.
    sums_p = np.pad(sums, half, mode="constant", constant_values=0.0)
    valid_p = np.pad(valid, half, mode="constant", constant_values=False)
    labels_p = np.pad(
        cmap.labels, half, mode="constant", constant_values=np.uint8(ClassLabel.NODATA)
    )
    mixed_p = np.pad(mixed, half, mode="constant", constant_values=False)

    def windows(padded: np.ndarray) -> np.ndarray:
        return sliding_window_view(padded, (w, w))[rows, cols].reshape(n, w * w)

    wsums = windows(sums_p)
    wvalid = windows(valid_p)
    wlabels = windows(labels_p)
    wmixed = windows(mixed_p)

    water_cand = wvalid & ~wmixed & (wlabels == np.uint8(ClassLabel.WATER))
    land_cand = wvalid & ~wmixed & (wlabels == np.uint8(ClassLabel.LAND))
    any_valid = wvalid.any(axis=1)

    def pick(cand: np.ndarray, take_max: bool) -> np.ndarray:
        has = cand.any(axis=1)
        use = np.where(has[:, None], cand, wvalid)
        fill = -np.inf if take_max else np.inf
        ranked = np.where(use, wsums, fill)
        return np.argmax(ranked, axis=1) if take_max else np.argmin(ranked, axis=1)

    iw = pick(water_cand, take_max=False)
    il = pick(land_cand, take_max=True)

    def gather(flat_idx: np.ndarray) -> np.ndarray:
        dr, dc = np.divmod(flat_idx, w)
        return cube[:, rows + dr - half, cols + dc - half].T  # (n, 6)

    e_w = gather(iw)
    e_l = gather(il)
    r = cube[:, rows, cols].T
    d = e_w - e_l
    denom = np.einsum("ij,ij->i", d, d)
    numer = np.einsum("ij,ij->i", r - e_l, d)
    ok = any_valid & (denom > 0.0)
    skipped = n - int(np.count_nonzero(ok))
    if skipped:
        log.warning(
            "%s: %d mixed pixel(s) left unrefined (degenerate endmember search)",
            cmap.scene_id,
            skipped,
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.clip(numer / np.where(denom > 0.0, denom, 1.0), 0.0, 1.0)

    rr, cc, cw = rows[ok], cols[ok], c[ok]
    out_labels[rr, cc] = np.where(
        cw >= config.abundance_threshold,
        np.uint8(ClassLabel.WATER),
        np.uint8(ClassLabel.LAND),
    )
    abundance[rr, cc] = cw.astype(np.float32)
    return (
        ClassMap(cmap.scene_id, cmap.date, out_labels, cmap.pixel_size_m),
        Grid(abundance, cmap.pixel_size_m, ABUNDANCE_NODATA),
    )
