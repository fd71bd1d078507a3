"""Classification stage: tc4, thresholding, water index, slope, ice, assembly.

Derived constants are checked against independent oracles implemented here
with plain loops, not against the vectorized production code paths.
"""
import math
from fractions import Fraction

import numpy as np
import pytest

from watermap.classify import (
    ClassifyConfig,
    TC4_COEFFICIENTS,
    classify_scene,
    cloud_fraction,
    cloud_mask,
    max_visible,
    otsu_threshold,
    shadow_filter,
    slope_from_dem,
    snow_ice_filter,
    tc4,
    water_index,
)
from watermap.core import (
    ClassLabel,
    DegenerateInputError,
    FormatError,
    Grid,
    SensorKind,
)
from conftest import (
    CLOUD,
    LAND,
    SHADOW,
    SNOW_DIM,
    WATER,
    flat_dem,
    labels_map,
    scene_from_cube,
    uniform_scene,
    zero_slope,
)


def oracle_tc4(cube: np.ndarray, coefficients: np.ndarray) -> np.ndarray:
    """Per-pixel dot product via explicit loops."""
    _, h, w = cube.shape
    out = np.empty((h, w), dtype=np.float64)
    for r in range(h):
        for c in range(w):
            out[r, c] = sum(
                float(coefficients[b]) * float(cube[b, r, c]) for b in range(6)
            )
    return out


def oracle_otsu(samples: np.ndarray, bins: int = 256) -> float:
    """Exhaustive between-class-variance scan in exact arithmetic.

    Bin centers are dyadic rationals, so scaling them to integers makes
    every variance comparison exact: plateaus from empty bins become true
    ties and the lowest-edge rule is exercised for real instead of being
    decided by float rounding noise. The variance at cut k is

        (s0*n1 - s1*n0)^2 / (n0*n1)

    up to a k-independent factor; candidates compare by cross
    multiplication.
    """
    s = np.asarray(samples, dtype=np.float64).ravel()
    s = s[np.isfinite(s)]
    hist, edges = np.histogram(s, bins=bins, range=(float(s.min()), float(s.max())))
    fractions = [Fraction(float(c)) for c in (edges[:-1] + edges[1:]) / 2.0]
    scale = math.lcm(*(f.denominator for f in fractions))
    centers = [int(f * scale) for f in fractions]
    counts = [int(c) for c in hist]
    total = sum(counts)
    s_total = sum(n * c for n, c in zip(counts, centers))
    best = None  # (numerator^2, denominator, k)
    n0, s0 = 0, 0
    for k in range(1, bins):
        n0 += counts[k - 1]
        s0 += counts[k - 1] * centers[k - 1]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = s0 * n1 - (s_total - s0) * n0
        den = n0 * n1
        if best is None or num * num * best[1] > best[0] * den:
            best = (num * num, den, k)
    return float(edges[best[2]])


def oracle_slope_deg(z: np.ndarray, cell: float) -> np.ndarray:
    """Scalar 3x3 slope with edge replication."""
    h, w = z.shape

    def at(r, c):
        return float(z[min(max(r, 0), h - 1), min(max(c, 0), w - 1)])

    out = np.empty((h, w), dtype=np.float64)
    for r in range(h):
        for c in range(w):
            dzdx = (
                (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1))
            ) / (8 * cell)
            dzdy = (
                (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1))
            ) / (8 * cell)
            out[r, c] = math.degrees(math.atan(math.hypot(dzdx, dzdy)))
    return out


class TestTc4:
    def test_all_ones_gives_coefficient_sum(self):
        for sensor, expected in ((SensorKind.TM, -0.4337), (SensorKind.OLI, -0.4334)):
            scene = uniform_scene([1.0] * 6, sensor=sensor)
            got = tc4(scene).data
            np.testing.assert_allclose(got, expected, atol=1e-6)

    def test_matches_dot_product_oracle(self):
        rng = np.random.default_rng(42)
        for sensor in SensorKind:
            cube = rng.uniform(0.0, 1.5, size=(6, 8, 9)).astype(np.float32)
            scene = scene_from_cube(cube, sensor=sensor)
            expected = oracle_tc4(cube, TC4_COEFFICIENTS[sensor])
            np.testing.assert_allclose(tc4(scene).data, expected, atol=1e-6)

    def test_invalid_band_pixel_becomes_nodata(self):
        cube = np.full((6, 2, 2), 0.5, dtype=np.float32)
        cube[3, 0, 1] = -9999.0
        g = tc4(scene_from_cube(cube))
        assert g.data[0, 1] == np.float32(-9999.0)
        assert g.valid_mask()[0, 0]
        assert not g.valid_mask()[0, 1]

    def test_bright_cloud_pixel_value(self):
        g = tc4(uniform_scene(CLOUD, 1, 1))
        assert g.data[0, 0] == pytest.approx(-0.21742, abs=1e-6)


class TestOtsu:
    def test_matches_exhaustive_scan_on_random_histograms(self):
        rng = np.random.default_rng(2024)
        for _ in range(30):
            n = int(rng.integers(50, 400))
            lo = rng.normal(0.2, 0.05, size=n)
            hi = rng.normal(0.8, 0.08, size=n // 2 + 1)
            s = np.concatenate([lo, hi])
            assert otsu_threshold(s) == oracle_otsu(s)

    def test_two_cluster_unit_interval(self):
        s = np.array([0.0] * 10 + [1.0] * 5)
        assert otsu_threshold(s) == 1.0 / 256.0

    def test_ties_take_lowest_edge(self):
        # symmetric two-spike histogram: every interior cut between the
        # spikes has identical between-class variance
        s = np.array([0.0, 0.0, 1.0, 1.0])
        assert otsu_threshold(s) == oracle_otsu(s) == 1.0 / 256.0

    def test_degenerate_inputs_rejected(self):
        with pytest.raises(DegenerateInputError):
            otsu_threshold(np.array([0.5]))
        with pytest.raises(DegenerateInputError):
            otsu_threshold(np.full(100, 0.3))
        with pytest.raises(DegenerateInputError):
            otsu_threshold(np.array([np.nan, np.inf, 0.3]))

    def test_nonfinite_samples_ignored(self):
        s = np.array([0.0, 1.0, np.nan, np.inf, 0.0])
        assert otsu_threshold(s) == 1.0 / 256.0

    def test_bad_bins_rejected(self):
        with pytest.raises(ValueError):
            otsu_threshold(np.array([0.0, 1.0]), bins=1)


class TestCloudMask:
    def test_threshold_is_inclusive(self):
        g = Grid(np.array([[-0.046, -0.0459], [-0.5, 0.2]], dtype=np.float32))
        m = cloud_mask(g, -0.046)
        assert m.tolist() == [[True, False], [True, False]]

    def test_bright_cloud_spectrum_is_cloud(self):
        scene = uniform_scene(CLOUD)
        assert cloud_mask(tc4(scene), -0.046).all()

    def test_nodata_never_cloud(self):
        g = Grid(np.array([[-9999.0, -1.0]], dtype=np.float32))
        assert cloud_mask(g, -0.046).tolist() == [[False, True]]

    def test_nonfinite_threshold_rejected(self):
        g = Grid(np.zeros((1, 1), dtype=np.float32))
        with pytest.raises(ValueError):
            cloud_mask(g, float("nan"))


class TestWaterIndex:
    def test_template_spectra(self):
        assert water_index(uniform_scene(WATER, 1, 1))[0, 0]
        assert not water_index(uniform_scene(LAND, 1, 1))[0, 0]
        # shadow mimics water in this test; slope removes it later
        assert water_index(uniform_scene(SHADOW, 1, 1))[0, 0]

    def test_equality_is_not_water(self):
        assert not water_index(uniform_scene([0.2, 0.1, 0.1, 0.1, 0.2, 0.1], 1, 1))[0, 0]

    def test_invalid_pixel_is_not_water(self):
        cube = np.array(WATER, dtype=np.float32)[:, None, None] * np.ones((6, 1, 2), np.float32)
        cube[0, 0, 1] = 1.6  # above the reflectance ceiling
        assert water_index(scene_from_cube(cube)).tolist() == [[True, False]]

    def test_positive_scale_invariance(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            cube = rng.uniform(0.0, 0.6, size=(6, 5, 5)).astype(np.float32)
            lam = float(rng.uniform(0.1, 2.5))
            base = water_index(scene_from_cube(cube))
            scaled = water_index(scene_from_cube(cube * np.float32(lam)))
            np.testing.assert_array_equal(base, scaled)


class TestSlope:
    def test_flat_dem_is_zero(self):
        np.testing.assert_array_equal(slope_from_dem(flat_dem(4, 5)).data, 0.0)

    def test_unit_ramp_interior_is_45_degrees(self):
        z = np.tile(np.arange(8, dtype=np.float32) * 30.0, (6, 1))
        g = slope_from_dem(Grid(z, 30.0))
        np.testing.assert_allclose(g.data[:, 1:-1], 45.0, atol=1e-4)
        # replicated border sees half the gradient
        np.testing.assert_allclose(g.data[:, 0], math.degrees(math.atan(0.5)), atol=1e-4)

    def test_double_ramp_interior_angle(self):
        rows = np.arange(8, dtype=np.float32) * 30.0
        z = rows[:, None] + rows[None, :]
        g = slope_from_dem(Grid(z, 30.0))
        np.testing.assert_allclose(
            g.data[1:-1, 1:-1], math.degrees(math.atan(math.sqrt(2.0))), atol=1e-4
        )

    def test_pixel_size_scales_gradient(self):
        z = np.tile(np.arange(6, dtype=np.float32) * 10.0, (4, 1))
        g = slope_from_dem(Grid(z, 10.0))
        np.testing.assert_allclose(g.data[:, 1:-1], 45.0, atol=1e-4)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(5)
        z = rng.uniform(0, 500, size=(7, 9)).astype(np.float32)
        g = slope_from_dem(Grid(z, 30.0))
        np.testing.assert_allclose(g.data, oracle_slope_deg(z, 30.0), atol=1e-4)

    def test_invalid_sample_poisons_neighborhood(self):
        z = np.full((5, 5), 100.0, dtype=np.float32)
        z[2, 2] = -9999.0
        g = slope_from_dem(Grid(z, 30.0))
        assert not g.valid_mask()[1:4, 1:4].any()
        assert g.valid_mask()[0, :].all()
        assert g.data[0, 0] == 0.0


class TestShadowFilter:
    def test_strictly_greater_than_cutoff(self):
        water = np.ones((1, 3), dtype=bool)
        slope = Grid(np.array([[3.9, 4.0, 4.1]], dtype=np.float32))
        kept = shadow_filter(water, slope, 4.0)
        assert kept.tolist() == [[True, True, False]]

    def test_invalid_slope_keeps_water(self):
        water = np.ones((1, 2), dtype=bool)
        slope = Grid(np.array([[-9999.0, 50.0]], dtype=np.float32))
        assert shadow_filter(water, slope, 4.0).tolist() == [[True, False]]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            shadow_filter(np.ones((2, 2), dtype=bool), flat_dem(3, 3), 4.0)


class TestSnowIceFilter:
    def test_threshold_is_inclusive(self):
        cube = np.zeros((6, 1, 3), dtype=np.float32)
        cube[0] = [0.1499, 0.15, 0.151]  # blue carries the visible maximum
        scene = scene_from_cube(cube)
        water = np.ones((1, 3), dtype=bool)
        kept, ice = snow_ice_filter(water, scene, 0.15)
        assert kept.tolist() == [[True, False, False]]
        assert ice.tolist() == [[False, True, True]]

    def test_only_water_pixels_eligible(self):
        scene = uniform_scene(SNOW_DIM, 1, 2)
        water = np.array([[True, False]])
        kept, ice = snow_ice_filter(water, scene, 0.15)
        assert ice.tolist() == [[True, False]]
        assert not kept.any()

    def test_max_visible_ignores_nir_swir(self):
        scene = uniform_scene([0.1, 0.2, 0.3, 0.9, 0.9, 0.9], 1, 1)
        assert max_visible(scene)[0, 0] == np.float32(0.3)


class TestClassifyScene:
    def classify_uniform(self, spectrum, **kwargs):
        scene = uniform_scene(spectrum, 4, 4)
        return classify_scene(scene, zero_slope(4, 4), **kwargs)

    def test_template_spectra_land_water_cloud(self):
        assert (self.classify_uniform(WATER).labels == ClassLabel.WATER).all()
        assert (self.classify_uniform(LAND).labels == ClassLabel.LAND).all()
        assert (self.classify_uniform(CLOUD).labels == ClassLabel.CLOUD).all()

    def test_cloud_takes_precedence_over_water_index(self):
        # the cloud template passes the visible-over-swir test too
        scene = uniform_scene(CLOUD, 2, 2)
        assert water_index(scene).all()
        cmap = classify_scene(scene, zero_slope(2, 2))
        assert (cmap.labels == ClassLabel.CLOUD).all()

    def test_dim_snow_is_ice_not_cloud(self):
        cmap = self.classify_uniform(SNOW_DIM)
        assert (cmap.labels == ClassLabel.ICE_SNOW).all()

    def test_shadow_on_steep_slope_becomes_land(self):
        scene = uniform_scene(SHADOW, 6, 8)
        z = np.tile(np.arange(8, dtype=np.float32) * 30.0, (6, 1))
        cmap = classify_scene(scene, slope_from_dem(Grid(z, 30.0)))
        assert (cmap.labels == ClassLabel.LAND).all()
        flat = classify_scene(scene, zero_slope(6, 8))
        assert (flat.labels == ClassLabel.WATER).all()

    def test_nodata_band_pixel_is_nodata(self):
        cube = np.broadcast_to(
            np.array(WATER, np.float32)[:, None, None], (6, 3, 3)
        ).copy()
        cube[2, 1, 1] = -9999.0
        cmap = classify_scene(scene_from_cube(cube), zero_slope(3, 3))
        assert cmap.labels[1, 1] == ClassLabel.NODATA
        assert (cmap.labels == ClassLabel.WATER).sum() == 8

    def test_slope_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            classify_scene(uniform_scene(WATER, 2, 2), zero_slope(3, 3))

    def test_per_scene_otsu_splits_bimodal_tc4(self):
        cube = np.empty((6, 2, 4), dtype=np.float32)
        cube[:, 0, :] = np.array(CLOUD, np.float32)[:, None]
        cube[:, 1, :] = np.array(LAND, np.float32)[:, None]
        scene = scene_from_cube(cube)
        cfg = ClassifyConfig(per_scene_otsu=True)
        cmap = classify_scene(scene, zero_slope(2, 4), cfg)
        assert (cmap.labels[0] == ClassLabel.CLOUD).all()
        assert (cmap.labels[1] == ClassLabel.LAND).all()

    def test_per_scene_otsu_degenerate_scene_raises(self):
        with pytest.raises(DegenerateInputError):
            self.classify_uniform(WATER, config=ClassifyConfig(per_scene_otsu=True))


class TestCloudFraction:
    def test_counts_cloud_inside_roi(self):
        cmap = labels_map([[2, 2, 0], [1, 2, 0]])
        roi = np.array([[True, True, False], [True, True, False]])
        assert cloud_fraction(cmap, roi) == pytest.approx(0.75)

    def test_nodata_counts_in_denominator(self):
        cmap = labels_map([[2, 255]])
        assert cloud_fraction(cmap, np.ones((1, 2), bool)) == pytest.approx(0.5)

    def test_empty_roi_rejected(self):
        with pytest.raises(DegenerateInputError):
            cloud_fraction(labels_map([[0]]), np.zeros((1, 1), bool))


class TestClassifyConfig:
    def test_defaults(self):
        cfg = ClassifyConfig()
        assert cfg.tc4_threshold == -0.046
        assert cfg.slope_threshold_deg == 4.0
        assert cfg.maxvis_threshold == 0.15
        assert cfg.cloud_skip_fraction == 0.8
        assert not cfg.per_scene_otsu

    def test_from_mapping(self):
        cfg = ClassifyConfig.from_mapping(
            {"tc4_threshold": "-0.05", "per_scene_otsu": "yes"}
        )
        assert cfg.tc4_threshold == -0.05
        assert cfg.per_scene_otsu

    def test_unknown_key_rejected(self):
        with pytest.raises(FormatError, match="unknown classify config keys"):
            ClassifyConfig.from_mapping({"tc4": "-0.05"})

    def test_bad_number_rejected(self):
        with pytest.raises(FormatError, match="bad number"):
            ClassifyConfig.from_mapping({"tc4_threshold": "cold"})

    def test_bad_bool_rejected(self):
        with pytest.raises(FormatError, match="boolean"):
            ClassifyConfig.from_mapping({"per_scene_otsu": "maybe"})

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            ClassifyConfig(cloud_skip_fraction=1.5)
        with pytest.raises(ValueError):
            ClassifyConfig(slope_threshold_deg=-1.0)
