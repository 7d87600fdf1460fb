"""Speckle statistics, resolution scales, SNR fitting, and focus metrics."""

import math

import numpy as np
import pytest
from scipy import ndimage

from ghostsim.analysis import (
    MIN_COHERENCE_CELLS,
    MIN_ENSEMBLE,
    ResolutionReport,
    SnrCurve,
    SpeckleEnsemble,
    blur_to_resolution,
    collect_speckle_ensemble,
    depth_sharpness_curve,
    fringe_spacing,
    ncc,
    sharpness,
    snr_curve_from_results,
    snr_of,
    snr_regions,
    speckle_stats,
    theoretical_resolution,
)
from ghostsim.config import ExperimentConfig
from ghostsim.errors import (
    DegenerateInput,
    InsufficientData,
    InvalidParameter,
    ShapeMismatch,
)
from ghostsim.field import GridSpec
from ghostsim.reconstruct import PlaneRef, ReconstructionResult
from ghostsim.scene import make_double_slit

# Geometry with enough coherence cells (about 3500) for stable statistics
# while staying cheap: 69 um speckles sampled at 16 um.
SPECKLE_CONFIG = ExperimentConfig(
    wavelength=632.8e-9,
    w0=740e-6,
    pitch=16e-6,
    nx=256,
    ny=256,
    mask_cx=64,
    mask_cy=64,
    macro_factor=3,
    L=0.25,
    detector="bucket",
    n_realizations=500,
    master_seed=2024,
)
PROBE_POINTS = ((128, 128), (100, 100), (150, 160), (128, 100), (96, 150))


@pytest.fixture(scope="module")
def ensemble():
    return collect_speckle_ensemble(SPECKLE_CONFIG, n=500, probe_points=PROBE_POINTS)


class TestResolution:
    def test_values_at_long_throw(self):
        # hand-check: 632.8e-9 * 0.84 / (pi * 740e-6) = 228.65 um
        res = theoretical_resolution(632.8e-9, 740e-6, 0.84)
        assert res.dx == pytest.approx(2.28646e-4, rel=1e-4)
        assert res.dz == pytest.approx(0.51909, rel=1e-3)
        assert res.dk == pytest.approx(1351.3514, rel=1e-6)
        assert res.product == pytest.approx(res.dx * res.dk, rel=1e-12)

    def test_values_at_short_throw(self):
        res = theoretical_resolution(632.8e-9, 740e-6, 0.11)
        assert res.dx == pytest.approx(2.99418e-5, rel=1e-4)
        assert res.product == pytest.approx(0.0404617, rel=1e-3)

    def test_scaling_with_distance(self):
        a = theoretical_resolution(632.8e-9, 500e-6, 0.2)
        b = theoretical_resolution(632.8e-9, 500e-6, 0.4)
        assert b.dx == pytest.approx(2 * a.dx, rel=1e-12)
        assert b.dz == pytest.approx(4 * a.dz, rel=1e-12)
        assert b.dk == a.dk

    def test_rejects_nonpositive_arguments(self):
        for args in ((0.0, 1e-3, 0.1), (633e-9, -1e-3, 0.1), (633e-9, 1e-3, 0.0)):
            with pytest.raises(InvalidParameter):
                theoretical_resolution(*args)

    def test_report_validates(self):
        with pytest.raises(InvalidParameter):
            ResolutionReport(dx=-1e-4, dz=0.5, dk=1e3, product=0.1)


class TestSpeckleEnsemble:
    def test_moments_are_sane(self, ensemble):
        mean = ensemble.mean()
        assert mean[128, 128] > 0
        assert np.all(ensemble.variance() >= 0)
        assert ensemble.n == 500
        for trace in ensemble.traces.values():
            assert len(trace) == 500
            assert np.all(trace >= 0)

    def test_autocovariance_peaks_at_zero_shift(self, ensemble):
        cov = ensemble.autocovariance()
        assert np.argmax(cov) == np.ravel_multi_index((128, 128), cov.shape)

    def test_autocovariance_is_point_symmetric(self, ensemble):
        # circular autocorrelation of a real field is exactly even
        cov = ensemble.autocovariance()
        mirrored = np.roll(cov[::-1, ::-1], (1, 1), axis=(0, 1))
        assert np.allclose(cov, mirrored, atol=1e-9 * cov.max())


class TestSpeckleStats:
    def test_matches_gaussian_source_theory(self, ensemble):
        stats = speckle_stats(ensemble)
        res = theoretical_resolution(
            SPECKLE_CONFIG.wavelength, SPECKLE_CONFIG.w0, SPECKLE_CONFIG.L
        )
        # fully developed speckle: contrast 1, negative-exponential point
        # statistics, coherence width lambda z / (pi w0); width reads a few
        # percent high at 4 px per speckle
        assert abs(stats.contrast - 1.0) < 0.05
        assert abs(stats.coherence_width - res.dx) / res.dx < 0.15
        assert stats.exp_fit_pvalue > 0.01
        assert stats.n_realizations == 500

    def test_rejects_small_ensembles(self, ensemble):
        starved = SpeckleEnsemble(
            grid=ensemble.grid,
            z=ensemble.z,
            n=MIN_ENSEMBLE - 1,
            sum_I=ensemble.sum_I,
            sum_I2=ensemble.sum_I2,
            sum_spec=ensemble.sum_spec,
            traces=ensemble.traces,
        )
        with pytest.raises(InsufficientData, match="realizations"):
            speckle_stats(starved)

    def test_rejects_region_with_few_coherence_cells(self, ensemble):
        region = np.zeros(ensemble.grid.shape, dtype=bool)
        region[118:138, 118:138] = True
        with pytest.raises(InsufficientData, match="coherence cells"):
            speckle_stats(ensemble, region=region)

    def test_rejects_region_shape_mismatch(self, ensemble):
        with pytest.raises(ShapeMismatch):
            speckle_stats(ensemble, region=np.ones((8, 8), dtype=bool))

    def test_rejects_flat_autocovariance(self):
        # spatially uniform intensity never falls to half maximum
        grid = GridSpec(nx=32, ny=32, pitch=1e-5)
        ones = np.ones(grid.shape)
        spec = np.abs(np.fft.rfft2(ones)) ** 2
        flat = SpeckleEnsemble(
            grid=grid,
            z=0.1,
            n=200,
            sum_I=200 * ones,
            sum_I2=200 * ones,
            sum_spec=200 * spec,
            traces={(16, 16): np.ones(200)},
        )
        with pytest.raises(InsufficientData, match="decay"):
            speckle_stats(flat)


class TestSharpness:
    def _image(self):
        rng = np.random.default_rng(7)
        return ndimage.gaussian_filter(rng.standard_normal((64, 64)), 2.0)

    def test_affine_invariance(self):
        img = self._image()
        assert sharpness(3.5 * img + 0.7) == pytest.approx(sharpness(img), rel=1e-12)

    def test_blur_reduces_sharpness(self):
        img = self._image()
        assert sharpness(ndimage.gaussian_filter(img, 3.0)) < sharpness(img)

    def test_rejects_constant_image(self):
        with pytest.raises(DegenerateInput):
            sharpness(np.full((16, 16), 2.0))

    def test_rejects_support_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            sharpness(self._image(), support=np.ones((8, 8), dtype=bool))

    def test_support_restricts_the_metric(self):
        img = np.zeros((64, 64))
        img[8:24, 8:24] = self._image()[8:24, 8:24]
        support = np.zeros((64, 64), dtype=bool)
        support[4:28, 4:28] = True
        full = sharpness(img)
        masked = sharpness(img, support=support)
        assert masked != full


class TestNcc:
    def test_self_similarity(self):
        img = np.random.default_rng(3).standard_normal((32, 32))
        assert ncc(img, img) == pytest.approx(1.0, abs=1e-12)
        assert ncc(img, 2.0 * img + 5.0) == pytest.approx(1.0, abs=1e-12)
        assert ncc(img, -img) == pytest.approx(-1.0, abs=1e-12)

    def test_region_selection(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((2, 32, 32))
        region = np.zeros((32, 32), dtype=bool)
        region[8:24, 8:24] = True
        assert ncc(a, b, region) == pytest.approx(ncc(a[8:24, 8:24], b[8:24, 8:24]))

    def test_rejects_constant_input(self):
        with pytest.raises(DegenerateInput):
            ncc(np.ones((8, 8)), np.random.default_rng(0).standard_normal((8, 8)))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ncc(np.zeros((8, 8)), np.zeros((9, 9)))


class TestFringeSpacing:
    DK = 2 * np.pi / (512 * 8e-6)  # conjugate step of a 512 x 8 um grid

    def test_exact_tone(self):
        d = 400e-6  # an integer number of spectral bins: no leakage
        k = np.arange(512) * self.DK
        spacing = fringe_spacing(1.0 + np.cos(k * d), self.DK)
        assert spacing == pytest.approx(2 * np.pi / d, rel=1e-9)

    def test_interpolated_tone(self):
        d = 393e-6  # lands between bins, exercises the apex fit
        k = np.arange(512) * self.DK
        spacing = fringe_spacing(1.0 + np.cos(k * d), self.DK)
        assert spacing == pytest.approx(2 * np.pi / d, rel=2e-2)

    def test_envelope_masking(self):
        # double-slit intensity: the aperture-width lump in the delay domain
        # must be masked or it wins the argmax
        a, d = 170e-6, 400e-6
        k = (np.arange(512) - 256) * self.DK
        profile = np.sinc(k * a / (2 * np.pi)) ** 2 * (1.0 + np.cos(k * d))
        spacing = fringe_spacing(profile, self.DK, min_feature=a)
        assert spacing == pytest.approx(2 * np.pi / d, rel=2e-2)

    def test_rejects_oversized_feature(self):
        with pytest.raises(InsufficientData):
            fringe_spacing(np.ones(64), self.DK, min_feature=3e-3)


class TestSnr:
    GRID = GridSpec(nx=256, ny=256, pitch=8e-6)

    def _object(self):
        return make_double_slit(170e-6, 400e-6, 900e-6, self.GRID, 0.11)

    def test_regions_are_disjoint_and_clear(self):
        obj = self._object()
        signal, background = snr_regions(obj, dx=30e-6)
        assert signal.any() and background.any()
        assert not (signal & background).any()
        fat = ndimage.binary_dilation(obj.support, iterations=12)
        assert not (background & fat).any()
        # background stays inside the illuminated center
        rows, cols = np.nonzero(background)
        assert rows.min() >= 64 and rows.max() < 192
        assert cols.min() >= 64 and cols.max() < 192

    def test_snr_of_known_field(self):
        rng = np.random.default_rng(11)
        obj = self._object()
        signal, background = snr_regions(obj, dx=30e-6)
        G = rng.standard_normal(self.GRID.shape)
        G[signal] = 4.0
        snr = snr_of(G, signal, background)
        assert snr == pytest.approx(4.0 / G[background].std(), rel=1e-12)

    def test_snr_of_rejects_flat_background(self):
        obj = self._object()
        signal, background = snr_regions(obj, dx=30e-6)
        with pytest.raises(DegenerateInput):
            snr_of(np.zeros(self.GRID.shape), signal, background)

    def test_curve_needs_two_points(self):
        result = ReconstructionResult(
            G=np.zeros((4, 4)),
            plane=PlaneRef("fresnel", 0.11),
            n_used=100,
            grid=GridSpec(nx=4, ny=4, pitch=8e-6),
        )
        cfg = SPECKLE_CONFIG
        with pytest.raises(InsufficientData):
            snr_curve_from_results([(100, result)], self._object(), cfg)

    def test_curve_validates_points(self):
        with pytest.raises(InvalidParameter, match="increasing"):
            SnrCurve(points=((500, 3.0), (250, 2.0)), slope=0.5, intercept=0.0, n_s_estimate=100.0)
        with pytest.raises(InvalidParameter, match="non-negative"):
            SnrCurve(points=((250, -1.0), (500, 2.0)), slope=0.5, intercept=0.0, n_s_estimate=100.0)


class TestBlur:
    def test_kernel_width(self):
        # a point source blurs to second moment (width / sqrt 2)^2
        img = np.zeros((129, 129))
        img[64, 64] = 1.0
        width, pitch = 80e-6, 8e-6
        out = blur_to_resolution(img, width, pitch)
        x = (np.arange(129) - 64) * pitch
        marginal = out.sum(axis=0)
        second = np.sum(marginal * x**2) / marginal.sum()
        assert np.sqrt(second) == pytest.approx(width / np.sqrt(2), rel=0.01)

    def test_rejects_bad_scales(self):
        with pytest.raises(InvalidParameter):
            blur_to_resolution(np.ones((8, 8)), 0.0, 1e-5)
        with pytest.raises(InvalidParameter):
            blur_to_resolution(np.ones((8, 8)), 1e-5, -1.0)


class TestDepthCurve:
    def _result(self, plane, seed):
        G = np.random.default_rng(seed).standard_normal((16, 16))
        return ReconstructionResult(
            G=G, plane=plane, n_used=50, grid=GridSpec(nx=16, ny=16, pitch=1e-5)
        )

    def test_pairs_planes_with_sharpness(self):
        results = [
            self._result(PlaneRef("fresnel", 0.10), 0),
            self._result(PlaneRef("fresnel", 0.12), 1),
        ]
        support = np.ones((16, 16), dtype=bool)
        curve = depth_sharpness_curve(results, support)
        assert [z for z, _ in curve] == [0.10, 0.12]
        assert curve[0][1] == pytest.approx(sharpness(results[0].G, support))

    def test_rejects_fourier_planes(self):
        with pytest.raises(InvalidParameter):
            depth_sharpness_curve([self._result(PlaneRef("fourier"), 0)], np.ones((16, 16), dtype=bool))
