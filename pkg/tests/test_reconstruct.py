import dataclasses

import numpy as np
import pytest

from ghostsim.config import ExperimentConfig
from ghostsim.errors import (
    DetectorKindMismatch,
    GridMismatch,
    InsufficientSamples,
    InvalidParameter,
    PlaneMismatch,
    SamplingViolation,
    UnsupportedFormat,
)
from ghostsim.field import GridSpec
from ghostsim.io import write_pgm
from ghostsim.reconstruct import (
    CorrelationAccumulator,
    PlaneRef,
    config_matches_records,
    depth_stack,
    effective_workers,
    read_records,
    reconstruct_at,
    replay_with_checkpoints,
    run_gd,
    run_gi,
    run_gi_with_checkpoints,
    select_records,
    verify_record,
    write_records,
)

# small but physically valid acquisition: 1.024 mm window, slits resolved
# by the 39 um speckle at L = 6 cm
CONFIG = ExperimentConfig(
    wavelength=632.8e-9,
    w0=250e-6,
    pitch=16e-6,
    nx=64,
    ny=64,
    mask_cx=16,
    mask_cy=16,
    macro_factor=3,
    L=0.06,
    detector="both",
    n_realizations=48,
    master_seed=2024,
    slit_width=96e-6,
    slit_separation=256e-6,
    slit_height=512e-6,
)


@pytest.fixture(scope="module")
def acquisition():
    result, records, snapshots = run_gi_with_checkpoints(CONFIG, (8, 24, 48))
    return result, records, snapshots


def synthetic_pairs(n=200, shape=(8, 8), seed=7):
    rng = np.random.default_rng(seed)
    B = rng.random(n) + 0.1
    I = rng.random((n, *shape))
    return B, I


def rel_err(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


class TestAccumulatorAlgebra:
    grid = GridSpec(nx=8, ny=8, pitch=10e-6)
    plane = PlaneRef(kind="fresnel", z=0.05)

    def accumulate_all(self, B, I):
        acc = CorrelationAccumulator(grid=self.grid, plane=self.plane)
        for b, field in zip(B, I):
            acc.accumulate(float(b), field)
        return acc

    def test_two_equivalent_estimator_forms(self):
        # <BI> - <B><I> against the explicitly centered product
        B, I = synthetic_pairs()
        G = self.accumulate_all(B, I).finalize().G
        centered = np.mean(
            (B - B.mean())[:, None, None] * (I - I.mean(axis=0)), axis=0
        )
        assert rel_err(G, centered) < 1e-12

    def test_batch_matches_sequential(self):
        B, I = synthetic_pairs()
        batched = CorrelationAccumulator(grid=self.grid, plane=self.plane)
        batched.accumulate_batch(B, I)
        seq = self.accumulate_all(B, I)
        assert batched.n == seq.n == len(B)
        assert rel_err(batched.finalize().G, seq.finalize().G) < 1e-12

    def test_merge_invariant_over_partitions(self):
        B, I = synthetic_pairs()
        reference = self.accumulate_all(B, I).finalize().G
        rng = np.random.default_rng(99)
        for _ in range(8):
            cuts = np.sort(rng.choice(np.arange(1, len(B)), size=5, replace=False))
            merged = CorrelationAccumulator(grid=self.grid, plane=self.plane)
            for lo, hi in zip((0, *cuts), (*cuts, len(B))):
                part = CorrelationAccumulator(grid=self.grid, plane=self.plane)
                part.accumulate_batch(B[lo:hi], I[lo:hi])
                merged.merge(part)
            assert merged.n == len(B)
            assert rel_err(merged.finalize().G, reference) < 1e-12

    def test_detector_scale_and_offset_covariance(self):
        # G is linear in B and blind to a constant offset
        B, I = synthetic_pairs()
        G = self.accumulate_all(B, I).finalize().G
        G2 = self.accumulate_all(3.5 * B + 0.7, I).finalize().G
        assert rel_err(G2, 3.5 * G) < 1e-12

    def test_merge_grid_and_plane_guards(self):
        a = CorrelationAccumulator(grid=self.grid, plane=self.plane)
        other_grid = CorrelationAccumulator(
            grid=GridSpec(nx=4, ny=4, pitch=10e-6), plane=self.plane
        )
        with pytest.raises(GridMismatch):
            a.merge(other_grid)
        other_plane = CorrelationAccumulator(
            grid=self.grid, plane=PlaneRef(kind="fresnel", z=0.06)
        )
        with pytest.raises(PlaneMismatch):
            a.merge(other_plane)

    def test_finalize_guards(self):
        acc = CorrelationAccumulator(grid=self.grid, plane=self.plane)
        with pytest.raises(InsufficientSamples):
            acc.finalize()
        acc.accumulate(1.0, np.ones(self.grid.shape))
        with pytest.warns(UserWarning, match="single realization"):
            result = acc.finalize()
        np.testing.assert_array_equal(result.G, np.zeros(self.grid.shape))

    def test_accumulate_input_guards(self):
        acc = CorrelationAccumulator(grid=self.grid, plane=self.plane)
        with pytest.raises(InvalidParameter):
            acc.accumulate(-1.0, np.ones(self.grid.shape))
        with pytest.raises(InvalidParameter):
            acc.accumulate(np.nan, np.ones(self.grid.shape))
        with pytest.raises(GridMismatch):
            acc.accumulate(1.0, np.ones((3, 3)))


class TestAcquisition:
    def test_records_cover_every_realization_in_order(self, acquisition):
        _, records, _ = acquisition
        bucket = select_records(records, "bucket")
        pinhole = select_records(records, "pinhole")
        assert [rec.r for rec in bucket] == list(range(48))
        assert [rec.r for rec in pinhole] == list(range(48))
        assert all(rec.value >= 0 for rec in records)
        assert all(rec.master_seed == CONFIG.master_seed for rec in records)

    def test_result_carries_geometry(self, acquisition):
        result, _, _ = acquisition
        assert result.n_used == 48
        assert result.plane == PlaneRef(kind="fresnel", z=CONFIG.L)
        assert result.G.shape == CONFIG.grid().shape
        assert result.fingerprint is not None

    def test_replay_reproduces_acquisition_bitwise(self, acquisition):
        result, records, _ = acquisition
        replayed = reconstruct_at(records, CONFIG.L, CONFIG)
        np.testing.assert_array_equal(replayed.G, result.G)

    def test_thread_count_cannot_change_results(self, acquisition):
        result, records, _ = acquisition
        result4, records4 = run_gi(CONFIG, threads=4)
        assert result4.G.tobytes() == result.G.tobytes()
        assert records4 == records

    def test_worker_cap_bounds_transient_memory(self):
        # small grids keep the requested concurrency; large ones must shed
        # workers or concurrent padded FFT stacks exhaust memory
        small = GridSpec(nx=64, ny=64, pitch=16e-6)
        big = GridSpec(nx=512, ny=512, pitch=8e-6)
        assert effective_workers(small, 8) == 8
        assert 1 <= effective_workers(big, 8) <= 2
        assert effective_workers(big, 1) == 1
        for grid in (small, big):
            assert effective_workers(grid, 8) <= 8

    def test_checkpoints_match_prefix_replays(self, acquisition):
        result, records, snapshots = acquisition
        assert [n for n, _ in snapshots] == [8, 24, 48]
        np.testing.assert_array_equal(snapshots[-1][1].G, result.G)
        replayed = replay_with_checkpoints(records, CONFIG, [8, 24])
        for (n_a, snap), (n_b, rep) in zip(snapshots[:2], replayed):
            assert n_a == n_b
            np.testing.assert_array_equal(snap.G, rep.G)

    def test_verify_record_recomputes_detector_values(self, acquisition):
        _, records, _ = acquisition
        for rec in (records[0], records[1], records[17]):
            fresh = verify_record(rec, CONFIG)
            assert np.isclose(fresh, rec.value, rtol=1e-12)

    def test_clear_aperture_yields_null_image(self, tmp_path):
        # t = 1 everywhere makes B constant (energy is conserved), so the
        # covariance image must vanish to rounding
        path = tmp_path / "white.pgm"
        write_pgm(path, np.ones((4, 4)), maxval=255)
        config = dataclasses.replace(
            CONFIG,
            detector="bucket",
            object_kind="raster",
            object_path=str(path),
            object_width=4e-3,  # overfills the 1.024 mm window
        )
        result, records = run_gi(config)
        values = np.array([rec.value for rec in records])
        assert np.allclose(values, values[0], rtol=1e-12)
        # G has units of B*I; window-averaged intensity sets the I scale
        ex, ey = CONFIG.grid().extent
        scale = values.mean() * 1.0 / (ex * ey)
        assert np.max(np.abs(result.G)) < 1e-10 * scale

    def test_single_realization_warns_and_zeroes(self):
        config = dataclasses.replace(CONFIG, n_realizations=1, detector="bucket")
        with pytest.warns(UserWarning, match="N = 1"):
            result, records = run_gi(config)
        np.testing.assert_array_equal(result.G, np.zeros(CONFIG.grid().shape))
        assert len(records) == 1

    def test_pinhole_only_acquisition_warns(self):
        config = dataclasses.replace(CONFIG, detector="pinhole", n_realizations=8)
        with pytest.warns(UserWarning, match="SNR"):
            result, records = run_gi(config)
        assert {rec.kind for rec in records} == {"pinhole"}
        assert result.n_used == 8

    def test_checkpoint_out_of_range_rejected(self):
        with pytest.raises(InvalidParameter, match="checkpoints"):
            run_gi_with_checkpoints(CONFIG, (1,))
        with pytest.raises(InvalidParameter, match="checkpoints"):
            run_gi_with_checkpoints(CONFIG, (49,))

    def test_sampling_guard_blocks_bad_geometry(self):
        config = dataclasses.replace(CONFIG, L=0.005)
        with pytest.raises(SamplingViolation):
            run_gi(config)


class TestReplay:
    def test_depth_stack_equals_per_plane_replays(self, acquisition):
        _, records, _ = acquisition
        z_list = [CONFIG.L, 0.08, 0.1]
        stack = depth_stack(records, z_list, CONFIG)
        assert [res.plane.z for res in stack] == z_list
        for z, res in zip(z_list, stack):
            single = reconstruct_at(records, z, CONFIG)
            np.testing.assert_array_equal(res.G, single.G)

    def test_ghost_diffraction_needs_pinhole_records(self, acquisition):
        _, records, _ = acquisition
        bucket_only = select_records(records, "bucket")
        with pytest.raises(DetectorKindMismatch):
            run_gd(bucket_only, CONFIG)
        gd = run_gd(records, CONFIG)
        assert gd.plane.kind == "fourier"
        assert gd.G.shape == CONFIG.grid().shape

    def test_seed_mismatch_rejected(self, acquisition):
        _, records, _ = acquisition
        config = dataclasses.replace(CONFIG, master_seed=2025)
        with pytest.raises(InvalidParameter, match="seed"):
            reconstruct_at(records, CONFIG.L, config)

    def test_invalid_target_plane_rejected(self, acquisition):
        _, records, _ = acquisition
        with pytest.raises(SamplingViolation):
            reconstruct_at(records, 0.005, CONFIG)
        with pytest.raises(SamplingViolation):
            depth_stack(records, [CONFIG.L, 0.005], CONFIG)

    def test_empty_records_rejected(self):
        with pytest.raises(InsufficientSamples):
            reconstruct_at([], CONFIG.L, CONFIG)

    def test_replay_checkpoint_guards(self, acquisition):
        _, records, _ = acquisition
        with pytest.raises(InvalidParameter):
            replay_with_checkpoints(records, CONFIG, [1])
        with pytest.raises(InsufficientSamples):
            replay_with_checkpoints(records, CONFIG, [480])

    def test_bucket_preferred_over_pinhole_for_imaging(self, acquisition):
        # detector="both" record sets correlate the bucket channel
        result, records, _ = acquisition
        bucket_only = select_records(records, "bucket")
        from_bucket = reconstruct_at(bucket_only, CONFIG.L, CONFIG)
        np.testing.assert_array_equal(from_bucket.G, result.G)

    def test_pinhole_fallback_warns(self, acquisition):
        _, records, _ = acquisition
        pinhole_only = select_records(records, "pinhole")
        with pytest.warns(UserWarning, match="SNR"):
            reconstruct_at(pinhole_only, CONFIG.L, CONFIG)


class TestRecordsFile:
    def test_roundtrip_is_bit_exact(self, acquisition, tmp_path):
        _, records, _ = acquisition
        path = tmp_path / "bucket.txt"
        write_records(path, records, CONFIG, "bucket")
        back, header = read_records(path)
        assert back == select_records(records, "bucket")
        assert header["detector"] == "bucket"
        assert int(header["seed"]) == CONFIG.master_seed
        assert float(header["lambda"]) == CONFIG.wavelength
        assert header["grid"] == f"{CONFIG.nx}x{CONFIG.ny}@{CONFIG.pitch!r}"

    def test_header_cross_check(self, acquisition, tmp_path):
        _, records, _ = acquisition
        path = tmp_path / "bucket.txt"
        write_records(path, records, CONFIG, "bucket")
        _, header = read_records(path)
        assert config_matches_records(CONFIG, header)
        off = dataclasses.replace(CONFIG, pitch=8e-6)
        assert not config_matches_records(off, header)

    def test_replay_from_file(self, acquisition, tmp_path):
        result, records, _ = acquisition
        path = tmp_path / "bucket.txt"
        write_records(path, records, CONFIG, "bucket")
        back, _ = read_records(path)
        replayed = reconstruct_at(back, CONFIG.L, CONFIG)
        np.testing.assert_array_equal(replayed.G, result.G)

    def test_malformed_line_reports_position(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# seed=1 detector=bucket\n0\t1.0\n1 2.0\n")
        with pytest.raises(UnsupportedFormat, match="line 3"):
            read_records(path)

    def test_non_numeric_line_reports_position(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# seed=1 detector=bucket\nzero\t1.0\n")
        with pytest.raises(UnsupportedFormat, match="line 2"):
            read_records(path)

    def test_negative_value_rejected_with_position(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("# seed=1 detector=bucket\n0\t-1.0\n")
        with pytest.raises(UnsupportedFormat, match="line 2"):
            read_records(path)

    def test_headerless_or_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# seed=1 detector=bucket\n")
        with pytest.raises(InsufficientSamples):
            read_records(path)

    def test_writing_missing_kind_rejected(self, acquisition, tmp_path):
        _, records, _ = acquisition
        pinhole_only = select_records(records, "pinhole")
        with pytest.raises(InsufficientSamples):
            write_records(tmp_path / "x.txt", pinhole_only, CONFIG, "bucket")
