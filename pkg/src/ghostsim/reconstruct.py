"""Correlation reconstruction engine.

The estimator is the intensity-fluctuation correlation

    G(x, y) = <B I(x, y)> - <B> <I(x, y)>

accumulated in one streaming pass over realizations.  Only three sums are
kept (sum B, sum I, sum B*I), so a full run is O(grid) memory at any N,
and partial accumulators over disjoint realization ranges merge exactly.

Records store only (seed, r, B_r): the reference arm is recomputed from
the seed whenever a reconstruction plane is requested, which is what lets
one measurement set serve any z, the Fourier plane, and full depth stacks.

Determinism contract: realizations are processed in fixed-size chunks
(size a function of grid size only) and partial sums merge in chunk index
order, so results are byte-identical for any worker count.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import (
    DetectorKindMismatch,
    GeometryMismatch,
    GridMismatch,
    InsufficientSamples,
    InvalidParameter,
    NonFiniteInput,
    PlaneMismatch,
    SamplingViolation,
    UnsupportedFormat,
)
from .field import ComplexField, GridSpec, mask_phases, mask_pixel_phases
from .propagation import (
    check_sampling,
    fourier_grid,
    fourier_samples,
    propagate_samples,
    propagate_samples_multi,
)
from .scene import MeasurementRecord, TransmissionObject

_CHUNK_BUDGET_BYTES = 1 << 28  # padded-stack budget per chunk, ~256 MB
_CHUNK_MAX = 32
_WORKER_BUDGET_BYTES = 2 << 30  # transient FFT memory across all live chunks


@dataclass(frozen=True)
class PlaneRef:
    """Reference-arm plane: a Fresnel distance in meters, or the Fourier plane."""

    kind: str  # fresnel | fourier
    z: float | None = None

    def __post_init__(self):
        if self.kind not in ("fresnel", "fourier"):
            raise InvalidParameter(f"unknown plane kind {self.kind!r}")
        if self.kind == "fresnel" and (self.z is None or not np.isfinite(self.z)):
            raise InvalidParameter("fresnel plane needs a finite z")
        if self.kind == "fourier" and self.z is not None:
            raise InvalidParameter("fourier plane carries no z")

    def label(self) -> str:
        return "fourier" if self.kind == "fourier" else f"z={self.z:g}"


@dataclass(frozen=True)
class Fingerprint:
    """Provenance of a reconstruction: enough to tell two runs apart."""

    master_seed: int
    wavelength: float
    w0: float
    grid: GridSpec

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "Fingerprint":
        return cls(
            master_seed=config.master_seed,
            wavelength=config.wavelength,
            w0=config.w0,
            grid=config.grid(),
        )


@dataclass
class ReconstructionResult:
    G: np.ndarray
    plane: PlaneRef
    n_used: int
    grid: GridSpec  # grid of the reference plane (fourier grids differ from source)
    fingerprint: Fingerprint | None = None

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=np.float64)
        if self.G.shape != self.grid.shape:
            raise GridMismatch(f"G shape {self.G.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(self.G)):
            raise NonFiniteInput("reconstruction contains NaN or Inf")


@dataclass
class CorrelationAccumulator:
    grid: GridSpec
    plane: PlaneRef
    n: int = 0
    sum_B: float = 0.0
    sum_I: np.ndarray = dc_field(default=None)
    sum_BI: np.ndarray = dc_field(default=None)
    fingerprint: Fingerprint | None = None

    def __post_init__(self):
        if self.sum_I is None:
            self.sum_I = np.zeros(self.grid.shape)
        if self.sum_BI is None:
            self.sum_BI = np.zeros(self.grid.shape)

    def accumulate(self, B: float, I: np.ndarray) -> "CorrelationAccumulator":
        if I.shape != self.grid.shape:
            raise GridMismatch(f"intensity shape {I.shape} != grid {self.grid.shape}")
        if not np.isfinite(B) or B < 0.0:
            raise InvalidParameter(f"detector value must be >= 0, got {B}")
        self.n += 1
        self.sum_B += B
        self.sum_I += I
        self.sum_BI += B * I
        return self

    def accumulate_batch(self, B: np.ndarray, I: np.ndarray) -> "CorrelationAccumulator":
        """Vectorized accumulate over a (r, ny, nx) intensity stack."""
        if I.shape[1:] != self.grid.shape:
            raise GridMismatch(f"intensity shape {I.shape[1:]} != grid {self.grid.shape}")
        if np.any(B < 0.0) or not np.all(np.isfinite(B)):
            raise InvalidParameter("detector values must be finite and >= 0")
        self.n += len(B)
        self.sum_B += float(np.sum(B))
        self.sum_I += np.sum(I, axis=0)
        self.sum_BI += np.tensordot(B, I, axes=(0, 0))
        return self

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        if other.grid != self.grid:
            raise GridMismatch("cannot merge accumulators over different grids")
        if other.plane != self.plane:
            raise PlaneMismatch(
                f"cannot merge {self.plane.label()} with {other.plane.label()}"
            )
        self.n += other.n
        self.sum_B += other.sum_B
        self.sum_I += other.sum_I
        self.sum_BI += other.sum_BI
        return self

    def finalize(self) -> ReconstructionResult:
        """G = <BI> - <B><I>.  N = 1 yields identically zero G (B_1 = <B>)."""
        if self.n < 1:
            raise InsufficientSamples("no realizations accumulated")
        if self.n == 1:
            warnings.warn(
                "finalizing with a single realization: G is identically zero",
                stacklevel=2,
            )
            G = np.zeros(self.grid.shape)
        else:
            G = self.sum_BI / self.n - (self.sum_B / self.n) * (self.sum_I / self.n)
        return ReconstructionResult(
            G=G, plane=self.plane, n_used=self.n, grid=self.grid, fingerprint=self.fingerprint
        )


def chunk_size(grid: GridSpec) -> int:
    """Fixed chunking policy: a function of grid size only, never of the
    worker count, so parallel schedules cannot change results."""
    padded_bytes = 16 * (2 * grid.nx) * (2 * grid.ny)
    return max(1, min(_CHUNK_MAX, _CHUNK_BUDGET_BYTES // padded_bytes))


def effective_workers(grid: GridSpec, threads: int) -> int:
    """Concurrency that fits in memory.  A chunk in flight peaks at roughly
    four padded complex stacks (pad, spectrum, inverse, crop), so large grids
    get fewer live chunks than the caller asked for.  Only wall time changes:
    chunking is fixed, so results stay byte-identical for any thread count."""
    if threads <= 1:
        return 1
    padded_bytes = 16 * (2 * grid.nx) * (2 * grid.ny)
    per_chunk = 4 * chunk_size(grid) * padded_bytes
    return max(1, min(threads, _WORKER_BUDGET_BYTES // per_chunk))


def masked_beam_stack(
    beam: np.ndarray, config: ExperimentConfig, r_values: np.ndarray
) -> np.ndarray:
    """SLM-plane fields for the given realization indices, (r, ny, nx).

    exp(i*phase) is taken per mask cell, then block-replicated: identical
    bits to exponentiating the per-pixel phases, at a fraction of the cost.
    """
    f = config.macro_factor
    my, mx = config.mask_cy * f, config.mask_cx * f
    ny, nx = config.ny, config.nx
    if my > ny or mx > nx:
        raise GeometryMismatch(
            f"mask spans {mx}x{my} pixels but the grid is only {nx}x{ny}"
        )
    oy, ox = (ny - my) // 2, (nx - mx) // 2
    stack = np.empty((len(r_values), ny, nx), dtype=np.complex128)
    for i, r in enumerate(r_values):
        cells = mask_phases(config.master_seed, int(r), config.mask_cx, config.mask_cy)
        block = np.repeat(np.repeat(np.exp(1j * cells), f, axis=0), f, axis=1)
        stack[i] = beam
        stack[i, oy : oy + my, ox : ox + mx] *= block
    return stack


def _reference_intensities(
    beam: np.ndarray, config: ExperimentConfig, r_values: np.ndarray, plane: PlaneRef
) -> tuple[np.ndarray, np.ndarray]:
    """(fields, intensities) of the reference arm at the requested plane."""
    stack = masked_beam_stack(beam, config, r_values)
    if plane.kind == "fourier":
        out = fourier_samples(stack)
    elif plane.z == 0.0:
        out = stack
    else:
        out = propagate_samples(stack, config.pitch, config.wavelength, plane.z)
    return out, np.abs(out) ** 2


def _run_chunks(worker, n_chunks: int, workers: int) -> list:
    if workers <= 1:
        return [worker(c) for c in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(n_chunks)))


def _fixed_chunks(total: int, size: int) -> list[tuple[int, int]]:
    """Chunk edges every `size` realizations.  The grouping never depends on
    checkpoints or worker counts, so partial sums are always bit-identical
    between acquisition and replay."""
    edges = [*range(0, total, size), total]
    return list(zip(edges[:-1], edges[1:]))


def _clone(acc: CorrelationAccumulator) -> CorrelationAccumulator:
    return CorrelationAccumulator(
        grid=acc.grid,
        plane=acc.plane,
        n=acc.n,
        sum_B=acc.sum_B,
        sum_I=acc.sum_I.copy(),
        sum_BI=acc.sum_BI.copy(),
        fingerprint=acc.fingerprint,
    )


def _acquire(
    config: ExperimentConfig, threads: int, marks: tuple[int, ...]
) -> tuple[
    ReconstructionResult,
    list[MeasurementRecord],
    list[tuple[int, ReconstructionResult]],
]:
    grid = config.grid()
    report = check_sampling(grid, config.wavelength, config.L)
    if not report.valid:
        raise SamplingViolation("; ".join(report.messages))
    beam = config.input_beam().samples
    obj = config.build_object()
    if obj.L != config.L:
        raise PlaneMismatch("object distance differs from config L")
    t = obj.samples
    w = np.abs(t) ** 2
    area = grid.pitch**2

    kinds = ("bucket", "pinhole") if config.detector == "both" else (config.detector,)
    correlate_kind = "bucket" if config.detector in ("bucket", "both") else "pinhole"
    if config.detector == "pinhole":
        warnings.warn(
            "correlating object-plane intensity with pinhole values: expect much "
            "lower SNR than bucket detection",
            stacklevel=3,
        )

    N = config.n_realizations
    if any(m < 2 or m > N for m in marks):
        raise InvalidParameter(f"checkpoints must lie in [2, {N}]")
    chunks = _fixed_chunks(N, chunk_size(grid))
    plane = PlaneRef(kind="fresnel", z=config.L)

    def work(bounds: tuple[int, int]):
        lo, hi = bounds
        r_values = np.arange(lo, hi)
        fields, I = _reference_intensities(beam, config, r_values, plane)
        values = {}
        if "bucket" in kinds:
            values["bucket"] = np.tensordot(I, w, axes=([1, 2], [0, 1])) * area
        if "pinhole" in kinds:
            amps = np.tensordot(fields, t, axes=([1, 2], [0, 1])) * area
            values["pinhole"] = np.abs(amps) ** 2
        part = CorrelationAccumulator(grid=grid, plane=plane)
        part.accumulate_batch(values[correlate_kind], I)
        # prefix sums for checkpoints inside this chunk; the main stream's
        # grouping stays fixed so the final G is checkpoint-independent
        prefixes = {}
        for m in marks:
            if lo < m < hi:
                pre = CorrelationAccumulator(grid=grid, plane=plane)
                pre.accumulate_batch(values[correlate_kind][: m - lo], I[: m - lo])
                prefixes[m] = pre
        return r_values, values, part, prefixes

    acc = CorrelationAccumulator(
        grid=grid, plane=plane, fingerprint=Fingerprint.from_config(config)
    )
    records: list[MeasurementRecord] = []
    snapshots: list[tuple[int, ReconstructionResult]] = []
    workers = effective_workers(grid, threads)
    if workers <= 1:
        outputs = (work(bounds) for bounds in chunks)
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        outputs = pool.map(work, chunks)
    for r_values, values, part, prefixes in outputs:
        for m in sorted(prefixes):
            snapshots.append((m, _clone(acc).merge(prefixes[m]).finalize()))
        acc.merge(part)
        for i, r in enumerate(r_values):
            for kind in kinds:
                records.append(
                    MeasurementRecord(
                        r=int(r),
                        kind=kind,
                        value=float(values[kind][i]),
                        master_seed=config.master_seed,
                    )
                )
        if acc.n in marks:
            snapshots.append((acc.n, acc.finalize()))
    if pool is not None:
        pool.shutdown()
    with warnings.catch_warnings():
        if N == 1:
            warnings.simplefilter("ignore")
        result = acc.finalize()
    if N == 1:
        warnings.warn("N = 1 run: G is identically zero", stacklevel=3)
    return result, records, snapshots


def run_gi(
    config: ExperimentConfig, threads: int = 1
) -> tuple[ReconstructionResult, list[MeasurementRecord]]:
    """Full acquisition: generate speckle, measure the detector(s), correlate.

    Correlates against the object-plane intensity.  detector="both" records
    bucket and pinhole values per realization and correlates the bucket.
    """
    result, records, _ = _acquire(config, threads, ())
    return result, records


def run_gi_with_checkpoints(
    config: ExperimentConfig, checkpoints: tuple[int, ...], threads: int = 1
) -> tuple[
    ReconstructionResult,
    list[MeasurementRecord],
    list[tuple[int, ReconstructionResult]],
]:
    """run_gi plus prefix reconstructions at the requested realization counts,
    all from the same single pass."""
    marks = tuple(sorted(set(int(n) for n in checkpoints)))
    return _acquire(config, threads, marks)


def select_records(records: list[MeasurementRecord], kind: str) -> list[MeasurementRecord]:
    return sorted((rec for rec in records if rec.kind == kind), key=lambda rec: rec.r)


def _correlation_records(records: list[MeasurementRecord]) -> list[MeasurementRecord]:
    """Bucket records when present, else pinhole (with the SNR warning)."""
    bucket = select_records(records, "bucket")
    if bucket:
        return bucket
    pinhole = select_records(records, "pinhole")
    if pinhole:
        warnings.warn(
            "reconstructing a ghost image from pinhole records: expect much lower "
            "SNR than bucket detection",
            stacklevel=3,
        )
    return pinhole


def _replay(
    records: list[MeasurementRecord],
    config: ExperimentConfig,
    plane: PlaneRef,
    threads: int = 1,
) -> ReconstructionResult:
    if not records:
        raise InsufficientSamples("no records to reconstruct from")
    seeds = {rec.master_seed for rec in records}
    if len(seeds) > 1:
        raise InvalidParameter(f"records mix master seeds {sorted(seeds)}")
    if seeds != {config.master_seed}:
        raise InvalidParameter(
            f"records carry seed {seeds.pop()} but config says {config.master_seed}"
        )
    grid = config.grid()
    out_grid = fourier_grid(grid) if plane.kind == "fourier" else grid
    if plane.kind == "fresnel":
        report = check_sampling(grid, config.wavelength, plane.z)
        if not report.valid:
            raise SamplingViolation("; ".join(report.messages))
    beam = config.input_beam().samples
    r_all = np.array([rec.r for rec in records])
    B_all = np.array([rec.value for rec in records])
    size = chunk_size(grid)
    n_chunks = (len(records) + size - 1) // size

    def work(c: int):
        sl = slice(c * size, (c + 1) * size)
        _, I = _reference_intensities(beam, config, r_all[sl], plane)
        part = CorrelationAccumulator(grid=out_grid, plane=plane)
        part.accumulate_batch(B_all[sl], I)
        return part

    acc = CorrelationAccumulator(
        grid=out_grid, plane=plane, fingerprint=Fingerprint.from_config(config)
    )
    for part in _run_chunks(work, n_chunks, effective_workers(grid, threads)):
        acc.merge(part)
    return acc.finalize()


def reconstruct_at(
    records: list[MeasurementRecord],
    z_target: float,
    config: ExperimentConfig,
    threads: int = 1,
) -> ReconstructionResult:
    """Correlate stored detector values against the recomputed reference
    intensity at any plane z_target.  With z_target = L this replays the
    in-focus image exactly."""
    chosen = _correlation_records(records)
    return _replay(chosen, config, PlaneRef(kind="fresnel", z=z_target), threads)


def run_gd(
    records: list[MeasurementRecord], config: ExperimentConfig, threads: int = 1
) -> ReconstructionResult:
    """Ghost diffraction: correlate pinhole values with the far-field
    intensity of the SLM-plane field."""
    pinhole = select_records(records, "pinhole")
    if not pinhole:
        raise DetectorKindMismatch(
            "ghost diffraction requires pinhole records; bucket data cannot "
            "recover the far field"
        )
    return _replay(pinhole, config, PlaneRef(kind="fourier"), threads)


def depth_stack(
    records: list[MeasurementRecord],
    z_list: list[float],
    config: ExperimentConfig,
    threads: int = 1,
) -> list[ReconstructionResult]:
    """Reconstruct at every plane in z_list from one record set, sharing the
    forward transform across planes.  Equivalent to reconstruct_at per z."""
    chosen = _correlation_records(records)
    if not chosen:
        raise InsufficientSamples("no records to reconstruct from")
    if not z_list:
        return []
    grid = config.grid()
    for z in z_list:
        report = check_sampling(grid, config.wavelength, z)
        if not report.valid:
            raise SamplingViolation("; ".join(report.messages))
    beam = config.input_beam().samples
    r_all = np.array([rec.r for rec in chosen])
    B_all = np.array([rec.value for rec in chosen])
    size = chunk_size(grid)
    n_chunks = (len(chosen) + size - 1) // size
    plane_refs = [PlaneRef(kind="fresnel", z=z) for z in z_list]

    def work(c: int):
        sl = slice(c * size, (c + 1) * size)
        stack = masked_beam_stack(beam, config, r_all[sl])
        outs = propagate_samples_multi(stack, config.pitch, config.wavelength, z_list)
        parts = []
        for plane, out in zip(plane_refs, outs):
            part = CorrelationAccumulator(grid=grid, plane=plane)
            part.accumulate_batch(B_all[sl], np.abs(out) ** 2)
            parts.append(part)
        return parts

    fp = Fingerprint.from_config(config)
    accs = [
        CorrelationAccumulator(grid=grid, plane=plane, fingerprint=fp)
        for plane in plane_refs
    ]
    for parts in _run_chunks(work, n_chunks, effective_workers(grid, threads)):
        for acc, part in zip(accs, parts):
            acc.merge(part)
    return [acc.finalize() for acc in accs]


def replay_with_checkpoints(
    records: list[MeasurementRecord],
    config: ExperimentConfig,
    checkpoints: list[int],
) -> list[tuple[int, ReconstructionResult]]:
    """Reconstructions from the first N records for each N in checkpoints,
    out of a single streaming pass at the object plane."""
    chosen = _correlation_records(records)
    if not chosen:
        raise InsufficientSamples("no records to reconstruct from")
    marks = sorted(set(int(n) for n in checkpoints))
    if marks[0] < 2:
        raise InvalidParameter("checkpoints need N >= 2")
    if marks[-1] > len(chosen):
        raise InsufficientSamples(
            f"requested N = {marks[-1]} but only {len(chosen)} records available"
        )
    grid = config.grid()
    plane = PlaneRef(kind="fresnel", z=config.L)
    report = check_sampling(grid, config.wavelength, config.L)
    if not report.valid:
        raise SamplingViolation("; ".join(report.messages))
    beam = config.input_beam().samples
    r_all = np.array([rec.r for rec in chosen])
    B_all = np.array([rec.value for rec in chosen])
    acc = CorrelationAccumulator(
        grid=grid, plane=plane, fingerprint=Fingerprint.from_config(config)
    )
    results: list[tuple[int, ReconstructionResult]] = []
    # fixed chunk grouping, same as acquisition: snapshots at mid-chunk
    # checkpoints come from prefix sums so every result is bit-reproducible
    for lo, hi in _fixed_chunks(marks[-1], chunk_size(grid)):
        _, I = _reference_intensities(beam, config, r_all[lo:hi], plane)
        for m in marks:
            if lo < m < hi:
                pre = CorrelationAccumulator(grid=grid, plane=plane)
                pre.accumulate_batch(B_all[lo:m], I[: m - lo])
                results.append((m, _clone(acc).merge(pre).finalize()))
        acc.accumulate_batch(B_all[lo:hi], I)
        if acc.n in marks:
            results.append((acc.n, acc.finalize()))
    return results


def verify_record(record: MeasurementRecord, config: ExperimentConfig) -> float:
    """Recompute a record's detector value from scratch (replay fidelity)."""
    from .scene import bucket_measure, pinhole_measure

    beam = config.input_beam()
    cells = mask_phases(record.master_seed, record.r, config.mask_cx, config.mask_cy)
    phase = mask_pixel_phases(cells, config.macro_factor, (config.ny, config.nx))
    masked = ComplexField(
        grid=beam.grid, samples=beam.samples * np.exp(1j * phase), wavelength=config.wavelength
    )
    at_L = propagate_samples(masked.samples, config.pitch, config.wavelength, config.L)
    E = ComplexField(grid=beam.grid, samples=at_L, wavelength=config.wavelength, z=config.L)
    obj = config.build_object()
    if record.kind == "bucket":
        return bucket_measure(E, obj)
    return pinhole_measure(E, obj)


# --- record files -----------------------------------------------------------

def write_records(
    path, records: list[MeasurementRecord], config: ExperimentConfig, kind: str
) -> None:
    """Line-oriented text: one '#' header with the geometry, then r<TAB>B_r
    per line in full round-trip precision."""
    chosen = select_records(records, kind)
    if not chosen:
        raise InsufficientSamples(f"no {kind} records to write")
    header = (
        f"# seed={config.master_seed} lambda={config.wavelength!r} w0={config.w0!r} "
        f"L={config.L!r} grid={config.nx}x{config.ny}@{config.pitch!r} detector={kind} "
        f"mask={config.mask_cx}x{config.mask_cy}@{config.macro_factor}"
    )
    lines = [header]
    lines.extend(f"{rec.r}\t{rec.value!r}" for rec in chosen)
    Path(path).write_text("\n".join(lines) + "\n")


def read_records(path) -> tuple[list[MeasurementRecord], dict[str, str]]:
    """Parse a records file; returns (records, header key/value map)."""
    header: dict[str, str] = {}
    records: list[MeasurementRecord] = []
    lines = Path(path).read_text().splitlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                key, sep, value = token.partition("=")
                if sep:
                    header[key] = value
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise UnsupportedFormat(
                f"{path}: line {lineno}: expected 'r<TAB>value', got {raw!r}"
            )
        try:
            r = int(parts[0])
            value = float(parts[1])
        except ValueError:
            raise UnsupportedFormat(
                f"{path}: line {lineno}: non-numeric fields in {raw!r}"
            ) from None
        try:
            records.append(
                MeasurementRecord(
                    r=r,
                    kind=header.get("detector", "bucket"),
                    value=value,
                    master_seed=int(header.get("seed", "0")),
                )
            )
        except InvalidParameter as exc:
            raise UnsupportedFormat(f"{path}: line {lineno}: {exc}") from None
    if not records:
        raise InsufficientSamples(f"{path}: no measurement lines found")
    return records, header


def config_matches_records(config: ExperimentConfig, header: dict[str, str]) -> bool:
    """Cross-check a parsed records header against a config."""
    try:
        return (
            int(header["seed"]) == config.master_seed
            and float(header["lambda"]) == config.wavelength
            and float(header["w0"]) == config.w0
            and header["grid"] == f"{config.nx}x{config.ny}@{config.pitch!r}"
            and header["mask"] == f"{config.mask_cx}x{config.mask_cy}@{config.macro_factor}"
        )
    except (KeyError, ValueError):
        return False


def config_from_records_header(
    header: dict[str, str], n_records: int
) -> ExperimentConfig:
    """Rebuild the experiment geometry a records file describes.

    The header carries everything replay needs (seed, beam, grid, mask);
    object fields keep their defaults since the reference arm never sees
    the object.
    """
    try:
        nxy, _, pitch = header["grid"].partition("@")
        nx, _, ny = nxy.partition("x")
        mask, _, factor = header["mask"].partition("@")
        mcx, _, mcy = mask.partition("x")
        return ExperimentConfig(
            wavelength=float(header["lambda"]),
            w0=float(header["w0"]),
            pitch=float(pitch),
            nx=int(nx),
            ny=int(ny),
            mask_cx=int(mcx),
            mask_cy=int(mcy),
            macro_factor=int(factor),
            L=float(header["L"]),
            detector=header.get("detector", "bucket"),
            n_realizations=max(n_records, 1),
            master_seed=int(header["seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise UnsupportedFormat(f"records header incomplete or malformed: {exc}") from None
