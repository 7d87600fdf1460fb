"""Free-space propagation on a fixed grid.

fresnel_propagate convolves the field with the sampled paraxial chirp
e^{i*pi*(xi^2+eta^2)/(lambda*z)} through two FFTs with >=2x zero padding,
then trims back to the source grid.  With that much padding the circular
convolution restricted to the source window equals the explicit double
sum over all sample pairs, so the FFT path and the brute-force quadrature
oracle agree to machine precision by construction.

Normalization: the physical 1/(i*lambda*z) prefactor and the plane phase
e^{ikz} are folded into an exact energy rescale (a real positive scalar),
making every propagation unitary and leaving relative phases untouched.
Light that diffracts beyond the padded window is discarded at the trim,
exactly like light missing a finite detector.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import fft as sfft

from .errors import GridTooLarge, InvalidParameter, SamplingViolation, ShapeMismatch
from .field import ComplexField, GridSpec

ORACLE_MAX_GRID = 64


@dataclass(frozen=True)
class SamplingReport:
    """Chirp-sampling diagnostics for one (grid, wavelength, z) combination."""

    valid: bool
    max_phase_step: float  # radians between adjacent kernel samples at the padded edge
    fresnel_number: float
    padded_shape: tuple[int, int]
    messages: tuple[str, ...] = ()


@dataclass
class PropagationPlan:
    """Propagation parameters, reusable across realizations.

    The transfer array (FFT of the padded chirp) is built lazily and cached;
    it is read-only after construction and safe to share between threads.
    """

    source_grid: GridSpec
    wavelength: float
    z: float
    padding_factor: int = 2
    method: str = "two-fft-convolution"
    _transfer: np.ndarray | None = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.method not in ("two-fft-convolution", "direct-quadrature-oracle"):
            raise InvalidParameter(f"unknown propagation method {self.method!r}")
        if self.method == "two-fft-convolution" and self.padding_factor < 2:
            raise InvalidParameter("two-fft convolution needs padding factor >= 2")
        if self.padding_factor < 1:
            raise InvalidParameter("padding factor must be >= 1")

    def report(self) -> SamplingReport:
        return check_sampling(self.source_grid, self.wavelength, self.z, self.padding_factor)

    def padded_shape(self) -> tuple[int, int]:
        return (
            sfft.next_fast_len(self.padding_factor * self.source_grid.ny),
            sfft.next_fast_len(self.padding_factor * self.source_grid.nx),
        )

    def transfer(self) -> np.ndarray:
        if self._transfer is None:
            self._transfer = _transfer_array(
                self.padded_shape(), self.source_grid.pitch, self.wavelength, self.z
            )
        return self._transfer


def check_sampling(
    grid: GridSpec, wavelength: float, z: float, padding_factor: int = 2
) -> SamplingReport:
    """Nyquist check for the real-space chirp over the padded window.

    The kernel's local frequency grows linearly with offset; the largest
    per-sample phase step, 2*pi*pitch*(padded_extent/2)/(lambda*|z|), must
    stay at or below pi.  Report only; propagation raises on invalid.
    """
    if not np.isfinite(wavelength) or wavelength <= 0.0:
        raise InvalidParameter(f"wavelength must be positive, got {wavelength}")
    if not np.isfinite(z):
        raise InvalidParameter("z must be finite")
    py = sfft.next_fast_len(max(1, padding_factor) * grid.ny)
    px = sfft.next_fast_len(max(1, padding_factor) * grid.nx)
    extent = max(grid.extent)
    if z == 0.0:
        return SamplingReport(
            valid=True,
            max_phase_step=0.0,
            fresnel_number=np.inf,
            padded_shape=(py, px),
            messages=("z = 0 short-circuits to identity",),
        )
    half_padded = 0.5 * max(px, py) * grid.pitch
    step = 2.0 * np.pi * grid.pitch * half_padded / (wavelength * abs(z))
    fresnel = extent**2 / (4.0 * wavelength * abs(z))
    msgs: list[str] = []
    if step > np.pi:
        msgs.append(
            f"chirp undersampled: edge phase step {step:.3f} rad > pi at z = {z:g} m; "
            f"need |z| >= {2.0 * np.pi * grid.pitch * half_padded / (wavelength * np.pi):.4g} m "
            "on this grid"
        )
    return SamplingReport(
        valid=step <= np.pi,
        max_phase_step=float(step),
        fresnel_number=float(fresnel),
        padded_shape=(py, px),
        messages=tuple(msgs),
    )


# Transfer arrays are pure functions of (shape, pitch, wavelength, z); a small
# LRU keeps depth sweeps from rebuilding and re-transforming the chirp.
_transfer_cache: OrderedDict[tuple, np.ndarray] = OrderedDict()
_transfer_lock = threading.Lock()
_TRANSFER_CACHE_SIZE = 16


def _wrapped_offsets(n: int) -> np.ndarray:
    # index distances on the circular padded domain, 0 first (FFT layout)
    return ((np.arange(n) + n // 2) % n) - n // 2


def _transfer_array(
    padded_shape: tuple[int, int], pitch: float, wavelength: float, z: float
) -> np.ndarray:
    key = (padded_shape, pitch, wavelength, z)
    with _transfer_lock:
        if key in _transfer_cache:
            _transfer_cache.move_to_end(key)
            return _transfer_cache[key]
    py, px = padded_shape
    c = np.pi / (wavelength * z)
    eta = _wrapped_offsets(py) * pitch
    xi = _wrapped_offsets(px) * pitch
    kernel = np.exp(1j * c * eta**2)[:, None] * np.exp(1j * c * xi**2)[None, :]
    transfer = sfft.fft2(kernel, workers=1)
    with _transfer_lock:
        _transfer_cache[key] = transfer
        while len(_transfer_cache) > _TRANSFER_CACHE_SIZE:
            _transfer_cache.popitem(last=False)
    return transfer


def _convolve_batch(
    batch: np.ndarray, transfer: np.ndarray, trim: tuple[slice, slice]
) -> np.ndarray:
    """FFT-convolve a (..., ny, nx) batch with a prepared transfer array."""
    py, px = transfer.shape
    ny, nx = batch.shape[-2:]
    pad = np.zeros(batch.shape[:-2] + (py, px), dtype=np.complex128)
    pad[..., trim[0], trim[1]] = batch
    spec = sfft.fft2(pad, axes=(-2, -1), workers=1)
    spec *= transfer
    out = sfft.ifft2(spec, axes=(-2, -1), workers=1)
    return np.ascontiguousarray(out[..., trim[0], trim[1]])


def _trim_slices(padded_shape: tuple[int, int], shape: tuple[int, int]) -> tuple[slice, slice]:
    py, px = padded_shape
    ny, nx = shape
    oy, ox = (py - ny) // 2, (px - nx) // 2
    return (slice(oy, oy + ny), slice(ox, ox + nx))


def propagate_samples(
    samples: np.ndarray, pitch: float, wavelength: float, z: float, padding_factor: int = 2
) -> np.ndarray:
    """Array-level Fresnel step used by the batched reconstruction engine.

    Accepts shape (ny, nx) or (batch, ny, nx); validates sampling; rescales
    each slice to preserve its energy exactly.
    """
    if z == 0.0:
        return samples.copy()
    ny, nx = samples.shape[-2:]
    grid = GridSpec(nx=nx, ny=ny, pitch=pitch)
    report = check_sampling(grid, wavelength, z, padding_factor)
    if not report.valid:
        raise SamplingViolation("; ".join(report.messages))
    transfer = _transfer_array(report.padded_shape, pitch, wavelength, z)
    trim = _trim_slices(report.padded_shape, (ny, nx))
    out = _convolve_batch(samples, transfer, trim)
    e_in = np.sum(np.abs(samples) ** 2, axis=(-2, -1), keepdims=True)
    e_out = np.sum(np.abs(out) ** 2, axis=(-2, -1), keepdims=True)
    out *= np.sqrt(e_in / e_out)
    return out


def propagate_samples_multi(
    samples: np.ndarray,
    pitch: float,
    wavelength: float,
    z_list: list[float],
    padding_factor: int = 2,
) -> list[np.ndarray]:
    """Propagate one batch to several planes, sharing the forward FFT.

    Bit-identical to calling propagate_samples per z: the shared spectrum
    is byte-equal to what each per-z call would compute, and every later
    step is the same.
    """
    ny, nx = samples.shape[-2:]
    grid = GridSpec(nx=nx, ny=ny, pitch=pitch)
    reports = [check_sampling(grid, wavelength, z, padding_factor) for z in z_list]
    bad = [r for r in reports if not r.valid]
    if bad:
        raise SamplingViolation("; ".join(bad[0].messages))
    if not z_list:
        return []
    padded = reports[0].padded_shape
    trim = _trim_slices(padded, (ny, nx))
    pad = np.zeros(samples.shape[:-2] + padded, dtype=np.complex128)
    pad[..., trim[0], trim[1]] = samples
    spectrum = sfft.fft2(pad, axes=(-2, -1), workers=1)
    e_in = np.sum(np.abs(samples) ** 2, axis=(-2, -1), keepdims=True)
    outs: list[np.ndarray] = []
    for z in z_list:
        if z == 0.0:
            outs.append(samples.copy())
            continue
        transfer = _transfer_array(padded, pitch, wavelength, z)
        full = sfft.ifft2(spectrum * transfer, axes=(-2, -1), workers=1)
        out = np.ascontiguousarray(full[..., trim[0], trim[1]])
        e_out = np.sum(np.abs(out) ** 2, axis=(-2, -1), keepdims=True)
        out *= np.sqrt(e_in / e_out)
        outs.append(out)
    return outs


def fresnel_propagate(
    E: ComplexField, z: float, plan: PropagationPlan | None = None
) -> ComplexField:
    """Propagate a field by z meters (negative z back-propagates).

    z = 0 returns an identical copy.  Raises SamplingViolation when the
    chirp would alias on this grid (see check_sampling).  A plan, when
    given, must agree with the field grid and the requested z; its cached
    transfer array is then reused.
    """
    if not np.isfinite(z):
        raise InvalidParameter("z must be finite")
    if plan is not None:
        if plan.source_grid != E.grid:
            raise ShapeMismatch("plan was built for a different grid")
        if plan.z != z:
            raise InvalidParameter(f"plan.z = {plan.z} but z = {z} was requested")
        if plan.method == "direct-quadrature-oracle":
            return direct_quadrature_propagate(E, z)
        if z == 0.0:
            return ComplexField(
                grid=E.grid, samples=E.samples.copy(), wavelength=E.wavelength, z=E.z
            )
        report = plan.report()
        if not report.valid:
            raise SamplingViolation("; ".join(report.messages))
        trim = _trim_slices(plan.padded_shape(), E.grid.shape)
        out = _convolve_batch(E.samples, plan.transfer(), trim)
        out *= np.sqrt(np.sum(np.abs(E.samples) ** 2) / np.sum(np.abs(out) ** 2))
        return ComplexField(grid=E.grid, samples=out, wavelength=E.wavelength, z=E.z + z)
    if z == 0.0:
        return ComplexField(
            grid=E.grid, samples=E.samples.copy(), wavelength=E.wavelength, z=E.z
        )
    out = propagate_samples(E.samples, E.grid.pitch, E.wavelength, z)
    return ComplexField(grid=E.grid, samples=out, wavelength=E.wavelength, z=E.z + z)


def direct_quadrature_propagate(E: ComplexField, z: float) -> ComplexField:
    """Brute-force oracle: evaluate the discrete superposition sum directly.

    out[m,n] = sum_{u,v} E[u,v] * exp(i*pi*((x_n-x_v)^2 + (y_m-y_u)^2)/(lambda*z)),
    energy-rescaled like fresnel_propagate.  No FFT anywhere; cost guard at
    64x64.
    """
    ny, nx = E.grid.shape
    if nx > ORACLE_MAX_GRID or ny > ORACLE_MAX_GRID:
        raise GridTooLarge(
            f"direct quadrature is O(n^4); {nx}x{ny} exceeds the {ORACLE_MAX_GRID} limit"
        )
    if not np.isfinite(z):
        raise InvalidParameter("z must be finite")
    if z == 0.0:
        return ComplexField(
            grid=E.grid, samples=E.samples.copy(), wavelength=E.wavelength, z=E.z
        )
    c = np.pi / (E.wavelength * z)
    x = E.grid.x_coords()
    y = E.grid.y_coords()
    ker_y = np.exp(1j * c * (y[:, None] - y[None, :]) ** 2)
    ker_x = np.exp(1j * c * (x[:, None] - x[None, :]) ** 2)
    # separable factorization of the same double sum: sum_v along x, sum_u along y
    out = ker_y @ E.samples @ ker_x.T
    out *= np.sqrt(np.sum(np.abs(E.samples) ** 2) / np.sum(np.abs(out) ** 2))
    return ComplexField(grid=E.grid, samples=out, wavelength=E.wavelength, z=E.z + z)


def fourier_grid(grid: GridSpec) -> GridSpec:
    """Conjugate grid of fourier_plane: pitch 2*pi/(n*pitch) radians/meter."""
    if grid.nx != grid.ny:
        raise ShapeMismatch(
            "fourier_plane needs a square grid; a single spectral pitch cannot "
            f"describe {grid.nx}x{grid.ny}"
        )
    dk = 2.0 * np.pi / (grid.nx * grid.pitch)
    return GridSpec(nx=grid.nx, ny=grid.ny, pitch=dk)


def fourier_samples(samples: np.ndarray) -> np.ndarray:
    """Centered unitary DFT over the last two axes (k = 0 at n//2)."""
    shifted = sfft.ifftshift(samples, axes=(-2, -1))
    spec = sfft.fft2(shifted, axes=(-2, -1), norm="ortho", workers=1)
    return sfft.fftshift(spec, axes=(-2, -1))


def inverse_fourier_samples(samples: np.ndarray) -> np.ndarray:
    shifted = sfft.ifftshift(samples, axes=(-2, -1))
    spec = sfft.ifft2(shifted, axes=(-2, -1), norm="ortho", workers=1)
    return sfft.fftshift(spec, axes=(-2, -1))


def fourier_plane(E: ComplexField) -> ComplexField:
    """Ideal far field: centered unitary Fourier transform of the samples.

    Output axes are angular spatial frequency; Parseval holds exactly up to
    rounding.  Models an ideal collecting lens with the detector in its
    focal plane.
    """
    out_grid = fourier_grid(E.grid)
    return ComplexField(
        grid=out_grid,
        samples=fourier_samples(E.samples),
        wavelength=E.wavelength,
        z=E.z,
    )
