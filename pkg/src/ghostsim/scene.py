"""Virtual objects and single-pixel detectors.

The object is a complex transmission t(x, y) at distance L.  Two detector
models: a bucket that integrates the transmitted intensity, and an on-axis
pinhole behind an ideal collecting lens that samples the k = 0 Fourier
component of the transmitted field.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    EmptyImage,
    GeometryMismatch,
    GridMismatch,
    InvalidParameter,
    PlaneMismatch,
)
from .field import ComplexField, GridSpec
from .io import read_image_levels

SUPPORT_THRESHOLD = 0.5  # fraction of max |t| counted as "object" in analysis


@dataclass
class TransmissionObject:
    grid: GridSpec
    samples: np.ndarray  # complex transmission, |t| <= 1
    L: float

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.complex128)
        if self.samples.shape != self.grid.shape:
            raise GridMismatch(
                f"transmission shape {self.samples.shape} != grid {self.grid.shape}"
            )
        if not np.isfinite(self.L) or self.L < 0.0:
            raise InvalidParameter(f"object distance must be non-negative, got {self.L}")
        mag = np.abs(self.samples)
        if not np.all(np.isfinite(mag)):
            raise InvalidParameter("transmission contains NaN or Inf")
        if mag.max() > 1.0 + 1e-12:
            raise InvalidParameter(f"|t| must not exceed 1, max is {mag.max():.6g}")
        if not np.any(mag > 0.0):
            raise EmptyImage("object support area is zero")

    @property
    def support(self) -> np.ndarray:
        """Boolean analysis mask: |t| above half of its maximum."""
        mag = np.abs(self.samples)
        return mag > SUPPORT_THRESHOLD * mag.max()

    def open_area(self) -> float:
        """Effective transmissive area, integral of |t|^2 (meters^2)."""
        return float(np.sum(np.abs(self.samples) ** 2) * self.grid.pitch**2)


@dataclass(frozen=True)
class MeasurementRecord:
    """One detector reading.  (master_seed, r) regenerate the speckle field,
    so a record plus the experiment geometry is fully self-describing."""

    r: int
    kind: str  # bucket | pinhole
    value: float
    master_seed: int

    def __post_init__(self):
        if self.kind not in ("bucket", "pinhole"):
            raise InvalidParameter(f"unknown detector kind {self.kind!r}")
        if not np.isfinite(self.value) or self.value < 0.0:
            raise InvalidParameter(f"detector value must be >= 0, got {self.value}")
        if self.r < 0 or self.master_seed < 0:
            raise InvalidParameter("realization index and seed must be non-negative")


def make_double_slit(
    slit_width: float, separation: float, slit_height: float, grid: GridSpec, L: float
) -> TransmissionObject:
    """Two vertical slits, centers `separation` apart along x.

    Binary mask on pixel centers: a sample is open iff its center lies
    inside a slit.
    """
    if slit_width <= 0.0 or slit_height <= 0.0:
        raise GeometryMismatch("slit width and height must be positive")
    if separation <= slit_width:
        raise GeometryMismatch(
            f"separation {separation:g} must exceed slit width {slit_width:g} "
            "(slits may not overlap)"
        )
    ex, ey = grid.extent
    if separation + slit_width > ex or slit_height > ey:
        raise GeometryMismatch(
            f"slit pair ({separation + slit_width:g} x {slit_height:g} m) "
            f"does not fit the {ex:g} x {ey:g} m grid"
        )
    x = grid.x_coords()
    y = grid.y_coords()
    in_slit = (np.abs(x - separation / 2) < slit_width / 2) | (
        np.abs(x + separation / 2) < slit_width / 2
    )
    t = np.outer(np.abs(y) < slit_height / 2, in_slit).astype(np.complex128)
    return TransmissionObject(grid=grid, samples=t, L=L)


def _box_average_resample(
    levels: np.ndarray, src_pitch: float, grid: GridSpec
) -> np.ndarray:
    """Exact area average of a piecewise-constant source onto the target grid.

    The source image is centered on the grid; everything outside it is
    opaque (0).  Uses the bilinear-interpolated cumulative integral, which
    is exact for box averages of a piecewise-constant function.
    """
    h, w = levels.shape
    # cumulative integral in source-pixel units, zero-padded on the low side
    S = np.zeros((h + 1, w + 1))
    np.cumsum(np.cumsum(levels, axis=0), axis=1, out=S[1:, 1:])

    def integral(yc: np.ndarray, xc: np.ndarray) -> np.ndarray:
        # evaluate the bilinear extension of S at arbitrary (clipped) coords
        yc = np.clip(yc, 0.0, h)
        xc = np.clip(xc, 0.0, w)
        y0 = np.minimum(yc.astype(int), h - 1)
        x0 = np.minimum(xc.astype(int), w - 1)
        fy = yc - y0
        fx = xc - x0
        s00 = S[y0, :][:, x0]
        s01 = S[y0, :][:, x0 + 1]
        s10 = S[y0 + 1, :][:, x0]
        s11 = S[y0 + 1, :][:, x0 + 1]
        fy = fy[:, None]
        fx = fx[None, :]
        return (
            s00 * (1 - fy) * (1 - fx)
            + s01 * (1 - fy) * fx
            + s10 * fy * (1 - fx)
            + s11 * fy * fx
        )

    # target pixel edges in source-pixel coordinates (source centered on grid)
    x_edges_lo = (grid.x_coords() - grid.pitch / 2 - grid.x0) / src_pitch + w / 2
    x_edges_hi = x_edges_lo + grid.pitch / src_pitch
    y_edges_lo = (grid.y_coords() - grid.pitch / 2 - grid.y0) / src_pitch + h / 2
    y_edges_hi = y_edges_lo + grid.pitch / src_pitch

    area = (grid.pitch / src_pitch) ** 2
    total = (
        integral(y_edges_hi, x_edges_hi)
        - integral(y_edges_lo, x_edges_hi)
        - integral(y_edges_hi, x_edges_lo)
        + integral(y_edges_lo, x_edges_lo)
    )
    return total / area


def load_object(path, physical_width: float, L: float, grid: GridSpec) -> TransmissionObject:
    """Build an object from a raster image scaled to `physical_width` meters.

    Gray levels map linearly to amplitude transmission in [0, 1]; the image
    is centered on the grid and resampled to the grid pitch by exact area
    averaging.  Phase is zero everywhere.
    """
    if physical_width <= 0.0:
        raise InvalidParameter(f"physical width must be positive, got {physical_width}")
    levels, maxval = read_image_levels(path)
    if not np.any(levels):
        raise EmptyImage(f"{path}: all-black image has no transmissive area")
    amplitude = levels.astype(np.float64) / maxval
    src_pitch = physical_width / levels.shape[1]
    t = _box_average_resample(amplitude, src_pitch, grid)
    t = np.clip(t, 0.0, 1.0)
    if not np.any(t > 0.0):
        raise EmptyImage(
            f"{path}: object vanished in resampling; physical width {physical_width:g} m "
            f"may be too small for pitch {grid.pitch:g} m"
        )
    return TransmissionObject(grid=grid, samples=t.astype(np.complex128), L=L)


def _check_measurement_geometry(E: ComplexField, T: TransmissionObject) -> None:
    if E.grid != T.grid:
        raise GridMismatch("field and object live on different grids")
    if abs(E.z - T.L) > E.grid.pitch:
        raise PlaneMismatch(
            f"field is at z = {E.z:g} m but the object sits at L = {T.L:g} m"
        )


def bucket_measure(E: ComplexField, T: TransmissionObject) -> float:
    """Total intensity behind the object: sum |E|^2 |t|^2 pitch^2.

    For binary objects |t|^2 = |t|, so this equals the plain sum of the
    transmitted intensity over the open area.
    """
    _check_measurement_geometry(E, T)
    value = np.sum(np.abs(E.samples * T.samples) ** 2) * E.grid.pitch**2
    return float(value)


def pinhole_measure(
    E: ComplexField, T: TransmissionObject, k_offset: tuple[float, float] = (0.0, 0.0)
) -> float:
    """On-axis Fourier component of the transmitted field: |sum E t pitch^2|^2.

    Models an ideal lens with a single-sample pinhole on the optical axis;
    k_offset (radians/meter) moves the pinhole off axis.
    """
    _check_measurement_geometry(E, T)
    transmitted = E.samples * T.samples
    if k_offset != (0.0, 0.0):
        kx, ky = k_offset
        x = E.grid.x_coords()
        y = E.grid.y_coords()
        transmitted = transmitted * np.exp(-1j * (ky * y[:, None] + kx * x[None, :]))
    amp = np.sum(transmitted) * E.grid.pitch**2
    return float(np.abs(amp) ** 2)


def measure(E: ComplexField, T: TransmissionObject, kind: str) -> float:
    if kind == "bucket":
        return bucket_measure(E, T)
    if kind == "pinhole":
        return pinhole_measure(E, T)
    raise InvalidParameter(f"unknown detector kind {kind!r}")
