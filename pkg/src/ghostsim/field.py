"""Source-plane construction: sampling grids, complex fields, SLM phase masks.

The virtual source is a Gaussian beam reflected off a phase-only SLM that
displays one pseudo-random mask per realization.  Masks are pure functions
of (master seed, realization index), so any realization can be regenerated
at any time, in any order, on any number of threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    GeometryMismatch,
    GridTooSmall,
    InvalidParameter,
    NonFiniteInput,
    PlaneMismatch,
    ShapeMismatch,
)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Uniform square-pixel sampling grid.

    Sample (iy, ix) sits at x = (ix - nx//2)*pitch + x0 and
    y = (iy - ny//2)*pitch + y0, so the coordinate origin falls on an
    actual sample for even and odd sizes alike.
    """

    nx: int
    ny: int
    pitch: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise GridTooSmall(f"grid must be at least 2x2, got {self.nx}x{self.ny}")
        if not np.isfinite(self.pitch) or self.pitch <= 0.0:
            raise InvalidParameter(f"pitch must be positive and finite, got {self.pitch}")

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape (ny, nx) of fields sampled on this grid."""
        return (self.ny, self.nx)

    @property
    def extent(self) -> tuple[float, float]:
        """Physical side lengths (x, y) in meters."""
        return (self.nx * self.pitch, self.ny * self.pitch)

    def x_coords(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx // 2) * self.pitch + self.x0

    def y_coords(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny // 2) * self.pitch + self.y0

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays (X, Y), each of shape (ny, nx)."""
        return np.meshgrid(self.x_coords(), self.y_coords())


@dataclass
class ComplexField:
    """Monochromatic scalar field sampled on a GridSpec.

    ``z`` is the distance from the SLM plane in meters; ``samples`` has
    shape (ny, nx) and is stored as complex128.
    """

    grid: GridSpec
    samples: np.ndarray
    wavelength: float
    z: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.shape != self.grid.shape:
            raise ShapeMismatch(
                f"samples shape {self.samples.shape} does not match grid {self.grid.shape}"
            )
        if not np.isfinite(self.wavelength) or self.wavelength <= 0.0:
            raise InvalidParameter(f"wavelength must be positive, got {self.wavelength}")
        if not np.isfinite(self.z):
            raise InvalidParameter("z must be finite")
        if not np.all(np.isfinite(self.samples)):
            raise NonFiniteInput("field samples contain NaN or Inf")
        if not self.samples.any():
            raise InvalidParameter("field carries zero energy")

    def energy(self) -> float:
        """Total energy sum(|E|^2) * pitch^2."""
        return float(np.sum(np.abs(self.samples) ** 2)) * self.grid.pitch**2

    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2


@dataclass(frozen=True)
class PhaseMask:
    """One SLM phase realization on a coarse cell lattice.

    ``phases`` has shape (cells_y, cells_x) with values in [0, 2*pi); each
    cell is rendered as macro_factor x macro_factor SLM pixels.
    """

    phases: np.ndarray
    macro_factor: int
    master_seed: int
    realization: int

    @property
    def cells(self) -> tuple[int, int]:
        """(cells_x, cells_y)."""
        return (self.phases.shape[1], self.phases.shape[0])


def make_gaussian_input(grid: GridSpec, w0: float, wavelength: float) -> ComplexField:
    """Gaussian beam E = exp(-(x^2+y^2)/w0^2) at z=0, unit total energy.

    w0 is the amplitude 1/e radius.  The grid must span at least 4*w0 per
    axis; beyond that the clipped energy is below 1e-6 of the total.
    """
    if not np.isfinite(w0) or w0 <= 0.0:
        raise InvalidParameter(f"waist must be positive, got {w0}")
    if not np.isfinite(wavelength) or wavelength <= 0.0:
        raise InvalidParameter(f"wavelength must be positive, got {wavelength}")
    ex, ey = grid.extent
    if ex < 4.0 * w0 or ey < 4.0 * w0:
        raise GridTooSmall(
            f"grid extent {ex:.3e} x {ey:.3e} m is below 4*w0 = {4 * w0:.3e} m; "
            "the beam would be clipped"
        )
    X, Y = grid.mesh()
    env = np.exp(-(X**2 + Y**2) / w0**2)
    env /= np.sqrt(np.sum(env**2)) * grid.pitch
    return ComplexField(grid=grid, samples=env.astype(np.complex128), wavelength=wavelength, z=0.0)


def random_phase_mask(
    master_seed: int,
    realization: int,
    macro_dims: tuple[int, int],
    macro_factor: int,
) -> PhaseMask:
    """Draw one i.i.d. uniform [0, 2*pi) phase mask.

    Philox is counter based: the key is (master_seed, realization) and the
    cell index is the counter, so cell values are pure functions of
    (seed, r, cell) regardless of generation order or thread count.
    """
    cx, cy = macro_dims
    if cx < 1 or cy < 1:
        raise InvalidParameter(f"macro dims must be at least 1x1, got {cx}x{cy}")
    if macro_factor < 1:
        raise InvalidParameter(f"macro factor must be at least 1, got {macro_factor}")
    if master_seed < 0 or realization < 0:
        raise InvalidParameter("seed and realization index must be non-negative")
    phases = mask_phases(master_seed, realization, cx, cy)
    return PhaseMask(
        phases=phases,
        macro_factor=macro_factor,
        master_seed=master_seed,
        realization=realization,
    )


def mask_phases(master_seed: int, realization: int, cx: int, cy: int) -> np.ndarray:
    """Raw phase array for one realization; the hot path behind random_phase_mask."""
    key = np.array([master_seed, realization], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.random((cy, cx)) * TWO_PI


def mask_pixel_phases(phases: np.ndarray, macro_factor: int, shape: tuple[int, int]) -> np.ndarray:
    """Render cell phases to SLM pixels and embed centered in a (ny, nx) frame.

    Pixels outside the mask area keep phase 0.
    """
    ny, nx = shape
    block = np.repeat(np.repeat(phases, macro_factor, axis=0), macro_factor, axis=1)
    my, mx = block.shape
    if mx > nx or my > ny:
        raise GeometryMismatch(
            f"mask spans {mx}x{my} samples but the grid is only {nx}x{ny}"
        )
    full = np.zeros(shape, dtype=np.float64)
    oy, ox = (ny - my) // 2, (nx - mx) // 2
    full[oy : oy + my, ox : ox + mx] = block
    return full


def apply_mask(field: ComplexField, mask: PhaseMask) -> ComplexField:
    """Multiply the field by e^{i*phi_r}; amplitude passes through untouched."""
    if field.z != 0.0:
        raise PlaneMismatch(f"masks live at the SLM plane z=0, field is at z={field.z}")
    phi = mask_pixel_phases(mask.phases, mask.macro_factor, field.grid.shape)
    out = field.samples * np.exp(1j * phi)
    return ComplexField(grid=field.grid, samples=out, wavelength=field.wavelength, z=0.0)
