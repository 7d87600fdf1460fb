"""Quantitative checks of the simulated physics: speckle statistics and
coherence width, closed-form resolution scales, SNR-vs-N scaling, and the
focus metric used for depth sectioning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage, stats

from .config import ExperimentConfig
from .errors import DegenerateInput, InsufficientData, InvalidParameter, ShapeMismatch
from .field import GridSpec
from .propagation import check_sampling, propagate_samples
from .reconstruct import (
    MeasurementRecord,
    ReconstructionResult,
    chunk_size,
    masked_beam_stack,
    replay_with_checkpoints,
)
from .scene import TransmissionObject

MIN_ENSEMBLE = 100
MIN_COHERENCE_CELLS = 2500  # beam region must span ~50x50 speckles


@dataclass(frozen=True)
class ResolutionReport:
    """Closed-form resolution scales of a pseudothermal source of waist w0
    observed at distance z."""

    dx: float  # transverse coherence width, lambda*z/(pi*w0)
    dz: float  # axial coherence length, 2*pi*dx^2/lambda
    dk: float  # far-field coherence width, 1/w0
    product: float  # dx*dk

    def __post_init__(self):
        if not (self.dx > 0 and self.dz > 0 and self.dk > 0):
            raise InvalidParameter("resolution scales must be positive")


def theoretical_resolution(wavelength: float, w0: float, z: float) -> ResolutionReport:
    if wavelength <= 0 or w0 <= 0 or z <= 0:
        raise InvalidParameter("wavelength, w0, z must all be positive")
    dx = wavelength * z / (math.pi * w0)
    dz = 2.0 * math.pi * dx**2 / wavelength
    dk = 1.0 / w0
    return ResolutionReport(dx=dx, dz=dz, dk=dk, product=dx * dk)


@dataclass
class SpeckleEnsemble:
    """Streaming moments of reference intensities at one plane.

    Holds per-pixel first and second moments, the ensemble-summed intensity
    power spectrum (for the autocovariance via Wiener-Khinchin), and full
    traces at a few probe pixels for distribution tests.  Memory is O(grid)
    regardless of realization count.
    """

    grid: GridSpec
    z: float
    n: int
    sum_I: np.ndarray
    sum_I2: np.ndarray
    sum_spec: np.ndarray  # sum over r of |rfft2(I_r)|^2
    traces: dict[tuple[int, int], np.ndarray]

    def mean(self) -> np.ndarray:
        return self.sum_I / self.n

    def variance(self) -> np.ndarray:
        v = self.sum_I2 / self.n - self.mean() ** 2
        return np.maximum(v, 0.0)

    def autocovariance(self) -> np.ndarray:
        """Centered spatial autocovariance of the intensity fluctuations.

        Circular wrap terms are identical in the raw product average and in
        the mean-field product, so they cancel here for shifts much smaller
        than the window.
        """
        shape = self.grid.shape
        raw = sfft.irfft2(self.sum_spec / self.n, s=shape, workers=1)
        mean_spec = np.abs(sfft.rfft2(self.mean(), workers=1)) ** 2
        cov = raw - sfft.irfft2(mean_spec, s=shape, workers=1)
        return sfft.fftshift(cov)


def collect_speckle_ensemble(
    config: ExperimentConfig,
    z: float | None = None,
    n: int | None = None,
    probe_points: tuple[tuple[int, int], ...] = (),
) -> SpeckleEnsemble:
    """Generate n reference realizations at plane z and stream their moments.

    probe_points are (row, col) pixels whose full intensity histories are
    kept (defaults to the grid center).
    """
    z = config.L if z is None else z
    n = config.n_realizations if n is None else n
    grid = config.grid()
    report = check_sampling(grid, config.wavelength, z)
    if not report.valid:
        from .errors import SamplingViolation

        raise SamplingViolation("; ".join(report.messages))
    if not probe_points:
        probe_points = ((grid.ny // 2, grid.nx // 2),)
    beam = config.input_beam().samples
    sum_I = np.zeros(grid.shape)
    sum_I2 = np.zeros(grid.shape)
    sum_spec = np.zeros((grid.ny, grid.nx // 2 + 1))
    traces = {pt: np.empty(n) for pt in probe_points}
    size = chunk_size(grid)
    for lo in range(0, n, size):
        r_values = np.arange(lo, min(lo + size, n))
        stack = masked_beam_stack(beam, config, r_values)
        if z != 0.0:
            stack = propagate_samples(stack, config.pitch, config.wavelength, z)
        I = np.abs(stack) ** 2
        sum_I += I.sum(axis=0)
        sum_I2 += np.sum(I * I, axis=0)
        sum_spec += np.sum(np.abs(sfft.rfft2(I, axes=(-2, -1), workers=1)) ** 2, axis=0)
        for (py, px), trace in traces.items():
            trace[lo : lo + len(r_values)] = I[:, py, px]
    return SpeckleEnsemble(
        grid=grid, z=z, n=n, sum_I=sum_I, sum_I2=sum_I2, sum_spec=sum_spec, traces=traces
    )


@dataclass(frozen=True)
class SpeckleStats:
    contrast: float  # sd/mean of intensity, averaged over the beam region
    coherence_width: float  # meters
    exp_fit_pvalue: float  # KS test of point intensity against an exponential
    n_realizations: int

    def __post_init__(self):
        if self.contrast <= 0 or self.coherence_width <= 0:
            raise InvalidParameter("contrast and coherence width must be positive")


def _hwhm_from_cut(cut: np.ndarray, center: int, pitch: float) -> float:
    """Half-width at half-max of a peaked symmetric cut, with sub-sample
    linear interpolation; averaged over both directions."""
    peak = cut[center]
    widths = []
    for direction in (1, -1):
        idx = center
        while True:
            nxt = idx + direction
            if nxt < 0 or nxt >= len(cut):
                return float("nan")
            if cut[nxt] < peak / 2:
                frac = (cut[idx] - peak / 2) / (cut[idx] - cut[nxt])
                widths.append((abs(nxt - center) - 1 + frac) * pitch)
                break
            idx = nxt
    return float(np.mean(widths))


def speckle_stats(
    ensemble: SpeckleEnsemble, region: np.ndarray | None = None
) -> SpeckleStats:
    """Contrast, coherence width, and exponential-fit p-value of an ensemble.

    region defaults to pixels whose mean intensity exceeds 1/e^2 of the max.
    The coherence width is the Gaussian-equivalent 1/e half-width of the
    normalized intensity autocovariance, HWHM / sqrt(ln 2): exact when the
    source envelope is Gaussian, where |mu(d)|^2 = exp(-d^2/dx^2).
    """
    if ensemble.n < MIN_ENSEMBLE:
        raise InsufficientData(
            f"need at least {MIN_ENSEMBLE} realizations, got {ensemble.n}"
        )
    mean = ensemble.mean()
    if region is None:
        region = mean > mean.max() * np.exp(-2)
    if region.shape != ensemble.grid.shape:
        raise ShapeMismatch("region mask shape does not match the ensemble grid")
    sd = np.sqrt(ensemble.variance())
    contrast = float(np.mean(sd[region] / mean[region]))

    cov = ensemble.autocovariance()
    cy, cx = ensemble.grid.ny // 2, ensemble.grid.nx // 2
    pitch = ensemble.grid.pitch
    hw_x = _hwhm_from_cut(cov[cy, :], cx, pitch)
    hw_y = _hwhm_from_cut(cov[:, cx], cy, pitch)
    if not (np.isfinite(hw_x) and np.isfinite(hw_y)):
        raise InsufficientData("autocovariance does not decay inside the window")
    width = float(np.hypot(hw_x, hw_y) / np.sqrt(2.0) / np.sqrt(np.log(2.0)))

    cells = region.sum() * pitch**2 / width**2
    if cells < MIN_COHERENCE_CELLS:
        raise InsufficientData(
            f"beam region spans only {cells:.0f} coherence cells; "
            f"need {MIN_COHERENCE_CELLS} for stable statistics"
        )

    # KS against an exponential with the trace's own mean (fully developed
    # speckle at a point has negative-exponential intensity)
    pvalues = []
    for trace in ensemble.traces.values():
        scale = trace.mean()
        if scale <= 0:
            continue
        pvalues.append(stats.kstest(trace, "expon", args=(0.0, scale)).pvalue)
    if not pvalues:
        raise InsufficientData("no usable probe-point traces")
    return SpeckleStats(
        contrast=contrast,
        coherence_width=width,
        exp_fit_pvalue=float(np.median(pvalues)),
        n_realizations=ensemble.n,
    )


@dataclass(frozen=True)
class SnrCurve:
    points: tuple[tuple[int, float], ...]  # (N, snr), N strictly increasing
    slope: float  # d log SNR / d log N
    intercept: float
    n_s_estimate: float  # object open area / coherence area

    def __post_init__(self):
        ns = [n for n, _ in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise InvalidParameter("realization counts must be strictly increasing")
        if any(s < 0 for _, s in self.points):
            raise InvalidParameter("SNR values must be non-negative")


def snr_regions(
    truth: TransmissionObject, dx: float
) -> tuple[np.ndarray, np.ndarray]:
    """(signal, background) masks: the object support, and a surrounding
    band inside the illuminated center but clear of the blurred support."""
    support = truth.support
    pitch = truth.grid.pitch
    blur_px = max(1, int(np.ceil(dx / pitch)))
    fat = ndimage.binary_dilation(support, iterations=3 * blur_px)
    ny, nx = truth.grid.shape
    cy, cx = ny // 2, nx // 2
    central = np.zeros((ny, nx), dtype=bool)
    central[cy - ny // 4 : cy + ny // 4, cx - nx // 4 : cx + nx // 4] = True
    background = central & ~fat
    if not background.any():
        raise InsufficientData("no background pixels left outside the object support")
    return support, background


def snr_of(G: np.ndarray, signal: np.ndarray, background: np.ndarray) -> float:
    sd = float(np.std(G[background]))
    if sd == 0.0:
        raise DegenerateInput("background has zero variance")
    return float(np.mean(G[signal]) / sd)


def snr_curve_from_results(
    results: list[tuple[int, ReconstructionResult]],
    truth: TransmissionObject,
    config: ExperimentConfig,
) -> SnrCurve:
    """Fit the SNR-vs-N law from prefix reconstructions of one record set."""
    if len(results) < 2:
        raise InsufficientData("need at least two (N, result) points to fit a slope")
    res = theoretical_resolution(config.wavelength, config.w0, config.L)
    signal, background = snr_regions(truth, res.dx)
    points = tuple((n, snr_of(r.G, signal, background)) for n, r in results)
    logs = np.log([n for n, _ in points])
    vals = [s for _, s in points]
    if any(v <= 0 for v in vals):
        raise InsufficientData("non-positive SNR; object not detected at some N")
    slope, intercept = np.polyfit(logs, np.log(vals), 1)
    coherence_area = math.pi * res.dx**2 / 4.0
    return SnrCurve(
        points=points,
        slope=float(slope),
        intercept=float(intercept),
        n_s_estimate=truth.open_area() / coherence_area,
    )


def snr_curve(
    records: list[MeasurementRecord],
    config: ExperimentConfig,
    checkpoints: tuple[int, ...],
    truth: TransmissionObject,
) -> SnrCurve:
    """Reconstruct at each checkpoint (one streaming replay) and fit the
    log-log slope of SNR against N."""
    results = replay_with_checkpoints(records, config, list(checkpoints))
    return snr_curve_from_results(results, truth, config)


def sharpness(G: np.ndarray, support: np.ndarray | None = None) -> float:
    """Normalized high-frequency energy sum|grad g|^2 / sum g^2 of the
    mean-removed image over the support region.  Relative use only: the
    value depends on pixel size.  Raises DegenerateInput on constant G."""
    G = np.asarray(G, dtype=np.float64)
    if support is None:
        support = np.ones(G.shape, dtype=bool)
    if support.shape != G.shape:
        raise ShapeMismatch("support mask shape does not match G")
    g = G - np.mean(G[support])
    den = float(np.sum(g[support] ** 2))
    if den == 0.0:
        raise DegenerateInput("sharpness of a constant image is undefined")
    gy, gx = np.gradient(g)
    num = float(np.sum(gy[support] ** 2) + np.sum(gx[support] ** 2))
    return num / den


def ncc(a: np.ndarray, b: np.ndarray, region: np.ndarray | None = None) -> float:
    """Pearson correlation of two images over a region (default: everywhere)."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot correlate {a.shape} with {b.shape}")
    if region is not None:
        a = a[region]
        b = b[region]
    a = a.ravel() - a.mean()
    b = b.ravel() - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0.0:
        raise DegenerateInput("constant image has no normalized correlation")
    return float(np.dot(a, b) / denom)


def blur_to_resolution(image: np.ndarray, width: float, pitch: float) -> np.ndarray:
    """Convolve with the coherence kernel exp(-d^2/width^2): the point-spread
    the correlation estimator applies to |t|^2."""
    if width <= 0 or pitch <= 0:
        raise InvalidParameter("width and pitch must be positive")
    return ndimage.gaussian_filter(np.asarray(image, dtype=np.float64), width / np.sqrt(2) / pitch)


def fringe_spacing(profile: np.ndarray, dk: float, min_feature: float = 0.0) -> float:
    """Period (radians/meter) of the dominant fringe in a Fourier-plane cut.

    The intensity profile's own spectrum peaks at the aperture separation d
    (autocorrelation); the fringe period is then 2*pi/d.  min_feature
    (meters) masks the autocorrelation's DC lump, which extends to the
    aperture feature size.
    """
    n = len(profile)
    ac = np.abs(np.fft.rfft(profile))
    x_step = 2.0 * np.pi / (n * dk)  # conjugate (position) spacing
    lo = max(2, int(np.ceil(1.5 * min_feature / x_step)))
    if lo >= len(ac) - 1:
        raise InsufficientData("profile too short for the requested feature size")
    i = lo + int(np.argmax(ac[lo : n // 2]))
    den = ac[i - 1] - 2 * ac[i] + ac[i + 1]
    off = 0.5 * (ac[i - 1] - ac[i + 1]) / den if den != 0 else 0.0
    d = (i + off) * x_step
    return 2.0 * np.pi / d


def depth_sharpness_curve(
    results: list[ReconstructionResult], support: np.ndarray
) -> list[tuple[float, float]]:
    """(z, sharpness) for a stack of object-plane reconstructions."""
    out = []
    for res in results:
        if res.plane.kind != "fresnel":
            raise InvalidParameter("depth curves are defined for fresnel planes")
        out.append((float(res.plane.z), sharpness(res.G, support)))
    return out
