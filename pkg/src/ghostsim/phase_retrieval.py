"""Gerchberg-Saxton phase retrieval from a jointly measured pair of
object-plane and Fourier-plane intensity patterns.

Alternating modulus projections: the iterate keeps the measured near-field
modulus, and each pass swaps in the measured far-field modulus behind the
unitary Fourier transform.  The far-plane modulus error of the iterate is
the classic non-increasing GS metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    DegenerateInput,
    FingerprintMismatch,
    InvalidParameter,
    NonFiniteInput,
    PlaneMismatch,
    ShapeMismatch,
)
from .propagation import fourier_samples, inverse_fourier_samples
from .reconstruct import ReconstructionResult


@dataclass(frozen=True)
class RetrievalProblem:
    near: np.ndarray  # object-plane intensity, >= 0
    far: np.ndarray  # Fourier-plane intensity on the conjugate axes, >= 0
    max_iterations: int = 200
    tolerance: float = 1e-8

    def __post_init__(self):
        near = np.ascontiguousarray(self.near, dtype=np.float64)
        far = np.ascontiguousarray(self.far, dtype=np.float64)
        object.__setattr__(self, "near", near)
        object.__setattr__(self, "far", far)
        if near.ndim != 2 or near.shape != far.shape:
            raise ShapeMismatch(
                f"near {near.shape} and far {far.shape} patterns must be one 2-D shape"
            )
        if not (np.all(np.isfinite(near)) and np.all(np.isfinite(far))):
            raise NonFiniteInput("intensity patterns contain NaN or Inf")
        if near.min() < 0.0 or far.min() < 0.0:
            raise InvalidParameter("intensities must be non-negative (clamp first)")
        if near.sum() <= 0.0 or far.sum() <= 0.0:
            raise InvalidParameter("both patterns need positive total energy")
        if self.max_iterations < 1:
            raise InvalidParameter("need at least one iteration")
        if not self.tolerance >= 0.0:
            raise InvalidParameter("tolerance must be >= 0")


@dataclass
class RetrievalResult:
    estimate: np.ndarray  # complex object-plane field, |estimate| = sqrt(near)
    errors: list[float]  # far-plane modulus error per iteration
    converged: bool
    restart_used: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.estimate)):
            raise NonFiniteInput("retrieval produced a non-finite estimate")


def _run_single(
    problem: RetrievalProblem, phase0: np.ndarray
) -> tuple[np.ndarray, list[float], bool]:
    sqrt_near = np.sqrt(problem.near)
    sqrt_far = np.sqrt(problem.far)
    far_norm = np.sqrt(problem.far.sum())
    g = sqrt_near * np.exp(1j * phase0)
    errors: list[float] = []
    converged = False
    for _ in range(problem.max_iterations):
        F = fourier_samples(g)
        err = float(np.linalg.norm(np.abs(F) - sqrt_far) / far_norm)
        errors.append(err)
        if err <= problem.tolerance:
            converged = True
            break
        F = sqrt_far * np.exp(1j * np.angle(F))
        f = inverse_fourier_samples(F)
        g = sqrt_near * np.exp(1j * np.angle(f))
    return g, errors, converged


def gerchberg_saxton(
    problem: RetrievalProblem,
    seed: int = 2024,
    restarts: int = 1,
    initial_phase: np.ndarray | None = None,
) -> RetrievalResult:
    """Alternating-projection retrieval; the best of `restarts` seeded
    random initializations is returned (first hit wins ties).

    initial_phase pins the starting phase instead (with restarts = 1);
    zeros reproduce the classic deterministic variant.
    """
    if restarts < 1:
        raise InvalidParameter("restarts must be >= 1")
    if initial_phase is not None:
        if restarts != 1:
            raise InvalidParameter("explicit initial phase fixes the run: restarts must be 1")
        phase0 = np.asarray(initial_phase, dtype=np.float64)
        if phase0.shape != problem.near.shape:
            raise ShapeMismatch(
                f"initial phase {phase0.shape} does not match pattern {problem.near.shape}"
            )
        if not np.all(np.isfinite(phase0)):
            raise NonFiniteInput("initial phase contains NaN or Inf")
        starts = [phase0]
    else:
        starts = [
            np.random.Generator(np.random.Philox(key=[seed, k])).random(
                problem.near.shape
            )
            * 2.0
            * np.pi
            for k in range(restarts)
        ]
    best: RetrievalResult | None = None
    for k, phase0 in enumerate(starts):
        g, errors, converged = _run_single(problem, phase0)
        candidate = RetrievalResult(
            estimate=g, errors=errors, converged=converged, restart_used=k
        )
        if best is None or candidate.errors[-1] < best.errors[-1]:
            best = candidate
        if converged:
            break
    return best


def extract_intensities(
    gi_result: ReconstructionResult,
    gd_result: ReconstructionResult,
    max_iterations: int = 200,
    tolerance: float = 1e-8,
) -> RetrievalProblem:
    """Turn a GI/GD result pair into a retrieval problem.

    Correlation estimates dip negative from finite-N noise; both patterns
    are clamped at zero and normalized to unit total.  The GD pattern
    already lives on the Fourier axes conjugate to the GI grid.
    """
    if gi_result.plane.kind != "fresnel":
        raise PlaneMismatch(f"near pattern must be an object plane, got {gi_result.plane.label()}")
    if gd_result.plane.kind != "fourier":
        raise PlaneMismatch(f"far pattern must be a Fourier plane, got {gd_result.plane.label()}")
    if gi_result.fingerprint is None or gd_result.fingerprint is None:
        raise FingerprintMismatch("results lack experiment fingerprints")
    if gi_result.fingerprint != gd_result.fingerprint:
        raise FingerprintMismatch(
            "GI and GD results come from different experiments: "
            f"{gi_result.fingerprint} vs {gd_result.fingerprint}"
        )
    if gi_result.G.shape != gd_result.G.shape:
        raise ShapeMismatch(
            f"pattern shapes differ: {gi_result.G.shape} vs {gd_result.G.shape}"
        )
    patterns = []
    for result in (gi_result, gd_result):
        clamped = np.maximum(result.G, 0.0)
        total = clamped.sum()
        if total <= 0.0:
            raise DegenerateInput(
                f"{result.plane.label()} pattern is non-positive everywhere"
            )
        patterns.append(clamped / total)
    return RetrievalProblem(
        near=patterns[0],
        far=patterns[1],
        max_iterations=max_iterations,
        tolerance=tolerance,
    )


def align_global_phase(estimate: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Rotate the estimate's global phase to maximize overlap with the
    reference (the gauge GS cannot fix)."""
    if estimate.shape != reference.shape:
        raise ShapeMismatch(f"cannot align {estimate.shape} with {reference.shape}")
    overlap = np.vdot(estimate, reference)
    if overlap == 0.0:
        return np.array(estimate, copy=True)
    return estimate * (overlap / np.abs(overlap))


def relative_field_error(estimate: np.ndarray, reference: np.ndarray) -> float:
    """L2 error after global-phase alignment, relative to the reference."""
    norm = np.linalg.norm(reference)
    if norm == 0.0:
        raise DegenerateInput("reference field is identically zero")
    aligned = align_global_phase(estimate, reference)
    return float(np.linalg.norm(aligned - reference) / norm)
