"""Temporal depth from the spectral decay of the one-step stochastic matrix."""
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from config.logging_config import get_logger

logger = get_logger(__name__)

UNIT_MAGNITUDE_TOL = 1e-9
REPEATED_EIGENVALUE_TOL = 1e-8
MAX_DENSE_ALPHABET = 64


@dataclass(frozen=True)
class DepthEstimate:
    depth: int
    epsilon: float
    eigen_magnitudes: Tuple[float, ...]
    capped: bool
    repeated_eigenvalues: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "depth": self.depth,
            "epsilon": self.epsilon,
            "eigen_magnitudes": list(self.eigen_magnitudes),
            "capped": self.capped,
            "repeated_eigenvalues": self.repeated_eigenvalues,
        }


def _eigenvalues(one_step: np.ndarray) -> np.ndarray:
    one_step = np.asarray(one_step, dtype=np.float64)
    if one_step.ndim != 2 or one_step.shape[0] != one_step.shape[1]:
        raise ValueError(f"One-step matrix must be square, got shape {one_step.shape}.")
    if one_step.shape[0] > MAX_DENSE_ALPHABET:
        raise ValueError(f"Dense eigen-solve supports |A| <= {MAX_DENSE_ALPHABET}, got {one_step.shape[0]}.")
    return np.linalg.eigvals(one_step)


def eigenvalue_magnitudes(one_step: np.ndarray) -> np.ndarray:
    """|λ| of every eigenvalue, descending."""
    return np.sort(np.abs(_eigenvalues(one_step)))[::-1]


def has_repeated_eigenvalues(one_step: np.ndarray) -> bool:
    values = _eigenvalues(one_step)
    if values.size <= 2:
        return False
    gaps = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(gaps, np.inf)
    return bool(np.any(gaps < REPEATED_EIGENVALUE_TOL))


def estimate_depth(one_step: np.ndarray, epsilon: float, d_max: int = 8, depth_floor: int = 1) -> DepthEstimate:
    """Smallest D >= depth_floor with Σ_{j>=2} |λ_j|^(D+1) < ε, capped at d_max."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}.")
    if d_max < 1 or depth_floor < 1 or depth_floor > d_max:
        raise ValueError(f"Need 1 <= depth_floor <= d_max, got depth_floor={depth_floor}, d_max={d_max}.")
    magnitudes = eigenvalue_magnitudes(one_step)
    repeated = has_repeated_eigenvalues(one_step)
    if repeated:
        logger.warning("One-step matrix has repeated eigenvalues; the trace bound assumes a diagonalizable matrix.")
    tail = magnitudes[1:]
    report = tuple(float(m) for m in magnitudes)

    if np.any(tail >= 1.0 - UNIT_MAGNITUDE_TOL):
        logger.warning(f"Spectrum has a non-leading eigenvalue of unit magnitude; depth capped at {d_max}.")
        return DepthEstimate(d_max, epsilon, report, True, repeated)

    for depth in range(depth_floor, d_max + 1):
        if float(np.sum(tail ** (depth + 1))) < epsilon:
            logger.info(f"Estimated depth D={depth} at epsilon={epsilon}.")
            return DepthEstimate(depth, epsilon, report, False, repeated)

    logger.warning(f"Spectral sum still >= {epsilon} at D={d_max}; depth capped.")
    return DepthEstimate(d_max, epsilon, report, True, repeated)
