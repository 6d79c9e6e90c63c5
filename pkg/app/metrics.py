"""Anomaly statistics from inferred models and feature export."""
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from config.logging_config import get_logger
from .dmarkov import DMarkovModel
from .exceptions import ZeroProbability
from .reduce import ReducedModel, pairwise_kl_distance

logger = get_logger(__name__)

AnyModel = Union[DMarkovModel, ReducedModel]


@dataclass(frozen=True)
class AnomalyRecord:
    sample_id: str
    delta_m: float
    h_m: float
    depth: int
    selected_n: int
    delta_m_reduced: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def cluster_divergence(model: AnyModel) -> float:
    """Largest symmetric K-L distance between any two states' emission rows."""
    distances = pairwise_kl_distance(np.asarray(model.emission))
    return float(distances.max()) if distances.size else 0.0


def symbol_marginal(model: AnyModel) -> np.ndarray:
    """Pr(A) = Σ_q π(q)·Ã[q]."""
    return np.asarray(model.stationary, dtype=np.float64) @ np.asarray(model.emission, dtype=np.float64)


def discrepancy_statistic(model: AnyModel, one_sided: bool = False) -> float:
    """π-weighted K-L distance of every emission row to the symbol marginal.

    The symmetric distance is used unless ``one_sided`` is set, which gives
    Σ_q π(q)·D_KL(Ã[q] ‖ Pr(A)).
    """
    emission = np.asarray(model.emission, dtype=np.float64)
    pi = np.asarray(model.stationary, dtype=np.float64)
    marginal = symbol_marginal(model)
    if np.any(marginal <= 0.0):
        raise ZeroProbability("Symbol marginal has zero entries; the discrepancy statistic is undefined.")
    log_ratio = np.log(marginal)[None, :]
    if one_sided:
        with np.errstate(divide='ignore', invalid='ignore'):
            terms = np.where(emission > 0, emission * (np.log(np.where(emission > 0, emission, 1.0)) - log_ratio), 0.0)
    else:
        if np.any(emission <= 0.0):
            raise ZeroProbability("Emission matrix has zero entries; the symmetric discrepancy is undefined.")
        terms = (emission - marginal[None, :]) * (np.log(emission) - log_ratio)
    return float(max(0.0, pi @ terms.sum(axis=1)))


def simplex_coordinates(reduced: AnyModel, sample_id: str) -> pd.DataFrame:
    """One row per state: sample_id, state_id, p0..p{|A|-1}."""
    emission = np.asarray(reduced.emission, dtype=np.float64)
    if emission.shape[1] != 3:
        logger.debug(f"Exporting {emission.shape[1]}-symbol rows; only |A| = 3 lies on a 2-simplex.")
    frame = pd.DataFrame(emission, columns=[f"p{s}" for s in range(emission.shape[1])])
    frame.insert(0, "state_id", np.arange(emission.shape[0]))
    frame.insert(0, "sample_id", sample_id)
    return frame


def feature_vector(reduced: AnyModel) -> np.ndarray:
    """Flattened emission rows, state-major."""
    return np.asarray(reduced.emission, dtype=np.float64).ravel()


def feature_frame(vectors: Dict[str, np.ndarray], n_states: int, alphabet_size: int) -> pd.DataFrame:
    """Columns follow the widest vector; rows of smaller (clamped) reductions are NaN-padded."""
    width = max((np.size(v) for v in vectors.values()), default=n_states * alphabet_size) // alphabet_size
    columns = [f"e{c}_{s}" for c in range(width) for s in range(alphabet_size)]
    rows = [np.pad(np.asarray(v, dtype=np.float64), (0, len(columns) - np.size(v)), constant_values=np.nan) for v in vectors.values()]
    frame = pd.DataFrame(rows, columns=columns)
    frame.insert(0, "sample_id", list(vectors))
    return frame


def anomaly_record(
    sample_id: str,
    model: DMarkovModel,
    selected_n: int,
    reduced: Optional[ReducedModel] = None,
    one_sided: bool = False,
) -> AnomalyRecord:
    return AnomalyRecord(
        sample_id=sample_id,
        delta_m=cluster_divergence(model),
        h_m=discrepancy_statistic(model, one_sided=one_sided),
        depth=model.depth,
        selected_n=selected_n,
        delta_m_reduced=cluster_divergence(reduced) if reduced is not None else None,
    )
