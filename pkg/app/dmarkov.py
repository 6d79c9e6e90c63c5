"""Full-order D-Markov machine: counting, estimation, stationary vector, simulation, likelihood.

States are the |A|^D words of length D, enumerated lexicographically; word
a_1…a_D has index Σ a_i·|A|^(D−i), so the sliding-block successor of state q
under symbol s is (q·|A| mod |A|^D) + s.
"""
import bisect
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse

from config.logging_config import get_logger
from .exceptions import NoConvergence, SequenceTooShort
from .symbolize import SymbolSequence
from .utils.helpers import sha256_arrays

logger = get_logger(__name__)

DEFAULT_DAMPING = 1e-6
STATIONARY_TOL = 1e-13
STATIONARY_MAX_ITER = 100_000
STALL_WINDOW = 5000


@dataclass(frozen=True)
class DMarkovModel:
    alphabet_size: int
    depth: int
    counts: np.ndarray
    emission: np.ndarray
    transition: np.ndarray
    stationary: np.ndarray
    prior_weight: float = 1.0
    stationary_damping: float = 0.0
    fingerprint: str = field(default='', compare=False)

    def __post_init__(self):
        if not self.fingerprint:
            object.__setattr__(self, 'fingerprint', sha256_arrays(
                np.array([self.alphabet_size, self.depth]), self.counts, self.emission))

    @property
    def n_states(self) -> int:
        return self.alphabet_size ** self.depth


def state_word(index: int, alphabet_size: int, depth: int) -> Tuple[int, ...]:
    word = []
    for _ in range(depth):
        index, s = divmod(index, alphabet_size)
        word.append(s)
    return tuple(reversed(word))


def state_label(index: int, alphabet_size: int, depth: int) -> str:
    sep = '' if alphabet_size <= 10 else '-'
    return sep.join(str(s) for s in state_word(index, alphabet_size, depth))


def successor_table(alphabet_size: int, depth: int) -> np.ndarray:
    """succ[q, s] = index of the word a_2…a_D s."""
    n_states = alphabet_size ** depth
    q = np.arange(n_states, dtype=np.int64)
    return (q[:, None] * alphabet_size) % n_states + np.arange(alphabet_size, dtype=np.int64)[None, :]


def word_targets(seq: SymbolSequence, depth: int) -> Tuple[np.ndarray, np.ndarray]:
    """(word index, next symbol) for every scored position, windows never crossing a segment boundary."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}.")
    a = seq.alphabet_size
    words, targets = [], []
    for seg in seq.segments():
        m = seg.size - depth
        if m <= 0:
            continue
        w = np.zeros(m, dtype=np.int64)
        for j in range(depth):
            w = w * a + seg[j:j + m]
        words.append(w)
        targets.append(seg[depth:])
    if not words:
        raise SequenceTooShort(f"No segment is longer than depth {depth}; nothing to count.")
    return np.concatenate(words), np.concatenate(targets)


def n_scored_emissions(seq: SymbolSequence, depth: int) -> int:
    return sum(max(0, seg.size - depth) for seg in seq.segments())


def count_dgrams(seq: SymbolSequence, depth: int) -> np.ndarray:
    """counts[q, s]: occurrences of word q followed by symbol s, within segments."""
    words, targets = word_targets(seq, depth)
    a = seq.alphabet_size
    n_states = a ** depth
    flat = np.bincount(words * a + targets, minlength=n_states * a)
    return flat.reshape(n_states, a).astype(np.int64)


def emission_from_counts(counts: np.ndarray, prior_weight: float) -> np.ndarray:
    """Additive (uniform-prior) smoothing; rows without counts or prior become uniform."""
    counts = np.asarray(counts, dtype=np.float64)
    a = counts.shape[1]
    totals = counts.sum(axis=1, keepdims=True) + a * prior_weight
    emission = np.full(counts.shape, 1.0 / a)
    seen = totals[:, 0] > 0
    emission[seen] = (counts[seen] + prior_weight) / totals[seen]
    if not seen.all():
        logger.debug(f"{int((~seen).sum())} states have no counts and no prior; using uniform rows.")
    return emission


def transition_from_emission(emission: np.ndarray, depth: int) -> np.ndarray:
    """Sliding-block transition matrix: mass Ã[q, s] goes to the successor of q under s."""
    emission = np.asarray(emission, dtype=np.float64)
    n_states, a = emission.shape
    if a ** depth != n_states:
        raise ValueError(f"Emission has {n_states} rows, expected {a}^{depth} = {a ** depth}.")
    transition = np.zeros((n_states, n_states))
    succ = successor_table(a, depth)
    rows = np.repeat(np.arange(n_states), a)
    transition[rows, succ.ravel()] = emission.ravel()
    return transition


def stationary_distribution(
    transition: np.ndarray,
    damping: float = 0.0,
    tol: float = STATIONARY_TOL,
    max_iter: int = STATIONARY_MAX_ITER,
) -> np.ndarray:
    """Left Perron vector by power iteration from the uniform vector.

    With ``damping`` α > 0 the chain (1−α)Π + α·U is iterated through its lazy
    form ½(I + P_α), which has the same stationary vector and no periodicity.
    """
    P = sparse.csr_matrix(np.asarray(transition, dtype=np.float64))
    n = P.shape[0]
    PT = P.T.tocsr()
    pi = np.full(n, 1.0 / n)
    best, since_best = np.inf, 0
    for iteration in range(1, int(max_iter) + 1):
        nxt = PT @ pi
        if damping > 0.0:
            nxt = 0.5 * (pi + (1.0 - damping) * nxt + damping / n)
        nxt /= nxt.sum()
        diff = float(np.abs(nxt - pi).max())
        pi = nxt
        if diff < tol:
            logger.debug(f"Power iteration converged after {iteration} iterations (damping={damping}).")
            return pi
        if diff < 0.5 * best:
            best, since_best = diff, 0
        else:
            since_best += 1
            if since_best >= STALL_WINDOW:
                raise NoConvergence(f"Power iteration stalled at residual {diff:.3e} after {iteration} iterations; the chain is likely periodic.")
    raise NoConvergence(f"Power iteration did not converge in {max_iter} iterations.")


def solve_stationary(transition: np.ndarray) -> Tuple[np.ndarray, float]:
    """Plain power iteration, falling back to the damped chain; returns (π, damping used)."""
    try:
        return stationary_distribution(transition), 0.0
    except NoConvergence as e:
        logger.warning(f"{e} Re-running with damping α={DEFAULT_DAMPING}.")
        return stationary_distribution(transition, damping=DEFAULT_DAMPING), DEFAULT_DAMPING


def model_from_emission(
    emission: np.ndarray,
    depth: int,
    counts: Optional[np.ndarray] = None,
    prior_weight: float = 0.0,
) -> DMarkovModel:
    """Builds a complete model (Π, π) from an emission matrix."""
    emission = np.asarray(emission, dtype=np.float64)
    if np.any(emission < 0) or np.any(np.abs(emission.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("Emission matrix must be row-stochastic with non-negative entries.")
    transition = transition_from_emission(emission, depth)
    stationary, damping = solve_stationary(transition)
    if counts is None:
        counts = np.zeros(emission.shape, dtype=np.int64)
    return DMarkovModel(
        alphabet_size=emission.shape[1],
        depth=depth,
        counts=np.asarray(counts),
        emission=emission,
        transition=transition,
        stationary=stationary,
        prior_weight=float(prior_weight),
        stationary_damping=damping,
    )


def estimate_model(seq: SymbolSequence, depth: int, prior_weight: float = 1.0) -> DMarkovModel:
    """Frequency counting with a uniform prior of strength ``prior_weight``."""
    if prior_weight < 0:
        raise ValueError(f"prior_weight must be >= 0, got {prior_weight}.")
    counts = count_dgrams(seq, depth)
    logger.info(f"Estimating D={depth} model over {seq.alphabet_size ** depth} states from {int(counts.sum())} emissions.")
    emission = emission_from_counts(counts, prior_weight)
    return model_from_emission(emission, depth, counts=counts, prior_weight=prior_weight)


# --- Simulation --- #

def emission_cdf(emission: np.ndarray) -> List[List[float]]:
    return np.cumsum(np.asarray(emission, dtype=np.float64), axis=1).tolist()


def draw_symbol(cdf_row: List[float], u: float) -> int:
    """Inverse-CDF draw; a row summing to slightly under 1 maps the tail to the last symbol."""
    return min(bisect.bisect_right(cdf_row, u), len(cdf_row) - 1)


def emit_path(
    cdf: List[List[float]],
    initial_state: int,
    uniforms: np.ndarray,
    alphabet_size: int,
    depth: int,
    row_of: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Sliding-block path driven by the given uniforms.

    ``row_of`` maps a word state to the cdf row used for emission (a cluster map
    for reduced models); the state itself always follows the emitted symbols.
    """
    n_states = alphabet_size ** depth
    rows = row_of.tolist() if row_of is not None else None
    out = np.empty(len(uniforms), dtype=np.int64)
    state = int(initial_state)
    for k, u in enumerate(uniforms.tolist()):
        s = draw_symbol(cdf[rows[state] if rows is not None else state], u)
        out[k] = s
        state = (state * alphabet_size) % n_states + s
    return out


def generate(model: DMarkovModel, initial_state: int, n: int, seed: int) -> SymbolSequence:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}.")
    if not 0 <= initial_state < model.n_states:
        raise ValueError(f"initial_state must lie in [0, {model.n_states}), got {initial_state}.")
    uniforms = np.random.default_rng(seed).random(n)
    symbols = emit_path(emission_cdf(model.emission), initial_state, uniforms, model.alphabet_size, model.depth)
    return SymbolSequence(symbols, model.alphabet_size)


# --- Likelihood --- #

def log_likelihood_of_words(rows: np.ndarray, state_rows: Optional[np.ndarray], words: np.ndarray, targets: np.ndarray) -> float:
    """Σ log rows[state_rows[word_k], s_k]; -inf (with a warning) on a zero-probability emission."""
    idx = words if state_rows is None else np.asarray(state_rows)[words]
    probs = np.asarray(rows)[idx, targets]
    if np.any(probs <= 0.0):
        logger.warning(f"{int(np.count_nonzero(probs <= 0.0))} emissions have zero probability; log-likelihood is -inf.")
        return float('-inf')
    return float(np.log(probs).sum())


def log_likelihood_of_rows(rows: np.ndarray, state_rows: Optional[np.ndarray], seq: SymbolSequence, depth: int) -> float:
    words, targets = word_targets(seq, depth)
    return log_likelihood_of_words(rows, state_rows, words, targets)


def log_likelihood(model: DMarkovModel, seq: SymbolSequence) -> float:
    """Log-likelihood ignoring the initial state: the first D symbols of each segment set the state and are not scored."""
    if seq.alphabet_size != model.alphabet_size:
        raise ValueError(f"Sequence alphabet {seq.alphabet_size} does not match model alphabet {model.alphabet_size}.")
    return log_likelihood_of_rows(model.emission, None, seq, model.depth)
