"""Raw series loading, normalization, lag selection and phase-preserving downsampling."""
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.logging_config import get_logger
from .exceptions import DataFormatError, InvalidSeries, LagTooLarge, ZeroVariance

logger = get_logger(__name__)

LagRule = Literal['local_minimum', 'zero_crossing', 'max_lag']


@dataclass(frozen=True)
class RawSeries:
    samples: np.ndarray
    sample_rate_hz: Optional[float] = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if samples.size < 2:
            raise InvalidSeries(f"A series needs at least 2 samples, got {samples.size}.")
        if not np.all(np.isfinite(samples)):
            bad = int(np.count_nonzero(~np.isfinite(samples)))
            raise InvalidSeries(f"Series contains {bad} non-finite samples (NaN/Inf).")
        if self.sample_rate_hz is not None and not self.sample_rate_hz > 0:
            raise InvalidSeries(f"sample_rate_hz must be positive, got {self.sample_rate_hz}.")
        object.__setattr__(self, 'samples', samples)

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class SegmentedSeries:
    """Downsampled series; segment i holds the samples at phase offset i."""
    segments: Tuple[np.ndarray, ...]
    lag: int

    def __post_init__(self):
        if self.lag < 1:
            raise ValueError(f"lag must be a positive integer, got {self.lag}.")
        object.__setattr__(self, 'segments', tuple(np.asarray(s, dtype=np.float64) for s in self.segments))

    @property
    def total_length(self) -> int:
        return sum(s.size for s in self.segments)

    def concatenated(self) -> np.ndarray:
        if not self.segments:
            return np.empty(0, dtype=np.float64)
        return np.concatenate(self.segments)


@dataclass(frozen=True)
class LagSelection:
    lag: int
    rule: LagRule

    @property
    def is_fallback(self) -> bool:
        return self.rule != 'local_minimum'


# --- Loading --- #

def load_series(
    file_path: str,
    input_format: str = 'csv',
    column: int = 0,
    skip_header: bool = False,
    sample_rate_hz: Optional[float] = None,
) -> RawSeries:
    """Loads one numeric column from CSV, or a raw float32/float64 binary file."""
    logger.info(f"Loading series from {file_path} (format: {input_format}, column: {column}, skip_header: {skip_header}).")
    if input_format in ('float32', 'float64'):
        values = np.fromfile(file_path, dtype=np.dtype(input_format).newbyteorder('<'))
    elif input_format == 'csv':
        try:
            df = pd.read_csv(file_path, header=None, skiprows=1 if skip_header else 0, comment='#')
        except pd.errors.EmptyDataError as e:
            raise DataFormatError(f"{file_path} contains no data.") from e
        except pd.errors.ParserError as e:
            raise DataFormatError(f"Could not parse {file_path} as CSV: {e}") from e
        if column >= df.shape[1]:
            raise DataFormatError(f"Column {column} requested but {file_path} has {df.shape[1]} columns.")
        raw = df.iloc[:, column]
        values = pd.to_numeric(raw, errors='coerce').to_numpy(dtype=np.float64)
        unparsable = raw.notna().to_numpy() & np.isnan(values)
        if unparsable.any():
            first = int(np.flatnonzero(unparsable)[0])
            raise DataFormatError(f"Non-numeric value {raw.iloc[first]!r} at row {first} of {file_path} (use --skip-header for a header line).")
    else:
        raise DataFormatError(f"Unsupported input format '{input_format}'. Use csv, float32 or float64.")

    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        logger.error(f"{file_path} contains {bad} NaN/Inf values.")
        raise DataFormatError(f"{file_path} contains {bad} NaN/Inf values.")
    logger.info(f"Loaded {values.size} samples from {file_path}.")
    return RawSeries(values, sample_rate_hz)


# --- Preprocessing --- #

def normalize(series: RawSeries) -> RawSeries:
    """Zero mean, unit population standard deviation."""
    x = series.samples
    if np.all(x == x[0]):
        raise ZeroVariance(f"All {x.size} samples equal {x[0]!r}; the series cannot be normalized.")
    mean = x.mean()
    std = x.std()
    if std == 0.0:
        raise ZeroVariance("Standard deviation is zero; the series cannot be normalized.")
    return RawSeries((x - mean) / std, series.sample_rate_hz)


def default_max_lag(length: int) -> int:
    return max(1, min(1000, length // 4))


def autocorrelation(series: RawSeries, max_lag: int) -> np.ndarray:
    """Biased (divide-by-N) autocorrelation r[0..max_lag], r[0] = 1."""
    n = len(series)
    if max_lag < 1 or max_lag >= n:
        raise LagTooLarge(f"max_lag must lie in [1, {n - 1}] for a series of length {n}, got {max_lag}.")
    x = series.samples - series.samples.mean()
    n_fft = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(x, n_fft)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n_fft)[:max_lag + 1] / n
    if acov[0] <= 0.0:
        raise ZeroVariance("Series has zero variance; autocorrelation is undefined.")
    acf = acov / acov[0]
    acf[0] = 1.0
    return acf


def select_downsampling_lag(acf: Sequence[float]) -> LagSelection:
    """First local minimum of the ACF, with zero-crossing and max-lag fallbacks."""
    acf = np.asarray(acf, dtype=np.float64)
    max_lag = acf.size - 1
    if max_lag < 1:
        raise ValueError("acf must contain at least lags 0 and 1.")
    for k in range(1, max_lag):
        if acf[k] < acf[k - 1] and acf[k] <= acf[k + 1]:
            return LagSelection(k, 'local_minimum')
    crossings = np.flatnonzero(acf[1:] <= 0.0)
    if crossings.size:
        lag = int(crossings[0]) + 1
        logger.warning(f"ACF has no interior local minimum; using first zero crossing at lag {lag}.")
        return LagSelection(lag, 'zero_crossing')
    logger.warning(f"ACF has no local minimum and no zero crossing up to lag {max_lag}; using max_lag.")
    return LagSelection(max_lag, 'max_lag')


def find_downsampling_lag(acf: Sequence[float]) -> int:
    return select_downsampling_lag(acf).lag


def downsample_all_phases(series: RawSeries, lag: int) -> SegmentedSeries:
    """Keeps every phase offset: segment i is samples i, i+lag, i+2·lag, ..."""
    if lag < 1:
        raise ValueError(f"lag must be >= 1, got {lag}.")
    x = series.samples
    segments: List[np.ndarray] = [x[i::lag].copy() for i in range(lag)]
    logger.debug(f"Downsampled {x.size} samples into {lag} phase segments.")
    return SegmentedSeries(tuple(segments), lag)


def normalize_segments(series: SegmentedSeries) -> SegmentedSeries:
    """Normalizes with the pooled statistics of all segments."""
    pooled = normalize(RawSeries(series.concatenated()))
    out, start = [], 0
    for seg in series.segments:
        out.append(pooled.samples[start:start + seg.size])
        start += seg.size
    return SegmentedSeries(tuple(out), series.lag)
