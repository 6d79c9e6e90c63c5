import hashlib
import json
from typing import Any

import numpy as np


def sha256_file(path: str, chunk_size: int = 1 << 20) -> str:
    """Hex SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_arrays(*arrays: np.ndarray) -> str:
    """Hex SHA-256 over the shapes and float64/int64 bytes of the given arrays."""
    digest = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        digest.update(str(arr.shape).encode('ascii'))
        digest.update(str(arr.dtype).encode('ascii'))
        digest.update(arr.tobytes())
    return digest.hexdigest()


def to_builtin(value: Any) -> Any:
    """Recursively converts numpy scalars/arrays into JSON-native Python values."""
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.generic):
        return to_builtin(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        # JSON has no infinities; -inf log-likelihoods are written as null
        return None
    if isinstance(value, dict):
        return {k: to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    return value


def canonical_json(value: Any, indent: int = 2) -> str:
    """Deterministic JSON text: sorted keys, non-finite reals as null, trailing newline."""
    return json.dumps(to_builtin(value), indent=indent, sort_keys=True, allow_nan=False) + '\n'
