import math
from typing import Any, Dict

import numpy as np

from utils import numkit


def matrix_to_document(a) -> Dict[str, Any]:
    """Serialize a matrix as explicit dimensions plus row-major entries"""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return {'rows': int(a.shape[0]), 'cols': int(a.shape[1]), 'data': numkit.to_entries(a)}


def matrix_from_document(doc: Dict[str, Any], name: str = "matrix") -> np.ndarray:
    """Inverse of matrix_to_document"""
    return numkit.from_entries(int(doc['rows']), int(doc['cols']), doc['data'], name)


def sanitize(value: Any) -> Any:
    """Replace non-finite floats by None so a report is always valid JSON"""
    if isinstance(value, dict):
        return {k: sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return sanitize(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def format_matrix(a, precision: int = 4) -> str:
    """Format a matrix for console output"""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rows = ["[" + ", ".join(f"{v:.{precision}f}" for v in row) + "]" for row in a]
    return "[" + ",\n ".join(rows) + "]"


def format_duration(seconds: float) -> str:
    """Format a duration in human readable form"""
    if seconds < 1.0:
        return f"{seconds * 1000:.0f} ms"
    if seconds < 60.0:
        return f"{seconds:.2f} s"
    minutes, seconds = divmod(seconds, 60.0)
    return f"{int(minutes)} min {seconds:.0f} s"
