"""
Helper Utilities
Small numeric and bookkeeping helpers shared by the services
"""
import hashlib
import json
import math
from pathlib import PurePath
from typing import Any, Dict, List, Sequence

import numpy as np


def ceil_sqrt(value: int) -> int:
    """
    Smallest integer not below the square root of value

    Args:
        value: Non-negative integer

    Returns:
        ceil(sqrt(value)) computed without floating point rounding
    """
    root = math.isqrt(value)
    return root if root * root == value else root + 1


def default_num_factors_bound(t: int, n: int) -> int:
    """Default maximum factor count K for the ratio and IC selectors"""
    return max(1, min(t, n) // 3)


def derive_seed(seed: int, index: int) -> int:
    """
    Derive an independent integer seed for replication or split `index`

    Args:
        seed: Master seed
        index: Replication or split index

    Returns:
        32-bit seed drawn from SeedSequence([seed, index])
    """
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def rng_for(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars, arrays and tuples into JSON-friendly structures"""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, PurePath):
        return str(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def config_digest(options: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of options; key order does not matter"""
    canonical = json.dumps(to_jsonable(options), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def shift_indices(indices: Sequence[int], one_based: bool) -> List[int]:
    """Translate 0-based indices for display"""
    offset = 1 if one_based else 0
    return [int(index) + offset for index in indices]
