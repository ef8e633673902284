import hashlib
import json
from typing import Any, Dict, List, Tuple

from ..core.errors import InvalidInputError


def parse_grid_shape(text: str) -> Tuple[int, ...]:
    """Parse a grid like '128x128' or '32x32x16'"""
    parts = text.lower().replace(" ", "").split("x")
    try:
        shape = tuple(int(p) for p in parts)
    except ValueError:
        raise InvalidInputError(f"Cannot parse grid shape {text!r}; expected e.g. 128x128")
    if not shape or any(n < 1 for n in shape):
        raise InvalidInputError(f"Grid sizes must be positive, got {text!r}")
    return shape


def format_grid_shape(shape: Tuple[int, ...]) -> str:
    return "x".join(str(n) for n in shape)


def stable_hash(data: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a mapping"""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def flatten_dict(
    data: Dict[str, Any], parent_key: str = "", separator: str = "."
) -> Dict[str, Any]:
    """Flatten a nested dictionary"""
    items: List[Tuple[str, Any]] = []
    for key, value in data.items():
        new_key = f"{parent_key}{separator}{key}" if parent_key else key

        if isinstance(value, dict):
            items.extend(flatten_dict(value, new_key, separator).items())
        else:
            items.append((new_key, value))

    return dict(items)


def merge_dicts(*dicts: Dict[str, Any], deep: bool = True) -> Dict[str, Any]:
    """Merge mappings left to right; nested mappings merge recursively"""
    result: Dict[str, Any] = {}

    for d in dicts:
        if not isinstance(d, dict):
            continue

        for key, value in d.items():
            if key in result and deep and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = merge_dicts(result[key], value, deep=True)
            else:
                result[key] = value

    return result
