from __future__ import annotations

import logging
import os
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Union

import mpmath
import orjson
import pandas as pd

logger = logging.getLogger(__name__)

# Significant digits of high-precision numbers in JSON/CSV artifacts
EXPORT_DIGITS = 30

PathLike = Union[str, os.PathLike]


def num(value: Any, digits: int = EXPORT_DIGITS) -> str:
    """Decimal string for an mpmath/real value; identical inputs give identical text."""
    if isinstance(value, mpmath.mpc):
        return f"{mpmath.nstr(value.real, digits)}{'+' if value.imag >= 0 else '-'}" \
               f"{mpmath.nstr(abs(value.imag), digits)}j"
    if isinstance(value, Fraction):
        return str(value)
    return mpmath.nstr(mpmath.mpf(value), digits)


def _default(obj: Any):
    if isinstance(obj, (mpmath.mpf, mpmath.mpc, Fraction)):
        return num(obj)
    if isinstance(obj, complex):
        return num(mpmath.mpc(obj))
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"Type is not JSON serializable: {type(obj).__name__}")


def dumps(data: Any) -> bytes:
    return orjson.dumps(
        data,
        default=_default,
        option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_NON_STR_KEYS,
    )


def write_json(path: PathLike, data: Any) -> Path:
    """Write `data` as sorted, indented JSON (byte-stable for equal inputs)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(data) + b"\n")
    logger.info(f"Wrote {path}")
    return path


def load_json(path: PathLike) -> Any:
    return orjson.loads(Path(path).read_bytes())


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    """Write a trace table; mpmath cells are rendered with `num` first."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rendered = frame.map(
        lambda v: num(v) if isinstance(v, (mpmath.mpf, mpmath.mpc, Fraction)) else v
    )
    rendered.to_csv(path, index=False)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path
