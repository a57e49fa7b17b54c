"""Fixed float formatting shared by every file the workbench writes."""

from __future__ import annotations

import json
import math
from typing import Any, Optional

SIG_DIGITS = 6


def sig(x: Optional[float]) -> Optional[float]:
    """Round to 6 significant digits; ``None`` passes through."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    return float(f"{x:.{SIG_DIGITS}g}")


def fmt(x) -> str:
    """CSV cell text: empty for a missing value, 6 significant digits for floats."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, str)):
        return str(x)
    return f"{float(x):.{SIG_DIGITS}g}"


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"
