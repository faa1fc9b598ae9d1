# utils/format_utils.py
import math
from typing import Any, Optional


def fixed(value: Optional[float], places: int = 2) -> Optional[str]:
    """Fixed-precision string for reports; None and non-finite values render as None"""
    if value is None:
        return None
    value = float(value)
    if not math.isfinite(value):
        return None
    text = f"{value:.{places}f}"
    # avoid "-0.00"
    if float(text) == 0.0:
        text = f"{0.0:.{places}f}"
    return text


def finite_or_none(value: Any) -> Any:
    """JSON has no inf/nan; map them to null"""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    return finite_or_none(obj)
