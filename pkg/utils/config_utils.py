# utils/config_utils.py
import os
from typing import Optional

DEFAULT_MAX_THREADS = 8


def get_thread_cap(override: Optional[int] = None) -> int:
    """Worker cap: --threads, then CARDIOPREC_THREADS, then min(8, cpu count)"""
    if override is not None:
        return max(1, int(override))
    default = min(DEFAULT_MAX_THREADS, os.cpu_count() or 1)
    raw = os.getenv("CARDIOPREC_THREADS")
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
        if value < 1:
            raise ValueError
        return value
    except ValueError:
        print(f"⚠️ Ignoring CARDIOPREC_THREADS={raw!r}: expected a positive integer, using {default}")
        return default


def get_default_alpha() -> float:
    raw = os.getenv("CARDIOPREC_ALPHA")
    if not raw:
        return 0.05
    try:
        return float(raw)
    except ValueError:
        print(f"⚠️ Ignoring CARDIOPREC_ALPHA={raw!r}: not a number, using 0.05")
        return 0.05


def get_default_ci_method() -> str:
    return os.getenv("CARDIOPREC_CI_METHOD", "t-mean")
