# tests/test_background_tasks.py
import time

import pytest

from services.background_tasks import run_per_subject
from utils.config_utils import get_default_alpha, get_thread_cap


def test_results_keep_input_order():
    def slow_square(x):
        time.sleep(0.001 * (10 - x))
        return x * x

    assert run_per_subject(slow_square, range(10), threads=4) == [x * x for x in range(10)]
    assert run_per_subject(slow_square, [], threads=4) == []


def test_first_failure_is_reraised(capsys):
    def fail_on_three(x):
        if x == 3:
            raise ValueError("bad subject")
        return x

    with pytest.raises(ValueError, match="bad subject"):
        run_per_subject(fail_on_three, range(6), threads=2, label=lambda x: f"S{x}")
    assert "S3" in capsys.readouterr().out


def test_thread_cap_sources(monkeypatch):
    monkeypatch.setenv("CARDIOPREC_THREADS", "3")
    assert get_thread_cap() == 3
    assert get_thread_cap(5) == 5
    monkeypatch.setenv("CARDIOPREC_THREADS", "zero")
    assert 1 <= get_thread_cap() <= 8


def test_bad_alpha_environment_falls_back(monkeypatch):
    monkeypatch.setenv("CARDIOPREC_ALPHA", "often")
    assert get_default_alpha() == 0.05
