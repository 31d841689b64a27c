"""
Общие фикстуры тестов и маркер slow.

Медленные проверки в масштабе приёмки запускаются только с RWPE_RUN_SLOW=1.
"""

import json
import os

import numpy as np
import pytest

from environment import (
    TorusDims,
    make_counterexample,
    make_one_dimensional,
    make_simple_random_walk,
    make_tilted_conductance,
)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Монте-Карло в масштабе приёмки (RWPE_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.getenv("RWPE_RUN_SLOW", "0") == "1":
        return
    skip_slow = pytest.mark.skip(reason="медленный тест: задайте RWPE_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def srw():
    return make_simple_random_walk(2)


@pytest.fixture
def parity_env():
    """dims=(2), p_0(+1)=0.7, p_1(+1)=0.6: ν=0.3, Σ=0.90, период 2."""
    return make_one_dimensional([0.7, 0.6])


@pytest.fixture
def counterexample_env():
    return make_counterexample(2, 0.1)


@pytest.fixture
def tilted_env():
    dims = TorusDims((1, 1))
    return make_tilted_conductance(dims, np.ones((2, 1, 1)), [0.3, 0.0])


@pytest.fixture
def parity_env_text():
    return json.dumps(
        {
            "dims": [2],
            "sites": [
                {"coord": [0], "jumps": [{"step": [1], "prob": "7/10"}, {"step": [-1], "prob": "3/10"}]},
                {"coord": [1], "jumps": [{"step": [1], "prob": 0.6}, {"step": [-1], "prob": 0.4}]},
            ],
        }
    )


@pytest.fixture
def parity_env_file(tmp_path, parity_env_text):
    path = tmp_path / "parity.json"
    path.write_text(parity_env_text, encoding="utf-8")
    return str(path)
