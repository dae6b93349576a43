from __future__ import annotations

import numpy as np
import pytest

from uavcoinfer.config import SimConfig, TaskModelConfig, TrainConfig


@pytest.fixture
def sim() -> SimConfig:
    return SimConfig()


@pytest.fixture
def task() -> TaskModelConfig:
    return TaskModelConfig()


@pytest.fixture
def small_train() -> TrainConfig:
    return TrainConfig(hidden=(16, 8), batch_size=4, episodes=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------- acceptance report

_ACCEPTANCE: dict[str, tuple[str, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and item.name.startswith("test_criterion"):
        if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
            _ACCEPTANCE[item.name] = ("PASS" if rep.passed else "FAIL", rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        verdict, secs = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{verdict}  {name}  ({secs:.1f} s)")
