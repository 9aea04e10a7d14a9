import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from isacdet.config import SystemConfig
from isacdet.montecarlo.engine import derive_trial_stream, experiment_plan
from isacdet.scenario import generate_scenario
from isacdet.statistics import build_null_model

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def make_setup(cfg=None, seed=11):
    cfg = cfg or SystemConfig()
    scen = generate_scenario(cfg, derive_trial_stream(seed, "tests/scenario", 0))
    plan = experiment_plan(cfg, seed)
    return cfg, scen, plan, build_null_model(scen, plan, cfg)


@pytest.fixture
def setup():
    return make_setup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# (number, passed, detail) for each acceptance criterion, printed after the run
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((number, bool(passed), detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
