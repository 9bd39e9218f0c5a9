import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from drumtherm.analysis import CalibrationResult, calibrate_power_sweep  # noqa: E402
from drumtherm.bath import BathParams  # noqa: E402
from drumtherm.optomech import aalto_drum, default_noise  # noqa: E402
from drumtherm.spectral_sim import simulate_power_sweep  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SWEEP_NCAVS = (50, 100, 200, 400, 800)


@pytest.fixture(scope="session")
def system():
    return aalto_drum()


@pytest.fixture(scope="session")
def noise():
    return default_noise()


@pytest.fixture(scope="session")
def bath():
    return BathParams()


@pytest.fixture(scope="session")
def truth_calibration(system, noise):
    return CalibrationResult.from_truth(system, noise)


@pytest.fixture(scope="session")
def sweep(system, bath, noise):
    return simulate_power_sweep(system, bath, noise, 0.1, SWEEP_NCAVS, seed=1)


@pytest.fixture(scope="session")
def fitted_calibration(sweep, system):
    return calibrate_power_sweep(sweep, system)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# acceptance verdicts: one line per criterion in the terminal summary

_VERDICTS = {}


@pytest.fixture(scope="session")
def verdict():
    """``verdict(criterion, ok, detail)`` records one sub-check of a criterion."""
    def record(criterion, ok, detail):
        _VERDICTS.setdefault(criterion, []).append((bool(ok), detail))
        print(f"{criterion} {'PASS' if ok else 'FAIL'}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS):
        checks = _VERDICTS[name]
        ok = all(c for c, _ in checks)
        failed = [d for c, d in checks if not c]
        detail = "; ".join(failed if failed else [d for _, d in checks])
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}: {detail}")
