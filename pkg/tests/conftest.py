import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dpnfdm.channel import FiberParams
from dpnfdm.core import DualPolSignal, TimeGrid

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("DPNFDM_HYPOTHESIS_EXAMPLES", "25")),
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def fiber():
    return FiberParams()


@pytest.fixture(scope="session")
def norm(fiber):
    return fiber.normalization(244e-12)


def sech_soliton(grid: TimeGrid, eta: float, xi: float = 0.0, t0: float = 0.0, pol=(1.0, 0.0)) -> DualPolSignal:
    """Closed-form fundamental soliton of i q_z = q_tt + 2|q|^2 q at
    lambda = xi + i eta (polarization ``pol``, normalized to unit length)."""
    p = np.asarray(pol, dtype=complex)
    p = p / np.linalg.norm(p)
    t = grid.t
    env = 2 * eta / np.cosh(2 * eta * (t - t0)) * np.exp(-2j * xi * t)
    return DualPolSignal(grid, p[0] * env, p[1] * env)


def gaussian_pulse(grid: TimeGrid, amp: float, width: float = 1.0, pol=(1.0, 0.5j), chirp: float = 0.0) -> DualPolSignal:
    t = grid.t
    env = amp * np.exp(-0.5 * (t / width) ** 2 * (1 + 1j * chirp))
    p = np.asarray(pol, dtype=complex)
    p = p / np.linalg.norm(p)
    return DualPolSignal(grid, p[0] * env, p[1] * env)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Records one result line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
