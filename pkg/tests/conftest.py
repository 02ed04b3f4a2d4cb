import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from symgyro.circle_actions import CircleAction
from symgyro.gyroceptron import SymplecticGyroceptron
from symgyro.symplectic_maps import HenonNet, NearIdentityHenonNet

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def rel_err(a, b, floor=1e-6):
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``, maximized."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def random_gyroceptron(rng, dim=4, epsilon=0.01, layers=2, hidden=4, theta=None):
    theta = rng.uniform(0, 2 * np.pi) if theta is None else theta
    action = CircleAction.single(dim, 0, theta)
    return SymplecticGyroceptron.random(action, epsilon, rng, layers, hidden, layers, hidden)


def identity_gyroceptron(action, epsilon=0.0):
    return SymplecticGyroceptron(HenonNet(()), NearIdentityHenonNet(()), action, epsilon)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance lines collected by tests/test_acceptance.py, echoed after the run.
ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
