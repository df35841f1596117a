import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cartsim import ModelParams  # noqa: E402
from cartsim.scenario import load_bundled  # noqa: E402


@pytest.fixture(scope="session")
def synthetic():
    """Parameter set shipped with the bundled scenarios."""
    return load_bundled("backstepping").params


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def make_params(**overrides):
    base = dict(r=0.1, b=1e-9, gamma=1e-6, phi=0.05, rho=0.1, theta=1e-9, alpha=1e-10, epsilon=0.08, mu=0.02)
    base.update(overrides)
    return ModelParams(**base)


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when == "call" and "test_acceptance.py" in rep.nodeid:
                rows.append((rep.nodeid.split("::")[-1], outcome, rep.duration))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in sorted(rows):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}  ({duration:.2f} s)")
