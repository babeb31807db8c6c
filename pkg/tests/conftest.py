from __future__ import annotations

import pytest

from fdsing.angular import AngularGeometry, builtin_profile
from fdsing.regimes import ProblemParams


@pytest.fixture
def circle_case():
    """n=2, cosine-perturbed profile, m=0.2, lam=3, nu=2."""
    g = AngularGeometry(2, 32)
    return ProblemParams(2, 0.2, 3.0, 2.0), builtin_profile(g, "cosine", amplitude=0.3)


@pytest.fixture
def sphere_case():
    """n=3, constant profile, m=0.2, lam=3, nu=2."""
    g = AngularGeometry(3, 16)
    return ProblemParams(3, 0.2, 3.0, 2.0), builtin_profile(g, "constant")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
