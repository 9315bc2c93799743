import numpy as np
import pytest

from mantlefem.mesh import create_rectangle


@pytest.fixture
def unit_mesh():
    """Factory for uniform meshes of the unit square."""
    def make(n=4):
        return create_rectangle(((0.0, 1.0), (0.0, 1.0)), (n, n))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines at the end of the run."""
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
