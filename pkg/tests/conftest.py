import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unitary(rng, n):
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_tracked(rng, n):
    from mfrep.matkernel import UnitaryMatrix

    frame = random_unitary(rng, n)
    angles = rng.uniform(0, 2 * np.pi, n)
    return UnitaryMatrix.from_eigendata(frame, angles)


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, in criterion order
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
