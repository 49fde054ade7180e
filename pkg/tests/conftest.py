import os
import sys

import pytest

from pcmm import _kernels

sys.path.insert(0, os.path.dirname(__file__))

BACKENDS = ["python", "cython"]


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the duration of a test."""
    if request.param == "python":
        mod = _kernels.python_backend
    else:
        mod = _kernels.compiled_backend
        if mod is None:
            pytest.skip("compiled kernels not built")
    for name in ("nn_sqdist", "any_pair_within", "bspline_basis"):
        monkeypatch.setattr(_kernels, name, getattr(mod, name))
    return mod


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
