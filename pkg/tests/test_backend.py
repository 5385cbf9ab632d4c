import subprocess
import sys

import numpy as np
import pytest

from invshuttle import _backend, _fallback
from invshuttle.dynamics import propagate
from invshuttle.protocols import build_separation, SeparationSpec


def test_backend_name():
    assert _backend.BACKEND in ("cython", "python")


def test_pure_python_switch():
    code = "import invshuttle._backend as b; print(b.BACKEND)"
    res = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env={"INVSHUTTLE_PURE_PYTHON": "1", "PATH": ""}
    )
    assert res.stdout.strip() == "python"


@pytest.mark.skipif(_backend.BACKEND != "cython", reason="compiled extension not built")
def test_compiled_and_fallback_agree_on_protocol():
    built = build_separation(SeparationSpec(duration=3.0))
    ham = built.synthesis.hamiltonian
    s0 = built.initial_state
    h = built.grid[1] - built.grid[0]
    z_py, c_py = _fallback.gaussian_rk4(ham.omega, ham.drive, s0.mean, s0.cov, h)
    trace = propagate(ham, s0, built.grid)
    np.testing.assert_allclose(trace.means, z_py, rtol=1e-11, atol=1e-9)
    np.testing.assert_allclose(trace.covs, c_py, rtol=1e-11, atol=1e-12)
