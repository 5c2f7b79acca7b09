import json
import os
import subprocess
import sys

import numpy as np
import pytest

from rieszbal import _accel

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not available")


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (60, 3))
    P = np.vstack([rng.uniform(-2, 2, (7, 3)), X[:3]])
    diag = rng.uniform(2, 4, 60)
    w = rng.uniform(0, 1, 60)
    w[::5] = 0.0
    return X, P, diag, w


@pytest.mark.parametrize("p", [-1.0, -1.5])
def test_kernel_matrix_backends_agree(data, p):
    X, _, diag, _ = data
    np.testing.assert_allclose(_accel.kernel_matrix_nb(X, diag, p), _accel.kernel_matrix_np(X, diag, p),
                               rtol=1e-14)


def test_cross_kernel_and_potential_agree(data):
    X, P, diag, w = data
    np.testing.assert_allclose(_accel.cross_kernel_nb(P, X, diag, -1.0), _accel.cross_kernel_np(P, X, diag, -1.0),
                               rtol=1e-14)
    np.testing.assert_allclose(_accel.potential_nb(P, X, w, diag, -1.0), _accel.potential_np(P, X, w, diag, -1.0),
                               rtol=1e-13)


def test_cd_sweep_agrees(data):
    X, _, diag, _ = data
    K = _accel.kernel_matrix_np(X, diag + 10.0, -1.0)
    b = np.sin(np.arange(60.0))
    w1, w2 = np.zeros(60), np.zeros(60)
    r1, r2 = np.zeros(60), np.zeros(60)
    for _ in range(5):
        _accel.cd_sweep_nb(K, b, w1, r1)
        _accel.cd_sweep_np(K, b, w2, r2)
    np.testing.assert_allclose(w1, w2, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(_accel.matvec_nb(K, w1), _accel.matvec_np(K, w1), rtol=1e-13)


_SCRIPT = """
import json
from rieszbal import BACKEND
from rieszbal.equilibrium import equilibrium
from rieszbal.geometry import sample_sphere
from rieszbal.kernel import KernelModel
r = equilibrium(KernelModel(), sample_sphere((0, 0, 0), 1.0, 1))
print(json.dumps({"backend": BACKEND, "capacity": r.capacity}))
"""


def _run(flag):
    env = dict(os.environ)
    env.pop("RIESZBAL_DISABLE_NUMBA", None)
    if flag:
        env["RIESZBAL_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_env_flag_switches_backend_with_same_answer():
    nb, np_ = _run(False), _run(True)
    assert nb["backend"] == "numba" and np_["backend"] == "numpy"
    assert nb["capacity"] == pytest.approx(np_["capacity"], rel=1e-12)
