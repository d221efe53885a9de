import os
import subprocess
import sys

import numpy as np
import pytest

from mcflab import _pykernels, kernels
from mcflab.immersion import circle, dumbbell, sphere

ckernels = pytest.importorskip("mcflab._ckernels")


def _advance(backend, imm, kind, steps=300, trigger=np.inf):
    pos = np.ascontiguousarray(imm.positions, dtype=float)
    diag = np.zeros((steps + 1, len(_pykernels.DIAG_COLUMNS)))
    n, t, status = backend.advance(kind, pos, imm.spacing[0], 0.2, imm.m, 2, trigger, steps,
                                   0.0, diag)
    return pos, diag[:n], n, t, status


@pytest.mark.parametrize("make,kind", [
    (lambda: circle(1.0, 128), _pykernels.CURVE),
    (lambda: sphere(1.0, 65), _pykernels.PROFILE),
    (lambda: dumbbell(samples=201), _pykernels.PROFILE),
])
def test_backends_agree(make, kind):
    a = _advance(_pykernels, make(), kind)
    b = _advance(ckernels, make(), kind)
    assert a[2:] == b[2:]
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-14)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-13, atol=1e-300)


def test_measure_agrees():
    imm = sphere(1.0, 65)
    pos = np.ascontiguousarray(imm.positions)
    a = _pykernels.measure(_pykernels.PROFILE, pos, imm.spacing[0], 2, 2)
    b = ckernels.measure(_pykernels.PROFILE, pos, imm.spacing[0], 2, 2)
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_trigger_stops_advance():
    imm = circle(1.0, 64)
    _, diag, n, t, status = _advance(kernels, imm, kernels.CURVE, steps=10 ** 6, trigger=2.0)
    assert status == kernels.TRIGGERED
    assert 0 < n < 10 ** 6 and 0.3 < t < 0.5


def test_pure_python_switch():
    env = dict(os.environ, MCFLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from mcflab import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND == ("python" if os.environ.get("MCFLAB_PURE_PYTHON") else "cython")
