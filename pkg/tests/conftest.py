import numpy as np
import pytest

from duracd._kernels import available_backends


def pytest_report_header(config):
    import duracd
    return f"duracd kernel backend: {duracd.KERNEL_BACKEND}"


@pytest.fixture(params=sorted(available_backends()))
def backend(request):
    """Run a test once per importable kernel backend."""
    return available_backends()[request.param]


def finite_diff(f, x, eps=1e-6):
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        xp = x.copy()
        xp[ix] += eps
        xm = x.copy()
        xm[ix] -= eps
        grad[ix] = (f(xp) - f(xm)) / (2.0 * eps)
    return grad


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b)) / scale)
