import numpy as np
import pytest


def numeric_grad(f, arrays, step=1e-5):
    """Central differences of scalar ``f()`` w.r.t. each array, perturbed in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            hi = f()
            flat[i] = old - step
            lo = f()
            flat[i] = old
            gflat[i] = (hi - lo) / (2 * step)
        grads.append(g)
    return grads


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)), np.max(np.abs(b))))


def check_grads(build, params, tol=1e-4, step=1e-5):
    """Compare autodiff grads of scalar ``build()`` against central differences.

    Returns the worst relative error over all ``params`` (Tensors).
    """
    for p in params:
        p.grad = None
    build().backward()
    analytic = [p.grad.copy() for p in params]
    numeric = numeric_grad(lambda: build().item(), [p.data for p in params], step)
    worst = max(rel_err(a, n) for a, n in zip(analytic, numeric))
    assert worst < tol, f"gradient mismatch: rel err {worst:.2e}"
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report one line each at the end of the run
_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(num, ok, detail):
        _CRITERIA[num] = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(_CRITERIA[num])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[num])
