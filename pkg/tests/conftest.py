import numpy as np
import pytest

from moegp.gating import GatingTrainConfig
from moegp.moe import TrainConfig

# small gate so that unit tests of the training drivers stay fast
FAST_GATE = GatingTrainConfig(hidden_dims=(16,), max_epochs=200, learning_rate=1e-2)


def fast_config(**kw):
    kw.setdefault("gating", FAST_GATE)
    return TrainConfig(**kw)


def finite_diff(fun, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[k] += step
        xm.flat[k] -= step
        g.flat[k] = (fun(xp) - fun(xm)) / (2 * step)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.maximum(np.abs(a), np.abs(b)))))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record_acceptance(number, ok, text):
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    ACCEPTANCE_LINES[number] = f"[{status}] criterion {number}: {text}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
