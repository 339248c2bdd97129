import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


class ReplayMock:
    """Knows the test series; predicts the true next value plus ``offset``.

    The origin is recovered from the window's first element, which is still
    an observed value for every step h <= lag. Series values must be unique.
    """

    kind = "replay"

    def __init__(self, values, lag, offset=0.0):
        self.values = np.asarray(values, dtype=float)
        self.lag = lag
        self.offset = offset
        self.where = {float(v): i for i, v in enumerate(self.values)}
        assert len(self.where) == self.values.size, "replay needs unique values"

    def predict(self, window):
        return float(self.values[self.where[float(window[0])] + self.lag] + self.offset)

    def predict_many(self, windows):
        return np.array([self.predict(w) for w in np.atleast_2d(windows)])


class PersistenceMock:
    kind = "persistence"

    def __init__(self, lag):
        self.lag = lag

    def predict(self, window):
        return float(window[-1])

    def predict_many(self, windows):
        return np.atleast_2d(windows)[:, -1].astype(float)


class RecordingMock:
    """Returns scripted outputs in order and records every window it sees."""

    kind = "recording"

    def __init__(self, lag, outputs):
        self.lag = lag
        self.outputs = list(outputs)
        self.seen = []

    def predict(self, window):
        self.seen.append(np.array(window, dtype=float))
        return float(self.outputs[len(self.seen) - 1])

    def predict_many(self, windows):
        return np.array([self.predict(w) for w in np.atleast_2d(windows)])


@pytest.fixture
def mocks():
    return {"replay": ReplayMock, "persistence": PersistenceMock, "recording": RecordingMock}


@pytest.fixture(scope="session")
def mg_series():
    from windcast.data import gen_mackey_glass
    return gen_mackey_glass(1200, seed=5)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail}")
