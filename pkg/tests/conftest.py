import numpy as np
import pytest
from hypothesis import settings

from globaldirs.numerics import MlpNet

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def bench():
    from bench import Benchmark
    return Benchmark()


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary is printed at the end of the run."""
    def record(name: str, passed: bool, detail: str = ""):
        _CRITERIA.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name} {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def random_net(rng, widths, hidden="sigmoid", outputs=("sigmoid", "sigmoid"), scale=1.0):
    ws = [rng.normal(0, scale / np.sqrt(a), (b, a)) for a, b in zip(widths[:-1], widths[1:])]
    bs = [rng.normal(0, 0.5, b) for b in widths[1:]]
    return MlpNet(tuple(ws), tuple(bs), hidden, outputs)


class LinearClassifier:
    """f(x) = sum(w * x) + c, for closed-form attribution checks."""

    def __init__(self, w, c=0.0):
        self.w = np.asarray(w, dtype=np.float64)
        self.c = c

    def classify_batch(self, X):
        return np.einsum("bhw,hw->b", np.asarray(X, dtype=np.float64), self.w) + self.c

    def classify(self, x):
        return float(self.classify_batch(np.asarray(x)[None])[0])


class ConstantClassifier:
    def __init__(self, logit=2.0):
        self.logit = logit

    def classify_batch(self, X):
        return np.full(len(X), self.logit)

    def classify(self, x):
        return self.logit
