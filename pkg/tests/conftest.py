import numpy as np
import pytest

from pointdeconv.psf import make_mapping_filter


@pytest.fixture(scope="session")
def filt5():
    return make_mapping_filter(5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_distance(binary):
    """All-pairs nearest-foreground distance."""
    binary = np.asarray(binary)
    fy, fx = np.nonzero(binary)
    yy, xx = np.mgrid[0 : binary.shape[0], 0 : binary.shape[1]]
    d = np.hypot(yy[..., None] - fy, xx[..., None] - fx)
    return d.min(axis=-1)


def place_dots(rng, n, size, min_sep, margin):
    pts = []
    while len(pts) < n:
        p = rng.integers(margin, size - margin, 2)
        if all(np.hypot(*(p - q)) >= min_sep for q in pts):
            pts.append(p)
    return np.array(pts)


ACCEPTANCE_RESULTS = []


@pytest.fixture
def criterion():
    """``with criterion(n, "text"):`` records one PASS/FAIL line for the summary."""
    from contextlib import contextmanager

    @contextmanager
    def record(number, text):
        try:
            yield
        except BaseException as exc:
            ACCEPTANCE_RESULTS.append((number, False, f"{text} -- {type(exc).__name__}: {exc}"))
            raise
        ACCEPTANCE_RESULTS.append((number, True, text))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, text in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        first = text.splitlines()[0]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {first}")
