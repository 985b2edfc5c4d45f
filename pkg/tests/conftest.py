import numpy as np
import pytest
from hypothesis import strategies as st

from semimed.event_data import SubjectRecord

# Acceptance verdicts, printed once at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_records(rows):
    """Records from ``(z, x1, d1, x2, d2)`` tuples."""
    return [SubjectRecord(str(i), *row) for i, row in enumerate(rows)]


def random_records(rng, n_per_arm=(3, 8), times=(0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0)):
    """A small random dataset with coarse times so ties are common."""
    rows = []
    times = np.asarray(times)
    for z in (0, 1):
        for _ in range(rng.integers(n_per_arm[0], n_per_arm[1] + 1)):
            x2 = float(rng.choice(times))
            d2 = int(rng.random() < 0.7)
            d1 = int(rng.random() < 0.5)
            x1 = float(rng.choice(times[times <= x2])) if d1 else x2
            rows.append((z, x1, d1, x2, d2))
    return make_records(rows)


@st.composite
def small_datasets(draw, max_per_arm=7):
    times = st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.5])
    rows = []
    for z in (0, 1):
        for _ in range(draw(st.integers(1, max_per_arm))):
            x2 = draw(times)
            d2 = draw(st.integers(0, 1))
            d1 = draw(st.integers(0, 1))
            x1 = draw(st.sampled_from([t for t in (0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.5) if t <= x2])) if d1 else x2
            rows.append((z, x1, d1, x2, d2))
    return make_records(rows)


@pytest.fixture
def tie_records():
    """Six subjects across two arms, one with relapse and death at t=4."""
    return make_records([
        (0, 1.0, 0, 1.0, 1),
        (0, 2.0, 1, 3.5, 1),
        (0, 3.0, 0, 3.0, 0),
        (1, 4.0, 1, 4.0, 1),
        (1, 1.5, 1, 5.0, 0),
        (1, 2.5, 0, 2.5, 1),
    ])
