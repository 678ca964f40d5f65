import time

import numpy as np
import pytest

from repsense import evalkit, segmentation, synthgen

# the fixed-seed corpus used for every corpus-scale check
CORPUS_ATHLETES = 20
CORPUS_SEED = 0
CORPUS_DROPOUT = 0.04


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


class Timed:
    def __init__(self):
        self.seconds = {}

    def __call__(self, key, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        self.seconds[key] = time.perf_counter() - t0
        return out


@pytest.fixture(scope="session")
def timings():
    return Timed()


@pytest.fixture(scope="session")
def corpus(timings):
    return timings(
        "generate",
        synthgen.generate_corpus,
        CORPUS_ATHLETES,
        seed=CORPUS_SEED,
        dropout=CORPUS_DROPOUT,
    )


@pytest.fixture(scope="session")
def segmented(corpus, timings):
    return timings("segment", lambda: [segmentation.segment(s) for s in corpus.sessions])


@pytest.fixture(scope="session")
def table(corpus, segmented, timings):
    return timings("features", evalkit.frame_table, corpus.sessions, segmented=segmented)


@pytest.fixture(scope="session")
def small_corpus():
    return synthgen.generate_corpus(1, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
