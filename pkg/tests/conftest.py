import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from relint.graph import SOURCE, TARGET, build_parallel_data, graph_from_triples  # noqa: E402
from relint.neural import ONE_MINUS_P, TrainConfig  # noqa: E402

# Two families: malia's has full context, nell's mother edge carries nothing
# beyond the ambiguous "parent".
FIG1_SOURCE = [
    ("Malia", "parent", "Barack"),
    ("Malia", "parent", "Michelle"),
    ("Barack", "husband of", "Michelle"),
    ("Sasha", "parent", "Barack"),
    ("Nell", "parent", "Burton"),
    ("Nell", "parent", "Marie"),
    ("Billy", "father", "Burton"),
]
FIG1_TARGET = [
    ("Malia", "father", "Barack"),
    ("Malia", "mother", "Michelle"),
    ("Barack", "husband", "Michelle"),
    ("Sasha", "father", "Barack"),
    ("Nell", "father", "Burton"),
    ("Nell", "mother", "Marie"),
    ("Billy", "father", "Burton"),
]


@pytest.fixture
def fig1_graphs():
    source = graph_from_triples(FIG1_SOURCE, SOURCE)
    target = graph_from_triples(FIG1_TARGET, TARGET)
    return source, target, build_parallel_data(source, target)


@pytest.fixture
def fast_config():
    return TrainConfig(dim=8, hidden=(16,), epochs=30, batch_size=8, folds=2, loss_variant=ONE_MINUS_P, seed=3)


def random_triples(rng: np.random.Generator, n: int, n_entities: int = 8, relations=("a", "b", "c", "d")):
    out = []
    for _ in range(n):
        s, o = rng.choice(n_entities, size=2, replace=False)
        out.append((f"e{s}", str(rng.choice(relations)), f"e{o}"))
    return out


# acceptance criteria record one verdict line each; printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
