import itertools
from pathlib import Path

import pytest

from bnarena.bench import load_bn_text
from bnarena.graph import Dag

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "bnarena" / "data" / "fixtures"
DATA = FIXTURES.parent


def fixture_net(name):
    return load_bn_text(FIXTURES / f"{name}.bn")


def all_dags(nodes):
    """Every DAG over ``nodes``, by brute force over the 3 states of each pair."""
    pairs = list(itertools.combinations(nodes, 2))
    out = []
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        arcs = []
        for (a, b), s in zip(pairs, states):
            if s == 1:
                arcs.append((a, b))
            elif s == 2:
                arcs.append((b, a))
        try:
            out.append(Dag(nodes, arcs))
        except ValueError:
            pass
    return out


@pytest.fixture(scope="session")
def dags3():
    return all_dags(["A", "B", "C"])


@pytest.fixture(scope="session")
def dags4():
    return all_dags(["A", "B", "C", "D"])
