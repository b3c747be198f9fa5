import itertools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from tratopo.graph import Graph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).resolve().parents[1] / "data" / "cora"


@st.composite
def graphs(draw, min_nodes=1, max_nodes=20):
    """Random simple undirected graph as (Graph, edge list)."""
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = list(itertools.combinations(range(n), 2))
    if not pairs:
        return Graph.empty(n), []
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [p for p, keep in zip(pairs, mask) if keep]
    return Graph.from_edges(n, edges), edges


def random_graph(rng: np.random.Generator, n: int, p: float) -> Graph:
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    return Graph.from_edges(n, np.stack([iu[0][keep], iu[1][keep]], axis=1))


def path_graph(n: int) -> Graph:
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


@pytest.fixture(scope="session")
def cora():
    if not (DATA / "cora.content").exists():
        pytest.skip("Cora not present; run scripts/fetch_data.py")
    from tratopo.graph import load_citation_dataset
    return load_citation_dataset(DATA / "cora.content", DATA / "cora.cites")


# acceptance verdicts, printed as one line per criterion at the end of the run
ACCEPTANCE: dict = {}


@pytest.fixture
def verdict():
    def record(num: int, name: str, passed: bool, detail: str = ""):
        ACCEPTANCE[num] = (name, bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {name}: {detail}")
