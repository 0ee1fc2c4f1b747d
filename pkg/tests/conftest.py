import numpy as np
import pytest

from slicehin.graph import HeteroGraph


def random_graph(n, p, rng, n_types=2, n_rel=2):
    edges = [(u, int(rng.integers(n_rel)), v)
             for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return HeteroGraph.build(n, edges, node_type=rng.integers(n_types, size=n),
                             type_names=[f"t{i}" for i in range(n_types)],
                             relation_names=[f"r{i}" for i in range(n_rel)])


def path_graph(n):
    return HeteroGraph.build(n, [(i, 0, i + 1) for i in range(n - 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return str(path)


# -- acceptance reporting -------------------------------------------------------

ACCEPTANCE_RESULTS = {}


def record_criterion(number, title, passed, detail):
    """Remember one acceptance outcome; printed once in the terminal summary."""
    ACCEPTANCE_RESULTS[number] = (title, bool(passed), detail)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})")
