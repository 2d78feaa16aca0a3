"""Shared helpers. The evaluators here are deliberately naive and independent of prunex.sim."""
from __future__ import annotations

import itertools

import numpy as np
import pytest

from prunex.aig import Aig


def eval_node(aig: Aig, lit: int, assignment: dict[int, int], memo: dict[int, int]) -> int:
    """Value of ``lit`` under ``assignment`` (PI id -> bit), by plain recursion."""
    nid = lit >> 1
    if nid not in memo:
        if nid == 0:
            memo[nid] = 0
        elif aig.is_pi(nid):
            memo[nid] = assignment[nid]
        else:
            a, b = aig.fanins(nid)
            memo[nid] = eval_node(aig, a, assignment, memo) & eval_node(aig, b, assignment, memo)
    return memo[nid] ^ (lit & 1)


def eval_outputs(aig: Aig, bits) -> tuple[int, ...]:
    assignment = dict(zip(aig.pis, bits))
    memo: dict[int, int] = {}
    return tuple(eval_node(aig, lit, assignment, memo) for lit in aig.po_literals)


def truth_rows(aig: Aig):
    """All output rows in enumeration order (PI 0 varies fastest)."""
    n = aig.num_pis
    return [eval_outputs(aig, [(j >> i) & 1 for i in range(n)]) for j in range(1 << n)]


def naive_equivalent(g1: Aig, g2: Aig) -> bool:
    return truth_rows(g1) == truth_rows(g2)


def random_aig(rng: np.random.Generator, num_pis: int, num_ands: int, num_pos: int = 3, name="rand") -> Aig:
    """Unhashed random AIG: duplicates and redundant structure are allowed."""
    g = Aig(name)
    lits = [2 * g.add_pi() for _ in range(num_pis)]
    for _ in range(num_ands):
        a, b = rng.choice(len(lits), size=2, replace=len(lits) < 2)
        nid = g.add_and(lits[a] ^ int(rng.integers(2)), lits[b] ^ int(rng.integers(2)))
        lits.append(2 * nid)
    for lit in lits[-num_pos:]:
        g.add_po(lit ^ int(rng.integers(2)))
    return g


def twin_cone():
    """POs: (a&b)&c built as twin, and a&(b&c) as root cone; both compute abc."""
    g = Aig("twin")
    a, b, c = (g.add_pi() for _ in range(3))
    ab = g.add_and(2 * a, 2 * b)
    twin = g.add_and(2 * ab, 2 * c)
    bc = g.add_and(2 * b, 2 * c)
    root = g.add_and(2 * bc, 2 * a)
    g.add_po(2 * twin)
    g.add_po(2 * root)
    return g, twin, root, bc


def pairs(n):
    return itertools.product(range(1 << n), repeat=2)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def separable_graphs(
    rng: np.random.Generator, n: int, shift: float = 0.0, channels: int = 20, threshold: float = 0.5
):
    """Synthetic windows whose label is a threshold on root channel 3.

    ``shift`` moves the distribution of the nuisance channels, giving each
    domain its own covariate shift while keeping the labelling rule fixed.
    """
    from prunex.features import BipartiteSubgraph

    graphs, labels = [], []
    for _ in range(n):
        t = rng.random(channels)
        t[[0, 1, 2, 4]] = np.clip(t[[0, 1, 2, 4]] * 0.5 + shift, 0.0, 1.0)
        m = int(rng.integers(0, 6))
        c = np.clip(rng.random((m, channels)) * 0.5 + shift, 0.0, 1.0)
        graphs.append(BipartiteSubgraph(t, c))
        labels.append(int(t[3] > threshold))
    return graphs, np.array(labels)
