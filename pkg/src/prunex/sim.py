"""Bit-parallel truth-table simulation and combinational equivalence checking.

Truth tables are Python integers used as packed bit vectors: bit ``j`` holds
the function value under the assignment whose binary encoding is ``j``
(variable ``i`` is bit ``i`` of ``j``).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .aig import Aig, AigError

MAX_WINDOW_VARS = 16


class WindowError(AigError):
    """The requested window is not closed over its leaves, or is too wide."""


@dataclass(frozen=True)
class TruthTable:
    num_vars: int
    bits: int

    def __post_init__(self):
        if not 0 <= self.num_vars <= MAX_WINDOW_VARS:
            raise ValueError(f"num_vars must be in [0, {MAX_WINDOW_VARS}]")
        if self.bits < 0 or self.bits >> (1 << self.num_vars):
            raise ValueError("bit vector wider than 2**num_vars")

    @property
    def mask(self) -> int:
        return full_mask(self.num_vars)

    def __invert__(self) -> "TruthTable":
        return TruthTable(self.num_vars, self.bits ^ self.mask)

    def value(self, assignment: int) -> int:
        return (self.bits >> assignment) & 1

    def to_bitstring(self) -> str:
        """Bits from the all-zeros assignment upward, e.g. ``'0001'`` for AND."""
        return "".join(str(self.value(j)) for j in range(1 << self.num_vars))

    def words(self) -> np.ndarray:
        """The table as little-endian 64-bit words."""
        n_words = max(1, (1 << self.num_vars) // 64)
        return np.array(
            [(self.bits >> (64 * w)) & 0xFFFFFFFFFFFFFFFF for w in range(n_words)],
            dtype=np.uint64,
        )


def full_mask(num_vars: int) -> int:
    return (1 << (1 << num_vars)) - 1


@lru_cache(maxsize=None)
def projection(var: int, num_vars: int) -> int:
    """Truth table of variable ``var`` among ``num_vars`` inputs."""
    if var >= num_vars:
        raise ValueError("variable index out of range")
    run = 1 << var
    block = ((1 << run) - 1) << run  # 0...01...1 pattern of width 2*run
    width = 2 * run
    total = 1 << num_vars
    bits = block
    while width < total:
        bits |= bits << width
        width *= 2
    return bits


def _cone(aig: Aig, leaves: Sequence[int], targets: Iterable[int]) -> list[int]:
    leaf_set = set(leaves)
    seen: set[int] = set()
    stack = list(targets)
    while stack:
        n = stack.pop()
        if n in seen or n in leaf_set or n == 0:
            continue
        if not aig.is_and(n):
            raise WindowError(f"node {n} escapes the window leaf set")
        seen.add(n)
        a, b = aig.fanins(n)
        stack.append(a >> 1)
        stack.append(b >> 1)
    return sorted(seen)


def window_tables(aig: Aig, leaves: Sequence[int], targets: Iterable[int]) -> dict[int, int]:
    """Raw integer tables for every node in the cone of ``targets``."""
    k = len(leaves)
    if k > MAX_WINDOW_VARS:
        raise WindowError(f"{k} leaves exceed the {MAX_WINDOW_VARS}-variable limit")
    targets = list(targets)
    mask = full_mask(k)
    tab = {0: 0}
    for i, leaf in enumerate(leaves):
        tab[leaf] = projection(i, k)
    fanin0, fanin1 = aig._fanin0, aig._fanin1
    for n in _cone(aig, leaves, targets):
        a, b = fanin0[n], fanin1[n]
        ta = tab[a >> 1] ^ (mask if a & 1 else 0)
        tb = tab[b >> 1] ^ (mask if b & 1 else 0)
        tab[n] = ta & tb
    return tab


def window_truth_tables(
    aig: Aig, leaves: Sequence[int], targets: Iterable[int]
) -> dict[int, TruthTable]:
    """Truth table of each target as a function of ``leaves`` (leaf i -> variable i)."""
    targets = list(targets)
    tab = window_tables(aig, leaves, targets)
    return {t: TruthTable(len(leaves), tab[t]) for t in targets}


def simulate(aig: Aig, pi_patterns: Sequence[int], mask: int) -> list[int]:
    """Simulate every live node given one packed pattern per PI."""
    if len(pi_patterns) != aig.num_pis:
        raise ValueError("one pattern per PI required")
    val = [0] * len(aig)
    for pi, pat in zip(aig.pis, pi_patterns):
        val[pi] = pat & mask
    fanin0, fanin1 = aig._fanin0, aig._fanin1
    for n in range(1, len(aig)):
        if aig.is_and(n):
            a, b = fanin0[n], fanin1[n]
            va = val[a >> 1] ^ (mask if a & 1 else 0)
            vb = val[b >> 1] ^ (mask if b & 1 else 0)
            val[n] = va & vb
    return val


def output_patterns(aig: Aig, pi_patterns: Sequence[int], mask: int) -> list[int]:
    val = simulate(aig, pi_patterns, mask)
    return [val[lit >> 1] ^ (mask if lit & 1 else 0) for lit in aig.po_literals]


def evaluate(aig: Aig, assignment: Sequence[int]) -> list[int]:
    """PO values for a single input assignment (one 0/1 per PI)."""
    return output_patterns(aig, [int(bool(v)) for v in assignment], 1)


@dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    counterexample: tuple[int, ...] | None = None
    mode: str = "exhaustive"
    num_vectors: int = 0
    seed: int | None = None

    def __bool__(self) -> bool:
        return self.equivalent

    def counterexample_hex(self) -> str | None:
        return None if self.counterexample is None else format_assignment(self.counterexample)


def format_assignment(bits: Sequence[int]) -> str:
    """Hex vector with PI 0 as the least significant bit."""
    value = sum(int(b) << i for i, b in enumerate(bits))
    width = max(1, (len(bits) + 3) // 4)
    return f"0x{value:0{width}x}"


def _random_patterns(num_pis: int, num_vectors: int, seed: int) -> list[int]:
    rng = np.random.Generator(np.random.PCG64(seed))
    n_bytes = (num_vectors + 7) // 8
    return [int.from_bytes(rng.bytes(n_bytes), "little") for _ in range(num_pis)]


def circuits_equivalent(
    g1: Aig,
    g2: Aig,
    mode: str = "exhaustive",
    *,
    seed: int = 0,
    num_vectors: int = 1 << 16,
) -> EquivalenceResult:
    """Compare two circuits output by output.

    ``mode="exhaustive"`` enumerates all assignments (at most 16 PIs).
    ``mode="random"`` simulates ``num_vectors`` seeded random vectors; when that
    budget covers the whole input space it enumerates instead. ``mode="auto"``
    picks exhaustive whenever possible.
    """
    if g1.num_pis != g2.num_pis or g1.num_pos != g2.num_pos:
        raise ValueError(
            f"arity mismatch: {g1.num_pis}/{g1.num_pos} vs {g2.num_pis}/{g2.num_pos} (PIs/POs)"
        )
    n = g1.num_pis
    if mode == "auto":
        mode = "exhaustive" if n <= MAX_WINDOW_VARS else "random"
    if mode == "random" and n <= MAX_WINDOW_VARS and num_vectors >= (1 << n):
        mode = "exhaustive"
    if mode == "exhaustive":
        if n > MAX_WINDOW_VARS:
            raise ValueError(f"exhaustive mode supports at most {MAX_WINDOW_VARS} PIs")
        width = 1 << n
        pats = [projection(i, n) for i in range(n)]
        used_seed = None
    elif mode == "random":
        width = num_vectors
        pats = _random_patterns(n, num_vectors, seed)
        used_seed = seed
    else:
        raise ValueError(f"unknown mode {mode!r}")
    mask = (1 << width) - 1
    out1 = output_patterns(g1, pats, mask)
    out2 = output_patterns(g2, pats, mask)
    diff = 0
    for a, b in zip(out1, out2):
        diff |= a ^ b
    if not diff:
        return EquivalenceResult(True, None, mode, width, used_seed)
    j = (diff & -diff).bit_length() - 1
    cex = tuple((p >> j) & 1 for p in pats)
    return EquivalenceResult(False, cex, mode, width, used_seed)
