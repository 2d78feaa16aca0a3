"""Synthetic benchmark circuits with functionality tags.

Arithmetic families are built gate by gate from textbook structures, so they
are correct by construction; the random families are seeded and reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aig import Aig, AigBuilder

FAMILY_TAGS = {
    "adder": "arithmetic",
    "multiplier": "arithmetic",
    "comparator": "arithmetic",
    "random_control": "control",
    "random_dag": "random",
}


def _half_adder(b: AigBuilder, x: int, y: int) -> tuple[int, int]:
    return b.xor(x, y), b.and_(x, y)


def _full_adder(b: AigBuilder, x: int, y: int, cin: int) -> tuple[int, int]:
    # 7 ANDs: AND(x,y) is shared between the first XOR and the carry
    p = b.xor(x, y)
    s = b.xor(p, cin)
    carry = b.or_(b.and_(x, y), b.and_(p, cin))
    return s, carry


def _full_adder_majority(b: AigBuilder, x: int, y: int, cin: int) -> tuple[int, int]:
    # carry as the sum-of-products majority ab + bc + ca
    s = b.xor(b.xor(x, y), cin)
    carry = b.or_(b.or_(b.and_(x, y), b.and_(y, cin)), b.and_(x, cin))
    return s, carry


def _ripple(b: AigBuilder, xs: list[int], ys: list[int]) -> list[int]:
    """Sum bits of two equal-width words, carry-out last."""
    out = []
    s, c = _half_adder(b, xs[0], ys[0])
    out.append(s)
    for x, y in zip(xs[1:], ys[1:]):
        s, c = _full_adder(b, x, y, c)
        out.append(s)
    out.append(c)
    return out


def ripple_carry_adder(width: int) -> Aig:
    """``width``-bit adder: PIs a0..a(w-1), b0..b(w-1); POs s0..s(w-1), cout.

    AND count is 3 + 7 * (width - 1): a half adder on bit 0, full adders above.
    """
    if width < 2:
        raise ValueError("adder width must be >= 2")
    b = AigBuilder(f"adder{width}")
    a = [b.pi() for _ in range(width)]
    c = [b.pi() for _ in range(width)]
    for lit in _ripple(b, a, c):
        b.po(lit)
    return b.aig


def array_multiplier(width: int) -> Aig:
    """Unsigned array multiplier with ripple-carry row accumulation.

    Full adders use the majority carry, which leaves the resubstitution
    opportunities typical of unoptimized arithmetic.
    """
    if width < 2:
        raise ValueError("multiplier width must be >= 2")
    b = AigBuilder(f"multiplier{width}")
    a = [b.pi() for _ in range(width)]
    c = [b.pi() for _ in range(width)]
    pp = [[b.and_(a[i], c[j]) for i in range(width)] for j in range(width)]
    result = [pp[0][0]]
    acc = pp[0][1:] + [0]  # running sum shifted right by one bit
    for j in range(1, width):
        row = _ripple_with_const(b, acc, pp[j])
        result.append(row[0])
        acc = row[1:]
    result.extend(acc)
    for lit in result:
        b.po(lit)
    return b.aig


def _ripple_with_const(b: AigBuilder, xs: list[int], ys: list[int]) -> list[int]:
    out = []
    carry = 0
    for x, y in zip(xs, ys):
        if carry == 0:
            s, carry = _half_adder(b, x, y)
        else:
            s, carry = _full_adder_majority(b, x, y, carry)
        out.append(s)
    out.append(carry)
    return out


def comparator(width: int) -> Aig:
    """POs: a < b, a == b (unsigned), computed MSB first."""
    if width < 2:
        raise ValueError("comparator width must be >= 2")
    b = AigBuilder(f"comparator{width}")
    a = [b.pi() for _ in range(width)]
    c = [b.pi() for _ in range(width)]
    lt, eq = 0, 1
    for i in reversed(range(width)):
        bit_lt = b.and_(a[i] ^ 1, c[i])
        bit_eq = b.xor(a[i], c[i]) ^ 1
        lt = b.or_(lt, b.and_(eq, bit_lt))
        eq = b.and_(eq, bit_eq)
    b.po(lt)
    b.po(eq)
    return b.aig


def random_control(gates: int, seed: int, num_pis: int = 16, locality: int = 24) -> Aig:
    """Control-flavoured random logic: muxes, AND/OR terms and XORs over recent signals."""
    rng = np.random.default_rng(seed)
    b = AigBuilder(f"random_control{gates}_s{seed}")
    sigs = [b.pi() for _ in range(num_pis)]
    while b.aig.num_ands < gates:
        pool = sigs[-locality:] if len(sigs) > locality else sigs
        pick = lambda: int(pool[rng.integers(len(pool))]) ^ int(rng.integers(2))  # noqa: E731
        op = rng.random()
        if op < 0.35:
            new = b.mux(pick(), pick(), pick())
        elif op < 0.65:
            new = b.and_(pick(), pick())
        elif op < 0.9:
            new = b.or_(b.and_(pick(), pick()), b.and_(pick(), pick()))
        else:
            new = b.xor(pick(), pick())
        if new >> 1 > 0 and new not in sigs:
            sigs.append(new)
    _close_outputs(b)
    return b.aig


def random_dag(nodes: int, seed: int, num_pis: int = 12) -> Aig:
    """Uniform random AND DAG with random edge complements."""
    rng = np.random.default_rng(seed)
    b = AigBuilder(f"random_dag{nodes}_s{seed}")
    sigs = [b.pi() for _ in range(num_pis)]
    seen = {s >> 1 for s in sigs}
    attempts = 0
    while len(sigs) - num_pis < nodes and attempts < 50 * nodes:
        attempts += 1
        i, j = rng.integers(len(sigs), size=2)
        new = b.and_(sigs[i] ^ int(rng.integers(2)), sigs[j] ^ int(rng.integers(2)))
        if new >> 1 not in seen:
            seen.add(new >> 1)
            sigs.append(new & ~1)
    _close_outputs(b)
    return b.aig


def _close_outputs(b: AigBuilder) -> None:
    """Drive a PO from every AND node that has no fanout."""
    g = b.aig
    used = [False] * len(g)
    for i in range(1, len(g)):
        if g.is_and(i):
            for lit in g.fanins(i):
                used[lit >> 1] = True
    for i in range(1, len(g)):
        if g.is_and(i) and not used[i]:
            b.po(2 * i)


@dataclass(frozen=True)
class BenchSpec:
    family: str
    size: int
    seed: int = 0
    count: int = 1
    num_pis: int | None = None
    tag: str | None = None
    name: str | None = None

    def __post_init__(self):
        if self.family not in FAMILY_TAGS:
            raise ValueError(f"unknown benchmark family {self.family!r}")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.family in ("adder", "multiplier", "comparator") and self.size < 2:
            raise ValueError("arithmetic widths must be >= 2")
        if self.size < 1:
            raise ValueError("size must be positive")

    @property
    def functionality(self) -> str:
        return self.tag or FAMILY_TAGS[self.family]


@dataclass
class BenchCircuit:
    name: str
    aig: Aig
    tag: str
    family: str
    params: dict = field(default_factory=dict)


def gen_bench(spec: BenchSpec) -> list[BenchCircuit]:
    out = []
    for i in range(spec.count):
        seed = spec.seed + i
        if spec.family == "adder":
            g = ripple_carry_adder(spec.size)
        elif spec.family == "multiplier":
            g = array_multiplier(spec.size)
        elif spec.family == "comparator":
            g = comparator(spec.size)
        elif spec.family == "random_control":
            g = random_control(spec.size, seed, num_pis=spec.num_pis or 16)
        else:
            g = random_dag(spec.size, seed, num_pis=spec.num_pis or 12)
        name = spec.name or g.name
        if spec.count > 1 and spec.family in ("adder", "multiplier", "comparator"):
            name = f"{name}_{i}"
        g.name = name
        out.append(
            BenchCircuit(
                name,
                g,
                spec.functionality,
                spec.family,
                {"size": spec.size, "seed": seed, "num_pis": g.num_pis},
            )
        )
    return out
