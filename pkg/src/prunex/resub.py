"""Windowed resubstitution applied node by node, with per-node effectiveness labels.

A node-level transformation at ``root`` collects a window (a leaf cut of
at most ``k_leaves`` nodes reached within ``m_distance`` hops, plus candidate
divisors), then looks for a cheaper implementation of ``root`` over existing
signals:

* zero-resub: some candidate equals ``root`` or its complement;
* one-resub: ``root`` equals an AND/OR of two (possibly complemented) candidates.

The transformation is effective when it strictly shrinks the AND count, which
happens when the freed maximum fanout-free cone (MFFC) is larger than the
number of nodes added.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Collection, Iterable, TextIO

from .aig import Aig, AigError, update_levels
from .sim import window_tables


class ResubKind(str, Enum):
    NONE = "none"
    ZERO = "zero_resub"
    ONE = "one_resub"


class StaleTransformError(AigError):
    """The replacement refers to nodes that were removed by an earlier transform."""


@dataclass(frozen=True)
class ResubParams:
    k_leaves: int = 12
    m_distance: int = 3
    max_divisors: int = 150
    zero_cost: bool = False

    def __post_init__(self):
        if not 2 <= self.k_leaves <= 16:
            raise ValueError("k_leaves must be in [2, 16]")
        if self.m_distance < 0 or self.max_divisors < 0:
            raise ValueError("m_distance and max_divisors must be non-negative")

    def to_dict(self) -> dict:
        return {
            "k_leaves": self.k_leaves,
            "m_distance": self.m_distance,
            "max_divisors": self.max_divisors,
            "zero_cost": self.zero_cost,
        }


@dataclass(frozen=True)
class Window:
    root: int
    leaves: tuple[int, ...]
    divisors: tuple[int, ...]
    mffc: frozenset[int]
    distance: int

    @property
    def non_root_nodes(self) -> tuple[int, ...]:
        return self.leaves + self.divisors


@dataclass(frozen=True)
class TransformOutcome:
    node: int
    effective: bool
    gain: int
    kind: ResubKind = ResubKind.NONE

    def to_record(self, circuit: str, visit_index: int) -> dict:
        return {
            "circuit": circuit,
            "node_id": self.node,
            "effective": self.effective,
            "gain": self.gain,
            "kind": self.kind.value,
            "visit_index": visit_index,
        }


@dataclass(frozen=True)
class Replacement:
    """How to rewire ``root``.

    Zero-resub: fanouts of ``root`` switch to ``literal``.
    One-resub: the ``root`` slot becomes ``AND(fanins)``; if ``complement`` is
    set, every reference to ``root`` is inverted (this realizes OR gates).
    """

    root: int
    kind: ResubKind
    literal: int | None = None
    fanins: tuple[int, int] | None = None
    complement: bool = False


# windows ------------------------------------------------------------------

def mffc(aig: Aig, root: int) -> frozenset[int]:
    """Nodes (root included) removed together with ``root``."""
    if not aig.is_and(root):
        raise ValueError(f"node {root} is not a live AND node")
    fo = aig.fanouts
    po_refs = aig.po_refs
    dec: dict[int, int] = {}
    cone = {root}
    stack = [root]
    while stack:
        n = stack.pop()
        for lit in aig.fanins(n):
            f = lit >> 1
            if not aig.is_and(f):
                continue
            dec[f] = dec.get(f, 0) + 1
            if dec[f] == len(fo[f]) + po_refs[f]:
                cone.add(f)
                stack.append(f)
    return frozenset(cone)


def collect_window(
    aig: Aig,
    root: int,
    k_leaves: int = 12,
    m_distance: int = 3,
    max_divisors: int = 150,
    *,
    cone: frozenset[int] | None = None,
) -> Window:
    """Collect the leaf cut and candidate divisors of ``root``.

    Leaves come from reconvergence-driven cut expansion, limited to nodes at most
    ``m_distance`` hops from the root. Divisors are the internal cut nodes
    (input direction) plus side nodes whose fanins both lie in the window and
    whose level does not exceed the root level. The root's MFFC is excluded
    throughout; the list is sorted by (level, id) and truncated.
    """
    if not aig.is_and(root):
        raise ValueError(f"node {root} is not a live AND node")
    levels = aig.levels
    if cone is None:
        cone = mffc(aig, root)
    fanin_ids = sorted({lit >> 1 for lit in aig.fanins(root)} - {0})
    dist = {f: 1 for f in fanin_ids}
    leaves = set(fanin_ids)
    internal: set[int] = {root}

    if m_distance >= 2:
        while True:
            best = None
            best_key = None
            for leaf in leaves:
                if not aig.is_and(leaf) or dist[leaf] + 1 > m_distance:
                    continue
                new = {lit >> 1 for lit in aig.fanins(leaf)} - {0} - leaves - internal
                if len(leaves) - 1 + len(new) > k_leaves:
                    continue
                key = (len(new), -levels[leaf], leaf)
                if best_key is None or key < best_key:
                    best, best_key = leaf, key
            if best is None:
                break
            leaves.discard(best)
            internal.add(best)
            for lit in aig.fanins(best):
                f = lit >> 1
                if f == 0 or f in internal:
                    continue
                if f not in leaves:
                    leaves.add(f)
                    dist[f] = dist[best] + 1
                else:
                    dist[f] = min(dist[f], dist[best] + 1)

    leaf_list = tuple(sorted(leaves, key=lambda n: (levels[n], n)))
    if m_distance == 0:
        return Window(root, leaf_list, (), cone, 0)

    divisors = [n for n in internal if n != root and n not in cone]
    window_set = set(leaves) | internal
    root_level = levels[root]
    fo = aig.fanouts
    budget = 4 * max_divisors if max_divisors else 0
    frontier = sorted(window_set - {root}, key=lambda n: (levels[n], n))
    side: list[int] = []
    i = 0
    while i < len(frontier) and len(side) < budget:
        n = frontier[i]
        i += 1
        for f in sorted(set(fo[n])):
            if f in window_set or f in cone or levels[f] > root_level:
                continue
            a, b = aig.fanins(f)
            if (a >> 1 in window_set or a >> 1 == 0) and (b >> 1 in window_set or b >> 1 == 0):
                window_set.add(f)
                side.append(f)
                frontier.append(f)
                if len(side) >= budget:
                    break
    divisors.extend(side)
    divisors.sort(key=lambda n: (levels[n], n))
    return Window(root, leaf_list, tuple(divisors[:max_divisors]), cone, m_distance)


# transformations -----------------------------------------------------------

def try_transform(
    aig: Aig, window: Window, zero_cost: bool = False
) -> tuple[TransformOutcome, Replacement | None]:
    """Search zero-resub then one-resub candidates; does not mutate ``aig``.

    Candidates are the window leaves followed by the divisors. The first
    candidate whose gain (freed MFFC size minus added nodes) is positive wins;
    with ``zero_cost`` a gain of zero is accepted as well.
    """
    root = window.root
    cone = window.mffc
    size = len(cone)
    cands = [n for n in window.leaves + window.divisors if n not in cone]
    nothing = TransformOutcome(root, False, 0, ResubKind.NONE)
    if not cands:
        return nothing, None
    k = len(window.leaves)
    mask = (1 << (1 << k)) - 1
    tab = window_tables(aig, window.leaves, [root, *cands])
    target = tab[root]
    ntarget = target ^ mask
    fo = aig.fanouts[root]
    min_fo = min(fo) if fo else len(aig)

    def accept(gain: int) -> bool:
        return gain > 0 or (zero_cost and gain == 0)

    # zero-resub: constants, then candidates in order
    if accept(size):
        if target == 0 or target == mask:
            lit = 0 if target == 0 else 1
            return (
                TransformOutcome(root, True, size, ResubKind.ZERO),
                Replacement(root, ResubKind.ZERO, literal=lit),
            )
        for c in cands:
            if c >= min_fo:
                continue
            t = tab[c]
            if t == target:
                lit = 2 * c
            elif t == ntarget:
                lit = 2 * c + 1
            else:
                continue
            return (
                TransformOutcome(root, size > 0, size, ResubKind.ZERO),
                Replacement(root, ResubKind.ZERO, literal=lit),
            )

    gain = size - 1
    if not accept(gain):
        return nothing, None
    # one-resub: root == AND(x, y)  or  root == NOT AND(x, y)
    # x, y must contain the target (resp. its complement) to qualify
    current = aig.fanins(root)
    covers_pos: list[tuple[int, int, int]] = []
    covers_neg: list[tuple[int, int, int]] = []
    for idx, c in enumerate(cands):
        if c >= root:
            continue
        for pol in (0, 1):
            t = tab[c] ^ (mask if pol else 0)
            if t & target == target:
                covers_pos.append((idx, 2 * c + pol, t))
            if t & ntarget == ntarget:
                covers_neg.append((idx, 2 * c + pol, t))

    best = None
    for covers, goal, comp in ((covers_pos, target, False), (covers_neg, ntarget, True)):
        for i in range(len(covers)):
            ii, la, ta = covers[i]
            if best is not None and ii > best[0][0]:
                break
            for j in range(i + 1, len(covers)):
                jj, lb, tb = covers[j]
                if jj == ii:
                    continue
                if ta & tb != goal:
                    continue
                pair = (la, lb) if la < lb else (lb, la)
                if not comp and pair == current:
                    continue
                key = (ii, jj)
                if best is None or key < best[0]:
                    best = (key, pair, comp)
                break
    if best is None:
        return nothing, None
    _, pair, comp = best
    return (
        TransformOutcome(root, gain > 0, gain, ResubKind.ONE),
        Replacement(root, ResubKind.ONE, fanins=pair, complement=comp),
    )


def apply_transform(aig: Aig, outcome: TransformOutcome, replacement: Replacement) -> Aig:
    """Rewire ``aig`` in place according to ``replacement`` and return it.

    The freed MFFC nodes are marked dead; ids of surviving nodes never change.
    """
    root = replacement.root
    if outcome.node != root:
        raise ValueError("outcome and replacement disagree on the root")
    if outcome.kind is ResubKind.NONE:
        raise ValueError("cannot apply an ineffective outcome")
    if not aig.is_and(root):
        raise StaleTransformError(f"root {root} is no longer live")
    used = (
        [replacement.literal >> 1]
        if replacement.kind is ResubKind.ZERO
        else [lit >> 1 for lit in replacement.fanins]
    )
    for n in used:
        if n != 0 and (aig.is_dead(n) or not (aig.is_and(n) or aig.is_pi(n))):
            raise StaleTransformError(f"replacement node {n} is dead")

    fo = aig.fanouts
    po_refs = aig.po_refs
    cone = mffc(aig, root)
    expected = len(cone) if replacement.kind is ResubKind.ZERO else len(cone) - 1
    if expected != outcome.gain:
        raise StaleTransformError("MFFC changed since the outcome was computed")
    if any(n in cone for n in used):
        raise StaleTransformError("replacement uses a node of the freed cone")

    f0, f1 = aig._fanin0, aig._fanin1
    changed: list[int] = []

    if replacement.kind is ResubKind.ZERO:
        new = replacement.literal
        target = new >> 1
        if any(target >= f for f in fo[root]):
            raise StaleTransformError("replacement would break topological order")
        for f in sorted(set(fo[root])):
            a, b = f0[f], f1[f]
            if a >> 1 == root:
                a = new ^ (a & 1)
                fo[target].append(f)
            if b >> 1 == root:
                b = new ^ (b & 1)
                fo[target].append(f)
            f0[f], f1[f] = (a, b) if a <= b else (b, a)
            changed.append(f)
        fo[root].clear()
        pos = aig._pos
        for k, lit in enumerate(pos):
            if lit >> 1 == root:
                pos[k] = new ^ (lit & 1)
                po_refs[target] += 1
        po_refs[root] = 0
        dying = cone
    else:
        if replacement.complement:
            for f in set(fo[root]):
                if f0[f] >> 1 == root:
                    f0[f] ^= 1
                if f1[f] >> 1 == root:
                    f1[f] ^= 1
                a, b = f0[f], f1[f]
                if a > b:
                    f0[f], f1[f] = b, a
            pos = aig._pos
            for k, lit in enumerate(pos):
                if lit >> 1 == root:
                    pos[k] = lit ^ 1
        for lit in (f0[root], f1[root]):
            fo[lit >> 1].remove(root)
        dying = cone - {root}
        a, b = replacement.fanins
        f0[root], f1[root] = a, b
        fo[a >> 1].append(root)
        fo[b >> 1].append(root)
        changed.append(root)

    for n in dying:
        aig._dead[n] = True
    for n in dying:
        for lit in (f0[n], f1[n]):
            if lit >> 1 not in dying:
                fo[lit >> 1].remove(n)
    for n in dying:
        fo[n].clear()
    update_levels(aig, changed)
    return aig


# operator loop -------------------------------------------------------------

VisitHook = Callable[[Aig, int, Window], None]


@dataclass
class OperatorResult:
    aig: Aig
    outcomes: list[TransformOutcome]
    wall_time: float
    visited: int = 0

    @property
    def effective_ids(self) -> set[int]:
        return {o.node for o in self.outcomes if o.effective}

    @property
    def num_effective(self) -> int:
        return sum(o.effective for o in self.outcomes)


def run_operator(
    aig: Aig,
    params: ResubParams | None = None,
    filter: Collection[int] | None = None,
    on_visit: VisitHook | None = None,
) -> OperatorResult:
    """Visit AND nodes in ascending id order and apply resubstitution.

    With ``filter`` given, only those ids are visited (ids are fixed before any
    mutation; ids that died meanwhile are skipped). ``on_visit`` sees the graph
    state right before each transformation attempt; its time is not counted.
    """
    params = params or ResubParams()
    g = aig.copy()
    g.fanouts, g.po_refs, g.levels  # warm caches outside the timed loop
    keep = None if filter is None else set(filter)
    outcomes: list[TransformOutcome] = []
    hook_time = 0.0
    start = time.perf_counter()
    order = range(1, len(g)) if keep is None else sorted(k for k in keep if 0 < k < len(g))
    for v in order:
        if not g.is_and(v):
            continue
        win = collect_window(g, v, params.k_leaves, params.m_distance, params.max_divisors)
        if on_visit is not None:
            h0 = time.perf_counter()
            on_visit(g, v, win)
            hook_time += time.perf_counter() - h0
        outcome, repl = try_transform(g, win, params.zero_cost)
        if repl is not None:
            apply_transform(g, outcome, repl)
        outcomes.append(outcome)
    wall = time.perf_counter() - start - hook_time
    return OperatorResult(g.compact(), outcomes, wall, len(outcomes))


def write_outcome_log(fh: TextIO, circuit: str, outcomes: Iterable[TransformOutcome]) -> None:
    import json

    for idx, o in enumerate(outcomes):
        fh.write(json.dumps(o.to_record(circuit, idx), sort_keys=True) + "\n")


def read_outcome_log(fh: TextIO) -> list[dict]:
    import json

    return [json.loads(line) for line in fh if line.strip()]
