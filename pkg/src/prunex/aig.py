"""And-Inverter Graph container, AIGER I/O and structural utilities.

Signals are handled internally as AIGER-style literals ``2 * id + complemented``.
Node 0 is the constant-false node, so literal 0 is false and literal 1 is true.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

NO_FANIN = -1


class AigError(ValueError):
    """Raised for malformed circuits and violated graph invariants."""


class AigerFormatError(AigError):
    """Raised when an AIGER byte stream cannot be parsed."""


class NodeKind(str, Enum):
    CONST0 = "const0"
    PI = "pi"
    AND = "and"


class Edge(NamedTuple):
    id: int
    complemented: bool

    @property
    def literal(self) -> int:
        return 2 * self.id + int(self.complemented)

    @classmethod
    def from_literal(cls, lit: int) -> "Edge":
        return cls(lit >> 1, bool(lit & 1))


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    fanin0: Edge | None = None
    fanin1: Edge | None = None


def lit_id(lit: int) -> int:
    return lit >> 1


def lit_not(lit: int) -> int:
    return lit ^ 1


class Aig:
    """Combinational AIG with dense, topologically ordered node ids.

    Nodes are never renumbered in place. The resubstitution operator may mark
    nodes dead and rewire fanins; :meth:`compact` renumbers afterwards.
    """

    def __init__(self, name: str = "aig"):
        self.name = name
        self._fanin0: list[int] = [NO_FANIN]
        self._fanin1: list[int] = [NO_FANIN]
        self._is_pi: list[bool] = [False]
        self.pis: list[int] = []
        self._pos: list[int] = []
        self._dead: list[bool] = [False]
        self._fanouts: list[list[int]] | None = None
        self._po_refs: list[int] | None = None
        self._levels: list[int] | None = None

    # construction -------------------------------------------------------
    def add_pi(self) -> int:
        nid = len(self._fanin0)
        self._fanin0.append(NO_FANIN)
        self._fanin1.append(NO_FANIN)
        self._is_pi.append(True)
        self._dead.append(False)
        self.pis.append(nid)
        self._invalidate()
        return nid

    def add_and(self, lit_a: int, lit_b: int) -> int:
        """Append an AND node without hashing; returns the new node id."""
        nid = len(self._fanin0)
        if lit_a >> 1 >= nid or lit_b >> 1 >= nid or lit_a < 0 or lit_b < 0:
            raise AigError(f"fanin literal out of range for new node {nid}")
        if lit_a > lit_b:
            lit_a, lit_b = lit_b, lit_a
        self._fanin0.append(lit_a)
        self._fanin1.append(lit_b)
        self._is_pi.append(False)
        self._dead.append(False)
        self._invalidate()
        return nid

    def add_po(self, lit: int) -> int:
        if lit < 0 or lit >> 1 >= len(self._fanin0):
            raise AigError(f"PO literal {lit} references unknown node")
        self._pos.append(lit)
        self._invalidate()
        return len(self._pos) - 1

    def copy(self) -> "Aig":
        g = Aig.__new__(Aig)
        g.name = self.name
        g._fanin0 = list(self._fanin0)
        g._fanin1 = list(self._fanin1)
        g._is_pi = list(self._is_pi)
        g.pis = list(self.pis)
        g._pos = list(self._pos)
        g._dead = list(self._dead)
        g._fanouts = None if self._fanouts is None else [list(f) for f in self._fanouts]
        g._po_refs = None if self._po_refs is None else list(self._po_refs)
        g._levels = None if self._levels is None else list(self._levels)
        return g

    def _invalidate(self) -> None:
        self._fanouts = None
        self._po_refs = None
        self._levels = None

    # queries ------------------------------------------------------------
    def __len__(self) -> int:
        return len(self._fanin0)

    @property
    def pos(self) -> list[Edge]:
        return [Edge.from_literal(lit) for lit in self._pos]

    @property
    def po_literals(self) -> list[int]:
        return list(self._pos)

    @property
    def num_pis(self) -> int:
        return len(self.pis)

    @property
    def num_pos(self) -> int:
        return len(self._pos)

    @property
    def num_ands(self) -> int:
        """Number of live AND nodes."""
        return sum(1 for i in range(1, len(self)) if self.is_and(i))

    def is_and(self, nid: int) -> bool:
        return self._fanin0[nid] != NO_FANIN and not self._dead[nid]

    def is_pi(self, nid: int) -> bool:
        return self._is_pi[nid]

    def is_dead(self, nid: int) -> bool:
        return self._dead[nid]

    def fanins(self, nid: int) -> tuple[int, int]:
        """Fanin literals of an AND node (canonical order, smaller first)."""
        return self._fanin0[nid], self._fanin1[nid]

    def node(self, nid: int) -> Node:
        if nid == 0:
            return Node(NodeKind.CONST0)
        if self._is_pi[nid]:
            return Node(NodeKind.PI)
        return Node(
            NodeKind.AND,
            Edge.from_literal(self._fanin0[nid]),
            Edge.from_literal(self._fanin1[nid]),
        )

    @property
    def nodes(self) -> list[Node]:
        return [self.node(i) for i in range(len(self))]

    def and_ids(self) -> list[int]:
        return [i for i in range(1, len(self)) if self.is_and(i)]

    # cached structure ---------------------------------------------------
    @property
    def fanouts(self) -> list[list[int]]:
        """Live AND fanouts per node; a node using a signal twice appears twice."""
        if self._fanouts is None:
            fo: list[list[int]] = [[] for _ in range(len(self))]
            for i in range(1, len(self)):
                if self.is_and(i):
                    fo[self._fanin0[i] >> 1].append(i)
                    fo[self._fanin1[i] >> 1].append(i)
            self._fanouts = fo
        return self._fanouts

    @property
    def po_refs(self) -> list[int]:
        if self._po_refs is None:
            refs = [0] * len(self)
            for lit in self._pos:
                refs[lit >> 1] += 1
            self._po_refs = refs
        return self._po_refs

    @property
    def levels(self) -> list[int]:
        if self._levels is None:
            self._levels = node_levels(self)
        return self._levels

    def fanout_count(self, nid: int) -> int:
        return len(self.fanouts[nid]) + self.po_refs[nid]

    def depth(self) -> int:
        lv = self.levels
        return max((lv[lit >> 1] for lit in self._pos), default=0)

    # structural comparison ---------------------------------------------
    def structure(self) -> tuple:
        """Hashable structural signature over live nodes (dead ones dropped)."""
        g = self.compact() if any(self._dead) else self
        return (
            tuple(g.pis),
            tuple((g._fanin0[i], g._fanin1[i]) for i in range(len(g))),
            tuple(g._pos),
        )

    def structurally_equal(self, other: "Aig") -> bool:
        return self.structure() == other.structure()

    def compact(self) -> "Aig":
        """Drop dead nodes and renumber the rest densely, preserving order."""
        g = Aig(self.name)
        remap = [0] * len(self)
        for i in range(1, len(self)):
            if self._dead[i]:
                remap[i] = -1
            elif self._is_pi[i]:
                remap[i] = g.add_pi()
            else:
                a = _remap_lit(self._fanin0[i], remap)
                b = _remap_lit(self._fanin1[i], remap)
                remap[i] = g.add_and(a, b)
        for lit in self._pos:
            g.add_po(_remap_lit(lit, remap))
        return g

    def validate(self) -> None:
        """Check every structural invariant; raises :class:`AigError`."""
        n = len(self)
        if n == 0 or self._fanin0[0] != NO_FANIN or self._is_pi[0]:
            raise AigError("node 0 must be the constant-false node")
        if sorted(self.pis) != [i for i in range(n) if self._is_pi[i]]:
            raise AigError("PI list does not match PI-marked nodes")
        for i in range(1, n):
            if self._is_pi[i]:
                if self._fanin0[i] != NO_FANIN or self._fanin1[i] != NO_FANIN:
                    raise AigError(f"PI {i} has fanins")
                continue
            if self._dead[i]:
                continue
            a, b = self._fanin0[i], self._fanin1[i]
            if a == NO_FANIN or b == NO_FANIN:
                raise AigError(f"AND node {i} lacks fanins")
            if a > b:
                raise AigError(f"AND node {i} fanins are not canonically ordered")
            for lit in (a, b):
                if lit >> 1 >= i:
                    raise AigError(f"AND node {i} violates topological order")
                if self._dead[lit >> 1]:
                    raise AigError(f"AND node {i} references dead node {lit >> 1}")
        for lit in self._pos:
            if lit >> 1 >= n or self._dead[lit >> 1]:
                raise AigError(f"PO literal {lit} is dangling")

    def __repr__(self) -> str:
        return (
            f"Aig(name={self.name!r}, pis={self.num_pis}, pos={self.num_pos}, "
            f"ands={self.num_ands})"
        )


def _remap_lit(lit: int, remap: Sequence[int]) -> int:
    new = remap[lit >> 1]
    if new < 0:
        raise AigError(f"literal {lit} references a dead node")
    return 2 * new + (lit & 1)


class AigBuilder:
    """Hash-consing constructor with one-level constant folding.

    ``and_`` never creates duplicate nodes; the resulting graph is strashed.
    """

    def __init__(self, name: str = "aig"):
        self.aig = Aig(name)
        self._table: dict[tuple[int, int], int] = {}

    def pi(self) -> int:
        return 2 * self.aig.add_pi()

    def and_(self, a: int, b: int) -> int:
        if a > b:
            a, b = b, a
        if a == 0:
            return 0
        if a == 1:
            return b
        if a == b:
            return a
        if a == b ^ 1:
            return 0
        key = (a, b)
        hit = self._table.get(key)
        if hit is None:
            hit = 2 * self.aig.add_and(a, b)
            self._table[key] = hit
        return hit

    def or_(self, a: int, b: int) -> int:
        return self.and_(a ^ 1, b ^ 1) ^ 1

    def xor(self, a: int, b: int) -> int:
        return self.and_(self.and_(a, b) ^ 1, self.and_(a ^ 1, b ^ 1) ^ 1)

    def mux(self, sel: int, then: int, other: int) -> int:
        return self.or_(self.and_(sel, then), self.and_(sel ^ 1, other))

    def po(self, lit: int) -> None:
        self.aig.add_po(lit)


def node_levels(aig: Aig) -> list[int]:
    """Logic level per node: 0 for PIs/const, 1 + max fanin level for ANDs."""
    lv = [0] * len(aig)
    f0, f1 = aig._fanin0, aig._fanin1
    for i in range(1, len(aig)):
        if f0[i] != NO_FANIN and not aig._dead[i]:
            a, b = lv[f0[i] >> 1], lv[f1[i] >> 1]
            lv[i] = 1 + (a if a > b else b)
    return lv


def circuit_depth(aig: Aig) -> int:
    return aig.depth()


def fanout_index(aig: Aig) -> list[list[int]]:
    """Referencing ids per node. PO ``k`` appears as the virtual id ``len(aig) + k``."""
    fo = [list(f) for f in aig.fanouts]
    base = len(aig)
    for k, lit in enumerate(aig._pos):
        fo[lit >> 1].append(base + k)
    return fo


def update_levels(aig: Aig, changed: Iterable[int]) -> None:
    """Propagate level changes forward from ``changed`` through live fanouts."""
    lv = aig.levels
    fo = aig.fanouts
    heap = sorted(set(changed))
    queued = set(heap)
    while heap:
        nid = heapq.heappop(heap)
        queued.discard(nid)
        if not aig.is_and(nid):
            continue
        a, b = lv[aig._fanin0[nid] >> 1], lv[aig._fanin1[nid] >> 1]
        new = 1 + (a if a > b else b)
        if new != lv[nid]:
            lv[nid] = new
            for f in fo[nid]:
                if f not in queued:
                    queued.add(f)
                    heapq.heappush(heap, f)


def strash(aig: Aig) -> Aig:
    """One-level structural hashing with constant propagation.

    Only nodes in the transitive fanin of some PO survive; PIs are kept in order.
    """
    reach = [False] * len(aig)
    stack = [lit >> 1 for lit in aig._pos]
    while stack:
        n = stack.pop()
        if reach[n]:
            continue
        reach[n] = True
        if aig.is_and(n):
            stack.append(aig._fanin0[n] >> 1)
            stack.append(aig._fanin1[n] >> 1)
    b = AigBuilder(aig.name)
    remap = [0] * len(aig)
    for pi in aig.pis:
        remap[pi] = b.pi() >> 1
    lits = [0] * len(aig)
    for pi in aig.pis:
        lits[pi] = 2 * remap[pi]
    for i in range(1, len(aig)):
        if aig.is_and(i) and reach[i]:
            a = lits[aig._fanin0[i] >> 1] ^ (aig._fanin0[i] & 1)
            c = lits[aig._fanin1[i] >> 1] ^ (aig._fanin1[i] & 1)
            lits[i] = b.and_(a, c)
    for lit in aig._pos:
        b.po(lits[lit >> 1] ^ (lit & 1))
    return b.aig


# AIGER --------------------------------------------------------------------

def _parse_header(line: bytes) -> tuple[str, list[int]]:
    parts = line.split()
    if not parts or parts[0] not in (b"aag", b"aig"):
        raise AigerFormatError("missing 'aag'/'aig' header")
    try:
        nums = [int(x) for x in parts[1:]]
    except ValueError as exc:
        raise AigerFormatError(f"non-numeric header field: {line!r}") from exc
    if len(nums) < 5:
        raise AigerFormatError("header needs M I L O A")
    if any(v < 0 for v in nums):
        raise AigerFormatError("negative header field")
    if len(nums) > 5 and any(nums[5:]):
        raise AigerFormatError("bad/constraint/justice/fairness sections are unsupported")
    m, i, l, o, a = nums[:5]
    if l > 0:
        raise AigerFormatError("latches are not supported (sequential circuit)")
    if m < i + l + a:
        raise AigerFormatError("header M is smaller than I + L + A")
    return parts[0].decode(), nums[:5]


def _decode_varint(data: bytes, pos: int) -> tuple[int, int]:
    x = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise AigerFormatError("truncated binary AND section")
        ch = data[pos]
        pos += 1
        x |= (ch & 0x7F) << shift
        if not ch & 0x80:
            return x, pos
        shift += 7


def parse_aiger(data: bytes, name: str = "aig") -> Aig:
    """Parse ASCII (``aag``) or binary (``aig``) combinational AIGER."""
    if isinstance(data, str):
        data = data.encode()
    nl = data.find(b"\n")
    header = data if nl < 0 else data[:nl]
    fmt, (m, n_in, _n_latch, n_out, n_and) = _parse_header(header)
    rest = b"" if nl < 0 else data[nl + 1:]
    inputs: list[int] = []
    outputs: list[int] = []
    ands: list[tuple[int, int, int]] = []
    if fmt == "aag":
        lines = rest.split(b"\n")
        need = n_in + n_out + n_and
        body = [ln.strip() for ln in lines[:need]]
        if len(body) < need or any(not ln for ln in body):
            raise AigerFormatError("truncated ASCII body")
        try:
            for ln in body[:n_in]:
                inputs.append(int(ln))
            for ln in body[n_in:n_in + n_out]:
                outputs.append(int(ln.split()[0]))
            for ln in body[n_in + n_out:]:
                lhs, r0, r1 = (int(x) for x in ln.split()[:3])
                ands.append((lhs, r0, r1))
        except ValueError as exc:
            raise AigerFormatError(f"malformed ASCII body: {exc}") from exc
    else:
        pos = 0
        for _ in range(n_out):
            end = rest.find(b"\n", pos)
            if end < 0:
                raise AigerFormatError("truncated output section")
            try:
                outputs.append(int(rest[pos:end].split()[0]))
            except (ValueError, IndexError) as exc:
                raise AigerFormatError("malformed output literal") from exc
            pos = end + 1
        inputs = [2 * (k + 1) for k in range(n_in)]
        for k in range(n_and):
            lhs = 2 * (n_in + k + 1)
            d0, pos = _decode_varint(rest, pos)
            d1, pos = _decode_varint(rest, pos)
            r0 = lhs - d0
            r1 = r0 - d1
            if r0 < 0 or r1 < 0:
                raise AigerFormatError("negative delta-decoded literal")
            ands.append((lhs, r0, r1))
    return _assemble(name, m, inputs, outputs, ands)


def _assemble(name, m, inputs, outputs, ands) -> Aig:
    defs: dict[int, tuple[int, int]] = {}
    is_input = set()
    for lit in inputs:
        if lit & 1 or lit < 2 or lit >> 1 > m or lit >> 1 in is_input:
            raise AigerFormatError(f"invalid input literal {lit}")
        is_input.add(lit >> 1)
    for lhs, r0, r1 in ands:
        v = lhs >> 1
        if lhs & 1 or v == 0 or v > m or v in is_input or v in defs:
            raise AigerFormatError(f"invalid AND lhs {lhs}")
        defs[v] = (r0, r1)

    def check(lit):
        v = lit >> 1
        if v != 0 and v not in is_input and v not in defs:
            raise AigerFormatError(f"dangling literal reference {lit}")

    for r0, r1 in defs.values():
        check(r0)
        check(r1)
    for lit in outputs:
        check(lit)

    g = Aig(name)
    var2id = {0: 0}
    for lit in inputs:
        var2id[lit >> 1] = g.add_pi()
    # iterative DFS in variable order gives ascending ids for canonical files
    state: dict[int, int] = {}
    for root in sorted(defs):
        if root in var2id:
            continue
        stack = [root]
        while stack:
            v = stack[-1]
            if v in var2id:
                stack.pop()
                continue
            if state.get(v) == 1:
                r0, r1 = defs[v]
                a = 2 * var2id[r0 >> 1] + (r0 & 1)
                b = 2 * var2id[r1 >> 1] + (r1 & 1)
                var2id[v] = g.add_and(a, b)
                stack.pop()
                continue
            state[v] = 1
            for r in sorted(defs[v], reverse=True):
                u = r >> 1
                if u not in var2id:
                    if state.get(u) == 1:
                        raise AigerFormatError("combinational cycle")
                    stack.append(u)
    for lit in outputs:
        g.add_po(2 * var2id[lit >> 1] + (lit & 1))
    return g


def _encode_varint(x: int, out: bytearray) -> None:
    while x & ~0x7F:
        out.append((x & 0x7F) | 0x80)
        x >>= 7
    out.append(x)


def write_aiger(aig: Aig, binary: bool = True) -> bytes:
    """Serialize to AIGER; dead nodes are dropped and PIs numbered first."""
    live = aig.compact() if any(aig._dead) else aig
    var = [0] * len(live)
    for k, pi in enumerate(live.pis):
        var[pi] = k + 1
    n_in = live.num_pis
    ands = [i for i in range(1, len(live)) if live.is_and(i)]
    for k, nid in enumerate(ands):
        var[nid] = n_in + k + 1

    def lit(x: int) -> int:
        return 2 * var[x >> 1] + (x & 1)

    m = n_in + len(ands)
    head = f"{'aig' if binary else 'aag'} {m} {n_in} 0 {live.num_pos} {len(ands)}\n"
    out = bytearray(head.encode())
    if not binary:
        for pi in live.pis:
            out += f"{2 * var[pi]}\n".encode()
    for po in live._pos:
        out += f"{lit(po)}\n".encode()
    for nid in ands:
        lhs = 2 * var[nid]
        r0, r1 = lit(live._fanin1[nid]), lit(live._fanin0[nid])
        if r0 < r1:
            r0, r1 = r1, r0
        if binary:
            _encode_varint(lhs - r0, out)
            _encode_varint(r0 - r1, out)
        else:
            out += f"{lhs} {r0} {r1}\n".encode()
    out += f"c\n{live.name}\n".encode()
    return bytes(out)


def read_aiger(path) -> Aig:
    from pathlib import Path

    p = Path(path)
    return parse_aiger(p.read_bytes(), name=p.stem)


def write_aiger_file(aig: Aig, path, binary: bool | None = None) -> None:
    from pathlib import Path

    p = Path(path)
    if binary is None:
        binary = p.suffix != ".aag"
    p.write_bytes(write_aiger(aig, binary=binary))
