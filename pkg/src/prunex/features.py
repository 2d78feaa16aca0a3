"""Per-node features and bipartite window graphs for the node classifier."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .aig import Aig
from .resub import Window

ROOT_CHANNELS = (
    "inv0",
    "inv1",
    "fanout_count",
    "level",
    "total_level",
    "node_id",
    "leaves_count",
    "divisor_count",
)
CHILD_CHANNELS = ("inv0", "inv1", "fanout_count", "level", "total_level", "node_id")
CHANNELS = ROOT_CHANNELS + tuple(
    f"child{c}_{name}" for c in (1, 2) for name in CHILD_CHANNELS
)
NUM_CHANNELS = len(CHANNELS)  # 20
NODE_ID_CHANNELS = tuple(i for i, name in enumerate(CHANNELS) if name.endswith("node_id"))
DEFAULT_M_MAX = 64


def _child_block(aig: Aig, nid: int, depth: int) -> list[float]:
    if aig.is_and(nid):
        a, b = aig.fanins(nid)
        inv0, inv1 = a & 1, b & 1
    else:
        inv0 = inv1 = 0
    return [inv0, inv1, aig.fanout_count(nid), aig.levels[nid], depth, nid]


def _row(aig: Aig, nid: int, depth: int, leaves: int, divisors: int) -> np.ndarray:
    row = np.zeros(NUM_CHANNELS)
    block = _child_block(aig, nid, depth)
    row[0:6] = block
    row[6] = leaves
    row[7] = divisors
    if aig.is_and(nid):
        a, b = aig.fanins(nid)
        row[8:14] = _child_block(aig, a >> 1, depth)
        row[14:20] = _child_block(aig, b >> 1, depth)
    return row


def extract_features(aig: Aig, node: int, window: Window) -> np.ndarray:
    """The 20 raw channels of ``node`` (see :data:`CHANNELS`).

    Root block: fanin complement flags, fanout count, level, circuit depth,
    id, window leaf count and divisor count. Each child block repeats the
    first six channels for one fanin.
    """
    if not aig.is_and(node):
        raise ValueError(f"features are defined for AND nodes only (got {node})")
    if window.root != node:
        raise ValueError("window belongs to a different root")
    return _row(aig, node, aig.depth(), len(window.leaves), len(window.divisors))


@dataclass
class BipartiteSubgraph:
    """Root feature row ``T`` and non-root rows ``C``; adjacency is all ones."""

    T: np.ndarray
    C: np.ndarray
    node_id: int = -1

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=np.float64).reshape(-1)
        self.C = np.asarray(self.C, dtype=np.float64).reshape(-1, self.T.shape[0])

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def A(self) -> np.ndarray:
        return np.ones((1, self.m))


def window_rows(aig: Aig, window: Window, m_max: int = DEFAULT_M_MAX) -> list[int]:
    levels = aig.levels
    nodes = sorted(set(window.non_root_nodes), key=lambda n: (levels[n], n))
    return nodes[:m_max]


def build_bipartite(
    aig: Aig,
    root: int,
    window: Window,
    m_max: int = DEFAULT_M_MAX,
    scale_ids: bool = True,
) -> BipartiteSubgraph:
    """Bipartite graph of the window; non-root rows sorted by (level, id).

    Non-root rows carry zeros in the two window channels, since windows are
    only collected for the root. With ``scale_ids`` the node-id channels are
    divided by the largest id of the circuit so they cannot identify it.
    """
    depth = aig.depth()
    T = _row(aig, root, depth, len(window.leaves), len(window.divisors))
    rows = window_rows(aig, window, m_max)
    C = np.array([_row(aig, n, depth, 0, 0) for n in rows]).reshape(len(rows), NUM_CHANNELS)
    if scale_ids:
        scale = 1.0 / max(1, len(aig) - 1)
        T[list(NODE_ID_CHANNELS)] *= scale
        C[:, list(NODE_ID_CHANNELS)] *= scale
    return BipartiteSubgraph(T, C, node_id=root)


class MinMaxFeatureScaler(TransformerMixin, BaseEstimator):
    """Per-channel min-max scaling with clamping to [0, 1].

    Constant channels (max == min) map to 0. Test values outside the fitted
    range are clamped.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty dataset")
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} channels, got {X.shape[1]}")
        span = self.data_max_ - self.data_min_
        const = span <= 0
        safe = np.where(const, 1.0, span)
        out = (X - self.data_min_) / safe
        out[:, const] = 0.0
        return np.clip(out, 0.0, 1.0)

    def transform_graph(self, g: BipartiteSubgraph) -> BipartiteSubgraph:
        T = self.transform(g.T[None, :])[0]
        C = self.transform(g.C) if g.m else g.C.copy()
        return BipartiteSubgraph(T, C, g.node_id)

    def to_dict(self) -> dict:
        check_is_fitted(self, "data_min_")
        return {"min": self.data_min_.tolist(), "max": self.data_max_.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxFeatureScaler":
        s = cls()
        s.data_min_ = np.asarray(d["min"], dtype=np.float64)
        s.data_max_ = np.asarray(d["max"], dtype=np.float64)
        s.n_features_in_ = s.data_min_.shape[0]
        return s


def stack_rows(graphs: Iterable[BipartiteSubgraph]) -> np.ndarray:
    """All root and non-root rows of ``graphs`` as one matrix."""
    blocks = []
    for g in graphs:
        blocks.append(g.T[None, :])
        if g.m:
            blocks.append(g.C)
    if not blocks:
        return np.zeros((0, NUM_CHANNELS))
    return np.vstack(blocks)


def fit_minmax(datasets: Sequence) -> MinMaxFeatureScaler:
    """Fit scaling statistics on the samples of training datasets only."""
    graphs = [s.graph for ds in datasets for s in ds.samples]
    rows = stack_rows(graphs)
    if rows.shape[0] == 0:
        raise ValueError("cannot fit normalization on an empty dataset")
    return MinMaxFeatureScaler().fit(rows)


def apply_minmax(graphs: Iterable[BipartiteSubgraph], scaler: MinMaxFeatureScaler):
    return [scaler.transform_graph(g) for g in graphs]
