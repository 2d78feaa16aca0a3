"""Bipartite graph convolution: root-to-children then children-to-root half passes.

For root row ``t`` and non-root rows ``c_i``::

    h(c_i) = f_C([c_i, g_C([c_i, t])])
    h(t)   = f_T([t, mean_i g_T([h(c_i), t])])

Each of f_C, g_C, f_T, g_T is a two-layer ReLU perceptron applied to the
concatenation of its two arguments. A root without non-root rows receives a
zero aggregate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .layers import Mlp


@dataclass
class GraphBatch:
    T: np.ndarray  # (B, c)
    C: np.ndarray  # (R, c), rows of sample b are contiguous
    counts: np.ndarray  # (B,)

    @property
    def size(self) -> int:
        return self.T.shape[0]

    @property
    def seg(self) -> np.ndarray:
        return np.repeat(np.arange(self.size), self.counts)


class GraphStore:
    """Packed rows of many bipartite graphs, for fast minibatch gathering."""

    def __init__(self, graphs: Sequence, n_channels: int | None = None):
        if n_channels is None:
            n_channels = graphs[0].T.shape[0] if len(graphs) else 0
        self.T = np.array([g.T for g in graphs], dtype=np.float64).reshape(len(graphs), n_channels)
        self.counts = np.array([g.m for g in graphs], dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]]).astype(np.int64) if len(graphs) else np.zeros(0, np.int64)
        rows = [g.C for g in graphs if g.m]
        self.C = np.vstack(rows) if rows else np.zeros((0, n_channels))

    def __len__(self) -> int:
        return self.T.shape[0]

    def take(self, idx) -> GraphBatch:
        idx = np.asarray(idx, dtype=np.int64)
        counts = self.counts[idx]
        total = int(counts.sum())
        if total:
            offs = np.repeat(self.starts[idx] - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
            rows = self.C[offs + np.arange(total)]
        else:
            rows = np.zeros((0, self.T.shape[1]))
        return GraphBatch(self.T[idx], rows, counts)


def segment_sum(x: np.ndarray, counts: np.ndarray) -> np.ndarray:
    out = np.zeros((counts.shape[0], x.shape[1]))
    nz = counts > 0
    if nz.any():
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])[nz]
        out[nz] = np.add.reduceat(x, starts, axis=0)
    return out


class GcnnEncoder:
    def __init__(self, n_channels: int, embed_dim: int, rng: np.random.Generator):
        c, d = n_channels, embed_dim
        self.n_channels = c
        self.embed_dim = d
        self.g_C = Mlp([2 * c, d, d], rng)
        self.f_C = Mlp([c + d, d, d], rng)
        self.g_T = Mlp([d + c, d, d], rng)
        self.f_T = Mlp([c + d, d, d], rng)

    @property
    def mlps(self) -> dict[str, Mlp]:
        return {"f_C": self.f_C, "g_C": self.g_C, "f_T": self.f_T, "g_T": self.g_T}

    @property
    def params(self):
        return [p for m in self.mlps.values() for p in m.params]

    @property
    def grads(self):
        return [g for m in self.mlps.values() for g in m.grads]

    def forward(self, batch: GraphBatch):
        if batch.T.shape[1] != self.n_channels:
            raise ValueError(f"feature width {batch.T.shape[1]} != {self.n_channels}")
        seg = batch.seg
        t_rows = batch.T[seg]
        gc, gc_cache = self.g_C.forward(np.hstack([batch.C, t_rows]))
        hc, hc_cache = self.f_C.forward(np.hstack([batch.C, gc]))
        gt, gt_cache = self.g_T.forward(np.hstack([hc, t_rows]))
        inv = np.zeros(batch.size)
        nz = batch.counts > 0
        inv[nz] = 1.0 / batch.counts[nz]
        agg = segment_sum(gt, batch.counts) * inv[:, None]
        h, ht_cache = self.f_T.forward(np.hstack([batch.T, agg]))
        cache = (seg, inv, gc_cache, hc_cache, gt_cache, ht_cache)
        return h, cache

    def backward(self, batch: GraphBatch, cache, g_h: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the gradient w.r.t. ``T``."""
        seg, inv, gc_cache, hc_cache, gt_cache, ht_cache = cache
        c, d = self.n_channels, self.embed_dim
        g_in = self.f_T.backward(ht_cache, g_h)
        g_T = g_in[:, :c].copy()
        g_agg = g_in[:, c:] * inv[:, None]
        g_gt = g_agg[seg]
        g_in = self.g_T.backward(gt_cache, g_gt)
        g_hc = g_in[:, :d]
        g_trow = g_in[:, d:]
        g_in = self.f_C.backward(hc_cache, g_hc)
        g_gc = g_in[:, c:]
        g_in = self.g_C.backward(gc_cache, g_gc)
        g_trow = g_trow + g_in[:, c:]
        if len(seg):
            g_T += segment_sum(g_trow, np.bincount(seg, minlength=batch.size))
        return g_T

    def embed(self, batch: GraphBatch) -> np.ndarray:
        return self.forward(batch)[0]
