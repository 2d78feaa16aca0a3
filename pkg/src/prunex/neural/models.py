"""Domain-aware multi-head classifier over GCNN embeddings, and the EnsembleMLP baseline.

Training minimizes the per-domain averaged focal risk

    R(theta) = 1/M * sum_k 1/n_k * sum_j l(f_k(g(x_j^k)), y_j^k)

where head ``k`` only sees samples from domain ``k``. At test time the score
of a node is the mean of the M head probabilities.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..features import NUM_CHANNELS, BipartiteSubgraph, MinMaxFeatureScaler, stack_rows
from .gcnn import GcnnEncoder, GraphBatch, GraphStore
from .layers import Adam, Linear, Mlp, step_decay
from .losses import focal_grad, focal_loss, sigmoid


class TrainingDivergedError(RuntimeError):
    """The loss became NaN or infinite."""


@dataclass
class TrainConfig:
    lr: float = 1e-4
    decay_step: int = 100
    decay_rate: float = 0.96
    batch_size: int = 1024  # published scale: 10240
    epochs: int = 300  # published scale: 3000
    gamma: float = 2.0
    alpha: float | None = None  # None: inverse class frequency
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "decay_step", "decay_rate", "batch_size", "epochs"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def positive_alpha(y) -> float:
    """Inverse-frequency weight of the positive class (fraction of negatives)."""
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("no labels")
    a = float((y == 0).mean())
    # single-class data would give a degenerate weight
    return min(max(a, 0.01), 0.99)


class CogNetwork:
    """GCNN encoder, shared ReLU trunk and a linear layer holding the M head logits."""

    def __init__(
        self,
        n_heads: int,
        n_channels: int = NUM_CHANNELS,
        embed_dim: int = 128,
        trunk: Sequence[int] = (1024, 1024, 1024),
        seed: int = 0,
    ):
        if n_heads < 1:
            raise ValueError("at least one head is required")
        rng = np.random.default_rng(seed)
        self.n_heads = n_heads
        self.n_channels = n_channels
        self.embed_dim = embed_dim
        self.trunk_sizes = tuple(int(w) for w in trunk)
        self.encoder = GcnnEncoder(n_channels, embed_dim, rng)
        self.trunk = Mlp([embed_dim, *self.trunk_sizes], rng, relu_output=True) if self.trunk_sizes else None
        width = self.trunk_sizes[-1] if self.trunk_sizes else embed_dim
        self.heads = Linear(width, n_heads, rng)

    def architecture(self) -> dict:
        return {
            "n_heads": self.n_heads,
            "n_channels": self.n_channels,
            "embed_dim": self.embed_dim,
            "trunk": list(self.trunk_sizes),
        }

    def named_params(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        out = []
        for name, mlp in self.encoder.mlps.items():
            for i, layer in enumerate(mlp.layers):
                out.append((f"{name}.{i}.W", layer.W, layer.gW))
                out.append((f"{name}.{i}.b", layer.b, layer.gb))
        if self.trunk is not None:
            for i, layer in enumerate(self.trunk.layers):
                out.append((f"trunk.{i}.W", layer.W, layer.gW))
                out.append((f"trunk.{i}.b", layer.b, layer.gb))
        out.append(("heads.W", self.heads.W, self.heads.gW))
        out.append(("heads.b", self.heads.b, self.heads.gb))
        return out

    @property
    def params(self):
        return [p for _, p, _ in self.named_params()]

    @property
    def grads(self):
        return [g for _, _, g in self.named_params()]

    def zero_grad(self) -> None:
        for g in self.grads:
            g.fill(0.0)

    def forward(self, batch: GraphBatch):
        """Head logits of shape (B, M) and the cache for :meth:`backward`."""
        h, enc_cache = self.encoder.forward(batch)
        if self.trunk is not None:
            z, trunk_cache = self.trunk.forward(h)
        else:
            z, trunk_cache = h, None
        return self.heads.forward(z), (batch, enc_cache, trunk_cache, z)

    def backward(self, cache, g_logits: np.ndarray) -> None:
        batch, enc_cache, trunk_cache, z = cache
        g = self.heads.backward(z, g_logits)
        if self.trunk is not None:
            g = self.trunk.backward(trunk_cache, g)
        self.encoder.backward(batch, enc_cache, g)

    def head_probs(self, batch: GraphBatch) -> np.ndarray:
        return sigmoid(self.forward(batch)[0])

    def predict_score(self, batch: GraphBatch) -> np.ndarray:
        return self.head_probs(batch).mean(axis=1)


def routed_loss_grad(
    logits: np.ndarray, y: np.ndarray, dom: np.ndarray, n_heads: int, alpha: float, gamma: float
):
    """Domain-averaged focal risk of a minibatch and its gradient w.r.t. the logits.

    Sample j only contributes through the logit of its own domain head, with
    weight 1 / (M * n_k) where n_k counts domain-k samples in the batch.
    """
    B = logits.shape[0]
    rows = np.arange(B)
    z = logits[rows, dom]
    counts = np.bincount(dom, minlength=n_heads).astype(np.float64)
    w = 1.0 / (n_heads * counts[dom])
    p = sigmoid(z)
    loss = float(np.sum(w * focal_loss(p, y, alpha, gamma)))
    g = np.zeros_like(logits)
    g[rows, dom] = w * focal_grad(p, y, alpha, gamma)
    return loss, g


def _epoch_batches(dom_idx: list[np.ndarray], batch_size: int, rng: np.random.Generator):
    """Per-domain shuffles split into aligned chunks, so every batch mixes domains proportionally."""
    total = sum(len(ix) for ix in dom_idx)
    steps = max(1, math.ceil(total / batch_size))
    chunks = [np.array_split(rng.permutation(ix), steps) for ix in dom_idx]
    for s in range(steps):
        yield np.concatenate([c[s] for c in chunks])


def multihead_train(
    net: CogNetwork,
    store: GraphStore,
    y: np.ndarray,
    dom: np.ndarray,
    cfg: TrainConfig,
    callback: Callable[[int, float], None] | None = None,
) -> list[float]:
    """Train ``net`` in place; returns the mean minibatch loss per epoch."""
    y = np.asarray(y, dtype=np.float64)
    dom = np.asarray(dom, dtype=np.int64)
    if len(store) == 0:
        raise ValueError("empty training set")
    if dom.max() >= net.n_heads or dom.min() < 0:
        raise ValueError("domain index out of range for the head count")
    alpha = cfg.alpha if cfg.alpha is not None else positive_alpha(y)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(net.params, net.grads, lr=cfg.lr)
    dom_idx = [np.flatnonzero(dom == k) for k in range(net.n_heads)]
    curve = []
    for epoch in range(cfg.epochs):
        lr = step_decay(cfg.lr, epoch, cfg.decay_step, cfg.decay_rate)
        losses = []
        for idx in _epoch_batches(dom_idx, cfg.batch_size, rng):
            batch = store.take(idx)
            opt.zero_grad()
            logits, cache = net.forward(batch)
            loss, g = routed_loss_grad(logits, y[idx], dom[idx], net.n_heads, alpha, cfg.gamma)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"loss {loss} at epoch {epoch} (lr {lr:.3g}, batch {len(idx)}, "
                    f"max |logit| {np.nanmax(np.abs(logits)):.3g})"
                )
            net.backward(cache, g)
            opt.step(lr)
            losses.append(loss)
        curve.append(float(np.mean(losses)))
        if callback is not None:
            callback(epoch, curve[-1])
    return curve


def predict_score(model, graphs: Sequence[BipartiteSubgraph]) -> np.ndarray:
    """Mean-head probability for each graph (already normalized)."""
    net = model.network_ if isinstance(model, COGClassifier) else model
    return net.predict_score(GraphStore(list(graphs), net.n_channels).take(np.arange(len(graphs))))


def _as_graphs(X) -> list[BipartiteSubgraph]:
    graphs = list(X)
    if graphs and not isinstance(graphs[0], BipartiteSubgraph):
        raise TypeError("expected a sequence of BipartiteSubgraph")
    return graphs


class COGClassifier(ClassifierMixin, BaseEstimator):
    """Multi-head GCNN classifier. ``X`` is a sequence of bipartite window graphs.

    With ``normalize`` a min-max scaler is fitted on the training rows and
    applied to every input. ``fit`` takes per-sample domain indices; without
    them a single head is trained on the pooled data.
    """

    def __init__(
        self,
        embed_dim: int = 128,
        trunk: tuple = (1024, 1024, 1024),
        lr: float = 1e-4,
        decay_step: int = 100,
        decay_rate: float = 0.96,
        batch_size: int = 1024,
        epochs: int = 300,
        gamma: float = 2.0,
        alpha: float | None = None,
        normalize: bool = True,
        random_state: int = 0,
        eval_batch: int = 4096,
    ):
        self.embed_dim = embed_dim
        self.trunk = trunk
        self.lr = lr
        self.decay_step = decay_step
        self.decay_rate = decay_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.gamma = gamma
        self.alpha = alpha
        self.normalize = normalize
        self.random_state = random_state
        self.eval_batch = eval_batch

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            decay_step=self.decay_step,
            decay_rate=self.decay_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            gamma=self.gamma,
            alpha=self.alpha,
            seed=self.random_state,
        )

    def _prepare(self, graphs):
        if self.scaler_ is not None:
            graphs = [self.scaler_.transform_graph(g) for g in graphs]
        return GraphStore(graphs, self.n_features_in_)

    def fit(self, X, y, domains=None, n_domains: int | None = None, callback=None):
        graphs = _as_graphs(X)
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if len(graphs) != y.shape[0]:
            raise ValueError("X and y have different lengths")
        if len(graphs) == 0:
            raise ValueError("cannot fit on an empty dataset")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        dom = np.zeros(len(graphs), np.int64) if domains is None else np.asarray(domains, np.int64)
        if dom.shape != y.shape:
            raise ValueError("domains and y have different lengths")
        M = n_domains if n_domains is not None else int(dom.max()) + 1
        self.n_features_in_ = graphs[0].T.shape[0]
        self.classes_ = np.array([0, 1])
        self.scaler_ = MinMaxFeatureScaler().fit(stack_rows(graphs)) if self.normalize else None
        cfg = self.train_config()
        self.alpha_ = cfg.alpha if cfg.alpha is not None else positive_alpha(y)
        cfg.alpha = self.alpha_
        self.network_ = CogNetwork(M, self.n_features_in_, self.embed_dim, self.trunk, seed=self.random_state)
        self.loss_curve_ = multihead_train(self.network_, self._prepare(graphs), y, dom, cfg, callback)
        return self

    def predict_score(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        store = self._prepare(_as_graphs(X))
        out = np.empty(len(store))
        for s in range(0, len(store), self.eval_batch):
            idx = np.arange(s, min(s + self.eval_batch, len(store)))
            out[idx] = self.network_.predict_score(store.take(idx))
        return out

    def predict_proba(self, X) -> np.ndarray:
        s = self.predict_score(X)
        return np.column_stack([1.0 - s, s])

    def predict(self, X) -> np.ndarray:
        return (self.predict_score(X) >= 0.5).astype(np.int64)


class _MlpMember:
    def __init__(self, n_in: int, hidden: Sequence[int], seed: int):
        self.mlp = Mlp([n_in, *hidden, 1], np.random.default_rng(seed))

    def logits(self, X):
        return self.mlp.forward(X)[0][:, 0]


class EnsembleMLPClassifier(ClassifierMixin, BaseEstimator):
    """Independently initialized focal-loss MLPs on the flat root features; mean probability."""

    def __init__(
        self,
        n_estimators: int = 5,  # published: 15
        hidden: tuple = (1024, 1024, 1024),
        lr: float = 1e-4,
        decay_step: int = 100,
        decay_rate: float = 0.96,
        batch_size: int = 1024,
        epochs: int = 300,
        gamma: float = 2.0,
        alpha: float | None = None,
        normalize: bool = True,
        random_state: int = 0,
        member_seeds: Sequence[int] | None = None,
    ):
        self.n_estimators = n_estimators
        self.hidden = hidden
        self.lr = lr
        self.decay_step = decay_step
        self.decay_rate = decay_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.gamma = gamma
        self.alpha = alpha
        self.normalize = normalize
        self.random_state = random_state
        self.member_seeds = member_seeds

    def _seeds(self) -> list[int]:
        if self.member_seeds is not None:
            seeds = [int(s) for s in self.member_seeds]
            if len(seeds) != self.n_estimators:
                raise ValueError("member_seeds must have n_estimators entries")
            return seeds
        ss = np.random.SeedSequence(self.random_state)
        return [int(c.generate_state(1)[0]) for c in ss.spawn(self.n_estimators)]

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0/1")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self.scaler_ = MinMaxFeatureScaler().fit(X) if self.normalize else None
        Xs = self.scaler_.transform(X) if self.scaler_ is not None else X
        alpha = self.alpha if self.alpha is not None else positive_alpha(y)
        self.alpha_ = alpha
        self.members_ = []
        self.loss_curves_ = []
        for seed in self._seeds():
            member = _MlpMember(X.shape[1], self.hidden, seed)
            self.loss_curves_.append(self._train_member(member, Xs, y.astype(np.float64), alpha, seed))
            self.members_.append(member)
        return self

    def _train_member(self, member, X, y, alpha, seed):
        rng = np.random.default_rng(seed)
        opt = Adam(member.mlp.params, member.mlp.grads, lr=self.lr)
        n = X.shape[0]
        steps = max(1, math.ceil(n / self.batch_size))
        curve = []
        for epoch in range(self.epochs):
            lr = step_decay(self.lr, epoch, self.decay_step, self.decay_rate)
            losses = []
            for idx in np.array_split(rng.permutation(n), steps):
                opt.zero_grad()
                out, cache = member.mlp.forward(X[idx])
                p = sigmoid(out[:, 0])
                loss = float(focal_loss(p, y[idx], alpha, self.gamma).mean())
                if not math.isfinite(loss):
                    raise TrainingDivergedError(f"member loss {loss} at epoch {epoch}")
                g = focal_grad(p, y[idx], alpha, self.gamma)[:, None] / len(idx)
                member.mlp.backward(cache, g)
                opt.step(lr)
                losses.append(loss)
            curve.append(float(np.mean(losses)))
        return curve

    def member_probs(self, X) -> np.ndarray:
        check_is_fitted(self, "members_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        Xs = self.scaler_.transform(X) if self.scaler_ is not None else X
        return np.column_stack([sigmoid(m.logits(Xs)) for m in self.members_])

    def predict_score(self, X) -> np.ndarray:
        return self.member_probs(X).mean(axis=1)

    def predict_proba(self, X) -> np.ndarray:
        s = self.predict_score(X)
        return np.column_stack([1.0 - s, s])

    def predict(self, X) -> np.ndarray:
        return (self.predict_score(X) >= 0.5).astype(np.int64)


def root_matrix(graphs: Sequence[BipartiteSubgraph]) -> np.ndarray:
    """Flat root feature rows, the EnsembleMLP input."""
    if not graphs:
        return np.zeros((0, NUM_CHANNELS))
    return np.vstack([g.T for g in graphs])
