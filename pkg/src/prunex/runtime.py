"""Online phase: score every AND node once, keep the top-k, run the filtered operator."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Mapping, Protocol

import numpy as np

from .aig import Aig
from .features import DEFAULT_M_MAX, build_bipartite
from .neural.models import EnsembleMLPClassifier, root_matrix
from .resub import OperatorResult, ResubParams, collect_window, run_operator
from .sim import EquivalenceResult, circuits_equivalent


class Scorer(Protocol):
    name: str

    def score(self, aig: Aig) -> dict[int, float]: ...


class OracleScorer:
    """Scores 1 for nodes known to be effective, 0 otherwise."""

    name = "oracle"

    def __init__(self, effective_ids):
        self.effective_ids = frozenset(int(i) for i in effective_ids)

    @classmethod
    def from_unfiltered_run(cls, aig: Aig, params: ResubParams | None = None) -> "OracleScorer":
        return cls(run_operator(aig, params).effective_ids)

    @classmethod
    def from_outcome_log(cls, records) -> "OracleScorer":
        return cls(r["node_id"] for r in records if r["effective"])

    def score(self, aig: Aig) -> dict[int, float]:
        return {v: float(v in self.effective_ids) for v in aig.and_ids()}


class RandomScorer:
    """Uniform [0, 1) scores drawn in ascending id order from a seeded generator."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def score(self, aig: Aig) -> dict[int, float]:
        ids = aig.and_ids()
        vals = np.random.default_rng(self.seed).random(len(ids))
        return dict(zip(ids, vals.tolist()))


class ModelScorer:
    """Scores from a fitted classifier over bipartite window graphs of the input graph."""

    name = "model"

    def __init__(self, model, params: ResubParams | None = None, m_max: int = DEFAULT_M_MAX):
        self.model = model
        self.params = params or ResubParams()
        self.m_max = m_max

    def graphs(self, aig: Aig):
        ids = aig.and_ids()
        p = self.params
        out = []
        for v in ids:
            win = collect_window(aig, v, p.k_leaves, p.m_distance, p.max_divisors)
            out.append(build_bipartite(aig, v, win, self.m_max))
        return ids, out

    def score(self, aig: Aig) -> dict[int, float]:
        ids, graphs = self.graphs(aig)
        if not ids:
            return {}
        width = graphs[0].T.shape[0]
        expected = getattr(self.model, "n_features_in_", width)
        if width != expected:
            raise ValueError(f"model expects {expected} feature channels, features have {width}")
        if isinstance(self.model, EnsembleMLPClassifier):
            scores = self.model.predict_score(root_matrix(graphs))
        else:
            scores = self.model.predict_score(graphs)
        scores = np.asarray(scores, dtype=np.float64)
        return dict(zip(ids, scores.tolist()))


@dataclass
class ScoreResult:
    scores: dict[int, float]
    scoring_time: float


def score_all(aig: Aig, scorer: Scorer) -> ScoreResult:
    """One score per live AND node, computed on the un-mutated input graph."""
    t0 = time.perf_counter()
    scores = scorer.score(aig)
    elapsed = time.perf_counter() - t0
    return ScoreResult(scores, elapsed)


def select_top_k(scores: Mapping[int, float], k_fraction: float) -> set[int]:
    """The ceil(k * N) highest-scored ids; equal scores favour the lower id."""
    if not scores:
        raise ValueError("no scores to select from")
    if not 0.0 < k_fraction <= 1.0:
        raise ValueError("k_fraction must lie in (0, 1]")
    n = math.ceil(k_fraction * len(scores) - 1e-9)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return {nid for nid, _ in ranked[:n]}


@dataclass
class PruneConfig:
    k_fraction: float = 0.5
    scorer: Scorer | None = None  # None: random scorer with seed 0
    params: ResubParams = field(default_factory=ResubParams)
    verify: str = "auto"  # exhaustive / random / auto / none
    verify_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.k_fraction <= 1.0:
            raise ValueError("k_fraction must lie in (0, 1]")


@dataclass
class PruneRunResult:
    aig: Aig
    scores: dict[int, float]
    selected: set[int]
    operator: OperatorResult
    scoring_time: float
    transform_time: float
    equivalence: EquivalenceResult | None

    @property
    def final_size(self) -> int:
        return self.aig.num_ands

    @property
    def final_depth(self) -> int:
        return self.aig.depth()


def prunex_run(aig: Aig, cfg: PruneConfig | None = None) -> PruneRunResult:
    cfg = cfg or PruneConfig()
    scorer = cfg.scorer or RandomScorer(0)
    scored = score_all(aig, scorer)
    selected = select_top_k(scored.scores, cfg.k_fraction) if scored.scores else set()
    result = run_operator(aig, cfg.params, filter=selected)
    verdict = None
    if cfg.verify != "none":
        verdict = circuits_equivalent(aig, result.aig, cfg.verify, seed=cfg.verify_seed)
    return PruneRunResult(
        result.aig, scored.scores, selected, result, scored.scoring_time, result.wall_time, verdict
    )
