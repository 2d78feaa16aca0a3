"""Top-k recall, normalized QoR and runtime, and report files."""
from __future__ import annotations

import csv
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

# Frozen column order of report.csv; append new columns at the end only.
REPORT_COLUMNS = (
    "circuit",
    "scorer",
    "k",
    "top_k_accuracy",
    "scoring_time",
    "transform_time",
    "transform_time_mean",
    "transform_time_std",
    "default_transform_time",
    "normalized_runtime",
    "input_size",
    "default_size",
    "final_size",
    "normalized_size",
    "size_improvement",
    "input_depth",
    "default_depth",
    "final_depth",
    "equivalence_verdict",
    "num_selected",
    "num_effective",
    "repeats",
    "seeds",
)
TIMING_FIELDS = (
    "scoring_time",
    "transform_time",
    "transform_time_mean",
    "transform_time_std",
    "default_transform_time",
    "normalized_runtime",
)


def top_k_accuracy(scores, labels, k_fraction: float) -> float:
    """Fraction of positives among the ceil(k * N) top-scored samples.

    Ties are broken in favour of the lower index (or lower id for mappings).
    """
    if isinstance(scores, Mapping):
        ids = sorted(scores)
        if not isinstance(labels, Mapping):
            raise TypeError("labels must be a mapping when scores are")
        s = np.array([scores[i] for i in ids], dtype=np.float64)
        y = np.array([labels[i] for i in ids], dtype=np.int64)
    else:
        s = np.asarray(scores, dtype=np.float64).reshape(-1)
        y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if s.shape != y.shape or s.size == 0:
        raise ValueError("scores and labels must be non-empty and of equal length")
    if not 0.0 < k_fraction <= 1.0:
        raise ValueError("k_fraction must lie in (0, 1]")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("top-k accuracy is undefined without positive labels")
    n = math.ceil(k_fraction * s.size - 1e-9)
    order = np.lexsort((np.arange(s.size), -s))
    return float(y[order[:n]].sum() / n_pos)


@dataclass
class RuntimeStats:
    median: float
    mean: float
    std: float
    samples: list[float]


def timing_stats(samples: Sequence[float]) -> RuntimeStats:
    xs = [float(x) for x in samples]
    if not xs:
        raise ValueError("no timing samples")
    std = statistics.pstdev(xs) if len(xs) > 1 else 0.0
    return RuntimeStats(statistics.median(xs), statistics.fmean(xs), std, xs)


def repeat_timed(fn: Callable[[], float], repeats: int = 5) -> RuntimeStats:
    """Call ``fn`` ``repeats`` times; ``fn`` returns its own measured seconds."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    return timing_stats([fn() for _ in range(repeats)])


def wall_clock(fn: Callable[[], object]) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


@dataclass
class EvalReport:
    circuit: str
    scorer: str
    k: float
    top_k_accuracy: float | None = None
    scoring_time: float | None = None
    transform_time: float | None = None  # median over repeats
    transform_time_mean: float | None = None
    transform_time_std: float | None = None
    default_transform_time: float | None = None
    normalized_runtime: float | None = None
    input_size: int | None = None
    default_size: int | None = None
    final_size: int | None = None
    normalized_size: float | None = None
    size_improvement: float | None = None
    input_depth: int | None = None
    default_depth: int | None = None
    final_depth: int | None = None
    equivalence_verdict: str | None = None
    num_selected: int | None = None
    num_effective: int | None = None
    repeats: int | None = None
    seeds: list[int] = field(default_factory=list)

    def to_dict(self, include_timings: bool = True) -> dict:
        d = asdict(self)
        if not include_timings:
            for k in TIMING_FIELDS:
                d[k] = None
        return d

    def timings(self) -> dict:
        return {k: getattr(self, k) for k in TIMING_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown report fields: {sorted(unknown)}")
        return cls(**d)

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def qor_and_runtime(default: EvalReport, prunex: EvalReport) -> dict:
    """Ratios against the unfiltered run and the relative size/depth improvement."""
    if default.circuit != prunex.circuit:
        raise ValueError(f"reports are for different circuits: {default.circuit} vs {prunex.circuit}")

    def ratio(a, b):
        if a is None or b is None:
            return None
        return a / b if b else (1.0 if a == b else math.inf)

    def improvement(d, p):
        if d is None or p is None:
            return None
        return (d - p) / d if d else 0.0

    return {
        "normalized_runtime": ratio(prunex.transform_time, default.transform_time),
        "normalized_size": ratio(prunex.final_size, default.final_size),
        "size_improvement": improvement(default.final_size, prunex.final_size),
        "depth_improvement": improvement(default.final_depth, prunex.final_depth),
        "runtime_improvement": improvement(default.transform_time, prunex.transform_time),
        "depth_equal": default.final_depth == prunex.final_depth,
    }


def write_reports(reports: Sequence[EvalReport], out_dir, include_timings: bool = True) -> None:
    """``report.json`` (list of reports) and ``report.csv`` with :data:`REPORT_COLUMNS`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r.to_dict(include_timings) for r in reports]
    (out / "report.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for row in rows:
            w.writerow(
                ["" if row[c] is None else (" ".join(map(str, row[c])) if c == "seeds" else row[c]) for c in REPORT_COLUMNS]
            )
    if not include_timings:
        timings = [{"circuit": r.circuit, "scorer": r.scorer, "k": r.k, **r.timings()} for r in reports]
        (out / "timings.json").write_text(json.dumps(timings, indent=2, sort_keys=True) + "\n")


def read_reports(path) -> list[EvalReport]:
    return [EvalReport.from_dict(d) for d in json.loads(Path(path).read_text())]
