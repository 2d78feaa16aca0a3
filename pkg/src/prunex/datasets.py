"""Circuit datasets, their aggregation into circuit domains, and related statistics."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .aig import Aig
from .features import CHANNELS, DEFAULT_M_MAX, BipartiteSubgraph, build_bipartite
from .resub import OperatorResult, ResubParams, Window, run_operator

DATASET_SCHEMA = "prunex.dataset/1"
DOMAINS_SCHEMA = "prunex.domains/1"
FUNCTIONALITY_TAGS = ("arithmetic", "control", "random", "unknown")
POLICIES = ("by_functionality", "size_balanced_odd_even", "single_mixed")


class DatasetError(ValueError):
    """Malformed, degenerate or schema-incompatible dataset."""


class NoEffectiveNodesWarning(UserWarning):
    pass


@dataclass
class Sample:
    graph: BipartiteSubgraph
    label: int
    node_id: int


@dataclass
class CircuitDataset:
    circuit_name: str
    functionality_tag: str = "unknown"
    samples: list[Sample] = field(default_factory=list)
    no_effective_nodes: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def graphs(self) -> list[BipartiteSubgraph]:
        return [s.graph for s in self.samples]

    @property
    def node_ids(self) -> list[int]:
        return [s.node_id for s in self.samples]

    @property
    def positive_fraction(self) -> float:
        return float(self.labels.mean()) if self.samples else 0.0


def collect_dataset(
    aig: Aig,
    params: ResubParams | None = None,
    *,
    tag: str = "unknown",
    m_max: int = DEFAULT_M_MAX,
    return_result: bool = False,
):
    """Run the operator unfiltered and label each visited node.

    Every sample's bipartite graph reflects the graph state right before the
    transformation attempt at that node.
    """
    params = params or ResubParams()
    graphs: list[BipartiteSubgraph] = []

    def hook(g: Aig, node: int, window: Window) -> None:
        graphs.append(build_bipartite(g, node, window, m_max))

    result = run_operator(aig, params, on_visit=hook)
    samples = [
        Sample(graph, int(o.effective), o.node) for graph, o in zip(graphs, result.outcomes)
    ]
    ds = CircuitDataset(
        aig.name,
        tag,
        samples,
        meta={"operator": params.to_dict(), "m_max": m_max},
    )
    if not any(s.label for s in samples):
        ds.no_effective_nodes = True
        warnings.warn(
            f"circuit {aig.name!r} has no effective nodes", NoEffectiveNodesWarning, stacklevel=2
        )
    if return_result:
        return ds, result
    return ds


# serialization ------------------------------------------------------------

def write_dataset(ds: CircuitDataset, path, extra_header: dict | None = None) -> None:
    header = {
        "schema": DATASET_SCHEMA,
        "circuit": ds.circuit_name,
        "functionality_tag": ds.functionality_tag,
        "channels": list(CHANNELS),
        "n": ds.n,
        "no_effective_nodes": ds.no_effective_nodes,
        **ds.meta,
        **(extra_header or {}),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for s in ds.samples:
            rec = {
                "node_id": s.node_id,
                "y": s.label,
                "m": s.graph.m,
                "T": s.graph.T.tolist(),
                "C": s.graph.C.reshape(-1).tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def read_dataset(path) -> CircuitDataset:
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise DatasetError(f"{path}: empty dataset file")
    header = json.loads(lines[0])
    if header.get("schema") != DATASET_SCHEMA:
        raise DatasetError(f"{path}: schema {header.get('schema')!r} != {DATASET_SCHEMA!r}")
    width = len(header["channels"])
    samples = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        C = np.asarray(rec["C"], dtype=np.float64).reshape(rec["m"], width)
        samples.append(Sample(BipartiteSubgraph(rec["T"], C, rec["node_id"]), int(rec["y"]), rec["node_id"]))
    meta = {
        k: v
        for k, v in header.items()
        if k not in ("schema", "circuit", "functionality_tag", "channels", "n", "no_effective_nodes")
    }
    return CircuitDataset(
        header["circuit"], header["functionality_tag"], samples, header["no_effective_nodes"], meta
    )


# domains ------------------------------------------------------------------

@dataclass
class Domain:
    domain_id: int
    members: list[str]
    samples: list[Sample]

    @property
    def n(self) -> int:
        return len(self.samples)


@dataclass
class DomainSet:
    domains: list[Domain]
    policy: str = "single_mixed"

    @property
    def M(self) -> int:
        return len(self.domains)

    @property
    def sizes(self) -> list[int]:
        return [d.n for d in self.domains]

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def arrays(self):
        """Pooled (graphs, labels, domain index) across domains."""
        graphs, labels, dom = [], [], []
        for k, d in enumerate(self.domains):
            for s in d.samples:
                graphs.append(s.graph)
                labels.append(s.label)
                dom.append(k)
        return graphs, np.array(labels, dtype=np.int64), np.array(dom, dtype=np.int64)

    def manifest(self) -> dict:
        return {
            "schema": DOMAINS_SCHEMA,
            "policy": self.policy,
            "M": self.M,
            "domains": [
                {"domain_id": d.domain_id, "members": d.members, "n": d.n} for d in self.domains
            ],
        }


def aggregate(
    datasets: Sequence[CircuitDataset], policy: str = "size_balanced_odd_even", M: int = 2
) -> DomainSet:
    """Group circuit datasets into domains.

    ``by_functionality`` groups equal tags; ``size_balanced_odd_even`` sorts by
    sample count (descending) and deals circuits round-robin into ``M``
    domains; ``single_mixed`` pools everything.
    """
    if not datasets:
        raise DatasetError("at least one dataset is required")
    if policy == "single_mixed":
        groups = [list(datasets)]
    elif policy == "by_functionality":
        if any(ds.functionality_tag == "unknown" for ds in datasets):
            raise DatasetError("by_functionality needs every circuit tagged")
        tags = sorted({ds.functionality_tag for ds in datasets})
        groups = [[ds for ds in datasets if ds.functionality_tag == t] for t in tags]
    elif policy == "size_balanced_odd_even":
        if M > len(datasets):
            raise DatasetError(f"M={M} exceeds the number of circuits ({len(datasets)})")
        if M < 1:
            raise DatasetError("M must be positive")
        order = sorted(datasets, key=lambda ds: (-ds.n, ds.circuit_name))
        groups = [order[k::M] for k in range(M)]
    else:
        raise DatasetError(f"unknown aggregation policy {policy!r}")
    domains = []
    for k, grp in enumerate(groups):
        samples = [s for ds in grp for s in ds.samples]
        if not samples:
            raise DatasetError(f"domain {k} would be empty")
        domains.append(Domain(k, [ds.circuit_name for ds in grp], samples))
    return DomainSet(domains, policy)


def domains_from_manifest(manifest: dict, datasets: Iterable[CircuitDataset]) -> DomainSet:
    if manifest.get("schema") != DOMAINS_SCHEMA:
        raise DatasetError(f"domain manifest schema {manifest.get('schema')!r} unsupported")
    by_name = {ds.circuit_name: ds for ds in datasets}
    domains = []
    for entry in manifest["domains"]:
        try:
            members = [by_name[name] for name in entry["members"]]
        except KeyError as exc:
            raise DatasetError(f"manifest references unknown circuit {exc}") from exc
        domains.append(
            Domain(entry["domain_id"], entry["members"], [s for ds in members for s in ds.samples])
        )
    return DomainSet(domains, manifest.get("policy", "custom"))


def bound_variable_term(domain_set_or_sizes) -> float:
    """The data-dependent factor (1/M) * sum_k 1/n_k of the generalization bound."""
    sizes = (
        domain_set_or_sizes.sizes
        if isinstance(domain_set_or_sizes, DomainSet)
        else list(domain_set_or_sizes)
    )
    if not sizes or any(n <= 0 for n in sizes):
        raise DatasetError("domain sizes must be positive")
    return sum(1.0 / n for n in sizes) / len(sizes)


def generalization_bound(
    sizes: Sequence[int], c1: float, c2: float, c3: float, c4: float, delta: float
) -> float:
    """Bound value c1 + c2 log(2/delta) V + c3 log(1/delta)/M + c4/M, V the variable term."""
    M = len(sizes)
    return (
        c1
        + c2 * np.log(2.0 / delta) * bound_variable_term(sizes)
        + c3 * np.log(1.0 / delta) / M
        + c4 / M
    )


def max_beneficial_domains(n: int, c2: float, c3: float, c4: float, delta: float) -> float:
    """Largest M for which balanced multi-domain training beats pooling, given n samples."""
    return (c3 * np.log(1.0 / delta) + c4) / (c2 * np.log(2.0 / delta)) * n


def class_weights(labels) -> dict[int, float]:
    """Inverse-frequency weights: alpha_pos = n_neg / n, alpha_neg = 1 - alpha_pos."""
    if isinstance(labels, DomainSet):
        labels = labels.arrays()[1]
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DatasetError("class weights need both classes present")
    a_pos = n_neg / (n_pos + n_neg)
    return {1: a_pos, 0: 1.0 - a_pos}


def write_domains(domain_set: DomainSet, path) -> None:
    Path(path).write_text(json.dumps(domain_set.manifest(), indent=2, sort_keys=True) + "\n")
