"""Command-line driver for the offline (collect, aggregate, train) and online (prune-run) phases.

Data directory layout::

    circuits/manifest.json, circuits/<name>.aig
    datasets/<name>.jsonl, datasets/<name>.outcomes.jsonl
    domains.json, model.json
    reports/offline/, reports/online/, reports/summary/

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal invariant violation (for example a non-equivalent optimized circuit).
"""
from __future__ import annotations

import argparse
import contextlib
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .aig import AigError, AigerFormatError, read_aiger, write_aiger_file
from .bench import BenchSpec, gen_bench
from .config import ConfigError, PipelineConfig, load_config
from .datasets import (
    DatasetError,
    NoEffectiveNodesWarning,
    aggregate,
    collect_dataset,
    domains_from_manifest,
    read_dataset,
    write_dataset,
    write_domains,
)
from .metrics import EvalReport, read_reports, timing_stats, top_k_accuracy, write_reports
from .neural.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .neural.models import COGClassifier, EnsembleMLPClassifier, root_matrix
from .resub import ResubParams, run_operator, write_outcome_log
from .runtime import ModelScorer, OracleScorer, PruneConfig, RandomScorer, prunex_run

MANIFEST_SCHEMA = "prunex.manifest/1"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3


class InvariantViolation(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Context:
    def __init__(self, args, cfg: PipelineConfig):
        self.args = args
        self.cfg = cfg
        self.root = cfg.resolve_data_dir(args.data_dir)
        self.deterministic = args.deterministic
        self.jobs = 1 if args.deterministic else max(1, args.jobs)
        if args.seed is not None:
            cfg.train.seed = args.seed

    @property
    def params(self) -> ResubParams:
        o = self.cfg.operator
        return ResubParams(o.k_leaves, o.m_distance, o.max_divisors, o.zero_cost)

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def manifest(self) -> dict:
        p = self.path("circuits", "manifest.json")
        if not p.exists():
            raise DatasetError(f"{p} not found; run 'prunex gen' first")
        m = json.loads(p.read_text())
        if m.get("schema") != MANIFEST_SCHEMA:
            raise DatasetError(f"{p}: schema {m.get('schema')!r} != {MANIFEST_SCHEMA!r}")
        return m

    def circuits(self, split: str | None = None) -> list[dict]:
        entries = self.manifest()["circuits"]
        return [e for e in entries if split is None or e["split"] == split]

    def dataset(self, name: str):
        p = self.path("datasets", f"{name}.jsonl")
        if not p.exists():
            raise DatasetError(f"{p} not found; run 'prunex collect' first")
        return read_dataset(p)

    def map(self, fn, items):
        if self.jobs == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.jobs) as pool:
            return list(pool.map(fn, items))

    def log(self, msg: str) -> None:
        print(msg, file=sys.stderr)


# subcommands ---------------------------------------------------------------

def cmd_gen(ctx: Context) -> int:
    if not ctx.cfg.bench:
        raise ConfigError("no [[bench]] entries in the configuration")
    out = ctx.path("circuits")
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for b in ctx.cfg.bench:
        try:
            spec = BenchSpec(b.family, b.size, b.seed, b.count, b.num_pis, b.tag, b.name)
        except ValueError as exc:
            raise ConfigError(f"bench entry {b}: {exc}") from exc
        for c in gen_bench(spec):
            c.aig.validate()
            write_aiger_file(c.aig, out / f"{c.name}.aig")
            entries.append(
                {"name": c.name, "file": f"{c.name}.aig", "tag": c.tag, "family": c.family, "params": c.params}
            )
    names = [e["name"] for e in entries]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigError(f"duplicate circuit names: {', '.join(dup)}")
    missing = sorted(set(ctx.cfg.split.test) - set(names))
    if missing:
        raise ConfigError(f"split.test names unknown circuits: {', '.join(missing)}")
    for e in entries:
        e["split"] = "test" if e["name"] in ctx.cfg.split.test else "train"
    manifest = {"schema": MANIFEST_SCHEMA, "circuits": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    ctx.log(f"generated {len(entries)} circuits in {out}")
    return EXIT_OK


def cmd_collect(ctx: Context) -> int:
    out = ctx.path("datasets")
    out.mkdir(parents=True, exist_ok=True)

    def one(entry):
        aig = read_aiger(ctx.path("circuits", entry["file"]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoEffectiveNodesWarning)
            ds, result = collect_dataset(
                aig, ctx.params, tag=entry["tag"], m_max=ctx.cfg.features.m_max, return_result=True
            )
        write_dataset(ds, out / f"{entry['name']}.jsonl", {"generator": entry["params"], "family": entry["family"]})
        with open(out / f"{entry['name']}.outcomes.jsonl", "w") as fh:
            write_outcome_log(fh, entry["name"], result.outcomes)
        return ds

    for ds in ctx.map(one, ctx.circuits()):
        note = "  (no effective nodes)" if ds.no_effective_nodes else ""
        ctx.log(f"{ds.circuit_name}: {ds.n} samples, {ds.positive_fraction:.2%} effective{note}")
    return EXIT_OK


def cmd_aggregate(ctx: Context) -> int:
    train = [ctx.dataset(e["name"]) for e in ctx.circuits("train")]
    if ctx.args.drop_empty:
        dropped = [ds.circuit_name for ds in train if ds.no_effective_nodes]
        if dropped:
            ctx.log(f"dropping circuits without effective nodes: {', '.join(dropped)}")
        train = [ds for ds in train if not ds.no_effective_nodes]
    if not train:
        raise DatasetError("no training circuits in the manifest")
    ds = aggregate(train, ctx.cfg.aggregate.policy, ctx.cfg.aggregate.M)
    write_domains(ds, ctx.path("domains.json"))
    ctx.log(f"{ds.M} domains, sizes {ds.sizes}")
    return EXIT_OK


def _load_domains(ctx: Context):
    p = ctx.path("domains.json")
    if not p.exists():
        raise DatasetError(f"{p} not found; run 'prunex aggregate' first")
    manifest = json.loads(p.read_text())
    names = [m for d in manifest.get("domains", []) for m in d["members"]]
    return domains_from_manifest(manifest, [ctx.dataset(n) for n in names])


def build_model(cfg: PipelineConfig):
    m, t = cfg.model, cfg.train
    common = dict(
        lr=t.lr,
        decay_step=t.decay_step,
        decay_rate=t.decay_rate,
        batch_size=t.batch_size,
        epochs=t.epochs,
        gamma=t.gamma,
        alpha=t.alpha,
        normalize=m.normalize,
        random_state=t.seed,
    )
    if m.kind == "cog":
        return COGClassifier(embed_dim=m.embed_dim, trunk=tuple(m.trunk), **common)
    return EnsembleMLPClassifier(n_estimators=m.n_estimators, hidden=tuple(m.trunk), **common)


def cmd_train(ctx: Context) -> int:
    domains = _load_domains(ctx)
    graphs, y, dom = domains.arrays()
    if y.sum() == 0:
        raise DatasetError("training data has no effective nodes")
    model = build_model(ctx.cfg)
    if isinstance(model, COGClassifier):
        model.fit(graphs, y, domains=dom, n_domains=domains.M)
        curve = model.loss_curve_
    else:
        model.fit(root_matrix(graphs), y)
        curve = model.loss_curves_[0]
    save_checkpoint(model, ctx.path("model.json"))
    ctx.log(f"trained {ctx.cfg.model.kind} on {len(y)} samples; loss {curve[0]:.4g} -> {curve[-1]:.4g}")
    return EXIT_OK


def _load_model(ctx: Context):
    p = ctx.path("model.json")
    if not p.exists():
        raise DatasetError(f"{p} not found; run 'prunex train' first")
    return load_checkpoint(p)


def _model_scores(model, graphs):
    if isinstance(model, EnsembleMLPClassifier):
        return model.predict_score(root_matrix(graphs))
    return model.predict_score(graphs)


def _eval_targets(ctx: Context, names: list[str] | None) -> list[dict]:
    entries = ctx.circuits()
    if names:
        known = {e["name"]: e for e in entries}
        unknown = [n for n in names if n not in known]
        if unknown:
            raise DatasetError(f"unknown circuits: {', '.join(unknown)}")
        return [known[n] for n in names]
    test = [e for e in entries if e["split"] == "test"]
    return test or entries


def cmd_eval_offline(ctx: Context) -> int:
    model = _load_model(ctx)
    reports = []
    for entry in _eval_targets(ctx, ctx.args.circuit):
        ds = ctx.dataset(entry["name"])
        y = ds.labels
        if ds.n == 0 or y.sum() == 0:
            ctx.log(f"{ds.circuit_name}: no effective nodes, top-k accuracy undefined")
        model_scores = _model_scores(model, ds.graphs) if ds.n else np.zeros(0)
        seeds = list(ctx.cfg.eval.random_seeds)
        for k in ctx.cfg.eval.k_values:
            defined = ds.n > 0 and y.sum() > 0
            acc = top_k_accuracy(model_scores, y, k) if defined else None
            reports.append(EvalReport(ds.circuit_name, ctx.cfg.model.kind, k, acc, seeds=[ctx.cfg.train.seed]))
            rand = None
            if defined:
                rng_accs = [
                    top_k_accuracy(np.random.default_rng(s).random(ds.n), y, k) for s in seeds
                ]
                rand = float(np.mean(rng_accs))
            reports.append(EvalReport(ds.circuit_name, "random", k, rand, seeds=seeds))
    write_reports(reports, ctx.path("reports", "offline"))
    for r in reports:
        acc = "n/a" if r.top_k_accuracy is None else f"{r.top_k_accuracy:.3f}"
        ctx.log(f"{r.circuit:28s} {r.scorer:13s} k={r.k:.2f} top-k accuracy {acc}")
    return EXIT_OK


def _scorer(ctx: Context, kind: str, aig, default_effective):
    if kind == "oracle":
        return OracleScorer(default_effective)
    if kind == "random":
        return RandomScorer(ctx.cfg.train.seed)
    return ModelScorer(_load_model(ctx), ctx.params, ctx.cfg.features.m_max)


def cmd_prune_run(ctx: Context) -> int:
    kind = ctx.args.scorer or ctx.cfg.prune.scorer
    k = ctx.args.k if ctx.args.k is not None else ctx.cfg.prune.k
    if not 0.0 < k <= 1.0:
        raise ConfigError("--k must lie in (0, 1]")
    repeats = ctx.cfg.prune.repeats
    out = ctx.path("reports", "online")
    out.mkdir(parents=True, exist_ok=True)
    reports, failures = [], []
    for entry in _eval_targets(ctx, ctx.args.circuit):
        aig = read_aiger(ctx.path("circuits", entry["file"]))
        default = run_operator(aig, ctx.params)
        default_times = [default.wall_time] + [
            run_operator(aig, ctx.params).wall_time for _ in range(repeats - 1)
        ]
        labels = {v: int(v in default.effective_ids) for v in aig.and_ids()}
        pcfg = PruneConfig(k, _scorer(ctx, kind, aig, default.effective_ids), ctx.params, ctx.cfg.prune.verify)
        runs = [prunex_run(aig, pcfg)]
        pcfg.verify = "none"
        runs += [prunex_run(aig, pcfg) for _ in range(repeats - 1)]
        res = runs[0]
        tstats = timing_stats([r.transform_time for r in runs])
        dstats = timing_stats(default_times)
        verdict = "skipped"
        if res.equivalence is not None:
            verdict = f"{'equivalent' if res.equivalence.equivalent else 'NOT_EQUIVALENT'}:{res.equivalence.mode}"
            if not res.equivalence.equivalent:
                failures.append(f"{entry['name']} (counterexample {res.equivalence.counterexample_hex()})")
        acc = top_k_accuracy(res.scores, labels, k) if default.num_effective else None
        write_aiger_file(res.aig, out / f"{entry['name']}.{kind}.aig")
        reports.append(
            EvalReport(
                circuit=entry["name"],
                scorer=ctx.cfg.model.kind if kind == "model" else kind,
                k=k,
                top_k_accuracy=acc,
                scoring_time=timing_stats([r.scoring_time for r in runs]).median,
                transform_time=tstats.median,
                transform_time_mean=tstats.mean,
                transform_time_std=tstats.std,
                default_transform_time=dstats.median,
                normalized_runtime=tstats.median / dstats.median if dstats.median else None,
                input_size=aig.num_ands,
                default_size=default.aig.num_ands,
                final_size=res.final_size,
                normalized_size=res.final_size / default.aig.num_ands if default.aig.num_ands else None,
                size_improvement=(
                    (default.aig.num_ands - res.final_size) / default.aig.num_ands if default.aig.num_ands else 0.0
                ),
                input_depth=aig.depth(),
                default_depth=default.aig.depth(),
                final_depth=res.final_depth,
                equivalence_verdict=verdict,
                num_selected=len(res.selected),
                num_effective=default.num_effective,
                repeats=repeats,
                seeds=[ctx.cfg.train.seed],
            )
        )
    write_reports(reports, out, include_timings=not ctx.deterministic)
    for r in reports:
        ctx.log(
            f"{r.circuit:28s} size {r.input_size} -> {r.final_size} (unfiltered {r.default_size}), "
            f"{r.equivalence_verdict}"
        )
    if failures:
        raise InvariantViolation("optimized circuit not equivalent: " + "; ".join(failures))
    return EXIT_OK


def cmd_report(ctx: Context) -> int:
    reports = []
    for phase in ("offline", "online"):
        p = ctx.path("reports", phase, "report.json")
        if p.exists():
            reports.extend(read_reports(p))
    if not reports:
        raise DatasetError("no reports found; run eval-offline or prune-run first")
    write_reports(reports, ctx.path("reports", "summary"), include_timings=not ctx.deterministic)
    print(f"{'circuit':28s} {'scorer':13s} {'k':>5s} {'top-k':>6s} {'size':>7s} {'norm.rt':>8s}")
    for r in reports:
        acc = "" if r.top_k_accuracy is None else f"{r.top_k_accuracy:.3f}"
        size = "" if r.final_size is None else str(r.final_size)
        rt = "" if r.normalized_runtime is None else f"{r.normalized_runtime:.3f}"
        print(f"{r.circuit:28s} {r.scorer:13s} {r.k:5.2f} {acc:>6s} {size:>7s} {rt:>8s}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "collect": cmd_collect,
    "aggregate": cmd_aggregate,
    "train": cmd_train,
    "eval-offline": cmd_eval_offline,
    "prune-run": cmd_prune_run,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline.toml with all hyperparameters")
    common.add_argument("--data-dir", help="data directory (default: $PRUNEX_DATA_DIR or config data_dir)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for per-circuit stages")
    common.add_argument("--deterministic", action="store_true", help="single thread, timings kept out of reports")
    common.add_argument("--seed", type=int, help="override train.seed (also seeds the random scorer)")
    p = _Parser(prog="prunex", description="Learned pruning of node-level resubstitution.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("eval-offline", "prune-run"):
            sp.add_argument("--circuit", action="append", help="restrict to this circuit (repeatable)")
        if name == "aggregate":
            sp.add_argument("--drop-empty", action="store_true", help="leave out circuits with no effective nodes")
        if name == "prune-run":
            sp.add_argument("--scorer", choices=("model", "oracle", "random"))
            sp.add_argument("--k", type=float, help="top-k fraction")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        ctx = Context(args, cfg)
        limit = contextlib.nullcontext()
        if ctx.deterministic:
            from threadpoolctl import threadpool_limits

            limit = threadpool_limits(limits=1)
        with limit:
            return COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"prunex: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, CheckpointError, AigerFormatError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"prunex: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantViolation, AigError) as exc:
        print(f"prunex: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
