"""Command-line interface.

Every subcommand accepts ``--config FILE`` (YAML) plus flag overrides; flags
win. All randomness derives from the top-level ``--seed``. Exit codes: 0 on
success, 1 for usage or configuration errors, 2 for data or schema errors,
3 for numerical failures. Errors go to standard error prefixed with
``spgc: usage error:``, ``spgc: data error:`` or ``spgc: numerical error:``.

Config file layout::

    seed: 0
    circuit:   {kind: BT, n_L: 2, n_S: 16, n_I: 16, n_R: 1, n_c: 256,
                groups: {E_idx: {n_L: 3}}}
    optimizer: {learning_rate: 0.05, beta1: 0.9, beta2: 0.82, epochs: 40, batch_size: 256}
    sampler:   {max_retries: 100}
    grid:      {n_S: [16, 32], E_idx.n_L: [3, 4]}
    bench:     {batch_size: 256, repetitions: 3, memory_cap: 8589934592,
                schemas: [qm9, zinc250k, guacamol, polymer]}
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

import numpy as np
import yaml

from . import bench as bench_mod
from .canonical import canonicalize
from .circuit import RegionGraphSpec
from .exceptions import ConfigurationError, NumericalError, SchemaError, SpgcError
from .graph import DatasetSchema, SparseGraph, random_graph, read_dataset, write_dataset
from .model import build_spgc, load_model
from .molio import (
    AtomVocabulary,
    FULL_VOCAB,
    Validity,
    check_validity,
    compute_metrics,
    parse_corpus,
    parse_smiles,
    remap,
    to_smiles_fragments,
)
from .sampler import CollisionPolicy, sample, sample_conditional
from .train import OptimizerConfig, grad_check, grid_search, train, train_val_test_split

log = logging.getLogger("spgc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------------ config
def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise UsageError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must be a mapping")
    return cfg


def _section(cfg, name) -> dict:
    sec = cfg.get(name) or {}
    if not isinstance(sec, dict):
        raise UsageError(f"config section {name!r} must be a mapping")
    return dict(sec)


def circuit_spec(args, cfg) -> RegionGraphSpec:
    d = _section(cfg, "circuit")
    for name in ("kind", "n_L", "n_S", "n_I", "n_R", "n_c"):
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    d.setdefault("seed", args.seed)
    return RegionGraphSpec.from_dict(d)


def optimizer_config(args, cfg) -> OptimizerConfig:
    d = _section(cfg, "optimizer")
    for name in ("learning_rate", "beta1", "beta2", "epochs", "batch_size"):
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    d.setdefault("seed", args.seed)
    try:
        return OptimizerConfig(**d)
    except TypeError as exc:
        raise ConfigurationError(f"bad optimizer config: {exc}") from exc


def collision_policy(args, cfg) -> CollisionPolicy:
    d = _section(cfg, "sampler")
    if getattr(args, "max_retries", None) is not None:
        d["max_retries"] = args.max_retries
    try:
        return CollisionPolicy(max_retries=int(d.get("max_retries", 100)))
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


# ------------------------------------------------------------------ io helpers
def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def _dump_json(obj, path=None):
    fh = _open_out(path)
    fh.write(json.dumps(obj, sort_keys=True) + "\n")
    _close(fh)


def _vocab_from(header_or_meta: dict) -> AtomVocabulary | None:
    atoms = header_or_meta.get("atoms")
    return AtomVocabulary.from_dict(atoms) if atoms else None


def load_graphs(path, vocab: AtomVocabulary | None = None, fragments: bool = False):
    """Graphs from a JSONL dataset or a SMILES file; returns ``(schema, graphs, vocab)``."""
    if str(path).endswith((".jsonl", ".json")):
        schema, graphs, header = read_dataset(path, with_header=True)
        return schema, graphs, _vocab_from(header) or vocab
    parsed, _ = parse_corpus(path, FULL_VOCAB, fragments=fragments)
    if vocab is None:
        vocab = AtomVocabulary.from_symbols(FULL_VOCAB.symbols[t] for g in parsed for t in g.nodes)
    try:
        graphs = [remap(g, FULL_VOCAB, vocab) for g in parsed]
    except ValueError as exc:
        raise SchemaError(f"{path}: atom outside the model vocabulary: {exc}") from exc
    return None, graphs, vocab


# ------------------------------------------------------------------ commands
def cmd_ingest(args, cfg):
    parsed, errors = parse_corpus(args.input, FULL_VOCAB, skip_invalid=args.skip_invalid)
    for e in errors:
        print(f"spgc: warning: skipped {e}", file=sys.stderr)
    if not parsed:
        raise SchemaError(f"{args.input}: no molecules")
    vocab = AtomVocabulary.from_symbols(FULL_VOCAB.symbols[t] for g in parsed for t in g.nodes)
    graphs = [remap(g, FULL_VOCAB, vocab) for g in parsed]
    if args.canonicalize:
        graphs = [canonicalize(g)[0] for g in graphs]
    schema = DatasetSchema.from_graphs(graphs)
    schema = replace(schema, n_E=3)  # bond vocabulary is fixed
    write_dataset(args.output, graphs, schema, header={"atoms": vocab.to_dict()})
    print(json.dumps({"graphs": len(graphs), "skipped": len(errors), "schema": schema.to_dict()}, sort_keys=True))


def dataset_stats(graphs) -> dict:
    schema = DatasetSchema.from_graphs(graphs)
    n_V = len({t for g in graphs for t in g.nodes})
    n_E = len({t for g in graphs for _, _, t in g.edges})
    return {"size": len(graphs), "n_max": schema.n_max, "m_max": schema.m_max, "n_V": n_V, "n_E": n_E}


def format_stats_row(name: str, s: dict) -> str:
    """One row of the dataset-statistics table."""
    return f"{name:<8} & {s['size']:,} & {s['n_max']} & {s['m_max']} & {s['n_V']} & {s['n_E']}\\\\"


def cmd_stats(args, cfg):
    _, graphs, _ = load_graphs(args.input)
    if not graphs:
        raise SchemaError(f"{args.input}: empty dataset")
    s = dataset_stats(graphs)
    if args.format == "json":
        _dump_json({"name": args.name, **s}, args.output)
    else:
        fh = _open_out(args.output)
        fh.write(format_stats_row(args.name, s) + "\n")
        _close(fh)


def _dataset_for_training(args):
    schema, graphs, vocab = load_graphs(args.data)
    if not graphs:
        raise SchemaError(f"{args.data}: empty dataset")
    test = []
    if args.valid:
        _, valid, _ = load_graphs(args.valid, vocab)
    elif args.split:
        graphs, valid, test = train_val_test_split(graphs, seed=args.seed)
    else:
        valid = []
    everything = graphs + valid + test
    if schema is None:
        schema = replace(DatasetSchema.from_graphs(everything), n_E=3) if vocab else DatasetSchema.from_graphs(everything)
    for g in everything:
        schema.check(g)
    return schema, graphs, valid, test, vocab


def cmd_train(args, cfg):
    schema, graphs, valid, test, vocab = _dataset_for_training(args)
    spec = circuit_spec(args, cfg)
    opt = optimizer_config(args, cfg)
    model = build_spgc(schema, spec, random_state=args.seed)
    if vocab is not None:
        model.metadata = {"atoms": vocab.to_dict()}
    report = train(model, graphs, opt, valid=valid or None, alpha=args.alpha)
    model.save(args.output)
    if args.log:
        report.write_csv(args.log)
    summary = {
        "epochs": opt.epochs,
        "train_nll": report.train_nll[-1],
        "val_nll": report.val_nll[-1] if valid else None,
        "n_parameters": model.circuit.n_parameters(),
    }
    if test:
        summary["test_nll"] = float(-np.mean(model.log_prob_batch(test)))
    print(json.dumps(summary, sort_keys=True))


def cmd_eval_nll(args, cfg):
    model = load_model(args.model)
    _, graphs, _ = load_graphs(args.data, _vocab_from(model.metadata))
    for g in graphs:
        model.schema.check(g)
    lp = model.log_prob_batch(graphs)
    if not np.all(np.isfinite(lp)):
        bad = int(np.argmin(np.isfinite(lp)))
        raise NumericalError(f"graph {bad} has zero likelihood under the model")
    if args.per_graph:
        with open(args.per_graph, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "nll"])
            for i, v in enumerate(lp):
                w.writerow([i, repr(float(-v))])
    _dump_json({"n": len(graphs), "mean_nll": float(-np.mean(lp))}, args.output)


def _write_samples(graphs, args, vocab):
    fh = _open_out(args.output)
    if args.format == "smiles":
        if vocab is None:
            raise SchemaError("model has no atom vocabulary; use --format jsonl")
        for g in graphs:
            fh.write(to_smiles_fragments(g, vocab) + "\n")
    else:
        for g in graphs:
            fh.write(json.dumps(g.to_dict(), separators=(",", ":")) + "\n")
    _close(fh)


def _report_policy(policy):
    print(
        f"spgc: info: edges {policy.edges} retries {policy.retries} fallbacks {policy.fallbacks}",
        file=sys.stderr,
    )


def cmd_sample(args, cfg):
    model = load_model(args.model)
    policy = collision_policy(args, cfg)
    graphs = sample(model, policy, np.random.default_rng(args.seed), args.count)
    _write_samples(graphs, args, _vocab_from(model.metadata))
    _report_policy(policy)


def cmd_cond_sample(args, cfg):
    model = load_model(args.model)
    vocab = _vocab_from(model.metadata)
    if args.smiles is not None:
        if vocab is None:
            raise SchemaError("model has no atom vocabulary; pass --graph instead of --smiles")
        evidence = parse_smiles(args.smiles, vocab)
    elif args.graph is not None:
        try:
            evidence = SparseGraph.from_dict(json.loads(args.graph))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"--graph is not valid JSON: {exc}") from exc
    else:
        raise UsageError("one of --smiles or --graph is required")
    if not args.keep_order:
        evidence = canonicalize(evidence)[0]
    policy = collision_policy(args, cfg)
    graphs = sample_conditional(model, evidence, policy, np.random.default_rng(args.seed), args.count)
    _write_samples(graphs, args, vocab)
    _report_policy(policy)


def cmd_metrics(args, cfg):
    vocab = None
    train_graphs = []
    if args.train:
        _, train_graphs, vocab = load_graphs(args.train)
    if args.model:
        vocab = _vocab_from(load_model(args.model).metadata) or vocab
    # sampled SMILES may hold disconnected records written as fragments
    _, samples, vocab = load_graphs(args.samples, vocab, fragments=True)
    if vocab is None:
        raise SchemaError("no atom vocabulary: pass a SMILES or ingested training set, or --model")
    report = compute_metrics(samples, train_graphs, vocab)
    fh = _open_out(args.output)
    fh.write(report.to_json() + "\n")
    _close(fh)


def sample_validity(model, vocab, n_samples, seed) -> float | None:
    if vocab is None:
        return None
    graphs = sample(model, CollisionPolicy(), np.random.default_rng(seed), n_samples)
    return float(np.mean([check_validity(g, vocab) is Validity.VALID for g in graphs]))


def cmd_grid(args, cfg):
    schema, graphs, valid, _, vocab = _dataset_for_training(args)
    grid = cfg.get("grid")
    if not grid:
        raise UsageError("grid search needs a 'grid' section in the config")
    base = circuit_spec(args, cfg)
    opt = optimizer_config(args, cfg)
    results = grid_search(
        graphs,
        grid,
        build=lambda spec: build_spgc(schema, spec, random_state=args.seed),
        cfg=opt,
        valid=valid or None,
        validity=lambda m: sample_validity(m, vocab, args.validity_samples, args.seed),
        base_spec=base,
    )
    fh = _open_out(args.output)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["rank", "params", "val_nll", "validity", "error"])
    for i, r in enumerate(results, 1):
        w.writerow([
            i,
            json.dumps(r.params, sort_keys=True),
            repr(float(r.val_nll)),
            "" if r.validity is None else repr(r.validity),
            r.error or "",
        ])
    _close(fh)


def cmd_bench(args, cfg):
    sec = _section(cfg, "bench")
    names = args.schemas.split(",") if args.schemas else sec.get("schemas", list(bench_mod.DATASET_SCHEMAS))
    unknown = [n for n in names if n not in bench_mod.DATASET_SCHEMAS]
    if unknown:
        raise UsageError(f"unknown schema(s) {unknown}; choose from {list(bench_mod.DATASET_SCHEMAS)}")
    spec = bench_mod.default_bench_spec()
    if "circuit" in cfg or any(getattr(args, k, None) is not None for k in ("kind", "n_L", "n_S", "n_I", "n_R", "n_c")):
        spec = circuit_spec(args, {"circuit": {**spec.to_dict(), **_section(cfg, "circuit")}})
    try:
        bcfg = bench_mod.BenchConfig(
            schemas={n: bench_mod.DATASET_SCHEMAS[n] for n in names},
            batch_size=args.batch_size or int(sec.get("batch_size", 256)),
            repetitions=args.repetitions or int(sec.get("repetitions", 3)),
            seed=args.seed,
            spec=spec,
            memory_cap=int(args.memory_cap or sec.get("memory_cap", 8 * 2**30)),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = bench_mod.bench(bcfg)
    fh = _open_out(args.output)
    fh.write(bench_mod.to_csv(rows))
    _close(fh)
    if args.summary:
        print(json.dumps(bench_mod.scaling_summary(rows), sort_keys=True), file=sys.stderr)


def cmd_grad_check(args, cfg):
    rng = np.random.default_rng(args.seed)
    reports = []
    if args.model:
        model = load_model(args.model)
        if args.data:
            _, graphs, _ = load_graphs(args.data, _vocab_from(model.metadata))
        else:
            graphs = [random_graph(model.schema, rng) for _ in range(args.models)]
        for g in graphs[: args.models]:
            reports.append(grad_check(model, g, step=args.step, tol=args.tol, random_state=rng))
    else:
        schema = DatasetSchema(*[int(v) for v in args.schema.split(",")])
        spec = circuit_spec(args, cfg)
        for i in range(args.models):
            model = build_spgc(schema, replace(spec, seed=spec.seed + i), random_state=rng)
            g = random_graph(schema, rng)
            reports.append(grad_check(model, g, step=args.step, tol=args.tol, random_state=rng))
    worst = max(r.max_rel_error for r in reports)
    passed = all(r.passed for r in reports)
    worst_abs = max(r.max_abs_error for r in reports)
    _dump_json(
        {"checked": len(reports), "max_abs_error": worst_abs, "max_rel_error": worst, "passed": passed, "tol": args.tol},
        args.output,
    )
    if not passed:
        raise NumericalError(f"gradient check failed: max relative error {worst:.3g} >= {args.tol}")


# ------------------------------------------------------------------ parser
def _add_circuit_flags(p):
    p.add_argument("--kind", choices=["BT", "RT"])
    p.add_argument("--n-L", dest="n_L", type=int)
    p.add_argument("--n-S", dest="n_S", type=int)
    p.add_argument("--n-I", dest="n_I", type=int)
    p.add_argument("--n-R", dest="n_R", type=int)
    p.add_argument("--n-c", dest="n_c", type=int)


def _add_optimizer_flags(p):
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)


def _add_data_flags(p):
    p.add_argument("data", help="training data: JSONL dataset or SMILES file")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--valid", help="validation data file")
    g.add_argument("--split", action="store_true", help="seeded 80/10/10 split of DATA")
    p.add_argument("--alpha", type=float, default=0.0, help="size-table smoothing")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master random seed (default 0)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML config file")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    parser = _Parser(prog="spgc", description="Tractable circuit models of attributed graphs.", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser
    sub.required = True

    p = sub.add_parser("ingest", help="SMILES file to JSONL dataset")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--skip-invalid", action="store_true", help="warn and skip unparsable lines")
    p.add_argument("--canonicalize", action="store_true", help="store graphs in canonical order")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="dataset statistics row")
    p.add_argument("input", help="JSONL dataset or SMILES file")
    p.add_argument("--name", default="dataset")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="maximum-likelihood training")
    _add_data_flags(p)
    p.add_argument("-o", "--output", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-epoch CSV log")
    _add_circuit_flags(p)
    _add_optimizer_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-nll", help="mean negative log-likelihood of a dataset")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--per-graph", help="CSV of per-graph NLL")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval_nll)

    for name, func, hlp in (("sample", cmd_sample, "unconditional samples"), ("cond-sample", cmd_cond_sample, "samples containing a substructure")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("model")
        p.add_argument("--count", type=int, default=1)
        p.add_argument("--format", choices=["jsonl", "smiles"], default="jsonl")
        p.add_argument("--max-retries", type=int)
        p.add_argument("-o", "--output")
        if name == "cond-sample":
            p.add_argument("--smiles", help="substructure as SMILES")
            p.add_argument("--graph", help="substructure as a JSON graph record")
            p.add_argument("--keep-order", action="store_true", help="use the evidence node order as given")
        p.set_defaults(func=func)

    p = sub.add_parser("metrics", help="validity, uniqueness and novelty")
    p.add_argument("samples", help="sampled graphs (JSONL) or SMILES")
    p.add_argument("--train", help="training set for novelty")
    p.add_argument("--model", help="checkpoint supplying the atom vocabulary")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    _add_data_flags(p)
    p.add_argument("--validity-samples", type=int, default=1000)
    p.add_argument("-o", "--output")
    _add_circuit_flags(p)
    _add_optimizer_flags(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bench", help="sparse vs dense cost benchmark (CSV)")
    p.add_argument("--schemas", help="comma-separated subset of " + ",".join(bench_mod.DATASET_SCHEMAS))
    p.add_argument("--batch-size", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--memory-cap", type=int, help="skip models whose estimated activations exceed this many bytes")
    p.add_argument("--summary", action="store_true", help="print fitted slopes to stderr")
    p.add_argument("-o", "--output")
    _add_circuit_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("grad-check", help="backward vs central finite differences")
    p.add_argument("--model", help="checkpoint to check (default: random toy models)")
    p.add_argument("--data", help="graphs to check the checkpoint on")
    p.add_argument("--schema", default="3,2,2,2", help="toy schema n_max,m_max,n_V,n_E")
    p.add_argument("--models", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("-o", "--output")
    _add_circuit_flags(p)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(getattr(args, "config", None))
        if getattr(args, "seed", None) is None:
            try:
                args.seed = int(cfg.get("seed", 0))
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config seed must be an integer: {exc}") from exc
        verbose = getattr(args, "verbose", False)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="spgc: %(message)s")
        args.func(args, cfg)
    except UsageError as exc:
        print(f"spgc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"spgc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"spgc: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SpgcError, ValueError, OSError, KeyError) as exc:
        print(f"spgc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
