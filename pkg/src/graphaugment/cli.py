"""Command-line entry point: ``graphaugment <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 the memory
budget leaves nothing runnable, 1 any other package error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import classifiers as clf
from . import pipeline as P
from .dataset import carve_validation, combine, save_dataset, load_tu
from .errors import ConfigError, DataError, GraphAugmentError, ResourceError
from .generators import ClassGenerator, GeneratorConfig, train_generator
from .graph import graph_stats

log = logging.getLogger("graphaugment")


def _data_dir() -> Path:
    return Path(os.environ.get(P.DATA_DIR_ENV, "data"))


def _dataset(spec: str):
    return P.load_any(spec)


def _coerce_class(ds, text: str):
    for c in ds.class_set:
        if str(c) == text:
            return c
    raise ConfigError(f"class {text!r} not in {list(ds.class_set)}")


def _print_json(obj):
    print(json.dumps(obj, indent=1, sort_keys=True, default=str))


def cmd_ingest(args):
    ds = load_tu(args.directory, args.name)
    out = Path(args.out) if args.out else _data_dir() / f"{args.name}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    print(f"{ds.name}: {len(ds)} graphs, classes {list(ds.class_set)} -> {out}")


def cmd_stats(args):
    ds = _dataset(args.dataset)
    _print_json(graph_stats(ds.graphs).as_dict())


def cmd_route(args):
    ds = _dataset(args.dataset)
    _print_json(P.route_generator(graph_stats(ds.graphs)).as_dict())


def cmd_train_gen(args):
    ds = _dataset(args.dataset)
    label = _coerce_class(ds, args.class_label)
    graphs = ds.by_class()[label]
    kind = args.kind
    if kind == "auto":
        kind = P.route_generator(graph_stats(ds.graphs)).generator_kind
    overrides = {k: getattr(args, k) for k in ("epochs", "hidden_dim", "block_size", "lr") if getattr(args, k) is not None}
    cfg = GeneratorConfig(**overrides)
    gen = train_generator(kind, graphs, label, cfg, seed=args.seed)
    out = Path(args.out or f"{ds.name}-{kind}-class{label}.json")
    gen.save(out)
    print(f"trained {kind} on {len(graphs)} graphs of class {label!r}; final loss {gen.history[-1]:.4f} -> {out}"
          if gen.history else f"saved untrained {kind} -> {out}")


def _read_structured(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path} not found")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return doc


def cmd_generate(args):
    """Plan file keys: ``generators`` (class -> checkpoint), one of ``counts``
    (class -> n), ``fixed_per_class`` (n) or ``ratio`` (k) with ``reference``
    (a dataset whose class counts are scaled), plus optional ``seed``/``out``."""
    doc = _read_structured(args.plan)
    base = Path(args.plan).parent
    if "generators" not in doc:
        raise ConfigError("plan needs a 'generators' mapping")
    gens = {}
    for key, ckpt in doc["generators"].items():
        gen = ClassGenerator.load(base / ckpt)
        if str(gen.class_label) != str(key):
            raise ConfigError(f"checkpoint {ckpt} was trained for class {gen.class_label!r}, not {key!r}")
        gens[gen.class_label] = gen
    if "counts" in doc:
        by_text = {str(c): c for c in gens}
        counts = {by_text.get(str(c), c): int(n) for c, n in doc["counts"].items()}
        plan = P.AugmentPlan("counts", counts)
    elif "fixed_per_class" in doc:
        plan = P.AugmentPlan.fixed_per_class(list(gens), int(doc["fixed_per_class"]))
    elif "ratio" in doc:
        if "reference" not in doc:
            raise ConfigError("ratio plans need a 'reference' dataset")
        ref = P.load_any(doc["reference"], base_dir=base)
        plan = P.AugmentPlan.ratio(ref, float(doc["ratio"]))
    else:
        raise ConfigError("plan needs 'counts', 'fixed_per_class' or 'ratio'")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    out = Path(args.out or doc.get("out") or "generated.json")
    if not out.is_absolute() and args.out is None and doc.get("out"):
        out = base / out
    ds = P.generate_augmentation(gens, plan, np.random.default_rng(seed), name=out.stem)
    save_dataset(ds, out)
    print(f"generated {len(ds)} graphs {ds.class_counts()} -> {out}")


def cmd_augment(args):
    raw = _dataset(args.dataset)
    extra = _dataset(args.generated)
    ds = combine(args.name or f"{raw.name}+{extra.name}", raw, extra)
    out = Path(args.out or f"{ds.name}.json")
    save_dataset(ds, out)
    print(f"{len(raw)} + {len(extra)} = {len(ds)} graphs -> {out}")


def cmd_train_clf(args):
    kind = P.canonical_classifier(args.kind)
    train = _dataset(args.train)
    if args.val:
        val = _dataset(args.val)
    else:
        train, val = carve_validation(train, 0.1, args.seed)
    if args.features == "auto":
        scheme = clf.default_scheme(train, args.degree_cap)
    else:
        scheme = clf.FeatureScheme(args.features, args.degree_cap)
        if scheme.name == "node_label_onehot":
            scheme = clf.default_scheme(train, args.degree_cap)
    classes = sorted(set(train.class_set) | set(val.class_set), key=str)
    model = clf.ClassifierModel(kind, classes, scheme, args.hidden_dim, args.num_layers, args.seed)
    cfg = clf.ClassifierConfig(epochs=args.epochs, patience=args.patience, lr=args.lr, seed=args.seed)
    model, rec = clf.train_classifier(model, train, val, cfg)
    result = {"kind": kind, "best_epoch": rec.best_epoch, "epochs_run": rec.epochs_run,
              "val_accuracy": rec.val_accuracy[rec.best_epoch - 1]}
    if args.test:
        result["test_accuracy"] = clf.evaluate(model, _dataset(args.test))
    if args.out:
        model.save(args.out, {"record": result})
    _print_json(result)


def cmd_experiment(args):
    cfg = P.ExperimentConfig.load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    report = P.run_experiment(cfg)
    run_dir = Path(args.run_dir or f"runs/{Path(args.config).stem}")
    P.write_run(report, run_dir, cfg, plot=args.plot)
    sys.stdout.write(P.report_csv(report))
    print(f"# written to {run_dir}")


def cmd_report(args):
    report = P.read_run(args.run_dir)
    P.emit_report(report, Path(args.run_dir) / "report.csv")
    if args.plot:
        P.emit_report(report, Path(args.run_dir) / "summary.svg", "svg")
    sys.stdout.write(P.report_csv(report))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphaugment", description="Graph classification with size-aware generative augmentation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a TU-format directory to a dataset file")
    p.add_argument("directory")
    p.add_argument("name")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="summary statistics of a dataset")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("route", help="pick the generator family for a dataset")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("train-gen", help="train a generator on one class")
    p.add_argument("dataset")
    p.add_argument("--class", dest="class_label", required=True)
    p.add_argument("--kind", choices=("auto", "graphrnn", "gran"), default="auto")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--block-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_gen)

    p = sub.add_parser("generate", help="sample synthetic graphs according to a plan file")
    p.add_argument("plan")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("augment", help="merge a dataset with generated graphs")
    p.add_argument("dataset")
    p.add_argument("generated")
    p.add_argument("--name")
    p.add_argument("--out")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train-clf", help="train one classifier")
    p.add_argument("kind")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--test")
    p.add_argument("--features", choices=("auto", "degree_onehot", "node_label_onehot", "constant"), default="auto")
    p.add_argument("--degree-cap", type=int, default=10)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--num-layers", type=int, default=3)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=25)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train_clf)

    p = sub.add_parser("experiment", help="run the condition x classifier grid from a config file")
    p.add_argument("config")
    p.add_argument("--run-dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="re-emit the table (and optional plot) of a finished run")
    p.add_argument("run_dir")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, ResourceError):
        return 4
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except GraphAugmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
