"""Size-aware augmentation pipeline: routing, per-class generation, the
experiment grid and its report."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import classifiers as clf
from .dataset import (
    LabeledDataset,
    SplitSpec,
    carve_validation,
    combine,
    dataset_to_json,
    largest_remainder,
    load_dataset,
    load_tu,
    stratified_split,
)
from .errors import (
    ConfigError,
    DataError,
    EmptyDataset,
    InsufficientClassSize,
    IoError,
    PlanMismatch,
    ResourceError,
)
from .generators import KINDS as GENERATOR_KINDS
from .generators import ClassGenerator, GeneratorConfig, train_generator
from .generators import memory_estimate as generator_memory
from .graph import GraphStats, _label_key, graph_stats

log = logging.getLogger(__name__)

NODE_THRESHOLD = 50.0
EDGE_THRESHOLD = 1225.0
DATA_DIR_ENV = "GRAPHAUGMENT_DATA_DIR"

RAW, REAL = "raw-data", "w/ Real"
GEN = {1: "w/ Gen.1", 2: "w/ Gen.2", 3: "w/ Gen.3"}
GEN_GRAPHRNN, GEN_GRAN = "w/ Gen.(GraphRNN)", "w/ Gen.(GRAN)"
CONDITIONS = (RAW, REAL, GEN[1], GEN[2], GEN[3], GEN_GRAPHRNN, GEN_GRAN)
_ALIASES = {
    "raw": RAW, "raw-data": RAW,
    "real": REAL, "w/real": REAL, "w/ real": REAL,
    "gen1": GEN[1], "w/gen.1": GEN[1], "w/ gen.1": GEN[1], "w/gen1": GEN[1],
    "gen2": GEN[2], "w/gen.2": GEN[2], "w/ gen.2": GEN[2], "w/gen2": GEN[2],
    "gen3": GEN[3], "w/gen.3": GEN[3], "w/ gen.3": GEN[3], "w/gen3": GEN[3],
    "graphrnn": GEN_GRAPHRNN, "w/gen.(graphrnn)": GEN_GRAPHRNN, "w/ gen.(graphrnn)": GEN_GRAPHRNN,
    "gran": GEN_GRAN, "w/gen.(gran)": GEN_GRAN, "w/ gen.(gran)": GEN_GRAN,
}


def canonical_condition(name: str) -> str:
    key = str(name).strip().lower()
    if key not in _ALIASES:
        raise ConfigError(f"unknown condition {name!r}; expected one of {CONDITIONS}")
    return _ALIASES[key]


def canonical_classifier(name: str) -> str:
    for kind in clf.KINDS:
        if kind.lower() == str(name).strip().lower():
            return kind
    raise ConfigError(f"unknown classifier {name!r}; expected one of {clf.KINDS}")


def sub_seed(master: int, name: str) -> int:
    """Independent 32-bit seed derived from the master seed and a stream name."""
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFF, zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


# -- routing -------------------------------------------------------------------------

@dataclass(frozen=True)
class RouteDecision:
    stats: dict
    verdict: str
    triggered_rule: str

    @property
    def generator_kind(self) -> str:
        return "gran" if self.verdict == "Large" else "graphrnn"

    def as_dict(self) -> dict:
        return {"stats": self.stats, "verdict": self.verdict, "triggered_rule": self.triggered_rule,
                "generator_kind": self.generator_kind}


def route_generator(stats) -> RouteDecision:
    """Large when average nodes reach 50 or average edges reach 1225, else Small."""
    snap = stats.as_dict() if isinstance(stats, GraphStats) else dict(stats)
    nodes = float(snap.get("avg_nodes", 0.0))
    edges = float(snap.get("avg_edges", 0.0))
    if nodes >= NODE_THRESHOLD:
        return RouteDecision(snap, "Large", "nodes")
    if edges >= EDGE_THRESHOLD:
        return RouteDecision(snap, "Large", "edges")
    return RouteDecision(snap, "Small", "neither")


# -- plans and generation ----------------------------------------------------------------

@dataclass(frozen=True)
class AugmentPlan:
    mode: str
    counts: dict
    generators: dict = field(default_factory=dict)
    k: float | None = None

    @classmethod
    def ratio(cls, sub_real: LabeledDataset | dict, k: float, kind: str | None = None) -> "AugmentPlan":
        """``k`` times R, split over classes in R's proportions (largest remainder)."""
        per = sub_real.class_counts() if isinstance(sub_real, LabeledDataset) else dict(sub_real)
        classes = sorted(per, key=_label_key)
        total = sum(per[c] for c in classes)
        if total == 0:
            raise EmptyDataset("R is empty; a ratio plan has nothing to scale")
        target = int(round(k * total))
        counts = dict(zip(classes, largest_remainder(target, [per[c] / total for c in classes])))
        return cls("ratio", counts, {c: kind for c in classes} if kind else {}, float(k))

    @classmethod
    def fixed_per_class(cls, classes, count: int, kind: str | None = None) -> "AugmentPlan":
        classes = sorted(classes, key=_label_key)
        return cls("fixed_per_class", {c: int(count) for c in classes}, {c: kind for c in classes} if kind else {})

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict:
        return {"mode": self.mode, "k": self.k,
                "counts": [[c, n] for c, n in self.counts.items()],
                "generators": [[c, g] for c, g in self.generators.items()]}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPlan":
        try:
            return cls(d["mode"], {c: int(n) for c, n in d["counts"]},
                       {c: g for c, g in d.get("generators", [])}, d.get("k"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed plan: {exc}") from None


def train_per_class_generators(raw: LabeledDataset, decision: RouteDecision, cfg: GeneratorConfig = GeneratorConfig(),
                               seed: int = 0, kind: str | None = None) -> dict:
    """One generator per class, trained only on that class's graphs."""
    kind = decision.generator_kind if kind in (None, "auto") else kind
    if kind not in GENERATOR_KINDS:
        raise ConfigError(f"unknown generator kind {kind!r}")
    groups = raw.by_class()
    for c, gs in groups.items():
        if len(gs) < 2:
            raise InsufficientClassSize(f"class {c!r} has {len(gs)} graph(s); a generator needs at least 2")
    out = {}
    for c in raw.class_set:
        out[c] = train_generator(kind, groups[c], c, cfg, sub_seed(seed, f"generator/{kind}/{c}"))
        log.info("trained %s generator for class %r on %d graphs", kind, c, len(groups[c]))
    return out


def generate_augmentation(generators: dict, plan: AugmentPlan, rng: np.random.Generator,
                          name: str = "generated") -> LabeledDataset:
    missing = [c for c in plan.counts if c not in generators]
    if missing:
        raise PlanMismatch(f"no generator for planned classes {missing}")
    graphs = []
    for c, count in plan.counts.items():
        gen = generators[c]
        batch = gen.sample_many(rng, count)
        if any(g.class_label != c for g in batch):
            raise PlanMismatch(f"generator for {c!r} emitted a foreign label")
        graphs.extend(batch)
    classes = sorted(set(plan.counts) | {g.class_label for g in graphs}, key=_label_key)
    return LabeledDataset(name, graphs, tuple(classes), "generated", {"plan": plan.as_dict()})


# -- generation quality --------------------------------------------------------------------

def _degree_histograms(graphs, width: int) -> np.ndarray:
    out = np.zeros((len(graphs), width))
    for i, g in enumerate(graphs):
        if g.node_count:
            out[i] = np.bincount(g.degrees(), minlength=width)[:width] / g.node_count
    return out


def degree_mmd(set_a, set_b, sigma: float = 1.0) -> float:
    """Squared MMD (biased estimate) between per-graph normalized degree
    histograms under a Gaussian kernel of bandwidth ``sigma``."""
    a = list(set_a.graphs if isinstance(set_a, LabeledDataset) else set_a)
    b = list(set_b.graphs if isinstance(set_b, LabeledDataset) else set_b)
    if not a or not b:
        raise EmptyDataset("degree_mmd needs two non-empty sets")
    width = 1 + max(int(g.degrees().max()) if g.node_count else 0 for g in a + b)
    ha, hb = _degree_histograms(a, width), _degree_histograms(b, width)

    def kernel(x, y):
        d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-d2 / (2.0 * sigma * sigma)).mean()

    return max(0.0, float(kernel(ha, ha) + kernel(hb, hb) - 2.0 * kernel(ha, hb)))


# -- experiment configuration ----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    dataset: str
    dataset_name: str | None = None
    split: tuple = (0.8, 0.1, 0.1)
    validation_fraction: float = 0.1
    conditions: tuple = (RAW, REAL, GEN[1], GEN[2], GEN[3])
    classifiers: tuple = clf.KINDS
    generator_kind: str = "auto"
    generator: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    hidden_dim: int = 64
    num_layers: int = 3
    features: str = "auto"
    degree_cap: int = 10
    fixed_per_class: int = 1024
    seed: int = 0
    memory_budget_mb: float | None = None
    workers: int = 1
    base_dir: str = "."

    def __post_init__(self):
        # YAML reads forms like 1e-6 as strings, so numbers are coerced here
        try:
            for name in ("hidden_dim", "num_layers", "degree_cap", "fixed_per_class", "seed", "workers"):
                setattr(self, name, int(getattr(self, name)))
            self.validation_fraction = float(self.validation_fraction)
            self.split = tuple(float(x) for x in self.split)
            if self.memory_budget_mb is not None:
                self.memory_budget_mb = float(self.memory_budget_mb)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad numeric setting: {exc}") from None
        self.conditions = tuple(dict.fromkeys(canonical_condition(c) for c in self.conditions))
        self.classifiers = tuple(dict.fromkeys(canonical_classifier(c) for c in self.classifiers))
        if not self.conditions or not self.classifiers:
            raise ConfigError("at least one condition and one classifier are required")
        if self.generator_kind not in ("auto",) + GENERATOR_KINDS:
            raise ConfigError(f"unknown generator kind {self.generator_kind!r}")
        if self.features not in ("auto", "degree_onehot", "node_label_onehot", "constant"):
            raise ConfigError(f"unknown feature scheme {self.features!r}")
        try:
            self.split_spec = SplitSpec(tuple(self.split), self.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.generator_cfg = GeneratorConfig.from_dict(self.generator)
        self.classifier_cfg = clf.ClassifierConfig.from_dict(self.classifier)
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | os.PathLike = ".") -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config needs a 'dataset' entry")
        try:
            return cls(**d, base_dir=str(base_dir))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            doc = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(doc, path.parent)

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in
                ((f, getattr(self, f)) for f in self.__dataclass_fields__) if k != "base_dir"}


def resolve_dataset_path(spec: str, base_dir: str | os.PathLike = ".") -> Path:
    p = Path(spec).expanduser()
    if p.is_absolute():
        return p
    candidates = [Path(base_dir) / p]
    if os.environ.get(DATA_DIR_ENV):
        candidates.append(Path(os.environ[DATA_DIR_ENV]) / p)
    candidates.append(p)
    if p.suffix == "":
        candidates += [c.with_name(c.name + ".json") for c in list(candidates)]
    for c in candidates:
        if c.exists():
            return c
    return candidates[0]


def load_any(spec: str, name: str | None = None, base_dir: str | os.PathLike = ".") -> LabeledDataset:
    """A JSON dataset file, or a TU directory (name defaults to the directory name)."""
    path = resolve_dataset_path(spec, base_dir)
    if path.is_dir():
        return load_tu(path, name or path.name)
    return load_dataset(path)


# -- report --------------------------------------------------------------------------------

@dataclass
class Cell:
    status: str = "ok"            # ok | OOM | skipped
    accuracy: float | None = None
    epoch: int | None = None
    reason: str = ""
    train_size: int | None = None

    def as_dict(self) -> dict:
        return {"status": self.status, "accuracy": self.accuracy, "epoch": self.epoch, "reason": self.reason,
                "train_size": self.train_size}


@dataclass
class ExperimentReport:
    dataset: str
    conditions: list
    classifiers: list
    cells: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def cell(self, condition: str, classifier: str) -> Cell:
        return self.cells[(condition, classifier)]

    def best_accuracy(self, condition: str) -> float | None:
        accs = [self.cells[(condition, k)].accuracy for k in self.classifiers
                if self.cells[(condition, k)].status == "ok"]
        return max(accs) if accs else None

    def to_json(self) -> str:
        doc = {
            "dataset": self.dataset,
            "conditions": self.conditions,
            "classifiers": self.classifiers,
            "cells": [[c, k, self.cells[(c, k)].as_dict()] for c in self.conditions for k in self.classifiers],
            "meta": self.meta,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        doc = json.loads(text)
        cells = {(c, k): Cell(**v) for c, k, v in doc["cells"]}
        return cls(doc["dataset"], doc["conditions"], doc["classifiers"], cells, doc.get("meta", {}))


def _ordered_conditions(conditions) -> list:
    return [c for c in CONDITIONS if c in set(conditions)]


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["condition"]
    for k in report.classifiers:
        header += [f"{k} Acc.", f"{k} Epoch"]
    w.writerow(header)
    for c in _ordered_conditions(report.conditions):
        row = [c]
        for k in report.classifiers:
            cell = report.cells[(c, k)]
            if cell.status == "ok":
                row += [f"{cell.accuracy:.3f}", str(cell.epoch)]
            elif cell.status == "OOM":
                row += ["OOM", "OOM"]
            else:
                row += ["-", "-"]
        w.writerow(row)
    return buf.getvalue()


def _write(path: Path, data: str | bytes):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None


def plot_summary(reports, path):
    """Grouped bars of the best accuracy per condition, one group per dataset (SVG)."""
    try:
        import matplotlib
    except ImportError:
        raise ConfigError("plotting needs matplotlib; install the 'plot' extra") from None

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    reports = list(reports)
    conds = _ordered_conditions({c for r in reports for c in r.conditions})
    with matplotlib.rc_context({"svg.hashsalt": "graphaugment", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(reports), 3.2))
        width = 0.8 / max(len(conds), 1)
        for j, c in enumerate(conds):
            vals = [r.best_accuracy(c) if c in r.conditions else None for r in reports]
            xs = [i + (j - (len(conds) - 1) / 2) * width for i in range(len(reports))]
            ax.bar(xs, [v if v is not None else 0.0 for v in vals], width, label=c)
        ax.set_xticks(range(len(reports)))
        ax.set_xticklabels([r.dataset for r in reports])
        ax.set_ylabel("best accuracy")
        ax.set_ylim(0, 1)
        ax.legend(fontsize="small", frameon=False)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    _write(Path(path), buf.getvalue())


def emit_report(report: ExperimentReport, path, format: str = "csv"):
    if not report.cells:
        raise EmptyDataset("report has no cells")
    path = Path(path)
    if format == "csv":
        _write(path, report_csv(report))
    elif format == "json":
        _write(path, report.to_json())
    elif format == "svg":
        plot_summary([report], path)
    else:
        raise ConfigError(f"unknown report format {format!r}")
    return path


# -- experiment -----------------------------------------------------------------------------

def _digest(ds: LabeledDataset) -> str:
    return hashlib.sha256(dataset_to_json(ds.with_role("test", "test")).encode()).hexdigest()


def _mb(nbytes: int) -> float:
    return nbytes / 2 ** 20


def run_experiment(cfg: ExperimentConfig, dataset: LabeledDataset | None = None) -> ExperimentReport:
    ds = dataset if dataset is not None else load_any(cfg.dataset, cfg.dataset_name, cfg.base_dir)
    if len(ds) == 0:
        raise EmptyDataset(f"dataset {ds.name!r} is empty")
    master = cfg.seed
    raw, sub_real, test = stratified_split(ds, SplitSpec(cfg.split_spec.fractions, sub_seed(master, "split")))
    raw_train, val = carve_validation(raw, cfg.validation_fraction, sub_seed(master, "validation"))
    decision = route_generator(graph_stats(raw.graphs))
    budget = cfg.memory_budget_mb

    needs: dict[str, set] = {}
    for c in cfg.conditions:
        if c in GEN.values():
            kind = decision.generator_kind if cfg.generator_kind == "auto" else cfg.generator_kind
            needs.setdefault(kind, set()).add(c)
        elif c == GEN_GRAPHRNN:
            needs.setdefault("graphrnn", set()).add(c)
        elif c == GEN_GRAN:
            needs.setdefault("gran", set()).add(c)

    gen_sets: dict[str, LabeledDataset] = {}
    failed: dict[str, str] = {}
    gen_meta = {}
    for kind in sorted(needs):
        est = max(_mb(generator_memory(kind, gs, cfg.generator_cfg)) for gs in raw_train.by_class().values())
        gen_meta[kind] = {"memory_mb": round(est, 3)}
        if budget is not None and est > budget:
            for c in needs[kind]:
                failed[c] = f"{kind} generator needs ~{est:.1f} MB > budget {budget} MB"
            continue
        gens = train_per_class_generators(raw_train, decision, cfg.generator_cfg, master, kind)
        for c in sorted(needs[kind], key=CONDITIONS.index):
            if c in GEN.values():
                k = next(k for k, name in GEN.items() if name == c)
                plan = AugmentPlan.ratio(sub_real, k, kind)
            else:
                plan = AugmentPlan.fixed_per_class(raw.class_set, cfg.fixed_per_class, kind)
            rng = np.random.default_rng(sub_seed(master, f"sample/{c}"))
            gen_sets[c] = generate_augmentation(gens, plan, rng, name=f"{ds.name}-{c}")

    generated_present = bool(needs)
    if cfg.features == "auto":
        scheme = (clf.FeatureScheme("degree_onehot", cfg.degree_cap) if generated_present
                  else clf.default_scheme(raw, cfg.degree_cap))
    elif cfg.features == "node_label_onehot":
        scheme = clf.default_scheme(raw, cfg.degree_cap)
        if scheme.name != "node_label_onehot":
            raise DataError("node_label_onehot requested but the dataset has no node labels")
    else:
        scheme = clf.FeatureScheme(cfg.features, cfg.degree_cap)

    train_sets = {}
    for c in cfg.conditions:
        if c == RAW:
            train_sets[c] = raw_train
        elif c == REAL:
            train_sets[c] = combine(f"{ds.name}-{c}", raw_train, sub_real)
        elif c in gen_sets:
            train_sets[c] = combine(f"{ds.name}-{c}", raw_train, gen_sets[c])

    def run_cell(c: str, kind: str) -> Cell:
        if c in failed:
            return Cell("OOM", reason=failed[c])
        train = train_sets[c]
        est = _mb(clf.memory_estimate(kind, train.graphs, scheme.dim, cfg.hidden_dim, cfg.num_layers,
                                      cfg.classifier_cfg.batch_size))
        if budget is not None and est > budget:
            return Cell("OOM", reason=f"{kind} needs ~{est:.1f} MB > budget {budget} MB", train_size=len(train))
        seed = sub_seed(master, f"classifier/{c}/{kind}")
        model = clf.ClassifierModel(kind, ds.class_set, scheme, cfg.hidden_dim, cfg.num_layers, seed)
        ccfg = clf.ClassifierConfig(**{**cfg.classifier_cfg.__dict__, "seed": seed})
        model, rec = clf.train_classifier(model, train, val, ccfg)
        acc = clf.evaluate(model, test)
        return Cell("ok", acc, rec.best_epoch, train_size=len(train))

    grid = [(c, k) for c in _ordered_conditions(cfg.conditions) for k in cfg.classifiers]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda ck: run_cell(*ck), grid))
    else:
        results = [run_cell(*ck) for ck in grid]
    cells = dict(zip(grid, results))
    if all(cell.status == "OOM" for cell in cells.values()):
        raise ResourceError("every cell exceeds the memory budget; nothing can run")

    meta = {
        "seed": master,
        "route": decision.as_dict(),
        "sizes": {"raw": len(raw), "raw_train": len(raw_train), "validation": len(val), "sub_real": len(sub_real),
                  "test": len(test)},
        "train_sizes": {c: len(s) for c, s in train_sets.items()},
        "generated": {c: {str(k): v for k, v in s.class_counts().items()} for c, s in gen_sets.items()},
        "generators": gen_meta,
        "feature_scheme": scheme.as_dict(),
        "test_digest": _digest(test),
        "memory_budget_mb": budget,
    }
    return ExperimentReport(ds.name, _ordered_conditions(cfg.conditions), list(cfg.classifiers), cells, meta)


def write_run(report: ExperimentReport, run_dir, cfg: ExperimentConfig | None = None, plot: bool = False) -> Path:
    run_dir = Path(run_dir)
    _write(run_dir / "report.json", report.to_json())
    emit_report(report, run_dir / "report.csv")
    if cfg is not None:
        _write(run_dir / "config.json", json.dumps(cfg.as_dict(), indent=1, sort_keys=True, default=str) + "\n")
    if plot:
        emit_report(report, run_dir / "summary.svg", "svg")
    return run_dir


def read_run(run_dir) -> ExperimentReport:
    path = Path(run_dir) / "report.json"
    if not path.is_file():
        raise DataError(f"{path} not found")
    return ExperimentReport.from_json(path.read_text())
