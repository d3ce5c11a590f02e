"""TU-format ingestion, stratified splitting and dataset persistence."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CorruptDataset,
    CorruptFile,
    EmptyDataset,
    InsufficientClassSize,
    MissingDatasetFile,
    ParseError,
    UnsupportedVersion,
)
from .graph import Graph, _label_key, graph_stats

log = logging.getLogger(__name__)

ROLES = ("raw", "sub_real", "test", "generated", "combined", "full")
DATASET_FORMAT = "graphaugment-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class LabeledDataset:
    name: str
    graphs: tuple[Graph, ...]
    class_set: tuple = ()
    role: str = "full"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        graphs = tuple(self.graphs)
        object.__setattr__(self, "graphs", graphs)
        if self.role not in ROLES:
            raise ValueError(f"unknown dataset role {self.role!r}")
        if not self.class_set:
            labels = {g.class_label for g in graphs}
            object.__setattr__(self, "class_set", tuple(sorted(labels, key=_label_key)))
        else:
            object.__setattr__(self, "class_set", tuple(self.class_set))
        allowed = set(self.class_set)
        for i, g in enumerate(graphs):
            if g.class_label is None or g.class_label not in allowed:
                raise CorruptDataset(f"graph {i} has class {g.class_label!r} outside {self.class_set}")

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def by_class(self) -> dict:
        out = {c: [] for c in self.class_set}
        for g in self.graphs:
            out[g.class_label].append(g)
        return out

    def class_counts(self) -> dict:
        return {c: len(gs) for c, gs in self.by_class().items()}

    def class_index(self, label) -> int:
        return self.class_set.index(label)

    def stats(self):
        return graph_stats(self.graphs)

    def with_role(self, role: str, name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(name or self.name, self.graphs, self.class_set, role, dict(self.meta))

    def has_node_labels(self) -> bool:
        return bool(self.graphs) and all(g.node_labels is not None for g in self.graphs)


def combine(name: str, *parts: LabeledDataset, role: str = "combined") -> LabeledDataset:
    classes = []
    for p in parts:
        for c in p.class_set:
            if c not in classes:
                classes.append(c)
    graphs = [g for p in parts for g in p.graphs]
    return LabeledDataset(name, graphs, tuple(sorted(classes, key=_label_key)), role)


# -- TU format ------------------------------------------------------------------------

def _read_ints(path: Path, per_line: int | None):
    rows = []
    with path.open() as fh:
        for line_no, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            tokens = [t.strip() for t in text.split(",")]
            if per_line is not None and len(tokens) != per_line:
                raise ParseError(path, line_no, f"expected {per_line} values, got {len(tokens)}")
            try:
                rows.append([int(t) for t in tokens])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer token in {text!r}") from None
    return rows


def load_tu(directory, name: str) -> LabeledDataset:
    """Load ``{name}_A.txt``, ``_graph_indicator``, ``_graph_labels`` and optional ``_node_labels``.

    Reversed or repeated edge rows collapse into one undirected edge.
    Self-loop rows are dropped; their number is logged and stored in
    ``meta["self_loops_dropped"]``.
    """
    directory = Path(directory)
    files = {k: directory / f"{name}_{k}.txt" for k in ("A", "graph_indicator", "graph_labels", "node_labels")}
    for key in ("A", "graph_indicator", "graph_labels"):
        if not files[key].is_file():
            raise MissingDatasetFile(f"missing {files[key]}")

    indicator = [r[0] for r in _read_ints(files["graph_indicator"], 1)]
    graph_labels = [r[0] for r in _read_ints(files["graph_labels"], 1)]
    node_labels = None
    if files["node_labels"].is_file():
        node_labels = [r[0] for r in _read_ints(files["node_labels"], None)]
        if len(node_labels) != len(indicator):
            raise CorruptDataset(f"{len(node_labels)} node labels for {len(indicator)} nodes")

    num_graphs = len(graph_labels)
    ind = np.asarray(indicator, dtype=np.int64)
    if ind.size and (ind.min() < 1 or ind.max() > num_graphs):
        raise CorruptDataset(f"graph indicator references graphs outside 1..{num_graphs}")
    if ind.size > 1 and np.any(np.diff(ind) < 0):
        raise CorruptDataset("graph indicator is not grouped by graph id")
    counts = np.bincount(ind - 1, minlength=num_graphs) if ind.size else np.zeros(num_graphs, dtype=np.int64)
    first = np.concatenate([[0], np.cumsum(counts)[:-1]])

    edges: list[set] = [set() for _ in range(num_graphs)]
    self_loops = 0
    for line_no, (a, b) in enumerate(_read_ints(files["A"], 2), 1):
        if not (1 <= a <= len(indicator) and 1 <= b <= len(indicator)):
            raise CorruptDataset(f"edge row {line_no} references node absent from the indicator")
        ga, gb = indicator[a - 1], indicator[b - 1]
        if ga != gb:
            raise CorruptDataset(f"edge row {line_no} joins graphs {ga} and {gb}")
        if a == b:
            self_loops += 1
            continue
        base = first[ga - 1]
        u, v = a - 1 - base, b - 1 - base
        edges[ga - 1].add((min(u, v), max(u, v)))
    if self_loops:
        log.warning("%s: dropped %d self-loop edge rows", name, self_loops)

    graphs = []
    for k in range(num_graphs):
        labels = None
        if node_labels is not None:
            labels = node_labels[first[k]:first[k] + counts[k]]
        graphs.append(Graph(int(counts[k]), sorted(edges[k]), labels, graph_labels[k]))
    return LabeledDataset(name, graphs, role="full", meta={"self_loops_dropped": self_loops})


def write_tu(ds: LabeledDataset, directory, name: str | None = None):
    """Write a dataset in TU format (1-based, one undirected edge per row)."""
    name = name or ds.name
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    a_rows, ind_rows, lab_rows, node_rows = [], [], [], []
    offset = 0
    for k, g in enumerate(ds.graphs, 1):
        ind_rows.extend([str(k)] * g.node_count)
        lab_rows.append(str(g.class_label))
        a_rows.extend(f"{u + offset + 1}, {v + offset + 1}" for u, v in g.edges)
        if g.node_labels is not None:
            node_rows.extend(str(x) for x in g.node_labels)
        offset += g.node_count
    (directory / f"{name}_A.txt").write_text("".join(r + "\n" for r in a_rows))
    (directory / f"{name}_graph_indicator.txt").write_text("".join(r + "\n" for r in ind_rows))
    (directory / f"{name}_graph_labels.txt").write_text("".join(r + "\n" for r in lab_rows))
    if ds.has_node_labels():
        (directory / f"{name}_node_labels.txt").write_text("".join(r + "\n" for r in node_rows))


# -- splitting ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, ...] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fr)
        if any(not (0.0 < f < 1.0) for f in fr):
            raise ValueError(f"each fraction must lie in (0, 1): {fr}")
        if not math.isclose(sum(fr), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"fractions must sum to 1: {fr}")


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    """Integer apportionment of ``total``; ties go to the earlier part."""
    quotas = [total * f for f in fractions]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in order[: total - sum(counts)]:
        counts[k] += 1
    return counts


def _allocate(class_sizes: list[int], fractions: Sequence[float]) -> list[list[int]]:
    """Per-class part counts whose column sums match the global apportionment."""
    targets = largest_remainder(sum(class_sizes), fractions)
    alloc = [[math.floor(n * f) for f in fractions] for n in class_sizes]
    left = [n - sum(row) for n, row in zip(class_sizes, alloc)]
    need = [t - sum(row[k] for row in alloc) for k, t in enumerate(targets)]
    cells = sorted(
        ((n * f - math.floor(n * f), c, k) for c, n in enumerate(class_sizes) for k, f in enumerate(fractions)),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    for resid, c, k in cells:
        if resid > 0 and left[c] > 0 and need[k] > 0:
            alloc[c][k] += 1
            left[c] -= 1
            need[k] -= 1
    # residual corner cases: any open part can absorb a leftover graph
    for c in range(len(class_sizes)):
        for k in range(len(fractions)):
            while left[c] > 0 and need[k] > 0:
                alloc[c][k] += 1
                left[c] -= 1
                need[k] -= 1
    return alloc


def stratified_split(ds: LabeledDataset, spec: SplitSpec = SplitSpec()):
    """Split into (raw, sub_real, test) keeping class proportions.

    Each class is shuffled with the seeded generator and sliced by its
    largest-remainder counts, so ``sum_c count(c, part)`` equals the global
    apportionment of ``len(ds)``.
    """
    if len(spec.fractions) != 3:
        raise ValueError("a split needs three fractions (raw, sub_real, test)")
    groups = ds.by_class()
    for c, gs in groups.items():
        if len(gs) < 3:
            raise InsufficientClassSize(f"class {c!r} has {len(gs)} graphs; need at least 3")
    rng = np.random.default_rng(spec.seed)
    sizes = [len(groups[c]) for c in ds.class_set]
    alloc = _allocate(sizes, spec.fractions)
    parts = [[], [], []]
    for c, row in zip(ds.class_set, alloc):
        members = groups[c]
        perm = rng.permutation(len(members))
        start = 0
        for k, cnt in enumerate(row):
            parts[k].extend(members[i] for i in perm[start:start + cnt])
            start += cnt
    roles = ("raw", "sub_real", "test")
    return tuple(LabeledDataset(f"{ds.name}-{r}", p, ds.class_set, r) for r, p in zip(roles, parts))


def carve_validation(ds: LabeledDataset, fraction: float, seed: int):
    """Stratified (train, val) split; every class keeps at least one training graph."""
    rng = np.random.default_rng(seed)
    train, val = [], []
    for c, members in ds.by_class().items():
        perm = rng.permutation(len(members))
        k = min(max(1, round(fraction * len(members))), len(members) - 1) if len(members) > 1 else 0
        val.extend(members[i] for i in perm[:k])
        train.extend(members[i] for i in perm[k:])
    return (LabeledDataset(f"{ds.name}-train", train, ds.class_set, ds.role),
            LabeledDataset(f"{ds.name}-val", val, ds.class_set, ds.role))


# -- persistence -------------------------------------------------------------------------

def dataset_to_json(ds: LabeledDataset) -> str:
    doc = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "name": ds.name,
        "role": ds.role,
        "class_set": list(ds.class_set),
        "graphs": [
            {
                "n": g.node_count,
                "edges": [list(e) for e in g.edges],
                "node_labels": None if g.node_labels is None else list(g.node_labels),
                "class_label": g.class_label,
            }
            for g in ds.graphs
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def save_dataset(ds: LabeledDataset, path):
    Path(path).write_text(dataset_to_json(ds))


def load_dataset(path) -> LabeledDataset:
    path = Path(path)
    if not path.is_file():
        raise MissingDatasetFile(f"missing {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != DATASET_FORMAT:
        raise CorruptFile(f"{path}: not a dataset file")
    if doc.get("version") != DATASET_VERSION:
        raise UnsupportedVersion(f"{path}: dataset version {doc.get('version')!r}")
    try:
        graphs = [
            Graph(e["n"], [tuple(x) for x in e["edges"]], e["node_labels"], e["class_label"])
            for e in doc["graphs"]
        ]
        return LabeledDataset(doc["name"], graphs, tuple(doc["class_set"]), doc["role"])
    except (KeyError, TypeError) as exc:
        raise CorruptFile(f"{path}: missing field {exc}") from None


def require_nonempty(ds: LabeledDataset):
    if len(ds) == 0:
        raise EmptyDataset(f"dataset {ds.name!r} is empty")
