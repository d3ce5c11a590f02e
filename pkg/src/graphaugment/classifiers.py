"""Graph classifiers with a shared training and evaluation harness.

Five kinds are available: ``GraphSAGE``, ``GIN0``, ``GINWithJK``,
``GCNWithJK`` and ``EdgePool``. Every kind reads out with a global mean over
node states followed by an affine head. Mini-batches run as one disjoint
union, which is exact because no operation mixes states across components.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dataset import LabeledDataset
from .errors import ClassMismatch, ConfigError, ContractViolation, EmptyDataset, MissingNodeLabels, ShapeError
from .graph import Graph
from .kernels import greedy_matching
from .nn import tensor as T
from .nn.layers import affine, init_affine, init_mlp, mlp
from .nn.losses import cross_entropy
from .nn.optim import Adam
from .nn.params import ParameterSet, load_checkpoint, save_checkpoint
from .nn.tensor import Tape, no_record

log = logging.getLogger(__name__)

KINDS = ("GraphSAGE", "GIN0", "GINWithJK", "GCNWithJK", "EdgePool")
_JK = ("GINWithJK", "GCNWithJK")
# scores closer than this are treated as tied and fall back to edge order
SCORE_DECIMALS = 10


# -- features ------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureScheme:
    """How node input features are built.

    ``degree_onehot`` buckets degrees ``0..cap`` (larger degrees land in the
    top bucket); ``node_label_onehot`` one-hot encodes ``vocab`` plus a final
    bucket for unseen labels; ``constant`` is a single column of ones.
    """

    name: str = "degree_onehot"
    cap: int = 10
    vocab: tuple = ()

    def __post_init__(self):
        if self.name not in ("degree_onehot", "node_label_onehot", "constant"):
            raise ConfigError(f"unknown feature scheme {self.name!r}")
        if self.cap < 0:
            raise ConfigError("degree cap must be non-negative")

    @property
    def dim(self) -> int:
        if self.name == "degree_onehot":
            return self.cap + 1
        if self.name == "node_label_onehot":
            return len(self.vocab) + 1
        return 1

    def as_dict(self) -> dict:
        return {"name": self.name, "cap": self.cap, "vocab": list(self.vocab)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScheme":
        return cls(d["name"], int(d.get("cap", 10)), tuple(d.get("vocab", ())))


def default_scheme(ds: LabeledDataset, cap: int = 10) -> FeatureScheme:
    """Node-label one-hot when every graph carries node labels, else degree one-hot."""
    if len(ds) and ds.has_node_labels():
        vocab = sorted({lab for g in ds.graphs for lab in g.node_labels})
        return FeatureScheme("node_label_onehot", cap, tuple(vocab))
    return FeatureScheme("degree_onehot", cap)


def node_features(g: Graph, scheme: FeatureScheme | str = "degree_onehot") -> np.ndarray:
    if isinstance(scheme, str):
        scheme = FeatureScheme(scheme)
    n = g.node_count
    x = np.zeros((n, scheme.dim))
    if scheme.name == "constant":
        x[:, 0] = 1.0
    elif scheme.name == "degree_onehot":
        x[np.arange(n), np.minimum(g.degrees(), scheme.cap)] = 1.0
    else:
        if g.node_labels is None:
            raise MissingNodeLabels("node_label_onehot needs node labels")
        lookup = {lab: i for i, lab in enumerate(scheme.vocab)}
        cols = [lookup.get(lab, len(scheme.vocab)) for lab in g.node_labels]
        x[np.arange(n), cols] = 1.0
    return x


# -- model ---------------------------------------------------------------------------

class ClassifierModel:
    def __init__(self, kind: str, classes, scheme: FeatureScheme = FeatureScheme(), hidden_dim: int = 64,
                 num_layers: int = 3, seed: int = 0):
        if kind not in KINDS:
            raise ConfigError(f"unknown classifier kind {kind!r}; expected one of {KINDS}")
        classes = tuple(sorted(classes, key=lambda c: (type(c).__name__, c)))
        if len(classes) < 2:
            raise ContractViolation("a classifier needs at least two classes")
        if num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        self.kind = kind
        self.classes = classes
        self.scheme = scheme
        self.hidden_dim = int(hidden_dim)
        self.num_layers = int(num_layers)
        self.seed = int(seed)
        # GIN0 pins epsilon to 0; kept as an attribute so the self term is explicit
        self.epsilon = 0.0
        d, L = self.hidden_dim, self.num_layers
        ps = ParameterSet(self.seed)
        for layer in range(L):
            din = scheme.dim if layer == 0 else d
            p = f"l{layer}"
            if kind == "GraphSAGE":
                init_affine(ps, p, 2 * din, d)
            elif kind in ("GIN0", "GINWithJK"):
                init_mlp(ps, p, [din, d, d])
                if kind == "GINWithJK":
                    ps.zeros(f"{p}.eps", (1,))
            elif kind == "GCNWithJK":
                init_affine(ps, p, din, d)
            else:
                init_affine(ps, f"{p}.self", din, d)
                ps.glorot(f"{p}.nbr", (din, d))
                if layer < L - 1:
                    init_affine(ps, f"{p}.pool", 2 * d, 1)
        init_affine(ps, "head", d * L if kind in _JK else d, len(classes))
        self.params = ps

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def class_index(self, label) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise ClassMismatch(f"class {label!r} is not one of {self.classes}") from None

    def config(self) -> dict:
        return {"kind": self.kind, "classes": list(self.classes), "feature_scheme": self.scheme.as_dict(),
                "hidden_dim": self.hidden_dim, "num_layers": self.num_layers}

    def save(self, path, extra: dict | None = None):
        save_checkpoint(path, "classifier", self.seed, self.config() | (extra or {}), {"layers": self.params})

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        doc = load_checkpoint(path)
        if doc["kind"] != "classifier":
            raise ConfigError(f"checkpoint holds a {doc['kind']!r} model, not a classifier")
        m = doc["meta"]
        model = cls(m["kind"], m["classes"], FeatureScheme.from_dict(m["feature_scheme"]), m["hidden_dim"],
                    m["num_layers"], doc["seed"])
        model.params.load_state(doc["groups"]["layers"].state())
        return model


@dataclass
class _Batch:
    x: np.ndarray
    edges: np.ndarray      # (E, 2) undirected, offsets applied
    graph_id: np.ndarray
    num_graphs: int


def _make_batch(graphs, feats) -> _Batch:
    xs, es, gid = [], [], []
    base = 0
    for k, (g, x) in enumerate(zip(graphs, feats)):
        xs.append(x)
        if g.num_edges:
            es.append(g.edge_array() + base)
        gid.append(np.full(g.node_count, k))
        base += g.node_count
    edges = np.concatenate(es) if es else np.zeros((0, 2), dtype=np.int64)
    return _Batch(np.concatenate(xs), edges.astype(np.int64), np.concatenate(gid).astype(np.int64), len(graphs))


def _directed(edges):
    return np.concatenate([edges[:, 0], edges[:, 1]]), np.concatenate([edges[:, 1], edges[:, 0]])


def _neighbor_sum(h, edges, n):
    if len(edges) == 0:
        return T.Tensor(np.zeros((n, h.shape[1])))
    src, dst = _directed(edges)
    return T.segment_sum(h[src], dst, n)


CANON_LEAF_LIMIT = 512


def _refine(color: np.ndarray, nbrs) -> np.ndarray:
    """Stable color refinement. Class ids come from sorting signatures, so
    they do not depend on node numbering, and earlier classes keep their
    relative order."""
    classes = len(set(color.tolist()))
    while True:
        sigs = [(int(color[u]), tuple(sorted(int(color[v]) for v in nb))) for u, nb in enumerate(nbrs)]
        lookup = {sig: i for i, sig in enumerate(sorted(set(sigs)))}
        color = np.array([lookup[sig] for sig in sigs], dtype=np.int64)
        if len(lookup) == classes:
            return color
        classes = len(lookup)


@lru_cache(maxsize=4096)
def _canonical_cached(color: tuple, edges: tuple):
    nbrs = [[] for _ in color]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    out = _canonical_ranks(np.array(color, dtype=np.int64), nbrs, edges)
    return None if out is None else tuple(out.tolist())


def _canonical_ranks(color: np.ndarray, nbrs, edges) -> np.ndarray | None:
    """Canonical labeling by individualization and refinement.

    Branches are pruned by the orbits of automorphisms found so far that fix
    the current path. Returns each node's canonical position, or None once the
    search exceeds ``CANON_LEAF_LIMIT`` leaves.
    """
    n = len(nbrs)
    best = {"code": None, "col": None}
    autos: list[np.ndarray] = []
    leaves = [0]

    def search(col, path):
        col = _refine(col, nbrs)
        counts = np.bincount(col)
        if counts.max() == 1:
            leaves[0] += 1
            code = sorted((min(col[u], col[v]), max(col[u], col[v])) for u, v in edges)
            if best["code"] is None or code < best["code"]:
                best["code"], best["col"] = code, col
            elif code == best["code"]:
                # both leaves give the same labeled graph: record the automorphism
                inv = np.empty(n, dtype=np.int64)
                inv[best["col"]] = np.arange(n)
                autos.append(inv[col])
            return leaves[0] <= CANON_LEAF_LIMIT
        cell = np.flatnonzero(col == np.flatnonzero(counts > 1)[0])
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x
        used = 0
        done = []
        for v in cell:
            for a in autos[used:]:
                if all(a[u] == u for u in path):
                    for x in range(n):
                        parent[find(x)] = find(int(a[x]))
            used = len(autos)
            if any(find(int(v)) == find(w) for w in done):
                continue
            nxt = 2 * col + 1
            nxt[v] -= 1
            if not search(nxt, path + [int(v)]):
                return False
            done.append(int(v))
        return True

    return best["col"] if search(color, []) else None


def _tie_ranks(edges: np.ndarray, n: int, states: np.ndarray, key: np.ndarray) -> np.ndarray:
    """Relabeling-invariant node ranks used to order edges with equal scores."""
    _, color = np.unique(np.round(states, SCORE_DECIMALS), axis=0, return_inverse=True)
    nbrs = [[] for _ in range(n)]
    for u, v in edges.tolist():
        nbrs[u].append(v)
        nbrs[v].append(u)
    rank = _refine(color.reshape(-1), nbrs)
    lo = np.minimum(rank[edges[:, 0]], rank[edges[:, 1]])
    hi = np.maximum(rank[edges[:, 0]], rank[edges[:, 1]])
    triples = np.stack([key, lo, hi], axis=1)
    _, inv, counts = np.unique(triples, axis=0, return_inverse=True, return_counts=True)
    ambiguous = set(edges[counts[inv.reshape(-1)] > 1, 0].tolist())
    seen = np.zeros(n, dtype=bool)
    for s in sorted(ambiguous):
        if seen[s]:
            continue
        comp, queue = [s], [s]
        seen[s] = True
        while queue:
            u = queue.pop()
            for v in nbrs[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    queue.append(v)
        comp = np.array(sorted(comp))
        local = {u: i for i, u in enumerate(comp.tolist())}
        sub_edges = tuple((local[u], local[v]) for u, v in edges.tolist() if u in local)
        canon = _canonical_cached(tuple(rank[comp].tolist()), sub_edges)
        if canon is not None:
            rank[comp] = canon
    return rank


def _pool(params: ParameterSet, prefix: str, edges: np.ndarray, n: int, h):
    """Score every edge, contract a greedy matching, return the coarsened graph."""
    if len(edges) == 0:
        return edges, n, h, np.arange(n, dtype=np.int64)
    hu, hv = h[edges[:, 0]], h[edges[:, 1]]
    feat = T.concat([hu + hv, hu * hv], axis=1)
    gate = T.sigmoid(T.reshape(affine(params, feat, prefix), (-1,))) + 0.5
    key = -np.round(gate.data, SCORE_DECIMALS)
    if len(np.unique(key)) < len(key):
        # equal scores fall back to relabeling-invariant endpoint ranks, then index
        rank = _tie_ranks(edges, n, h.data, key)
        cu, cv = rank[edges[:, 0]], rank[edges[:, 1]]
        order = np.lexsort((np.arange(len(edges)), np.maximum(cu, cv), np.minimum(cu, cv), key))
    else:
        order = np.argsort(key, kind="stable")
    cluster, chosen_sorted = greedy_matching(edges[order, 0], edges[order, 1], n)
    chosen = order[chosen_sorted]
    m = int(cluster.max()) + 1
    # merged pairs carry gate * (h_u + h_v); untouched nodes pass through
    merged = T.reshape(gate[chosen], (-1, 1)) * (hu[chosen] + hv[chosen])
    single = np.flatnonzero(np.bincount(cluster, minlength=m)[cluster] == 1)
    rows_merged = cluster[edges[chosen, 0]]
    rows_single = cluster[single]
    stacked = T.concat([merged, h[single]], axis=0)
    new_h = T.segment_sum(stacked, np.concatenate([rows_merged, rows_single]), m)
    ce = cluster[edges]
    ce = np.sort(ce[ce[:, 0] != ce[:, 1]], axis=1)
    new_edges = np.unique(ce, axis=0) if len(ce) else np.zeros((0, 2), dtype=np.int64)
    return new_edges.astype(np.int64), m, new_h, cluster


def edge_pool(model: ClassifierModel, g: Graph, node_states, layer: int = 0):
    """One EdgePool coarsening of ``g``; returns ``(pooled graph, states, mapping)``."""
    h = T.as_tensor(node_states)
    if h.shape[0] != g.node_count:
        raise ShapeError(f"{h.shape[0]} state rows for {g.node_count} nodes")
    edges, m, new_h, cluster = _pool(model.params, f"l{layer}.pool", g.edge_array().astype(np.int64),
                                     g.node_count, h)
    pooled = Graph(m, [tuple(e) for e in edges.tolist()], class_label=g.class_label)
    return pooled, new_h, cluster


def _forward_batch(model: ClassifierModel, b: _Batch):
    ps = model.params
    if b.x.shape[1] != model.scheme.dim:
        raise ShapeError(f"features have {b.x.shape[1]} columns, model expects {model.scheme.dim}")
    h = T.Tensor(b.x)
    edges, n, gid = b.edges, b.x.shape[0], b.graph_id
    layers = []
    if model.kind == "GCNWithJK":
        deg = np.bincount(edges.ravel(), minlength=n).astype(np.float64) + 1.0
        norm = 1.0 / np.sqrt(deg)
        src, dst = _directed(edges) if len(edges) else (np.zeros(0, np.int64), np.zeros(0, np.int64))
        src = np.concatenate([src, np.arange(n)])
        dst = np.concatenate([dst, np.arange(n)])
        w = T.Tensor((norm[src] * norm[dst]).reshape(-1, 1))
    else:
        inv_deg = T.Tensor((1.0 / np.maximum(np.bincount(edges.ravel(), minlength=n), 1)).reshape(-1, 1))
    for layer in range(model.num_layers):
        p = f"l{layer}"
        if model.kind == "GraphSAGE":
            nbr = _neighbor_sum(h, edges, n) * inv_deg
            h = T.relu(affine(ps, T.concat([h, nbr], axis=1), p))
        elif model.kind in ("GIN0", "GINWithJK"):
            scale = (1.0 + ps[f"{p}.eps"]) if model.kind == "GINWithJK" else 1.0 + model.epsilon
            h = T.relu(mlp(ps, h * scale + _neighbor_sum(h, edges, n), p, 2))
        elif model.kind == "GCNWithJK":
            h = T.relu(affine(ps, T.segment_sum(h[src] * w, dst, n), p))
        else:
            h = T.relu(affine(ps, h, f"{p}.self") + T.matmul(_neighbor_sum(h, edges, n), ps[f"{p}.nbr"]))
            if layer < model.num_layers - 1:
                edges, n, h, cluster = _pool(ps, f"{p}.pool", edges, n, h)
                first = np.full(n, -1, dtype=np.int64)
                first[cluster[::-1]] = np.arange(len(cluster))[::-1]
                gid = gid[first]
        layers.append(h)
    h = T.concat(layers, axis=1) if model.kind in _JK else h
    counts = np.maximum(np.bincount(gid, minlength=b.num_graphs), 1).reshape(-1, 1)
    pooled = T.segment_sum(h, gid, b.num_graphs) * T.Tensor(1.0 / counts)
    return affine(ps, pooled, "head")


def forward(model: ClassifierModel, g: Graph, features=None):
    """Class logits (length ``num_classes``) for one graph."""
    x = node_features(g, model.scheme) if features is None else np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.node_count:
        raise ShapeError(f"feature matrix {x.shape} does not match {g.node_count} nodes")
    return T.reshape(_forward_batch(model, _make_batch([g], [x])), (model.num_classes,))


def forward_many(model: ClassifierModel, graphs, feats=None):
    graphs = list(graphs)
    feats = [node_features(g, model.scheme) for g in graphs] if feats is None else feats
    return _forward_batch(model, _make_batch(graphs, feats))


# -- training ------------------------------------------------------------------------

@dataclass
class ClassifierConfig:
    epochs: int = 100
    patience: int | None = 25
    lr: float = 1e-2
    batch_size: int = 32
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict | None) -> "ClassifierConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown classifier settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainRecord:
    losses: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    test_accuracy_at_best: float | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.losses)


def _predict(model: ClassifierModel, graphs, feats, batch_size: int = 256) -> np.ndarray:
    out = []
    with no_record():
        for s in range(0, len(graphs), batch_size):
            out.append(np.argmax(_forward_batch(model, _make_batch(graphs[s:s + batch_size],
                                                                   feats[s:s + batch_size])).data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def predict(model: ClassifierModel, ds) -> np.ndarray:
    """Predicted class labels, in dataset order."""
    graphs = list(ds.graphs if isinstance(ds, LabeledDataset) else ds)
    idx = _predict(model, graphs, [node_features(g, model.scheme) for g in graphs])
    return np.array([model.classes[i] for i in idx], dtype=object)


def _accuracy(model, graphs, feats, targets) -> float:
    return float(np.mean(_predict(model, graphs, feats) == targets))


def evaluate(model: ClassifierModel, test_set) -> float:
    graphs = list(test_set.graphs if isinstance(test_set, LabeledDataset) else test_set)
    if not graphs:
        raise EmptyDataset("cannot evaluate on an empty set")
    targets = np.array([model.class_index(g.class_label) for g in graphs])
    return _accuracy(model, graphs, [node_features(g, model.scheme) for g in graphs], targets)


def train_classifier(model: ClassifierModel, train_set, val_set, cfg: ClassifierConfig = ClassifierConfig()):
    """Cross-entropy training with validation-based model selection.

    Parameters are restored to the epoch with the highest validation
    accuracy (earliest on ties); ``best_epoch`` is 1-based.
    """
    if cfg.epochs < 1:
        raise ContractViolation("at least one epoch is needed for a best epoch to exist")
    train_graphs = list(train_set.graphs if isinstance(train_set, LabeledDataset) else train_set)
    val_graphs = list(val_set.graphs if isinstance(val_set, LabeledDataset) else val_set)
    if not train_graphs or not val_graphs:
        raise EmptyDataset("training and validation sets must be non-empty")
    train_classes = {g.class_label for g in train_graphs}
    missing = {g.class_label for g in val_graphs} - train_classes
    if missing:
        raise ClassMismatch(f"validation classes {sorted(map(str, missing))} absent from training data")
    y = np.array([model.class_index(g.class_label) for g in train_graphs])
    y_val = np.array([model.class_index(g.class_label) for g in val_graphs])
    x = [node_features(g, model.scheme) for g in train_graphs]
    x_val = [node_features(g, model.scheme) for g in val_graphs]
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    rec = TrainRecord()
    best_acc, best_state, stale = -1.0, model.params.state(), 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_graphs))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            model.params.zero_grad()
            with Tape() as tape:
                logits = _forward_batch(model, _make_batch([train_graphs[i] for i in idx], [x[i] for i in idx]))
                loss = cross_entropy(logits, y[idx])
            tape.backward(loss)
            opt.step()
            total += loss.item() * len(idx)
        rec.losses.append(total / len(order))
        acc = _accuracy(model, val_graphs, x_val, y_val)
        rec.val_accuracy.append(acc)
        if acc > best_acc:
            best_acc, best_state, rec.best_epoch, stale = acc, model.params.state(), epoch, 0
        else:
            stale += 1
            if cfg.patience is not None and stale >= cfg.patience:
                break
    model.params.load_state(best_state)
    model.params.check_finite()
    log.debug("%s: best epoch %d, val acc %.3f", model.kind, rec.best_epoch, best_acc)
    return model, rec


def memory_estimate(kind: str, graphs, in_dim: int, hidden_dim: int = 64, num_layers: int = 3,
                    batch_size: int = 32) -> int:
    """Rough bytes of activations held for one training batch of the largest graphs."""
    graphs = sorted(graphs, key=lambda g: g.node_count + g.num_edges, reverse=True)[:batch_size]
    nodes = sum(g.node_count for g in graphs)
    edges = sum(g.num_edges for g in graphs)
    factor = {"GraphSAGE": 6, "GIN0": 8, "GINWithJK": 9, "GCNWithJK": 6, "EdgePool": 14}[kind]
    per_layer = nodes * hidden_dim * factor + 2 * edges * hidden_dim * (3 if kind == "EdgePool" else 2)
    return 8 * (nodes * in_dim + num_layers * per_layer)
