"""Block-wise large-graph generator over the lower-triangular adjacency.

Nodes are laid out in a fixed canonical order. Step ``t`` adds up to
``block_size`` new nodes (the first ``stride`` of which are decided this
step) and scores every link from a decided row to any earlier node. Scores
come from rounds of attention message passing over the already generated
graph plus the new nodes, where each new node is wired to all of its
candidate partners by a flagged "candidate" edge.

The log-likelihood of a graph is the sum over steps of the block's mixture
of independent Bernoullis; steps are independent given the true prefix, so
training and scoring evaluate all steps of many graphs as one disjoint union.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, EmptyDataset, GraphTooLarge, InvalidTarget
from ..graph import Graph, check_ordering
from ..nn import tensor as T
from ..nn.layers import affine, attention_message_pass, init_affine, init_attention, init_mlp, mlp
from ..nn.losses import bernoulli_log_prob
from ..nn.optim import Adam
from ..nn.params import ParameterSet, load_checkpoint, save_checkpoint
from ..nn.tensor import Tape, no_record
from .graphrnn import TrainConfig

# disjoint unions above this many nodes are split into separately taped chunks
UNION_NODE_LIMIT = 20000


class GRANModel:
    kind = "gran"

    def __init__(self, max_nodes: int, block_size: int = 1, stride: int | None = None, rounds: int = 2,
                 hidden_dim: int = 64, num_mix: int = 1, seed: int = 0, head_hidden: int | None = None):
        stride = block_size if stride is None else stride
        if block_size < 1 or not (1 <= stride <= block_size):
            raise ValueError(f"need 1 <= stride <= block_size, got stride={stride}, block_size={block_size}")
        if rounds < 1 or num_mix < 1 or max_nodes < 1:
            raise ValueError("rounds, num_mix and max_nodes must be positive")
        self.max_nodes = int(max_nodes)
        self.block_size = int(block_size)
        self.stride = int(stride)
        self.rounds = int(rounds)
        self.hidden_dim = int(hidden_dim)
        self.num_mix = int(num_mix)
        self.seed = int(seed)
        self.head_hidden = int(head_hidden or hidden_dim)
        d = self.hidden_dim
        ps = ParameterSet(self.seed)
        ps.glorot("node_in.w", (self.max_nodes, d))
        ps.zeros("node_in.b", (d,))
        ps.glorot("unknown", (1, d))
        for r in range(self.rounds):
            init_attention(ps, f"mp{r}", d)
        init_mlp(ps, "edge", [2 * d, self.head_hidden, self.num_mix])
        if self.num_mix > 1:
            init_affine(ps, "mix", d, self.num_mix)
        self.gnn_params = ps

    @property
    def param_groups(self):
        return {"gnn": self.gnn_params}

    def parameters(self):
        return list(self.gnn_params.values())

    def zero_weights(self):
        self.gnn_params.zero_all()

    def config(self) -> dict:
        return {
            "generator_kind": self.kind,
            "max_nodes": self.max_nodes,
            "block_size": self.block_size,
            "stride": self.stride,
            "rounds": self.rounds,
            "hidden_dim": self.hidden_dim,
            "num_mix": self.num_mix,
            "head_hidden": self.head_hidden,
        }

    def save(self, path, extra: dict | None = None):
        save_checkpoint(path, self.kind, self.seed, self.config() | (extra or {}), self.param_groups)

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "GRANModel":
        meta = doc["meta"]
        model = cls(meta["max_nodes"], meta["block_size"], meta["stride"], meta["rounds"],
                    meta["hidden_dim"], meta["num_mix"], doc["seed"], meta["head_hidden"])
        model.gnn_params.load_state(doc["groups"]["gnn"].state())
        return model

    @classmethod
    def load(cls, path) -> "GRANModel":
        return cls.from_checkpoint(load_checkpoint(path))

    def num_steps(self, n: int) -> int:
        return math.ceil(n / self.stride)


# -- ordering & steps ------------------------------------------------------------------

def canonical_ordering(g: Graph) -> tuple[int, ...]:
    """Descending degree; ties by BFS rank from the highest-degree node
    (neighbors visited by index), then by index."""
    n = g.node_count
    if n == 0:
        return ()
    deg = g.degrees()
    nbrs = [sorted(x) for x in g.neighbors()]
    starts = sorted(range(n), key=lambda u: (-int(deg[u]), u))
    rank = [-1] * n
    nxt = 0
    for s in starts:
        if rank[s] >= 0:
            continue
        rank[s] = nxt
        nxt += 1
        queue = [s]
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            for v in nbrs[u]:
                if rank[v] < 0:
                    rank[v] = nxt
                    nxt += 1
                    queue.append(v)
    return tuple(sorted(range(n), key=lambda u: (-int(deg[u]), rank[u], u)))


@dataclass(frozen=True)
class BlockStep:
    """One autoregressive step.

    ``prefix_size`` nodes (positions ``0..p-1``) exist with ``prefix_edges``;
    ``block_nodes`` new nodes follow, of which the first ``decided`` rows are
    scored against every earlier position via ``candidates``.
    """

    t: int
    prefix_size: int
    block_nodes: int
    decided: int
    prefix_edges: np.ndarray
    candidates: np.ndarray
    targets: np.ndarray | None = None

    def validate(self):
        p = self.prefix_size
        if not (0 <= self.decided <= self.block_nodes):
            raise ContractViolation("decided rows exceed the block")
        pe = np.asarray(self.prefix_edges).reshape(-1, 2)
        if pe.size and (pe.min() < 0 or pe.max() >= p):
            raise ContractViolation("prefix edge references a node outside the prefix")
        want = _candidate_pairs(p, self.decided)
        if not np.array_equal(np.asarray(self.candidates).reshape(-1, 2), want):
            raise ContractViolation("candidates do not enumerate the lower-triangular rows of the block")
        if self.targets is not None and len(self.targets) != len(want):
            raise ContractViolation("one target per candidate pair is required")


def _candidate_pairs(p: int, rows: int) -> np.ndarray:
    pairs = [(i, j) for i in range(p, p + rows) for j in range(i)]
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def make_step(model: GRANModel, adj: np.ndarray, n: int, t: int, with_targets: bool = True) -> BlockStep:
    """Step ``t`` (1-based) of an ``n``-node graph whose ordered adjacency is ``adj``."""
    p = model.stride * (t - 1)
    block = min(model.block_size, n - p)
    decided = min(model.stride, n - p)
    sub = adj[:p, :p]
    iu, ju = np.nonzero(np.triu(sub, 1))
    prefix_edges = np.stack([iu, ju], axis=1).astype(np.int64) if len(iu) else np.zeros((0, 2), dtype=np.int64)
    cand = _candidate_pairs(p, decided)
    targets = adj[cand[:, 0], cand[:, 1]].astype(np.float64) if (with_targets and len(cand)) else (
        np.zeros(0) if with_targets else None)
    return BlockStep(t, p, block, decided, prefix_edges, cand, targets)


def ordered_adjacency(g: Graph, ordering=None) -> np.ndarray:
    pi = canonical_ordering(g) if ordering is None else check_ordering(ordering, g.node_count)
    idx = np.asarray(pi, dtype=np.int64)
    return g.adjacency()[np.ix_(idx, idx)] if len(idx) else np.zeros((0, 0), dtype=np.uint8)


def graph_steps(model: GRANModel, g: Graph, ordering=None) -> list[BlockStep]:
    adj = ordered_adjacency(g, ordering)
    return [make_step(model, adj, g.node_count, t) for t in range(1, model.num_steps(g.node_count) + 1)]


# -- forward ---------------------------------------------------------------------------

@dataclass
class BlockOutput:
    logits: T.Tensor               # (pairs, K) edge logits per mixture component
    log_mix: T.Tensor | None       # (steps, K) log mixture weights, None when K == 1
    pair_step: np.ndarray          # step index of each pair
    num_steps: int

    @property
    def probs(self) -> np.ndarray:
        """Marginal edge probabilities per candidate pair."""
        theta = 0.5 * (1.0 + np.tanh(0.5 * self.logits.data))
        if self.log_mix is None:
            return theta[:, 0]
        w = np.exp(self.log_mix.data)[self.pair_step]
        return (w * theta).sum(axis=1)


def _union_forward(model: GRANModel, steps: list[BlockStep], return_attention: bool = False):
    ps = model.gnn_params
    d = model.hidden_dim
    offsets, owner, nbr, is_new, edges, types, pairs, pair_step, new_step = [], [], [], [], [], [], [], [], []
    base = 0
    for s_idx, st in enumerate(steps):
        p, nb = st.prefix_size, st.block_nodes
        pe = np.asarray(st.prefix_edges, dtype=np.int64).reshape(-1, 2)
        # node_in rows: a prefix node's input is the indicator of its prefix neighbors
        if len(pe):
            owner.append(np.concatenate([pe[:, 0], pe[:, 1]]) + base)
            nbr.append(np.concatenate([pe[:, 1], pe[:, 0]]))
            edges.append(pe + base)
            types.append(np.zeros(len(pe)))
        flag = np.zeros(p + nb)
        flag[p:] = 1.0
        is_new.append(flag)
        new_step.append(np.full(nb, s_idx))
        msg_cand = _candidate_pairs(p, nb)
        if len(msg_cand):
            edges.append(msg_cand + base)
            types.append(np.ones(len(msg_cand)))
        cand = np.asarray(st.candidates, dtype=np.int64).reshape(-1, 2)
        if len(cand):
            pairs.append(cand + base)
            pair_step.append(np.full(len(cand), s_idx))
        offsets.append(base)
        base += p + nb
    total = base
    cat = lambda xs, shape: np.concatenate(xs) if xs else np.zeros(shape)  # noqa: E731
    owner = cat(owner, (0,)).astype(np.int64)
    nbr = cat(nbr, (0,)).astype(np.int64)
    new_flag = cat(is_new, (0,)).reshape(-1, 1)
    edges = cat(edges, (0, 2)).astype(np.int64)
    types = cat(types, (0,))
    pairs = cat(pairs, (0, 2)).astype(np.int64)
    pair_step = cat(pair_step, (0,)).astype(np.int64)
    new_step = cat(new_step, (0,)).astype(np.int64)

    h = T.segment_sum(ps["node_in.w"][nbr], owner, total)
    h = h + T.Tensor(1.0 - new_flag) * ps["node_in.b"] + T.Tensor(new_flag) * ps["unknown"]
    attn = []
    for r in range(model.rounds):
        out = attention_message_pass(ps, h, edges, types, prefix=f"mp{r}", return_weights=return_attention)
        if return_attention:
            h, alpha = out
            attn.append((alpha, np.concatenate([edges[:, 1], edges[:, 0]]), total))
        else:
            h = out
    if len(pairs):
        feats = T.concat([h[pairs[:, 0]], h[pairs[:, 1]]], axis=1)
        logits = mlp(ps, feats, "edge", 2)
    else:
        logits = T.Tensor(np.zeros((0, model.num_mix)))
    log_mix = None
    if model.num_mix > 1:
        new_idx = np.flatnonzero(new_flag[:, 0])
        counts = np.maximum(np.bincount(new_step, minlength=len(steps)), 1).reshape(-1, 1)
        pooled = T.segment_sum(h[new_idx], new_step, len(steps)) * T.Tensor(1.0 / counts)
        log_mix = T.log_softmax(affine(ps, pooled, "mix"), axis=1)
    out = BlockOutput(logits, log_mix, pair_step, len(steps))
    return (out, attn) if return_attention else out


def block_forward(model: GRANModel, step: BlockStep) -> BlockOutput:
    step.validate()
    return _union_forward(model, [step])


def _step_log_probs(model: GRANModel, out: BlockOutput, targets: np.ndarray) -> T.Tensor:
    """Log-probability of each step's decided block, shape (steps,)."""
    k = model.num_mix
    if len(targets):
        ll = bernoulli_log_prob(out.logits, np.repeat(targets.reshape(-1, 1), k, axis=1))
        per = T.segment_sum(ll, out.pair_step, out.num_steps)
    else:
        per = T.Tensor(np.zeros((out.num_steps, k)))
    if out.log_mix is None:
        return T.reshape(per, (out.num_steps,))
    return T.logsumexp(per + out.log_mix, axis=1)


def _steps_log_prob(model: GRANModel, steps: list[BlockStep]) -> T.Tensor:
    out = _union_forward(model, steps)
    targets = np.concatenate([s.targets for s in steps]) if steps else np.zeros(0)
    return _step_log_probs(model, out, targets)


def graph_log_prob(model: GRANModel, g: Graph, ordering=None) -> float:
    """``log p(L)`` under the canonical ordering (or the one given)."""
    if g.node_count > model.max_nodes:
        raise GraphTooLarge(f"graph of {g.node_count} nodes > max_nodes {model.max_nodes}")
    if g.node_count == 0:
        return 0.0
    with no_record():
        return float(_steps_log_prob(model, graph_steps(model, g, ordering)).data.sum())


def step_log_probs(model: GRANModel, g: Graph, ordering=None) -> np.ndarray:
    """Per-step log-probabilities, each step evaluated on its own."""
    with no_record():
        return np.array([float(_steps_log_prob(model, [st]).data.sum()) for st in graph_steps(model, g, ordering)])


# -- training ------------------------------------------------------------------------------

def _chunks(step_lists: list[list[BlockStep]]):
    chunk, size = [], 0
    for steps in step_lists:
        for st in steps:
            cost = st.prefix_size + st.block_nodes
            if chunk and size + cost > UNION_NODE_LIMIT:
                yield chunk
                chunk, size = [], 0
            chunk.append(st)
            size += cost
    if chunk:
        yield chunk


def train(model: GRANModel, graphs, cfg: TrainConfig = TrainConfig()):
    """Teacher-forced maximum likelihood over blocks; returns ``(model, history)``
    with the mean per-graph negative log-likelihood of each epoch."""
    graphs = list(graphs)
    if not graphs:
        raise EmptyDataset("no training graphs")
    for idx, g in enumerate(graphs):
        if g.node_count > model.max_nodes:
            raise GraphTooLarge(f"graph {idx} has {g.node_count} nodes > max_nodes {model.max_nodes}")
    all_steps = [graph_steps(model, g) for g in graphs]
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.gnn_params, lr=cfg.lr, clip_norm=cfg.clip_norm)
    history: list[float] = []
    best, stale = np.inf, 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(graphs))
        total = 0.0
        for start in range(0, len(graphs), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            model.gnn_params.zero_grad()
            for chunk in _chunks([all_steps[i] for i in idx]):
                with Tape() as tape:
                    nll = -T.sum_(_steps_log_prob(model, chunk))
                    loss = T.mul(nll, 1.0 / len(idx))
                tape.backward(loss)
                total += nll.item()
            opt.step()
        epoch_loss = total / len(graphs)
        history.append(epoch_loss)
        if cfg.patience is not None:
            if epoch_loss < best - 1e-6:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    model.gnn_params.check_finite()
    return model, history


# -- sampling ------------------------------------------------------------------------------

def sample_target_size(training_sizes, rng: np.random.Generator) -> int:
    sizes = list(training_sizes)
    if not sizes:
        raise EmptyDataset("no training sizes to draw from")
    return int(sizes[int(rng.integers(len(sizes)))])


def sample_many(model: GRANModel, rng: np.random.Generator, targets, class_label=None,
                trace: list | None = None) -> list[Graph]:
    """Generate one graph per entry of ``targets`` (node counts), in lockstep.

    When ``trace`` is a list, the number of block steps taken for each graph
    is appended to it.
    """
    targets = [int(t) for t in targets]
    for t in targets:
        if not (1 <= t <= model.max_nodes):
            raise InvalidTarget(f"target size {t} outside [1, {model.max_nodes}]")
    adjs = [np.zeros((n, n), dtype=np.uint8) for n in targets]
    steps_taken = [0] * len(targets)
    max_t = max((model.num_steps(n) for n in targets), default=0)
    with no_record():
        for t in range(1, max_t + 1):
            active = [r for r, n in enumerate(targets) if model.stride * (t - 1) < n]
            steps = [make_step(model, adjs[r], targets[r], t, with_targets=False) for r in active]
            for r in active:
                steps_taken[r] += 1
            if not any(len(st.candidates) for st in steps):
                continue
            out = _union_forward(model, steps)
            theta = 0.5 * (1.0 + np.tanh(0.5 * out.logits.data))
            if out.log_mix is not None:
                mix = np.exp(out.log_mix.data)
                comp = np.array([rng.choice(model.num_mix, p=w / w.sum()) for w in mix])
                p = theta[np.arange(len(theta)), comp[out.pair_step]]
            else:
                p = theta[:, 0]
            bits = rng.random(len(p)) < p
            cursor = 0
            for r, st in zip(active, steps):
                k = len(st.candidates)
                chosen = st.candidates[bits[cursor:cursor + k]]
                adjs[r][chosen[:, 0], chosen[:, 1]] = 1
                adjs[r][chosen[:, 1], chosen[:, 0]] = 1
                cursor += k
    if trace is not None:
        trace.extend(steps_taken)
    graphs = []
    for n, a in zip(targets, adjs):
        iu, ju = np.nonzero(np.triu(a, 1))
        graphs.append(Graph(n, list(zip(iu.tolist(), ju.tolist())), class_label=class_label))
    return graphs


def sample(model: GRANModel, rng: np.random.Generator, target_nodes: int, class_label=None,
           trace: list | None = None) -> Graph:
    return sample_many(model, rng, [target_nodes], class_label, trace)[0]


def memory_estimate(model: GRANModel, graphs, batch_size: int) -> int:
    """Rough bytes for the disjoint union of one batch of teacher-forced steps."""
    n = max((g.node_count for g in graphs), default=1)
    m = max((g.num_edges for g in graphs), default=0)
    steps = model.num_steps(n)
    nodes = steps * (n / 2 + model.block_size)
    msg_edges = steps * (m / 2 + model.block_size * n / 2)
    per_graph = nodes * model.hidden_dim * (4 + 6 * model.rounds) + msg_edges * model.hidden_dim * 8 * model.rounds
    return int(8 * min(batch_size, len(graphs) or 1) * per_graph)
