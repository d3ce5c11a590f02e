"""Recurrent small-graph generator over BFS adjacency sequences.

A graph-level GRU carries the state of the partial graph; at every step a
feed-forward head emits a stop logit and ``bandwidth`` edge logits linking the
new node to its nearest predecessors. With ``edge_rnn=True`` the edge logits
instead come from a small edge-level GRU run across the window.

Step ``s`` (0-based) decides node ``s + 1``: first whether generation stops
(leaving ``s + 1`` nodes), and if not, the node's links. Once ``max_nodes``
nodes exist the stop is forced and carries no probability term, so the
sequence distribution is normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyDataset, GraphTooLarge
from ..graph import (
    AdjSequence,
    Graph,
    bfs_ordering,
    from_sequence,
    max_lookback,
    random_ordering,
    to_sequence,
    truncate_sequence,
)
from ..nn import tensor as T
from ..nn.layers import affine, gru_cell, init_affine, init_gru, init_mlp, mlp
from ..nn.losses import bernoulli_log_prob
from ..nn.optim import Adam
from ..nn.params import ParameterSet, load_checkpoint, save_checkpoint
from ..nn.tensor import Tape, no_record


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 3e-3
    batch_size: int = 8
    seed: int = 0
    patience: int | None = None
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.epochs < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError(f"invalid training config {self}")


class GraphRNNModel:
    kind = "graphrnn"

    def __init__(self, bandwidth: int, max_nodes: int, hidden_dim: int = 64, seed: int = 0,
                 edge_rnn: bool = False, edge_hidden: int = 16, head_hidden: int | None = None):
        if bandwidth < 1:
            raise ValueError(f"bandwidth must be >= 1, got {bandwidth}")
        if max_nodes < 2:
            raise ValueError(f"max_nodes must be >= 2, got {max_nodes}")
        self.bandwidth = int(bandwidth)
        self.max_nodes = int(max_nodes)
        self.hidden_dim = int(hidden_dim)
        self.seed = int(seed)
        self.edge_rnn = bool(edge_rnn)
        self.edge_hidden = int(edge_hidden)
        self.head_hidden = int(head_hidden or hidden_dim)
        m, d = self.bandwidth, self.hidden_dim
        self.transition_params = ParameterSet(self.seed)
        init_gru(self.transition_params, "trans", m + 1, d)
        self.output_params = ParameterSet(self.seed + 7919)
        out_width = 1 if self.edge_rnn else m + 1
        init_mlp(self.output_params, "out", [d, self.head_hidden, out_width])
        if self.edge_rnn:
            init_affine(self.output_params, "edge_init", d, self.edge_hidden)
            init_gru(self.output_params, "edge", 2, self.edge_hidden)
            init_affine(self.output_params, "edge_out", self.edge_hidden, 1)

    @property
    def param_groups(self) -> dict[str, ParameterSet]:
        return {"transition": self.transition_params, "output": self.output_params}

    def parameters(self):
        return list(self.transition_params.values()) + list(self.output_params.values())

    def zero_weights(self):
        for ps in self.param_groups.values():
            ps.zero_all()

    def config(self) -> dict:
        return {
            "generator_kind": self.kind,
            "bandwidth": self.bandwidth,
            "max_nodes": self.max_nodes,
            "hidden_dim": self.hidden_dim,
            "edge_rnn": self.edge_rnn,
            "edge_hidden": self.edge_hidden,
            "head_hidden": self.head_hidden,
        }

    def save(self, path, extra: dict | None = None):
        meta = self.config() | (extra or {})
        save_checkpoint(path, self.kind, self.seed, meta, self.param_groups)

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "GraphRNNModel":
        meta = doc["meta"]
        model = cls(meta["bandwidth"], meta["max_nodes"], meta["hidden_dim"], doc["seed"],
                    meta["edge_rnn"], meta["edge_hidden"], meta["head_hidden"])
        for name, ps in model.param_groups.items():
            ps.load_state(doc["groups"][name].state())
        return model

    @classmethod
    def load(cls, path) -> "GraphRNNModel":
        return cls.from_checkpoint(load_checkpoint(path))


# -- sequences ------------------------------------------------------------------------

def compute_bandwidth(graphs, samples_per_graph: int = 20, seed: int = 0) -> int:
    """Largest lookback seen over random BFS orderings of the graphs (at least 1)."""
    graphs = list(graphs)
    if not graphs:
        raise EmptyDataset("no graphs to estimate a bandwidth from")
    rng = np.random.default_rng(seed)
    best = 1
    for g in graphs:
        for _ in range(samples_per_graph):
            order = bfs_ordering(g, random_ordering(g.node_count, rng))
            best = max(best, max_lookback(g, order))
    return best


def training_sequence(g: Graph, rng: np.random.Generator, bandwidth: int) -> AdjSequence:
    """Random permutation -> BFS ordering -> adjacency vectors cut to ``bandwidth``."""
    if g.node_count <= 1:
        return AdjSequence((), g.node_count, bandwidth)
    order = bfs_ordering(g, random_ordering(g.node_count, rng))
    return truncate_sequence(to_sequence(g, order), bandwidth)


def _as_window(s: AdjSequence, bandwidth: int) -> AdjSequence | None:
    """Re-express ``s`` at ``bandwidth``; None if a link falls outside the window."""
    if s.bandwidth == bandwidth:
        return s
    if s.bandwidth is None:
        for k, v in enumerate(s.vectors):
            cut = max(0, k + 1 - bandwidth)
            if any(v[:cut]):
                return None
        return truncate_sequence(s, bandwidth)
    # narrower stored windows pad with zeros on the far side
    vecs = []
    for k, v in enumerate(s.vectors):
        w = min(k + 1, bandwidth)
        if len(v) > w:
            if any(v[: len(v) - w]):
                return None
            v = v[len(v) - w:]
        vecs.append((0,) * (w - len(v)) + tuple(v))
    return AdjSequence(tuple(vecs), s.n, bandwidth)


def _batch_arrays(seqs: list[AdjSequence], model: GraphRNNModel):
    m = model.bandwidth
    b = len(seqs)
    steps = max(s.n for s in seqs)
    x = np.zeros((b, steps, m + 1))
    y = np.zeros((b, steps, m))
    y_mask = np.zeros((b, steps, m))
    stop = np.zeros((b, steps))
    stop_mask = np.zeros((b, steps))
    for r, s in enumerate(seqs):
        x[r, 0, m] = 1.0  # start-of-sequence flag
        for step in range(s.n):
            node = step + 1
            if step > 0:
                v = s.vectors[step - 1]
                x[r, step, m - len(v):m] = v
            if node < s.n:
                stop_mask[r, step] = 1.0
                v = s.vectors[step]
                y[r, step, m - len(v):] = v
                y_mask[r, step, m - len(v):] = 1.0
            elif node < model.max_nodes:
                stop[r, step] = 1.0
                stop_mask[r, step] = 1.0
    return x, y, y_mask, stop, stop_mask


def _edge_rnn_logits(model: GraphRNNModel, h_flat, targets_flat):
    """Teacher-forced edge-level GRU over the window; returns (rows, M) logits."""
    ps = model.output_params
    rows, m = targets_flat.shape
    g = T.tanh(affine(ps, h_flat, "edge_init"))
    cols = []
    prev = np.zeros(rows)
    for k in range(m):
        inp = np.stack([prev, np.full(rows, 1.0 if k == 0 else 0.0)], axis=1)
        g = gru_cell(ps, g, T.Tensor(inp), "edge")
        cols.append(affine(ps, g, "edge_out"))
        prev = targets_flat[:, k]
    return T.concat(cols, axis=1)


def _sequence_nll(model: GraphRNNModel, seqs: list[AdjSequence]):
    """Total negative log-likelihood of the sequences and the per-sequence values."""
    x, y, y_mask, stop, stop_mask = _batch_arrays(seqs, model)
    b, steps, m = y.shape
    d = model.hidden_dim
    h = T.Tensor(np.zeros((b, d)))
    states = []
    for step in range(steps):
        h = gru_cell(model.transition_params, h, T.Tensor(x[:, step, :]), "trans")
        states.append(h)
    hs = T.reshape(T.concat(states, axis=1), (b * steps, d))
    head = mlp(model.output_params, hs, "out", 2)
    if model.edge_rnn:
        stop_logits = T.reshape(head, (b, steps))
        edge_logits = T.reshape(_edge_rnn_logits(model, hs, y.reshape(b * steps, m)), (b, steps, m))
    else:
        head = T.reshape(head, (b, steps, m + 1))
        edge_logits = head[:, :, :m]
        stop_logits = head[:, :, m]
    ll_edges = bernoulli_log_prob(edge_logits, y, y_mask)
    ll_stop = bernoulli_log_prob(stop_logits, stop, stop_mask)
    per_seq = T.sum_(T.sum_(ll_edges, axis=2), axis=1) + T.sum_(ll_stop, axis=1)
    return -T.sum_(per_seq), -per_seq.data


def _check_sizes(model: GraphRNNModel, graphs):
    for idx, g in enumerate(graphs):
        if g.node_count > model.max_nodes:
            raise GraphTooLarge(f"graph {idx} has {g.node_count} nodes > max_nodes {model.max_nodes}")
        if g.node_count < 1:
            raise GraphTooLarge(f"graph {idx} is empty")


def train(model: GraphRNNModel, graphs, cfg: TrainConfig = TrainConfig()):
    """Teacher-forced maximum likelihood on fresh BFS sequences each epoch.

    Returns ``(model, history)`` where ``history[e]`` is the mean per-graph
    negative log-likelihood observed during epoch ``e``.
    """
    graphs = list(graphs)
    _check_sizes(model, graphs)
    if not graphs:
        raise EmptyDataset("no training graphs")
    rng = np.random.default_rng(cfg.seed)
    opts = [Adam(ps, lr=cfg.lr, clip_norm=None) for ps in model.param_groups.values()]
    history: list[float] = []
    best, stale = np.inf, 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(graphs))
        total = 0.0
        for start in range(0, len(graphs), cfg.batch_size):
            batch = [graphs[i] for i in order[start:start + cfg.batch_size]]
            seqs = [training_sequence(g, rng, model.bandwidth) for g in batch]
            for ps in model.param_groups.values():
                ps.zero_grad()
            with Tape() as tape:
                nll, _ = _sequence_nll(model, seqs)
                loss = T.mul(nll, 1.0 / len(batch))
            tape.backward(loss)
            grads = [ps.grads() for ps in model.param_groups.values()]
            if cfg.clip_norm is not None:
                norm = np.sqrt(sum(float((g * g).sum()) for gs in grads for g in gs.values()))
                if norm > cfg.clip_norm:
                    grads = [{k: g * (cfg.clip_norm / norm) for k, g in gs.items()} for gs in grads]
            for opt, gs in zip(opts, grads):
                opt.step(gs)
            total += nll.item()
        epoch_loss = total / len(graphs)
        history.append(epoch_loss)
        if cfg.patience is not None:
            if epoch_loss < best - 1e-6:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    for ps in model.param_groups.values():
        ps.check_finite()
    return model, history


def sequence_log_prob(model: GraphRNNModel, s: AdjSequence) -> float:
    """Exact log-probability of generating ``s`` (including the stop decisions)."""
    if s.n > model.max_nodes:
        raise GraphTooLarge(f"sequence of {s.n} nodes > max_nodes {model.max_nodes}")
    if s.n < 1:
        raise GraphTooLarge("sequence has no nodes")
    w = _as_window(s, model.bandwidth)
    if w is None:
        return -np.inf
    with no_record():
        _, per_seq = _sequence_nll(model, [w])
    return float(-per_seq[0])


# -- sampling --------------------------------------------------------------------------

def _sig(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sample_many(model: GraphRNNModel, rng: np.random.Generator, count: int, class_label=None) -> list[Graph]:
    """Draw ``count`` graphs in one batched pass."""
    m, d = model.bandwidth, model.hidden_dim
    h = T.Tensor(np.zeros((count, d)))
    x = np.zeros((count, m + 1))
    x[:, m] = 1.0
    alive = np.ones(count, dtype=bool)
    sizes = np.full(count, model.max_nodes)
    vectors: list[list[tuple]] = [[] for _ in range(count)]
    with no_record():
        for step in range(model.max_nodes):
            node = step + 1
            if node == model.max_nodes:
                break
            h = gru_cell(model.transition_params, h, T.Tensor(x), "trans")
            head = mlp(model.output_params, h, "out", 2).data
            stop_p = _sig(head[:, -1])
            stopping = alive & (rng.random(count) < stop_p)
            sizes[stopping] = node
            alive &= ~stopping
            if not alive.any():
                break
            w = min(node, m)
            bits = np.zeros((count, m))
            if model.edge_rnn:
                ps = model.output_params
                g = T.tanh(affine(ps, h, "edge_init"))
                prev = np.zeros(count)
                for k in range(m):
                    inp = np.stack([prev, np.full(count, 1.0 if k == 0 else 0.0)], axis=1)
                    g = gru_cell(ps, g, T.Tensor(inp), "edge")
                    if k >= m - w:
                        p = _sig(affine(ps, g, "edge_out").data[:, 0])
                        bits[:, k] = rng.random(count) < p
                    prev = bits[:, k]
            else:
                p = _sig(head[:, m - w:m])
                bits[:, m - w:] = rng.random((count, w)) < p
            for r in np.flatnonzero(alive):
                vectors[r].append(tuple(int(b) for b in bits[r, m - w:]))
            x = np.zeros((count, m + 1))
            x[:, :m] = bits
    graphs = []
    for r in range(count):
        n = int(sizes[r])
        seq = AdjSequence(tuple(vectors[r][: n - 1]), n, m)
        graphs.append(from_sequence(seq, class_label=class_label))
    return graphs


def sample(model: GraphRNNModel, rng: np.random.Generator, class_label=None) -> Graph:
    return sample_many(model, rng, 1, class_label)[0]


def memory_estimate(model: GraphRNNModel, graphs, batch_size: int) -> int:
    """Rough bytes held by one training batch (padded sequence tensors and saved activations)."""
    n = max((g.node_count for g in graphs), default=1)
    per_step = 12 * model.hidden_dim + 6 * (model.bandwidth + 1)
    if model.edge_rnn:
        per_step += model.bandwidth * 12 * model.edge_hidden
    return 8 * batch_size * n * per_step
