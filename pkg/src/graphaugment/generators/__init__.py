"""Per-class graph generators behind one wrapper.

``ClassGenerator`` pairs a trained model of either kind with the class it
was trained on, so every sample it emits carries that class label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, EmptyDataset
from ..nn.params import load_checkpoint
from . import gran, graphrnn
from .graphrnn import TrainConfig

KINDS = ("graphrnn", "gran")


@dataclass
class GeneratorConfig:
    hidden_dim: int = 32
    epochs: int = 100
    lr: float = 3e-3
    batch_size: int = 8
    patience: int | None = None
    # graphrnn
    edge_rnn: bool = False
    # gran
    block_size: int = 1
    stride: int | None = None
    rounds: int = 2
    num_mix: int = 1

    @classmethod
    def from_dict(cls, d: dict | None) -> "GeneratorConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown generator settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ClassGenerator:
    kind: str
    model: object
    class_label: object
    training_sizes: list[int]
    history: list[float] = field(default_factory=list)

    def sample_many(self, rng: np.random.Generator, count: int) -> list:
        if count <= 0:
            return []
        if self.kind == "graphrnn":
            return graphrnn.sample_many(self.model, rng, count, class_label=self.class_label)
        targets = [gran.sample_target_size(self.training_sizes, rng) for _ in range(count)]
        return gran.sample_many(self.model, rng, targets, class_label=self.class_label)

    def sample(self, rng: np.random.Generator):
        return self.sample_many(rng, 1)[0]

    def save(self, path):
        self.model.save(path, {"class_label": self.class_label, "training_sizes": list(self.training_sizes),
                               "history": list(self.history)})

    @classmethod
    def load(cls, path) -> "ClassGenerator":
        doc = load_checkpoint(path)
        kind = doc["kind"]
        if kind == "graphrnn":
            model = graphrnn.GraphRNNModel.from_checkpoint(doc)
        elif kind == "gran":
            model = gran.GRANModel.from_checkpoint(doc)
        else:
            raise ConfigError(f"checkpoint holds a {kind!r} model, not a generator")
        meta = doc["meta"]
        return cls(kind, model, meta.get("class_label"), list(meta.get("training_sizes", [])),
                   list(meta.get("history", [])))


def build_model(kind: str, graphs, cfg: GeneratorConfig, seed: int):
    """Untrained model of ``kind`` sized for ``graphs``."""
    graphs = list(graphs)
    if not graphs:
        raise EmptyDataset("no graphs to size a generator for")
    max_nodes = max(g.node_count for g in graphs)
    if kind == "graphrnn":
        bandwidth = graphrnn.compute_bandwidth(graphs, seed=seed)
        return graphrnn.GraphRNNModel(bandwidth, max(max_nodes, 2), cfg.hidden_dim, seed, edge_rnn=cfg.edge_rnn)
    if kind == "gran":
        return gran.GRANModel(max_nodes, cfg.block_size, cfg.stride, cfg.rounds, cfg.hidden_dim,
                              cfg.num_mix, seed)
    raise ConfigError(f"unknown generator kind {kind!r}; expected one of {KINDS}")


def memory_estimate(kind: str, graphs, cfg: GeneratorConfig) -> int:
    graphs = list(graphs)
    model = build_model(kind, graphs, cfg, 0)
    mod = graphrnn if kind == "graphrnn" else gran
    return mod.memory_estimate(model, graphs, cfg.batch_size)


def train_generator(kind: str, graphs, class_label, cfg: GeneratorConfig = GeneratorConfig(),
                    seed: int = 0) -> ClassGenerator:
    graphs = list(graphs)
    model = build_model(kind, graphs, cfg, seed)
    tcfg = TrainConfig(epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size, seed=seed, patience=cfg.patience)
    mod = graphrnn if kind == "graphrnn" else gran
    model, history = mod.train(model, graphs, tcfg)
    return ClassGenerator(kind, model, class_label, [g.node_count for g in graphs], history)


__all__ = ["KINDS", "GeneratorConfig", "ClassGenerator", "build_model", "train_generator", "memory_estimate",
           "graphrnn", "gran"]
