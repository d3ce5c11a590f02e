import itertools
import math

import numpy as np
import pytest

from graphaugment.errors import ConfigError, ContractViolation, EmptyDataset, GraphTooLarge, InvalidTarget
from graphaugment.generators import ClassGenerator, GeneratorConfig, gran as G, train_generator
from graphaugment.generators.gran import BlockStep, GRANModel, TrainConfig
from graphaugment.graph import Graph, complete_graph, cycle_graph, is_isomorphic, path_graph, star_graph
from graphaugment.nn.gradcheck import grad_check
from graphaugment.nn import tensor as T


def all_labeled(n):
    pairs = list(itertools.combinations(range(n), 2))
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        yield Graph(n, [p for p, b in zip(pairs, bits) if b])


def scrambled(model, seed):
    rng = np.random.default_rng(seed)
    for p in model.parameters():
        p.data[...] = rng.normal(scale=0.7, size=p.shape)
    return model


class TestCanonicalOrdering:
    def test_star_center_first(self):
        assert G.canonical_ordering(star_graph(4))[0] == 0

    def test_path(self):
        assert G.canonical_ordering(path_graph(4)) == (1, 2, 0, 3)

    def test_cycle_is_bfs(self):
        assert G.canonical_ordering(cycle_graph(5)) == (0, 1, 4, 2, 3)

    def test_disconnected(self):
        g = Graph(5, [(3, 4)])
        assert G.canonical_ordering(g) == (3, 4, 0, 1, 2)

    def test_is_permutation(self, rng):
        from graphaugment.graph import random_graph
        for _ in range(20):
            g = random_graph(9, 0.3, rng)
            assert sorted(G.canonical_ordering(g)) == list(range(9))


class TestSteps:
    def test_first_block_empty(self):
        model = GRANModel(5, block_size=2)
        st = G.graph_steps(model, complete_graph(4))[0]
        assert st.prefix_size == 0 and len(st.prefix_edges) == 0
        assert [tuple(c) for c in st.candidates] == [(1, 0)]

    def test_step_count(self):
        for n, b, s, want in [(5, 1, 1, 5), (5, 2, 2, 3), (6, 3, 3, 2), (5, 3, 1, 5)]:
            assert len(G.graph_steps(GRANModel(8, block_size=b, stride=s), path_graph(n))) == want

    def test_targets_cover_all_pairs_once(self):
        model = GRANModel(7, block_size=3, stride=2)
        g = complete_graph(7)
        pairs = [tuple(c) for st in G.graph_steps(model, g) for c in st.candidates]
        assert sorted(pairs) == sorted((i, j) for i in range(7) for j in range(i))

    def test_bad_step_contract(self):
        good = G.graph_steps(GRANModel(4, block_size=2), complete_graph(4))[1]
        bad = BlockStep(good.t, good.prefix_size, good.block_nodes, good.decided,
                        np.array([[0, 5]]), good.candidates, good.targets)
        with pytest.raises(ContractViolation):
            G.block_forward(GRANModel(4, block_size=2), bad)
        bad2 = BlockStep(good.t, good.prefix_size, good.block_nodes, good.decided,
                         good.prefix_edges, good.candidates[:1], good.targets)
        with pytest.raises(ContractViolation):
            bad2.validate()


class TestLikelihood:
    def test_zero_weight_half(self):
        model = GRANModel(6, block_size=2, hidden_dim=8)
        model.zero_weights()
        for g in [cycle_graph(5), path_graph(4), Graph(3, [])]:
            n = g.node_count
            assert G.graph_log_prob(model, g) == pytest.approx(n * (n - 1) / 2 * math.log(0.5), abs=1e-12)
        out = G.block_forward(model, G.graph_steps(model, cycle_graph(5))[1])
        assert np.allclose(out.probs, 0.5)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("b,s,k", [(1, 1, 1), (2, 2, 1), (1, 1, 3), (2, 2, 2), (3, 1, 1), (2, 1, 2)])
    def test_normalization(self, seed, b, s, k):
        model = scrambled(GRANModel(4, block_size=b, stride=s, hidden_dim=6, num_mix=k, seed=seed), seed)
        for n in (2, 3, 4):
            total = sum(math.exp(G.graph_log_prob(model, g, ordering=range(n))) for g in all_labeled(n))
            assert abs(total - 1.0) < 1e-9

    def test_blocks_sum_to_whole(self):
        model = scrambled(GRANModel(8, block_size=2, hidden_dim=8, num_mix=2), 3)
        g = Graph(7, [(0, 1), (1, 2), (2, 5), (3, 6), (0, 6), (4, 5)])
        assert G.step_log_probs(model, g).sum() == pytest.approx(G.graph_log_prob(model, g), abs=1e-10)

    def test_gradient_two_blocks(self):
        for seed in range(3):
            model = scrambled(GRANModel(4, block_size=2, hidden_dim=4, num_mix=2, seed=seed, head_hidden=4), seed)
            steps = G.graph_steps(model, cycle_graph(4))
            assert len(steps) == 2
            err = grad_check(lambda: T.sum_(G._steps_log_prob(model, steps)), model.parameters())
            assert err < 1e-4

    def test_too_large(self):
        with pytest.raises(GraphTooLarge):
            G.graph_log_prob(GRANModel(3), complete_graph(4))

    def test_attention_normalized(self):
        model = scrambled(GRANModel(6, block_size=2, hidden_dim=6), 1)
        steps = G.graph_steps(model, cycle_graph(6))
        _, attn = G._union_forward(model, steps, return_attention=True)
        assert len(attn) == model.rounds
        for alpha, dst, total in attn:
            sums = np.bincount(dst, weights=np.asarray(alpha).reshape(-1), minlength=total)
            has = np.bincount(dst, minlength=total) > 0
            assert np.allclose(sums[has], 1.0, atol=1e-12)


class TestTrainSample:
    def test_overfit_k4(self):
        model = GRANModel(4, hidden_dim=16, seed=0)
        model, hist = G.train(model, [complete_graph(4)] * 10, TrainConfig(epochs=100, lr=1e-2))
        assert hist[-1] < 0.1 and hist[-1] < hist[0]
        out = G.sample_many(model, np.random.default_rng(0), [4] * 50)
        assert sum(is_isomorphic(g, complete_graph(4)) for g in out) >= 40

    def test_zero_weight_monte_carlo(self):
        model = GRANModel(3, hidden_dim=4)
        model.zero_weights()
        out = G.sample_many(model, np.random.default_rng(7), [3] * 2000)
        sigma = math.sqrt(0.25 / 2000)
        for e in [(0, 1), (0, 2), (1, 2)]:
            assert abs(np.mean([e in g.edges for g in out]) - 0.5) < 3 * sigma

    def test_trace_step_counts(self):
        model = GRANModel(9, block_size=2, hidden_dim=4)
        trace = []
        G.sample_many(model, np.random.default_rng(0), [1, 4, 5, 9], trace=trace)
        assert trace == [1, 2, 3, 5]

    def test_invalid_target(self):
        model = GRANModel(5, hidden_dim=4)
        for t in (0, 6):
            with pytest.raises(InvalidTarget):
                G.sample(model, np.random.default_rng(0), t)

    def test_target_sizes(self):
        rng = np.random.default_rng(0)
        draws = [G.sample_target_size([3, 3, 7], rng) for _ in range(600)]
        assert set(draws) == {3, 7} and abs(draws.count(7) / 600 - 1 / 3) < 0.07
        with pytest.raises(EmptyDataset):
            G.sample_target_size([], rng)

    def test_deterministic(self):
        def run():
            m = GRANModel(6, block_size=2, hidden_dim=6, seed=2)
            m, h = G.train(m, [cycle_graph(6), path_graph(5)] * 2, TrainConfig(epochs=3))
            return h, G.sample_many(m, np.random.default_rng(4), [5, 6, 6])
        assert run() == run()

    def test_checkpoint(self, tmp_path):
        model = scrambled(GRANModel(6, block_size=2, stride=1, hidden_dim=6, num_mix=2), 5)
        model.save(tmp_path / "g.json")
        back = GRANModel.load(tmp_path / "g.json")
        assert back.config() == model.config()
        g = cycle_graph(6)
        assert G.graph_log_prob(back, g) == G.graph_log_prob(model, g)


class TestClassGenerator:
    def test_config_rejects_unknown(self):
        with pytest.raises(ConfigError):
            GeneratorConfig.from_dict({"hidden": 3})

    @pytest.mark.parametrize("kind", ["graphrnn", "gran"])
    def test_roundtrip(self, kind, tmp_path):
        graphs = [cycle_graph(5, class_label="r"), cycle_graph(6, class_label="r")]
        gen = train_generator(kind, graphs, "r", GeneratorConfig(hidden_dim=6, epochs=2), seed=1)
        assert gen.training_sizes == [5, 6] and len(gen.history) == 2
        gen.save(tmp_path / "c.json")
        back = ClassGenerator.load(tmp_path / "c.json")
        a = gen.sample_many(np.random.default_rng(3), 5)
        assert a == back.sample_many(np.random.default_rng(3), 5)
        assert all(g.class_label == "r" for g in a)
        if kind == "gran":
            assert all(g.node_count in (5, 6) for g in a)
