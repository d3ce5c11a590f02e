import numpy as np
import pytest

from graphaugment import classifiers as C
from graphaugment.dataset import LabeledDataset
from graphaugment.errors import ClassMismatch, ConfigError, ContractViolation, EmptyDataset, MissingNodeLabels, ShapeError
from graphaugment.graph import Graph, cycle_graph, path_graph, random_graph, star_graph
from graphaugment.nn import tensor as T
from graphaugment.nn.gradcheck import grad_check
from graphaugment.toy import cycles_vs_stars


def asymmetric(rng, n=8):
    while True:
        g = random_graph(n, 0.35, rng)
        if len(set(g.degrees().tolist())) >= 3 and g.num_edges >= n - 1:
            return g


def permute(g, perm):
    inv = np.argsort(perm)
    return Graph(g.node_count, [tuple(sorted((int(inv[u]), int(inv[v])))) for u, v in g.edges],
                 class_label=g.class_label)


class TestFeatures:
    def test_degree_onehot_caps(self):
        x = C.node_features(star_graph(5), C.FeatureScheme("degree_onehot", cap=3))
        assert x.shape == (6, 4) and x[0, 3] == 1 and (x[1:, 1] == 1).all()

    def test_constant(self):
        assert (C.node_features(path_graph(3), "constant") == 1).all()

    def test_labels(self):
        g = Graph(3, [(0, 1)], node_labels=["a", "b", "z"])
        x = C.node_features(g, C.FeatureScheme("node_label_onehot", vocab=("a", "b")))
        assert x.tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
        with pytest.raises(MissingNodeLabels):
            C.node_features(path_graph(3), C.FeatureScheme("node_label_onehot", vocab=("a",)))

    def test_default_scheme(self):
        plain = LabeledDataset("p", [path_graph(3, 0)])
        assert C.default_scheme(plain).name == "degree_onehot"
        lab = LabeledDataset("l", [Graph(2, [(0, 1)], node_labels=[2, 1], class_label=0)])
        assert C.default_scheme(lab).vocab == (1, 2)

    def test_bad_scheme(self):
        with pytest.raises(ConfigError):
            C.FeatureScheme("rgb")


@pytest.mark.parametrize("kind", C.KINDS)
class TestModels:
    def test_permutation_invariant(self, kind, rng):
        model = C.ClassifierModel(kind, [0, 1], hidden_dim=8, seed=1)
        for _ in range(20):
            g = asymmetric(rng)
            perm = rng.permutation(g.node_count)
            a = C.forward(model, g).data
            b = C.forward(model, permute(g, perm)).data
            assert np.abs(a - b).max() < 1e-9

    def test_permutation_invariant_regular(self, kind, rng):
        # every edge ties on score here, so only the tie rule keeps this invariant
        g = Graph(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (0, 3), (1, 4), (2, 5)])
        model = C.ClassifierModel(kind, [0, 1], hidden_dim=8, seed=1)
        for _ in range(5):
            b = C.forward(model, permute(g, rng.permutation(6))).data
            assert np.abs(C.forward(model, g).data - b).max() < 1e-9

    def test_batch_matches_single(self, kind, rng):
        model = C.ClassifierModel(kind, [0, 1, 2], hidden_dim=8, seed=2)
        graphs = [asymmetric(rng, n) for n in (5, 7, 9)] + [Graph(1, [])]
        batch = C.forward_many(model, graphs).data
        single = np.stack([C.forward(model, g).data for g in graphs])
        assert np.abs(batch - single).max() < 1e-12

    def test_gradients(self, kind, rng):
        model = C.ClassifierModel(kind, [0, 1], hidden_dim=4, num_layers=2, seed=3)
        # zero biases put ReLU inputs exactly on the kink; check at a generic point
        for p in model.params.values():
            p.data[...] = rng.normal(scale=0.5, size=p.shape)
        graphs = [asymmetric(rng, 6), cycle_graph(5)]
        from graphaugment.nn.losses import cross_entropy
        err = grad_check(lambda: cross_entropy(C.forward_many(model, graphs), np.array([0, 1])),
                         model.params.values())
        assert err < 1e-4

    def test_separates_cycles_and_stars(self, kind):
        ds = cycles_vs_stars(60, seed=1)
        model = C.ClassifierModel(kind, [0, 1], seed=0)
        model, rec = C.train_classifier(model, ds, cycles_vs_stars(20, seed=2), C.ClassifierConfig(epochs=30))
        assert C.evaluate(model, cycles_vs_stars(40, seed=3)) == 1.0
        assert 1 <= rec.best_epoch <= rec.epochs_run

    def test_checkpoint(self, kind, tmp_path, rng):
        model = C.ClassifierModel(kind, ["x", "y"], hidden_dim=6, seed=4)
        model.save(tmp_path / "c.json")
        back = C.ClassifierModel.load(tmp_path / "c.json")
        g = asymmetric(rng)
        assert np.array_equal(C.forward(model, g).data, C.forward(back, g).data)
        assert back.classes == model.classes


class TestEdgePool:
    def test_tied_scores_follow_edge_order(self):
        model = C.ClassifierModel("EdgePool", [0, 1], hidden_dim=3)
        model.params.zero_all()
        h = np.arange(12, dtype=float).reshape(4, 3)
        pooled, states, cluster = C.edge_pool(model, path_graph(4), h)
        # gate is sigmoid(0) + 0.5 = 1 everywhere, so (0,1) then (2,3) are contracted
        assert pooled.node_count == 2 and pooled.edges == ((0, 1),)
        assert cluster.tolist() == [0, 0, 1, 1]
        assert np.allclose(states.data, [h[0] + h[1], h[2] + h[3]])

    def test_matching_is_maximal(self, rng):
        model = C.ClassifierModel("EdgePool", [0, 1], hidden_dim=4, seed=5)
        for _ in range(10):
            g = asymmetric(rng, 9)
            pooled, states, cluster = C.edge_pool(model, g, rng.normal(size=(9, 4)))
            sizes = np.bincount(cluster)
            assert sizes.max() <= 2 and states.shape == (pooled.node_count, 4)
            singles = set(np.flatnonzero(sizes[cluster] == 1).tolist())
            assert not any(u in singles and v in singles for u, v in g.edges)

    def test_canonical_ranks_ignore_numbering(self, rng):
        shapes = [cycle_graph(7), star_graph(6), random_graph(8, 0.5, rng),
                  Graph(6, [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (0, 3), (1, 4), (2, 5)])]
        for g in shapes:
            def code(h):
                nbrs = [list(x) for x in h.neighbors()]
                r = C._canonical_ranks(np.zeros(h.node_count, dtype=np.int64), nbrs, list(h.edges))
                return sorted(tuple(sorted((int(r[u]), int(r[v])))) for u, v in h.edges)
            want = code(g)
            for _ in range(5):
                assert code(permute(g, rng.permutation(g.node_count))) == want

    def test_no_edges(self):
        model = C.ClassifierModel("EdgePool", [0, 1], hidden_dim=2)
        pooled, states, cluster = C.edge_pool(model, Graph(3, []), np.ones((3, 2)))
        assert pooled.node_count == 3 and cluster.tolist() == [0, 1, 2]

    def test_shape_check(self):
        model = C.ClassifierModel("EdgePool", [0, 1], hidden_dim=2)
        with pytest.raises(ShapeError):
            C.edge_pool(model, path_graph(3), np.ones((2, 2)))


class TestTraining:
    def test_zero_epochs(self):
        model = C.ClassifierModel("GIN0", [0, 1], hidden_dim=4)
        with pytest.raises(ContractViolation):
            C.train_classifier(model, cycles_vs_stars(4), cycles_vs_stars(4), C.ClassifierConfig(epochs=0))

    def test_unseen_validation_class(self):
        model = C.ClassifierModel("GIN0", [0, 1, 2], hidden_dim=4)
        val = LabeledDataset("v", [path_graph(3, 2)])
        with pytest.raises(ClassMismatch):
            C.train_classifier(model, cycles_vs_stars(4), val)

    def test_unknown_label(self):
        model = C.ClassifierModel("GIN0", [0, 1], hidden_dim=4)
        with pytest.raises(ClassMismatch):
            model.class_index(7)

    def test_best_epoch_restored(self):
        train, val = cycles_vs_stars(20, seed=4), cycles_vs_stars(10, seed=5)
        model = C.ClassifierModel("GraphSAGE", [0, 1], hidden_dim=8, seed=1)
        model, rec = C.train_classifier(model, train, val, C.ClassifierConfig(epochs=15, patience=None))
        assert rec.epochs_run == 15
        assert rec.best_epoch == int(np.argmax(rec.val_accuracy)) + 1
        assert C.evaluate(model, val) == max(rec.val_accuracy)

    def test_patience_stops(self):
        train = cycles_vs_stars(20, seed=4)
        model = C.ClassifierModel("GraphSAGE", [0, 1], hidden_dim=8, seed=1)
        _, rec = C.train_classifier(model, train, train, C.ClassifierConfig(epochs=200, patience=3))
        assert rec.epochs_run == rec.best_epoch + 3

    def test_deterministic(self):
        def run():
            model = C.ClassifierModel("GINWithJK", [0, 1], hidden_dim=8, seed=2)
            _, rec = C.train_classifier(model, cycles_vs_stars(16), cycles_vs_stars(8, seed=1), C.ClassifierConfig(epochs=4))
            return rec.losses, rec.val_accuracy
        assert run() == run()

    def test_empty_eval(self):
        with pytest.raises(EmptyDataset):
            C.evaluate(C.ClassifierModel("GIN0", [0, 1]), [])

    def test_predict_labels(self):
        model = C.ClassifierModel("GIN0", ["a", "b"], hidden_dim=4)
        assert set(C.predict(model, [path_graph(3), cycle_graph(4)])) <= {"a", "b"}

    def test_memory_ordering(self):
        graphs = cycles_vs_stars(40).graphs
        est = {k: C.memory_estimate(k, graphs, 11) for k in C.KINDS}
        assert max(est, key=est.get) == "EdgePool" and all(v > 0 for v in est.values())
