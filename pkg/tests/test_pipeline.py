import math

import numpy as np
import pytest

from graphaugment import pipeline as P
from graphaugment.dataset import LabeledDataset, save_dataset
from graphaugment.errors import (ConfigError, EmptyDataset, InsufficientClassSize, IoError, PlanMismatch,
                                 ResourceError)
from graphaugment.generators import GeneratorConfig, train_generator
from graphaugment.graph import Graph, complete_graph, cycle_graph, path_graph, star_graph
from graphaugment.toy import cycles_vs_stars


def small_cfg(**kw):
    base = dict(dataset="unused", conditions=["raw", "real", "gen1"], classifiers=["GIN0", "GraphSAGE"],
                generator={"hidden_dim": 8, "epochs": 3}, classifier={"epochs": 4, "patience": None},
                hidden_dim=8, num_layers=2, split=[0.6, 0.2, 0.2], seed=3)
    base.update(kw)
    return P.ExperimentConfig.from_dict(base)


@pytest.fixture(scope="module")
def toy():
    return cycles_vs_stars(30, sizes=(5, 8), seed=2)


class TestRouting:
    @pytest.mark.parametrize("nodes,edges,verdict,rule", [
        (49.99, 1224.99, "Small", "neither"),
        (50.0, 0.0, "Large", "nodes"),
        (10.0, 1225.0, "Large", "edges"),
        (80.0, 5000.0, "Large", "nodes"),
        (0.0, 0.0, "Small", "neither"),
    ])
    def test_thresholds(self, nodes, edges, verdict, rule):
        d = P.route_generator({"avg_nodes": nodes, "avg_edges": edges})
        assert (d.verdict, d.triggered_rule) == (verdict, rule)
        assert d.generator_kind == ("gran" if verdict == "Large" else "graphrnn")

    def test_from_stats(self):
        from graphaugment.graph import graph_stats
        assert P.route_generator(graph_stats([complete_graph(50)])).triggered_rule == "nodes"
        assert P.route_generator(graph_stats([cycle_graph(8)])).verdict == "Small"


class TestNames:
    def test_conditions(self):
        assert P.canonical_condition("Gen2") == "w/ Gen.2"
        assert P.canonical_condition(" W/ Real ") == "w/ Real"
        with pytest.raises(ConfigError):
            P.canonical_condition("gen4")

    def test_classifiers(self):
        assert P.canonical_classifier("gcnwithjk") == "GCNWithJK"
        with pytest.raises(ConfigError):
            P.canonical_classifier("GAT")

    def test_sub_seed(self):
        assert P.sub_seed(0, "a") == P.sub_seed(0, "a")
        assert len({P.sub_seed(0, "a"), P.sub_seed(0, "b"), P.sub_seed(1, "a")}) == 3


class TestPlans:
    def test_ratio_largest_remainder(self):
        plan = P.AugmentPlan.ratio({0: 3, 1: 4}, 2)
        assert plan.counts == {0: 6, 1: 8} and plan.total == 14
        # 10 split 1:2 gives 3.33 and 6.67; the larger remainder takes the spare unit
        assert P.AugmentPlan.ratio({"a": 1, "b": 2}, 10 / 3).counts == {"a": 3, "b": 7}

    def test_ratio_proportions_brute(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            per = {c: int(rng.integers(1, 20)) for c in range(int(rng.integers(2, 5)))}
            k = int(rng.integers(1, 4))
            counts = P.AugmentPlan.ratio(per, k).counts
            assert counts == {c: k * n for c, n in per.items()}

    def test_fixed(self):
        plan = P.AugmentPlan.fixed_per_class([1, 0], 1024, "gran")
        assert list(plan.counts) == [0, 1] and plan.total == 2048 and plan.generators == {0: "gran", 1: "gran"}

    def test_roundtrip(self):
        plan = P.AugmentPlan.ratio({0: 3, 1: 4}, 3, "graphrnn")
        assert P.AugmentPlan.from_dict(plan.as_dict()) == plan
        with pytest.raises(ConfigError):
            P.AugmentPlan.from_dict({"mode": "ratio"})

    def test_empty_reference(self):
        with pytest.raises(EmptyDataset):
            P.AugmentPlan.ratio({}, 1)


class TestGeneration:
    def test_counts_and_labels(self, toy):
        cfg = GeneratorConfig(hidden_dim=6, epochs=1)
        gens = P.train_per_class_generators(toy, P.route_generator(toy.stats()), cfg, seed=1)
        assert set(gens) == {0, 1}
        plan = P.AugmentPlan.ratio({0: 2, 1: 3}, 2)
        out = P.generate_augmentation(gens, plan, np.random.default_rng(0))
        assert out.class_counts() == {0: 4, 1: 6} and out.role == "generated"

    def test_missing_generator(self, toy):
        gen = train_generator("graphrnn", toy.by_class()[0], 0, GeneratorConfig(hidden_dim=4, epochs=1))
        with pytest.raises(PlanMismatch):
            P.generate_augmentation({0: gen}, P.AugmentPlan("counts", {0: 1, 1: 1}), np.random.default_rng(0))

    def test_tiny_class(self):
        ds = LabeledDataset("t", [cycle_graph(4, 0), cycle_graph(5, 0), path_graph(3, 1)])
        with pytest.raises(InsufficientClassSize):
            P.train_per_class_generators(ds, P.route_generator(ds.stats()))


class TestDegreeMMD:
    @staticmethod
    def brute(a, b, sigma=1.0):
        width = 1 + max(max(g.degrees()) for g in a + b)

        def hist(g):
            h = [0.0] * width
            for d in g.degrees():
                h[d] += 1.0 / g.node_count
            return h

        def k(x, y):
            return math.exp(-sum((p - q) ** 2 for p, q in zip(x, y)) / (2 * sigma ** 2))

        ha, hb = [hist(g) for g in a], [hist(g) for g in b]
        mean = lambda xs, ys: sum(k(x, y) for x in xs for y in ys) / (len(xs) * len(ys))  # noqa: E731
        return mean(ha, ha) + mean(hb, hb) - 2 * mean(ha, hb)

    def test_against_loops(self):
        a = [cycle_graph(5), path_graph(4), star_graph(3)]
        b = [complete_graph(4), path_graph(6)]
        assert P.degree_mmd(a, b) == pytest.approx(self.brute(a, b), abs=1e-12)
        assert P.degree_mmd(a, b, sigma=0.3) == pytest.approx(self.brute(a, b, 0.3), abs=1e-12)

    def test_identity_and_symmetry(self):
        a = [cycle_graph(5), path_graph(4)]
        b = [star_graph(4)]
        assert P.degree_mmd(a, a) == pytest.approx(0.0, abs=1e-15)
        assert P.degree_mmd(a, b) == pytest.approx(P.degree_mmd(b, a), abs=1e-15)
        assert P.degree_mmd(a, b) > 0

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            P.degree_mmd([], [cycle_graph(3)])


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            P.ExperimentConfig.from_dict({"dataset": "x", "colour": 1})

    def test_missing_dataset(self):
        with pytest.raises(ConfigError):
            P.ExperimentConfig.from_dict({})

    def test_bad_generator_key(self):
        with pytest.raises(ConfigError):
            P.ExperimentConfig.from_dict({"dataset": "x", "generator": {"layers": 3}})

    def test_bad_split(self):
        with pytest.raises(ConfigError):
            P.ExperimentConfig.from_dict({"dataset": "x", "split": [0.5, 0.6, 0.1]})

    def test_yaml(self, tmp_path):
        (tmp_path / "c.yaml").write_text("dataset: d.json\nconditions: [raw, gen2]\nclassifiers: [gin0]\n")
        cfg = P.ExperimentConfig.load(tmp_path / "c.yaml")
        assert cfg.conditions == ("raw-data", "w/ Gen.2") and cfg.classifiers == ("GIN0",)
        assert cfg.base_dir == str(tmp_path)
        (tmp_path / "bad.yaml").write_text("dataset: [unclosed\n")
        with pytest.raises(ConfigError):
            P.ExperimentConfig.load(tmp_path / "bad.yaml")

    def test_dataset_resolution(self, tmp_path, monkeypatch, toy):
        save_dataset(toy, tmp_path / "toy.json")
        monkeypatch.setenv(P.DATA_DIR_ENV, str(tmp_path))
        assert len(P.load_any("toy")) == len(toy)


class TestExperiment:
    def test_grid_and_determinism(self, toy):
        a = P.run_experiment(small_cfg(), toy)
        b = P.run_experiment(small_cfg(workers=3), toy)
        assert P.report_csv(a) == P.report_csv(b)
        assert a.to_json() == b.to_json()
        assert a.conditions == ["raw-data", "w/ Real", "w/ Gen.1"]
        sizes = a.meta["sizes"]
        assert sizes["raw"] + sizes["sub_real"] + sizes["test"] == len(toy)
        assert a.meta["train_sizes"]["w/ Gen.1"] == sizes["raw_train"] + sizes["sub_real"]
        for cell in a.cells.values():
            assert cell.status == "ok" and 0 <= cell.accuracy <= 1 and 1 <= cell.epoch <= 4

    def test_seed_changes_split(self, toy):
        a = P.run_experiment(small_cfg(conditions=["raw"]), toy)
        b = P.run_experiment(small_cfg(conditions=["raw"], seed=4), toy)
        assert a.meta["test_digest"] != b.meta["test_digest"]

    def test_oom_cells(self, toy):
        from graphaugment.dataset import SplitSpec, carve_validation, stratified_split
        raw, _, _ = stratified_split(toy, SplitSpec((0.6, 0.2, 0.2), P.sub_seed(3, "split")))
        train, _ = carve_validation(raw, 0.1, P.sub_seed(3, "validation"))
        est = {k: P.clf.memory_estimate(k, train.graphs, 11, 8, 2, 32) for k in ("GIN0", "EdgePool")}
        budget = (est["GIN0"] + est["EdgePool"]) / 2 / 2 ** 20
        assert est["GIN0"] < est["EdgePool"]
        rep = P.run_experiment(small_cfg(conditions=["raw"], classifiers=["GIN0", "EdgePool"],
                                         memory_budget_mb=budget), toy)
        assert rep.cell("raw-data", "EdgePool").status == "OOM"
        assert rep.cell("raw-data", "GIN0").status == "ok"
        assert P.report_csv(rep).splitlines()[1].endswith("OOM,OOM")

    def test_all_oom(self, toy):
        with pytest.raises(ResourceError):
            P.run_experiment(small_cfg(memory_budget_mb=1e-6), toy)

    def test_run_roundtrip(self, toy, tmp_path):
        rep = P.run_experiment(small_cfg(conditions=["raw"], classifiers=["GIN0"]), toy)
        P.write_run(rep, tmp_path / "run", small_cfg(), plot=True)
        back = P.read_run(tmp_path / "run")
        assert P.report_csv(back) == (tmp_path / "run" / "report.csv").read_text()
        svg = (tmp_path / "run" / "summary.svg").read_text()
        P.emit_report(back, tmp_path / "again.svg", "svg")
        assert (tmp_path / "again.svg").read_text() == svg

    def test_csv_layout(self):
        rep = P.ExperimentReport("d", ["raw-data", "w/ Real"], ["GIN0"], {
            ("raw-data", "GIN0"): P.Cell("ok", 0.87654, 12),
            ("w/ Real", "GIN0"): P.Cell("skipped"),
        })
        assert P.report_csv(rep) == "condition,GIN0 Acc.,GIN0 Epoch\nraw-data,0.877,12\nw/ Real,-,-\n"
        assert P.ExperimentReport.from_json(rep.to_json()).cells == rep.cells

    def test_unwritable(self, tmp_path):
        rep = P.ExperimentReport("d", ["raw-data"], ["GIN0"], {("raw-data", "GIN0"): P.Cell("ok", 1.0, 1)})
        (tmp_path / "file").write_text("x")
        with pytest.raises(IoError):
            P.emit_report(rep, tmp_path / "file" / "r.csv")
        with pytest.raises(ConfigError):
            P.emit_report(rep, tmp_path / "r.pdf", "pdf")
