import json
import logging

import numpy as np
import pytest

from graphaugment.dataset import (
    LabeledDataset,
    SplitSpec,
    carve_validation,
    combine,
    dataset_to_json,
    largest_remainder,
    load_dataset,
    load_tu,
    save_dataset,
    stratified_split,
    write_tu,
)
from graphaugment.errors import (
    CorruptDataset,
    CorruptFile,
    InsufficientClassSize,
    MissingDatasetFile,
    ParseError,
    UnsupportedVersion,
)
from graphaugment.graph import complete_graph, path_graph, random_graph


def write_files(tmp_path, name, a, indicator, labels, node_labels=None):
    (tmp_path / f"{name}_A.txt").write_text(a)
    (tmp_path / f"{name}_graph_indicator.txt").write_text(indicator)
    (tmp_path / f"{name}_graph_labels.txt").write_text(labels)
    if node_labels is not None:
        (tmp_path / f"{name}_node_labels.txt").write_text(node_labels)


def two_graph_fixture(tmp_path):
    # K3 (nodes 1-3, label 1) and P3 (nodes 4-6, label 2)
    write_files(tmp_path, "TOY", "1, 2\n2, 3\n1, 3\n4, 5\n5, 6\n", "1\n1\n1\n2\n2\n2\n", "1\n2\n")


def make_ds(sizes, name="ds"):
    graphs = []
    for c, n in enumerate(sizes):
        graphs += [path_graph(3 + (i % 3), class_label=c) for i in range(n)]
    return LabeledDataset(name, graphs)


class TestLoadTU:
    def test_two_graphs(self, tmp_path):
        two_graph_fixture(tmp_path)
        ds = load_tu(tmp_path, "TOY")
        assert len(ds) == 2 and ds.class_set == (1, 2)
        assert ds.graphs[0].edges == complete_graph(3).edges
        assert ds.graphs[1].edges == path_graph(3).edges

    def test_reversed_rows_collapse(self, tmp_path):
        write_files(tmp_path, "R", "2, 1\n1, 2\n", "1\n1\n", "0\n")
        assert load_tu(tmp_path, "R").graphs[0].edges == ((0, 1),)

    def test_self_loop_dropped(self, tmp_path, caplog):
        write_files(tmp_path, "S", "1, 1\n1, 2\n", "1\n1\n", "0\n")
        with caplog.at_level(logging.WARNING):
            ds = load_tu(tmp_path, "S")
        assert ds.meta["self_loops_dropped"] == 1
        assert ds.graphs[0].edges == ((0, 1),)
        assert "self-loop" in caplog.text

    def test_whitespace_tolerated(self, tmp_path):
        write_files(tmp_path, "W", " 1 ,2 \n", "1\n1\n", " 3 \n")
        assert load_tu(tmp_path, "W").graphs[0].class_label == 3

    def test_node_labels(self, tmp_path):
        write_files(tmp_path, "N", "1, 2\n", "1\n1\n", "0\n", "5\n7\n")
        assert load_tu(tmp_path, "N").graphs[0].node_labels == (5, 7)

    def test_missing_file(self, tmp_path):
        (tmp_path / "M_A.txt").write_text("1, 2\n")
        with pytest.raises(MissingDatasetFile):
            load_tu(tmp_path, "M")

    def test_unknown_node(self, tmp_path):
        write_files(tmp_path, "C", "1, 3\n", "1\n1\n", "0\n")
        with pytest.raises(CorruptDataset):
            load_tu(tmp_path, "C")

    def test_parse_error_has_line(self, tmp_path):
        write_files(tmp_path, "P", "1, 2\n2, x\n", "1\n1\n", "0\n")
        with pytest.raises(ParseError) as info:
            load_tu(tmp_path, "P")
        assert info.value.line_no == 2

    def test_idempotent_and_write_roundtrip(self, tmp_path, rng):
        ds = LabeledDataset("RT", [random_graph(6, 0.4, rng, class_label=i % 2) for i in range(8)])
        write_tu(ds, tmp_path, "RT")
        a, b = load_tu(tmp_path, "RT"), load_tu(tmp_path, "RT")
        assert a.graphs == b.graphs == ds.graphs


class TestSplit:
    def test_ten_graphs(self):
        raw, real, test = stratified_split(make_ds([5, 5]), SplitSpec((0.8, 0.1, 0.1), 0))
        assert (len(raw), len(real), len(test)) == (8, 1, 1)
        assert sorted(raw.class_counts().values()) == [4, 4]

    def test_deterministic(self):
        ds = make_ds([20, 13])
        a = stratified_split(ds, SplitSpec(seed=4))
        b = stratified_split(ds, SplitSpec(seed=4))
        assert all(x.graphs == y.graphs for x, y in zip(a, b))

    def test_152_fixture(self):
        ds = make_ds([101, 51])  # 66/33 percent of 152
        raw, real, test = stratified_split(ds, SplitSpec((0.8, 0.1, 0.1), 1))
        assert (len(raw), len(real), len(test)) == tuple(largest_remainder(152, (0.8, 0.1, 0.1)))
        assert abs(len(raw) - 121.6) < 1 and abs(len(real) - 15.2) < 1 and abs(len(test) - 15.2) < 1
        for part in (raw, real, test):
            share = part.class_counts()[0] / len(part)
            assert abs(share - 101 / 152) <= 1 / len(part)

    @pytest.mark.parametrize("sizes", [[3, 3], [7, 4, 9], [50, 3], [11, 12, 13, 14]])
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_partition_and_stratification(self, sizes, seed):
        ds = make_ds(sizes)
        parts = stratified_split(ds, SplitSpec((0.8, 0.1, 0.1), seed))
        ids = [id(g) for p in parts for g in p.graphs]
        assert len(ids) == len(set(ids)) == len(ds)
        total = ds.class_counts()
        for part, frac in zip(parts, (0.8, 0.1, 0.1)):
            for c, n in total.items():
                assert abs(part.class_counts().get(c, 0) - n * frac) < 1 + 1e-9
                if len(part):
                    assert abs(part.class_counts().get(c, 0) / len(part) - n / len(ds)) <= 1 / len(part) + 1e-9

    def test_small_class(self):
        with pytest.raises(InsufficientClassSize):
            stratified_split(make_ds([5, 2]))

    def test_bad_fractions(self):
        with pytest.raises(ValueError):
            SplitSpec((0.5, 0.2, 0.2))

    def test_carve_validation(self):
        train, val = carve_validation(make_ds([20, 10]), 0.1, 0)
        assert len(val) == 3 and len(train) == 27
        assert set(val.class_counts()) == {0, 1}


class TestPersistence:
    def test_roundtrip_byte_identical(self, tmp_path):
        two_graph_fixture(tmp_path)
        ds = load_tu(tmp_path, "TOY")
        save_dataset(ds, tmp_path / "a.json")
        back = load_dataset(tmp_path / "a.json")
        assert back.graphs == ds.graphs and back.role == ds.role
        save_dataset(back, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_generated_counts_preserved(self, tmp_path):
        ds = make_ds([4, 6]).with_role("generated")
        save_dataset(ds, tmp_path / "g.json")
        back = load_dataset(tmp_path / "g.json")
        assert back.class_counts() == ds.class_counts() and back.role == "generated"

    def test_version_bump(self, tmp_path):
        doc = json.loads(dataset_to_json(make_ds([2, 2])))
        doc["version"] += 1
        (tmp_path / "v.json").write_text(json.dumps(doc))
        with pytest.raises(UnsupportedVersion):
            load_dataset(tmp_path / "v.json")

    def test_truncated(self, tmp_path):
        text = dataset_to_json(make_ds([2, 2]))
        (tmp_path / "t.json").write_text(text[: len(text) // 2])
        with pytest.raises(CorruptFile):
            load_dataset(tmp_path / "t.json")

    def test_combine(self):
        a, b = make_ds([2, 2], "a"), make_ds([1, 3], "b")
        c = combine("c", a, b)
        assert len(c) == 8 and c.class_counts() == {0: 3, 1: 5}

    def test_invalid_label(self):
        with pytest.raises(CorruptDataset):
            LabeledDataset("x", [path_graph(3, 0)], class_set=(1,))
