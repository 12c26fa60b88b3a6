import itertools
import pathlib

import numpy as np
import pytest

import falcon_search as fs

DATA = pathlib.Path(__file__).resolve().parents[2] / "data" / "spaces"


@pytest.fixture(scope="module")
def toy():
    return fs.DesignSpace.load(str(DATA / "toy.json"))


@pytest.fixture(scope="module")
def node_level():
    return fs.DesignSpace.load(str(DATA / "node_level.json"))


def test_space_round_trip(toy):
    assert len(toy) == 6
    for i in range(len(toy)):
        assert toy.id_of(toy.design(i)) == i
    again = fs.DesignSpace.from_dict(toy.to_dict())
    assert [again.design(i) for i in range(6)] == [toy.design(i) for i in range(6)]


def test_neighbors_are_distance_one(toy):
    for i in range(len(toy)):
        ids = [j for j, _ in toy.neighbors(i)]
        expected = [j for j in range(len(toy)) if toy.distance(i, j) == 1]
        assert sorted(ids) == expected


def test_graph_stats(toy, node_level):
    stats = fs.graph_stats(toy)
    assert stats["node_count"] == 6
    assert stats["diameter"] == 2
    big = fs.graph_stats(node_level)
    assert big["node_count"] == 5832
    assert big["diameter"] == 13


def test_multi_hop_excludes_seeds(toy):
    assert fs.multi_hop_neighbors(toy, [0], 1) == sorted(j for j, _ in toy.neighbors(0))
    assert 0 not in fs.multi_hop_neighbors(toy, [0], 3)


def test_label_propagation_matches_dense_oracle():
    rng = np.random.default_rng(3)
    n = 7
    a = np.zeros((n, n))
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() < 0.5:
            a[u, v] = a[v, u] = 1.0
    offsets, adjacency = [0], []
    for u in range(n):
        adjacency += [v for v in range(n) if a[u, v]]
        offsets.append(len(adjacency))
    y0 = rng.random((n, 3))
    alpha, steps = 0.8, 4
    deg = a.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    s = inv[:, None] * a * inv[None, :]
    oracle = np.linalg.matrix_power(alpha * s + (1 - alpha) * np.eye(n), steps) @ y0
    got = fs.label_propagate(offsets, adjacency, y0, alpha, steps)
    assert np.allclose(got, oracle, atol=1e-12)


def test_ranking_loss_prefers_order():
    targets = [0.1, 0.4, 0.9]
    assert fs.ranking_loss([0.1, 0.4, 0.9], targets) < fs.ranking_loss([0.9, 0.4, 0.1], targets)


def test_search_budget_and_determinism(node_level):
    a = fs.search(node_level, "synthetic:7:0.01", "falcon", 30, 5)
    b = fs.search(node_level, "synthetic:7:0.01", "falcon", 30, 5)
    assert a["warmup_evaluations"] == 30
    assert len(a["full_evaluations"]) == fs.top_k_size(30) == 3
    assert a["trajectory_csv"] == b["trajectory_csv"]
    assert a["best_so_far"] == sorted(a["best_so_far"])


def test_search_with_python_callable(toy):
    calls = []

    def evaluate(design_id, phase, units):
        calls.append(phase)
        return design_id / 5.0

    result = fs.search_callable(toy, evaluate, strategy="random", budget=6, seed=2)
    assert calls.count("warmup") == 6
    assert calls.count("full") == 1
    assert result["best"]["design_id"] == 5


def test_errors_are_typed(toy):
    with pytest.raises(fs.ConfigError):
        fs.search(toy, "bogus:1", "random", 4)
    with pytest.raises(fs.ConfigError):
        fs.search(toy, "synthetic:1:0.1", "random", 40)
    with pytest.raises(fs.FalconError):
        fs.DesignSpace.parse("{")
