import json

import networkx as nx
import numpy as np
import pytest

from reference_grids import CONNECT, CONNECT_N, CONNECT_P, EDGE, EDGE_M, EDGE_R
from ratingimpute.estimatability import is_estimatable
from ratingimpute.synthetic import (BAND, SynthSpec, _batch_connected, connectivity_probability,
                                    connectivity_probability_exact, edge_probability,
                                    effective_edge_probability, generate, load_instance,
                                    random_correlation, to_ratings)


def test_same_seed_same_instance():
    a = generate(SynthSpec(80, 5, 0.5, 0.3, 7))
    b = generate(SynthSpec(80, 5, 0.5, 0.3, 7))
    assert a.truth == b.truth and a.observed == b.observed
    assert generate(SynthSpec(80, 5, 0.5, 0.3, 8)).truth != a.truth


def test_deletion_count_and_rescue():
    inst = generate(SynthSpec(50, 3, 0.3, 0.6, 2))
    miss = inst.observed.missing
    assert inst.deletions_per_column == (30,) * 3
    restored = len(inst.rescued)
    assert miss.sum() == 90 - restored
    assert inst.observed.observed.any(axis=1).all()
    assert (inst.observed.values[~miss] == inst.truth.values[~miss]).all()


def test_low_ratings_deleted_more_often():
    inst = generate(SynthSpec(4000, 4, 0.5, 0.3, 0))
    X, miss = inst.truth.values, inst.observed.missing
    assert miss[X == 1].mean() > miss[X == 5].mean()


def test_ratings_are_categories():
    inst = generate(SynthSpec(200, 4, 0.5, 0.0, 1))
    assert set(np.unique(inst.truth.values)) <= {1.0, 2.0, 3.0, 4.0, 5.0}
    assert to_ratings(np.array([-3.0, -1.0, 0.0, 1.0, 3.0])).tolist() == [1, 2, 3, 4, 5]


@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_correlation_in_band(s):
    rng = np.random.default_rng(0)
    for n in (4, 6, 10):
        C = random_correlation(n, s, rng)
        assert np.allclose(np.diag(C), 1.0)
        assert np.linalg.eigvalsh(C).min() > 0
        off = C[~np.eye(n, dtype=bool)]
        assert off.min() >= s - BAND - 0.05 and off.max() <= s + BAND + 0.05


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(100, 5, 0.9, 0.3, 0)
    with pytest.raises(ValueError):
        SynthSpec(100, 5, 0.5, 1.0, 0)
    with pytest.raises(ValueError):
        SynthSpec(1, 5, 0.5, 0.2, 0)


def test_low_missing_rate_is_estimatable():
    for seed in range(5):
        inst = generate(SynthSpec(100, 6, 0.5, 0.4, seed))
        assert is_estimatable(inst.observed)[0]


def test_save_and_reload(tmp_path):
    inst = generate(SynthSpec(40, 4, 0.5, 0.3, 3))
    truth_p, obs_p, side_p = inst.save(tmp_path, "t")
    meta = json.loads(side_p.read_text())
    assert meta["spec"]["seed"] == 3
    again = load_instance(side_p)
    assert again.observed == inst.observed
    assert truth_p.read_bytes() == (inst.save(tmp_path / "b", "t")[0]).read_bytes()


@pytest.mark.parametrize("i", range(len(EDGE_R)))
def test_edge_probability_grid(i):
    for j, m in enumerate(EDGE_M):
        assert abs(edge_probability(EDGE_R[i], m) - EDGE[i][j]) <= 1e-4


def test_edge_probability_by_simulation():
    rng = np.random.default_rng(0)
    m, r = 50, 0.9
    k = int(r * m)
    hits = 0
    for _ in range(20000):
        a = set(rng.choice(m, m - k, replace=False))
        b = set(rng.choice(m, m - k, replace=False))
        hits += bool(a & b)
    assert abs(hits / 20000 - edge_probability(r, m)) < 0.015


def test_batch_connected_matches_networkx():
    rng = np.random.default_rng(1)
    n = 9
    adj = rng.random((300, n, n)) < 0.18
    adj = np.triu(adj, 1)
    adj = adj | adj.transpose(0, 2, 1)
    ours = _batch_connected(adj)
    ref = [nx.is_connected(nx.from_numpy_array(a.astype(int))) for a in adj]
    assert ours.tolist() == ref


def test_exact_connectivity_small_cases():
    p = 0.3
    q = 1 - effective_edge_probability(p, "undirected")
    # three nodes: connected iff at least two of three edges
    assert connectivity_probability_exact(p, 3, "undirected") == pytest.approx(
        3 * p * p * q + p ** 3)
    assert effective_edge_probability(0.5) == 0.75
    with pytest.raises(ValueError):
        effective_edge_probability(0.5, "directed")


@pytest.mark.parametrize("i", range(len(CONNECT_P)))
def test_exact_connectivity_grid(i):
    for j, n in enumerate(CONNECT_N):
        assert abs(connectivity_probability_exact(CONNECT_P[i], n) - CONNECT[i][j]) <= 0.01


def test_monte_carlo_is_unbiased():
    est, se = connectivity_probability(0.3, 8, trials=20000, rng=5)
    exact = connectivity_probability_exact(0.3, 8)
    assert abs(est - exact) <= 4 * se + 1e-12


def test_monte_carlo_undirected_model():
    est, se = connectivity_probability(0.5, 4, trials=20000, rng=1, edge_model="undirected")
    assert abs(est - connectivity_probability_exact(0.5, 4, "undirected")) <= 4 * se
