import math

import numpy as np
import pytest

from lcdstream.hnsw import DuplicateIdError, EmptyIndexError, HnswIndex, HnswParams, draw_level


def unit(rng, n, d):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def build(vecs, **kw):
    idx = HnswIndex(vecs.shape[1], HnswParams(**kw))
    for i, v in enumerate(vecs):
        idx.insert(i, v)
    return idx


def exact_topk(data, queries, k):
    sims = queries @ data.T
    return np.argsort(-sims, axis=1, kind="stable")[:, :k]


def test_level_of_u_one_is_zero():
    assert draw_level(1.0, 1 / math.log(48)) == 0


# Frozen from np.random.Generator(PCG64(0)): u = 1 - random(), level = floor(-ln u / ln M).
LEVELS_M2_SEED0 = [1, 0, 0, 0, 2, 3, 1, 1, 1, 3]


def test_level_transcript():
    idx = HnswIndex(4, HnswParams(M=2, rng_seed=0))
    assert [idx.assign_level() for _ in range(10)] == LEVELS_M2_SEED0
    idx48 = HnswIndex(4, HnswParams(M=48, rng_seed=0))
    assert [idx48.assign_level() for _ in range(10)] == [0] * 10


def test_level_tail_probability():
    idx = HnswIndex(4, HnswParams(M=48, rng_seed=3))
    levels = np.array([idx.assign_level() for _ in range(100_000)])
    assert abs((levels >= 1).mean() - 1 / 48) <= 0.01


def test_first_insert_is_entry_point():
    idx = HnswIndex(3)
    idx.insert(7, np.array([1.0, 0.0, 0.0]))
    assert idx.entry_point == 7
    for layer in range(idx.level_of(7) + 1):
        assert idx.neighbors(7, layer) == []


def test_second_insert_mutually_linked():
    idx = HnswIndex(3, HnswParams(M=4, rng_seed=1))
    idx.insert(0, np.array([1.0, 0.0, 0.0]))
    idx.insert(1, np.array([0.0, 1.0, 0.0]))
    for layer in range(min(idx.level_of(0), idx.level_of(1)) + 1):
        assert idx.neighbors(0, layer) == [1]
        assert idx.neighbors(1, layer) == [0]


def test_structural_audit_1000():
    rng = np.random.default_rng(0)
    idx = build(unit(rng, 1000, 1280))
    assert idx.audit() == []
    assert idx.reachable(0) == set(range(1000))
    for fid in idx.frame_ids():
        for layer in range(idx.level_of(fid) + 1):
            nb = idx.neighbors(fid, layer)
            assert len(nb) <= (96 if layer == 0 else 48)
            assert fid not in nb and len(set(nb)) == len(nb)


def test_ef_one_two_nodes():
    idx = HnswIndex(2, HnswParams(M=4))
    idx.insert(0, np.array([1.0, 0.0]))
    idx.insert(1, np.array([0.0, 1.0]))
    q = np.array([0.2, 1.0])
    for start in (0, 1):
        assert [f for f, _ in idx.search_layer(q, [start], 1, 0)] == [1]


def test_ef_equal_graph_size_is_exhaustive():
    rng = np.random.default_rng(1)
    data = unit(rng, 60, 16)
    idx = build(data, M=4, ef_construction=20)
    q = unit(rng, 1, 16)[0]
    res = idx.search_layer(q, [17], 60, 0)
    assert sorted(f for f, _ in res) == list(range(60))
    d = [x for _, x in res]
    assert d == sorted(d)


def test_recall_at_50_on_500_points():
    rng = np.random.default_rng(2)
    data = unit(rng, 500, 64)
    queries = unit(rng, 50, 64)
    idx = build(data, M=16, ef_construction=100)
    truth = exact_topk(data, queries, 50)
    hits = 0
    for q, t in zip(queries, truth):
        got = [r.frame_id for r in idx.knn_search(q, 50, ef_search=50)]
        hits += len(set(got) & set(t.tolist()))
    assert hits / (50 * 50) >= 0.9


def test_stored_vector_found_with_similarity_one():
    # counted over trials rather than asserted per query
    rng = np.random.default_rng(3)
    data = unit(rng, 300, 32)
    idx = build(data, M=8, ef_construction=64)
    hits = 0
    for i in rng.choice(300, 100, replace=False):
        r = idx.knn_search(data[i], 1, ef_search=8)[0]
        hits += r.frame_id == i and abs(r.similarity - 1.0) < 1e-9
    assert hits >= 95


def test_single_node_graph():
    idx = HnswIndex(3)
    idx.insert(42, np.array([0.0, 0.0, 2.0]))
    (r,) = idx.knn_search(np.array([1.0, 0.0, 0.0]), 1)
    assert r.frame_id == 42


def test_results_sorted_by_similarity():
    rng = np.random.default_rng(4)
    idx = build(unit(rng, 200, 16), M=8)
    res = idx.knn_search(unit(rng, 1, 16)[0], 10)
    sims = [r.similarity for r in res]
    assert sims == sorted(sims, reverse=True)


def test_errors():
    idx = HnswIndex(3)
    with pytest.raises(EmptyIndexError):
        idx.knn_search(np.ones(3), 1)
    idx.insert(0, np.ones(3))
    with pytest.raises(DuplicateIdError):
        idx.insert(0, np.ones(3))
    with pytest.raises(ValueError):
        idx.knn_search(np.ones(3), 5, ef_search=2)
    with pytest.raises(ValueError):
        idx.insert(1, np.ones(4))


def test_serialization_deterministic():
    data = unit(np.random.default_rng(5), 300, 32)
    a = build(data, M=8, rng_seed=11).serialize()
    b = build(data, M=8, rng_seed=11).serialize()
    c = build(data, M=8, rng_seed=12).serialize()
    assert a == b
    assert a != c


def test_params_validation():
    with pytest.raises(ValueError):
        HnswParams(M=1)
    with pytest.raises(ValueError):
        HnswParams(ef_construction=0)
