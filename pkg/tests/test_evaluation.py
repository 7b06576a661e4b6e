import numpy as np
import pytest

from lcdstream.evaluation.scoring import score
from lcdstream.evaluation.sweep import AXES, configure, sweep
from lcdstream.evaluation.synthetic import SyntheticConfig, generate_synthetic
from lcdstream.frame_store import cosine_similarity
from lcdstream.geometry import sampson_error
from lcdstream.hnsw import HnswParams
from lcdstream.pipeline import PipelineConfig

SMALL = dict(n_frames=600, revisits=((300, 200, 250),), fps=1.0, psi=40, global_dim=64, local_dim=32)


def small_base(**kw):
    cfg = dict(psi=40, phi=1.0, global_dim=64, local_dim=32, hnsw=HnswParams(M=8, ef_construction=40))
    cfg.update(kw)
    return PipelineConfig(**cfg)


def test_noise_free_revisit_has_unit_similarity():
    ds = generate_synthetic(SyntheticConfig(**SMALL, global_noise=0.0, locals_per_frame=40))
    assert len(ds.sources) == 200
    for t, src in ds.sources.items():
        sim = cosine_similarity(ds.records[t].global_values, ds.records[src].global_values)
        assert abs(sim - 1.0) < 1e-9


def test_revisit_geometry_matches_planted_model():
    ds = generate_synthetic(SyntheticConfig(**SMALL, locals_per_frame=60, keypoint_noise=0.0, seed=2))
    t = 350
    assert ds.sources[t] == 100
    # ground truth lists the source range for every revisit query
    assert (t, 100, 100) in [tuple(r) for r in ds.ground_truth]
    F = ds.fundamentals[t]
    assert F.shape == (3, 3) and abs(np.linalg.norm(F) - 1) < 1e-9
    # the shared fraction of keypoints lies on epipolar lines (up to float32 storage)
    src, cur = ds.records[100].keypoints, ds.records[t].keypoints
    err = sampson_error(F, src[:, None, :].repeat(len(cur), 1).reshape(-1, 2), np.tile(cur, (len(src), 1)))
    assert (err.reshape(len(src), len(cur)) < 1e-4).any(axis=1).sum() >= 40


def test_offset_below_window_rejected():
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticConfig(**{**SMALL, "revisits": ((300, 10, 39),)}))
    ds = generate_synthetic(SyntheticConfig(**{**SMALL, "revisits": ((300, 10, 40),)}, locals_per_frame=20))
    assert ds.sources[300] == 260


def test_generator_is_deterministic():
    a = generate_synthetic(SyntheticConfig(**SMALL, locals_per_frame=20, seed=5))
    b = generate_synthetic(SyntheticConfig(**SMALL, locals_per_frame=20, seed=5))
    for ra, rb in zip(a.records, b.records):
        np.testing.assert_array_equal(ra.global_values, rb.global_values)
        np.testing.assert_array_equal(ra.locals, rb.locals)
        np.testing.assert_array_equal(ra.keypoints, rb.keypoints)


def test_score_perfect():
    gt = [(500, 100, 100), (501, 101, 101)]
    r = score([(500, 100), (501, 101)], gt)
    assert (r.precision, r.recall) == (1.0, 1.0)


def test_score_empty_detections():
    r = score([], [(500, 100, 100)])
    assert (r.precision, r.recall) == (1.0, 0.0)


def test_score_hand_fixture():
    gt = [(500, 100, 104), (501, 101, 105), (502, 102, 106), (503, 103, 107)]
    dets = [(500, 110), (501, 101), (650, 20)]  # 110 is within tolerance; 650 is not a loop
    r = score(dets, gt, tolerance_frames=10)
    assert (r.true_positives, r.false_positives, r.false_negatives) == (2, 1, 2)
    assert r.precision == pytest.approx(2 / 3)
    assert r.recall == 0.5


def test_score_outside_tolerance_is_false_positive():
    r = score([(500, 130)], [(500, 100, 104)], tolerance_frames=10)
    assert (r.true_positives, r.false_positives, r.false_negatives) == (0, 1, 1)


def test_score_requires_sorted_input():
    with pytest.raises(ValueError):
        score([(501, 1), (500, 1)], [(500, 1, 1)])


def test_configure_axes():
    base = PipelineConfig()
    assert configure(base, "M", 6).hnsw.M == 6
    assert configure(base, "ef_search", 80).hnsw.ef_search == 80
    assert configure(base, "m", 128).hash_bits == 128
    assert configure(base, "epsilon", 0.5).epsilon == 0.5
    assert configure(base, "n", 3).n == 3
    assert base.hnsw.M == 48
    with pytest.raises(ValueError):
        configure(base, "tau", 3)
    assert set(AXES) == {"M", "ef_search", "m", "epsilon", "n"}


@pytest.fixture(scope="module")
def hard_dataset():
    return generate_synthetic(SyntheticConfig(**SMALL, locals_per_frame=100, bit_flip_rate=0.15, seed=1))


def test_epsilon_sweep_recall_non_decreasing(hard_dataset):
    res = sweep("epsilon", [0.4, 0.5, 0.6, 0.7, 0.8], hard_dataset.records, hard_dataset.ground_truth, small_base())
    rec = res.recalls()
    assert rec == sorted(rec)
    assert rec[0] < rec[-1]
    assert all(r["precision"] == 1.0 for r in res.rows)
    assert res.pr_csv().splitlines()[0].startswith("epsilon,tp,fp,fn,precision,recall")


def test_more_candidates_never_lose_recall(hard_dataset):
    res = sweep("n", [1, 2], hard_dataset.records, hard_dataset.ground_truth, small_base(epsilon=0.6))
    r1, r2 = res.recalls()
    assert r2 >= r1


def test_graph_insert_time_grows_with_M():
    # full-size globals and a few thousand nodes: smaller graphs let the deeper M=6 hierarchy dominate
    cfg = {**SMALL, "n_frames": 3000, "revisits": ((1500, 1000, 1500),), "global_dim": 1280}
    ds = generate_synthetic(SyntheticConfig(**cfg, locals_per_frame=30))
    base = PipelineConfig(psi=40, phi=1.0, global_dim=1280, local_dim=32)
    res = sweep("M", [6, 48], ds.records, ds.ground_truth, base)
    t6, t48 = (row["add_feature"] for row in res.timings)
    assert t48 > t6
