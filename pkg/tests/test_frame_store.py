import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lcdstream.formats import iter_records, read_ground_truth, write_container, write_ground_truth, write_jsonl
from lcdstream.frame_store import (
    ConvFoldInput,
    DimensionMismatchError,
    FrameStore,
    GlobalDescriptor,
    MalformedRecordError,
    RawFrame,
    ZeroVectorError,
    cosine_similarity,
    fold_batchnorm,
)


def record(rng, D=1280, K=312, d=128, t=0.0):
    return RawFrame(t, rng.standard_normal(D), rng.uniform(0, 640, (K, 2)), rng.standard_normal((K, d)))


def test_ingest_assigns_sequential_ids():
    rng = np.random.default_rng(0)
    store = FrameStore(1280, 128)
    f0 = store.ingest_frame(record(rng))
    f1 = store.ingest_frame(record(rng, t=0.1))
    assert (f0.id, f1.id) == (0, 1)
    assert f1.n_locals == 312
    assert len(store) == 2 and store[1] is f1


def test_dimension_mismatch():
    store = FrameStore(1280, 128)
    with pytest.raises(DimensionMismatchError):
        store.ingest_frame(record(np.random.default_rng(1), D=1279))
    assert len(store) == 0


def test_zero_global_vector_rejected():
    rec = record(np.random.default_rng(2))
    rec.global_values = np.zeros(1280)
    with pytest.raises(ZeroVectorError):
        FrameStore().ingest_frame(rec)


def test_keypoint_count_must_match_locals():
    rec = record(np.random.default_rng(3))
    rec.keypoints = rec.keypoints[:-1]
    with pytest.raises(MalformedRecordError):
        FrameStore().ingest_frame(rec)


def test_codes_attach_once_and_release_floats():
    rng = np.random.default_rng(4)
    store = FrameStore(16, 8, keep_float_locals=False)
    f = store.ingest_frame(record(rng, D=16, K=5, d=8))
    store.attach_codes(f.id, np.zeros((5, 32), np.uint8), np.zeros((5, 6), np.int64))
    assert store[0].locals is None
    with pytest.raises(ValueError):
        store.attach_codes(f.id, np.zeros((5, 32), np.uint8), np.zeros((5, 6), np.int64))


def test_cosine_trivial_cases():
    v = np.array([0.3, -2.0, 5.0])
    assert abs(cosine_similarity(v, v) - 1.0) < 1e-9
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_against_direct_computation():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a, b = rng.standard_normal((2, 1280))
        ref = float(a @ b) / (np.sqrt(a @ a) * np.sqrt(b @ b))
        assert abs(cosine_similarity(a, b) - ref) < 1e-9


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 12, elements=finite), arrays(np.float64, 12, elements=finite),
       st.floats(1e-3, 1e3))
def test_cosine_symmetric_bounded_scale_invariant(a, b, s):
    if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
        return
    ab = cosine_similarity(a, b)
    assert ab == cosine_similarity(b, a)
    assert -1.0 <= ab <= 1.0
    assert abs(cosine_similarity(s * a, b) - ab) < 1e-9


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        cosine_similarity(np.ones(3), np.ones(4))


def test_zero_vector_descriptor():
    with pytest.raises(ZeroVectorError):
        GlobalDescriptor.from_values(np.zeros(4))


def test_fold_identity_bn():
    rng = np.random.default_rng(6)
    w, b = rng.standard_normal((8, 8)), rng.standard_normal(8)
    wf, bf = fold_batchnorm(ConvFoldInput(w, b, np.eye(8), np.zeros(8)))
    np.testing.assert_array_equal(wf, w)
    np.testing.assert_array_equal(bf, b)


def test_fold_matches_two_stage():
    rng = np.random.default_rng(7)
    w, b, wbn, bbn = rng.standard_normal((8, 8)), rng.standard_normal(8), rng.standard_normal((8, 8)), rng.standard_normal(8)
    wf, bf = fold_batchnorm(ConvFoldInput(w, b, wbn, bbn))
    for f in rng.standard_normal((50, 8)):
        two = wbn @ (w @ f + b) + bbn
        assert np.linalg.norm(wf @ f + bf - two) <= 1e-6 * np.linalg.norm(two)


def test_fold_annihilated_channel():
    rng = np.random.default_rng(8)
    wbn = np.diag(rng.uniform(0.5, 2, 8))
    wbn[3, 3] = 0.0
    bbn = rng.standard_normal(8)
    wf, bf = fold_batchnorm(ConvFoldInput(rng.standard_normal((8, 8)), rng.standard_normal(8), wbn, bbn))
    for f in rng.standard_normal((50, 8)):
        assert (wf @ f + bf)[3] == bbn[3]


def test_fold_shape_check():
    with pytest.raises(ValueError):
        fold_batchnorm(ConvFoldInput(np.ones((4, 3)), np.ones(4), np.ones((5, 5)), np.ones(5)))


@pytest.mark.parametrize("writer", ["container", "jsonl"])
def test_record_round_trip(tmp_path, writer):
    rng = np.random.default_rng(9)
    recs = [record(rng, D=32, K=k, d=16, t=0.1 * i) for i, k in enumerate([5, 0, 7])]
    path = tmp_path / "data"
    if writer == "container":
        write_container(path, recs, 32, 16)
    else:
        write_jsonl(path, recs)
    back = list(iter_records(path))
    assert len(back) == 3
    for a, b in zip(recs, back):
        assert a.timestamp == b.timestamp
        np.testing.assert_allclose(b.global_values, a.global_values, rtol=1e-6)
        np.testing.assert_allclose(b.keypoints, a.keypoints, rtol=1e-6)
        assert b.locals.shape == a.locals.shape


def test_truncated_container(tmp_path):
    rng = np.random.default_rng(10)
    path = tmp_path / "d.fild"
    write_container(path, [record(rng, D=32, K=4, d=16)], 32, 16)
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(ValueError):
        list(iter_records(path))


def test_ground_truth_round_trip(tmp_path):
    rows = [(500, 50, 52), (501, 51, 51)]
    write_ground_truth(tmp_path / "gt.txt", rows)
    assert [tuple(r) for r in read_ground_truth(tmp_path / "gt.txt")] == rows
