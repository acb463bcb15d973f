from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from signsym.errors import ConfigError, DataFormatError, DimensionError
from signsym.retrieval import (RetrievalIndex, average_precision, binarize, hamming,
                               hamming_matrix, index_from_bytes, index_to_bytes, load_index,
                               map_at_k, rank, save_index)


def test_binarize_examples():
    assert binarize([0.3, -0.2, 0.0]).tolist() == [1, -1, -1]
    u = np.random.default_rng(0).normal(size=(5, 32))
    np.testing.assert_array_equal(binarize(binarize(u).astype(float)), binarize(u))
    np.testing.assert_array_equal(binarize(-u), -binarize(u))


def test_hamming_examples():
    a = binarize(np.random.default_rng(1).normal(size=32))
    assert hamming(a, a) == 0
    assert hamming(a, -a) == 32
    with pytest.raises(DimensionError):
        hamming(a, a[:16])


@given(st.integers(1, 64), st.integers(0, 2**31))
def test_hamming_equals_dot_identity(k, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.choice([-1, 1], size=k), rng.choice([-1, 1], size=k)
    assert hamming(a, b) == (k - int(a @ b)) // 2 == hamming_matrix(a, b)[0, 0]


def test_hamming_metric_axioms():
    rng = np.random.default_rng(2)
    a, b, c = (rng.choice([-1, 1], size=(100_000, 32)) for _ in range(3))
    ab, bc, ac = ((x != y).sum(1) for x, y in ((a, b), (b, c), (a, c)))
    assert np.all(ac <= ab + bc)
    assert np.array_equal(ab, (b != a).sum(1))
    assert np.all((ab == 0) == np.all(a == b, axis=1))


def test_rank_examples():
    codes = np.array([[1, 1, 1, 1], [-1, -1, 1, 1], [1, -1, 1, -1], [1, 1, 1, -1]])
    index = RetrievalIndex.build(codes, [0, 1, 2, 3], ids=[40, 30, 20, 10])
    assert rank(codes[1], index)[0] == 30
    equi = RetrievalIndex.build(np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]]), [0, 0, 0, 0],
                                ids=[3, 1, 2, 0])
    # [1, -1] and [-1, 1] are both at distance 1 from [1, 1]
    assert rank([1, 1], equi).tolist() == [3, 0, 2, 1]


def test_rank_matches_sort_oracle():
    rng = np.random.default_rng(3)
    codes = rng.choice([-1, 1], size=(50, 8))
    ids = rng.permutation(1000)[:50]
    index = RetrievalIndex.build(codes, np.zeros(50, dtype=int), ids)
    q = rng.choice([-1, 1], size=8)
    oracle = [i for _, i in sorted((sum(x != y for x, y in zip(q, c)), i)
                                   for c, i in zip(codes, ids))]
    assert rank(q, index).tolist() == oracle
    assert sorted(rank(q, index, depth=50).tolist()) == sorted(ids.tolist())
    assert len(rank(q, index, depth=7)) == 7


def test_empty_index_and_bad_k():
    index = RetrievalIndex.build(np.zeros((0, 4), dtype=int), np.zeros((0, 1), dtype=bool))
    with pytest.raises(ConfigError):
        rank([1, 1, 1, 1], index)
    full = RetrievalIndex.build([[1, 1]], [0])
    with pytest.raises(ConfigError):
        map_at_k([[1, 1]], [0], full, 0)


def test_index_rejects_duplicates_and_non_binary():
    with pytest.raises(ConfigError):
        RetrievalIndex.build([[1, 1], [1, -1]], [0, 1], ids=[5, 5])
    with pytest.raises(ConfigError):
        RetrievalIndex.build([[1, 0]], [0])


def test_map_examples():
    index = RetrievalIndex.build([[1, 1, 1], [-1, -1, -1]], [0, 1])
    assert map_at_k([[1, 1, 1]], [0], index, 5) == 1.0
    assert average_precision(np.array([1, 0, 1, 0, 0], bool), 5) == pytest.approx(5 / 6)
    assert average_precision(np.array([0, 0, 0, 1], bool), 3) == 0.0
    assert map_at_k([[1, 1, 1]], [2], index, 5) == 0.0


def brute_force_map(queries, q_labels, codes, db_labels, ids, k):
    """Independent AP enumeration: python loops, exact sums, set relevance."""
    aps = []
    for q, ql in zip(queries, q_labels):
        scored = sorted((sum(1 for a, b in zip(q, c) if a != b), int(i), set(lab))
                        for c, i, lab in zip(codes, ids, db_labels))
        hits, precisions = 0, []
        for pos, (_, _, lab) in enumerate(scored[:k], start=1):
            if lab & ql:
                hits += 1
                precisions.append(hits / pos)
        if hits:
            aps.append(float(sum(map(Fraction, precisions))) / hits)
        else:
            aps.append(0.0)
    return float(sum(map(Fraction, aps))) / len(aps)


def random_instance(rng):
    n = int(rng.integers(1, 201))
    bits = int(rng.choice([4, 8, 16, 32]))
    n_labels = int(rng.integers(1, 6))
    codes = rng.choice([-1, 1], size=(n, bits))
    db = rng.random((n, n_labels)) < 0.3
    nq = int(rng.integers(1, 12))
    queries = rng.choice([-1, 1], size=(nq, bits))
    ql = rng.random((nq, n_labels)) < 0.4
    ids = rng.permutation(10 * n)[:n]
    k = int(rng.integers(1, n + 5))
    return queries, ql, codes, db, ids, k


def test_map_matches_brute_force_exactly():
    rng = np.random.default_rng(4)
    for _ in range(60):
        queries, ql, codes, db, ids, k = random_instance(rng)
        index = RetrievalIndex.build(codes, db, ids)
        sets = [set(np.flatnonzero(r)) for r in db]
        qsets = [set(np.flatnonzero(r)) for r in ql]
        assert map_at_k(queries, ql, index, k) == brute_force_map(queries, qsets, codes, sets,
                                                                  ids, k)


def test_map_bounds_and_perfect_retrieval():
    rng = np.random.default_rng(5)
    for _ in range(50):
        queries, ql, codes, db, ids, k = random_instance(rng)
        m = map_at_k(queries, ql, RetrievalIndex.build(codes, db, ids), k)
        assert 0.0 <= m <= 1.0
    # every query's top-min(k, #relevant) items relevant -> mAP 1
    codes = np.array([[1, 1, 1, 1]] * 3 + [[-1, -1, -1, -1]] * 3)
    index = RetrievalIndex.build(codes, [0, 0, 0, 1, 1, 1])
    assert map_at_k([[1, 1, 1, -1], [-1, -1, -1, 1]], [0, 1], index, 3) == 1.0


@given(arrays(np.int8, st.tuples(st.integers(0, 20), st.integers(1, 40)),
              elements=st.sampled_from([-1, 1])), st.integers(1, 9))
def test_index_file_roundtrip(codes, n_labels):
    rng = np.random.default_rng(len(codes))
    labels = rng.random((len(codes), n_labels)) < 0.5
    index = RetrievalIndex.build(codes, labels, ids=rng.choice(2**40, size=len(codes), replace=False))
    back = index_from_bytes(index_to_bytes(index))
    np.testing.assert_array_equal(back.codes, index.codes)
    np.testing.assert_array_equal(back.labels, index.labels)
    np.testing.assert_array_equal(back.ids, index.ids)


def test_index_file_layout(tmp_path):
    codes = np.full((1, 32), -1, dtype=np.int8)
    codes[0, 0] = codes[0, 9] = 1
    index = RetrievalIndex.build(codes, np.array([[False, True]]), ids=[7])
    save_index(tmp_path / "i.ssix", index)
    raw = (tmp_path / "i.ssix").read_bytes()
    assert raw[:4] == b"SSIX" and len(raw) == 14 + 8 + 4 + 1
    assert raw[14:22] == (7).to_bytes(8, "little")
    assert raw[22:26] == bytes([0b1, 0b10, 0, 0])
    assert raw[26] == 0b10
    assert load_index(tmp_path / "i.ssix").ids.tolist() == [7]
    with pytest.raises(DataFormatError, match="offset"):
        index_from_bytes(raw[:-1])
    with pytest.raises(DataFormatError):
        index_from_bytes(b"XXXX" + raw[4:])
