import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ilhash.codes import CodeMatrix
from ilhash.data import (AffinitySet, SubsetAffinityBuilder, as_features, as_labels, build_affinities_supervised,
                         build_affinities_unsupervised, knn_euclidean, synth_dataset)
from ilhash.io import load_features, load_labels, save_features, save_labels


def pair_dict(aff):
    return {(int(a), int(b)): int(y) for a, b, y in zip(aff.n, aff.m, aff.y)}


class TestValidation:
    @pytest.mark.parametrize("X", [np.zeros((0, 3)), np.zeros(4), [[np.nan, 1.0]], [[np.inf]]])
    def test_bad_features(self, X):
        with pytest.raises(ValueError):
            as_features(X)

    def test_bad_labels(self):
        with pytest.raises(ValueError):
            as_labels([0, -1])
        with pytest.raises(ValueError):
            as_labels([0, 1], n_points=3)
        with pytest.raises(ValueError):
            as_labels([0.5, 1.0])


class TestAffinitySet:
    def test_rejects_self_pairs_and_duplicates(self):
        with pytest.raises(ValueError):
            AffinitySet([0], [0], [1], 2)
        with pytest.raises(ValueError):
            AffinitySet([0, 1], [1, 0], [1, 1], 2)
        with pytest.raises(ValueError):
            AffinitySet([0], [5], [1], 2)
        with pytest.raises(ValueError):
            AffinitySet([0], [1], [0], 2)

    def test_first_label_wins_and_conflicts_counted(self):
        aff = AffinitySet.from_pairs([0, 1, 2, 0], [1, 0, 3, 1], [1, -1, -1, 1], 4)
        assert pair_dict(aff) == {(0, 1): 1, (2, 3): -1}
        assert aff.n_conflicts == 1

    def test_symmetric_lookup(self):
        aff = AffinitySet.from_pairs([3, 0], [1, 2], [1, -1], 4)
        assert aff.get(1, 3) == aff.get(3, 1) == 1
        assert aff.get(2, 0) == -1 and aff.get(0, 3) is None

    def test_restrict_reindexes(self):
        aff = AffinitySet.from_pairs([0, 1, 2], [1, 2, 3], [1, -1, 1], 4)
        sub = aff.restrict([1, 2, 3])
        assert pair_dict(sub) == {(0, 1): -1, (1, 2): 1}
        assert sub.n_points == 3

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=25), st.integers(0, 2**32 - 1))
    def test_restrict_with_repeats_matches_definition(self, idx, seed):
        r = np.random.default_rng(seed)
        n, m = r.integers(0, 10, 30), r.integers(0, 10, 30)
        aff = AffinitySet.from_pairs(n, m, r.choice([-1, 1], 30), 10)
        sub = aff.restrict(idx)
        expect = {}
        for p in range(len(idx)):
            for q in range(p + 1, len(idx)):
                y = aff.get(idx[p], idx[q]) if idx[p] != idx[q] else None
                if y is not None:
                    expect[(p, q)] = y
        assert pair_dict(sub) == expect

    def test_tsv_round_trip(self, tmp_path):
        aff = AffinitySet.from_pairs([0, 2, 1], [3, 1, 3], [1, -1, -1], 4)
        aff.to_tsv(tmp_path / "a.tsv")
        back = AffinitySet.from_tsv(tmp_path / "a.tsv", 4)
        assert pair_dict(back) == pair_dict(aff)


class TestSupervised:
    def test_forced_pairs(self):
        X = np.arange(8.0).reshape(4, 2)
        aff = build_affinities_supervised(X, [0, 0, 1, 1], 1, 1, seed=3)
        pos = {k for k, v in pair_dict(aff).items() if v == 1}
        assert pos == {(0, 1), (2, 3)}

    def test_counts_before_dedup(self):
        X, labels = synth_dataset(4, 3, 80, 0.3, 0)
        aff = build_affinities_supervised(X, labels, 5, 7, seed=1)
        # each point originates 5 + 7 pairs; dedup can only remove some
        assert len(aff) <= 80 * 12
        for a, b, y in zip(aff.n, aff.m, aff.y):
            assert (labels[a] == labels[b]) == (y == 1)

    def test_per_point_partner_counts(self):
        labels = np.repeat([0, 1, 2], [3, 10, 10])
        X = np.zeros((23, 1))
        aff = build_affinities_supervised(X, labels, 4, 6, seed=0)
        # a point in the 3-member class has only 2 same-class partners
        pos_of_0 = {b for a, b, y in zip(aff.n, aff.m, aff.y) if y == 1 and a == 0}
        assert pos_of_0 <= {1, 2}

    def test_deterministic(self):
        X, labels = synth_dataset(3, 2, 60, 0.5, 0)
        a = build_affinities_supervised(X, labels, 10, 10, seed=4)
        b = build_affinities_supervised(X, labels, 10, 10, seed=4)
        assert np.array_equal(a.n, b.n) and np.array_equal(a.m, b.m) and np.array_equal(a.y, b.y)

    def test_single_class_fails(self):
        with pytest.raises(ValueError):
            build_affinities_supervised(np.zeros((3, 1)), [1, 1, 1])

    def test_singleton_class_warns(self, caplog):
        aff = build_affinities_supervised(np.zeros((4, 1)), [0, 1, 1, 1], 2, 2)
        assert "single member" in caplog.text
        assert all(y == -1 for a, b, y in zip(aff.n, aff.m, aff.y) if 0 in (a, b))


class TestUnsupervised:
    def test_collinear(self):
        X = np.array([[0.0], [1.0], [10.0]])
        pos = {k for k, v in pair_dict(build_affinities_unsupervised(X, 1, 1, 0)).items() if v == 1}
        assert (0, 1) in pos and (1, 2) in pos

    def test_duplicates_tie_break(self):
        X = np.array([[0.0], [0.0], [0.0], [5.0], [6.0], [7.0]])
        a = build_affinities_unsupervised(X, 1, 1, 0)
        b = build_affinities_unsupervised(X, 1, 1, 0)
        assert pair_dict(a) == pair_dict(b)
        # among equally near duplicates the lowest index is the neighbour
        pos = {k for k, v in pair_dict(a).items() if v == 1}
        assert {(0, 1), (0, 2)} <= pos and (1, 2) not in pos

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            build_affinities_unsupervised(np.zeros((3, 1)), 3, 0)

    def test_negatives_are_non_neighbours(self):
        X = np.random.default_rng(0).normal(size=(40, 3))
        nn = knn_euclidean(X, X, 6)
        aff = build_affinities_unsupervised(X, 5, 5, seed=2)
        neigh = {(min(p, q), max(p, q)) for p in range(40) for q in nn[p][nn[p] != p][:5].tolist()}
        for a, b, y in zip(aff.n, aff.m, aff.y):
            assert ((int(a), int(b)) in neigh) == (y == 1)


class TestKnn:
    def test_matches_naive(self):
        r = np.random.default_rng(1)
        Q, B = r.integers(0, 3, (15, 2)).astype(float), r.integers(0, 3, (30, 2)).astype(float)
        got = knn_euclidean(Q, B, 7, chunk=4)
        for q in range(15):
            d = [(float(np.sum((Q[q] - B[i]) ** 2)), i) for i in range(30)]
            assert got[q].tolist() == [i for _, i in sorted(d)[:7]]


class TestSynth:
    def test_zero_spread(self):
        X, labels = synth_dataset(2, 2, 4, 0.0, 0)
        assert labels.tolist() == [0, 0, 1, 1]
        assert np.array_equal(X[0], X[1]) and np.array_equal(X[2], X[3])
        assert np.linalg.norm(X[0] - X[2]) == pytest.approx(1.0)

    def test_unit_separation(self):
        X, labels = synth_dataset(10, 32, 10, 0.0, 3)
        d = np.linalg.norm(X[:, None] - X[None], axis=-1)
        assert np.allclose(d[~np.eye(10, dtype=bool)], 1.0)

    def test_balanced_and_deterministic(self):
        X, labels = synth_dataset(3, 4, 11, 0.5, 9)
        assert np.bincount(labels).tolist() == [4, 4, 3]
        X2, _ = synth_dataset(3, 4, 11, 0.5, 9)
        assert np.array_equal(X, X2)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            synth_dataset(1, 2, 4)
        with pytest.raises(ValueError):
            synth_dataset(5, 2, 4)


class TestSubsetBuilder:
    def test_independent_of_request_order(self):
        b = SubsetAffinityBuilder(np.arange(60) % 3, 5, 5, seed=1)
        i1, i2 = np.arange(0, 60, 2), np.arange(1, 60, 2)
        a1 = pair_dict(b.restrict(i1))
        b.restrict(i2)
        assert pair_dict(b.restrict(i1)) == a1

    def test_labels_respected(self):
        labels = np.arange(60) % 3
        idx = np.arange(10, 50)
        sub = SubsetAffinityBuilder(labels, 4, 4, 0).restrict(idx)
        for a, b, y in zip(sub.n, sub.m, sub.y):
            assert (labels[idx[a]] == labels[idx[b]]) == (y == 1)


class TestFiles:
    def test_feature_round_trip(self, tmp_path):
        X = np.random.default_rng(0).normal(size=(7, 3)).astype(np.float32)
        save_features(tmp_path / "x.ilhf", X)
        raw = (tmp_path / "x.ilhf").read_bytes()
        assert raw[:4] == b"ILHF" and len(raw) == 4 + 16 + 7 * 3 * 4
        assert np.array_equal(load_features(tmp_path / "x.ilhf"), X.astype(np.float64))

    def test_csv(self, tmp_path):
        (tmp_path / "x.csv").write_text("1,2\n3,4\n")
        assert load_features(tmp_path / "x.csv").tolist() == [[1, 2], [3, 4]]

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(ValueError):
            load_features(tmp_path / "x.bin")

    def test_truncated(self, tmp_path):
        save_features(tmp_path / "x.ilhf", np.ones((4, 4)))
        data = (tmp_path / "x.ilhf").read_bytes()
        (tmp_path / "x.ilhf").write_bytes(data[:-3])
        with pytest.raises(ValueError):
            load_features(tmp_path / "x.ilhf")

    def test_labels(self, tmp_path):
        save_labels(tmp_path / "l.txt", [3, 0, 2])
        assert load_labels(tmp_path / "l.txt").tolist() == [3, 0, 2]


class TestCodeMatrix:
    @given(st.integers(1, 20), st.integers(1, 70), st.integers(0, 2**32 - 1))
    def test_pack_involution(self, n, b, seed):
        Z = np.random.default_rng(seed).choice(np.array([-1, 1], dtype=np.int8), (n, b))
        c = CodeMatrix.from_signs(Z)
        assert np.array_equal(c.to_signs(), Z)
        assert c.packed.shape == (n, (b + 7) // 8)

    def test_bit_layout(self):
        Z = -np.ones((1, 10), dtype=np.int8)
        Z[0, [0, 3, 9]] = 1
        assert CodeMatrix.from_signs(Z).packed.tolist() == [[0b00001001, 0b00000010]]

    def test_file_round_trip(self, tmp_path):
        Z = np.random.default_rng(2).choice([-1, 1], (13, 37))
        c = CodeMatrix.from_signs(Z)
        c.save(tmp_path / "c.ilhc")
        raw = (tmp_path / "c.ilhc").read_bytes()
        assert raw[:4] == b"ILHC" and len(raw) == 4 + 16 + 13 * 5
        assert CodeMatrix.load(tmp_path / "c.ilhc") == c

    def test_rejects_non_signs(self):
        with pytest.raises(ValueError):
            CodeMatrix.from_signs(np.zeros((2, 2)))

    def test_words_padding(self):
        c = CodeMatrix.from_signs(np.ones((2, 70), dtype=np.int8))
        w = c.words()
        assert w.shape == (2, 2) and w.dtype == np.uint64
        assert int(w[0, 1]) == (1 << 6) - 1
