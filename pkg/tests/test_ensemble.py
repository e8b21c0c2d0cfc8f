import numpy as np
import pytest
from conftest import all_signs

from ilhash.classifiers import LinearHash
from ilhash.data import AffinitySet, build_affinities_supervised, synth_dataset
from ilhash.ensemble import (DiversityConfig, TrainConfig, extend_ensemble, select_bits, stream_seed,
                             train_bit, train_ensemble)
from ilhash.losses import build_energy, energy_eval
from ilhash.mincut import solve_submodular
from ilhash.retrieval import encode, ground_truth_labels


@pytest.fixture(scope="module")
def clusters():
    X, labels = synth_dataset(4, 6, 400, 0.3, 1)
    perm = np.random.default_rng(0).permutation(400)
    X, labels = X[perm], labels[perm]
    return X, labels, build_affinities_supervised(X, labels, 20, 20, 0)


class TestDiversityConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            DiversityConfig(init_mode="zeros")
        with pytest.raises(ValueError):
            DiversityConfig(sampling="disjoint")
        with pytest.raises(ValueError):
            DiversityConfig(feature_fraction=0.0)

    def test_disjoint_budget(self):
        cfg = DiversityConfig(sampling="disjoint", n_bit=30)
        cfg.check_feasible(90, 3)
        with pytest.raises(ValueError, match="random"):
            cfg.check_feasible(90, 4)

    def test_feature_count_at_least_one(self):
        assert DiversityConfig(feature_fraction=0.01).n_features(10) == 1
        assert DiversityConfig(feature_fraction=0.5).n_features(9) == 5


class TestTrainBit:
    def test_full_data_is_global_optimum(self, clusters):
        X, labels, aff = clusters
        # positives only: submodular, so the alternating solver is exact
        keep = aff.y == 1
        pos = AffinitySet(aff.n[keep], aff.m[keep], aff.y[keep], aff.n_points)
        e = build_energy(pos)
        entry = train_bit(X, pos, DiversityConfig(), 0)
        assert entry.energy == energy_eval(e, solve_submodular(e))

    def test_two_clusters_match_enumeration(self):
        rng = np.random.default_rng(0)
        X = np.vstack((rng.normal(size=(6, 2)), rng.normal(size=(6, 2)) + 8))
        labels = np.repeat([0, 1], 6)
        aff = build_affinities_supervised(X, labels, 3, 3, 1)
        e = build_energy(aff)
        best = min(energy_eval(e, z) for z in all_signs(12))
        entry = train_bit(X, aff, DiversityConfig(), 0)
        assert entry.energy == best
        z = entry.predict(X)
        assert len(set(z[:6])) == 1 and len(set(z[6:])) == 1 and z[0] != z[6]

    def test_disjoint_partition(self, clusters):
        X, _, aff = clusters
        ens = train_ensemble(X, aff, 4, DiversityConfig(sampling="disjoint", n_bit=100))
        idx = np.concatenate([b.train_idx for b in ens.bits])
        assert sorted(idx.tolist()) == list(range(400))

    def test_bootstrap_repeats_allowed(self, clusters):
        X, _, aff = clusters
        e = train_bit(X, aff, DiversityConfig(sampling="bootstrap", n_bit=400, master_seed=2), 0)
        assert e.train_idx.size == 400 and np.unique(e.train_idx).size < 400

    def test_feature_subset_is_respected(self, clusters):
        X, _, aff = clusters
        entry = train_bit(X, aff, DiversityConfig(feature_fraction=0.5, master_seed=3), 1)
        assert entry.features.size == 3
        Y = X.copy()
        others = np.setdiff1d(np.arange(6), entry.features)
        Y[:, others] += 100.0
        assert np.array_equal(entry.predict(X), entry.predict(Y))

    def test_empty_restriction_fails(self):
        X = np.arange(20.0).reshape(10, 2)
        aff = AffinitySet.from_pairs([], [], [], 10)
        with pytest.raises(ValueError, match="no affinity pairs"):
            train_bit(X, aff, DiversityConfig(sampling="random", n_bit=3, master_seed=0), 0)

    def test_constant_codes_become_degenerate_bit(self, caplog):
        X = np.random.default_rng(0).normal(size=(6, 2))
        aff = AffinitySet.from_pairs([0, 1, 2, 3, 4], [1, 2, 3, 4, 5], [1] * 5, 6)
        entry = train_bit(X, aff, DiversityConfig(), 0)
        assert entry.degenerate and "constant" in caplog.text
        assert len(set(entry.predict(X).tolist())) == 1

    def test_seed_depends_on_index(self):
        assert stream_seed(0, 1) != stream_seed(0, 2)
        assert stream_seed(5, 1) == stream_seed(5, 1)


class TestEnsemble:
    def test_b1_equals_train_bit(self, clusters):
        X, _, aff = clusters
        cfg = DiversityConfig(init_mode="random", master_seed=4)
        assert train_ensemble(X, aff, 1, cfg).bits[0] == train_bit(X, aff, cfg, 0)

    @pytest.mark.parametrize("family", ["linear", "kernel"])
    def test_parallel_equals_sequential(self, clusters, family):
        X, _, aff = clusters
        cfg = DiversityConfig(init_mode="random", sampling="random", n_bit=150, feature_fraction=0.7, master_seed=1)
        tc = TrainConfig(hash_family=family, n_centers=40)
        assert train_ensemble(X, aff, 6, cfg, tc, jobs=1).same_bits(train_ensemble(X, aff, 6, cfg, tc, jobs=4))

    def test_nesting(self, clusters):
        X, _, aff = clusters
        cfg = DiversityConfig(sampling="random", n_bit=120, master_seed=7)
        small = train_ensemble(X, aff, 3, cfg)
        big = extend_ensemble(small, 3, X, aff)
        assert big.same_bits(train_ensemble(X, aff, 6, cfg))
        assert big.prefix(3).same_bits(small)
        assert extend_ensemble(small, 0, X, aff).same_bits(small)

    def test_extend_exhausts_disjoint_budget(self, clusters):
        X, _, aff = clusters
        ens = train_ensemble(X, aff, 2, DiversityConfig(sampling="disjoint", n_bit=200))
        with pytest.raises(ValueError, match="random"):
            extend_ensemble(ens, 1, X, aff)

    def test_bit_failure_names_index(self, clusters):
        X, _, _ = clusters
        aff = AffinitySet.from_pairs([], [], [], 400)
        with pytest.raises(RuntimeError, match="bit 0"):
            train_ensemble(X, aff, 2, DiversityConfig(sampling="random", n_bit=10))

    def test_weight_matrix(self, clusters):
        X, _, aff = clusters
        ens = train_ensemble(X, aff, 3, DiversityConfig(feature_fraction=0.5, master_seed=2))
        W = ens.weight_matrix()
        for i, bit in enumerate(ens.bits):
            assert np.array_equal(W[i, bit.features], bit.hash.weights)
            assert np.all(np.delete(W[i], bit.features) == 0)

    def test_shared_centers_reused(self, clusters):
        X, _, aff = clusters
        tc = TrainConfig(hash_family="kernel", n_centers=30)
        ens = train_ensemble(X, aff, 2, DiversityConfig(sampling="random", n_bit=100), tc)
        assert all(np.array_equal(b.hash.centers, ens.shared_centers) for b in ens.bits)


class TestSelectBits:
    def test_b_max_one(self, clusters):
        X, labels, aff = clusters
        gt = ground_truth_labels(labels[:20], labels)
        assert select_bits(X, aff, (X[:20], gt), 1, batch=2).n_bits == 1

    def test_stops_on_flat_precision(self, clusters):
        X, _, aff = clusters
        # every item relevant to every query: precision is always 1
        gt = [np.arange(400)] * 10
        ens = select_bits(X, aff, (X[:10], gt), 20, patience=2, batch=2, k=10)
        hist = ens.meta["selection"]
        assert len(hist) == 3 and ens.n_bits == 2

    def test_returns_best_prefix(self, clusters):
        X, labels, aff = clusters
        gt = ground_truth_labels(labels[:40], labels)
        ens = select_bits(X, aff, (X[:40], gt), 8, patience=10, batch=2, k=50,
                          cfg=DiversityConfig(sampling="random", n_bit=100, master_seed=1))
        hist = dict(ens.meta["selection"])
        assert hist[ens.n_bits] == max(hist.values())
