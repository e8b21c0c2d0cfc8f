"""Learning to hash with independently trained single-bit hash functions."""

from .baselines import KshcutConfig, kshcut_train, lsh_train, tpca_bagging_train, tpca_train
from .classifiers import KernelHash, LinearHash, SvmConfig, fit_kernel, fit_linear, predict
from .codes import CodeMatrix
from .data import (AffinitySet, SubsetAffinityBuilder, build_affinities_supervised,
                   build_affinities_unsupervised, synth_dataset)
from .diagnostics import ortho_matrices, ortho_measure, random_control
from .ensemble import (DiversityConfig, HashEnsemble, TrainConfig, extend_ensemble, select_bits,
                       train_bit, train_ensemble)
from .losses import LossKind, QuadraticEnergy, build_energy, energy_eval, pairwise_coefficient
from .mincut import alternating_mincut, max_flow, partition_groups, solve_submodular
from .retrieval import encode, hamming_knn, precision_recall

__version__ = "0.1.0"
