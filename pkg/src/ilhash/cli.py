"""Command-line interface.

Every command that writes a file also writes ``<file>.manifest.json`` with
the exact argument list, configuration, seeds and SHA-256 digests of the
inputs; ``ilhash replay <manifest>`` reruns it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time

import click
import numpy as np

from . import __version__
from .baselines import KshcutConfig, kshcut_train, lsh_train, tpca_bagging_train, tpca_train
from .classifiers import SvmConfig
from .codes import CodeMatrix
from .data import (AffinitySet, SubsetAffinityBuilder, build_affinities_supervised,
                   build_affinities_unsupervised, synth_dataset)
from .diagnostics import ortho_report, write_histogram_tsv, write_matrix_tsv
from .ensemble import DiversityConfig, TrainConfig, default_jobs, train_bit, train_ensemble
from .io import load_features, load_labels, save_features, save_labels
from .modelfile import load_model, save_model
from .retrieval import (RetrievalResult, encode, ground_truth_euclidean, ground_truth_labels,
                        hamming_knn, precision_recall, write_metrics_tsv)

log = logging.getLogger("ilhash")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, command: str, config: dict, inputs=(), seeds=None, extra=None) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "config": config,
        "seeds": seeds or {},
        "inputs": {str(p): sha256_file(p) for p in inputs if p},
        "outputs": {str(out_path): sha256_file(out_path)},
    }
    if extra:
        manifest.update(extra)
    with open(f"{out_path}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Learning binary hash codes with independently trained bits."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--clusters", default=10, show_default=True)
@click.option("--dim", default=32, show_default=True)
@click.option("--points", default=2000, show_default=True)
@click.option("--spread", default=0.25, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Feature file.")
@click.option("--labels-out", required=True, type=click.Path(dir_okay=False))
@click.option("--shuffle/--no-shuffle", default=True, show_default=True)
def synth(clusters, dim, points, spread, seed, out, labels_out, shuffle):
    """Generate labelled Gaussian clusters."""
    X, labels = synth_dataset(clusters, dim, points, spread, seed)
    if shuffle:
        perm = np.random.default_rng([seed, 7]).permutation(points)
        X, labels = X[perm], labels[perm]
    save_features(out, X)
    save_labels(labels_out, labels)
    cfg = dict(clusters=clusters, dim=dim, points=points, spread=spread, shuffle=shuffle)
    write_manifest(out, "synth", cfg, seeds={"seed": seed})
    write_manifest(labels_out, "synth", cfg, seeds={"seed": seed})


def _affinities(X, labels_path, affinities_path, scope, s_pos, s_neg, k_pos, seed):
    n = X.shape[0]
    if affinities_path:
        return AffinitySet.from_tsv(affinities_path, n)
    if labels_path:
        labels = load_labels(labels_path)[:n]
        if scope == "subset":
            return SubsetAffinityBuilder(labels, s_pos, s_neg, seed)
        return build_affinities_supervised(X, labels, s_pos, s_neg, seed)
    if scope == "subset":
        raise click.UsageError("--affinity-scope subset needs --labels")
    return build_affinities_unsupervised(X, k_pos, s_neg, seed)


@main.command()
@click.option("--method", type=click.Choice(["ilh", "kshcut", "lsh", "tpca", "tpca-bagging"]), default="ilh",
              show_default=True)
@click.option("--data", type=click.Path(exists=True, dir_okay=False), help="Training features.")
@click.option("--labels", type=click.Path(exists=True, dir_okay=False), help="Class labels (supervised).")
@click.option("--affinities", type=click.Path(exists=True, dir_okay=False), help="Affinity TSV n, m, y.")
@click.option("--affinity-scope", type=click.Choice(["global", "subset"]), default="global", show_default=True,
              help="Restrict one global affinity set, or sample affinities inside each bit's subset.")
@click.option("--s-pos", default=100, show_default=True)
@click.option("--s-neg", default=100, show_default=True)
@click.option("--k-pos", default=100, show_default=True, help="Nearest neighbours as positives (no labels).")
@click.option("--bits", default=32, show_default=True)
@click.option("--diversity", default="", help="Any of i (random init), t (subsets), f (feature subsets).")
@click.option("--sampling", type=click.Choice(["none", "disjoint", "random", "bootstrap"]), default=None,
              help="Subset sampling for t (default disjoint).")
@click.option("--n-bit", type=int, default=None, help="Points per bit (default train-size // bits).")
@click.option("--feature-fraction", type=float, default=None, help="d/D for f (default 0.5).")
@click.option("--hash", "hash_family", type=click.Choice(["linear", "kernel"]), default="linear", show_default=True)
@click.option("--centers", type=int, default=500, show_default=True)
@click.option("--centers-mode", type=click.Choice(["shared", "private"]), default="shared", show_default=True)
@click.option("--svm-c", type=float, default=1.0, show_default=True)
@click.option("--train-size", type=int, default=None, help="Use the first N points of --data.")
@click.option("--seed", default=0, show_default=True)
@click.option("--iters", default=1, show_default=True, help="KSHcut outer iterations.")
@click.option("--sweeps", default=5, show_default=True, help="Alternating min-cut sweeps.")
@click.option("--dim", type=int, default=None, help="Input dimension for lsh without --data.")
@click.option("--member-bits", default=16, show_default=True)
@click.option("--jobs", type=int, default=None, help="Bits trained concurrently (env ILH_JOBS).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def train(method, data, labels, affinities, affinity_scope, s_pos, s_neg, k_pos, bits, diversity, sampling, n_bit,
          feature_fraction, hash_family, centers, centers_mode, svm_c, train_size, seed, iters, sweeps, dim,
          member_bits, jobs, out):
    """Train a hash model."""
    jobs = default_jobs() if jobs is None else jobs
    if set(diversity) - set("itf"):
        raise click.BadParameter("use letters from 'itf'", param_hint="--diversity")
    inputs = [p for p in (data, labels, affinities) if p]
    config = {k: v for k, v in locals().items() if k not in ("inputs",)}
    t0 = time.perf_counter()
    if method == "lsh" and data is None:
        if dim is None:
            raise click.UsageError("lsh needs --dim or --data")
        ens = lsh_train(dim, bits, seed)
    else:
        if data is None:
            raise click.UsageError(f"{method} needs --data")
        X = load_features(data)
        if train_size is not None:
            if train_size > X.shape[0]:
                raise click.BadParameter(f"only {X.shape[0]} points available", param_hint="--train-size")
            X = X[:train_size]
        train_cfg = TrainConfig(hash_family, centers, centers_mode, SvmConfig(C=svm_c), sweeps)
        try:
            if method == "lsh":
                ens = lsh_train(X.shape[1], bits, seed)
            elif method == "tpca":
                ens = tpca_train(X, bits, seed)
            elif method == "tpca-bagging":
                ens = tpca_bagging_train(X, bits, member_bits, seed)
            else:
                aff = _affinities(X, labels, affinities, affinity_scope, s_pos, s_neg, k_pos, seed)
                if method == "kshcut":
                    ens = kshcut_train(X, aff, bits, KshcutConfig(iters, "all_ones", seed, sweeps, train_cfg))
                else:
                    if "t" in diversity:
                        sampling = sampling or "disjoint"
                    sampling = sampling or "none"
                    if sampling != "none" and n_bit is None:
                        n_bit = max(1, X.shape[0] // bits)
                    ff = feature_fraction if feature_fraction is not None else (0.5 if "f" in diversity else 1.0)
                    cfg = DiversityConfig("random" if "i" in diversity else "all_ones", sampling, n_bit, ff, seed)
                    ens = train_ensemble(X, aff, bits, cfg, train_cfg, jobs)
        except (ValueError, RuntimeError) as exc:
            raise click.ClickException(str(exc)) from exc
    elapsed = time.perf_counter() - t0
    save_model(out, ens)
    write_manifest(out, "train", config, inputs, seeds={"seed": seed, "bit_seeds": [b.seed for b in ens.bits]},
                   extra={"seconds_per_bit": ens.seconds_per_bit(), "seconds_total": elapsed})
    click.echo(f"{method}: {ens.n_bits} bits -> {out} ({elapsed:.2f} s)")


@main.command("encode")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Binary codes file.")
@click.option("--codes-dump", type=click.Path(dir_okay=False), help="Also write codes as +-1 text.")
def encode_cmd(model, data, out, codes_dump):
    """Encode features with a trained model."""
    ens = load_model(model)
    try:
        codes = encode(ens, load_features(data))
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    codes.save(out)
    write_manifest(out, "encode", {"model": model, "data": data}, [model, data])
    if codes_dump:
        np.savetxt(codes_dump, codes.to_signs(), fmt="%d", delimiter=" ")


@main.command()
@click.option("--queries", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--database", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=100, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Results TSV.")
def search(queries, database, k, out):
    """Exact Hamming k-nearest-neighbour search."""
    q, db = CodeMatrix.load(queries), CodeMatrix.load(database)
    try:
        res = hamming_knn(q, db, k)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    res.to_tsv(out)
    write_manifest(out, "search", {"k": k}, [queries, database])


@main.command("eval")
@click.option("--results", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--query-labels", type=click.Path(exists=True, dir_okay=False))
@click.option("--base-labels", type=click.Path(exists=True, dir_okay=False))
@click.option("--query-features", type=click.Path(exists=True, dir_okay=False))
@click.option("--base-features", type=click.Path(exists=True, dir_okay=False))
@click.option("--K", "K", type=int, default=None, help="Euclidean ground truth size.")
@click.option("--k", "ks", type=int, multiple=True, help="Cut-offs (default: the results' k).")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Metrics TSV.")
def eval_cmd(results, query_labels, base_labels, query_features, base_features, K, ks, out):
    """Precision and recall of search results."""
    res = RetrievalResult.from_tsv(results)
    if query_labels and base_labels:
        gt = ground_truth_labels(load_labels(query_labels), load_labels(base_labels))
        inputs = [results, query_labels, base_labels]
    elif query_features and base_features and K:
        gt = ground_truth_euclidean(load_features(query_features), load_features(base_features), K)
        inputs = [results, query_features, base_features]
    else:
        raise click.UsageError("give --query-labels/--base-labels or --query-features/--base-features/--K")
    rows = []
    for k in ks or (res.k,):
        if k > res.k:
            raise click.BadParameter(f"results only hold {res.k} neighbours", param_hint="--k")
        m = precision_recall(RetrievalResult(res.indices[:, :k], res.distances[:, :k]), gt)
        rows.append((k, m.mean_precision, m.mean_recall))
        click.echo(f"k={k}\tprecision={m.mean_precision:.4f}\trecall={m.mean_recall:.4f}"
                   + (f"\t({m.n_excluded} queries without relevant items)" if m.n_excluded else ""))
    write_metrics_tsv(out, rows)
    write_manifest(out, "eval", {"ks": list(ks), "K": K}, inputs)


@main.command()
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--codes", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-prefix", required=True, help="Writes <prefix>CZ.tsv, CW.tsv, hist_Z.tsv, hist_W.tsv.")
@click.option("--seed", default=0, show_default=True)
def ortho(model, codes, out_prefix, seed):
    """Orthogonality of the codes and of the hyperplanes of a linear model."""
    ens = load_model(model)
    Z = CodeMatrix.load(codes)
    try:
        rep = ortho_report(Z, ens.weight_matrix(), seed=seed)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    write_matrix_tsv(f"{out_prefix}CZ.tsv", rep.C_Z)
    write_matrix_tsv(f"{out_prefix}CW.tsv", rep.C_W)
    write_histogram_tsv(f"{out_prefix}hist_Z.tsv", rep.hist_Z, rep.control_hist, rep.edges)
    write_histogram_tsv(f"{out_prefix}hist_W.tsv", rep.hist_W, rep.control_hist, rep.edges)
    write_manifest(f"{out_prefix}CZ.tsv", "ortho", {"seed": seed}, [model, codes],
                   extra={"measure_Z": rep.measure_Z, "measure_W": rep.measure_W})
    click.echo(f"measure_Z={rep.measure_Z:.6f}\tmeasure_W={rep.measure_W:.6f}")


def bench_single_bit(n: int, dim: int = 32, clusters: int = 10, spread: float = 0.25, s_pos: int = 50,
                     s_neg: int = 50, seed: int = 0, train_cfg: TrainConfig = TrainConfig()) -> float:
    """Seconds to train one bit on ``n`` synthetic points (affinities excluded)."""
    X, labels = synth_dataset(clusters, dim, n, spread, seed)
    aff = build_affinities_supervised(X, labels, s_pos, s_neg, seed)
    t0 = time.perf_counter()
    train_bit(X, aff, DiversityConfig(master_seed=seed), 0, train_cfg)
    return time.perf_counter() - t0


@main.command()
@click.option("--sizes", default="2000,5000,10000,20000", show_default=True)
@click.option("--dim", default=32, show_default=True)
@click.option("--pairs", default=100, show_default=True, help="Affinity pairs drawn per point.")
@click.option("--hash", "hash_family", type=click.Choice(["linear", "kernel"]), default="linear", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Timing TSV.")
def bench(sizes, dim, pairs, hash_family, seed, out):
    """Per-bit training time against the number of training points."""
    ns = [int(s) for s in sizes.split(",")]
    bench_single_bit(200, dim, seed=seed)  # compile the solver outside the timings
    rows = []
    for n in ns:
        sec = bench_single_bit(n, dim, s_pos=pairs // 2, s_neg=pairs - pairs // 2, seed=seed,
                               train_cfg=TrainConfig(hash_family=hash_family))
        rows.append((n, sec))
        click.echo(f"N={n}\t{sec:.3f} s/bit")
    with open(out, "w") as fh:
        for n, sec in rows:
            fh.write(f"{n}\t{sec:.6f}\n")
    write_manifest(out, "bench", {"sizes": ns, "dim": dim, "pairs": pairs, "hash": hash_family},
                   seeds={"seed": seed})


@main.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--check/--no-check", default=True, show_default=True, help="Compare output digests.")
def replay(manifest, check):
    """Rerun the command recorded in a manifest."""
    with open(manifest) as fh:
        m = json.load(fh)
    for path, digest in m["inputs"].items():
        if not os.path.exists(path) or sha256_file(path) != digest:
            raise click.ClickException(f"input {path} is missing or has changed")
    saved = sys.argv
    sys.argv = [saved[0]] + m["argv"]
    try:
        main.main(args=m["argv"], standalone_mode=False)
    finally:
        sys.argv = saved
    if check:
        for path, digest in m["outputs"].items():
            if sha256_file(path) != digest:
                raise click.ClickException(f"{path} differs from the recorded run")
        click.echo("outputs identical")


if __name__ == "__main__":
    main()
