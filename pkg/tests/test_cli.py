import json

import numpy as np
import pytest
from click.testing import CliRunner

from ilhash.cli import main
from ilhash.codes import CodeMatrix
from ilhash.data import build_affinities_supervised, synth_dataset
from ilhash.ensemble import DiversityConfig, TrainConfig, train_ensemble
from ilhash.modelfile import dumps, load_model, loads


def run(args, ok=True):
    res = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    if ok:
        assert res.exit_code == 0, res.output
    return res


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    run(["synth", "--points", 600, "--dim", 8, "--clusters", 4, "--seed", 3,
         "--out", d / "x.ilhf", "--labels-out", d / "y.txt"])
    return d


class TestModelFile:
    @pytest.mark.parametrize("family,mode", [("linear", "shared"), ("kernel", "shared"), ("kernel", "private")])
    def test_round_trip(self, family, mode):
        X, labels = synth_dataset(3, 5, 240, 0.3, 0)
        aff = build_affinities_supervised(X, labels, 10, 10, 0)
        cfg = DiversityConfig("random", "random", 80, 0.6, 5)
        ens = train_ensemble(X, aff, 3, cfg, TrainConfig(family, 30, mode))
        text = dumps(ens)
        back = loads(text)
        assert back.same_bits(ens) and back.diversity == cfg and dumps(back) == text
        assert text.startswith("ilh-model v1\nbits 3\nhash " + family + "\ndim 5\n")

    def test_rejects_other_files(self):
        with pytest.raises(ValueError):
            loads("something else\n")

    def test_truncated(self):
        X, labels = synth_dataset(2, 3, 60, 0.3, 0)
        ens = train_ensemble(X, build_affinities_supervised(X, labels, 5, 5, 0), 2)
        with pytest.raises(ValueError):
            loads(dumps(ens)[:-20])


class TestCommands:
    def test_pipeline(self, dataset, tmp_path):
        x, y = dataset / "x.ilhf", dataset / "y.txt"
        model = tmp_path / "m.txt"
        run(["train", "--method", "ilh", "--diversity", "t", "--sampling", "disjoint", "--bits", 8,
             "--data", x, "--labels", y, "--train-size", 400, "--seed", 7, "--out", model])
        ens = load_model(model)
        assert ens.n_bits == 8 and ens.diversity.n_bit == 50
        manifest = json.loads((tmp_path / "m.txt.manifest.json").read_text())
        assert len(manifest["seconds_per_bit"]) == 8 and str(x) in manifest["inputs"]

        codes, dump = tmp_path / "c.ilhc", tmp_path / "c.txt"
        run(["encode", "--model", model, "--data", x, "--out", codes, "--codes-dump", dump])
        signs = np.loadtxt(dump, dtype=int)
        assert np.array_equal(signs, CodeMatrix.load(codes).to_signs())

        results = tmp_path / "r.tsv"
        run(["search", "--queries", codes, "--database", codes, "--k", 10, "--out", results])
        metrics = tmp_path / "e.tsv"
        out = run(["eval", "--results", results, "--query-labels", y, "--base-labels", y,
                   "--k", 5, "--k", 10, "--out", metrics]).output
        assert "precision" in out
        assert [line.split("\t")[0] for line in metrics.read_text().splitlines()] == ["5", "10"]

        run(["ortho", "--model", model, "--codes", codes, "--out-prefix", tmp_path / "o_"])
        C = np.loadtxt(tmp_path / "o_CZ.tsv")
        assert C.shape == (8, 8) and np.allclose(np.diag(C), 1.0)

    def test_eval_perfect(self, tmp_path):
        (tmp_path / "r.tsv").write_text("0\t0\t1\t0\n0\t1\t2\t0\n")
        (tmp_path / "q.txt").write_text("4\n")
        (tmp_path / "b.txt").write_text("0\n4\n4\n")
        out = run(["eval", "--results", tmp_path / "r.tsv", "--query-labels", tmp_path / "q.txt",
                   "--base-labels", tmp_path / "b.txt", "--out", tmp_path / "m.tsv"]).output
        assert "precision=1.0000" in out

    def test_lsh_without_data(self, tmp_path):
        run(["train", "--method", "lsh", "--bits", 32, "--dim", 320, "--seed", 1, "--out", tmp_path / "l.txt"])
        assert load_model(tmp_path / "l.txt").n_bits == 32

    def test_kshcut(self, dataset, tmp_path):
        run(["train", "--method", "kshcut", "--bits", 4, "--iters", 1, "--data", dataset / "x.ilhf",
             "--labels", dataset / "y.txt", "--train-size", 200, "--s-pos", 10, "--s-neg", 10,
             "--out", tmp_path / "k.txt"])
        assert load_model(tmp_path / "k.txt").method == "kshcut"

    @pytest.mark.parametrize("method", ["tpca", "tpca-bagging"])
    def test_pca_methods(self, dataset, tmp_path, method):
        run(["train", "--method", method, "--bits", 8, "--member-bits", 4, "--data", dataset / "x.ilhf",
             "--out", tmp_path / "p.txt"])
        assert load_model(tmp_path / "p.txt").n_bits == 8

    def test_jobs_do_not_change_files(self, dataset, tmp_path, monkeypatch):
        args = ["train", "--diversity", "itf", "--sampling", "random", "--n-bit", 150, "--bits", 6,
                "--data", dataset / "x.ilhf", "--labels", dataset / "y.txt", "--seed", 2]
        run(args + ["--jobs", 1, "--out", tmp_path / "a.txt"])
        monkeypatch.setenv("ILH_JOBS", "4")
        run(args + ["--out", tmp_path / "b.txt"])
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()

    def test_replay(self, dataset, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setattr("sys.argv", ["ilhash", "train", "--bits", "3", "--data", str(dataset / "x.ilhf"),
                                         "--labels", str(dataset / "y.txt"), "--s-pos", "5", "--s-neg", "5",
                                         "--out", "m.txt"])
        run(["train", "--bits", 3, "--data", dataset / "x.ilhf", "--labels", dataset / "y.txt",
             "--s-pos", 5, "--s-neg", 5, "--out", "m.txt"])
        assert "outputs identical" in run(["replay", "m.txt.manifest.json"]).output

    def test_errors_exit_nonzero(self, dataset, tmp_path):
        res = run(["train", "--diversity", "t", "--sampling", "disjoint", "--n-bit", 400, "--bits", 4,
                   "--data", dataset / "x.ilhf", "--labels", dataset / "y.txt", "--out", tmp_path / "m.txt"],
                  ok=False)
        assert res.exit_code != 0 and "disjoint" in res.output
        res = run(["train", "--method", "lsh", "--out", tmp_path / "m.txt"], ok=False)
        assert res.exit_code != 0
        res = run(["train", "--diversity", "q", "--data", dataset / "x.ilhf", "--out", tmp_path / "m.txt"], ok=False)
        assert res.exit_code != 0

    def test_bench(self, tmp_path):
        out = tmp_path / "t.tsv"
        run(["bench", "--sizes", "300,600", "--out", out])
        rows = [line.split("\t") for line in out.read_text().splitlines()]
        assert [r[0] for r in rows] == ["300", "600"] and all(float(r[1]) > 0 for r in rows)
