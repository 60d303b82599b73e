import csv
import json

import numpy as np
import pytest

from simlrkit.cli import main
from simlrkit.graph import read_dense_csv
from simlrkit.ingest import load_matrix
from simlrkit.synth import PlantedGraphSpec, make_planted_similarity
from simlrkit.graph import write_dense_csv


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    d = tmp_path_factory.mktemp("cohort")
    assert main(["synth", "--k", "3", "--n-per-cluster", "20", "--p", "6", "--noise-std", "0.25",
                 "--center-scale", "3", "--seed", "1", "-o", str(d / "raw.csv"), "--labels-output", str(d / "truth.csv")]) == 0
    assert main(["preprocess", str(d / "raw.csv"), "-o", str(d / "pre.csv")]) == 0
    return d


def test_synth_deterministic(tmp_path, cohort):
    main(["synth", "--k", "3", "--n-per-cluster", "20", "--p", "6", "--noise-std", "0.25", "--center-scale", "3", "--seed", "1",
          "-o", str(tmp_path / "raw.csv"), "--labels-output", str(tmp_path / "truth.csv")])
    assert (tmp_path / "raw.csv").read_bytes() == (cohort / "raw.csv").read_bytes()


def test_synth_invalid_spec(tmp_path, capsys):
    assert main(["synth", "--k", "0", "-o", str(tmp_path / "x.csv")]) == 3
    assert "error" in capsys.readouterr().err


def test_preprocess_output(cohort):
    X = load_matrix(cohort / "pre.csv", "subject_id")
    assert X.shape == (60, 6)
    np.testing.assert_allclose(X.values.mean(axis=0), 0, atol=1e-10)
    assert (cohort / "pre.csv.report.txt").exists()


def test_preprocess_reports_dropped_column(tmp_path):
    rows = ["subject_id,a,b"] + [f"s{i},{i},{'' if i < 6 else i * 2}" for i in range(10)]
    (tmp_path / "in.csv").write_text("\n".join(rows) + "\n")
    assert main(["preprocess", str(tmp_path / "in.csv"), "-o", str(tmp_path / "o.csv"),
                 "--report", str(tmp_path / "r.txt")]) == 0
    rep = json.loads((tmp_path / "r.txt.json").read_text())
    assert rep["dropped_features"] == {"b": 0.6}


def test_unreadable_path_exit_code(tmp_path, capsys):
    assert main(["preprocess", str(tmp_path / "missing.csv"), "-o", str(tmp_path / "o.csv")]) == 3
    assert "missing.csv" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["cluster"]) == 2
    assert main(["frobnicate"]) == 2


@pytest.mark.parametrize("method", ["sc", "sc-diffusion", "simlr"])
def test_cluster_graph_methods_manifest(tmp_path, cohort, method):
    out = tmp_path / method
    assert main(["cluster", str(cohort / "pre.csv"), "--method", method, "--k", "3", "--outdir", str(out),
                 "--neighbors", "5"]) == 0
    rep = json.loads((out / "report.txt.json").read_text())
    for key in ("labels", "similarity", "embedding"):
        assert (out / rep[key].split("/")[-1]).exists()
    S = read_dense_csv(rep["similarity"])
    assert S.shape == (60, 60)
    E = load_matrix(rep["embedding"], "subject_id")
    assert E.shape == (60, 3)
    labels = read_rows(rep["labels"])
    truth = read_rows(cohort / "truth.csv")
    from simlrkit.cluster import adjusted_rand_index
    assert adjusted_rand_index([r["label"] for r in labels], [r["label"] for r in truth]) == 1.0
    assert rep["laplacian"] == "unnormalized D - theta"


def test_sc_equals_sc_diffusion_with_zero_steps(tmp_path, cohort):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["cluster", str(cohort / "pre.csv"), "--method", "sc", "--k", "3", "--outdir", str(a)])
    main(["cluster", str(cohort / "pre.csv"), "--method", "sc-diffusion", "--k", "3", "--outdir", str(b),
          "--diffusion-steps", "0"])
    for name in ("similarity.csv", "embedding.csv", "labels.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_kmeans_k1(tmp_path, cohort):
    assert main(["cluster", str(cohort / "pre.csv"), "--method", "kmeans", "--k", "1", "--outdir",
                 str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.txt.json").read_text())
    assert rep["silhouette"] == "not defined for K=1"
    assert "similarity" not in rep


def test_cluster_auto_k_and_contingency(tmp_path, cohort):
    assert main(["cluster", str(cohort / "pre.csv"), "--method", "sc-diffusion", "--k", "auto",
                 "--k-max", "6", "--outdir", str(tmp_path), "--diagnosis", str(cohort / "truth.csv"),
                 "--diagnosis-column", "label", "--neighbors", "5"]) == 0
    rep = json.loads((tmp_path / "report.txt.json").read_text())
    assert rep["K"] == 3
    assert len(read_rows(tmp_path / "kselect.csv")) == 5
    text = (tmp_path / "contingency.csv").read_text().splitlines()
    assert text[0] == ",1 (n=20),2 (n=20),3 (n=20),Total (n=60)"
    assert all(line.endswith("20 (33.33%)") for line in text[1:])


def test_config_file_and_flag_precedence(tmp_path, cohort):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nmethod = kmeans\nk=2\nseed=3\n")
    assert main(["cluster", str(cohort / "pre.csv"), "--config", str(cfg), "--outdir", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "report.txt.json").read_text())
    assert rep["method"] == "kmeans" and rep["K"] == 2 and rep["seed"] == 3
    assert main(["cluster", str(cohort / "pre.csv"), "--config", str(cfg), "--k", "3",
                 "--outdir", str(tmp_path / "p")]) == 0
    assert json.loads((tmp_path / "p" / "report.txt.json").read_text())["K"] == 3
    cfg.write_text("bogus=1\n")
    assert main(["cluster", str(cohort / "pre.csv"), "--config", str(cfg), "--outdir", str(tmp_path)]) == 2


def test_select_k_from_similarity(tmp_path, capsys):
    S, _ = make_planted_similarity(PlantedGraphSpec([8] * 4))
    write_dense_csv(tmp_path / "s.csv", S)
    assert main(["select-k", str(tmp_path / "s.csv"), "--similarity", "-o", str(tmp_path / "k.csv"),
                 "--k-max", "10"]) == 0
    assert "chosen K = 4" in capsys.readouterr().out
    assert len(read_rows(tmp_path / "k.csv")) == 9
    write_dense_csv(tmp_path / "r.csv", np.ones((3, 4)))
    assert main(["select-k", str(tmp_path / "r.csv"), "--similarity", "-o", str(tmp_path / "k.csv")]) == 3


def write_groups(tmp_path, labels, features, name="feat.csv"):
    ids = [f"s{i}" for i in range(len(labels))]
    (tmp_path / "lab.csv").write_text("subject_id,label\n" + "".join(f"{i},{l}\n" for i, l in zip(ids, labels)))
    cols = list(features)
    lines = ["subject_id," + ",".join(cols)]
    for r, sid in enumerate(ids):
        lines.append(sid + "," + ",".join(repr(float(features[c][r])) for c in cols))
    (tmp_path / name).write_text("\n".join(lines) + "\n")
    return ids


def test_characterize_tables(tmp_path):
    rng = np.random.default_rng(0)
    labels = ["1"] * 15 + ["2"] * 15 + ["3"] * 15 + ["CN"] * 15
    feats = {"age": rng.normal(size=60), "flat": np.ones(60)}
    write_groups(tmp_path, labels, feats)
    assert main(["characterize", "--labels", str(tmp_path / "lab.csv"), "--features", str(tmp_path / "feat.csv"),
                 "--control-label", "CN", "--outdir", str(tmp_path / "out")]) == 0
    omni = read_rows(tmp_path / "out" / "omnibus.csv")
    assert [r["feature"] for r in omni] == ["age", "flat"]
    assert float(omni[1]["p_kw"]) == 1.0
    pairs = read_rows(tmp_path / "out" / "pairwise.csv")
    assert len(pairs) == 3 * 2 // 2 + 3
    assert pairs[0]["pair"] == "1 vs CN"
    rep = json.loads((tmp_path / "out" / "characterize.txt.json").read_text())
    assert any("identical" in n for n in rep["notes"])


def test_characterize_null_labels_not_significant(tmp_path):
    rng = np.random.default_rng(4)
    labels = list(rng.permutation(np.repeat(["1", "2", "3"], 30)))
    feats = {f"f{j}": rng.normal(size=90) for j in range(5)}
    write_groups(tmp_path, labels, feats)
    main(["characterize", "--labels", str(tmp_path / "lab.csv"), "--features", str(tmp_path / "feat.csv"),
          "--outdir", str(tmp_path / "out")])
    omni = read_rows(tmp_path / "out" / "omnibus.csv")
    assert all(float(r["p_anova"]) > 0.2 and float(r["p_kw"]) > 0.2 for r in omni)


def test_characterize_small_group_skipped(tmp_path):
    rng = np.random.default_rng(1)
    labels = ["1"] * 10 + ["2"] * 10 + ["3"]
    write_groups(tmp_path, labels, {"x": rng.normal(size=21)})
    assert main(["characterize", "--labels", str(tmp_path / "lab.csv"), "--features", str(tmp_path / "feat.csv"),
                 "--outdir", str(tmp_path / "out")]) == 0
    rep = json.loads((tmp_path / "out" / "characterize.txt.json").read_text())
    assert any("group '3' has 1" in n for n in rep["notes"])


def test_assoc_planted_and_null(tmp_path):
    rng = np.random.default_rng(2)
    n = 200
    planted = rng.integers(0, 3, size=n).astype(float)
    case = rng.random(n) < 1 / (1 + np.exp(-(-1.5 + 1.5 * planted)))
    labels = np.where(case, "2", "1")
    null = np.zeros(n)
    null[::2] = 1
    ids = write_groups(tmp_path, labels, {"planted": planted, "null": null}, "var.csv")
    age = rng.normal(70, 5, size=n)
    (tmp_path / "cov.csv").write_text("subject_id,age\n" + "".join(f"{i},{a}\n" for i, a in zip(ids, age)))
    assert main(["assoc", "--labels", str(tmp_path / "lab.csv"), "--variants", str(tmp_path / "var.csv"),
                 "--covariates", str(tmp_path / "cov.csv"), "--contrast", "2:1", "-o", str(tmp_path / "a.csv")]) == 0
    rows = {r["variant"]: r for r in read_rows(tmp_path / "a.csv")}
    p = rows["planted"]
    assert abs(float(p["coefficient"]) - 1.5) <= 3 * float(p["se"])
    assert p["significant"] == "1" and p["converged"] == "1"
    assert p["contrast"] == "2 vs 1"


def test_assoc_null_variant(tmp_path):
    rng = np.random.default_rng(3)
    n = 200
    labels = np.where(rng.random(n) < 0.5, "2", "1")
    v = np.zeros(n)
    v[::2] = 1  # unrelated to the labels
    write_groups(tmp_path, labels, {"v": v}, "var.csv")
    main(["assoc", "--labels", str(tmp_path / "lab.csv"), "--variants", str(tmp_path / "var.csv"),
          "--contrast", "2:1", "-o", str(tmp_path / "a.csv")])
    assert float(read_rows(tmp_path / "a.csv")[0]["p"]) > 0.05


def test_assoc_id_mismatch(tmp_path, capsys):
    write_groups(tmp_path, ["1", "2", "1", "2"], {"v": [0, 1, 0, 1]}, "var.csv")
    (tmp_path / "cov.csv").write_text("subject_id,age\ns0,1\ns1,2\ns3,4\n")
    assert main(["assoc", "--labels", str(tmp_path / "lab.csv"), "--variants", str(tmp_path / "var.csv"),
                 "--covariates", str(tmp_path / "cov.csv"), "-o", str(tmp_path / "a.csv")]) == 3
    assert "'s2'" in capsys.readouterr().err


def test_assoc_single_class_contrast(tmp_path):
    write_groups(tmp_path, ["1", "1", "1", "2"], {"v": [0, 1, 0, 1]}, "var.csv")
    assert main(["assoc", "--labels", str(tmp_path / "lab.csv"), "--variants", str(tmp_path / "var.csv"),
                 "--contrast", "3:1", "-o", str(tmp_path / "a.csv")]) == 3


def test_thread_env_var(tmp_path, cohort, monkeypatch):
    monkeypatch.setenv("SIMLRKIT_NUM_THREADS", "1")
    assert main(["cluster", str(cohort / "pre.csv"), "--method", "kmeans", "--k", "3",
                 "--outdir", str(tmp_path)]) == 0
