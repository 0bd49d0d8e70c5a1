"""Acceptance suite: one test per top-level criterion.

Each test is tagged with ``@criterion``; conftest prints one PASS/FAIL line per
criterion at the end of the run.
"""

import json
import time

import numpy as np
import pytest

from conftest import HTML_DIR
from oracles import XOR_X, XOR_Y, brute_force_metrics, kkt_violations, score_extraction_corpus, separable_problem
from usability_audit.cli import main
from usability_audit.cnn import TrainConfig, train_on_arrays
from usability_audit.cnn.gradcheck import check_conv_layer, check_full_stack
from usability_audit.cnn.train import LabeledImages
from usability_audit.dataset import AuditRecord, encode_all, fit_scaler, write_csv
from usability_audit.evaluation import evaluate
from usability_audit.grades import ResolutionGrade
from usability_audit.labeling import adjusted_rand_index, assign_all, bin_webscore, kmeans_fit
from usability_audit.probe import grade_from_average, measure_load_time
from usability_audit.schemas import validate
from usability_audit.svm import GridSpec, grid_search, smo_train_binary
from usability_audit.synthetic import planted_corpus, planted_grades

criterion = pytest.mark.criterion


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@criterion("synthetic end-to-end textual pipeline")
def test_end_to_end_pipeline(tmp_path, capsys):
    records, _ = planted_corpus(n=422, seed=11, spread=0.15)
    write_csv(records, tmp_path / "raw.csv")
    start = time.perf_counter()
    code, _, err = _run(capsys, "label", "--in", tmp_path / "raw.csv", "--out", tmp_path / "labeled.csv")
    assert code == 0, err
    code, out, err = _run(capsys, "train-svm", "--in", tmp_path / "labeled.csv", "--model",
                          tmp_path / "svm.json", "--grid")
    elapsed = time.perf_counter() - start
    assert code == 0, err
    report = json.loads(out)
    print(f"test accuracy {report['metrics']['accuracy']:.4f}, C={report['C']:g}, "
          f"gamma={report['gamma']:g}, {elapsed:.1f} s")
    assert report["metrics"]["accuracy"] >= 0.95
    assert elapsed < 60


@criterion("k-means planted-cluster recovery")
def test_kmeans_recovery():
    records, planted = planted_corpus(n=422, seed=0)
    X = encode_all(records)
    X = fit_scaler(X).apply(X)
    for seed in range(5):
        model = kmeans_fit(X, k=5, seed=seed)
        assert adjusted_rand_index(planted, assign_all(model, X)) >= 0.99
        hist = model.inertia_history
        assert all(b <= a for a, b in zip(hist, hist[1:]))


@criterion("grid-search optimality")
def test_grid_search_optimality():
    grid = GridSpec()
    for seed in (1, 2, 3):
        records, planted = planted_corpus(n=150, seed=seed, spread=0.3)
        X = encode_all(records)
        res = grid_search(fit_scaler(X).apply(X), planted_grades(planted), grid, seed=seed)
        assert res.cv_table.shape == (len(grid.C_values), len(grid.gamma_values))
        i, j = grid.C_values.index(res.C), grid.gamma_values.index(res.gamma)
        assert res.cv_table[i, j] == res.cv_table.max()


@criterion("SMO correctness")
def test_smo_kkt_and_xor():
    C = 10.0
    for seed in range(10):
        X, y = separable_problem(seed)
        model = smo_train_binary(X, y, C=C, gamma=0.5)
        v = kkt_violations(model, X, y, C)
        assert v["n_free"] > 0 and v["free"] < 1e-2, (seed, v)
    xor = smo_train_binary(XOR_X, XOR_Y, C=10.0, gamma=1.0)
    assert np.sum(np.sign(xor.decision(XOR_X)) == XOR_Y) == 4


@criterion("CNN gradient checks")
def test_gradient_checks():
    start = time.perf_counter()
    full = [check_full_stack(seed=s).max_error for s in range(20)]
    conv = [check_conv_layer(seed=s).max_error for s in range(20)]
    elapsed = time.perf_counter() - start
    print(f"max full {max(full):.2e}, max conv {max(conv):.2e}, {elapsed:.1f} s")
    assert max(full) < 1e-4 and max(conv) < 1e-6
    assert elapsed < 120


@criterion("CNN overfit sanity")
def test_cnn_overfit():
    rng = np.random.default_rng(0)
    images = rng.random((8, 32, 32, 3))
    data = LabeledImages(images, np.repeat(np.arange(4), 2), [f"img{i}" for i in range(8)])
    cfg = TrainConfig(epochs=200, batch_size=8, seed=1, input_side=32)
    start = time.perf_counter()
    first = train_on_arrays(data, cfg).log
    elapsed = time.perf_counter() - start
    second = train_on_arrays(data, cfg).log
    reached = next((e["epoch"] for e in first if e["accuracy"] == 1.0), None)
    print(f"100% training accuracy at epoch {reached}, {elapsed:.1f} s per run")
    assert reached is not None and first[-1]["accuracy"] == 1.0
    assert elapsed < 300
    assert [e["loss"] for e in first] == [e["loss"] for e in second]


@criterion("metrics oracle equivalence")
def test_metrics_oracle():
    rng = np.random.default_rng(1)
    classes = list(range(5))
    for _ in range(10_000):
        n = int(rng.integers(1, 50))
        actual = rng.integers(0, 5, n).tolist()
        predicted = rng.integers(0, 5, n).tolist()
        rep = evaluate(actual, predicted, classes)
        acc, p, r, f = brute_force_metrics(actual, predicted, classes)
        assert abs(rep.accuracy - acc) <= 1e-12
        assert np.max(np.abs(np.concatenate([rep.precision - p, rep.recall - r, rep.f1 - f]))) <= 1e-12
    rep = evaluate(["p"] * 3 + ["n"] + ["p"] * 2 + ["n"] * 4,
                   ["p"] * 4 + ["n"] * 6, ["p", "n"])
    assert (rep.accuracy, rep.precision[0], rep.recall[0]) == pytest.approx((0.7, 0.75, 0.6), abs=1e-12)
    assert round(rep.f1[0], 4) == 0.6667


@criterion("binning totality")
def test_binning_totality():
    res_grades = {grade_from_average(k / 1000) for k in range(1001)}
    assert res_grades == set(ResolutionGrade)
    web = {bin_webscore(k / 1000) for k in range(3600, 10001)}
    assert len(web) == 5
    named = {9.0: "excellent", 5.60: "good", 8.60: "excellent", 7.0: "good", 4.60: "bad", 3.60: "very_bad"}
    assert all(bin_webscore(s).value == g for s, g in named.items())
    assert grade_from_average(0.4) is ResolutionGrade.C
    assert grade_from_average(0.8) is ResolutionGrade.A


@criterion("extraction fixtures")
def test_extraction_fixtures(http_server):
    score = score_extraction_corpus()
    assert score["documents"] == 20
    assert score["mobile"] == (1.0, 1.0) and score["contacts"] == (1.0, 1.0)
    url = http_server.add("/acceptance-slow", "<html><body>slow</body></html>", delay=0.300)
    samples = [measure_load_time(url, timeout=5).seconds for _ in range(10)]
    print("load times " + " ".join(f"{s:.3f}" for s in samples))
    assert all(0.300 <= s <= 0.500 for s in samples)


@criterion("CLI contract")
def test_cli_contract(tmp_path, capsys, closed_port_url, monkeypatch):
    monkeypatch.delenv("AUDIT_CONFIG", raising=False)
    records, _ = planted_corpus(n=60, seed=4)
    write_csv(records, tmp_path / "raw.csv")
    seen = set()

    def expect(code, *argv, schema=None):
        try:
            got, out, err = _run(capsys, *argv)
        except SystemExit as exc:
            got, out = exc.code, ""
            capsys.readouterr()
        assert got == code, (argv, got)
        seen.add(got)
        if schema:
            validate(json.loads(out), schema, error=AssertionError)
        return out

    for name in ("a", "b"):
        expect(0, "label", "--in", tmp_path / "raw.csv", "--out", tmp_path / f"{name}.csv",
               schema="label_summary")
        expect(0, "train-svm", "--in", tmp_path / f"{name}.csv", "--model", tmp_path / f"{name}.json",
               "--grid", schema="svm_train_report")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    expect(0, "eval", "--svm-model", tmp_path / "a.json", "--in", tmp_path / "a.csv", schema="metrics_report")
    expect(0, "predict-svm", "--model", tmp_path / "a.json", "--in", tmp_path / "raw.csv",
           "--out", tmp_path / "p.csv", schema="predict_summary")
    expect(0, "audit", "--html", HTML_DIR / "s02_fixed_width.html", "--no-net", "--load-time", 4,
           "--resolution-grade", "D", "--model", tmp_path / "a.json", schema="audit_report")
    expect(2, "extract", "--url", closed_port_url, "--resolution-grade", "A", "--out", tmp_path / "x.csv")
    expect(3, "label", "--in", tmp_path / "absent.csv", "--out", tmp_path / "x.csv")
    write_csv([AuditRecord("https://a.example", 1.0, True, ResolutionGrade.A, True)] * 3, tmp_path / "few.csv")
    expect(4, "label", "--in", tmp_path / "few.csv", "--out", tmp_path / "x.csv")
    (tmp_path / "bad.json").write_text("{")
    expect(5, "eval", "--svm-model", tmp_path / "bad.json", "--in", tmp_path / "a.csv")
    expect(64, "no-such-verb")
    assert seen == {0, 2, 3, 4, 5, 64}
