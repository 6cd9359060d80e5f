"""Acceptance suite: one test per criterion, each at its stated tolerance.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import json
import math
import time

import numpy as np
import pytest

from ampgan import classifiers as clf
from ampgan import config as config_mod
from ampgan.cli import main
from ampgan.encoding import (PseAacConfig, SparseConfig, encode_aac, encode_dataset, encode_pseaac, encode_sparse,
                             padded_dft)
from ampgan.evaluation import (ConfusionMatrix, ExperimentConfig, confusion, mcc, mccv_splits, n_test_for,
                               run_experiment)
from ampgan.gan import (GanConfig, balance_dataset, fit_scaler, gan_to_bytes, generate, generate_scaled,
                        train_wgan_gp)
from ampgan.sequence_io import AMINO_ACIDS, load_dataset
from ampgan.toy import toy_path
from oracles import check_random_net, dft_direct, mcc_direct


@pytest.fixture
def notes(request):
    request.node.criterion_notes = []
    return request.node.criterion_notes


# -- 1 ------------------------------------------------------------------------

@pytest.mark.criterion(1, "MCC matches a direct oracle; tagged examples exact; < 1 s")
def test_mcc_oracle(notes):
    rng = np.random.default_rng(1)
    pairs = [(rng.integers(0, 2, 500), rng.integers(0, 2, 500)) for _ in range(1000)]
    start = time.perf_counter()
    ours = [mcc(confusion(t, p)) for t, p in pairs]
    elapsed = time.perf_counter() - start
    worst = max(abs(m - mcc_direct(t.tolist(), p.tolist())) for m, (t, p) in zip(ours, pairs))
    y = rng.integers(0, 2, 500)
    assert mcc(confusion(y, y)) == 1.0
    assert mcc(confusion(y, 1 - y)) == -1.0
    hand = (50 * 40 - 10 * 5) / math.sqrt(60 * 55 * 50 * 45)
    assert mcc(ConfusionMatrix(tp=50, tn=40, fp=10, fn=5)) == hand
    # the quoted approximation 0.7157 agrees to within 1e-4
    assert abs(hand - 0.7157) < 1e-4
    notes.append(f"max |diff| {worst:.1e}, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert elapsed < 1.0


# -- 2 ------------------------------------------------------------------------

@pytest.mark.criterion(2, "AAC/PseAAC sum to 1, PseAAC(0) == AAC, sparse ones count; < 10 s")
def test_encoder_normalization(notes):
    rng = np.random.default_rng(2)
    letters = np.array(list(AMINO_ACIDS))
    seqs = ["".join(rng.choice(letters, int(rng.integers(6, 61)))) for _ in range(10_000)]
    pse, pse0, sparse = PseAacConfig(), PseAacConfig(lam=0), SparseConfig(max_len=40)
    start = time.perf_counter()
    worst = 0.0
    for s in seqs:
        a = encode_aac(s)
        p = encode_pseaac(s, pse)
        worst = max(worst, abs(a.sum() - 1), abs(p.sum() - 1))
        assert np.array_equal(encode_pseaac(s, pse0), a)
        assert encode_sparse(s, sparse).sum() == min(len(s), 40)
    elapsed = time.perf_counter() - start
    notes.append(f"max |sum-1| {worst:.1e}, {elapsed:.1f} s")
    assert worst <= 1e-12
    assert elapsed < 10.0


# -- 3 ------------------------------------------------------------------------

@pytest.mark.criterion(3, "padded DFT matches a direct O(n^2) DFT and Parseval; < 5 s")
def test_dft_correctness(notes):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    worst_dft = worst_parseval = 0.0
    for _ in range(100):
        length = int(rng.integers(1, 33))
        n_fft = 1 << max(0, (length - 1).bit_length())
        n_fft = max(n_fft, int(rng.choice([n_fft, 32, 64])))
        x = rng.normal(size=length)
        X = padded_dft(x, n_fft)
        ref = np.array(dft_direct(x, n_fft))
        worst_dft = max(worst_dft, float(np.max(np.abs(X - ref)) / np.max(np.abs(ref))))
        energy = np.sum(x * x)
        worst_parseval = max(worst_parseval, abs(np.sum(np.abs(X) ** 2) / n_fft - energy) / energy)
    elapsed = time.perf_counter() - start
    notes.append(f"DFT rel {worst_dft:.1e}, Parseval rel {worst_parseval:.1e}, {elapsed:.2f} s")
    assert worst_dft <= 1e-9 and worst_parseval <= 1e-9
    assert elapsed < 5.0


# -- 4 ------------------------------------------------------------------------

@pytest.mark.criterion(4, "backward and penalty gradients match finite differences; < 60 s")
def test_gradient_fidelity(notes):
    start = time.perf_counter()
    results = [check_random_net(seed, max_width=64) for seed in range(20)]
    elapsed = time.perf_counter() - start
    worst_b = max(r[0] for r in results)
    worst_p = max(r[1] for r in results)
    notes.append(f"backward {worst_b:.1e}, penalty {worst_p:.1e}, {sum(r[2] for r in results)} coords, "
                 f"{elapsed:.0f} s")
    assert worst_b <= 1e-4 and worst_p <= 1e-4
    assert elapsed < 60.0


# -- 5 ------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(5, "WGAN-GP on a 2-D Gaussian: < 120 s, means within 0.15, in range, reproducible")
def test_wgan_gp_sanity(notes):
    rng = np.random.default_rng(5)
    real = rng.normal(loc=[1.0, -2.0], scale=[0.5, 2.0], size=(200, 2))
    cfg = GanConfig()
    start = time.perf_counter()
    model = train_wgan_gp(real, cfg)
    elapsed = time.perf_counter() - start
    scaled_fake = generate_scaled(model, 1000, 11)
    scaled_real = fit_scaler(real).apply(real)
    gap = np.abs(scaled_fake.mean(axis=0) - scaled_real.mean(axis=0))
    fake = generate(model, 1000, 11)
    twin = train_wgan_gp(real, cfg)
    notes.append(f"train {elapsed:.0f} s, mean gaps {gap[0]:.3f}/{gap[1]:.3f}")
    assert elapsed < 120.0
    assert np.all(gap <= 0.15)
    assert np.all(fake >= real.min(axis=0)) and np.all(fake <= real.max(axis=0))
    assert gan_to_bytes(model) == gan_to_bytes(twin)
    assert np.array_equal(generate(twin, 1000, 11), fake)


# -- 6 ------------------------------------------------------------------------

def _toy_matrix(name):
    cfg = config_mod.load_config()
    ds = load_dataset(name, toy_path(name))
    return cfg, encode_dataset(ds, config_mod.encoder_configs(cfg), cfg["encoders"]["enabled"])


@pytest.mark.slow
@pytest.mark.criterion(6, "balancing equalizes classes, keeps real rows, labels synthetic rows")
def test_balancing_contract(notes):
    cfg, fm = _toy_matrix("toy_imbalanced")
    counts = np.bincount(fm.labels)
    minority = int(np.argmin(counts))
    bal = balance_dataset(fm.rows, fm.labels, config_mod.gan_config(cfg))
    n_real = len(fm.labels)
    assert np.bincount(bal.labels).tolist() == [counts.max(), counts.max()]
    assert np.array_equal(bal.features[:n_real], fm.rows)
    assert np.array_equal(bal.labels[:n_real], fm.labels)
    assert bal.provenance[:n_real] == ["real"] * n_real
    assert bal.provenance[n_real:] == ["synthetic"] * (counts.max() - counts.min())
    assert np.all(bal.labels[n_real:] == minority)

    _, even = _toy_matrix("toy_balanced")
    same = balance_dataset(even.rows, even.labels, config_mod.gan_config(cfg))
    assert np.array_equal(same.features, even.rows) and np.array_equal(same.labels, even.labels)
    assert same.n_synthetic == 0
    notes.append(f"{counts.tolist()} -> {np.bincount(bal.labels).tolist()}, {bal.n_synthetic} synthetic")


# -- 7 ------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(7, "NB posterior, XOR tree, fold-mean MCC >= 0.95 on blobs; < 120 s")
def test_classifier_oracles(notes):
    start = time.perf_counter()
    # 1-D two-Gaussian construction, checked against Bayes' rule by hand
    X1 = np.array([[-1.0], [0.0], [1.0], [3.0], [4.0], [5.0]])
    y1 = np.array([0, 0, 0, 1, 1, 1])
    nb = clf.train(clf.ClassifierSpec("gaussian_nb", {"var_smoothing": 0.0}), X1, y1)
    var = 2.0 / 3.0
    for x in (-1.5, 0.5, 2.0, 2.7, 6.0):
        l0 = math.exp(-x ** 2 / (2 * var))
        l1 = math.exp(-(x - 4.0) ** 2 / (2 * var))
        assert abs(clf.predict_proba(nb, np.array([[x]]))[0] - l1 / (l0 + l1)) <= 1e-9

    Xx = np.tile([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]], (10, 1))
    yx = np.tile([0, 1, 1, 0], 10)
    tree = clf.train(clf.ClassifierSpec("tree"), Xx, yx)
    assert np.mean(clf.predict(tree, Xx) == yx) == 1.0

    rng = np.random.default_rng(7)
    X = np.vstack([rng.normal(0.0, 1.0, (200, 10)), rng.normal(3.0, 1.0, (200, 10))])
    y = np.array([0] * 200 + [1] * 200)
    reports = run_experiment(X, y, "blobs", [], "off", ExperimentConfig(), seed=0)
    elapsed = time.perf_counter() - start
    means = {k: r.mean_mcc for k, r in reports.items()}
    notes.append(", ".join(f"{k} {v:.3f}" for k, v in means.items()) + f"; {elapsed:.0f} s")
    assert set(means) == {*clf.KINDS, "ensemble"}
    assert all(v >= 0.95 for v in means.values())
    assert elapsed < 120.0


# -- 8 ------------------------------------------------------------------------

@pytest.mark.criterion(8, "MCCV splits disjoint, stratified, nearest-integer test counts; no synthetic test rows")
def test_split_hygiene(notes):
    sizes = [(398, 187), (848, 394), (67, 133)]
    for n_pos, n_neg in sizes:
        y = np.array([1] * n_pos + [0] * n_neg)
        for seed in range(100):
            plan = mccv_splits(y, 5, 0.2, seed)
            for tr, te in plan.folds:
                assert np.intersect1d(tr, te).size == 0
                assert len(tr) + len(te) == len(y)
                for c, n in ((1, n_pos), (0, n_neg)):
                    k = int(np.sum(y[te] == c))
                    assert k == math.floor(0.2 * n + 0.5) == n_test_for(n, 0.2)
                    assert abs(k - 0.2 * n) <= 1

    rng = np.random.default_rng(8)
    X = np.vstack([rng.normal(1, 1, (30, 3)), rng.normal(0, 1, (70, 3))])
    y = np.array([1] * 30 + [0] * 70)
    tiny = GanConfig(latent_dim=4, generator_hidden=(8,), critic_hidden=(8,), generator_steps=3, batch_size=8)
    cfg = ExperimentConfig(classifiers=["logistic", "gaussian_nb"], gan=tiny)
    audited = 0
    for seed in range(10):
        for rep in run_experiment(X, y, "audit", [], "per_fold", cfg, seed).values():
            for f in rep.folds:
                assert f.n_synthetic_train == 32 and f.n_synthetic_test == 0
                audited += 1
    # the audit does see synthetic rows when balancing precedes the split
    leaky = run_experiment(X, y, "audit", [], "paper_faithful", cfg, 0)
    assert sum(f.n_synthetic_test for f in leaky["logistic"].folds) > 0
    notes.append(f"{len(sizes) * 100} plans, {audited} audited folds")


# -- 9 and 10 -----------------------------------------------------------------------

def _metric_bytes(path):
    data = json.loads(path.read_text())
    data.pop("created")
    # each run writes to its own directory, which the echoed config records
    data["config"].pop("out")
    for f in data["folds"]:
        f.pop("wall_time")
    return json.dumps(data, sort_keys=True).encode()


@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory):
    runs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"toy_run{k}")
        start = time.perf_counter()
        code = main(["run", "--out", str(out)])
        runs.append((out, code, time.perf_counter() - start))
    return runs


@pytest.mark.slow
@pytest.mark.criterion(9, "toy run < 5 min, 12 reports per dataset, rerun byte-identical")
def test_end_to_end_reproducibility(toy_runs, notes):
    (first, code1, t1), (second, code2, t2) = toy_runs
    assert code1 == code2 == 0
    reports = sorted(p.name for p in (first / "reports").glob("*.json"))
    for ds in ("toy_balanced", "toy_imbalanced"):
        mine = [r for r in reports if r.startswith(ds + "__")]
        assert len(mine) == 12
        assert {r.split("__")[1] for r in mine} == {*clf.KINDS, "ensemble"}
    assert reports == sorted(p.name for p in (second / "reports").glob("*.json"))
    for name in reports:
        assert _metric_bytes(first / "reports" / name) == _metric_bytes(second / "reports" / name)
    for name in ("table.csv", "directional.json", "summary.txt"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    notes.append(f"runs took {t1:.0f} s and {t2:.0f} s")
    assert t1 < 300 and t2 < 300


@pytest.mark.slow
@pytest.mark.criterion(10, "ensemble -G vs +G on the imbalanced toy set is reported and flagged (soft)")
def test_directional_report(toy_runs, notes):
    out = toy_runs[0][0]
    direction = {d["dataset"]: d for d in json.loads((out / "directional.json").read_text())}
    d = direction["toy_imbalanced"]
    expected = "+G" if d["ensemble_plus_G"] > d["ensemble_minus_G"] else \
        "-G" if d["ensemble_minus_G"] > d["ensemble_plus_G"] else "tie"
    assert d["higher"] == expected and d["balance_mode"] == "per_fold"
    assert "toy_imbalanced: -G" in (out / "summary.txt").read_text()
    notes.append(f"-G {d['ensemble_minus_G']:.3f} vs +G {d['ensemble_plus_G']:.3f}, higher {d['higher']}")
