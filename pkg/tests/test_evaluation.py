import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ampgan.evaluation import (
    ConfusionMatrix, EvaluationError, EvaluationReport, ExperimentConfig, FoldResult, accuracy_f1,
    confusion, mcc, mccv_splits, n_test_for, run_experiment,
)
from ampgan.gan import GanConfig
from oracles import mcc_direct

binary = st.lists(st.integers(0, 1), min_size=1, max_size=80)


def test_mcc_examples():
    y = np.array([1, 0, 1, 1, 0])
    assert mcc(confusion(y, y)) == 1.0
    assert mcc(confusion(y, 1 - y)) == -1.0
    assert mcc(ConfusionMatrix(tp=50, tn=40, fp=10, fn=5)) == pytest.approx(0.7156264473321343, abs=1e-15)


def test_mcc_degenerate_is_zero():
    assert mcc(confusion([1, 1, 0], [1, 1, 1])) == 0.0
    assert mcc(confusion([1, 1], [1, 1])) == 0.0


def test_confusion_validation():
    with pytest.raises(EvaluationError, match="equal length"):
        confusion([0, 1], [0])
    with pytest.raises(EvaluationError, match="only 0 and 1"):
        confusion([0, 2], [0, 1])
    with pytest.raises(EvaluationError, match="empty"):
        confusion([], [])
    with pytest.raises(EvaluationError, match="non-negative"):
        ConfusionMatrix(-1, 0, 0, 0)


def test_accuracy_f1():
    acc, f1 = accuracy_f1(ConfusionMatrix(tp=50, tn=40, fp=10, fn=5))
    assert acc == pytest.approx(90 / 105)
    assert f1 == pytest.approx(100 / 115)


@given(st.data())
@settings(max_examples=100)
def test_mcc_matches_oracle_and_symmetries(data):
    t = data.draw(binary)
    p = data.draw(st.lists(st.integers(0, 1), min_size=len(t), max_size=len(t)))
    m = mcc(confusion(t, p))
    assert abs(m - mcc_direct(t, p)) <= 1e-12
    assert -1.0 <= m <= 1.0
    assert mcc(confusion(p, t)) == pytest.approx(m, abs=1e-12)
    flipped = mcc(confusion([1 - v for v in t], [1 - v for v in p]))
    assert flipped == pytest.approx(m, abs=1e-12)


@given(binary.filter(lambda y: 0 < sum(y) < len(y)))
def test_perfect_and_inverted(y):
    y = np.array(y)
    assert mcc(confusion(y, y)) == 1.0
    assert mcc(confusion(y, 1 - y)) == -1.0


@pytest.mark.parametrize("n, expected", [(398, 80), (187, 37), (2, 1), (3, 1), (10, 2), (12, 2), (13, 3)])
def test_n_test_for(n, expected):
    assert n_test_for(n, 0.2) == expected


@given(st.integers(2, 300), st.integers(2, 300), st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_splits_are_disjoint_stratified_and_covering(n_pos, n_neg, seed):
    y = np.array([1] * n_pos + [0] * n_neg)
    plan = mccv_splits(y, 5, 0.2, seed)
    assert len(plan.folds) == 5
    for tr, te in plan.folds:
        assert np.intersect1d(tr, te).size == 0
        assert np.union1d(tr, te).size == len(y)
        assert np.sum(y[te] == 1) == n_test_for(n_pos, 0.2)
        assert np.sum(y[te] == 0) == n_test_for(n_neg, 0.2)


def test_splits_seeded():
    y = np.array([1] * 30 + [0] * 20)
    a, b, c = mccv_splits(y, seed=1), mccv_splits(y, seed=1), mccv_splits(y, seed=2)
    assert all(np.array_equal(x[1], z[1]) for x, z in zip(a.folds, b.folds))
    assert any(not np.array_equal(x[1], z[1]) for x, z in zip(a.folds, c.folds))


def test_split_errors():
    with pytest.raises(EvaluationError, match="fewer than 2"):
        mccv_splits(np.array([1, 0, 0, 0]))
    with pytest.raises(EvaluationError, match="test_fraction"):
        mccv_splits(np.array([1, 1, 0, 0]), test_fraction=1.0)


def _report(mccs):
    folds = [FoldResult(i, ConfusionMatrix(1, 1, 0, 0), m, 1.0, 1.0, 10, 2) for i, m in enumerate(mccs)]
    return EvaluationReport("d", ["aac"], True, "per_fold", "tree", folds, 3)


def test_report_statistics_and_round_trip():
    rep = _report([0.5, 0.7, 0.9])
    assert rep.tag == "+G"
    assert rep.mean_mcc == pytest.approx(0.7)
    assert rep.std_mcc == pytest.approx(0.2)
    back = EvaluationReport.from_dict(rep.to_dict())
    assert back == rep
    assert _report([0.4]).std_mcc == 0.0


FAST_GAN = GanConfig(latent_dim=8, generator_hidden=(16,), critic_hidden=(16,), generator_steps=10, batch_size=16)


def _data(n_pos=20, n_neg=40, d=4, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(2, 1, (n_pos, d)), rng.normal(0, 1, (n_neg, d))])
    return X, np.array([1] * n_pos + [0] * n_neg)


def _cfg(**kw):
    return ExperimentConfig(classifiers=["logistic", "tree"], hyper={"tree": {"max_depth": 3}}, gan=FAST_GAN,
                            n_folds=3, **kw)


@pytest.mark.parametrize("mode", ["off", "per_fold", "paper_faithful"])
def test_run_experiment_modes(mode):
    X, y = _data()
    reps = run_experiment(X, y, "d", ["aac"], mode, _cfg(), seed=1)
    assert list(reps) == ["logistic", "tree", "ensemble"]
    for rep in reps.values():
        assert len(rep.folds) == 3 and rep.balance_mode == mode
        assert rep.tag == ("-G" if mode == "off" else "+G")
        for f in rep.folds:
            if mode == "paper_faithful":
                # balanced to 40 + 40 before splitting
                assert f.n_test == 16 and f.n_train == 64
            else:
                assert f.n_test == 12
            if mode == "off":
                assert f.n_train == 48 and f.n_synthetic_train == 0
            if mode == "per_fold":
                # 32 negatives vs 16 positives in training
                assert f.n_train == 64 and f.n_synthetic_train == 16 and f.n_synthetic_test == 0


def test_per_fold_never_scores_synthetic_rows():
    X, y = _data(15, 45)
    for seed in range(3):
        for rep in run_experiment(X, y, "d", [], "per_fold", _cfg(), seed=seed).values():
            assert all(f.n_synthetic_test == 0 and f.n_synthetic_train > 0 for f in rep.folds)


def test_run_experiment_is_deterministic():
    X, y = _data()
    a = run_experiment(X, y, "d", [], "per_fold", _cfg(), seed=5)
    b = run_experiment(X, y, "d", [], "per_fold", _cfg(), seed=5)
    strip = lambda r: [{k: v for k, v in f.items() if k != "wall_time"} for f in r.to_dict()["folds"]]
    assert all(strip(a[k]) == strip(b[k]) for k in a)


def test_run_experiment_out_of_fold_stacking_and_no_ensemble():
    X, y = _data()
    reps = run_experiment(X, y, "d", [], "off", _cfg(stacking_mode="out_of_fold"), seed=0)
    assert "ensemble" in reps
    cfg = _cfg()
    cfg.ensemble = False
    assert list(run_experiment(X, y, "d", [], "off", cfg)) == ["logistic", "tree"]


def test_run_experiment_errors():
    X, y = _data()
    with pytest.raises(EvaluationError, match="unknown balance"):
        run_experiment(X, y, balance="sometimes")
    X[:, 0] = np.nan
    with pytest.raises(EvaluationError, match="fold 0 failed"):
        run_experiment(X, y, "d", [], "off", _cfg())
