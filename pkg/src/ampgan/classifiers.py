"""Base classifiers and the stacking ensemble.

All five base learners are implemented here on numpy so that their fitting
rules, tie-breaking and random streams are fully pinned down: L2 logistic
regression, Gaussian naive Bayes, a Gini decision tree, a random forest of
such trees, and a one-hidden-layer MLP trained with :mod:`ampgan.nn`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from . import nn

KINDS = ("logistic", "forest", "gaussian_nb", "tree", "mlp")
CHECKPOINT_VERSION = 1

DEFAULT_HYPER = {
    "logistic": {"l2": 1e-4, "tol": 1e-6, "max_iter": 1000},
    "forest": {"n_trees": 100, "max_features": "sqrt", "bootstrap": True, "max_depth": None,
               "min_samples_split": 2},
    "gaussian_nb": {"var_smoothing": 1e-9},
    "tree": {"max_depth": None, "min_samples_split": 2, "max_features": None},
    "mlp": {"hidden": 100, "lr": 1e-3, "epochs": 200, "batch_size": 32, "beta1": 0.9, "beta2": 0.999},
}


class ClassifierError(ValueError):
    pass


@dataclass
class ClassifierSpec:
    kind: str
    hyper: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ClassifierError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.hyper) - set(DEFAULT_HYPER[self.kind])
        if unknown:
            raise ClassifierError(f"{self.kind}: unknown hyperparameter(s) {sorted(unknown)}")
        self.hyper = {**DEFAULT_HYPER[self.kind], **self.hyper}
        h = self.hyper
        if self.kind == "forest" and h["n_trees"] < 1:
            raise ClassifierError("forest needs n_trees >= 1")
        if self.kind in ("forest", "tree"):
            if h["max_depth"] is not None and h["max_depth"] < 1:
                raise ClassifierError("max_depth must be >= 1 or None (unlimited)")
            if h["min_samples_split"] < 2:
                raise ClassifierError("min_samples_split must be >= 2")
        if self.kind == "gaussian_nb" and h["var_smoothing"] < 0:
            raise ClassifierError("var_smoothing must be >= 0")
        if self.kind == "mlp" and (h["hidden"] < 1 or h["epochs"] < 0 or h["batch_size"] < 1):
            raise ClassifierError("mlp needs hidden >= 1, epochs >= 0, batch_size >= 1")


@dataclass
class TrainedModel:
    spec: ClassifierSpec
    params: dict
    feature_dim: int

    def predict_proba(self, X):
        return predict_proba(self, X)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ClassifierError("X must be 2-D with one row per label")
    if len(y) < 2:
        raise ClassifierError("at least 2 training rows are required")
    if not np.all(np.isfinite(X)):
        raise ClassifierError("features contain non-finite values")
    if set(np.unique(y).tolist()) - {0, 1}:
        raise ClassifierError("labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise ClassifierError("both classes must be present in the training labels")
    return X, y.astype(int)


# -- logistic regression -----------------------------------------------------

def _logistic_objective(theta, X, y, l2):
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    # mean negative log-likelihood, stable in z
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    r = (expit(z) - y) / len(y)
    grad = np.append(X.T @ r + l2 * w, r.sum())
    return loss, grad


def _fit_logistic(X, y, h):
    theta0 = np.zeros(X.shape[1] + 1)
    opts = {"maxiter": h["max_iter"], "gtol": h["tol"] / math.sqrt(X.shape[1] + 1), "ftol": 0.0, "maxcor": 20}
    res = minimize(_logistic_objective, theta0, args=(X, y, h["l2"]), jac=True, method="L-BFGS-B", options=opts)
    _, grad = _logistic_objective(res.x, X, y, h["l2"])
    # gtol bounds the max-abs component, so the 2-norm is within tol
    return {"weights": res.x[:-1], "bias": float(res.x[-1]),
            "grad_norm": float(np.linalg.norm(grad)), "iterations": int(res.nit)}


def logistic_gradient_norm(model: TrainedModel, X, y) -> float:
    theta = np.append(model.params["weights"], model.params["bias"])
    _, grad = _logistic_objective(theta, np.asarray(X, float), np.asarray(y), model.spec.hyper["l2"])
    return float(np.linalg.norm(grad))


# -- Gaussian naive Bayes ----------------------------------------------------

def _fit_nb(X, y, h):
    eps = h["var_smoothing"] * float(np.max(np.var(X, axis=0)))
    means, variances, priors = [], [], []
    for c in (0, 1):
        Xc = X[y == c]
        means.append(Xc.mean(axis=0))
        variances.append(Xc.var(axis=0) + eps)
        priors.append(len(Xc) / len(X))
    return {"means": np.array(means), "variances": np.array(variances), "priors": np.array(priors)}


def _nb_proba(p, X):
    log_lik = []
    for c in (0, 1):
        var = p["variances"][c]
        ll = -0.5 * np.sum(np.log(2 * np.pi * var)) - 0.5 * np.sum((X - p["means"][c]) ** 2 / var, axis=1)
        log_lik.append(ll + np.log(p["priors"][c]))
    joint = np.stack(log_lik, axis=1)
    return np.exp(joint[:, 1] - logsumexp(joint, axis=1))


# -- decision tree -----------------------------------------------------------

@dataclass
class _Tree:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    n0: list = field(default_factory=list)
    n1: list = field(default_factory=list)

    def add(self, n0, n1):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.n0.append(int(n0))
        self.n1.append(int(n1))
        return len(self.feature) - 1

    def to_arrays(self):
        return {"feature": np.array(self.feature, dtype=np.intp), "threshold": np.array(self.threshold),
                "left": np.array(self.left, dtype=np.intp), "right": np.array(self.right, dtype=np.intp),
                "n0": np.array(self.n0, dtype=np.int64), "n1": np.array(self.n1, dtype=np.int64)}


def _best_split(Xn, yn, features):
    """Lowest weighted Gini over ``features``; ties go to the lowest feature
    index, then the lowest threshold. Returns (feature, threshold) or None."""
    m = len(yn)
    cols = Xn[:, features]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    ys = yn[order]
    pos_left = np.cumsum(ys, axis=0)[:-1].astype(float)
    n_left = np.arange(1, m, dtype=float)[:, None]
    n_right = m - n_left
    pos_right = ys.sum(axis=0) - pos_left
    impurity = (pos_left * (n_left - pos_left) / n_left + pos_right * (n_right - pos_right) / n_right)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    impurity = np.where(valid, impurity, np.inf).T  # features x positions
    best = impurity.min()
    fi, pi = np.argwhere(impurity <= best + 1e-12 * max(1.0, abs(best)))[0]
    lo, hi = xs[pi, fi], xs[pi + 1, fi]
    thr = (lo + hi) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return int(features[fi]), float(thr)


def _grow_tree(X, y, h, rng=None):
    """Greedy Gini tree; ``rng`` drives per-node feature subsets (forest)."""
    d = X.shape[1]
    k = _n_split_features(h.get("max_features"), d)
    max_depth = h["max_depth"]
    tree = _Tree()
    root = tree.add((y == 0).sum(), (y == 1).sum())
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        n1 = int(yn.sum())
        if n1 == 0 or n1 == len(yn) or len(yn) < h["min_samples_split"]:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        if k < d:
            features = np.sort(rng.choice(d, size=k, replace=False))
        else:
            features = np.arange(d)
        split = _best_split(X[idx], yn, features)
        if split is None:
            continue
        f, thr = split
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        tree.feature[node], tree.threshold[node] = f, thr
        tree.left[node] = tree.add((y[li] == 0).sum(), (y[li] == 1).sum())
        tree.right[node] = tree.add((y[ri] == 0).sum(), (y[ri] == 1).sum())
        stack.append((tree.right[node], ri, depth + 1))
        stack.append((tree.left[node], li, depth + 1))
    return tree.to_arrays()


def _n_split_features(max_features, d):
    if max_features is None or max_features == "all":
        return d
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    if isinstance(max_features, int) and max_features >= 1:
        return min(d, max_features)
    raise ClassifierError(f"invalid max_features {max_features!r}")


def _tree_leaves(t, X):
    node = np.zeros(len(X), dtype=np.intp)
    rows = np.arange(len(X))
    while True:
        inner = t["feature"][node] >= 0
        if not inner.any():
            return node
        r, nd = rows[inner], node[inner]
        go_left = X[r, t["feature"][nd]] <= t["threshold"][nd]
        node[r] = np.where(go_left, t["left"][nd], t["right"][nd])


def _tree_proba(t, X):
    leaf = _tree_leaves(t, X)
    return t["n1"][leaf] / (t["n0"][leaf] + t["n1"][leaf])


def _fit_forest(X, y, h, seed):
    trees = []
    for child in np.random.SeedSequence(seed).spawn(h["n_trees"]):
        rng = np.random.default_rng(child)
        if h["bootstrap"]:
            idx = rng.integers(0, len(y), size=len(y))
            trees.append(_grow_tree(X[idx], y[idx], h, rng))
        else:
            trees.append(_grow_tree(X, y, h, rng))
    return {"trees": trees}


# -- multilayer perceptron ---------------------------------------------------

def _fit_mlp(X, y, h, seed):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    init_seq, batch_seq = np.random.SeedSequence(seed).spawn(2)
    # the sigmoid is folded into the loss; the net itself ends in identity
    net = nn.init_net([X.shape[1], h["hidden"], 1], ["relu", "identity"], seed=init_seq)
    state = nn.AdamState.for_net(net, lr=h["lr"], beta1=h["beta1"], beta2=h["beta2"])
    rng = np.random.default_rng(batch_seq)
    target = y.astype(float)[:, None]
    bs = h["batch_size"]
    for _ in range(h["epochs"]):
        perm = rng.permutation(len(Z))
        for start in range(0, len(Z), bs):
            b = perm[start: start + bs]
            cache, logits = nn.forward(net, Z[b])
            grad = nn.backward(net, cache, (expit(logits) - target[b]) / len(b))
            nn.adam_step(net, grad, state)
    return {"net": net, "mean": mean, "scale": scale}


def _mlp_proba(p, X):
    return expit(p["net"]((X - p["mean"]) / p["scale"])[:, 0])


# -- public API --------------------------------------------------------------

def train(spec: ClassifierSpec, X, y) -> TrainedModel:
    X, y = _check_xy(X, y)
    h = spec.hyper
    if spec.kind == "logistic":
        params = _fit_logistic(X, y, h)
    elif spec.kind == "gaussian_nb":
        params = _fit_nb(X, y, h)
    elif spec.kind == "tree":
        rng = np.random.default_rng(spec.seed)
        params = {"tree": _grow_tree(X, y, h, rng)}
    elif spec.kind == "forest":
        params = _fit_forest(X, y, h, spec.seed)
    else:
        params = _fit_mlp(X, y, h, spec.seed)
    return TrainedModel(spec, params, X.shape[1])


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise ClassifierError(f"expected {model.feature_dim} features, got shape {X.shape}")
    p, kind = model.params, model.spec.kind
    if kind == "logistic":
        return expit(X @ p["weights"] + p["bias"])
    if kind == "gaussian_nb":
        return _nb_proba(p, X)
    if kind == "tree":
        return _tree_proba(p["tree"], X)
    if kind == "forest":
        return np.mean([_tree_proba(t, X) for t in p["trees"]], axis=0)
    return _mlp_proba(p, X)


def predict(model, X, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ClassifierError(f"threshold must lie in [0, 1], got {threshold}")
    proba = model.predict_proba(X) if hasattr(model, "predict_proba") else predict_proba(model, X)
    return (proba >= threshold).astype(int)


# -- stacking ----------------------------------------------------------------

STACK_MODES = ("paper", "out_of_fold")


@dataclass
class StackingModel:
    base: list
    meta: TrainedModel
    mode: str = "paper"

    @property
    def feature_dim(self):
        return self.base[0].feature_dim

    def meta_features(self, X) -> np.ndarray:
        return np.column_stack([predict_proba(m, X) for m in self.base])

    def predict_proba(self, X):
        return predict_stacking(self, X)


def _meta_spec(meta_spec):
    meta_spec = meta_spec or ClassifierSpec("logistic")
    if meta_spec.kind != "logistic":
        raise ClassifierError("the meta-classifier must be logistic regression")
    return meta_spec


def stack_from_bases(bases, meta_spec, X, y) -> StackingModel:
    """``paper`` stacking over already-trained bases fitted on (X, y)."""
    if len(bases) < 2:
        raise ClassifierError("stacking needs at least 2 base classifiers")
    X, y = _check_xy(X, y)
    meta_X = np.column_stack([predict_proba(m, X) for m in bases])
    return StackingModel(list(bases), train(_meta_spec(meta_spec), meta_X, y), "paper")


def train_stacking(specs, meta_spec, X, y, mode: str = "paper", inner_folds: int = 5) -> StackingModel:
    if len(specs) < 2:
        raise ClassifierError("stacking needs at least 2 base classifiers")
    if mode not in STACK_MODES:
        raise ClassifierError(f"unknown stacking mode {mode!r}")
    X, y = _check_xy(X, y)
    meta_spec = _meta_spec(meta_spec)
    bases = [train(s, X, y) for s in specs]
    if mode == "paper":
        return stack_from_bases(bases, meta_spec, X, y)

    # out-of-fold meta-features from stratified cross-fitting
    meta_X = np.zeros((len(y), len(specs)))
    rng = np.random.default_rng(np.random.SeedSequence([meta_spec.seed, 7919]))
    fold_of = np.zeros(len(y), dtype=int)
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold_of[idx] = np.arange(len(idx)) % inner_folds
    for f in range(inner_folds):
        test = fold_of == f
        if not test.any():
            continue
        train_idx = ~test
        if len(np.unique(y[train_idx])) < 2:
            raise ClassifierError("an inner fold lost a class; too few samples for out_of_fold stacking")
        for j, s in enumerate(specs):
            meta_X[test, j] = predict_proba(train(s, X[train_idx], y[train_idx]), X[test])
    return StackingModel(bases, train(meta_spec, meta_X, y), "out_of_fold")


def predict_stacking(model: StackingModel, X) -> np.ndarray:
    return predict_proba(model.meta, model.meta_features(X))


# -- checkpoints -------------------------------------------------------------

def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype), "shape": list(obj.shape)}
    if isinstance(obj, nn.DenseNet):
        return {"__densenet__": nn.net_to_dict(obj)}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_encode(v) for v in obj]
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"]).reshape(obj["shape"])
        if "__densenet__" in obj:
            return nn.net_from_dict(obj["__densenet__"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def model_to_dict(model) -> dict:
    if isinstance(model, StackingModel):
        return {"version": CHECKPOINT_VERSION, "type": "stacking", "mode": model.mode,
                "base": [model_to_dict(m) for m in model.base], "meta": model_to_dict(model.meta)}
    return {"version": CHECKPOINT_VERSION, "type": "base", "spec": asdict(model.spec),
            "feature_dim": model.feature_dim, "params": _encode(model.params)}


def model_from_dict(d: dict):
    if d.get("version") != CHECKPOINT_VERSION:
        raise ClassifierError(f"unsupported checkpoint version {d.get('version')!r}")
    if d["type"] == "stacking":
        return StackingModel([model_from_dict(m) for m in d["base"]], model_from_dict(d["meta"]), d["mode"])
    return TrainedModel(ClassifierSpec(**d["spec"]), _decode(d["params"]), d["feature_dim"])


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
