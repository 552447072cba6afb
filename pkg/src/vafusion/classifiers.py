"""The four compared classifiers under one probability-prediction contract.

Every fit_* function consumes a LabeledDataset and a TrainConfig and
returns an immutable model; predict_proba dispatches on the model type and
always yields one probability in [0, 1] per row. Fitting is deterministic
for a fixed config seed. Gradient-boosted trees are realized as
second-order boosting on logistic loss (g = p - y, h = p(1 - p)) with
shrinkage and depth-limited regression trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .container import load_container, save_container
from .errors import ConfigError, DegenerateDataError, DivergenceError, ShapeError
from .resampling import LabeledDataset
from .seeding import derive_rng

KINDS = ("logistic", "forest", "gbt", "mlp")


# --- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class LogisticConfig:
    learning_rate: float = 0.5
    max_iters: int = 2000
    tol: float = 1e-8
    l2: float = 0.1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = 8
    min_samples_leaf: int = 1
    max_features: int | str | None = "sqrt"  # per-split subset size
    bootstrap: bool = True


@dataclass(frozen=True)
class BoostConfig:
    n_rounds: int = 50
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 1
    reg_lambda: float = 1.0


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, ...] = (32,)
    learning_rate: float = 0.05
    epochs: int = 150
    batch_size: int = 32


@dataclass(frozen=True)
class TrainConfig:
    logistic: LogisticConfig = LogisticConfig()
    forest: ForestConfig = ForestConfig()
    boost: BoostConfig = BoostConfig()
    mlp: MlpConfig = MlpConfig()
    seed: int = 0


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


# --- logistic regression ----------------------------------------------------


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2: float


def logistic_objective(weights, bias, X, y, l2):
    """L2-regularized mean negative log-likelihood and its gradients."""
    p = sigmoid(X @ weights + bias)
    loss = log_loss(y, p) + 0.5 * l2 * float(weights @ weights)
    err = (p - y) / len(y)
    grad_w = X.T @ err + l2 * weights
    grad_b = float(err.sum())
    return loss, grad_w, grad_b


def fit_logistic(data: LabeledDataset, cfg: TrainConfig) -> LogisticModel:
    """Full-batch gradient descent to gradient-norm tolerance or max_iters."""
    lc = cfg.logistic
    X, y = data.features, data.labels.astype(np.float64)
    w = np.zeros(data.n_features)
    b = 0.0
    with np.errstate(over="ignore", invalid="ignore"):  # divergence detected below
        for it in range(lc.max_iters):
            loss, gw, gb = logistic_objective(w, b, X, y, lc.l2)
            if not np.isfinite(loss):
                raise DivergenceError("logistic loss diverged", it, lc.learning_rate)
            if math.sqrt(float(gw @ gw) + gb * gb) < lc.tol:
                break
            w = w - lc.learning_rate * gw
            b = b - lc.learning_rate * gb
    return LogisticModel(weights=w, bias=b, l2=lc.l2)


# --- decision trees ---------------------------------------------------------

_LEAF = -1


@dataclass
class DecisionTree:
    """Flat-array binary tree; feature == -1 marks a leaf holding `value`.

    In classification mode leaf values are positive-class fractions; in
    regression (boosting) mode they are log-odds increments.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int | None = None
    min_samples_leaf: int = 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Route every row to its unique leaf and return the leaf values."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat != _LEAF
            if not active.any():
                return self.value[node]
            rows = np.flatnonzero(active)
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])


class _TreeBuilder:
    """Greedy recursive splitter shared by all tree consumers.

    Classification minimizes Gini impurity on binary labels; regression
    minimizes the second-order boosting objective on per-sample gradient
    and hessian statistics. Split-gain ties resolve to the lowest feature
    index, then the lowest threshold.
    """

    def __init__(self, X, max_depth, min_samples_leaf, max_features=None, rng=None,
                 grad=None, hess=None, labels=None, reg_lambda=1.0):
        self.X = X
        self.max_depth = math.inf if max_depth is None else max_depth
        self.min_leaf = min_samples_leaf
        self.max_features = max_features
        self.rng = rng
        self.grad = grad
        self.hess = hess
        self.labels = labels
        self.reg_lambda = reg_lambda
        self.regression = grad is not None
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def _leaf_value(self, idx) -> float:
        if self.regression:
            return float(-self.grad[idx].sum() / (self.hess[idx].sum() + self.reg_lambda))
        return float(self.labels[idx].mean())

    def _node_score(self, g_sum, h_sum):
        # minimized second-order objective at a leaf (up to constants)
        return -0.5 * g_sum * g_sum / (h_sum + self.reg_lambda)

    def _candidate_features(self, d):
        if self.max_features is None or self.max_features >= d:
            return np.arange(d)
        return np.sort(self.rng.choice(d, size=self.max_features, replace=False))

    def _best_split(self, idx):
        n = len(idx)
        best = None  # (gain, feature, threshold, sorted order, split position)
        if self.regression:
            g_all, h_all = self.grad[idx], self.hess[idx]
            parent = self._node_score(g_all.sum(), h_all.sum())
        else:
            y_all = self.labels[idx]
            n_pos = y_all.sum()
            p = n_pos / n
            parent_gini = 1.0 - p * p - (1.0 - p) * (1.0 - p)

        for f in self._candidate_features(self.X.shape[1]):
            v = self.X[idx, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            cut = np.flatnonzero(vs[:-1] < vs[1:])  # split after these positions
            if len(cut) == 0:
                continue
            n_left = cut + 1
            n_right = n - n_left
            ok = (n_left >= self.min_leaf) & (n_right >= self.min_leaf)
            if not ok.any():
                continue
            cut, n_left, n_right = cut[ok], n_left[ok], n_right[ok]

            if self.regression:
                g_cum = np.cumsum(self.grad[idx][order])
                h_cum = np.cumsum(self.hess[idx][order])
                gl, hl = g_cum[cut], h_cum[cut]
                gr, hr = g_cum[-1] - gl, h_cum[-1] - hl
                gains = parent - (self._node_score(gl, hl) + self._node_score(gr, hr))
            else:
                pos_cum = np.cumsum(y_all[order])
                pos_l = pos_cum[cut]
                pos_r = pos_cum[-1] - pos_l
                pl, pr = pos_l / n_left, pos_r / n_right
                gini_l = 1.0 - pl * pl - (1.0 - pl) ** 2
                gini_r = 1.0 - pr * pr - (1.0 - pr) ** 2
                gains = parent_gini - (n_left * gini_l + n_right * gini_r) / n

            j = int(np.argmax(gains))  # first max: lowest threshold wins
            gain = float(gains[j])
            # classification splits any impure node (zero gain allowed, e.g.
            # XOR roots); regression requires a real objective improvement
            if self.regression and gain <= 1e-15:
                continue
            if best is None or gain > best[0]:
                thr = float((vs[cut[j]] + vs[cut[j] + 1]) / 2.0)
                best = (gain, int(f), thr, order, int(cut[j]))
        return best

    def build(self, idx, depth=0) -> int:
        node = len(self.feature)
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)

        pure = (not self.regression) and (self.labels[idx].min() == self.labels[idx].max())
        split = None
        if depth < self.max_depth and len(idx) >= 2 * self.min_leaf and not pure:
            split = self._best_split(idx)
        if split is None:
            self.value[node] = self._leaf_value(idx)
            return node

        _, f, thr, order, pos = split
        left_idx = idx[order[: pos + 1]]
        right_idx = idx[order[pos + 1 :]]
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self.build(left_idx, depth + 1)
        self.right[node] = self.build(right_idx, depth + 1)
        return node

    def tree(self) -> DecisionTree:
        return DecisionTree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value),
            max_depth=None if self.max_depth == math.inf else int(self.max_depth),
            min_samples_leaf=self.min_leaf,
        )


def fit_decision_tree(
    data: LabeledDataset,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    grad: np.ndarray | None = None,
    hess: np.ndarray | None = None,
    reg_lambda: float = 1.0,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> DecisionTree:
    """Grow one tree: Gini classification by default, or second-order
    regression when per-sample grad/hess targets are supplied."""
    if (grad is None) != (hess is None):
        raise ConfigError("grad and hess must be supplied together")
    builder = _TreeBuilder(
        data.features,
        max_depth,
        min_samples_leaf,
        max_features=max_features,
        rng=rng,
        grad=grad,
        hess=hess,
        labels=data.labels,
        reg_lambda=reg_lambda,
    )
    builder.build(np.arange(len(data)))
    return builder.tree()


# --- random forest ----------------------------------------------------------


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    n_trees: int
    max_features: int
    bootstrap: bool
    seed: int
    n_features: int


def _resolve_max_features(spec, d: int) -> int:
    if spec is None:
        return d
    if spec == "sqrt":
        return max(1, int(math.sqrt(d)))
    if isinstance(spec, int) and 1 <= spec:
        return min(spec, d)
    raise ConfigError(f"bad max_features {spec!r}")


def fit_random_forest(data: LabeledDataset, cfg: TrainConfig) -> RandomForestModel:
    """Bag n_trees Gini trees on per-tree-seeded bootstrap resamples."""
    fc = cfg.forest
    n = len(data)
    m = _resolve_max_features(fc.max_features, data.n_features)
    trees = []
    for i in range(fc.n_trees):
        rng = derive_rng(cfg.seed, "forest-tree", i)
        rows = rng.integers(0, n, size=n) if fc.bootstrap else np.arange(n)
        sample = LabeledDataset(features=data.features[rows], labels=data.labels[rows])
        builder = _TreeBuilder(
            sample.features,
            fc.max_depth,
            fc.min_samples_leaf,
            max_features=m if m < data.n_features else None,
            rng=rng,
            labels=sample.labels,
        )
        builder.build(np.arange(n))
        trees.append(builder.tree())
    return RandomForestModel(
        trees=trees,
        n_trees=fc.n_trees,
        max_features=m,
        bootstrap=fc.bootstrap,
        seed=cfg.seed,
        n_features=data.n_features,
    )


# --- gradient boosting ------------------------------------------------------


@dataclass
class GradientBoostedModel:
    initial_score: float
    stages: list[DecisionTree]
    learning_rate: float
    n_rounds: int
    max_depth: int
    reg_lambda: float
    n_features: int
    train_loss: tuple[float, ...] = ()  # loss before boosting, then after each round


def fit_gradient_boosting(data: LabeledDataset, cfg: TrainConfig) -> GradientBoostedModel:
    """Stagewise second-order boosting on logistic loss with shrinkage."""
    bc = cfg.boost
    y = data.labels.astype(np.float64)
    base = float(y.mean())
    if base in (0.0, 1.0):
        raise DegenerateDataError("gradient boosting needs both classes (prior log-odds infinite)")
    f0 = math.log(base / (1.0 - base))
    scores = np.full(len(data), f0)
    losses = [log_loss(y, sigmoid(scores))]
    stages = []
    for r in range(bc.n_rounds):
        p = sigmoid(scores)
        grad = p - y
        hess = p * (1.0 - p)
        tree = fit_decision_tree(
            data,
            max_depth=bc.max_depth,
            min_samples_leaf=bc.min_samples_leaf,
            grad=grad,
            hess=hess,
            reg_lambda=bc.reg_lambda,
        )
        stages.append(tree)
        scores = scores + bc.learning_rate * tree.predict(data.features)
        loss = log_loss(y, sigmoid(scores))
        if not np.isfinite(loss):
            raise DivergenceError("boosting loss diverged", r, bc.learning_rate)
        losses.append(loss)
    return GradientBoostedModel(
        initial_score=f0,
        stages=stages,
        learning_rate=bc.learning_rate,
        n_rounds=bc.n_rounds,
        max_depth=bc.max_depth,
        reg_lambda=bc.reg_lambda,
        n_features=data.n_features,
        train_loss=tuple(losses),
    )


# --- multilayer perceptron --------------------------------------------------


@dataclass
class MlpModel:
    weights: list[np.ndarray]  # one matrix per layer, (fan_in, fan_out)
    biases: list[np.ndarray]
    hidden: tuple[int, ...]


def mlp_init(n_features: int, hidden: Sequence[int], rng: np.random.Generator):
    sizes = [n_features, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def mlp_forward(weights, biases, X):
    """Activations per layer: ReLU hidden, sigmoid output."""
    acts = [np.asarray(X, dtype=np.float64)]
    for layer, (W, b) in enumerate(zip(weights, biases)):
        z = acts[-1] @ W + b
        acts.append(sigmoid(z) if layer == len(weights) - 1 else np.maximum(z, 0.0))
    return acts


def mlp_objective(weights, biases, X, y):
    """Mean binary cross-entropy and backprop gradients for every layer."""
    acts = mlp_forward(weights, biases, X)
    p = acts[-1][:, 0]
    loss = log_loss(y, p)
    delta = ((p - y) / len(y))[:, None]  # sigmoid + BCE shortcut
    grads_w, grads_b = [None] * len(weights), [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        grads_w[layer] = acts[layer].T @ delta
        grads_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ weights[layer].T) * (acts[layer] > 0)
    return loss, grads_w, grads_b


def fit_mlp(data: LabeledDataset, cfg: TrainConfig) -> MlpModel:
    """Mini-batch SGD with backprop; seeded init and shuffling."""
    mc = cfg.mlp
    X, y = data.features, data.labels.astype(np.float64)
    rng = derive_rng(cfg.seed, "mlp")
    weights, biases = mlp_init(data.n_features, mc.hidden, rng)
    n = len(data)
    with np.errstate(over="ignore", invalid="ignore"):  # divergence detected below
        for epoch in range(mc.epochs):
            order = rng.permutation(n)
            for start in range(0, n, mc.batch_size):
                batch = order[start : start + mc.batch_size]
                loss, gw, gb = mlp_objective(weights, biases, X[batch], y[batch])
                if not np.isfinite(loss):
                    raise DivergenceError("mlp loss diverged", epoch, mc.learning_rate)
                for layer in range(len(weights)):
                    weights[layer] = weights[layer] - mc.learning_rate * gw[layer]
                    biases[layer] = biases[layer] - mc.learning_rate * gb[layer]
    return MlpModel(weights=weights, biases=biases, hidden=tuple(mc.hidden))


# --- unified prediction -----------------------------------------------------

TrainedClassifier = LogisticModel | RandomForestModel | GradientBoostedModel | MlpModel


def _model_width(model: TrainedClassifier) -> int:
    if isinstance(model, LogisticModel):
        return len(model.weights)
    if isinstance(model, MlpModel):
        return model.weights[0].shape[0]
    if isinstance(model, (GradientBoostedModel, RandomForestModel)):
        return model.n_features
    raise TypeError(f"unknown model type {type(model)!r}")


def _check_width(model: TrainedClassifier, X: np.ndarray) -> None:
    if X.ndim != 2:
        raise ShapeError("features must be a 2-D matrix")
    width = _model_width(model)
    if X.shape[1] != width:
        raise ShapeError(f"model expects {width} features, got {X.shape[1]}")


def predict_proba(model: TrainedClassifier, features: np.ndarray) -> np.ndarray:
    """One positive-class probability per row, deterministically."""
    X = np.asarray(features, dtype=np.float64)
    _check_width(model, X)
    if isinstance(model, LogisticModel):
        return sigmoid(X @ model.weights + model.bias)
    if isinstance(model, RandomForestModel):
        return np.mean([t.predict(X) for t in model.trees], axis=0)
    if isinstance(model, GradientBoostedModel):
        scores = np.full(len(X), model.initial_score)
        for tree in model.stages:
            scores += model.learning_rate * tree.predict(X)
        return sigmoid(scores)
    if isinstance(model, MlpModel):
        return mlp_forward(model.weights, model.biases, X)[-1][:, 0]
    raise TypeError(f"unknown model type {type(model)!r}")


def predict_label(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where prob >= threshold."""
    return (np.asarray(probs) >= threshold).astype(np.int64)


def fit_classifier(kind: str, data: LabeledDataset, cfg: TrainConfig) -> TrainedClassifier:
    fitters = {
        "logistic": fit_logistic,
        "forest": fit_random_forest,
        "gbt": fit_gradient_boosting,
        "mlp": fit_mlp,
    }
    if kind not in fitters:
        raise ConfigError(f"unknown classifier kind {kind!r}; expected one of {KINDS}")
    return fitters[kind](data, cfg)


# --- persistence -----------------------------------------------------------

_SCHEMA = "vafusion/classifier"


def _pack_trees(trees: Sequence[DecisionTree]):
    sizes = np.asarray([t.n_nodes for t in trees], dtype=np.int64)
    return {
        "tree_sizes": sizes,
        "tree_feature": np.concatenate([t.feature for t in trees]) if trees else np.zeros(0, np.int64),
        "tree_threshold": np.concatenate([t.threshold for t in trees]) if trees else np.zeros(0),
        "tree_left": np.concatenate([t.left for t in trees]) if trees else np.zeros(0, np.int64),
        "tree_right": np.concatenate([t.right for t in trees]) if trees else np.zeros(0, np.int64),
        "tree_value": np.concatenate([t.value for t in trees]) if trees else np.zeros(0),
    }


def _unpack_trees(arrays) -> list[DecisionTree]:
    trees = []
    start = 0
    for size in arrays["tree_sizes"]:
        size = int(size)
        sl = slice(start, start + size)
        trees.append(
            DecisionTree(
                feature=arrays["tree_feature"][sl],
                threshold=arrays["tree_threshold"][sl],
                left=arrays["tree_left"][sl],
                right=arrays["tree_right"][sl],
                value=arrays["tree_value"][sl],
            )
        )
        start += size
    return trees


def save_classifier(
    model: TrainedClassifier,
    path: str | Path,
    extra_meta: dict | None = None,
    extra_arrays: dict[str, np.ndarray] | None = None,
) -> None:
    """Persist a trained model plus optional evaluation context arrays."""
    meta: dict = {"schema": _SCHEMA, "version": 1}
    arrays: dict[str, np.ndarray] = {}
    if isinstance(model, LogisticModel):
        meta.update(kind="logistic", bias=model.bias, l2=model.l2)
        arrays["weights"] = model.weights
    elif isinstance(model, RandomForestModel):
        meta.update(
            kind="forest",
            n_trees=model.n_trees,
            max_features=model.max_features,
            bootstrap=model.bootstrap,
            seed=model.seed,
            n_features=model.n_features,
        )
        arrays.update(_pack_trees(model.trees))
    elif isinstance(model, GradientBoostedModel):
        meta.update(
            kind="gbt",
            initial_score=model.initial_score,
            learning_rate=model.learning_rate,
            n_rounds=model.n_rounds,
            max_depth=model.max_depth,
            reg_lambda=model.reg_lambda,
            n_features=model.n_features,
        )
        arrays.update(_pack_trees(model.stages))
        arrays["train_loss"] = np.asarray(model.train_loss)
    elif isinstance(model, MlpModel):
        meta.update(kind="mlp", hidden=list(model.hidden), n_layers=len(model.weights))
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            arrays[f"layer{i}_weights"] = w
            arrays[f"layer{i}_bias"] = b
    else:
        raise TypeError(f"cannot persist {type(model)!r}")
    if extra_meta:
        meta.update(extra_meta)
    save_container(path, meta, extra_arrays | arrays if extra_arrays else arrays)


def load_classifier(path: str | Path) -> tuple[TrainedClassifier, dict, dict[str, np.ndarray]]:
    """Load a persisted model; also returns its metadata and extra arrays."""
    meta, arrays = load_container(path)
    if meta.get("schema") != _SCHEMA:
        raise ValueError(f"{path}: not a classifier container")
    kind = meta["kind"]
    if kind == "logistic":
        model: TrainedClassifier = LogisticModel(
            weights=arrays["weights"], bias=meta["bias"], l2=meta["l2"]
        )
    elif kind == "forest":
        model = RandomForestModel(
            trees=_unpack_trees(arrays),
            n_trees=meta["n_trees"],
            max_features=meta["max_features"],
            bootstrap=meta["bootstrap"],
            seed=meta["seed"],
            n_features=meta["n_features"],
        )
    elif kind == "gbt":
        model = GradientBoostedModel(
            initial_score=meta["initial_score"],
            stages=_unpack_trees(arrays),
            learning_rate=meta["learning_rate"],
            n_rounds=meta["n_rounds"],
            max_depth=meta["max_depth"],
            reg_lambda=meta["reg_lambda"],
            n_features=meta["n_features"],
            train_loss=tuple(arrays["train_loss"].tolist()),
        )
    elif kind == "mlp":
        n_layers = meta["n_layers"]
        model = MlpModel(
            weights=[arrays[f"layer{i}_weights"] for i in range(n_layers)],
            biases=[arrays[f"layer{i}_bias"] for i in range(n_layers)],
            hidden=tuple(meta["hidden"]),
        )
    else:
        raise ValueError(f"unknown classifier kind {kind!r}")
    return model, meta, arrays
