"""Metrics, ROC/AUC, stratified cross-validation, and grid search.

cross_validate_pipeline is the leakage-safe experiment core: inside each
fold, embeddings are trained on the training split only, the training
split alone is rebalanced with SMOTE+Tomek, and the untouched test split
is scored. Violations of either rule raise LeakageError rather than
silently biasing results.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import classifiers as clf
from .corpus import PreprocessConfig, TokenizedDoc, VARecord, encode_structured, tokenize_corpus
from .embeddings import EmbeddingConfig, ParagraphModel, infer_vector, train_paragraph_model
from .errors import ConfigError, DegenerateDataError, LeakageError, ShapeError
from .resampling import PROV_SYNTHETIC, LabeledDataset, ResampleConfig, smote_tomek_resample
from .seeding import derive_seed

SETTINGS = ("binary", "text", "combined")


# --- confusion counts and scalar metrics ------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_matrix(pred: Sequence[int], truth: Sequence[int]) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ShapeError(f"pred length {pred.shape} != truth length {truth.shape}")
    return ConfusionMatrix(
        tp=int(((pred == 1) & (truth == 1)).sum()),
        fp=int(((pred == 1) & (truth == 0)).sum()),
        tn=int(((pred == 0) & (truth == 0)).sum()),
        fn=int(((pred == 0) & (truth == 1)).sum()),
    )


@dataclass(frozen=True)
class ClassificationMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    degenerate: frozenset[str] = frozenset()


def classification_metrics(cm: ConfusionMatrix) -> ClassificationMetrics:
    """precision, recall, F1, accuracy; zero denominators yield 0 + a flag."""
    degenerate = set()

    def ratio(num, den, name):
        if den == 0:
            degenerate.add(name)
            return 0.0
        return num / den

    precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
    recall = ratio(cm.tp, cm.tp + cm.fn, "recall")
    f1 = ratio(2 * precision * recall, precision + recall, "f1")
    accuracy = ratio(cm.tp + cm.tn, cm.total, "accuracy")
    return ClassificationMetrics(precision, recall, f1, accuracy, frozenset(degenerate))


# --- ROC / AUC ---------------------------------------------------------------


def roc_curve(scores: Sequence[float], truth: Sequence[int]) -> list[tuple[float, float]]:
    """(fpr, tpr) points swept over distinct score values, descending.

    Tied scores collapse into a single step; (0, 0) is prepended and the
    final point is always (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if scores.shape != truth.shape:
        raise ShapeError("scores and truth lengths differ")
    n_pos = int((truth == 1).sum())
    n_neg = int((truth == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("ROC curve undefined: only one class present")

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    t = truth[order]
    tp_cum = np.cumsum(t)
    fp_cum = np.cumsum(1 - t)
    group_end = np.flatnonzero(np.append(s[:-1] != s[1:], True))
    points = [(0.0, 0.0)]
    points.extend((fp_cum[e] / n_neg, tp_cum[e] / n_pos) for e in group_end)
    return points


def auc(scores: Sequence[float], truth: Sequence[int]) -> float:
    """Trapezoidal area under roc_curve; equals the Mann-Whitney statistic."""
    points = roc_curve(scores, truth)
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


# --- fold construction -------------------------------------------------------


@dataclass(frozen=True)
class FoldSplit:
    folds: tuple[tuple[np.ndarray, np.ndarray], ...]  # (train_idx, test_idx) pairs

    @property
    def k(self) -> int:
        return len(self.folds)


def stratified_kfold_split(labels: Sequence[int], k: int, seed: int) -> FoldSplit:
    """Shuffle within class, deal round-robin: per-fold class counts are
    within 1 of perfect proportionality and test sets partition the data."""
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ConfigError("k must be >= 2")
    n = len(labels)
    rng = np.random.default_rng(seed)
    test_sets: list[list[int]] = [[] for _ in range(k)]
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise DegenerateDataError(f"class {cls} has {len(idx)} members, fewer than k={k}")
        for pos, i in enumerate(rng.permutation(idx)):
            test_sets[pos % k].append(int(i))
    folds = []
    all_idx = np.arange(n)
    for test in test_sets:
        test_arr = np.asarray(sorted(test), dtype=np.int64)
        train_arr = np.setdiff1d(all_idx, test_arr)
        folds.append((train_arr, test_arr))
    return FoldSplit(folds=tuple(folds))


# --- per-fold reports --------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    auc: float
    roc: tuple[tuple[float, float], ...]
    setting: str
    classifier: str
    fold_index: int  # -1 for the cross-fold aggregate
    confusion: ConfusionMatrix | None = None
    degenerate: frozenset[str] = frozenset()


@dataclass
class FoldOutcome:
    report: MetricsReport
    model: clf.TrainedClassifier
    test_indices: np.ndarray
    test_features: np.ndarray
    probabilities: np.ndarray


@dataclass
class CvResult:
    setting: str
    classifier: str
    fold_outcomes: list[FoldOutcome]
    aggregate: MetricsReport

    @property
    def reports(self) -> list[MetricsReport]:
        return [o.report for o in self.fold_outcomes]


# --- text feature construction ----------------------------------------------


def _cfg_key(cfg: EmbeddingConfig) -> str:
    return (
        f"{cfg.mode}/{cfg.dm_combine}/dim{cfg.dim}/win{cfg.window}/ep{cfg.epochs}"
        f"/lr{cfg.learning_rate!r}/fl{cfg.lr_floor!r}/neg{cfg.negative}/mc{cfg.min_count}"
    )


def _doc_matrix_strict(
    docs: Sequence[TokenizedDoc],
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    cfg: EmbeddingConfig,
    master_seed: int,
    fold: int,
    infer_epochs: int,
) -> tuple[np.ndarray, np.ndarray, ParagraphModel]:
    """Train on the training split only; embed test docs by inference."""
    key = _cfg_key(cfg)
    train_docs = [docs[i] for i in train_idx]
    fit_cfg = replace(cfg, seed=derive_seed(master_seed, "embed", fold, key))
    model = train_paragraph_model([d.tokens for d in train_docs], fit_cfg)

    train_rows = model.paragraph_vectors.copy()
    for pos, doc in enumerate(train_docs):
        if len(model.vocab.encode(doc.tokens)) == 0:
            train_rows[pos] = 0.0  # degenerate narrative: zero embedding
    test_rows = np.zeros((len(test_idx), cfg.dim))
    for pos, i in enumerate(test_idx):
        vec = infer_vector(
            model,
            docs[i].tokens,
            infer_epochs=infer_epochs,
            seed=derive_seed(master_seed, "infer", fold, key, int(i)),
            doc_id=int(i),
        )
        test_rows[pos] = vec.values
    return train_rows, test_rows, model


def _assert_no_vocab_leakage(model: ParagraphModel, docs, train_idx, test_idx) -> None:
    train_tokens = set()
    for i in train_idx:
        train_tokens.update(docs[i].tokens)
    leaked = [t for t in model.vocab.tokens if t not in train_tokens]
    if leaked:
        raise LeakageError(f"vocabulary contains tokens absent from the training fold: {leaked[:5]}")


def fold_text_features(
    docs: Sequence[TokenizedDoc],
    split: FoldSplit,
    fold: int,
    embed_cfgs: Sequence[EmbeddingConfig],
    master_seed: int,
    infer_epochs: int = 50,
    global_embedding: bool = False,
    cache: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Text-channel features for one fold: one block per embedding config,
    concatenated. In strict mode (default) each block's model never sees a
    test-fold document; global_embedding reproduces the laxer protocol of
    fitting once on the full corpus."""
    train_idx, test_idx = split.folds[fold]
    train_blocks, test_blocks = [], []
    for cfg in embed_cfgs:
        key = _cfg_key(cfg)
        if global_embedding:
            cache_key = ("text-global", key)
            if cache is not None and cache_key in cache:
                all_rows = cache[cache_key]
            else:
                fit_cfg = replace(cfg, seed=derive_seed(master_seed, "embed-global", key))
                model = train_paragraph_model([d.tokens for d in docs], fit_cfg)
                all_rows = model.paragraph_vectors.copy()
                for i, doc in enumerate(docs):
                    if len(model.vocab.encode(doc.tokens)) == 0:
                        all_rows[i] = 0.0
                if cache is not None:
                    cache[cache_key] = all_rows
            train_blocks.append(all_rows[train_idx])
            test_blocks.append(all_rows[test_idx])
        else:
            cache_key = ("text", fold, key)
            if cache is not None and cache_key in cache:
                tr, te = cache[cache_key]
            else:
                tr, te, model = _doc_matrix_strict(
                    docs, train_idx, test_idx, cfg, master_seed, fold, infer_epochs
                )
                _assert_no_vocab_leakage(model, docs, train_idx, test_idx)
                if cache is not None:
                    cache[cache_key] = (tr, te)
            train_blocks.append(tr)
            test_blocks.append(te)
    return np.hstack(train_blocks), np.hstack(test_blocks)


# --- the cross-validation pipeline -------------------------------------------


DEFAULT_EMBED_CFGS = (
    EmbeddingConfig(mode="dm", dim=50, window=9),
    EmbeddingConfig(mode="dbow", dim=50, window=9),
)


def _resample_train(
    X: np.ndarray,
    y: np.ndarray,
    cfg: ResampleConfig,
    fold_seed: int,
) -> LabeledDataset:
    data = LabeledDataset(features=X, labels=y)
    n_min = min(data.class_counts())
    if n_min < 2:
        raise DegenerateDataError("training fold has a singleton minority class")
    # clamp k so small training folds remain resampleable
    eff_k = min(cfg.k_neighbors, n_min - 1)
    fold_cfg = ResampleConfig(k_neighbors=eff_k, target_ratio=cfg.target_ratio, seed=fold_seed)
    return smote_tomek_resample(data, fold_cfg)


def _assert_no_parent_leakage(resampled: LabeledDataset, train_idx: np.ndarray, test_idx: np.ndarray):
    syn = resampled.provenance == PROV_SYNTHETIC
    parents = resampled.parent_idx[syn]
    if parents.size == 0:
        return
    if parents.min() < 0 or parents.max() >= len(train_idx):
        raise LeakageError("synthetic parent index outside the training fold matrix")
    parent_records = set(train_idx[parents.ravel()].tolist())
    overlap = parent_records & set(test_idx.tolist())
    if overlap:
        raise LeakageError(f"test-fold records used as SMOTE parents: {sorted(overlap)[:5]}")


def _aggregate_report(
    reports: list[MetricsReport],
    pooled_roc,
    pooled_auc: float,
    setting: str,
    kind: str,
    aggregation: str,
) -> MetricsReport:
    """Cross-fold summary row. 'mean' averages the per-fold metrics (the
    default); 'pooled' recomputes them from the summed confusion counts and
    uses the pooled-prediction AUC."""
    if aggregation == "pooled":
        cm = ConfusionMatrix(
            tp=sum(r.confusion.tp for r in reports),
            fp=sum(r.confusion.fp for r in reports),
            tn=sum(r.confusion.tn for r in reports),
            fn=sum(r.confusion.fn for r in reports),
        )
        m = classification_metrics(cm)
        return MetricsReport(
            precision=m.precision,
            recall=m.recall,
            f1=m.f1,
            accuracy=m.accuracy,
            auc=pooled_auc,
            roc=pooled_roc,
            setting=setting,
            classifier=kind,
            fold_index=-1,
            confusion=cm,
            degenerate=m.degenerate,
        )
    if aggregation != "mean":
        raise ConfigError(f"aggregation must be 'mean' or 'pooled', got {aggregation!r}")
    return MetricsReport(
        precision=float(np.mean([r.precision for r in reports])),
        recall=float(np.mean([r.recall for r in reports])),
        f1=float(np.mean([r.f1 for r in reports])),
        accuracy=float(np.mean([r.accuracy for r in reports])),
        auc=float(np.mean([r.auc for r in reports])),
        roc=pooled_roc,
        setting=setting,
        classifier=kind,
        fold_index=-1,
    )


def cross_validate_pipeline(
    records: Sequence[VARecord],
    setting: str,
    classifier: str,
    *,
    preprocess_cfg: PreprocessConfig | None = None,
    embed_cfgs: Sequence[EmbeddingConfig] = DEFAULT_EMBED_CFGS,
    resample_cfg: ResampleConfig | None = None,
    train_cfg: clf.TrainConfig | None = None,
    k: int = 5,
    seed: int = 0,
    age_scale: float | None = 100.0,
    threshold: float = 0.5,
    infer_epochs: int = 50,
    global_embedding: bool = False,
    aggregation: str = "mean",
    feature_cache: dict | None = None,
    tokenized: Sequence[TokenizedDoc] | None = None,
) -> CvResult:
    """Stratified k-fold evaluation of one (setting, classifier) cell.

    Per fold: build features for the setting, rebalance the training fold
    with SMOTE+Tomek, fit, and score the untouched test fold. The aggregate
    report holds the unweighted mean of the fold metrics and the ROC of the
    pooled test predictions. Passing the same feature_cache dict across
    calls reuses per-fold embeddings between settings and classifiers.
    """
    if setting not in SETTINGS:
        raise ConfigError(f"setting must be one of {SETTINGS}")
    if resample_cfg is None:
        resample_cfg = ResampleConfig()
    if train_cfg is None:
        train_cfg = clf.TrainConfig()

    labels = np.asarray([r.class_label for r in records], dtype=np.int64)
    split = stratified_kfold_split(labels, k, derive_seed(seed, "folds"))
    if tokenized is None and setting in ("text", "combined"):
        tokenized = tokenize_corpus(records, preprocess_cfg)
    structured = (
        np.stack([encode_structured(r, age_scale) for r in records])
        if setting in ("binary", "combined")
        else None
    )

    outcomes = []
    pooled_probs, pooled_truth = [], []
    for fold in range(split.k):
        train_idx, test_idx = split.folds[fold]
        blocks_tr, blocks_te = [], []
        if setting in ("binary", "combined"):
            blocks_tr.append(structured[train_idx])
            blocks_te.append(structured[test_idx])
        if setting in ("text", "combined"):
            text_tr, text_te = fold_text_features(
                tokenized, split, fold, embed_cfgs, seed,
                infer_epochs=infer_epochs,
                global_embedding=global_embedding,
                cache=feature_cache,
            )
            blocks_tr.append(text_tr)
            blocks_te.append(text_te)
        X_tr = np.hstack(blocks_tr)
        X_te = np.hstack(blocks_te)
        y_tr, y_te = labels[train_idx], labels[test_idx]

        fold_seed = derive_seed(seed, "fold", fold)
        # the resampled training fold is classifier-independent, so it can be
        # shared across cells through the same cache as the text features
        resample_key = (
            "resampled", seed, setting, fold, age_scale, global_embedding,
            tuple(_cfg_key(c) for c in embed_cfgs) if setting != "binary" else (),
            resample_cfg.k_neighbors, resample_cfg.target_ratio,
        )
        if feature_cache is not None and resample_key in feature_cache:
            resampled = feature_cache[resample_key]
        else:
            resampled = _resample_train(X_tr, y_tr, resample_cfg, derive_seed(fold_seed, "smote"))
            if feature_cache is not None:
                feature_cache[resample_key] = resampled
        _assert_no_parent_leakage(resampled, train_idx, test_idx)

        fold_train_cfg = replace(train_cfg, seed=derive_seed(fold_seed, "clf"))
        model = clf.fit_classifier(classifier, resampled, fold_train_cfg)
        probs = clf.predict_proba(model, X_te)

        cm = confusion_matrix(clf.predict_label(probs, threshold), y_te)
        metrics = classification_metrics(cm)
        points = roc_curve(probs, y_te)
        report = MetricsReport(
            precision=metrics.precision,
            recall=metrics.recall,
            f1=metrics.f1,
            accuracy=metrics.accuracy,
            auc=auc(probs, y_te),
            roc=tuple(points),
            setting=setting,
            classifier=classifier,
            fold_index=fold,
            confusion=cm,
            degenerate=metrics.degenerate,
        )
        outcomes.append(
            FoldOutcome(
                report=report,
                model=model,
                test_indices=test_idx,
                test_features=X_te,
                probabilities=probs,
            )
        )
        pooled_probs.append(probs)
        pooled_truth.append(y_te)

    pooled_probs = np.concatenate(pooled_probs)
    pooled_truth = np.concatenate(pooled_truth)
    aggregate = _aggregate_report(
        [o.report for o in outcomes],
        tuple(roc_curve(pooled_probs, pooled_truth)),
        auc(pooled_probs, pooled_truth),
        setting,
        classifier,
        aggregation,
    )
    return CvResult(setting=setting, classifier=classifier, fold_outcomes=outcomes, aggregate=aggregate)


# --- grid search --------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    values: dict[str, tuple]
    metric: str = "f1"

    def __post_init__(self):
        if not self.values or any(len(v) == 0 for v in self.values.values()):
            raise ConfigError("grid must list at least one value per parameter")

    def cells(self):
        names = list(self.values)
        for combo in itertools.product(*(self.values[n] for n in names)):
            yield dict(zip(names, combo))


DEFAULT_GRIDS = {
    "logistic": GridSpec({"l2": (0.01, 0.1, 1.0)}),
    "forest": GridSpec({"n_trees": (100, 300), "max_depth": (8, None)}),
    "gbt": GridSpec({"learning_rate": (0.1, 0.3), "n_rounds": (50, 200), "max_depth": (3, 6)}),
    "mlp": GridSpec({"hidden": ((16,), (32,)), "learning_rate": (0.01, 0.1)}),
}

_SUBCONFIG_FIELD = {"logistic": "logistic", "forest": "forest", "gbt": "boost", "mlp": "mlp"}


def apply_grid_params(base: clf.TrainConfig, classifier: str, params: dict) -> clf.TrainConfig:
    field_name = _SUBCONFIG_FIELD[classifier]
    sub = replace(getattr(base, field_name), **params)
    return replace(base, **{field_name: sub})


@dataclass
class GridCell:
    params: dict
    result: CvResult


@dataclass
class GridSearchResult:
    best_config: clf.TrainConfig
    best_cell: GridCell
    table: list[GridCell]


def grid_search(
    records: Sequence[VARecord],
    setting: str,
    classifier: str,
    grid: GridSpec | None = None,
    *,
    base_train_cfg: clf.TrainConfig | None = None,
    seed: int = 0,
    **pipeline_kwargs,
) -> GridSearchResult:
    """Evaluate every grid cell with cross_validate_pipeline and pick the
    argmax of the selection metric; ties keep the earliest cell."""
    if grid is None:
        grid = DEFAULT_GRIDS[classifier]
    if base_train_cfg is None:
        base_train_cfg = clf.TrainConfig()
    pipeline_kwargs.setdefault("feature_cache", {})

    table = []
    best = None
    for params in grid.cells():
        cfg = apply_grid_params(base_train_cfg, classifier, params)
        result = cross_validate_pipeline(
            records, setting, classifier, train_cfg=cfg, seed=seed, **pipeline_kwargs
        )
        cell = GridCell(params=params, result=result)
        table.append(cell)
        score = getattr(result.aggregate, grid.metric)
        if best is None or score > best[0]:
            best = (score, cell, cfg)
    return GridSearchResult(best_config=best[2], best_cell=best[1], table=table)
