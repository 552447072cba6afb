"""Acceptance suite: each test is one numbered criterion at its stated
tolerance and (where stated) runtime budget, printing one PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import time

import numpy as np
import pytest

from oracles import (
    auc_pair_counting,
    finite_difference,
    knn_bruteforce,
    relative_error,
    tomek_links_bruteforce,
)
from vafusion.classifiers import (
    BoostConfig,
    ForestConfig,
    MlpConfig,
    TrainConfig,
    fit_gradient_boosting,
    logistic_objective,
    mlp_init,
    mlp_objective,
)
from vafusion.corpus import SynthSpec, generate_synthetic_corpus, tokenize_corpus
from vafusion.decomposition import fit_pca, project_pca
from vafusion.embeddings import (
    EmbeddingConfig,
    avg_log_prob,
    build_vocabulary,
    objective_gradients,
    train_paragraph_model,
)
from vafusion.evaluation import (
    ConfusionMatrix,
    auc,
    classification_metrics,
    cross_validate_pipeline,
    roc_curve,
    stratified_kfold_split,
)
from vafusion.resampling import (
    PROV_SYNTHETIC,
    LabeledDataset,
    ResampleConfig,
    find_tomek_links,
    knn_indices,
    smote_oversample,
    smote_tomek_resample,
)

PASS = "ACCEPTANCE {num:>2} PASS ({secs:.1f}s): {text}"


def report(num, started, text):
    print(PASS.format(num=num, secs=time.monotonic() - started, text=text))


# -- 1: gradient oracles -------------------------------------------------------


def test_criterion_01_gradient_oracles():
    started = time.monotonic()
    worst = 0.0

    # paragraph-vector objective: every parameter group, all three modes
    docs = [["a", "b", "c", "a"], ["c", "d", "b", "e"]]
    for mode, combine in (("dm", "concatenate"), ("dm", "average"), ("dbow", "concatenate")):
        cfg = EmbeddingConfig(dim=3, window=2, epochs=2, learning_rate=0.1,
                              mode=mode, dm_combine=combine, min_count=1, seed=7)
        model = train_paragraph_model(docs, cfg)
        _, gW, gP, gU, gb = objective_gradients(model, docs)
        for param, analytic in (
            (model.word_vectors, gW),
            (model.paragraph_vectors, gP),
            (model.output_weights, gU),
            (model.output_bias, gb),
        ):
            original = param.copy()

            def value_at(flat, _p=param, _orig=original):
                _p[...] = flat.reshape(_p.shape)
                try:
                    return avg_log_prob(model, docs)
                finally:
                    _p[...] = _orig

            fd = finite_difference(value_at, original.ravel())
            worst = max(worst, relative_error(analytic.ravel(), fd))

    # logistic loss
    rng = np.random.default_rng(3)
    for _ in range(5):
        X = rng.normal(size=(5, 3))
        y = rng.integers(0, 2, 5).astype(float)
        w, b = rng.normal(size=3), float(rng.normal())
        _, gw, gb = logistic_objective(w, b, X, y, l2=0.2)
        fd = finite_difference(lambda f: logistic_objective(f[:3], f[3], X, y, 0.2)[0], np.append(w, b))
        worst = max(worst, relative_error(np.append(gw, gb), fd))

    # MLP backprop (one hidden layer of 3 units)
    X = rng.normal(size=(6, 2))
    y = rng.integers(0, 2, 6).astype(float)
    weights, biases = mlp_init(2, (3,), rng)
    _, gw, gb = mlp_objective(weights, biases, X, y)
    shapes = [w.shape for w in weights]
    sizes = [w.size for w in weights]

    def mlp_loss(flat):
        ws, off = [], 0
        for shape, size in zip(shapes, sizes):
            ws.append(flat[off : off + size].reshape(shape))
            off += size
        bs = []
        for b in biases:
            bs.append(flat[off : off + b.size])
            off += b.size
        return mlp_objective(ws, bs, X, y)[0]

    flat = np.concatenate([w.ravel() for w in weights] + [b.ravel() for b in biases])
    fd = finite_difference(mlp_loss, flat)
    analytic = np.concatenate([g.ravel() for g in gw] + [g.ravel() for g in gb])
    worst = max(worst, relative_error(analytic, fd))

    elapsed = time.monotonic() - started
    assert worst < 1e-4
    assert elapsed < 10.0
    report(1, started, f"analytic vs finite-difference gradients, worst rel err {worst:.2e}")


# -- 2: brute-force equivalence -------------------------------------------------


def test_criterion_02_bruteforce_equivalence():
    started = time.monotonic()

    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 51))
        pts = rng.normal(size=(n, int(rng.integers(1, 6))))
        q = int(rng.integers(n))
        k = int(rng.integers(1, n - 1))
        assert knn_indices(pts, q, k).tolist() == knn_bruteforce(pts, q, k)

    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(6, 51))
        X = rng.normal(size=(n, 3))
        if seed % 3 == 0:
            X = X.round(1)  # force distance ties and duplicates
        y = (rng.random(n) < 0.4).astype(int)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        assert find_tomek_links(LabeledDataset(features=X, labels=y)) == tomek_links_bruteforce(X, y)

    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(2000 + seed)
        n = int(rng.integers(10, 201))
        scores = rng.random(n)
        if seed % 2 == 0:
            scores = scores.round(1)  # tie groups
        truth = rng.integers(0, 2, n)
        if truth.min() == truth.max():
            truth[0] = 1 - truth[0]
        worst = max(worst, abs(auc(scores, truth) - auc_pair_counting(scores, truth)))
    assert worst < 1e-12

    elapsed = time.monotonic() - started
    assert elapsed < 60.0
    report(2, started, f"knn/tomek exact on 200 instances; AUC vs Mann-Whitney within {worst:.1e}")


# -- 3: SMOTE geometry -----------------------------------------------------------


def test_criterion_03_smote_geometry():
    started = time.monotonic()
    checked = 0
    for seed, ratio in [(0, 1.0), (1, 1.0), (2, 0.8), (3, 0.5), (4, 1.0)]:
        rng = np.random.default_rng(seed)
        n_min, n_maj = int(rng.integers(4, 10)), int(rng.integers(30, 60))
        X = np.vstack([rng.normal(size=(n_min, 4)), rng.normal(loc=3, size=(n_maj, 4))])
        y = np.array([1] * n_min + [0] * n_maj)
        cfg = ResampleConfig(k_neighbors=min(3, n_min - 1), target_ratio=ratio, seed=seed)
        out = smote_oversample(LabeledDataset(features=X, labels=y), cfg)

        expected_syn = max(0, int(round(ratio * n_maj)) - n_min)
        syn_rows = np.flatnonzero(out.provenance == PROV_SYNTHETIC)
        assert len(syn_rows) == expected_syn  # balance count exact

        for row in syn_rows:
            i, nn = out.parent_idx[row]
            lam = out.parent_lam[row]
            assert y[i] == 1 and y[nn] == 1
            assert 0.0 <= lam <= 1.0
            np.testing.assert_allclose(out.features[row], X[i] + lam * (X[nn] - X[i]), atol=1e-9)
            checked += 1
    assert checked >= 150
    report(3, started, f"{checked} synthetic rows all convex combinations of logged parents")


# -- 4: leakage assertion suite ---------------------------------------------------


def test_criterion_04_leakage_suite():
    started = time.monotonic()
    records = generate_synthetic_corpus(
        SynthSpec(n_records=300, positive_rate=0.1, signal_strength=0.4,
                  binary_feature_flip_prob=0.3, rng_seed=5)
    )
    base_docs = tokenize_corpus(records)
    # plant a unique token per document so any vocabulary leak is detectable
    docs = [d.__class__(doc_id=d.doc_id, tokens=d.tokens + (f"uniq{d.doc_id}",), label=d.label)
            for d in base_docs]
    labels = np.asarray([r.class_label for r in records])
    split = stratified_kfold_split(labels, 5, seed=11)

    from vafusion.corpus import encode_structured

    features = np.stack([encode_structured(r) for r in records])
    embed_cfg = EmbeddingConfig(dim=6, window=2, epochs=2, min_count=1, negative=3, seed=0)

    for fold, (train_idx, test_idx) in enumerate(split.folds):
        # vocabulary side: fit on training docs only, then scan
        model = train_paragraph_model([docs[i].tokens for i in train_idx], embed_cfg)
        train_tokens = set()
        for i in train_idx:
            train_tokens.update(docs[i].tokens)
        test_only = set()
        for i in test_idx:
            test_only.update(set(docs[i].tokens) - train_tokens)
        assert test_only, "fixture must contain test-only tokens"
        leaked = [t for t in model.vocab.tokens if t in test_only]
        assert leaked == []
        assert f"uniq{train_idx[0]}" in model.vocab.token_to_index  # check has teeth

        # SMOTE side: parents of every synthetic row map into the training fold
        resampled = smote_tomek_resample(
            LabeledDataset(features=features[train_idx], labels=labels[train_idx]),
            ResampleConfig(k_neighbors=3, seed=fold),
        )
        syn = resampled.provenance == PROV_SYNTHETIC
        parents = resampled.parent_idx[syn]
        assert parents.size > 0
        assert parents.min() >= 0 and parents.max() < len(train_idx)
        parent_records = set(train_idx[parents.ravel()].tolist())
        assert parent_records & set(test_idx.tolist()) == set()

    # the pipeline's built-in assertions run on every fold of a real call
    cross_validate_pipeline(
        records, "combined", "gbt",
        embed_cfgs=(embed_cfg,),
        train_cfg=TrainConfig(boost=BoostConfig(n_rounds=10)),
        k=5, seed=11, infer_epochs=5,
    )
    report(4, started, "zero SMOTE-parent and zero vocabulary leaks across all 5 folds")


# -- 5: qualitative reproduction of the combined-features advantage ----------------


def test_criterion_05_combined_beats_binary():
    started = time.monotonic()
    records = generate_synthetic_corpus(
        SynthSpec(n_records=2000, positive_rate=0.05, signal_strength=0.3,
                  binary_feature_flip_prob=0.35, rng_seed=42)
    )
    embed = (
        EmbeddingConfig(mode="dm", dim=24, window=5, epochs=12, negative=5, min_count=2),
        EmbeddingConfig(mode="dbow", dim=24, window=5, epochs=12, negative=5, min_count=2),
    )
    cache = {}
    kwargs = dict(embed_cfgs=embed, k=5, seed=7, infer_epochs=30, feature_cache=cache)
    binary = cross_validate_pipeline(records, "binary", "gbt", **kwargs)
    text = cross_validate_pipeline(records, "text", "gbt", **kwargs)
    combined = cross_validate_pipeline(records, "combined", "gbt", **kwargs)

    elapsed = time.monotonic() - started
    assert combined.aggregate.auc >= binary.aggregate.auc + 0.02
    assert text.aggregate.auc >= 0.65
    assert elapsed < 300.0
    report(
        5, started,
        f"AUC binary {binary.aggregate.auc:.3f} < combined {combined.aggregate.auc:.3f} "
        f"(gap {combined.aggregate.auc - binary.aggregate.auc:.3f}); text {text.aggregate.auc:.3f}",
    )


# -- 6: null-signal control ---------------------------------------------------------


def test_criterion_06_null_signal_control():
    started = time.monotonic()
    records = generate_synthetic_corpus(
        SynthSpec(n_records=700, positive_rate=0.1, signal_strength=0.0,
                  binary_feature_flip_prob=0.5, rng_seed=1234)
    )
    embed = (
        EmbeddingConfig(mode="dm", dim=16, window=5, epochs=10, negative=5, min_count=2),
        EmbeddingConfig(mode="dbow", dim=16, window=5, epochs=10, negative=5, min_count=2),
    )
    train_cfg = TrainConfig(
        forest=ForestConfig(n_trees=60, max_depth=8),
        boost=BoostConfig(n_rounds=40),
        mlp=MlpConfig(hidden=(16,), epochs=60),
    )
    cache = {}
    aucs = {}
    for setting in ("binary", "text", "combined"):
        for kind in ("logistic", "forest", "gbt", "mlp"):
            res = cross_validate_pipeline(
                records, setting, kind, embed_cfgs=embed, train_cfg=train_cfg,
                k=5, seed=99, infer_epochs=30, feature_cache=cache,
            )
            aucs[(setting, kind)] = res.aggregate.auc
    assert all(0.35 <= a <= 0.65 for a in aucs.values()), aucs
    lo, hi = min(aucs.values()), max(aucs.values())
    report(6, started, f"12 null-signal cells all inside [0.35, 0.65] (range {lo:.3f}..{hi:.3f})")


# -- 7: monotone training -------------------------------------------------------------


def test_criterion_07_monotone_training():
    started = time.monotonic()
    rng = np.random.default_rng(17)
    X = rng.normal(size=(200, 6))
    y = (X[:, 0] + 0.5 * rng.normal(size=200) > 0).astype(int)
    model = fit_gradient_boosting(
        LabeledDataset(features=X, labels=y),
        TrainConfig(boost=BoostConfig(n_rounds=50, learning_rate=0.1, max_depth=3)),
    )
    losses = np.asarray(model.train_loss)
    assert len(losses) == 51
    assert (np.diff(losses) <= 1e-12).all()

    docs = [
        "thirst water drinking urine night body".split(),
        "fever cough chest pain clinic visit".split(),
        "thirst drinking weak thirst urine water".split(),
        "accident injury hospital fever cough chest".split(),
        "water night thirst body urine drinking".split(),
        "clinic visit pain chest fever cough".split(),
        "drinking thirst urine weak night water".split(),
        "hospital clinic injury accident pain visit".split(),
        "body weak thirst water drinking night".split(),
        "cough fever clinic chest visit pain".split(),
    ]
    cfg = EmbeddingConfig(dim=8, window=3, epochs=20, learning_rate=0.05, min_count=1, seed=2)
    frozen = train_paragraph_model(docs, EmbeddingConfig(
        dim=8, window=3, epochs=1, learning_rate=1e-15, min_count=1, seed=2))
    before = avg_log_prob(frozen, docs)
    after = avg_log_prob(train_paragraph_model(docs, cfg), docs)
    assert after > before
    report(7, started,
           f"GBT loss non-increasing over 50 rounds; avg log prob {before:.3f} -> {after:.3f}")


# -- 8: metric arithmetic ---------------------------------------------------------------


def test_criterion_08_metric_arithmetic():
    started = time.monotonic()
    m = classification_metrics(ConfusionMatrix(tp=3, fp=1, tn=4, fn=2))
    assert m.precision == 0.75
    assert m.recall == 0.6
    assert m.f1 == 2 * 0.75 * 0.6 / (0.75 + 0.6)
    assert abs(m.f1 - 0.6667) < 5e-5
    assert m.accuracy == 0.7

    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(5, 61))
        scores = rng.random(n)
        if rng.random() < 0.5:
            scores = scores.round(1)
        truth = rng.integers(0, 2, n)
        if truth.min() == truth.max():
            truth[0] = 1 - truth[0]
        points = roc_curve(scores, truth)
        assert points[0] == (0.0, 0.0)
        assert points[-1] == (1.0, 1.0)
        fpr = [p[0] for p in points]
        tpr = [p[1] for p in points]
        assert all(a <= b for a, b in zip(fpr, fpr[1:]))
        assert all(a <= b for a, b in zip(tpr, tpr[1:]))
        worst = max(worst, abs(auc(scores, truth) - auc_pair_counting(scores, truth)))
    assert worst < 1e-12
    report(8, started, f"worked example exact; 1000 fuzzed ROC instances, max AUC gap {worst:.1e}")


# -- 9: command determinism ---------------------------------------------------------------


def test_criterion_09_command_determinism(tmp_path):
    import json as json_mod

    from vafusion.cli import main

    started = time.monotonic()
    config = {
        "seed": 33,
        "synth": {"n_records": 120, "positive_rate": 0.15, "signal_strength": 0.5,
                  "binary_feature_flip_prob": 0.25},
        "embeddings": [
            {"mode": "dm", "dim": 6, "window": 2, "epochs": 3, "negative": 3, "min_count": 2},
            {"mode": "dbow", "dim": 6, "window": 2, "epochs": 3, "negative": 3, "min_count": 2},
        ],
        "infer_epochs": 6,
        "train": {"forest": {"n_trees": 8, "max_depth": 3}, "boost": {"n_rounds": 8},
                  "mlp": {"hidden": [6], "epochs": 8}},
        "settings": ["binary", "text"],
        "classifiers": ["logistic", "gbt"],
        "folds": 3,
        "sweep_dims": [4, 6, 8],
        "sweep_modes": ["dm", "dbow", "dm+dbow"],
        "project_top_n": 15,
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json_mod.dumps(config))

    def run_all(out_dir):
        for command in ("synth", "prepare", "sweep", "evaluate"):
            assert main(["--config", str(cfg_path), "--out", str(out_dir), command]) == 0
        assert main(["--config", str(cfg_path), "--out", str(out_dir), "project",
                     "--model", str(out_dir / "models" / "embedding_dbow_6.bin")]) == 0

    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_all(out_a)
    run_all(out_b)

    files_a = {p.relative_to(out_a): p.read_bytes() for p in sorted(out_a.rglob("*")) if p.is_file()}
    files_b = {p.relative_to(out_b): p.read_bytes() for p in sorted(out_b.rglob("*")) if p.is_file()}
    assert files_a.keys() == files_b.keys()
    diff = [str(k) for k in files_a if files_a[k] != files_b[k]]
    assert diff == []

    sweep_rows = (out_a / "sweep.csv").read_text().splitlines()
    assert sweep_rows[0] == "method,dims,recall,precision,f1_score,auc_roc,accuracy"
    assert len(sweep_rows) == 1 + 9  # 3 modes x 3 dims, shaped like the sweep table
    report(9, started, f"{len(files_a)} output files byte-identical across reruns")


# -- 10: PCA -------------------------------------------------------------------------------


def test_criterion_10_pca():
    started = time.monotonic()
    rng = np.random.default_rng(12)
    for trial in range(20):
        d = int(rng.integers(3, 8))
        r_true = int(rng.integers(1, d))
        n = int(rng.integers(d + 2, 40))
        basis = rng.normal(size=(r_true, d))
        X = rng.normal(size=(n, r_true)) @ basis + rng.normal(size=d)

        model = fit_pca(X, r_true)
        gram = model.components @ model.components.T
        assert np.abs(gram - np.eye(r_true)).max() < 1e-8

        coords = project_pca(model, X)
        recon = coords @ model.components + model.mean
        assert np.abs(recon - X).max() < 1e-8  # exact-rank reconstruction

        full = fit_pca(X, min(n - 1, d))
        total = np.var(X, axis=0, ddof=1).sum()
        assert abs(full.explained_variance.sum() - total) < 1e-8
        assert (np.diff(full.explained_variance) <= 1e-12).all()
    report(10, started, "orthonormality, rank reconstruction, variance accounting all within 1e-8")
