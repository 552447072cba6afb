"""Command-line orchestration: synth, prepare, sweep, evaluate, project.

Every command is a pure function of (config file, input files, master
seed): reruns write byte-identical outputs. Each command drops a snapshot
of its effective config, the seed, and the package version into the output
directory so results are self-describing.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import __version__
from .classifiers import (
    BoostConfig,
    ForestConfig,
    LogisticConfig,
    MlpConfig,
    TrainConfig,
    save_classifier,
)
from .corpus import (
    DEFAULT_MASKED_KEYWORDS,
    PreprocessConfig,
    SynthSpec,
    TokenizedDoc,
    VARecord,
    encode_structured,
    generate_synthetic_corpus,
    load_default_stop_words,
    parse_va_csv,
    tokenize_corpus,
    validate_tokenized,
    write_va_csv,
)
from .decomposition import fit_pca, project_pca
from .embeddings import EmbeddingConfig, load_model, save_model, train_paragraph_model
from .errors import (
    ConfigError,
    DegenerateDataError,
    DivergenceError,
    EmptyCorpusError,
    LeakageError,
    RowError,
    SchemaError,
    ShapeError,
    VaFusionError,
)
from .evaluation import SETTINGS, GridSpec, cross_validate_pipeline, grid_search
from .resampling import ResampleConfig
from .seeding import derive_seed

EXIT_CODES = {
    ConfigError: 2,
    SchemaError: 3,
    RowError: 4,
    EmptyCorpusError: 5,
    DegenerateDataError: 6,
    DivergenceError: 7,
    ShapeError: 8,
    LeakageError: 9,
}

CLASSIFIER_KINDS = ("logistic", "forest", "gbt", "mlp")
SWEEP_MODES = ("dm", "dbow", "dm+dbow")


# --- experiment configuration -------------------------------------------------


@dataclass
class ExperimentConfig:
    seed: int
    input_csv: str | None = None
    synth: SynthSpec = field(default_factory=SynthSpec)
    min_token_len: int = 3
    extra_stop_words: tuple[str, ...] = ()
    masked_keywords: tuple[str, ...] | None = None  # None = shipped defaults
    age_scale: float | None = 100.0
    embeddings: tuple[EmbeddingConfig, ...] = (
        EmbeddingConfig(mode="dm", dim=50, window=9),
        EmbeddingConfig(mode="dbow", dim=50, window=9),
    )
    infer_epochs: int = 50
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    settings: tuple[str, ...] = SETTINGS
    classifiers: tuple[str, ...] = CLASSIFIER_KINDS
    grid: dict[str, GridSpec] = field(default_factory=dict)  # classifiers to grid-search
    folds: int = 5
    threshold: float = 0.5
    aggregation: str = "mean"
    global_embedding: bool = False
    sweep_dims: tuple[int, ...] = (50, 100)
    sweep_modes: tuple[str, ...] = SWEEP_MODES
    project_top_n: int = 150

    def __post_init__(self):
        if not self.settings or not self.classifiers:
            raise ConfigError("select at least one setting and one classifier")
        for s in self.settings:
            if s not in SETTINGS:
                raise ConfigError(f"unknown setting {s!r}")
        for c in self.classifiers:
            if c not in CLASSIFIER_KINDS:
                raise ConfigError(f"unknown classifier {c!r}")
        for m in self.sweep_modes:
            if m not in SWEEP_MODES:
                raise ConfigError(f"unknown sweep mode {m!r}")

    def preprocess_config(self) -> PreprocessConfig:
        masked = (
            DEFAULT_MASKED_KEYWORDS
            if self.masked_keywords is None
            else frozenset(w.lower() for w in self.masked_keywords)
        )
        stops = load_default_stop_words() | {w.lower() for w in self.extra_stop_words}
        return PreprocessConfig(
            stop_words=frozenset(stops),
            masked_keywords=masked,
            min_token_len=self.min_token_len,
        )


def _build_train_config(raw: dict, seed: int) -> TrainConfig:
    sections = {
        "logistic": LogisticConfig,
        "forest": ForestConfig,
        "boost": BoostConfig,
        "mlp": MlpConfig,
    }
    kwargs = {"seed": seed}
    for name, cls in sections.items():
        params = dict(raw.get(name, {}))
        if name == "mlp" and "hidden" in params:
            params["hidden"] = tuple(params["hidden"])
        kwargs[name] = cls(**params)
    return TrainConfig(**kwargs)


def config_from_dict(raw: dict, seed_override: int | None = None) -> ExperimentConfig:
    raw = dict(raw)
    seed = seed_override if seed_override is not None else raw.get("seed")
    if seed is None:
        raise ConfigError("a master seed is mandatory (config 'seed' or --seed)")
    seed = int(seed)

    synth_raw = dict(raw.get("synth", {}))
    synth_raw.setdefault("rng_seed", derive_seed(seed, "synth"))
    for key in ("signal_tokens_pos", "signal_tokens_neg"):
        if key in synth_raw:
            synth_raw[key] = tuple(synth_raw[key])
    synth = SynthSpec(**synth_raw)

    embeds = []
    for i, e in enumerate(raw.get("embeddings", [{"mode": "dm"}, {"mode": "dbow"}])):
        e = dict(e)
        e.setdefault("seed", 0)  # replaced per fold by the pipeline
        embeds.append(EmbeddingConfig(**e))

    grid = {}
    for kind, values in raw.get("grid", {}).items():
        parsed = {}
        for param, options in values.items():
            parsed[param] = tuple(
                tuple(v) if isinstance(v, list) else v for v in options
            )
        grid[kind] = GridSpec(parsed)

    resample_raw = dict(raw.get("resample", {}))
    resample_raw.setdefault("seed", 0)  # replaced per fold by the pipeline
    kwargs = dict(
        seed=seed,
        input_csv=raw.get("input_csv"),
        synth=synth,
        min_token_len=int(raw.get("min_token_len", 3)),
        extra_stop_words=tuple(raw.get("extra_stop_words", ())),
        masked_keywords=tuple(raw["masked_keywords"]) if "masked_keywords" in raw else None,
        age_scale=raw.get("age_scale", 100.0),
        embeddings=tuple(embeds),
        infer_epochs=int(raw.get("infer_epochs", 50)),
        resample=ResampleConfig(**resample_raw),
        train=_build_train_config(raw.get("train", {}), seed),
        settings=tuple(raw.get("settings", SETTINGS)),
        classifiers=tuple(raw.get("classifiers", CLASSIFIER_KINDS)),
        grid=grid,
        folds=int(raw.get("folds", 5)),
        threshold=float(raw.get("threshold", 0.5)),
        aggregation=raw.get("aggregation", "mean"),
        global_embedding=bool(raw.get("global_embedding", False)),
        sweep_dims=tuple(raw.get("sweep_dims", (50, 100))),
        sweep_modes=tuple(raw.get("sweep_modes", SWEEP_MODES)),
        project_top_n=int(raw.get("project_top_n", 150)),
    )
    return ExperimentConfig(**kwargs)


def load_config(path: str | None, seed_override: int | None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        raw = json.loads(Path(path).read_text("utf-8"))
    return config_from_dict(raw, seed_override)


def _snapshot(cfg: ExperimentConfig, out_dir: Path, command: str) -> None:
    payload = {"command": command, "version": __version__, "config": asdict(cfg)}
    text = json.dumps(payload, sort_keys=True, indent=2, default=repr)
    (out_dir / f"{command}_snapshot.json").write_text(text + "\n", "utf-8")


# --- prepared-corpus files ------------------------------------------------------


def _prepared_dir(out_dir: Path) -> Path:
    return out_dir / "prepared"


def _write_tokens_csv(docs: list[TokenizedDoc], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["doc_id", "label", "tokens"])
        for doc in docs:
            writer.writerow([doc.doc_id, doc.label, " ".join(doc.tokens)])


def _read_tokens_csv(path: Path) -> list[TokenizedDoc]:
    docs = []
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            tokens = tuple(row["tokens"].split()) if row["tokens"] else ()
            docs.append(TokenizedDoc(doc_id=int(row["doc_id"]), tokens=tokens, label=int(row["label"])))
    return docs


def _write_features_csv(records: list[VARecord], age_scale, path: Path) -> None:
    header = ["doc_id", "female", "tuber", "diabetes", "men_con", "cough",
              "ch_cough", "diarr", "exc_urine", "exc_drink", "age", "label"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, rec in enumerate(records):
            vec = encode_structured(rec, age_scale)
            writer.writerow([i] + [repr(float(v)) for v in vec] + [rec.class_label])


def _load_prepared(out_dir: Path) -> tuple[list[VARecord], list[TokenizedDoc]]:
    prepared = _prepared_dir(out_dir)
    corpus_path = prepared / "corpus.csv"
    tokens_path = prepared / "tokens.csv"
    if not corpus_path.exists() or not tokens_path.exists():
        raise ConfigError(f"no prepared corpus under {prepared}; run `prepare` first")
    return parse_va_csv(corpus_path), _read_tokens_csv(tokens_path)


# --- subcommands -----------------------------------------------------------------


def _load_records(cfg: ExperimentConfig) -> list[VARecord]:
    if cfg.input_csv:
        return parse_va_csv(cfg.input_csv)
    return generate_synthetic_corpus(cfg.synth)


def cmd_synth(cfg: ExperimentConfig, out_dir: Path) -> Path:
    records = generate_synthetic_corpus(cfg.synth)
    path = out_dir / "corpus.csv"
    write_va_csv(records, path)
    print(f"wrote {len(records)} records -> {path}")
    return path


def cmd_prepare(cfg: ExperimentConfig, out_dir: Path) -> Path:
    records = _load_records(cfg)
    pp = cfg.preprocess_config()
    docs = tokenize_corpus(records, pp)
    validate_tokenized(docs, pp)

    prepared = _prepared_dir(out_dir)
    prepared.mkdir(parents=True, exist_ok=True)
    write_va_csv(records, prepared / "corpus.csv")
    _write_tokens_csv(docs, prepared / "tokens.csv")
    _write_features_csv(records, cfg.age_scale, prepared / "features.csv")
    n_pos = sum(r.class_label for r in records)
    print(f"prepared {len(records)} records ({n_pos} positive) -> {prepared}")
    return prepared


def _sweep_embed_cfgs(cfg: ExperimentConfig, mode: str, dim: int) -> tuple[EmbeddingConfig, ...]:
    template = cfg.embeddings[0]
    dm = replace(template, mode="dm", dim=dim)
    dbow = replace(template, mode="dbow", dim=dim)
    return {"dm": (dm,), "dbow": (dbow,), "dm+dbow": (dm, dbow)}[mode]


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Table-2-shaped comparison: random-forest scores per embedding mode x dim."""
    records, docs = _load_prepared(out_dir)
    cache: dict = {}
    rows = []
    for mode in cfg.sweep_modes:
        for dim in cfg.sweep_dims:
            result = cross_validate_pipeline(
                records,
                "text",
                "forest",
                embed_cfgs=_sweep_embed_cfgs(cfg, mode, dim),
                resample_cfg=cfg.resample,
                train_cfg=cfg.train,
                k=cfg.folds,
                seed=cfg.seed,
                threshold=cfg.threshold,
                infer_epochs=cfg.infer_epochs,
                global_embedding=cfg.global_embedding,
                aggregation=cfg.aggregation,
                feature_cache=cache,
                tokenized=docs,
            )
            agg = result.aggregate
            rows.append([mode, dim, agg.recall, agg.precision, agg.f1, agg.auc, agg.accuracy])
            print(f"sweep {mode} dim={dim}: f1={agg.f1:.4f} auc={agg.auc:.4f}")

    path = out_dir / "sweep.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "dims", "recall", "precision", "f1_score", "auc_roc", "accuracy"])
        for method, dim, *metrics in rows:
            writer.writerow([method, dim] + [repr(float(m)) for m in metrics])
    print(f"wrote {path}")
    return path


def _write_metrics_csv(results, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["setting", "classifier", "fold", "recall", "precision",
                         "f1_score", "auc_roc", "accuracy"])
        for result in results:
            for report in [*result.reports, result.aggregate]:
                fold = "mean" if report.fold_index < 0 else str(report.fold_index)
                writer.writerow(
                    [report.setting, report.classifier, fold]
                    + [repr(float(v)) for v in (report.recall, report.precision,
                                                report.f1, report.auc, report.accuracy)]
                )


def _write_roc_csv(result, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fold", "fpr", "tpr"])
        for report in [*result.reports, result.aggregate]:
            fold = "pooled" if report.fold_index < 0 else str(report.fold_index)
            for fpr, tpr in report.roc:
                writer.writerow([fold, repr(float(fpr)), repr(float(tpr))])


def _write_grid_csv(search, path: Path) -> None:
    """Full grid-search results table: one row per cell, aggregate metrics."""
    param_names = list(search.table[0].params)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(param_names + ["recall", "precision", "f1_score", "auc_roc", "accuracy", "selected"])
        for cell in search.table:
            agg = cell.result.aggregate
            writer.writerow(
                [repr(cell.params[p]) for p in param_names]
                + [repr(float(v)) for v in (agg.recall, agg.precision, agg.f1, agg.auc, agg.accuracy)]
                + [str(int(cell is search.best_cell))]
            )


def _persist_best_model(result, models_dir: Path) -> Path:
    # best fold by F1, ties to the lower fold index
    best = max(result.fold_outcomes, key=lambda o: (o.report.f1, -o.report.fold_index))
    path = models_dir / f"model_{result.setting}_{result.classifier}.bin"
    save_classifier(
        best.model,
        path,
        extra_meta={
            "setting": result.setting,
            "classifier": result.classifier,
            "fold_index": best.report.fold_index,
        },
        extra_arrays={
            "test_features": best.test_features,
            "test_indices": best.test_indices,
            "test_probabilities": best.probabilities,
        },
    )
    return path


def cmd_evaluate(cfg: ExperimentConfig, out_dir: Path) -> Path:
    records, docs = _load_prepared(out_dir)
    models_dir = out_dir / "models"
    models_dir.mkdir(parents=True, exist_ok=True)

    cache: dict = {}
    results = []
    for setting in cfg.settings:
        for kind in cfg.classifiers:
            pipeline_kwargs = dict(
                embed_cfgs=cfg.embeddings,
                resample_cfg=cfg.resample,
                k=cfg.folds,
                age_scale=cfg.age_scale,
                threshold=cfg.threshold,
                infer_epochs=cfg.infer_epochs,
                global_embedding=cfg.global_embedding,
                aggregation=cfg.aggregation,
                feature_cache=cache,
                tokenized=docs,
            )
            if kind in cfg.grid:
                search = grid_search(
                    records, setting, kind, cfg.grid[kind],
                    base_train_cfg=cfg.train, seed=cfg.seed, **pipeline_kwargs,
                )
                _write_grid_csv(search, out_dir / f"grid_{setting}_{kind}.csv")
                result = search.best_cell.result
                print(f"grid {setting}/{kind}: best {search.best_cell.params}")
            else:
                result = cross_validate_pipeline(
                    records, setting, kind,
                    train_cfg=cfg.train, seed=cfg.seed, **pipeline_kwargs,
                )
            results.append(result)
            _write_roc_csv(result, out_dir / f"roc_{setting}_{kind}.csv")
            _persist_best_model(result, models_dir)
            agg = result.aggregate
            print(f"evaluate {setting}/{kind}: recall={agg.recall:.4f} precision={agg.precision:.4f} "
                  f"f1={agg.f1:.4f} auc={agg.auc:.4f} acc={agg.accuracy:.4f}")

    metrics_path = out_dir / "metrics.csv"
    _write_metrics_csv(results, metrics_path)

    # full-corpus embedding models, persisted for `project`
    if any(s in ("text", "combined") for s in cfg.settings):
        token_lists = [d.tokens for d in docs]
        for embed_cfg in cfg.embeddings:
            fit_cfg = replace(embed_cfg, seed=derive_seed(cfg.seed, "embed-final", embed_cfg.mode, embed_cfg.dim))
            model = train_paragraph_model(token_lists, fit_cfg)
            save_model(model, models_dir / f"embedding_{embed_cfg.mode}_{embed_cfg.dim}.bin")

    print(f"wrote {metrics_path}")
    return metrics_path


def cmd_project(cfg: ExperimentConfig, out_dir: Path, model_path: str, vectors: str = "words") -> Path:
    """Project the top-N word vectors (or all document vectors) to 2-D."""
    model = load_model(model_path)
    if vectors == "words":
        n = min(cfg.project_top_n, len(model.vocab))
        labels = model.vocab.tokens[:n]  # vocab is ordered by descending count
        points = model.word_vectors[:n]
    elif vectors == "docs":
        labels = [str(i) for i in range(model.paragraph_vectors.shape[0])]
        points = model.paragraph_vectors
    else:
        raise ConfigError(f"vectors must be 'words' or 'docs', got {vectors!r}")

    pca = fit_pca(points, 2)
    coords = project_pca(pca, points)
    path = out_dir / "projection.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["token", "x", "y"])
        for label, (x, y) in zip(labels, coords):
            writer.writerow([label, repr(float(x)), repr(float(y))])
    print(f"wrote {len(labels)} projections -> {path}")
    return path


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vafusion",
        description="Cause-of-death classification from verbal autopsy records",
    )
    parser.add_argument("--config", help="JSON experiment config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", help="generate a synthetic corpus CSV")
    sub.add_parser("prepare", help="ingest + preprocess into canonical corpus files")
    sub.add_parser("sweep", help="embedding mode x dimension sweep (random forest)")
    sub.add_parser("evaluate", help="cross-validate every (setting, classifier) cell")
    project = sub.add_parser("project", help="2-D PCA projection of a persisted embedding model")
    project.add_argument("--model", required=True, help="path to a persisted embedding model")
    project.add_argument("--vectors", choices=("words", "docs"), default="words")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _snapshot(cfg, out_dir, args.command)
        if args.command == "synth":
            cmd_synth(cfg, out_dir)
        elif args.command == "prepare":
            cmd_prepare(cfg, out_dir)
        elif args.command == "sweep":
            cmd_sweep(cfg, out_dir)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, out_dir)
        elif args.command == "project":
            cmd_project(cfg, out_dir, args.model, args.vectors)
    except VaFusionError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(type(exc), 1)
    except FileNotFoundError as exc:
        print(f"error[FileNotFoundError]: {exc}", file=sys.stderr)
        return 10
    return 0


if __name__ == "__main__":
    sys.exit(main())
