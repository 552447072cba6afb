"""Record ingestion, narrative preprocessing, and synthetic corpus generation.

A record combines nine binary symptom flags, a numeric age, a free-text
narrative, and a binary label (1 = death due to uncontrolled
hyperglycaemia). Narratives are reduced to lowercase alphanumeric tokens
with stop words and masked disease keywords removed, so classifiers must
learn from symptom language rather than explicit diagnosis mentions.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyCorpusError, RowError, SchemaError

BIT_FIELDS = (
    "female",
    "tuber",
    "diabetes",
    "men_con",
    "cough",
    "ch_cough",
    "diarr",
    "exc_urine",
    "exc_drink",
)

CSV_HEADER = BIT_FIELDS + ("age", "description", "class")

# Shipped misspelling variants for the masked diagnosis keywords.
DEFAULT_MASKED_KEYWORDS = frozenset(
    {
        "diabetes",
        "diabetis",
        "diabeties",
        "diabetic",
        "diabities",
        "sugar",
        "suger",
        "shugar",
        "sugars",
    }
)

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def load_default_stop_words() -> frozenset[str]:
    """Stop words from the data file shipped with the package."""
    text = resources.files("vafusion.data").joinpath("stopwords_en.txt").read_text("utf-8")
    words = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


@dataclass(frozen=True)
class VARecord:
    """One death record in the Table-1 schema."""

    female: int
    tuber: int
    diabetes: int
    men_con: int
    cough: int
    ch_cough: int
    diarr: int
    exc_urine: int
    exc_drink: int
    age: float
    description: str
    class_label: int

    def __post_init__(self):
        for name in BIT_FIELDS:
            value = getattr(self, name)
            if value not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1, got {value!r}")
        if self.class_label not in (0, 1):
            raise ValueError(f"class_label must be 0 or 1, got {self.class_label!r}")
        if not np.isfinite(self.age) or self.age < 0:
            raise ValueError(f"age must be finite and non-negative, got {self.age!r}")


@dataclass(frozen=True)
class TokenizedDoc:
    """A preprocessed narrative: ordered tokens plus the record's label."""

    doc_id: int
    tokens: tuple[str, ...]
    label: int

    @property
    def degenerate(self) -> bool:
        """True when preprocessing left no tokens; these docs embed to zero."""
        return len(self.tokens) == 0


@dataclass(frozen=True)
class PreprocessConfig:
    stop_words: frozenset[str] = field(default_factory=load_default_stop_words)
    masked_keywords: frozenset[str] = DEFAULT_MASKED_KEYWORDS
    min_token_len: int = 3

    def __post_init__(self):
        if self.min_token_len < 1:
            raise ConfigError("min_token_len must be >= 1")
        for name in ("stop_words", "masked_keywords"):
            words = getattr(self, name)
            if any(w != w.lower() for w in words):
                raise ConfigError(f"{name} must be lowercase")


def preprocess_narrative(text: str, cfg: PreprocessConfig | None = None) -> list[str]:
    """Reduce a narrative to its surviving tokens, order preserved.

    Lowercases, splits on any non-alphanumeric character, then drops tokens
    shorter than min_token_len, stop words, and masked keywords. Idempotent:
    rejoining the output with spaces and preprocessing again is a no-op.
    """
    if cfg is None:
        cfg = PreprocessConfig()
    out = []
    for token in _TOKEN_SPLIT.split(text.lower()):
        if len(token) < cfg.min_token_len:
            continue
        if token in cfg.stop_words or token in cfg.masked_keywords:
            continue
        out.append(token)
    return out


def tokenize_corpus(records: Sequence[VARecord], cfg: PreprocessConfig | None = None) -> list[TokenizedDoc]:
    if cfg is None:
        cfg = PreprocessConfig()
    return [
        TokenizedDoc(doc_id=i, tokens=tuple(preprocess_narrative(r.description, cfg)), label=r.class_label)
        for i, r in enumerate(records)
    ]


def validate_tokenized(docs: Iterable[TokenizedDoc], cfg: PreprocessConfig) -> None:
    """Scan assertion: no masked keyword or stop word survives preprocessing."""
    banned = cfg.stop_words | cfg.masked_keywords
    seen_ids = set()
    for doc in docs:
        if doc.doc_id in seen_ids:
            raise ValueError(f"duplicate doc_id {doc.doc_id}")
        seen_ids.add(doc.doc_id)
        for token in doc.tokens:
            if token in banned:
                raise ValueError(f"banned token {token!r} in doc {doc.doc_id}")


def encode_structured(rec: VARecord, age_scale: float | None = 100.0) -> np.ndarray:
    """Encode a record as the 10-component numeric vector (Table-1 order).

    age_scale divides the age component (None disables scaling).
    """
    values = [float(getattr(rec, name)) for name in BIT_FIELDS]
    age = rec.age if age_scale in (None, 0) else rec.age / float(age_scale)
    values.append(age)
    return np.asarray(values, dtype=np.float64)


# --- CSV ingestion ---------------------------------------------------------

_TRUE_TOKENS = {"yes", "1", "female", "true"}
_FALSE_TOKENS = {"no", "0", "male", "false"}


def _parse_bit(cell: str) -> int:
    token = cell.strip().lower()
    if token in _TRUE_TOKENS:
        return 1
    if token in _FALSE_TOKENS:
        return 0
    raise ValueError(f"unrecognized binary value {cell!r}")


def parse_va_csv(path: str | Path, schema: dict[str, str] | None = None) -> list[VARecord]:
    """Parse a record CSV into VARecords, preserving row order.

    `schema` maps record field names ('female', ..., 'age', 'description',
    'class') to the column names actually present in the file; by default
    the canonical header is expected. yes/no, Female/Male, true/false, and
    0/1 are recognized case-insensitively in binary columns.
    """
    field_to_column = {name: name for name in CSV_HEADER}
    if schema:
        field_to_column.update(schema)

    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyCorpusError(f"{path}: file is empty")
        present = set(reader.fieldnames)
        for name, column in field_to_column.items():
            if column not in present:
                raise SchemaError(f"{path}: missing column {column!r} (for field {name!r})")

        records = []
        for row_num, row in enumerate(reader, start=2):  # header is line 1
            try:
                bits = {name: _parse_bit(row[field_to_column[name]]) for name in BIT_FIELDS}
                age = float(row[field_to_column["age"]])
                label = _parse_bit(row[field_to_column["class"]])
                rec = VARecord(
                    **bits,
                    age=age,
                    description=row[field_to_column["description"]],
                    class_label=label,
                )
            except (ValueError, TypeError) as exc:
                raise RowError(row_num, str(exc)) from exc
            records.append(rec)

    if not records:
        raise EmptyCorpusError(f"{path}: no data rows")
    return records


def write_va_csv(records: Sequence[VARecord], path: str | Path) -> None:
    """Serialize records in the canonical schema; parse(write(r)) == r."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            row = [str(getattr(rec, name)) for name in BIT_FIELDS]
            row.append(repr(rec.age))
            row.append(rec.description)
            row.append(str(rec.class_label))
            writer.writerow(row)


# --- Synthetic corpus ------------------------------------------------------

DEFAULT_POSITIVE_SIGNAL = (
    "thirst",
    "thirsty",
    "urinating",
    "urination",
    "drinking",
    "wasting",
    "drowsy",
    "confused",
    "dehydrated",
    "fruity",
    "unconscious",
    "collapsed",
    "weakness",
    "blurred",
    "vision",
    "coma",
)

DEFAULT_NEGATIVE_SIGNAL = (
    "fever",
    "malaria",
    "accident",
    "injury",
    "chest",
    "stroke",
    "cancer",
    "swelling",
    "bleeding",
    "headache",
    "pneumonia",
    "burns",
    "seizure",
    "tuberculosis",
    "vomited",
    "rash",
)

_BACKGROUND_POOL = (
    "started",
    "feeling",
    "unwell",
    "weeks",
    "months",
    "days",
    "taken",
    "clinic",
    "hospital",
    "treatment",
    "medication",
    "tablets",
    "home",
    "family",
    "relatives",
    "complained",
    "body",
    "eating",
    "sleeping",
    "walking",
    "condition",
    "worse",
    "better",
    "doctor",
    "nurse",
    "visited",
    "passed",
    "away",
    "morning",
    "night",
    "evening",
    "felt",
    "pain",
    "tired",
    "appetite",
    "losing",
    "strength",
    "stopped",
    "working",
    "returned",
    "later",
    "given",
    "help",
    "carried",
    "breathing",
    "slowly",
    "getting",
    "became",
    "stayed",
    "week",
    "told",
    "said",
    "went",
    "back",
    "legs",
    "arms",
    "stomach",
    "head",
    "water",
    "food",
    "refused",
    "swallow",
    "speak",
    "moving",
    "bedridden",
    "washed",
    "called",
    "ambulance",
    "transport",
    "admitted",
    "discharged",
    "checkup",
    "traditional",
    "healer",
    "prayed",
    "church",
    "neighbours",
    "village",
    "money",
    "child",
    "mother",
    "father",
    "sister",
    "brother",
    "wife",
    "husband",
)


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a seeded synthetic corpus with plantable class signal."""

    n_records: int = 1000
    positive_rate: float = 0.05
    signal_tokens_pos: tuple[str, ...] = DEFAULT_POSITIVE_SIGNAL
    signal_tokens_neg: tuple[str, ...] = DEFAULT_NEGATIVE_SIGNAL
    signal_strength: float = 0.3
    binary_feature_flip_prob: float = 0.35
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_records < 1:
            raise ConfigError("n_records must be >= 1")
        if not 0.0 < self.positive_rate < 1.0:
            raise ConfigError("positive_rate must lie in (0, 1)")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ConfigError("signal_strength must lie in [0, 1]")
        if not 0.0 <= self.binary_feature_flip_prob <= 1.0:
            raise ConfigError("binary_feature_flip_prob must lie in [0, 1]")
        if self.signal_strength == 1.0 and set(self.signal_tokens_pos) & set(self.signal_tokens_neg):
            raise ConfigError("signal token pools must be disjoint when signal_strength = 1")

    def with_seed(self, seed: int) -> "SynthSpec":
        return replace(self, rng_seed=seed)


def generate_synthetic_corpus(spec: SynthSpec) -> list[VARecord]:
    """Generate exactly spec.n_records seeded records.

    Labels are Bernoulli(positive_rate). Each narrative token comes from the
    class's signal pool with probability signal_strength, otherwise from a
    shared background pool; each binary flag equals the label XOR an
    independent Bernoulli(binary_feature_flip_prob) flip. A masked keyword
    ('sugar'/'diabetes') is planted in some positive narratives to mimic the
    explicit diagnosis mentions that preprocessing is meant to remove.
    """
    rng = np.random.default_rng(spec.rng_seed)
    pos_pool = list(spec.signal_tokens_pos)
    neg_pool = list(spec.signal_tokens_neg)
    background = list(_BACKGROUND_POOL)

    records = []
    for _ in range(spec.n_records):
        label = int(rng.random() < spec.positive_rate)
        pool = pos_pool if label else neg_pool

        n_tokens = int(rng.integers(30, 60))
        words = []
        for _ in range(n_tokens):
            if rng.random() < spec.signal_strength:
                words.append(pool[int(rng.integers(len(pool)))])
            else:
                words.append(background[int(rng.integers(len(background)))])
        if label and rng.random() < 0.4:
            words.insert(int(rng.integers(len(words) + 1)), "sugar")
        # sentence-ish punctuation so preprocessing has something to strip
        sentence_len = int(rng.integers(8, 13))
        parts = []
        for i in range(0, len(words), sentence_len):
            parts.append(" ".join(words[i : i + sentence_len]) + ".")
        description = " ".join(parts)

        flips = rng.random(len(BIT_FIELDS)) < spec.binary_feature_flip_prob
        bits = {name: label ^ int(flip) for name, flip in zip(BIT_FIELDS, flips)}
        age = float(rng.integers(0, 96))

        records.append(VARecord(**bits, age=age, description=description, class_label=label))
    return records
