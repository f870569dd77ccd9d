"""Labeled text corpora: ingestion, word tokenization, cross-domain splits.

A :class:`Corpus` is an ordered, immutable collection of labeled samples;
it is the unit every split and experiment operates on. Splits come in four
levels that grade the distribution gap between training and evaluation
data, from none (level 1, same domain throughout) to maximal (level 4,
training data contains nothing from the evaluated domain).
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    DomainLeakageError,
    EmptyCorpusError,
    InsufficientSamplesError,
    MissingColumnError,
    UnparsableLabelError,
)

START_MARKER = "[CLS]"
END_MARKER = "[SEP]"

REQUIRED_COLUMNS = ("text", "label", "domain")

# Word tokens: runs of word characters, apostrophes kept inside words.
_WORD_RE = re.compile(r"\w+(?:'\w+)*")

_REAL_SPELLINGS = frozenset({"real", "0"})
_FAKE_SPELLINGS = frozenset({"fake", "1"})


class Label(Enum):
    REAL = "Real"
    FAKE = "Fake"

    @classmethod
    def parse(cls, value: object, row: int = -1) -> "Label":
        token = str(value).strip().lower()
        if token in _REAL_SPELLINGS:
            return cls.REAL
        if token in _FAKE_SPELLINGS:
            return cls.FAKE
        raise UnparsableLabelError(row, str(value))


@dataclass(frozen=True)
class Sample:
    """One labeled text with a free-form domain tag."""

    id: str
    text: str
    label: Label
    domain: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"sample {self.id!r}: text is empty after trimming")
        if not isinstance(self.label, Label):
            raise ValueError(f"sample {self.id!r}: label must be a Label")


@dataclass(frozen=True)
class Corpus:
    """Immutable ordered collection of samples with unique ids."""

    name: str
    samples: tuple[Sample, ...]

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ValueError(f"corpus {self.name!r}: duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    @property
    def class_counts(self) -> dict[Label, int]:
        counts = Counter(s.label for s in self.samples)
        return {Label.REAL: counts.get(Label.REAL, 0), Label.FAKE: counts.get(Label.FAKE, 0)}

    @property
    def domains(self) -> dict[str, int]:
        return dict(Counter(s.domain for s in self.samples))

    def dominant_domain(self) -> str:
        counts = Counter(s.domain for s in self.samples)
        # Deterministic: highest count, ties broken lexicographically.
        return min(counts, key=lambda dom: (-counts[dom], dom))

    def ids(self) -> set[str]:
        return {s.id for s in self.samples}

    def checksum(self) -> str:
        h = hashlib.sha256()
        for s in self.samples:
            h.update(json.dumps([s.id, s.text, s.label.value, s.domain]).encode("utf-8"))
        return h.hexdigest()


@dataclass(frozen=True)
class TokenizerConfig:
    max_len: int = 15
    lowercase: bool = True
    add_markers: bool = True

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


@dataclass(frozen=True)
class LevelSplit:
    level: int
    train: Corpus
    validation: Corpus
    test: Corpus
    provenance: dict = field(default_factory=dict)

    def partitions(self) -> dict[str, Corpus]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def tokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Split ``text`` into word tokens, truncate, and add sequence markers.

    Words are maximal runs of word characters (punctuation splits, case is
    folded when configured). The first ``max_len`` content tokens are kept,
    so the full sequence never exceeds max_len + 2 including markers.
    """
    source = text.lower() if config.lowercase else text
    tokens = _WORD_RE.findall(source)[: config.max_len]
    if config.add_markers:
        return [START_MARKER, *tokens, END_MARKER]
    return tokens


def content_tokens(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Tokenize without markers; the explainers' word-level feature space."""
    stripped = TokenizerConfig(
        max_len=config.max_len, lowercase=config.lowercase, add_markers=False
    )
    return tokenize(text, stripped)


def load_corpus(path: str | Path, format: str, name: str) -> Corpus:
    """Load a labeled corpus from a CSV or JSONL file.

    Rows must provide text, label and domain; labels accept real/0 and
    fake/1 case-insensitively. Missing ids are assigned as name#rowindex.
    Row order is preserved.
    """
    path = Path(path)
    if format == "csv":
        rows = _read_csv_rows(path)
    elif format == "jsonl":
        rows = _read_jsonl_rows(path)
    else:
        raise ValueError(f"unknown corpus format {format!r} (expected csv or jsonl)")

    samples = []
    for index, row in enumerate(rows):
        for column in REQUIRED_COLUMNS:
            if column not in row or row[column] is None:
                raise MissingColumnError(column)
        label = Label.parse(row["label"], row=index)
        sample_id = str(row["id"]) if row.get("id") not in (None, "") else f"{name}#{index}"
        samples.append(Sample(id=sample_id, text=str(row["text"]), label=label, domain=str(row["domain"])))
    if not samples:
        raise EmptyCorpusError(f"{path}: no data rows")
    return Corpus(name=name, samples=tuple(samples))


def _read_csv_rows(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for column in REQUIRED_COLUMNS:
            if column not in header:
                raise MissingColumnError(column)
        return list(reader)


def _read_jsonl_rows(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_corpus_jsonl(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for s in corpus:
            record = {"id": s.id, "text": s.text, "label": s.label.value, "domain": s.domain}
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def build_level_split(
    single_domain: Corpus,
    mixed: Corpus | None,
    level: int,
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
    balance: bool = True,
) -> LevelSplit:
    """Construct the train/validation/test corpora for one cross-domain level.

    Level 1: all three partitions drawn disjointly from the single domain.
    Level 2: train from the single domain; validation/test from the single
    domain holdout plus the mixed corpus (evaluation still sees the source
    domain). Level 3: train on the mixed corpus plus a portion of the
    single domain; evaluation exclusively on the single domain holdout.
    Level 4: train on the mixed corpus with every sample tagged with the
    single domain's dominant domain removed; evaluation exclusively on the
    single domain.

    Shuffling is driven by ``seed``; with ``balance`` each partition is
    downsampled so its class counts differ by at most one.
    """
    if level not in (1, 2, 3, 4):
        raise ValueError(f"level must be in 1..4, got {level}")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if level != 1 and mixed is None:
        raise ValueError(f"level {level} requires a mixed corpus")

    rng = np.random.default_rng(seed)
    r_train, r_val, r_test = ratios
    target_domain = single_domain.dominant_domain()

    single_shuffled = _shuffled(single_domain.samples, rng)

    if level == 1:
        train, val, test = _three_way(single_shuffled, ratios)
    elif level == 2:
        n_train = int(round(r_train * len(single_shuffled)))
        train = single_shuffled[:n_train]
        holdout = single_shuffled[n_train:]
        pool = _dedupe_ids(list(holdout) + list(mixed.samples), exclude={s.id for s in train})
        pool = _shuffled(pool, rng)
        val, test = _two_way(pool, r_val / (r_val + r_test))
    elif level == 3:
        n_eval = len(single_shuffled) - int(round(r_train * len(single_shuffled)))
        holdout = single_shuffled[:n_eval]
        portion = single_shuffled[n_eval:]
        train = _dedupe_ids(list(mixed.samples) + list(portion), exclude={s.id for s in holdout})
        train = _shuffled(train, rng)
        val, test = _two_way(holdout, r_val / (r_val + r_test))
    else:
        train = [s for s in mixed.samples if s.domain != target_domain]
        train = _shuffled(train, rng)
        val, test = _two_way(single_shuffled, r_val / (r_val + r_test))

    partitions = {"train": train, "validation": val, "test": test}
    if balance:
        partitions = {k: _balanced(v, rng) for k, v in partitions.items()}

    for pname, samples in partitions.items():
        if not samples:
            raise InsufficientSamplesError(f"level {level}: {pname} partition is empty")

    if level == 4:
        leaked = [s.id for s in partitions["train"] if s.domain == target_domain]
        if leaked:
            raise DomainLeakageError(
                f"level 4 train contains target-domain samples: {leaked[:5]}"
            )

    provenance = {
        "single_domain": single_domain.name,
        "mixed": mixed.name if mixed is not None else None,
        "target_domain": target_domain,
        "level": level,
        "ratios": list(ratios),
        "seed": seed,
        "balance": balance,
    }
    return LevelSplit(
        level=level,
        train=Corpus(name=f"{single_domain.name}-L{level}-train", samples=tuple(partitions["train"])),
        validation=Corpus(name=f"{single_domain.name}-L{level}-validation", samples=tuple(partitions["validation"])),
        test=Corpus(name=f"{single_domain.name}-L{level}-test", samples=tuple(partitions["test"])),
        provenance=provenance,
    )


def _shuffled(samples: Sequence[Sample], rng: np.random.Generator) -> list[Sample]:
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]


def _dedupe_ids(samples: list[Sample], exclude: set[str]) -> list[Sample]:
    seen = set(exclude)
    out = []
    for s in samples:
        if s.id not in seen:
            seen.add(s.id)
            out.append(s)
    return out


def _three_way(samples: list[Sample], ratios: tuple[float, float, float]) -> tuple[list, list, list]:
    n = len(samples)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    return samples[:n_train], samples[n_train : n_train + n_val], samples[n_train + n_val :]


def _two_way(samples: list[Sample], first_fraction: float) -> tuple[list, list]:
    n_first = int(round(first_fraction * len(samples)))
    return samples[:n_first], samples[n_first:]


def _balanced(samples: list[Sample], rng: np.random.Generator) -> list[Sample]:
    """Downsample the majority class so counts differ by at most one."""
    by_label = {Label.REAL: [], Label.FAKE: []}
    for i, s in enumerate(samples):
        by_label[s.label].append(i)
    n_real, n_fake = len(by_label[Label.REAL]), len(by_label[Label.FAKE])
    if abs(n_real - n_fake) <= 1:
        return samples
    majority = Label.REAL if n_real > n_fake else Label.FAKE
    keep_count = min(n_real, n_fake)
    kept_major = rng.choice(len(by_label[majority]), size=keep_count, replace=False)
    keep_indices = set(by_label[Label.REAL if majority is Label.FAKE else Label.FAKE])
    keep_indices.update(by_label[majority][i] for i in sorted(kept_major))
    return [samples[i] for i in range(len(samples)) if i in keep_indices]


def write_split_manifest(split: LevelSplit, path: str | Path) -> None:
    """Write the split as JSONL: a provenance header, then {id, partition} rows."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        header = {"type": "split-manifest", **split.provenance}
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for pname, corpus in split.partitions().items():
            for s in corpus:
                handle.write(json.dumps({"id": s.id, "partition": pname}, sort_keys=True) + "\n")
