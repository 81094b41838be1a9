"""Feature vocabulary by report frequency and binary report vectors."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import quote, unquote

import numpy as np

from .errors import RadpipeError

DEFAULT_MIN_COUNT = 3  # kept when seen in more than two reports
_NEEDS_QUOTING = set(',%"\r\n')


@dataclass
class FeatureVocab:
    keys: list[str]
    doc_counts: list[int]
    min_count: int

    def index(self) -> dict[str, int]:
        return {k: i for i, k in enumerate(self.keys)}

    def __len__(self) -> int:
        return len(self.keys)


@dataclass
class FeatureMatrix:
    report_ids: list[str]
    labels: np.ndarray  # (n,) in {0, 1}
    keys: list[str]
    X: np.ndarray       # (n, p) uint8

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.X = np.asarray(self.X, dtype=np.uint8).reshape(len(self.report_ids), len(self.keys))

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape

    def columns(self, idx: Sequence[int]) -> "FeatureMatrix":
        idx = list(idx)
        return FeatureMatrix(self.report_ids, self.labels, [self.keys[i] for i in idx], self.X[:, idx])

    def rows(self, idx: Sequence[int]) -> "FeatureMatrix":
        idx = list(idx)
        return FeatureMatrix([self.report_ids[i] for i in idx], self.labels[idx], self.keys, self.X[idx])


def build_vocab(report_features: Iterable[tuple[str, Iterable[str]]], min_count: int = DEFAULT_MIN_COUNT) -> FeatureVocab:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for _, keys in report_features:
        counts.update(set(keys))
    kept = sorted((k for k, c in counts.items() if c >= min_count), key=lambda k: (-counts[k], k))
    return FeatureVocab(kept, [counts[k] for k in kept], min_count)


def vectorize(vocab: FeatureVocab, report_features: Sequence[tuple[str, Iterable[str]]],
              labels: Sequence[int]) -> FeatureMatrix:
    if len(labels) != len(report_features):
        raise ValueError(f"{len(report_features)} reports but {len(labels)} labels")
    index = vocab.index()
    ids = [rid for rid, _ in report_features]
    dupes = [rid for rid, c in Counter(ids).items() if c > 1]
    if dupes:
        raise RadpipeError(f"duplicate report id {dupes[0]!r}")
    X = np.zeros((len(ids), len(vocab)), dtype=np.uint8)
    for i, (_, keys) in enumerate(report_features):
        cols = [index[k] for k in keys if k in index]
        X[i, cols] = 1
    return FeatureMatrix(ids, np.asarray(labels), list(vocab.keys), X)


def _encode_key(key: str) -> str:
    return quote(key, safe="") if _NEEDS_QUOTING & set(key) else key


def save_matrix(matrix: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["report_id", "label", *(_encode_key(k) for k in matrix.keys)])
        for rid, label, row in zip(matrix.report_ids, matrix.labels, matrix.X):
            w.writerow([rid, int(label), *row.tolist()])


def load_matrix(path: str | Path) -> FeatureMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["report_id", "label"]:
        raise RadpipeError(f"{path}: missing 'report_id,label,...' header")
    keys = [unquote(k) for k in rows[0][2:]]
    ids, labels, data = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(keys) + 2:
            raise RadpipeError(f"{path}:{lineno}: expected {len(keys) + 2} fields, got {len(row)}")
        if row[1] not in ("0", "1") or any(v not in ("0", "1") for v in row[2:]):
            raise RadpipeError(f"{path}:{lineno}: values must be 0 or 1")
        ids.append(row[0])
        labels.append(int(row[1]))
        data.append([int(v) for v in row[2:]])
    X = np.array(data, dtype=np.uint8).reshape(len(ids), len(keys))
    return FeatureMatrix(ids, np.array(labels, dtype=np.int64), keys, X)
