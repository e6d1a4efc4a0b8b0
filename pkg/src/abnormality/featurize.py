"""Tokenization, n-gram density tables, and positional-density feature matrices.

Feature i of an example is the corpus-wide relative frequency of the i-th
n-gram of its context; rows are back padded with zeros to a common length L
so one covariance matrix can be fit over the whole corpus.
"""

from __future__ import annotations

import csv
import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, NamedTuple

import numpy as np

from .errors import FitError

if TYPE_CHECKING:
    from .corpus import Corpus

__all__ = [
    "TokenizerConfig",
    "DensityTable",
    "FeatureMatrix",
    "FeatureRow",
    "NGRAM_SEP",
    "tokenize",
    "ngrams",
    "fit_density",
    "featurize_example",
    "build_matrix",
    "save_density",
    "load_density",
    "save_matrix",
    "load_matrix",
]

# Unit separator: joins the tokens of an n-gram into a single map key.
NGRAM_SEP = "\x1f"


@dataclass(frozen=True)
class TokenizerConfig:
    """Tokenizer flags; splitting is fixed to unicode whitespace."""

    lowercase: bool = True
    strip_edge_punctuation: bool = True

    def to_dict(self) -> dict:
        return {"lowercase": self.lowercase, "strip_edge_punctuation": self.strip_edge_punctuation}

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerConfig":
        return cls(
            lowercase=bool(d.get("lowercase", True)),
            strip_edge_punctuation=bool(d.get("strip_edge_punctuation", True)),
        )


def _strip_edge_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str, cfg: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Split on unicode whitespace, optionally lowercase and strip edge punctuation.

    Tokens that become empty after stripping are dropped; the empty string
    tokenizes to an empty list under every configuration.
    """
    tokens = text.split()
    if cfg.lowercase:
        tokens = [t.lower() for t in tokens]
    if cfg.strip_edge_punctuation:
        tokens = [_strip_edge_punct(t) for t in tokens]
        tokens = [t for t in tokens if t]
    return tokens


def ngrams(tokens: list[str], n: int) -> list[str]:
    """Overlapping stride-1 n-grams, each joined with the unit separator.

    Result length is max(0, len(tokens) - n + 1).
    """
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    if n == 1:
        return list(tokens)
    return [NGRAM_SEP.join(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


@dataclass(frozen=True)
class DensityTable:
    """Corpus-wide n-gram occurrence counts; density(g) = count(g) / total."""

    n: int
    counts: dict[str, int]
    total: int
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)

    def density(self, key: str) -> float:
        return self.counts.get(key, 0) / self.total

    def __len__(self) -> int:
        return len(self.counts)


def fit_density(corpus: "Corpus | Iterable", n: int, cfg: TokenizerConfig = TokenizerConfig()) -> DensityTable:
    """Count n-grams over all contexts (duplicates counted once per example).

    Raises FitError when the corpus yields no n-grams at order n.
    """
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    counts: dict[str, int] = {}
    total = 0
    for ex in corpus:
        for g in ngrams(tokenize(ex.context, cfg), n):
            counts[g] = counts.get(g, 0) + 1
            total += 1
    if total == 0:
        raise FitError(f"corpus yields no n-grams at order {n}")
    return DensityTable(n=n, counts=counts, total=total, tokenizer=cfg)


class FeatureRow(NamedTuple):
    values: np.ndarray
    true_length: int
    truncated: bool


def featurize_example(tokens: list[str], table: DensityTable, L: int) -> FeatureRow:
    """Positional-density row of length L for one tokenized context.

    row[i] is the density of the i-th n-gram for i < true_length; padded
    positions are exactly 0.  N-grams unseen at fit time map to 0.  A
    sequence longer than L is truncated to L and flagged.
    """
    if L < 1:
        raise ValueError(f"feature length must be >= 1, got {L}")
    grams = ngrams(tokens, table.n)
    truncated = len(grams) > L
    true_length = min(len(grams), L)
    row = np.zeros(L, dtype=np.float64)
    for i in range(true_length):
        row[i] = table.density(grams[i])
    return FeatureRow(values=row, true_length=true_length, truncated=truncated)


@dataclass(frozen=True)
class FeatureMatrix:
    """n_examples x L positional-density rows with per-row true lengths."""

    values: np.ndarray
    true_lengths: np.ndarray
    truncated: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValueError("feature matrix must be 2-dimensional")
        if len(self.true_lengths) != self.values.shape[0] or len(self.truncated) != self.values.shape[0]:
            raise ValueError("per-row metadata length does not match row count")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def build_matrix(
    corpus: "Corpus",
    table: DensityTable,
    cfg: TokenizerConfig = TokenizerConfig(),
    l_cap: int | None = None,
) -> FeatureMatrix:
    """Feature matrix over the corpus in ordinal order.

    L is the maximum per-example n-gram count, reduced to ``l_cap`` when set
    (longer rows are truncated and flagged).  ``cfg`` must match the config
    the table was fit with.  Downstream covariance is L x L, so for corpora
    with extreme length outliers capping near the 99.9th percentile length
    keeps memory in check.
    """
    if cfg != table.tokenizer:
        raise ValueError("tokenizer config does not match the one used to fit the density table")
    if l_cap is not None and l_cap < 1:
        raise ValueError(f"l_cap must be >= 1, got {l_cap}")

    token_lists = [tokenize(ex.context, cfg) for ex in corpus]
    gram_counts = [max(0, len(t) - table.n + 1) for t in token_lists]
    L = max(gram_counts, default=0)
    if l_cap is not None:
        L = min(L, l_cap)
    if L < 1:
        raise FitError(f"corpus yields no n-grams at order {table.n}")

    values = np.zeros((len(token_lists), L), dtype=np.float64)
    true_lengths = np.zeros(len(token_lists), dtype=np.int64)
    truncated = np.zeros(len(token_lists), dtype=bool)
    for i, tokens in enumerate(token_lists):
        row = featurize_example(tokens, table, L)
        values[i] = row.values
        true_lengths[i] = row.true_length
        truncated[i] = row.truncated
    return FeatureMatrix(values=values, true_lengths=true_lengths, truncated=truncated)


def save_density(table: DensityTable, csv_path: str | Path, header_path: str | Path) -> None:
    """Two-column CSV (ngram_key, count) sorted by key, plus a JSON header."""
    with open(csv_path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["ngram_key", "count"])
        for key in sorted(table.counts):
            w.writerow([key, table.counts[key]])
    header = {
        "ngram_order": table.n,
        "total": table.total,
        "tokenizer": table.tokenizer.to_dict(),
    }
    Path(header_path).write_text(
        json.dumps(header, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def load_density(csv_path: str | Path, header_path: str | Path) -> DensityTable:
    header = json.loads(Path(header_path).read_text(encoding="utf-8"))
    counts: dict[str, int] = {}
    with open(csv_path, "r", encoding="utf-8", newline="") as f:
        r = csv.reader(f)
        head = next(r, None)
        if head != ["ngram_key", "count"]:
            raise ValueError(f"unexpected density CSV header: {head}")
        for row in r:
            counts[row[0]] = int(row[1])
    table = DensityTable(
        n=int(header["ngram_order"]),
        counts=counts,
        total=int(header["total"]),
        tokenizer=TokenizerConfig.from_dict(header.get("tokenizer", {})),
    )
    if sum(counts.values()) != table.total:
        raise ValueError("density CSV counts do not sum to the header total")
    return table


def save_matrix(matrix: FeatureMatrix, bin_path: str | Path, sidecar_path: str | Path) -> None:
    """Flat little-endian float64 binary (row-major) plus a JSON sidecar."""
    Path(bin_path).write_bytes(matrix.values.astype("<f8").tobytes(order="C"))
    sidecar = {
        "rows": matrix.rows,
        "cols": matrix.cols,
        "true_lengths": matrix.true_lengths.tolist(),
        "truncated": [bool(t) for t in matrix.truncated],
        "dtype": "<f8",
        "layout": "C",
    }
    Path(sidecar_path).write_text(
        json.dumps(sidecar, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def load_matrix(bin_path: str | Path, sidecar_path: str | Path) -> FeatureMatrix:
    sidecar = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    rows, cols = int(sidecar["rows"]), int(sidecar["cols"])
    values = np.frombuffer(Path(bin_path).read_bytes(), dtype="<f8").reshape(rows, cols).copy()
    return FeatureMatrix(
        values=values,
        true_lengths=np.array(sidecar["true_lengths"], dtype=np.int64),
        truncated=np.array(sidecar["truncated"], dtype=bool),
    )
