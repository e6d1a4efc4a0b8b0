"""Score-distribution statistics and the report bundle.

Provides histogram, skewness / excess kurtosis, and length-score Pearson
correlation over abnormality scores, and writes the CSV/JSON report files
shaped for direct use by standard plotting tools.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .errors import StatError
from .hashing import sha256_file
from .sampler import Selection, label_all

if TYPE_CHECKING:
    from .corpus import Corpus
    from .mahalanobis import ScoreVector

__all__ = [
    "DistributionStats",
    "Histogram",
    "moments_stats",
    "histogram",
    "pearson",
    "emit_report",
]


@dataclass(frozen=True)
class DistributionStats:
    """Moment summary of a score distribution.

    ``variance`` uses the 1/(n-1) normalization; ``skewness`` and
    ``excess_kurtosis`` are population-standardized central moments (excess
    kurtosis is 0 for a normal distribution, positive for leptokurtic).
    Both are None when the variance is zero.
    """

    n: int
    mean: float
    variance: float
    skewness: float | None
    excess_kurtosis: float | None
    min: float
    max: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "variance": self.variance,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "min": self.min,
            "max": self.max,
        }


@dataclass(frozen=True)
class Histogram:
    """Uniform-width histogram; edges span the data so under/overflow are 0."""

    bin_edges: np.ndarray
    counts: np.ndarray
    underflow: int = 0
    overflow: int = 0


def _values(scores) -> np.ndarray:
    return np.asarray(getattr(scores, "scores", scores), dtype=np.float64)


def moments_stats(scores) -> DistributionStats:
    """Mean, variance, and standardized third/fourth central moments."""
    x = _values(scores)
    n = len(x)
    if n < 2:
        raise StatError(f"need at least 2 values for distribution stats, got {n}")
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev**2))
    variance = float(dev @ dev / (n - 1))
    if m2 == 0.0:
        skewness = excess_kurtosis = None
    else:
        skewness = float(np.mean(dev**3) / m2**1.5)
        excess_kurtosis = float(np.mean(dev**4) / m2**2 - 3.0)
    return DistributionStats(
        n=n,
        mean=mean,
        variance=variance,
        skewness=skewness,
        excess_kurtosis=excess_kurtosis,
        min=float(x.min()),
        max=float(x.max()),
    )


def histogram(scores, bins: int = 100) -> Histogram:
    """Uniform bins over [min, max], right-open except the final bin.

    Degenerate range (all values equal at v): edges become the unit interval
    [v-1, v] so the closed final bin receives all n values.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    x = _values(scores)
    if len(x) == 0:
        raise StatError("cannot histogram an empty score vector")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        edges = np.linspace(hi - 1.0, hi, bins + 1)
        counts = np.zeros(bins, dtype=np.int64)
        counts[-1] = len(x)
        return Histogram(bin_edges=edges, counts=counts)
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(x, bins=edges)
    return Histogram(bin_edges=edges, counts=counts.astype(np.int64))


def pearson(xs: Sequence[float] | np.ndarray, ys: Sequence[float] | np.ndarray) -> float:
    """Product-moment correlation, clamped to [-1, 1].

    Raises StatError when either argument is constant (undefined correlation)
    or fewer than two points are given.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"inputs must be 1-d of equal length, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise StatError(f"need at least 2 points for correlation, got {len(x)}")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise StatError("correlation undefined: at least one input is constant")
    r = float(xc @ yc) / float(np.sqrt(sxx * syy))
    return min(1.0, max(-1.0, r))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _exemplar(corpus: "Corpus", s: np.ndarray, i: int) -> dict:
    ex = corpus[int(i)]
    return {"ordinal": ex.ordinal, "id": ex.id, "title": ex.title, "score": float(s[i])}


def emit_report(
    corpus: "Corpus",
    scores: "ScoreVector",
    selection: Selection | None,
    stats: DistributionStats,
    pearson_by_order: Mapping[int, float | None],
    out_dir: str | Path,
    bins: int = 100,
    dimension: int | None = None,
    input_hashes: Mapping[str, str] | None = None,
) -> dict:
    """Write scores.csv, histogram.csv, summary.json, manifest.json.

    summary.json carries n, feature dimension, shrinkage epsilon, the score
    distribution stats, Pearson r per n-gram order, and the lowest / highest
    / mean-nearest exemplars (ordinal, id, title, score).  The returned
    manifest lists every written file with its content hash.
    """
    s = _values(scores)
    if len(s) != len(corpus):
        raise ValueError(f"scores length {len(s)} does not match corpus size {len(corpus)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    labels = label_all(s, selection) if selection is not None else ["unselected"] * len(s)

    scores_path = out / "scores.csv"
    _write_csv(
        scores_path,
        ["ordinal", "id", "title", "char_length", "score", "category"],
        (
            [ex.ordinal, ex.id, ex.title, ex.char_length, repr(float(s[i])), labels[i]]
            for i, ex in enumerate(corpus)
        ),
    )

    hist = histogram(s, bins=bins)
    hist_path = out / "histogram.csv"
    _write_csv(
        hist_path,
        ["bin_left", "bin_right", "count"],
        (
            [repr(float(hist.bin_edges[b])), repr(float(hist.bin_edges[b + 1])), int(hist.counts[b])]
            for b in range(len(hist.counts))
        ),
    )

    mean = float(s.mean())
    summary = {
        "n": len(s),
        "dimension": dimension,
        "epsilon": float(scores.model_epsilon) if hasattr(scores, "model_epsilon") else None,
        "score_stats": stats.to_dict(),
        "pearson_by_order": {str(k): v for k, v in sorted(pearson_by_order.items())},
        "exemplars": {
            "lowest": _exemplar(corpus, s, np.argmin(s)),
            "highest": _exemplar(corpus, s, np.argmax(s)),
            "mean_nearest": _exemplar(corpus, s, np.argmin(np.abs(s - mean))),
        },
        "selection_counts": {
            "low": labels.count("low"),
            "mutual": labels.count("mutual"),
            "high": labels.count("high"),
            "unselected": labels.count("unselected"),
        },
    }
    summary_path = out / "summary.json"
    summary_path.write_text(
        json.dumps(summary, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )

    files = {p.name: sha256_file(p) for p in (scores_path, hist_path, summary_path)}
    manifest = {"files": files, "inputs": dict(input_hashes or {})}
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return manifest
