"""Partition scored examples into low / mutual / high abnormality selections.

The low tail takes the smallest scores, the high tail the largest, and the
mutual category the scores nearest the mean of the score distribution.  In
disjoint mode (default) the tails claim indices first, low before high, and
the mean-proximal picks come from the remainder; every tie breaks by
ascending ordinal.  The bucketed strategy applies the same rule within
character-length buckets, apportioning each quota across buckets by
population with largest-remainder rounding and spilling shortfalls from
underfull buckets to the next-largest bucket.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import CapacityError

if TYPE_CHECKING:
    from .corpus import Corpus
    from .mahalanobis import ScoreVector

__all__ = [
    "SelectionSpec",
    "Selection",
    "select_global",
    "select_bucketed",
    "label_all",
    "write_selection_csv",
]

_CATEGORIES = ("low", "high", "mean")


@dataclass(frozen=True)
class SelectionSpec:
    """Counts and strategy for a three-way selection."""

    k_low: int = 3500
    k_high: int = 3500
    k_mean: int = 3500
    strategy: str = "global"
    bucket_width: int = 250
    disjoint: bool = True

    def __post_init__(self) -> None:
        if self.k_low < 0 or self.k_high < 0 or self.k_mean < 0:
            raise ValueError("selection counts must be >= 0")
        if self.strategy not in ("global", "bucketed"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.bucket_width < 1:
            raise ValueError(f"bucket_width must be >= 1, got {self.bucket_width}")

    @property
    def total(self) -> int:
        return self.k_low + self.k_high + self.k_mean

    def to_dict(self) -> dict:
        return {
            "k_low": self.k_low,
            "k_high": self.k_high,
            "k_mean": self.k_mean,
            "strategy": self.strategy,
            "bucket_width": self.bucket_width,
            "disjoint": self.disjoint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionSpec":
        return cls(
            k_low=int(d.get("k_low", 3500)),
            k_high=int(d.get("k_high", 3500)),
            k_mean=int(d.get("k_mean", 3500)),
            strategy=str(d.get("strategy", "global")),
            bucket_width=int(d.get("bucket_width", 250)),
            disjoint=bool(d.get("disjoint", True)),
        )


@dataclass(frozen=True)
class Selection:
    """Three ordinal lists (each sorted ascending) plus the policy echo."""

    low: tuple[int, ...]
    high: tuple[int, ...]
    mean_proximal: tuple[int, ...]
    policy_echo: dict

    def to_dict(self) -> dict:
        return {
            "low": list(self.low),
            "high": list(self.high),
            "mean_proximal": list(self.mean_proximal),
            "policy_echo": self.policy_echo,
        }


def _score_array(scores: "ScoreVector | np.ndarray | Sequence[float]") -> np.ndarray:
    return np.asarray(getattr(scores, "scores", scores), dtype=np.float64)


def _check_capacity(n: int, spec: SelectionSpec) -> None:
    if spec.disjoint:
        if spec.total > n:
            raise CapacityError(
                f"requested {spec.total} disjoint selections from {n} examples"
            )
    else:
        biggest = max(spec.k_low, spec.k_high, spec.k_mean)
        if biggest > n:
            raise CapacityError(f"requested {biggest} selections from {n} examples")


def _take(order: np.ndarray, k: int, blocked: set[int]) -> list[int]:
    out: list[int] = []
    for i in order:
        if len(out) == k:
            break
        i = int(i)
        if i in blocked:
            continue
        out.append(i)
    return out


def _orders(s: np.ndarray, members: np.ndarray, mean: float):
    """Per-category candidate orders over ``members`` (ties keep ordinal order)."""
    low = members[np.argsort(s[members], kind="stable")]
    high = members[np.argsort(-s[members], kind="stable")]
    mean_prox = members[np.argsort(np.abs(s[members] - mean), kind="stable")]
    return {"low": low, "high": high, "mean": mean_prox}


def select_global(scores, spec: SelectionSpec = SelectionSpec()) -> Selection:
    """Select the k_low smallest, k_high largest, and k_mean mean-nearest scores.

    With ``disjoint`` on, low claims first, then high, then mean-proximal
    from whatever remains; the mean is always the mean of all scores.
    """
    s = _score_array(scores)
    n = len(s)
    _check_capacity(n, spec)
    score_mean = float(s.mean()) if n else None

    members = np.arange(n)
    orders = _orders(s, members, score_mean if score_mean is not None else 0.0)
    taken: set[int] = set()
    picked: dict[str, list[int]] = {}
    for cat, k in (("low", spec.k_low), ("high", spec.k_high), ("mean", spec.k_mean)):
        blocked = taken if spec.disjoint else set()
        got = _take(orders[cat], k, blocked)
        if spec.disjoint:
            taken.update(got)
        picked[cat] = got

    echo = {"spec": spec.to_dict(), "strategy": "global", "score_mean": score_mean}
    return Selection(
        low=tuple(sorted(picked["low"])),
        high=tuple(sorted(picked["high"])),
        mean_proximal=tuple(sorted(picked["mean"])),
        policy_echo=echo,
    )


def _largest_remainder(k: int, pops: list[int]) -> list[int]:
    """Apportion k units across buckets proportionally to population.

    Floors of the exact quotas first; leftovers go to the largest fractional
    remainders (ties: larger population, then lower list position).
    """
    total = sum(pops)
    if total == 0 or k == 0:
        return [0] * len(pops)
    exact = [k * p / total for p in pops]
    floors = [int(q) for q in exact]
    leftover = k - sum(floors)
    order = sorted(
        range(len(pops)), key=lambda b: (-(exact[b] - floors[b]), -pops[b], b)
    )
    for b in order[:leftover]:
        floors[b] += 1
    return floors


def select_bucketed(
    scores,
    char_lengths: Sequence[int] | np.ndarray,
    spec: SelectionSpec = SelectionSpec(strategy="bucketed"),
) -> Selection:
    """Three-way selection within character-length buckets of fixed width.

    Examples group by floor(char_length / bucket_width); each k is split
    across nonempty buckets by largest-remainder apportionment, the global
    selection rule runs inside each bucket against the bucket-local score
    mean, and quota shortfalls from buckets with too few free examples spill
    to the next bucket in descending-population order (repeating passes
    until placed).  Capacity errors are raised only when the corpus as a
    whole cannot satisfy the quotas.
    """
    s = _score_array(scores)
    lengths = np.asarray(char_lengths, dtype=np.int64)
    n = len(s)
    if len(lengths) != n:
        raise ValueError(f"char_lengths size {len(lengths)} does not match scores size {n}")
    _check_capacity(n, spec)
    width = spec.bucket_width

    bucket_of = lengths // width
    bucket_ids = sorted(int(b) for b in np.unique(bucket_of)) if n else []
    members = {b: np.nonzero(bucket_of == b)[0] for b in bucket_ids}
    pops = {b: len(members[b]) for b in bucket_ids}
    bucket_means = {b: float(s[members[b]].mean()) for b in bucket_ids}
    orders = {b: _orders(s, members[b], bucket_means[b]) for b in bucket_ids}

    quota = {
        cat: dict(zip(bucket_ids, _largest_remainder(k, [pops[b] for b in bucket_ids])))
        for cat, k in (("low", spec.k_low), ("high", spec.k_high), ("mean", spec.k_mean))
    }

    # Descending population, ties by lower bucket index.
    process_order = sorted(bucket_ids, key=lambda b: (-pops[b], b))

    taken: set[int] = set()
    picked: dict[str, list[int]] = {cat: [] for cat in _CATEGORIES}
    picked_sets: dict[str, set[int]] = {cat: set() for cat in _CATEGORIES}
    carry = {cat: 0 for cat in _CATEGORIES}
    first_pass = True
    while True:
        placed_any = False
        for b in process_order:
            for cat in _CATEGORIES:
                want = carry[cat] + (quota[cat][b] if first_pass else 0)
                if want == 0:
                    continue
                blocked = taken if spec.disjoint else picked_sets[cat]
                got = _take(orders[b][cat], want, blocked)
                if got:
                    placed_any = True
                    picked[cat].extend(got)
                    picked_sets[cat].update(got)
                    if spec.disjoint:
                        taken.update(got)
                carry[cat] = want - len(got)
        first_pass = False
        if all(c == 0 for c in carry.values()):
            break
        if not placed_any:
            raise CapacityError(
                f"could not place {sum(carry.values())} selections after spillover "
                f"(n={n}, requested={spec.total})"
            )

    echo = {
        "spec": spec.to_dict(),
        "strategy": "bucketed",
        "score_mean": float(s.mean()) if n else None,
        "bucket_width": width,
        "buckets": [
            {
                "bucket": b,
                "population": pops[b],
                "score_mean": bucket_means[b],
                "quota_low": quota["low"][b],
                "quota_high": quota["high"][b],
                "quota_mean": quota["mean"][b],
            }
            for b in bucket_ids
        ],
    }
    return Selection(
        low=tuple(sorted(picked["low"])),
        high=tuple(sorted(picked["high"])),
        mean_proximal=tuple(sorted(picked["mean"])),
        policy_echo=echo,
    )


def label_all(scores, selection: Selection) -> list[str]:
    """Per-example category: low | mutual | high | unselected.

    When the selection lists overlap (disjoint mode off), the first claim in
    low, high, mutual order wins, so every index gets exactly one label.
    """
    s = _score_array(scores)
    labels = ["unselected"] * len(s)
    for name, idxs in (("low", selection.low), ("high", selection.high), ("mutual", selection.mean_proximal)):
        for i in idxs:
            if i < 0 or i >= len(s):
                raise IndexError(f"selection index {i} out of range for {len(s)} scores")
            if labels[i] == "unselected":
                labels[i] = name
    return labels


def write_selection_csv(
    selection: Selection, corpus: "Corpus", scores, path: str | Path
) -> None:
    """Selected rows only: ordinal,id,category,score,char_length ascending by ordinal."""
    s = _score_array(scores)
    labels = label_all(s, selection)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["ordinal", "id", "category", "score", "char_length"])
        for i, label in enumerate(labels):
            if label == "unselected":
                continue
            ex = corpus[i]
            w.writerow([i, ex.id, label, repr(float(s[i])), ex.char_length])
