"""Evaluation: recall at IoU thresholds over ranked predictions, query-group
splits, and the Monte-Carlo chance level of uniform valid-cell selection.

IoU here is computed on continuous second intervals, matching how raw
annotations are scored; clip-level IoU lives in the loss module.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import MomentAnnotation, tokenize
from .errors import ConfigurationError

TEMPORAL_WORDS = frozenset({"finally", "afterwards", "while", "after", "until", "before"})
SPATIAL_WORDS = frozenset({
    "above", "across", "around", "behind", "beside", "between", "inside",
    "near", "outside", "over", "under", "front", "left", "right",
})

Interval = tuple[float, float]


def interval_iou_seconds(a: Interval, b: Interval) -> float:
    """IoU of two real-time intervals; 0 when disjoint or degenerate-vs-different."""
    (a_start, a_end), (b_start, b_end) = a, b
    inter = max(0.0, min(a_end, b_end) - max(a_start, b_start))
    union = (a_end - a_start) + (b_end - b_start) - inter
    if union > 0:
        return inter / union
    return 1.0 if (a_start, a_end) == (b_start, b_end) else 0.0


def best_iou(ranked: Sequence[Interval], truth: Interval, n: int) -> float:
    """Highest IoU among the top-n ranked predictions; 0 with no predictions."""
    if not ranked:
        return 0.0
    return max(interval_iou_seconds(pred, truth) for pred in ranked[:n])


def recall_at(ranked_per_query: Sequence[Sequence[Interval]],
              truths: Sequence[Interval], n: int, m: float) -> float:
    """Fraction of queries whose top-n predictions contain an IoU >= m hit."""
    if len(ranked_per_query) != len(truths):
        raise ConfigurationError(
            f"{len(ranked_per_query)} prediction lists for {len(truths)} ground truths"
        )
    if not truths:
        raise ConfigurationError("recall is undefined over zero queries")
    hits = sum(1 for ranked, truth in zip(ranked_per_query, truths)
               if best_iou(ranked, truth, n) >= m)
    return hits / len(truths)


def split_queries(annotations: Sequence[MomentAnnotation], group: str) -> list[MomentAnnotation]:
    """Annotations whose queries contain a whole-word transition cue of the group."""
    try:
        words = {"temporal": TEMPORAL_WORDS, "spatial": SPATIAL_WORDS}[group]
    except KeyError:
        raise ConfigurationError(f"unknown query group {group!r}") from None
    return [ann for ann in annotations if words & set(tokenize(ann.query_text))]


@dataclass
class EvalResult:
    """Recall table plus per-query diagnostics."""

    recalls: dict[tuple[int, float, str], float] = field(default_factory=dict)
    best_iou_per_query: list[float] = field(default_factory=list)
    n_queries: int = 0
    n_skipped: int = 0

    def recall(self, n: int, m: float, group: str = "all") -> float:
        return self.recalls[(n, m, group)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "m", "recall", "query_group"])
            for (n, m, group), value in sorted(self.recalls.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1])):
                writer.writerow([n, f"{m:g}", f"{value:.6f}", group])


def evaluate_rankings(ranked_per_query: Sequence[Sequence[Interval]],
                      annotations: Sequence[MomentAnnotation],
                      n_list: Sequence[int] = (1,),
                      m_list: Sequence[float] = (0.3, 0.5, 0.7),
                      groups: Sequence[str] = ("temporal", "spatial"),
                      n_skipped: int = 0) -> EvalResult:
    """Build the full recall table, including per-group splits, from rankings."""
    truths = [(ann.t_start, ann.t_end) for ann in annotations]
    result = EvalResult(n_queries=len(annotations), n_skipped=n_skipped)
    result.best_iou_per_query = [best_iou(r, t, max(n_list)) for r, t in zip(ranked_per_query, truths)]
    for n in n_list:
        for m in m_list:
            result.recalls[(n, m, "all")] = recall_at(ranked_per_query, truths, n, m)
    for group in groups:
        members = split_queries(annotations, group)
        if not members:
            continue
        keep = {id(ann) for ann in members}
        idx = [i for i, ann in enumerate(annotations) if id(ann) in keep]
        sub_ranked = [ranked_per_query[i] for i in idx]
        sub_truths = [truths[i] for i in idx]
        for n in n_list:
            for m in m_list:
                result.recalls[(n, m, group)] = recall_at(sub_ranked, sub_truths, n, m)
    return result


def uniform_chance_recall(annotations: Sequence[MomentAnnotation], l: int,
                          n: int = 1, m: float = 0.5, draws: int = 2000,
                          seed: int = 0) -> float:
    """Monte-Carlo R@n under uniform random selection among the valid cells."""
    rng = np.random.default_rng(seed)
    xs, ys = np.triu_indices(l)
    hits = 0
    for ann in annotations:
        truth = (ann.t_start, ann.t_end)
        scale = ann.duration / l
        for _ in range(draws):
            picks = rng.integers(0, len(xs), size=n)
            got = any(
                interval_iou_seconds((xs[i] * scale, (ys[i] + 1) * scale), truth) >= m
                for i in picks
            )
            hits += got
    return hits / (len(annotations) * draws)
