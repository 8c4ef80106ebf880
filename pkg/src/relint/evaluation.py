"""Ranking evaluation: PR sweep, average precision, recall/F1 at fixed precision."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graph import NamePair, ParallelData

PRECISION_TARGETS = (0.8, 0.9, 0.95)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredExtraction:
    pair: NamePair
    relation: int
    probability: float
    gold: bool


@dataclass
class PrCurve:
    """(precision, recall) after each distinct-score step of the ranking.

    Items sharing a probability form one step; ``tied_groups`` counts steps
    holding more than one item.
    """

    precision: list[float]
    recall: list[float]
    thresholds: list[float]
    n_gold: int
    n_items: int
    tied_groups: int = 0

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.precision, self.recall))


def sweep(scores: Sequence[float], labels: Sequence[bool]) -> PrCurve:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_gold = int(labels.sum())
    if n_gold == 0:
        raise EvaluationError("no gold facts to evaluate against")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    # last index of each group of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    seen = ends + 1
    sizes = np.diff(np.r_[0, seen])
    return PrCurve(
        precision=(tp / seen).tolist(),
        recall=(tp / n_gold).tolist(),
        thresholds=s[ends].tolist(),
        n_gold=n_gold,
        n_items=len(s),
        tied_groups=int((sizes > 1).sum()),
    )


def build_ranking(
    predictions: Mapping[NamePair, np.ndarray],
    gold: ParallelData,
) -> tuple[list[ScoredExtraction], PrCurve]:
    """Score every (gold pair, target relation) and sweep the ranking."""
    items = []
    n_rel = len(gold.target_vocab)
    for ex in gold:
        probs = predictions.get(ex.pair)
        if probs is None:
            raise EvaluationError(f"pair {ex.pair} has no prediction")
        if len(probs) != n_rel:
            raise EvaluationError(f"pair {ex.pair} scored {len(probs)} relations, expected {n_rel}")
        for r in range(n_rel):
            items.append(ScoredExtraction(ex.pair, r, float(probs[r]), r in ex.gold))
    curve = sweep([it.probability for it in items], [it.gold for it in items])
    return items, curve


def auc(curve: PrCurve) -> float:
    """Average precision: precision at each step weighted by the recall it adds."""
    if not curve.precision:
        raise EvaluationError("empty curve")
    prev = 0.0
    total = 0.0
    for p, r in zip(curve.precision, curve.recall):
        total += p * (r - prev)
        prev = r
    return total


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Probability a gold item outranks a non-gold one (ties count half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    pos, neg = scores[labels], scores[~labels]
    if len(pos) == 0 or len(neg) == 0:
        raise EvaluationError("ROC-AUC needs both gold and non-gold items")
    neg_sorted = np.sort(neg)
    below = np.searchsorted(neg_sorted, pos, side="left")
    equal = np.searchsorted(neg_sorted, pos, side="right") - below
    return float((below + 0.5 * equal).sum() / (len(pos) * len(neg)))


def f1_at(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metrics_at_precision(curve: PrCurve, p: float) -> tuple[float, float] | None:
    """Best recall among sweep points with precision >= p, and F1 at p.

    Returns None when no point reaches the precision target.
    """
    if not 0 < p <= 1:
        raise ValueError("precision target must lie in (0, 1]")
    ok = [r for prec, r in zip(curve.precision, curve.recall) if prec >= p]
    if not ok:
        return None
    rec = max(ok)
    return rec, f1_at(p, rec)


def render(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


@dataclass
class MetricsReport:
    auc: float
    at_precision: dict[float, tuple[float, float] | None]
    n_gold: int
    n_items: int
    n_predicted: int = 0
    roc_auc: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "auc": self.auc,
            "n_gold": self.n_gold,
            "n_items": self.n_items,
            "n_predicted": self.n_predicted,
            "at_precision": {
                f"{p:g}": None if v is None else {"recall": v[0], "f1": v[1]}
                for p, v in self.at_precision.items()
            },
        }
        if self.roc_auc is not None:
            out["roc_auc"] = self.roc_auc
        out.update(self.extra)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    def table_row(self) -> str:
        cells = [render(self.auc)]
        for v in self.at_precision.values():
            cells += [render(None), render(None)] if v is None else [render(v[0]), render(v[1])]
        return " ".join(cells)


def evaluate(
    predictions: Mapping[NamePair, np.ndarray],
    gold: ParallelData,
    targets: Sequence[float] = PRECISION_TARGETS,
    threshold: float = 0.5,
    with_roc: bool = False,
) -> tuple[MetricsReport, PrCurve]:
    items, curve = build_ranking(predictions, gold)
    report = MetricsReport(
        auc=auc(curve),
        at_precision={p: metrics_at_precision(curve, p) for p in targets},
        n_gold=curve.n_gold,
        n_items=curve.n_items,
        n_predicted=sum(1 for it in items if it.probability >= threshold),
    )
    if with_roc:
        report.roc_auc = roc_auc([it.probability for it in items], [it.gold for it in items])
    return report, curve


def write_curve_csv(curve: PrCurve, fh) -> None:
    fh.write("precision,recall\n")
    for p, r in curve.points:
        fh.write(f"{p!r},{r!r}\n")
