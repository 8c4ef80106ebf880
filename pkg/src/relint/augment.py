"""Pseudo parallel data from the unmatched part of the target KG.

Unmatched target triples get a source relation sampled from P(r | r')
(estimated on the parallel data), producing a pseudo-extraction graph.
Pseudo pairs similar to the real training pairs (BM25 over bags of
surrounding target relations) are added to the training data.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .bm25 import Bm25Index
from .collective import StackedResult, train_stacked
from .graph import PSEUDO, Graph, NamePair, ParallelData, RelationVocab, build_parallel_data
from .local import cooccurrence_counts
from .neural import TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class SourceGivenTargetTable:
    """Per target relation: raw P(r | r') and the normalized sampling distribution."""

    raw: dict[int, dict[int, float]]
    normalized: dict[int, dict[int, float]]
    joint: dict[tuple[int, int], int]
    target_count: dict[int, int]
    unsynthesizable: list[int] = field(default_factory=list)

    def support(self, target_rel: int) -> list[tuple[int, float]]:
        return sorted(self.normalized.get(target_rel, {}).items())

    def to_jsonl(self, fh: TextIO, source_vocab: RelationVocab, target_vocab: RelationVocab) -> None:
        for t in sorted(self.raw):
            for r in sorted(self.raw[t]):
                row = {
                    "target": target_vocab[t],
                    "source": source_vocab[r],
                    "raw": self.raw[t][r],
                    "normalized": self.normalized[t][r],
                }
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def estimate_source_given_target(source: Graph, target: Graph, data: ParallelData) -> SourceGivenTargetTable:
    """P(r | r') = |K_r ∩ K'_r'| / |K'_r'| counted over the pairs in ``data``."""
    joint, _, tgt_count = cooccurrence_counts(source, data)
    raw: dict[int, dict[int, float]] = {}
    for (r, t), n in sorted(joint.items()):
        raw.setdefault(t, {})[r] = n / tgt_count[t]
    normalized = {}
    for t, row in raw.items():
        z = sum(row.values())
        normalized[t] = {r: v / z for r, v in row.items()}
    missing = [t for t in range(len(target.vocab)) if t not in raw]
    return SourceGivenTargetTable(raw, normalized, joint, tgt_count, missing)


def unmatched_pairs(source: Graph, target: Graph) -> set[NamePair]:
    """Target pairs with no extraction between the same entities."""
    return target.all_pairs() - source.all_pairs()


@dataclass
class PseudoGraph:
    graph: Graph
    skipped: int
    synthesized: int


def synthesize_pseudo_extractions(
    target: Graph,
    pairs,
    table: SourceGivenTargetTable,
    source_vocab: RelationVocab,
    seed: int = 0,
    samples_per_triple: int = 1,
) -> PseudoGraph:
    """One sampled source relation per unmatched target triple, entities kept.

    Triples are visited in sorted order and drawn from a single generator,
    so the result depends only on ``seed``.
    """
    rng = np.random.default_rng(seed)
    pairs = set(pairs)
    out = []
    skipped = 0
    for s, rel, o in target.named_triples():
        if (s, o) not in pairs:
            continue
        support = table.support(target.vocab.id(rel))
        if not support:
            skipped += 1
            continue
        ids = [r for r, _ in support]
        probs = np.array([p for _, p in support])
        for _ in range(samples_per_triple):
            r = ids[int(rng.choice(len(ids), p=probs / probs.sum()))]
            out.append((s, source_vocab[r], o))
    graph = Graph(source_vocab, out)
    if skipped:
        logger.info("%d unmatched triples skipped (no translation support)", skipped)
    return PseudoGraph(graph, skipped, len(graph))


def build_pseudo_parallel(pseudo: Graph, target: Graph) -> ParallelData:
    return build_parallel_data(pseudo, target, provenance=PSEUDO)


def make_virtual_document(target: Graph, pair: NamePair) -> Counter:
    """Target relations between, out of s (to others) and into o (from others), with multiplicity."""
    s, o = (target.entity_id(e) for e in pair)
    s = -1 if s is None else s
    o = -1 if o is None else o
    doc = Counter(target.by_pair.get((s, o), ()))
    doc.update(r for r, x in target.by_subject.get(s, ()) if x != o)
    doc.update(r for r, x in target.by_object.get(o, ()) if x != s)
    return doc


class PairRetriever:
    """BM25 index over the virtual documents of candidate pseudo pairs."""

    def __init__(self, target: Graph, pairs: list[NamePair], k1: float = 1.2, b: float = 0.75):
        self.pairs = sorted(pairs)
        self.index = Bm25Index([make_virtual_document(target, p) for p in self.pairs], k1, b)
        self.target = target

    def retrieve(self, query: Counter, k: int) -> list[NamePair]:
        return [self.pairs[i] for i, _ in self.index.search(query, k)]

    def retrieve_scored(self, query: Counter, k: int) -> list[tuple[NamePair, float]]:
        return [(self.pairs[i], s) for i, s in self.index.search(query, k)]


def bm25_retrieve(retriever: PairRetriever, query: Counter, k: int) -> list[NamePair]:
    return retriever.retrieve(query, k)


def select_pseudo_data(real: ParallelData, pseudo: ParallelData, target: Graph, k: int = 5) -> ParallelData:
    """Union of each real pair's top-k most similar pseudo pairs."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(pseudo) == 0:
        return ParallelData([], pseudo.target_vocab)
    retriever = PairRetriever(target, pseudo.pairs)
    chosen: set[NamePair] = set()
    for ex in real:
        chosen.update(retriever.retrieve(make_virtual_document(target, ex.pair), k))
    by_pair = {ex.pair: ex for ex in pseudo}
    return ParallelData([by_pair[p] for p in sorted(chosen)], pseudo.target_vocab)


def select_random_pseudo(pseudo: ParallelData, n: int, seed: int = 0) -> ParallelData:
    """``n`` pseudo pairs drawn uniformly; the control for retrieval selection."""
    n = min(n, len(pseudo))
    idx = np.random.default_rng(seed).choice(len(pseudo), size=n, replace=False)
    return pseudo.subset(sorted(int(i) for i in idx))


@dataclass
class Augmentation:
    table: SourceGivenTargetTable
    pseudo: PseudoGraph
    pseudo_data: ParallelData
    selected: ParallelData


def augment(
    source: Graph,
    target: Graph,
    train: ParallelData,
    k: int = 5,
    seed: int = 0,
    samples_per_triple: int = 1,
) -> Augmentation:
    """Translation table, pseudo graph, pseudo parallel data and its retrieval-selected subset."""
    table = estimate_source_given_target(source, target, train)
    pseudo = synthesize_pseudo_extractions(
        target, unmatched_pairs(source, target), table, source.vocab, seed, samples_per_triple
    )
    pseudo_data = build_pseudo_parallel(pseudo.graph, target)
    selected = select_pseudo_data(train, pseudo_data, target, k) if len(train) else ParallelData([], target.vocab)
    logger.info(
        "pseudo graph: %d triples, %d pseudo pairs, %d selected", len(pseudo.graph), len(pseudo_data), len(selected)
    )
    return Augmentation(table, pseudo, pseudo_data, selected)


def train_augmented(
    source: Graph,
    pseudo: Graph,
    train: ParallelData,
    selected: ParallelData,
    config: TrainConfig,
    fold_real_only: bool = False,
) -> StackedResult:
    """Stacked training over real plus selected pseudo pairs on K ∪ K^p.

    Falls back to plain stacked training when nothing was selected.
    """
    if len(selected) == 0:
        logger.warning("no pseudo pairs selected; training without augmentation")
        return train_stacked(source, train, config)
    graph = source.union(pseudo)
    return train_stacked(graph, train + selected, config, fold_real_only=fold_real_only)
