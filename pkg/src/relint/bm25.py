"""Okapi BM25 over bags of tokens with an inverted index."""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from typing import Hashable, Mapping, Sequence

logger = logging.getLogger(__name__)


class Bm25Index:
    """Inverted index over token bags.

    ``idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`` (the non-negative form
    used by Lucene). Query tokens count once per occurrence.
    """

    def __init__(self, docs: Sequence[Mapping[Hashable, int]], k1: float = 1.2, b: float = 0.75):
        self.k1 = k1
        self.b = b
        self.n_docs = len(docs)
        self.lengths = [sum(d.values()) for d in docs]
        self.avg_length = sum(self.lengths) / self.n_docs if self.n_docs else 0.0
        self.postings: dict[Hashable, list[tuple[int, int]]] = defaultdict(list)
        for i, doc in enumerate(docs):
            for tok, tf in sorted(doc.items(), key=lambda kv: repr(kv[0])):
                if tf > 0:
                    self.postings[tok].append((i, tf))
        self.idf = {
            tok: math.log(1.0 + (self.n_docs - len(p) + 0.5) / (len(p) + 0.5)) for tok, p in self.postings.items()
        }

    def term_score(self, tok, tf: int, doc_len: int) -> float:
        norm = self.k1 * (1.0 - self.b + self.b * doc_len / self.avg_length)
        return self.idf[tok] * tf * (self.k1 + 1.0) / (tf + norm)

    def scores(self, query: Mapping[Hashable, int]) -> dict[int, float]:
        acc: dict[int, float] = defaultdict(float)
        for tok, qtf in sorted(query.items(), key=lambda kv: repr(kv[0])):
            for doc, tf in self.postings.get(tok, ()):
                acc[doc] += qtf * self.term_score(tok, tf, self.lengths[doc])
        return dict(acc)

    def search(self, query: Mapping[Hashable, int], k: int) -> list[tuple[int, float]]:
        """Top-k (doc index, score) with positive score; ties go to the lower index."""
        if not query or sum(query.values()) == 0:
            logger.warning("empty BM25 query")
            return []
        hits = [(d, s) for d, s in self.scores(query).items() if s > 0]
        hits.sort(key=lambda ds: (-ds[1], ds[0]))
        return hits[:k]


def bag(tokens) -> Counter:
    return Counter(tokens)
