"""Stage-one local scorer, candidate generation and relation translation."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .graph import Graph, NamePair, NeighborContext, ParallelData, RelationVocab, normalize_name
from .neural import ContractError, ModelParams, TrainConfig, average_embed, fit, forward, predict

logger = logging.getLogger(__name__)

LOCAL_ARITY = 3


def sample_ids(ids: Iterable[int], cap: int, rng: np.random.Generator | None) -> list[int]:
    """Sorted ids, downsampled uniformly without replacement to ``cap`` when rng is given."""
    ids = sorted(ids)
    if rng is not None and len(ids) > cap:
        pick = rng.choice(len(ids), size=cap, replace=False)
        ids = [ids[i] for i in sorted(pick)]
    return ids


def local_slots(ctx: NeighborContext, config: TrainConfig, rng: np.random.Generator | None = None) -> list[list[int]]:
    """Middle / subject-side / object-side relation ids for one pair.

    Neighbor sets are capped only when ``rng`` is given (training); at
    inference the full sets are used.
    """
    middle = sorted(ctx.middle) if config.use_middle else []
    if config.use_neighbor:
        subj = sample_ids(ctx.subject_side, config.max_neighbors, rng)
        obj = sample_ids(ctx.object_side, config.max_neighbors, rng)
    else:
        subj, obj = [], []
    return [middle, subj, obj]


@dataclass
class LocalModel:
    params: ModelParams
    config: TrainConfig
    source_vocab: RelationVocab
    target_vocab: RelationVocab
    history: list[float] = field(default_factory=list)

    def slots(self, graph: Graph, pair: NamePair, rng=None) -> list[list[int]]:
        return local_slots(graph.neighbor_context(pair), self.config, rng)

    def representation(self, graph: Graph, pair: NamePair, rng=None) -> np.ndarray:
        return local_representation(graph, pair, self, rng)

    def score(self, graph: Graph, pairs: list[NamePair]) -> np.ndarray:
        return predict(self.params, [self.slots(graph, p) for p in pairs])


def local_representation(graph: Graph, pair: NamePair, model: LocalModel, rng=None) -> np.ndarray:
    """Concatenated averaged embeddings, width 3 x dim."""
    return np.concatenate([average_embed(ids, model.params.embed) for ids in model.slots(graph, pair, rng)])


def score_local(graph: Graph, pair: NamePair, model: LocalModel) -> np.ndarray:
    return forward(model.params, local_representation(graph, pair, model))


def new_local_model(source_vocab: RelationVocab, target_vocab: RelationVocab, config: TrainConfig) -> LocalModel:
    params = ModelParams.init(
        len(source_vocab), len(target_vocab), LOCAL_ARITY, config.dim, config.hidden, seed=config.seed
    )
    params.meta = {"kind": "local"}
    return LocalModel(params, config, source_vocab, target_vocab)


def train_local(graph: Graph, data: ParallelData, config: TrainConfig) -> LocalModel:
    """Train a local model on ``data`` with features taken from ``graph``."""
    if len(data) == 0:
        raise ContractError("cannot train a local model on empty parallel data")
    model = new_local_model(graph.vocab, data.target_vocab, config)
    contexts = [graph.neighbor_context(ex.pair) for ex in data]
    golds = [ex.gold for ex in data]
    weights = _provenance_weights(data, config)

    def build(rng):
        return [local_slots(c, config, rng) for c in contexts]

    model.history = fit(
        model.params,
        build,
        golds,
        config,
        weights=weights,
        log=lambda e, l: logger.debug("local epoch %d loss %.5f", e, l),
    )
    return model


def _provenance_weights(data: ParallelData, config: TrainConfig):
    if config.pseudo_weight == 1.0:
        return None
    return np.array([config.pseudo_weight if ex.provenance == "pseudo" else 1.0 for ex in data])


# candidates -------------------------------------------------------------


class CandidateSet:
    """Thresholded per-pair predictions plus the raw probabilities.

    Also answers the neighbor queries of the collective stage: the union of
    candidates of pairs (s, x), x != o and of pairs (x, o), x != s.
    Pairs in ``hidden`` are invisible as neighbors but keep their own slot.
    """

    def __init__(self, predicted: dict[NamePair, frozenset[int]], probs: dict[NamePair, np.ndarray], target_vocab: RelationVocab):
        self.predicted = predicted
        self.probs = probs
        self.target_vocab = target_vocab
        self.hidden: frozenset[NamePair] = frozenset()
        self._by_subject: dict[str, list[NamePair]] = defaultdict(list)
        self._by_object: dict[str, list[NamePair]] = defaultdict(list)
        for pair in sorted(predicted):
            self._by_subject[pair[0]].append(pair)
            self._by_object[pair[1]].append(pair)

    def __len__(self) -> int:
        return len(self.predicted)

    def __contains__(self, pair) -> bool:
        return pair in self.predicted

    def own(self, pair: NamePair) -> frozenset[int]:
        return self.predicted.get(pair, frozenset())

    def subject_side(self, pair: NamePair) -> frozenset[int]:
        s, o = pair
        out: set[int] = set()
        for p in self._by_subject.get(s, ()):
            if p[1] != o and p not in self.hidden:
                out |= self.predicted[p]
        return frozenset(out)

    def object_side(self, pair: NamePair) -> frozenset[int]:
        s, o = pair
        out: set[int] = set()
        for p in self._by_object.get(o, ()):
            if p[0] != s and p not in self.hidden:
                out |= self.predicted[p]
        return frozenset(out)

    def with_hidden(self, hidden) -> "CandidateSet":
        c = CandidateSet.__new__(CandidateSet)
        c.__dict__.update(self.__dict__)
        c.hidden = frozenset(hidden)
        return c

    def merged(self, other: "CandidateSet") -> "CandidateSet":
        """Union of pair maps; ``other`` wins on overlap."""
        pred = dict(self.predicted)
        pred.update(other.predicted)
        probs = dict(self.probs)
        probs.update(other.probs)
        return CandidateSet(pred, probs, self.target_vocab)

    def to_jsonl(self, fh: TextIO, stage: str | None = None) -> None:
        names = self.target_vocab.entries
        for pair in sorted(self.predicted):
            row = {
                "subject": pair[0],
                "object": pair[1],
                "predicted": [names[r] for r in sorted(self.predicted[pair])],
                "probs": {names[r]: float(p) for r, p in enumerate(self.probs[pair])},
            }
            if stage is not None:
                row["stage"] = stage
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, fh: TextIO, target_vocab: RelationVocab) -> "CandidateSet":
        predicted, probs = {}, {}
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            pair = (normalize_name(row["subject"]), normalize_name(row["object"]))
            predicted[pair] = frozenset(target_vocab.id(r) for r in row["predicted"] if r in target_vocab)
            vec = np.zeros(len(target_vocab))
            for r, p in row.get("probs", {}).items():
                if r in target_vocab:
                    vec[target_vocab.id(r)] = p
            probs[pair] = vec
        return cls(predicted, probs, target_vocab)


def threshold_candidates(pairs: list[NamePair], probs: np.ndarray, threshold: float, target_vocab: RelationVocab) -> CandidateSet:
    predicted = {p: frozenset(np.flatnonzero(row >= threshold).tolist()) for p, row in zip(pairs, probs)}
    return CandidateSet(predicted, dict(zip(pairs, probs)), target_vocab)


def generate_candidates(graph: Graph, pairs, model: LocalModel, threshold: float | None = None) -> CandidateSet:
    """Independent per-relation decisions ``p >= threshold`` for every pair."""
    pairs = sorted(set(pairs))
    thr = model.config.threshold if threshold is None else threshold
    return threshold_candidates(pairs, model.score(graph, pairs), thr, model.target_vocab)


# relation translation ---------------------------------------------------

TARGET_GIVEN_SOURCE = "target|source"
SOURCE_GIVEN_TARGET = "source|target"


@dataclass
class TranslationTable:
    """Co-occurrence conditionals between source and target relations.

    ``table[given][other]`` holds P(other | given) for the stored direction.
    """

    direction: str
    table: dict[int, dict[int, float]]
    joint: dict[tuple[int, int], int]
    marginal: dict[int, int]

    def get(self, given: int, other: int) -> float:
        return self.table.get(given, {}).get(other, 0.0)


def cooccurrence_counts(source: Graph, data: ParallelData):
    """Joint pair counts per (source, target) relation and the two marginals."""
    joint: dict[tuple[int, int], int] = defaultdict(int)
    src_count: dict[int, int] = defaultdict(int)
    tgt_count: dict[int, int] = defaultdict(int)
    for ex in data:
        rels = source.relations_between(ex.pair)
        for r in rels:
            src_count[r] += 1
        for t in ex.gold:
            tgt_count[t] += 1
            for r in rels:
                joint[(r, t)] += 1
    return dict(joint), dict(src_count), dict(tgt_count)


def translation_fit(source: Graph, data: ParallelData, direction: str = TARGET_GIVEN_SOURCE) -> TranslationTable:
    joint, src_count, tgt_count = cooccurrence_counts(source, data)
    table: dict[int, dict[int, float]] = defaultdict(dict)
    if direction == TARGET_GIVEN_SOURCE:
        for (r, t), n in sorted(joint.items()):
            table[r][t] = n / src_count[r]
        marginal = src_count
    elif direction == SOURCE_GIVEN_TARGET:
        for (r, t), n in sorted(joint.items()):
            table[t][r] = n / tgt_count[t]
        marginal = tgt_count
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return TranslationTable(direction, dict(table), joint, marginal)


def translation_predict(table: TranslationTable, pair: NamePair, graph: Graph) -> frozenset[int]:
    """Union over middle relations of the best target relation (ties: lower id)."""
    if table.direction != TARGET_GIVEN_SOURCE:
        raise ValueError("prediction needs a target|source table")
    out = set()
    for r in graph.relations_between(pair):
        row = table.table.get(r)
        if row:
            out.add(min(row, key=lambda t: (-row[t], t)))
    return frozenset(out)


def translation_scores(table: TranslationTable, pair: NamePair, graph: Graph, n_target: int) -> np.ndarray:
    """max_r P(r'|r) over middle relations, used to rank the baseline's output."""
    out = np.zeros(n_target)
    for r in graph.relations_between(pair):
        for t, p in table.table.get(r, {}).items():
            out[t] = max(out[t], p)
    return out
