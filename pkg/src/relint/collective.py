"""Stage-two collective scorer and stacked (out-of-fold) training."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .graph import Graph, NamePair, ParallelData, RelationVocab
from .local import CandidateSet, LocalModel, generate_candidates, local_slots, threshold_candidates, train_local
from .neural import ContractError, ModelParams, TrainConfig, average_embed, fit, forward, predict

logger = logging.getLogger(__name__)

COLLECTIVE_ARITY = 6


class PlanError(ValueError):
    pass


def collective_slots(graph: Graph, pair: NamePair, candidates: CandidateSet, config: TrainConfig, n_source: int, rng=None):
    """Local slots followed by own / subject-side / object-side candidate slots.

    Candidate target relations index the rows after the source block.
    """
    slots = local_slots(graph.neighbor_context(pair), config, rng)
    for cand in (candidates.own(pair), candidates.subject_side(pair), candidates.object_side(pair)):
        slots.append([n_source + r for r in sorted(cand)])
    return slots


@dataclass
class CollectiveModel:
    params: ModelParams
    config: TrainConfig
    source_vocab: RelationVocab
    target_vocab: RelationVocab
    history: list[float] = field(default_factory=list)

    def slots(self, graph: Graph, pair: NamePair, candidates: CandidateSet, rng=None):
        return collective_slots(graph, pair, candidates, self.config, self.params.n_source, rng)

    def score(self, graph: Graph, pairs: list[NamePair], candidates: CandidateSet) -> np.ndarray:
        return predict(self.params, [self.slots(graph, p, candidates) for p in pairs])


def collective_representation(graph: Graph, pair: NamePair, candidates: CandidateSet, model: CollectiveModel) -> np.ndarray:
    return np.concatenate([average_embed(ids, model.params.embed) for ids in model.slots(graph, pair, candidates)])


def score_collective(graph: Graph, pair: NamePair, candidates: CandidateSet, model: CollectiveModel) -> np.ndarray:
    return forward(model.params, collective_representation(graph, pair, candidates, model))


def new_collective_model(
    source_vocab: RelationVocab,
    target_vocab: RelationVocab,
    config: TrainConfig,
    init_from: LocalModel | None = None,
) -> CollectiveModel:
    ns = len(source_vocab)
    params = ModelParams.init(
        ns, len(target_vocab), COLLECTIVE_ARITY, config.dim, config.hidden, n_target=len(target_vocab), seed=config.seed
    )
    if init_from is not None:
        params.embed[:ns] = init_from.params.embed
    params.meta = {"kind": "collective"}
    return CollectiveModel(params, config, source_vocab, target_vocab)


# fold planning ----------------------------------------------------------


@dataclass
class FoldPlan:
    """Fold index per training example plus the seed of each fold model."""

    assignment: list[int]
    seeds: list[int]

    @property
    def folds(self) -> int:
        return len(self.seeds)

    def members(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def complement(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f != fold]


def make_fold_plan(n: int, folds: int, seed: int) -> FoldPlan:
    if folds < 2:
        raise PlanError("need at least two folds")
    if n < folds:
        raise PlanError(f"{n} examples cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(n)
    assignment = [0] * n
    for pos, i in enumerate(order):
        assignment[int(i)] = pos % folds
    return FoldPlan(assignment, [seed + f + 1 for f in range(folds)])


@dataclass
class StackReport:
    """Which fold model produced each example's candidates, and what it saw."""

    plan: FoldPlan
    pairs: list[NamePair]
    provenance: list[str]
    fold_training: list[list[int]]
    fold_candidates: CandidateSet

    def producer(self, i: int) -> int:
        return self.plan.assignment[i]

    def leaks(self) -> list[int]:
        """Examples whose producing fold model was trained on them."""
        out = []
        for i in range(len(self.pairs)):
            seen = set(self.fold_training[self.producer(i)])
            if i in seen:
                out.append(i)
        return out

    def to_json(self) -> dict:
        return {
            "folds": self.plan.folds,
            "fold_seeds": self.plan.seeds,
            "examples": [
                {
                    "subject": p[0],
                    "object": p[1],
                    "provenance": prov,
                    "fold": self.plan.assignment[i],
                    "producer": f"fold-{self.plan.assignment[i]}",
                }
                for i, (p, prov) in enumerate(zip(self.pairs, self.provenance))
            ],
            "fold_training_sizes": [len(t) for t in self.fold_training],
            "leaks": self.leaks(),
        }

    def write(self, fh: TextIO) -> None:
        json.dump(self.to_json(), fh, sort_keys=True, indent=1)
        fh.write("\n")


@dataclass
class StackedResult:
    collective: CollectiveModel
    local: LocalModel
    report: StackReport
    candidates: CandidateSet


def train_stacked(
    graph: Graph,
    data: ParallelData,
    config: TrainConfig,
    local: LocalModel | None = None,
    background: bool = True,
    fold_real_only: bool = False,
    init_from_local: bool = False,
) -> StackedResult:
    """Out-of-fold candidate generation followed by collective training.

    Every training pair's candidates come from a fold model that never saw
    it. Pairs outside the training data (needed only as neighbors) get
    candidates from the production local model trained on all of ``data``
    when ``background`` is set; otherwise they contribute nothing.
    """
    if len(data) == 0:
        raise ContractError("cannot train on empty parallel data")
    plan = make_fold_plan(len(data), config.folds, config.seed)
    fold_pred: dict[NamePair, frozenset[int]] = {}
    fold_probs: dict[NamePair, np.ndarray] = {}
    fold_training = []
    for f in range(plan.folds):
        train_idx = plan.complement(f)
        if fold_real_only:
            train_idx = [i for i in train_idx if data[i].provenance != "pseudo"]
        fold_training.append(train_idx)
        theta = train_local(graph, data.subset(train_idx), config.replace(seed=plan.seeds[f]))
        pairs = [data[i].pair for i in plan.members(f)]
        cs = generate_candidates(graph, pairs, theta, config.threshold)
        fold_pred.update(cs.predicted)
        fold_probs.update(cs.probs)
        logger.info("fold %d: trained on %d, candidates for %d", f, len(train_idx), len(pairs))
    fold_cands = CandidateSet(fold_pred, fold_probs, data.target_vocab)

    if local is None:
        local = train_local(graph, data, config)
    candidates = fold_cands
    if background:
        others = sorted(graph.all_pairs() - set(fold_pred))
        candidates = generate_candidates(graph, others, local, config.threshold).merged(fold_cands)

    model = new_collective_model(graph.vocab, data.target_vocab, config, local if init_from_local else None)
    pairs = data.pairs
    golds = [ex.gold for ex in data]
    weights = None
    if config.pseudo_weight != 1.0:
        weights = np.array([config.pseudo_weight if ex.provenance == "pseudo" else 1.0 for ex in data])

    def build(rng):
        return [model.slots(graph, p, candidates, rng) for p in pairs]

    model.history = fit(
        model.params,
        build,
        golds,
        config,
        weights=weights,
        log=lambda e, l: logger.debug("collective epoch %d loss %.5f", e, l),
    )
    report = StackReport(plan, pairs, [ex.provenance for ex in data], fold_training, fold_cands)
    return StackedResult(model, local, report, candidates)


def hidden_pairs(pairs, visibility: float, seed: int) -> set[NamePair]:
    """Random subset of pairs whose candidates are withheld from neighbors."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    pairs = sorted(pairs)
    n_hide = int(round((1.0 - visibility) * len(pairs)))
    if n_hide == 0:
        return set()
    idx = np.random.default_rng(seed).choice(len(pairs), size=n_hide, replace=False)
    return {pairs[i] for i in idx}


@dataclass
class Inference:
    final: CandidateSet
    local: CandidateSet


def collective_infer(
    graph: Graph,
    pairs,
    local: LocalModel | None,
    collective: CollectiveModel | None,
    visibility: float = 1.0,
    seed: int = 0,
    candidates: CandidateSet | None = None,
) -> Inference:
    """Candidates from ``local`` over every graph pair, then collective scores for ``pairs``."""
    if local is None or collective is None:
        raise ContractError("collective inference needs both a local and a collective model")
    pairs = sorted(set(pairs))
    if candidates is None:
        universe = sorted(graph.all_pairs() | set(pairs))
        candidates = generate_candidates(graph, universe, local, collective.config.threshold)
    visible = candidates.with_hidden(hidden_pairs(candidates.predicted, visibility, seed))
    probs = collective.score(graph, pairs, visible)
    final = threshold_candidates(pairs, probs, collective.config.threshold, collective.target_vocab)
    return Inference(final, candidates)
