"""Triple graphs for open-IE extractions and target KGs.

Both sides are stored the same way: an interned entity table, a relation
vocabulary and a de-duplicated triple set with four adjacency indices.
Entities are interned by their normalized name, so an entity key is
portable across graphs and doubles as the exact-match key used to build
parallel data.
"""

from __future__ import annotations

import io
import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

logger = logging.getLogger(__name__)

SOURCE = "source"
TARGET = "target"

Pair = tuple[int, int]
NamePair = tuple[str, str]

_WS = re.compile(r"\s+")


class GraphError(Exception):
    """Base error for graph construction and lookup."""


class IngestError(GraphError):
    pass


class EmptyGraphError(IngestError):
    pass


def normalize_name(name: str) -> str:
    """Lowercase, trim and collapse internal whitespace."""
    return _WS.sub(" ", name.strip()).lower()


class RelationVocab:
    """Dense id <-> relation string mapping with per-relation frequencies.

    Ids follow first appearance. A vocab can be shared by several graphs
    (the pseudo-extraction graph reuses the source vocab), so ``add`` is
    allowed until ``freeze`` is called.
    """

    def __init__(self, side: str, entries: Iterable[str] = (), frequency: dict[str, int] | None = None):
        if side not in (SOURCE, TARGET):
            raise ValueError(f"unknown vocab side {side!r}")
        self.side = side
        self.entries: list[str] = []
        self._index: dict[str, int] = {}
        self.frequency: Counter[str] = Counter(frequency or {})
        self.frozen = False
        for e in entries:
            if e in self._index:
                raise ValueError(f"duplicate relation {e!r} in vocab")
            self.add(e)

    def add(self, relation: str) -> int:
        rid = self._index.get(relation)
        if rid is None:
            if self.frozen:
                raise GraphError(f"relation {relation!r} not in frozen {self.side} vocab")
            rid = len(self.entries)
            self.entries.append(relation)
            self._index[relation] = rid
        return rid

    def freeze(self) -> "RelationVocab":
        self.frozen = True
        return self

    def id(self, relation: str) -> int:
        try:
            return self._index[relation]
        except KeyError:
            raise KeyError(f"unknown {self.side} relation {relation!r}") from None

    def get(self, relation: str, default=None):
        return self._index.get(relation, default)

    def __contains__(self, relation: str) -> bool:
        return relation in self._index

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, rid: int) -> str:
        return self.entries[rid]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RelationVocab)
            and self.side == other.side
            and self.entries == other.entries
        )

    def __repr__(self) -> str:
        return f"RelationVocab({self.side}, n={len(self)})"


@dataclass(frozen=True)
class NeighborContext:
    """Relation sets around an ordered entity pair (s, o).

    ``middle`` holds relations from s to o, ``subject_side`` relations from s
    to any entity other than o, ``object_side`` relations into o from any
    entity other than s.
    """

    middle: frozenset[int] = frozenset()
    subject_side: frozenset[int] = frozenset()
    object_side: frozenset[int] = frozenset()


class Graph:
    """Immutable multi-relational graph with adjacency indices."""

    def __init__(self, vocab: RelationVocab, triples: Iterable[tuple[str, str, str]] = ()):
        self.vocab = vocab
        self.entities: list[str] = []
        self.display_names: list[str] = []
        self._entity_index: dict[str, int] = {}
        self.triples: set[tuple[int, int, int]] = set()
        self.by_pair: dict[Pair, set[int]] = defaultdict(set)
        self.by_subject: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.by_object: dict[int, list[tuple[int, int]]] = defaultdict(list)
        self.by_relation: dict[int, set[Pair]] = defaultdict(set)
        self.duplicates = 0
        for s, r, o in triples:
            self._add(s, r, o)

    # construction -------------------------------------------------------

    def _intern(self, name: str) -> int:
        key = normalize_name(name)
        eid = self._entity_index.get(key)
        if eid is None:
            eid = len(self.entities)
            self.entities.append(key)
            self.display_names.append(name.strip())
            self._entity_index[key] = eid
        return eid

    def _add(self, subject: str, relation: str, obj: str) -> bool:
        rid = self.vocab.add(relation)
        s, o = self._intern(subject), self._intern(obj)
        t = (s, rid, o)
        if t in self.triples:
            self.duplicates += 1
            return False
        self.triples.add(t)
        self.by_pair[(s, o)].add(rid)
        self.by_subject[s].append((rid, o))
        self.by_object[o].append((rid, s))
        self.by_relation[rid].add((s, o))
        return True

    def union(self, other: "Graph") -> "Graph":
        """New graph holding the triples of both; vocabs must be shared."""
        if other.vocab is not self.vocab:
            raise GraphError("union requires graphs built over the same vocab object")
        merged = Graph(self.vocab, self.named_triples())
        for t in other.named_triples():
            merged._add(*t)
        return merged

    # lookups ------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.triples)

    def entity_id(self, name: str) -> int | None:
        return self._entity_index.get(normalize_name(name))

    def pair_ids(self, pair: NamePair) -> Pair | None:
        s, o = self.entity_id(pair[0]), self.entity_id(pair[1])
        if s is None or o is None:
            return None
        return s, o

    def pair_names(self, pair: Pair) -> NamePair:
        return self.entities[pair[0]], self.entities[pair[1]]

    def named_triples(self) -> list[tuple[str, str, str]]:
        """Triples as (subject key, relation, object key), sorted."""
        return sorted((self.entities[s], self.vocab[r], self.entities[o]) for s, r, o in self.triples)

    def relations_between(self, pair: NamePair) -> frozenset[int]:
        ids = self.pair_ids(pair)
        if ids is None:
            return frozenset()
        return frozenset(self.by_pair.get(ids, ()))

    def neighbor_context(self, pair: NamePair) -> NeighborContext:
        # an entity absent from the graph gets id -1, which matches nothing
        s, o = (self.entity_id(e) for e in pair)
        s = -1 if s is None else s
        o = -1 if o is None else o
        middle = self.by_pair.get((s, o), ())
        subj = {r for r, x in self.by_subject.get(s, ()) if x != o}
        obj = {r for r, x in self.by_object.get(o, ()) if x != s}
        return NeighborContext(frozenset(middle), frozenset(subj), frozenset(obj))

    def pairs_with_relation(self, relation: int | str) -> set[NamePair]:
        rid = self.vocab.id(relation) if isinstance(relation, str) else relation
        if not 0 <= rid < len(self.vocab):
            raise KeyError(f"relation id {rid} outside {self.side_name} vocab")
        return {self.pair_names(p) for p in self.by_relation.get(rid, ())}

    def all_pairs(self) -> set[NamePair]:
        return {self.pair_names(p) for p in self.by_pair}

    @property
    def side_name(self) -> str:
        return self.vocab.side

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Graph)
            and self.vocab == other.vocab
            and self.named_triples() == other.named_triples()
        )

    def __repr__(self) -> str:
        return f"Graph({self.side_name}, entities={len(self.entities)}, triples={len(self)})"


@dataclass
class IngestSummary:
    rows: int = 0
    stored: int = 0
    malformed: int = 0
    duplicates: int = 0
    truncated: int = 0
    malformed_lines: list[int] = field(default_factory=list)


def _iter_rows(stream: TextIO | Iterable[str]) -> Iterator[tuple[int, str]]:
    try:
        for lineno, line in enumerate(stream, 1):
            yield lineno, line
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read triple stream: {exc}") from exc


def ingest_triples(
    stream: TextIO | Iterable[str],
    side: str,
    max_relations: int | None = None,
    vocab: RelationVocab | None = None,
) -> tuple[Graph, IngestSummary]:
    """Parse ``subject<TAB>relation<TAB>object`` rows into a Graph.

    Lines starting with ``#`` and blank lines are skipped. A row that does
    not split into exactly three non-empty fields is counted as malformed.
    ``max_relations`` keeps only the most frequent relations (ties by first
    appearance); triples of dropped relations are counted as truncated.
    """
    summary = IngestSummary()
    rows: list[tuple[str, str, str]] = []
    for lineno, line in _iter_rows(stream):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        summary.rows += 1
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            summary.malformed += 1
            summary.malformed_lines.append(lineno)
            continue
        rows.append((parts[0], parts[1].strip(), parts[2]))

    if not rows:
        raise EmptyGraphError("no valid triples in input")

    freq = Counter(r for _, r, _ in rows)
    if max_relations is not None and len(freq) > max_relations:
        first_seen = {r: i for i, r in reversed(list(enumerate(r for _, r, _ in rows)))}
        keep = set(sorted(freq, key=lambda r: (-freq[r], first_seen[r]))[:max_relations])
        kept = [t for t in rows if t[1] in keep]
        summary.truncated = len(rows) - len(kept)
        rows = kept

    if vocab is None:
        vocab = RelationVocab(side)
    graph = Graph(vocab, rows)
    for r, n in Counter(r for _, r, _ in rows).items():
        vocab.frequency[r] += n
    summary.stored = len(graph)
    summary.duplicates = graph.duplicates
    if summary.malformed:
        logger.warning("%d malformed %s rows skipped", summary.malformed, side)
    return graph, summary


def read_triples(path, side: str, max_relations: int | None = None, vocab: RelationVocab | None = None):
    try:
        with open(path, encoding="utf-8") as fh:
            return ingest_triples(fh, side, max_relations=max_relations, vocab=vocab)
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}") from exc


def write_triples(graph: Graph, fh: TextIO) -> None:
    for s, r, o in graph.named_triples():
        fh.write(f"{s}\t{r}\t{o}\n")


def triples_text(triples: Iterable[tuple[str, str, str]]) -> io.StringIO:
    """In-memory triple stream, handy for building small graphs."""
    return io.StringIO("".join(f"{s}\t{r}\t{o}\n" for s, r, o in triples))


def graph_from_triples(triples: Iterable[tuple[str, str, str]], side: str, vocab: RelationVocab | None = None) -> Graph:
    return ingest_triples(triples_text(triples), side, vocab=vocab)[0]


# parallel data ----------------------------------------------------------

MATCHED = "matched"
PSEUDO = "pseudo"


@dataclass(frozen=True)
class Example:
    pair: NamePair
    gold: frozenset[int]
    provenance: str = MATCHED


class ParallelData:
    """Entity pairs labeled with their target-relation sets."""

    def __init__(self, examples: Iterable[Example], target_vocab: RelationVocab):
        self.target_vocab = target_vocab
        self.examples: list[Example] = []
        seen: set[NamePair] = set()
        for ex in examples:
            if not ex.gold:
                raise ValueError(f"empty gold set for {ex.pair}")
            if ex.pair in seen:
                raise ValueError(f"duplicate pair {ex.pair}")
            seen.add(ex.pair)
            self.examples.append(ex)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def __getitem__(self, i) -> Example:
        return self.examples[i]

    @property
    def pairs(self) -> list[NamePair]:
        return [ex.pair for ex in self.examples]

    def gold_of(self) -> dict[NamePair, frozenset[int]]:
        return {ex.pair: ex.gold for ex in self.examples}

    def subset(self, indices: Iterable[int]) -> "ParallelData":
        return ParallelData((self.examples[i] for i in indices), self.target_vocab)

    def __add__(self, other: "ParallelData") -> "ParallelData":
        if other.target_vocab != self.target_vocab:
            raise ValueError("cannot combine parallel data over different target vocabs")
        return ParallelData(self.examples + other.examples, self.target_vocab)

    def to_jsonl(self, fh: TextIO) -> None:
        for ex in self.examples:
            row = {
                "subject": ex.pair[0],
                "object": ex.pair[1],
                "gold": [self.target_vocab[r] for r in sorted(ex.gold)],
                "provenance": ex.provenance,
            }
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, fh: TextIO, target_vocab: RelationVocab) -> "ParallelData":
        examples = []
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            gold = frozenset(target_vocab.id(g) for g in row["gold"] if g in target_vocab)
            if not gold:
                continue
            examples.append(
                Example(
                    (normalize_name(row["subject"]), normalize_name(row["object"])),
                    gold,
                    row.get("provenance", MATCHED),
                )
            )
        return cls(examples, target_vocab)


def build_parallel_data(source: Graph, target: Graph, provenance: str = MATCHED) -> ParallelData:
    """Pairs present in both graphs, labeled with the target relations between them."""
    common = source.all_pairs() & target.all_pairs()
    examples = []
    for pair in sorted(common):
        gold = target.relations_between(pair)
        if gold:
            examples.append(Example(pair, gold, provenance))
    if not examples:
        logger.warning("no entity pairs shared between %r and %r", source, target)
    return ParallelData(examples, target.vocab)
