"""Seeded synthetic source/target graph pairs with known coherence structure.

Families: every child has exactly one father and one mother; the parents
are married. Extractions surface ``father``/``mother`` mostly as the
ambiguous "parent". The only thing telling a parent's gender apart is the
spouse edge pointing *into* that parent ("wife of" into the father,
"husband of" into the mother). Context dropout removes that: every edge
into a dropped parent uses an ambiguous surface form.

So a child-parent pair is locally resolvable iff that parent kept its
context, and collectively resolvable if the *other* parent did.

Regions (contains / containedby) form a distractor domain that lives
mostly in the target KG only.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import (
    MATCHED,
    SOURCE,
    TARGET,
    Example,
    Graph,
    NamePair,
    ParallelData,
    build_parallel_data,
    graph_from_triples,
    write_triples,
)

FATHER, MOTHER, HUSBAND, WIFE = "father", "mother", "husband", "wife"
CONTAINS, CONTAINEDBY = "contains", "containedby"

DEFAULT_AMBIGUITY = {
    FATHER: {"parent": 0.95, "father": 0.05},
    MOTHER: {"parent": 0.95, "mother": 0.05},
    HUSBAND: {"husband of": 0.7, "married to": 0.3},
    WIFE: {"wife of": 0.7, "married to": 0.3},
    CONTAINS: {"includes": 1.0},
    CONTAINEDBY: {"is in": 1.0},
}

UNMATCHED_SUFFIX = "~kg"


class ConfigError(ValueError):
    pass


@dataclass
class BenchConfig:
    seed: int = 7
    num_families: int = 500
    context_dropout: float = 0.3
    # target relation -> {source surface form: weight}
    ambiguity_map: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_AMBIGUITY.items()})
    unmatched_fraction: float = 0.0
    train_fraction: float = 0.2
    min_children: int = 1
    max_children: int = 3
    num_regions: int = 0
    min_places: int = 2
    max_places: int = 4
    region_extracted_fraction: float = 0.1

    def validate(self) -> None:
        if self.num_families < 1:
            raise ConfigError("num_families must be >= 1")
        for name in ("context_dropout", "unmatched_fraction", "train_fraction", "region_extracted_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 1 <= self.min_children <= self.max_children:
            raise ConfigError("need 1 <= min_children <= max_children")
        if not 1 <= self.min_places <= self.max_places:
            raise ConfigError("need 1 <= min_places <= max_places")
        needed = {FATHER, MOTHER, HUSBAND, WIFE} | ({CONTAINS, CONTAINEDBY} if self.num_regions else set())
        missing = needed - set(self.ambiguity_map)
        if missing:
            raise ConfigError(f"ambiguity map lacks target relations {sorted(missing)}")
        for rel, forms in self.ambiguity_map.items():
            if not forms or any(w < 0 for w in forms.values()) or sum(forms.values()) <= 0:
                raise ConfigError(f"ambiguity map entry {rel!r} needs positive weights")

    def ambiguous_forms(self) -> set[str]:
        """Surface forms emitted by more than one target relation."""
        owners: dict[str, set[str]] = {}
        for rel, forms in self.ambiguity_map.items():
            for f, w in forms.items():
                if w > 0:
                    owners.setdefault(f, set()).add(rel)
        return {f for f, rels in owners.items() if len(rels) > 1}


@dataclass
class Family:
    father: str
    mother: str
    children: list[str]
    father_dropped: bool
    mother_dropped: bool
    matched: bool = True


@dataclass
class BenchInstance:
    source: Graph
    target: Graph
    train: ParallelData
    test: ParallelData
    unmatched_pairs: list[NamePair]
    families: list[Family]
    manifest: dict

    def write(self, out_dir) -> dict:
        """Emit TSV/JSONL artifacts plus a manifest with their checksums."""
        os.makedirs(out_dir, exist_ok=True)
        files = {}
        for name, writer in (
            ("source.tsv", lambda fh: write_triples(self.source, fh)),
            ("target.tsv", lambda fh: write_triples(self.target, fh)),
            ("train.jsonl", self.train.to_jsonl),
            ("test.jsonl", self.test.to_jsonl),
        ):
            buf = io.StringIO()
            writer(buf)
            data = buf.getvalue().encode("utf-8")
            with open(os.path.join(out_dir, name), "wb") as fh:
                fh.write(data)
            files[name] = hashlib.sha256(data).hexdigest()
        manifest = dict(self.manifest)
        manifest["checksums"] = files
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)
            fh.write("\n")
        return manifest


def _draw(rng: np.random.Generator, forms: dict[str, float]) -> str:
    names = sorted(forms)
    w = np.array([forms[n] for n in names], dtype=np.float64)
    return names[int(rng.choice(len(names), p=w / w.sum()))]


class _Emitter:
    def __init__(self, cfg: BenchConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.ambiguous = cfg.ambiguous_forms()

    def surface(self, rel: str, into_dropped: bool, disambiguating: bool) -> str:
        forms = self.cfg.ambiguity_map[rel]
        if into_dropped:
            sub = {f: w for f, w in forms.items() if f in self.ambiguous and w > 0}
        elif disambiguating:
            sub = {f: w for f, w in forms.items() if f not in self.ambiguous and w > 0}
        else:
            sub = forms
        return _draw(self.rng, sub or forms)


def _family_triples(fam: Family, emit: _Emitter):
    src, tgt = [], []
    for c in fam.children:
        tgt += [(c, FATHER, fam.father), (c, MOTHER, fam.mother)]
        src.append((c, emit.surface(FATHER, fam.father_dropped, False), fam.father))
        src.append((c, emit.surface(MOTHER, fam.mother_dropped, False), fam.mother))
    tgt += [(fam.father, HUSBAND, fam.mother), (fam.mother, WIFE, fam.father)]
    src.append((fam.father, emit.surface(HUSBAND, fam.mother_dropped, True), fam.mother))
    src.append((fam.mother, emit.surface(WIFE, fam.father_dropped, True), fam.father))
    return src, tgt


def _perturb(triples):
    return [(s + UNMATCHED_SUFFIX, r, o + UNMATCHED_SUFFIX) for s, r, o in triples]


def _split(data: ParallelData, train_fraction: float, seed: int) -> tuple[ParallelData, ParallelData]:
    n = len(data)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = sorted(int(i) for i in order[:n_train])
    test_idx = sorted(int(i) for i in order[n_train:])
    return data.subset(train_idx), data.subset(test_idx)


def generate(config: BenchConfig) -> BenchInstance:
    """Families (plus optional distractor regions) rendered as two graphs."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    emit = _Emitter(config, rng)
    src, tgt = [], []
    families = []
    n = 0

    def name():
        nonlocal n
        n += 1
        return f"e{n:06d}"

    for _ in range(config.num_families):
        k = int(rng.integers(config.min_children, config.max_children + 1))
        fam = Family(
            father=name(),
            mother=name(),
            children=[name() for _ in range(k)],
            father_dropped=bool(rng.random() < config.context_dropout),
            mother_dropped=bool(rng.random() < config.context_dropout),
            matched=bool(rng.random() >= config.unmatched_fraction),
        )
        s, t = _family_triples(fam, emit)
        src += s
        tgt += t if fam.matched else _perturb(t)
        families.append(fam)

    regions = []
    for _ in range(config.num_regions):
        region = name()
        places = [name() for _ in range(int(rng.integers(config.min_places, config.max_places + 1)))]
        extracted = bool(rng.random() < config.region_extracted_fraction)
        for p in places:
            tgt += [(region, CONTAINS, p), (p, CONTAINEDBY, region)]
            if extracted:
                src.append((region, emit.surface(CONTAINS, False, False), p))
                src.append((p, emit.surface(CONTAINEDBY, False, False), region))
        regions.append({"region": region, "places": places, "extracted": extracted})

    source = graph_from_triples(src, SOURCE)
    target = graph_from_triples(tgt, TARGET)
    parallel = build_parallel_data(source, target)
    train, test = _split(parallel, config.train_fraction, config.seed)
    matched = source.all_pairs()
    unmatched = sorted(target.all_pairs() - matched)
    manifest = {
        "generator": "families",
        "config": asdict(config),
        "counts": {
            "source_triples": len(source),
            "target_triples": len(target),
            "parallel": len(parallel),
            "train": len(train),
            "test": len(test),
            "unmatched_pairs": len(unmatched),
        },
        "families": [asdict(f) for f in families],
        "regions": regions,
    }
    return BenchInstance(source, target, train, test, unmatched, families, manifest)


def audit(instance: BenchInstance) -> list[str]:
    """Structural violations in the target KG; empty means every family is well formed."""
    problems = []
    tgt = instance.target
    fid, mid = tgt.vocab.get(FATHER), tgt.vocab.get(MOTHER)
    hid, wid = tgt.vocab.get(HUSBAND), tgt.vocab.get(WIFE)
    for fam in instance.families:
        suffix = "" if fam.matched else UNMATCHED_SUFFIX
        f, m = fam.father + suffix, fam.mother + suffix
        for c in fam.children:
            c = c + suffix
            cid = tgt.entity_id(c)
            out = tgt.by_subject.get(cid, []) if cid is not None else []
            fathers = [o for r, o in out if r == fid]
            mothers = [o for r, o in out if r == mid]
            if len(fathers) != 1 or len(mothers) != 1:
                problems.append(f"{c}: {len(fathers)} fathers, {len(mothers)} mothers")
                continue
            if tgt.entities[fathers[0]] != f or tgt.entities[mothers[0]] != m:
                problems.append(f"{c}: parents do not match family record")
        # gender consistency: the father is a husband, the mother a wife
        if hid not in tgt.relations_between((f, m)):
            problems.append(f"{f}: father is not husband of {m}")
        if wid not in tgt.relations_between((m, f)):
            problems.append(f"{m}: mother is not wife of {f}")
        fid_e, mid_e = tgt.entity_id(f), tgt.entity_id(m)
        if any(r == wid for r, _ in tgt.by_subject.get(fid_e, [])):
            problems.append(f"{f}: father recorded as a wife")
        if any(r == hid for r, _ in tgt.by_subject.get(mid_e, [])):
            problems.append(f"{m}: mother recorded as a husband")
    return problems


# figure-1 scenario --------------------------------------------------------

SPARSE_MOTHER = "sparse-mother"
SPARSE_FATHER = "sparse-father"
FULL = "full"


def _scenario_family(child: str, sibling: str, father: str, mother: str, kind: str):
    """Child with two "parent" edges; the sibling names one parent unambiguously.

    ``full``: the sibling names both parents. ``sparse-mother``: the sibling
    names only the father, leaving the mother pair without context.
    """
    src = [(child, "parent", father), (child, "parent", mother)]
    if kind in (FULL, SPARSE_MOTHER):
        src.append((sibling, "father", father))
    if kind in (FULL, SPARSE_FATHER):
        src.append((sibling, "mother", mother))
    tgt = [
        (child, FATHER, father),
        (child, MOTHER, mother),
        (sibling, FATHER, father),
        (sibling, MOTHER, mother),
        (father, HUSBAND, mother),
        (mother, WIFE, father),
    ]
    return src, tgt


FIG1_TRAINING = [FULL] * 10 + [SPARSE_FATHER] * 14 + [SPARSE_MOTHER] * 8


def fig1_scenario() -> BenchInstance:
    """Fixed instance mirroring the Malia / Nell-Marie example.

    Training families have context for at least one parent and are biased
    so that a context-free "parent" pair looks like a father. The test family
    (Nell, Burton, Marie, Billy) leaves Nell-Marie without context while
    Billy's "father" edge makes Nell-Burton easy.
    """
    src, tgt = [], []
    kinds = [FULL] + FIG1_TRAINING
    families = []
    for i, kind in enumerate(kinds):
        if i == 0:
            names = ("malia", "sasha", "barack", "michelle")
        else:
            names = (f"child{i:02d}", f"sibling{i:02d}", f"father{i:02d}", f"mother{i:02d}")
        s, t = _scenario_family(*names, kind)
        src += s
        tgt += t
        families.append(
            Family(names[2], names[3], list(names[:2]), kind == SPARSE_FATHER, kind == SPARSE_MOTHER)
        )
    s, t = _scenario_family("nell", "billy", "burton", "marie", SPARSE_MOTHER)
    src += s
    tgt += t
    families.append(Family("burton", "marie", ["nell", "billy"], False, True))

    source = graph_from_triples(src, SOURCE)
    target = graph_from_triples(tgt, TARGET)
    parallel = build_parallel_data(source, target)
    test_entities = {"nell", "billy", "burton", "marie"}
    train = ParallelData([ex for ex in parallel if ex.pair[0] not in test_entities], target.vocab)
    test = ParallelData([ex for ex in parallel if ex.pair[0] in test_entities], target.vocab)
    unmatched = sorted(target.all_pairs() - source.all_pairs())
    manifest = {
        "generator": "fig1",
        "training_kinds": kinds,
        "counts": {"train": len(train), "test": len(test)},
        "families": [asdict(f) for f in families],
    }
    return BenchInstance(source, target, train, test, unmatched, families, manifest)


SPARSE_PAIR = ("nell", "marie")
EASY_PAIR = ("nell", "burton")


def benchmark_config(seed: int = 7, unmatched_fraction: float = 0.0, **kw) -> BenchConfig:
    """The coherence benchmark: 500 families, dropout 0.3, 20/80 split."""
    opts = dict(
        seed=seed,
        num_families=500,
        context_dropout=0.3,
        unmatched_fraction=unmatched_fraction,
        train_fraction=0.2,
        min_children=2,
        max_children=4,
        num_regions=100,
    )
    opts.update(kw)
    return BenchConfig(**opts)


__all__ = [
    "BenchConfig",
    "BenchInstance",
    "ConfigError",
    "Example",
    "Family",
    "MATCHED",
    "audit",
    "benchmark_config",
    "fig1_scenario",
    "generate",
]
