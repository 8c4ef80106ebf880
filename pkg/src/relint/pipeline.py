"""Run configuration, work-directory artifacts and the end-to-end stages.

Every stage reads its inputs from the work directory manifest and writes
artifacts named after a hash of the stage, its configuration and the
checksums of its inputs. A stage whose key is already recorded is skipped,
so interrupted runs resume where they stopped.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import logging
import os
import platform
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .augment import (
    build_pseudo_parallel,
    estimate_source_given_target,
    select_pseudo_data,
    select_random_pseudo,
    synthesize_pseudo_extractions,
    unmatched_pairs,
)
from .collective import CollectiveModel, collective_infer, train_stacked
from .evaluation import PRECISION_TARGETS, MetricsReport, evaluate, write_curve_csv
from .graph import (
    SOURCE,
    TARGET,
    Graph,
    ParallelData,
    RelationVocab,
    build_parallel_data,
    ingest_triples,
    write_triples,
)
from .local import CandidateSet, LocalModel, generate_candidates, train_local
from .neural import ONE_MINUS_P, ContractError, TrainConfig, checkpoint_bytes, load_checkpoint
from .synthgen import BenchConfig, benchmark_config, fig1_scenario, generate

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class MissingInputError(FileNotFoundError):
    """A required input file or upstream artifact does not exist."""


class RunConfigError(ValueError):
    pass


# configuration ----------------------------------------------------------


@dataclass
class RunConfig:
    """Everything a run needs; serialized as an INI file with sections."""

    source: str | None = None
    target: str | None = None
    train_data: str | None = None
    test_data: str | None = None
    work_dir: str = "work"
    seed: int = 0
    max_target_relations: int | None = None
    train: TrainConfig = field(default_factory=lambda: TrainConfig(loss_variant=ONE_MINUS_P))
    augment: bool = False
    selection: str = "retrieval"
    samples_per_triple: int = 1
    fold_real_only: bool = False
    visibility: float = 1.0
    targets: tuple[float, ...] = PRECISION_TARGETS
    roc: bool = False
    scenario: str = "benchmark"
    families: int = 500
    dropout: float = 0.3
    unmatched_fraction: float = 0.0
    train_fraction: float = 0.2

    def validate(self) -> None:
        if self.selection not in ("retrieval", "random"):
            raise RunConfigError(f"selection must be retrieval or random, got {self.selection!r}")
        if self.scenario not in ("benchmark", "fig1"):
            raise RunConfigError(f"scenario must be benchmark or fig1, got {self.scenario!r}")
        if not 0.0 <= self.visibility <= 1.0:
            raise RunConfigError("visibility must lie in [0, 1]")
        if self.samples_per_triple < 1:
            raise RunConfigError("samples_per_triple must be >= 1")
        if not self.targets or not all(0 < p <= 1 for p in self.targets):
            raise RunConfigError("precision targets must lie in (0, 1]")
        for name in ("dropout", "unmatched_fraction", "train_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise RunConfigError(f"{name} must lie in [0, 1]")

    def bench_config(self) -> BenchConfig:
        return benchmark_config(
            seed=self.seed,
            unmatched_fraction=self.unmatched_fraction,
            num_families=self.families,
            context_dropout=self.dropout,
            train_fraction=self.train_fraction,
        )

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "train"}
        d["targets"] = list(self.targets)
        d["train"] = self.train.to_dict()
        return d


# (section, key) -> RunConfig attribute; [train] keys map onto TrainConfig
_LAYOUT = {
    "paths": ("source", "target", "train_data", "test_data", "work_dir"),
    "run": ("seed",),
    "ingest": ("max_target_relations",),
    "augment": ("augment", "selection", "samples_per_triple", "fold_real_only"),
    "infer": ("visibility",),
    "evaluate": ("targets", "roc"),
    "synth": ("scenario", "families", "dropout", "unmatched_fraction", "train_fraction"),
}
_RENAMED = {("augment", "augment"): "enabled"}
_TRAIN_SKIP = ("seed",)


def _ini_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_ini_value(v) for v in value)
    return str(value)


def default_config_text() -> str:
    """INI text holding every default; a starting point for custom runs."""
    cfg = RunConfig()
    parser = configparser.ConfigParser()
    for section, keys in _LAYOUT.items():
        parser[section] = {_RENAMED.get((section, k), k): _ini_value(getattr(cfg, k)) for k in keys}
    parser["train"] = {
        f.name: _ini_value(getattr(cfg.train, f.name)) for f in fields(TrainConfig) if f.name not in _TRAIN_SKIP
    }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _parse(raw: str, like, name: str):
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int) or name in ("max_target_relations",):
            return None if raw == "" and name == "max_target_relations" else int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            items = [s for s in raw.replace(",", " ").split() if s]
            cast = float if name == "targets" else int
            return tuple(cast(s) for s in items)
        if like is None:
            return raw or None
        return raw
    except ValueError as exc:
        raise RunConfigError(f"bad value for {name}: {raw!r}") from exc


def load_run_config(path: str | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the INI file at ``path``, then ``section.key=value`` overrides."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not os.path.exists(path):
            raise MissingInputError(f"config file {path} not found")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise RunConfigError(f"unreadable config: {exc}") from exc
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not parser.has_section(section):
            parser.add_section(section)
        parser[section][key] = value

    cfg = RunConfig()
    known_sections = set(_LAYOUT) | {"train"}
    for section in parser.sections():
        if section not in known_sections:
            raise RunConfigError(f"unknown config section [{section}]")
    values = {}
    for section, keys in _LAYOUT.items():
        if not parser.has_section(section):
            continue
        by_ini = {_RENAMED.get((section, k), k): k for k in keys}
        for ini_key, raw in parser[section].items():
            if ini_key not in by_ini:
                raise RunConfigError(f"unknown key {section}.{ini_key}")
            attr = by_ini[ini_key]
            values[attr] = _parse(raw, getattr(cfg, attr), attr)
    train = cfg.train.to_dict()
    train_fields = {f.name for f in fields(TrainConfig)}
    if parser.has_section("train"):
        for key, raw in parser["train"].items():
            if key not in train_fields or key in _TRAIN_SKIP:
                raise RunConfigError(f"unknown key train.{key}")
            like = tuple(train[key]) if key == "hidden" else train[key]
            train[key] = _parse(raw, like, key)
    train["seed"] = values.get("seed", cfg.seed)
    try:
        values["train"] = TrainConfig.from_dict(train)
        out = RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise RunConfigError(str(exc)) from exc
    out.validate()
    return out


# work directory -----------------------------------------------------------


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def versions() -> dict:
    return {
        "relint": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


class Workspace:
    """Work directory plus its manifest of named, checksummed artifacts."""

    def __init__(self, root: str):
        self.root = root
        path = os.path.join(root, MANIFEST)
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                self.manifest = json.load(fh)
        else:
            self.manifest = {"artifacts": {}}

    def save(self, config: RunConfig | None = None) -> None:
        if config is not None:
            self.manifest["config"] = config.to_dict()
            self.manifest["seed"] = config.seed
        self.manifest["versions"] = versions()
        os.makedirs(self.root, exist_ok=True)
        with open(os.path.join(self.root, MANIFEST), "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, sort_keys=True, indent=1)
            fh.write("\n")

    def has(self, kind: str) -> bool:
        entry = self.manifest["artifacts"].get(kind)
        return entry is not None and os.path.exists(os.path.join(self.root, entry["file"]))

    def path(self, kind: str) -> str:
        if not self.has(kind):
            raise MissingInputError(f"artifact {kind!r} missing from {self.root}; run the producing command first")
        return os.path.join(self.root, self.manifest["artifacts"][kind]["file"])

    def checksum(self, kind: str) -> str:
        self.path(kind)
        return self.manifest["artifacts"][kind]["sha256"]

    def read_bytes(self, kind: str) -> bytes:
        with open(self.path(kind), "rb") as fh:
            return fh.read()

    def read_text(self, kind: str) -> str:
        return self.read_bytes(kind).decode("utf-8")

    @staticmethod
    def key(stage: str, config: dict, inputs: dict[str, str]) -> str:
        blob = json.dumps({"stage": stage, "config": config, "inputs": inputs}, sort_keys=True)
        return sha256_bytes(blob.encode("utf-8"))[:16]

    def fresh(self, kinds, key: str) -> bool:
        """True when every artifact in ``kinds`` exists under ``key``."""
        for kind in kinds:
            entry = self.manifest["artifacts"].get(kind)
            if entry is None or entry.get("key") != key or not self.has(kind):
                return False
            with open(os.path.join(self.root, entry["file"]), "rb") as fh:
                if sha256_bytes(fh.read()) != entry["sha256"]:
                    return False
        return True

    def write(self, kind: str, ext: str, data: bytes, key: str) -> str:
        name = f"{kind}-{key}.{ext}"
        os.makedirs(self.root, exist_ok=True)
        old = self.manifest["artifacts"].get(kind)
        with open(os.path.join(self.root, name), "wb") as fh:
            fh.write(data)
        if old is not None and old["file"] != name:
            stale = os.path.join(self.root, old["file"])
            if os.path.exists(stale):
                os.remove(stale)
        self.manifest["artifacts"][kind] = {"file": name, "sha256": sha256_bytes(data), "key": key}
        return os.path.join(self.root, name)


def _text(writer: Callable) -> bytes:
    buf = io.StringIO()
    writer(buf)
    return buf.getvalue().encode("utf-8")


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode("utf-8")


# model files ----------------------------------------------------------------


def model_bytes(model: LocalModel | CollectiveModel, kind: str) -> bytes:
    header = {
        "kind": kind,
        "config": model.config.to_dict(),
        "source_vocab": model.source_vocab.entries,
        "target_vocab": model.target_vocab.entries,
        "history": [float(h) for h in model.history],
    }
    return checkpoint_bytes(model.params, header)


def load_model(data: bytes, source_vocab: RelationVocab, target_vocab: RelationVocab):
    params, head = load_checkpoint(io.BytesIO(data))
    if head["source_vocab"] != source_vocab.entries or head["target_vocab"] != target_vocab.entries:
        raise ContractError("checkpoint vocabularies do not match the ingested graphs")
    cls = CollectiveModel if head["kind"] == "collective" else LocalModel
    return cls(params, TrainConfig.from_dict(head["config"]), source_vocab, target_vocab, head["history"])


# stages ---------------------------------------------------------------------


def synthesize(config: RunConfig, out_dir: str) -> dict:
    """Write a synthetic benchmark (or the fixed scenario) as input files."""
    inst = fig1_scenario() if config.scenario == "fig1" else generate(config.bench_config())
    return inst.write(out_dir)


def _read_input(path: str | None, what: str) -> str:
    if not path:
        raise MissingInputError(f"no {what} path configured")
    if not os.path.exists(path):
        raise MissingInputError(f"{what} file {path} not found")
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def ingest(config: RunConfig, ws: Workspace) -> None:
    """Canonical graphs, vocabularies and parallel data in the work directory."""
    texts = {"source": _read_input(config.source, "source triples"), "target": _read_input(config.target, "target triples")}
    for name, attr in (("train", "train_data"), ("test", "test_data")):
        path = getattr(config, attr)
        if path:
            texts[name] = _read_input(path, f"{name} data")
    inputs = {k: sha256_bytes(v.encode("utf-8")) for k, v in texts.items()}
    key = ws.key("ingest", {"max_target_relations": config.max_target_relations}, inputs)
    kinds = ["graph-source", "graph-target", "vocab", "train"] + (["test"] if "test" in texts else [])
    if ws.fresh(kinds, key):
        logger.info("ingest: up to date")
        return
    source, s_sum = ingest_triples(io.StringIO(texts["source"]), SOURCE)
    target, t_sum = ingest_triples(io.StringIO(texts["target"]), TARGET, max_relations=config.max_target_relations)
    if "train" in texts:
        train = ParallelData.from_jsonl(io.StringIO(texts["train"]), target.vocab)
    else:
        train = build_parallel_data(source, target)
    vocab = {
        "source": source.vocab.entries,
        "target": target.vocab.entries,
        "source_frequency": dict(sorted(source.vocab.frequency.items())),
        "target_frequency": dict(sorted(target.vocab.frequency.items())),
        "summary": {"source": vars(s_sum), "target": vars(t_sum)},
    }
    ws.write("graph-source", "tsv", _text(lambda fh: write_triples(source, fh)), key)
    ws.write("graph-target", "tsv", _text(lambda fh: write_triples(target, fh)), key)
    ws.write("vocab", "json", _json_bytes(vocab), key)
    ws.write("train", "jsonl", _text(train.to_jsonl), key)
    if "test" in texts:
        test = ParallelData.from_jsonl(io.StringIO(texts["test"]), target.vocab)
        ws.write("test", "jsonl", _text(test.to_jsonl), key)
    logger.info("ingest: %d source, %d target triples, %d training pairs", len(source), len(target), len(train))


@dataclass
class Inputs:
    source: Graph
    target: Graph
    train: ParallelData
    test: ParallelData | None


def load_vocabs(ws: Workspace) -> tuple[RelationVocab, RelationVocab]:
    v = json.loads(ws.read_text("vocab"))
    return RelationVocab(SOURCE, v["source"]), RelationVocab(TARGET, v["target"])


def load_inputs(ws: Workspace, need_test: bool = False) -> Inputs:
    sv, tv = load_vocabs(ws)
    source, _ = ingest_triples(io.StringIO(ws.read_text("graph-source")), SOURCE, vocab=sv)
    target, _ = ingest_triples(io.StringIO(ws.read_text("graph-target")), TARGET, vocab=tv)
    train = ParallelData.from_jsonl(io.StringIO(ws.read_text("train")), tv)
    test = None
    if need_test or ws.has("test"):
        test = ParallelData.from_jsonl(io.StringIO(ws.read_text("test")), tv)
    return Inputs(source, target, train, test)


def _train_inputs(config: RunConfig, ws: Workspace, inp: Inputs) -> tuple[Graph, ParallelData, dict]:
    """Training graph and data, with the selected pseudo data when augmenting."""
    checks = {"train": ws.checksum("train"), "graph-source": ws.checksum("graph-source")}
    if not config.augment:
        return inp.source, inp.train, checks
    checks["pseudo-graph"] = ws.checksum("pseudo-graph")
    checks["pseudo-selected"] = ws.checksum("pseudo-selected")
    selected = ParallelData.from_jsonl(io.StringIO(ws.read_text("pseudo-selected")), inp.target.vocab)
    if len(selected) == 0:
        logger.warning("no pseudo pairs selected; training without augmentation")
        return inp.source, inp.train, checks
    pseudo, _ = ingest_triples(io.StringIO(ws.read_text("pseudo-graph")), SOURCE, vocab=inp.source.vocab)
    return inp.source.union(pseudo), inp.train + selected, checks


def augment_stage(config: RunConfig, ws: Workspace) -> None:
    inp = load_inputs(ws)
    inputs = {k: ws.checksum(k) for k in ("graph-source", "graph-target", "train")}
    settings = {
        "k": config.train.retrieval_k,
        "seed": config.seed,
        "selection": config.selection,
        "samples_per_triple": config.samples_per_triple,
    }
    key = ws.key("augment", settings, inputs)
    if ws.fresh(["translation", "pseudo-graph", "pseudo-selected"], key):
        logger.info("augment: up to date")
        return
    table = estimate_source_given_target(inp.source, inp.target, inp.train)
    pseudo = synthesize_pseudo_extractions(
        inp.target,
        unmatched_pairs(inp.source, inp.target),
        table,
        inp.source.vocab,
        seed=config.seed,
        samples_per_triple=config.samples_per_triple,
    )
    pseudo_data = build_pseudo_parallel(pseudo.graph, inp.target)
    selected = select_pseudo_data(inp.train, pseudo_data, inp.target, config.train.retrieval_k)
    if config.selection == "random":
        selected = select_random_pseudo(pseudo_data, len(selected), config.seed)
    ws.write("translation", "jsonl", _text(lambda fh: table.to_jsonl(fh, inp.source.vocab, inp.target.vocab)), key)
    ws.write("pseudo-graph", "tsv", _text(lambda fh: write_triples(pseudo.graph, fh)), key)
    ws.write("pseudo-selected", "jsonl", _text(selected.to_jsonl), key)
    logger.info(
        "augment: %d pseudo triples (%d skipped), %d pseudo pairs, %d selected (%s)",
        len(pseudo.graph),
        pseudo.skipped,
        len(pseudo_data),
        len(selected),
        config.selection,
    )


def train_local_stage(config: RunConfig, ws: Workspace) -> None:
    inp = load_inputs(ws)
    graph, data, checks = _train_inputs(config, ws, inp)
    if len(data) == 0:
        raise MissingInputError("parallel training data is empty")
    key = ws.key("train-local", config.train.to_dict(), checks)
    if ws.fresh(["local"], key):
        logger.info("train-local: up to date")
        return
    model = train_local(graph, data, config.train)
    ws.write("local", "ckpt", model_bytes(model, "local"), key)
    logger.info("train-local: %d examples, final loss %.5f", len(data), model.history[-1] if model.history else float("nan"))


def _local(ws: Workspace, inp: Inputs) -> LocalModel:
    return load_model(ws.read_bytes("local"), inp.source.vocab, inp.target.vocab)


def candidates_stage(config: RunConfig, ws: Workspace) -> None:
    """Thresholded local predictions for every pair of the source graph."""
    inp = load_inputs(ws)
    key = ws.key("candidates", {"threshold": config.train.threshold}, {"local": ws.checksum("local"), "graph-source": ws.checksum("graph-source")})
    if ws.fresh(["candidates"], key):
        logger.info("candidates: up to date")
        return
    local = _local(ws, inp)
    universe = inp.source.all_pairs() | (set(inp.test.pairs) if inp.test is not None else set())
    cands = generate_candidates(inp.source, universe, local, config.train.threshold)
    ws.write("candidates", "jsonl", _text(lambda fh: cands.to_jsonl(fh, stage="local")), key)
    logger.info("candidates: %d pairs, %d with a candidate", len(cands), sum(1 for v in cands.predicted.values() if v))


def train_collective_stage(config: RunConfig, ws: Workspace) -> None:
    inp = load_inputs(ws)
    graph, data, checks = _train_inputs(config, ws, inp)
    checks["local"] = ws.checksum("local")
    settings = dict(config.train.to_dict(), fold_real_only=config.fold_real_only)
    key = ws.key("train-collective", settings, checks)
    if ws.fresh(["collective", "stack-report"], key):
        logger.info("train-collective: up to date")
        return
    local = _local(ws, inp)
    result = train_stacked(graph, data, config.train, local=local, fold_real_only=config.fold_real_only)
    ws.write("collective", "ckpt", model_bytes(result.collective, "collective"), key)
    ws.write("stack-report", "json", _text(result.report.write), key)
    leaks = result.report.leaks()
    if leaks:
        raise ContractError(f"stacked training leaked {len(leaks)} examples")
    logger.info("train-collective: %d examples over %d folds", len(data), config.train.folds)


def argmax_changes(local: CandidateSet, final: CandidateSet) -> list[tuple]:
    """Pairs whose top-scoring relation differs between the two stages."""
    out = []
    names = final.target_vocab.entries
    for pair in sorted(final.probs):
        a, b = int(np.argmax(local.probs[pair])), int(np.argmax(final.probs[pair]))
        if a != b:
            out.append((pair, names[a], names[b]))
    return out


def infer_stage(config: RunConfig, ws: Workspace) -> None:
    inp = load_inputs(ws, need_test=True)
    checks = {k: ws.checksum(k) for k in ("local", "collective", "candidates", "test", "graph-source")}
    settings = {"visibility": config.visibility, "seed": config.seed}
    key = ws.key("infer", settings, checks)
    if ws.fresh(["predictions"], key):
        logger.info("infer: up to date")
        return
    local = _local(ws, inp)
    collective = load_model(ws.read_bytes("collective"), inp.source.vocab, inp.target.vocab)
    cands = CandidateSet.from_jsonl(io.StringIO(ws.read_text("candidates")), inp.target.vocab)
    pairs = inp.test.pairs
    inf = collective_infer(inp.source, pairs, local, collective, config.visibility, config.seed, candidates=cands)
    local_rows = CandidateSet({p: inf.local.own(p) for p in pairs}, {p: inf.local.probs[p] for p in pairs}, inp.target.vocab)
    flips = argmax_changes(local_rows, inf.final)
    level = logging.INFO if len(flips) <= 20 else logging.DEBUG
    for pair, before, after in flips:
        logger.log(level, "flip %s -> %s: %s -> %s", pair[0], pair[1], before, after)
    logger.info("infer: %d test pairs, %d top-relation changes after the collective stage", len(pairs), len(flips))

    def write(fh):
        local_rows.to_jsonl(fh, stage="local")
        inf.final.to_jsonl(fh, stage="collective")

    ws.write("predictions", "jsonl", _text(write), key)


def read_predictions(text: str, target_vocab: RelationVocab, stage: str | None = None) -> CandidateSet:
    rows = [line for line in text.splitlines() if line.strip()]
    if stage is not None:
        rows = [line for line in rows if json.loads(line).get("stage") == stage]
    return CandidateSet.from_jsonl(io.StringIO("\n".join(rows)), target_vocab)


def evaluate_sets(
    stages: dict[str, CandidateSet], gold: ParallelData, targets, roc: bool = False
) -> dict[str, tuple[MetricsReport, object]]:
    out = {}
    for stage, cands in stages.items():
        report, curve = evaluate(cands.probs, gold, targets, with_roc=roc)
        out[stage] = (report, curve)
    if "local" in stages and "collective" in stages:
        flips = argmax_changes(stages["local"], stages["collective"])
        out["collective"][0].extra["argmax_changes"] = [
            {"subject": p[0], "object": p[1], "local": a, "collective": b} for p, a, b in flips
        ]
    return out


def evaluate_stage(config: RunConfig, ws: Workspace) -> dict[str, MetricsReport]:
    inp = load_inputs(ws, need_test=True)
    checks = {k: ws.checksum(k) for k in ("predictions", "test")}
    key = ws.key("evaluate", {"targets": list(config.targets), "roc": config.roc}, checks)
    text = ws.read_text("predictions")
    stages = {s: read_predictions(text, inp.target.vocab, s) for s in ("local", "collective")}
    results = evaluate_sets(stages, inp.test, config.targets, config.roc)
    reports = {s: r for s, (r, _) in results.items()}
    if not ws.fresh(["metrics", "curve-local", "curve-collective"], key):
        ws.write("metrics", "json", _json_bytes({s: r.to_json() for s, r in reports.items()}), key)
        for s, (_, curve) in results.items():
            ws.write(f"curve-{s}", "csv", _text(lambda fh, c=curve: write_curve_csv(c, fh)), key)
    return reports


STAGES = {
    "ingest": ingest,
    "augment": augment_stage,
    "train-local": train_local_stage,
    "candidates": candidates_stage,
    "train-collective": train_collective_stage,
    "infer": infer_stage,
    "evaluate": evaluate_stage,
}


def run_pipeline(config: RunConfig, synth: bool = True) -> dict[str, MetricsReport]:
    """synth -> ingest -> [augment] -> train-local -> candidates -> train-collective -> infer -> evaluate."""
    ws = Workspace(config.work_dir)
    if synth:
        data_dir = os.path.join(config.work_dir, "input")
        synthesize(config, data_dir)
        config.source = os.path.join(data_dir, "source.tsv")
        config.target = os.path.join(data_dir, "target.tsv")
        config.train_data = os.path.join(data_dir, "train.jsonl")
        config.test_data = os.path.join(data_dir, "test.jsonl")
    order = ["ingest"] + (["augment"] if config.augment else []) + [
        "train-local",
        "candidates",
        "train-collective",
        "infer",
        "evaluate",
    ]
    reports = {}
    for stage in order:
        logger.info("stage %s", stage)
        out = STAGES[stage](config, ws)
        ws.save(config)
        if stage == "evaluate":
            reports = out
    return reports
