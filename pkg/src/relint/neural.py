"""Fixed-architecture relation scorer with hand-written gradients.

A model maps an entity pair to ``arity`` sets of embedding-row ids. Each set
is averaged into one ``dim`` vector, the vectors are concatenated and fed to
a ReLU MLP whose sigmoid outputs score every target relation.

Set-averaging is expressed as a sparse (batch, rows) matrix per slot, so the
embedding gradient is just ``M.T @ d_slot``.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
import scipy.sparse as sp

VERBATIM = "verbatim"
ONE_MINUS_P = "one-minus-p"

CHECKPOINT_MAGIC = b"RELINTCK"
CHECKPOINT_VERSION = 1


class ContractError(ValueError):
    """Shape or argument mismatch between a model and its inputs."""


class NonFiniteError(FloatingPointError):
    """Raised when a gradient or loss is NaN/inf."""


@dataclass
class TrainConfig:
    dim: int = 32
    hidden: tuple[int, ...] = (128,)
    gamma: float = 10.0
    max_neighbors: int = 30
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    loss_variant: str = VERBATIM
    prob_floor: float = 1e-7
    threshold: float = 0.5
    folds: int = 5
    retrieval_k: int = 5
    lr: float = 0.01
    eps: float = 1e-8
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    use_middle: bool = True
    use_neighbor: bool = True
    pseudo_weight: float = 1.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.loss_variant not in (VERBATIM, ONE_MINUS_P):
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        if self.dim < 1 or self.epochs < 0 or self.batch_size < 1 or self.max_neighbors < 1:
            raise ValueError("dim, batch_size and max_neighbors must be positive, epochs >= 0")
        if not 0 < self.prob_floor < 0.5:
            raise ValueError("prob_floor must lie in (0, 0.5)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def replace(self, **kw) -> "TrainConfig":
        d = self.to_dict()
        d.update(kw)
        return TrainConfig.from_dict(d)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


@dataclass
class ModelParams:
    """Embedding table plus MLP weights.

    ``n_source`` rows come first in the table; a collective model appends
    ``n_target`` rows for candidate target relations.
    """

    embed: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    arity: int
    n_source: int
    n_target: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = self.embed.shape[1]
        if self.weights[0].shape[0] != self.arity * dim:
            raise ContractError(
                f"MLP input width {self.weights[0].shape[0]} != arity {self.arity} x dim {dim}"
            )
        for w, w_next in zip(self.weights, self.weights[1:]):
            if w.shape[1] != w_next.shape[0]:
                raise ContractError("adjacent MLP layer shapes do not compose")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise ContractError("bias shape does not match layer width")
        if self.embed.shape[0] != self.n_source + self.n_target:
            raise ContractError("embedding rows must equal n_source + n_target")

    @property
    def dim(self) -> int:
        return self.embed.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_rows(self) -> int:
        return self.embed.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"embed": self.embed}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.embed.copy(),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.arity,
            self.n_source,
            self.n_target,
            dict(self.meta),
        )

    @classmethod
    def init(
        cls,
        n_source: int,
        n_out: int,
        arity: int,
        dim: int = 32,
        hidden: Sequence[int] = (128,),
        n_target: int = 0,
        seed: int = 0,
    ) -> "ModelParams":
        rng = np.random.default_rng(seed)
        n_rows = n_source + n_target
        embed = glorot(rng, n_rows, dim, (n_rows, dim))
        widths = [arity * dim, *hidden, n_out]
        weights = [glorot(rng, a, b, (a, b)) for a, b in zip(widths, widths[1:])]
        biases = [np.zeros(b) for b in widths[1:]]
        return cls(embed, weights, biases, arity, n_source, n_target)

    def zeros_like(self) -> "ModelParams":
        return ModelParams(
            np.zeros_like(self.embed),
            [np.zeros_like(w) for w in self.weights],
            [np.zeros_like(b) for b in self.biases],
            self.arity,
            self.n_source,
            self.n_target,
        )


# forward ----------------------------------------------------------------


def average_embed(ids, table: np.ndarray) -> np.ndarray:
    """Mean of the table rows in ``ids``; the empty set maps to zeros."""
    ids = list(ids)
    if not ids:
        return np.zeros(table.shape[1])
    for i in ids:
        if not 0 <= i < table.shape[0]:
            raise IndexError(f"embedding row {i} out of range")
    return table[ids].mean(axis=0)


def slot_matrices(batch: Sequence[Sequence[Sequence[int]]], n_rows: int, arity: int) -> list[sp.csr_matrix]:
    """One averaging matrix per slot for a batch of per-example slot sets."""
    mats = []
    for k in range(arity):
        rows, cols, vals = [], [], []
        for i, slots in enumerate(batch):
            ids = slots[k]
            if ids:
                w = 1.0 / len(ids)
                for j in ids:
                    if not 0 <= j < n_rows:
                        raise IndexError(f"embedding row {j} out of range")
                    rows.append(i)
                    cols.append(j)
                    vals.append(w)
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(len(batch), n_rows)))
    return mats


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def mlp_forward(params: ModelParams, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[0]:
        raise ContractError(f"feature width {x.shape[-1]} != expected {params.weights[0].shape[0]}")
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w + b
        h = a if i == last else np.maximum(a, 0.0)
        acts.append(h)
    return acts[-1], acts


def forward(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Relation probabilities for one feature vector or a (B, F) matrix."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    z, _ = mlp_forward(params, x[None, :] if single else x)
    p = sigmoid(z)
    return p[0] if single else p


def embed_batch(params: ModelParams, batch) -> tuple[np.ndarray, list[sp.csr_matrix]]:
    mats = slot_matrices(batch, params.n_rows, params.arity)
    x = np.hstack([m @ params.embed for m in mats])
    return x, mats


def predict(params: ModelParams, batch) -> np.ndarray:
    if not batch:
        return np.zeros((0, params.n_out))
    x, _ = embed_batch(params, batch)
    return forward(params, x)


# loss -------------------------------------------------------------------


def _gold_mask(golds, n_out: int) -> np.ndarray:
    mask = np.zeros((len(golds), n_out), dtype=bool)
    for i, g in enumerate(golds):
        for r in g:
            if not 0 <= r < n_out:
                raise ContractError(f"gold relation {r} outside output width {n_out}")
            mask[i, r] = True
    return mask


def _loss_terms(probs, mask, gamma, variant, floor):
    """Per-example loss and dL/dz for the sigmoid logits."""
    npos = mask.sum(axis=1)
    if np.any(npos == 0):
        raise ContractError("gold sets must be non-empty")
    nneg = mask.shape[1] - npos
    wpos = 1.0 / npos
    wneg = np.where(nneg > 0, gamma / np.maximum(nneg, 1), 0.0)
    pc = np.clip(probs, floor, 1.0 - floor)
    inside = (probs > floor) & (probs < 1.0 - floor)
    pos_term = np.where(mask, np.log(pc), 0.0).sum(axis=1) * wpos
    # d log(p)/dz = 1 - p ; d log(1 - p)/dz = -p ; zero where clamped
    dpos = np.where(mask & inside, -(1.0 - probs), 0.0) * wpos[:, None]
    if variant == VERBATIM:
        neg_term = np.where(~mask, np.log(pc), 0.0).sum(axis=1) * wneg
        loss = -pos_term + neg_term
        dneg = np.where(~mask & inside, 1.0 - probs, 0.0) * wneg[:, None]
    elif variant == ONE_MINUS_P:
        neg_term = np.where(~mask, np.log(1.0 - pc), 0.0).sum(axis=1) * wneg
        loss = -pos_term - neg_term
        dneg = np.where(~mask & inside, probs, 0.0) * wneg[:, None]
    else:
        raise ValueError(f"unknown loss variant {variant!r}")
    return loss, dpos + dneg


def pair_loss(probs, gold, gamma: float = 10.0, variant: str = VERBATIM, floor: float = 1e-7) -> float:
    """Loss of one example given its probability vector over target relations."""
    probs = np.asarray(probs, dtype=np.float64)
    mask = _gold_mask([gold], probs.shape[0])
    loss, _ = _loss_terms(probs[None, :], mask, gamma, variant, floor)
    return float(loss[0])


# backward ---------------------------------------------------------------


def loss_and_grads(
    params: ModelParams,
    batch,
    golds,
    gamma: float = 10.0,
    variant: str = VERBATIM,
    floor: float = 1e-7,
    weights: np.ndarray | None = None,
    reduction: str = "sum",
) -> tuple[float, ModelParams]:
    """Summed (or batch-averaged) loss and its exact gradient.

    ``weights`` scales each example's loss (used to down-weight pseudo data).
    """
    if len(batch) != len(golds):
        raise ContractError("batch and gold lists differ in length")
    x, mats = embed_batch(params, batch)
    z, acts = mlp_forward(params, x)
    probs = sigmoid(z)
    mask = _gold_mask(golds, params.n_out)
    loss, dz = _loss_terms(probs, mask, gamma, variant, floor)
    if weights is not None:
        loss = loss * weights
        dz = dz * weights[:, None]
    total = float(loss.sum())
    if reduction == "mean":
        total /= len(batch)
        dz = dz / len(batch)
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")

    grads = params.zeros_like()
    delta = dz
    for i in range(len(params.weights) - 1, -1, -1):
        h_in = acts[i]
        grads.weights[i] = h_in.T @ delta
        grads.biases[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
        if i > 0:
            delta = delta * (acts[i] > 0)
    dim = params.dim
    d_embed = np.zeros_like(params.embed)
    for k, m in enumerate(mats):
        d_embed += m.T @ delta[:, k * dim:(k + 1) * dim]
    grads.embed = d_embed
    return total, grads


def backward(params: ModelParams, batch, golds, config: TrainConfig | None = None, **kw) -> ModelParams:
    """Gradient of the summed loss over ``batch``."""
    cfg = config or TrainConfig()
    opts = dict(gamma=cfg.gamma, variant=cfg.loss_variant, floor=cfg.prob_floor)
    opts.update(kw)
    return loss_and_grads(params, batch, golds, **opts)[1]


# optimizer --------------------------------------------------------------


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamWState":
        arrs = params.arrays()
        return cls({k: np.zeros_like(a) for k, a in arrs.items()}, {k: np.zeros_like(a) for k, a in arrs.items()})


class AdamW:
    """Adam with weight decay applied directly to the parameters."""

    def __init__(self, lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "AdamW":
        return cls(cfg.lr, (cfg.beta1, cfg.beta2), cfg.eps, cfg.weight_decay)

    def step(self, params: ModelParams, grads: ModelParams, state: AdamWState) -> None:
        """Update ``params`` and ``state`` in place."""
        p_arrs, g_arrs = params.arrays(), grads.arrays()
        for name, g in g_arrs.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient in {name}")
            if g.shape != p_arrs[name].shape or g.shape != state.m[name].shape:
                raise ContractError(f"shape mismatch for {name}")
        state.step += 1
        t = state.step
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in p_arrs.items():
            g = g_arrs[name]
            m, v = state.m[name], state.v[name]
            p *= 1.0 - self.lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def optimizer_step(params: ModelParams, grads: ModelParams, state: AdamWState, config: TrainConfig) -> None:
    AdamW.from_config(config).step(params, grads, state)


# checkpoints ------------------------------------------------------------


def save_checkpoint(fh, params: ModelParams, header: dict) -> None:
    """Write magic, version, a JSON header and little-endian float64 arrays.

    Output depends only on the arguments, so identical models give identical
    bytes.
    """
    arrays = params.arrays()
    layout = [[name, list(a.shape)] for name, a in arrays.items()]
    head = dict(header)
    head.update(
        arity=params.arity,
        n_source=params.n_source,
        n_target=params.n_target,
        dim=params.dim,
        layout=layout,
        meta=params.meta,
    )
    blob = json.dumps(head, sort_keys=True).encode("utf-8")
    fh.write(CHECKPOINT_MAGIC)
    fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
    fh.write(blob)
    for a in arrays.values():
        fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(fh) -> tuple[ModelParams, dict]:
    magic = fh.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise ContractError("not a relint checkpoint")
    version, n = struct.unpack("<IQ", fh.read(12))
    if version != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {version}")
    head = json.loads(fh.read(n).decode("utf-8"))
    arrays = {}
    for name, shape in head["layout"]:
        count = int(np.prod(shape)) if shape else 1
        buf = fh.read(8 * count)
        arrays[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
    n_layers = sum(1 for name, _ in head["layout"] if name.startswith("W"))
    params = ModelParams(
        arrays["embed"],
        [arrays[f"W{i}"] for i in range(n_layers)],
        [arrays[f"b{i}"] for i in range(n_layers)],
        head["arity"],
        head["n_source"],
        head["n_target"],
        head.get("meta", {}),
    )
    return params, head


def checkpoint_bytes(params: ModelParams, header: dict) -> bytes:
    buf = io.BytesIO()
    save_checkpoint(buf, params, header)
    return buf.getvalue()


# training loop ----------------------------------------------------------


def fit(
    params: ModelParams,
    build_slots,
    golds: Sequence[frozenset[int]],
    config: TrainConfig,
    weights: np.ndarray | None = None,
    log=None,
) -> list[float]:
    """Minimize the batch-averaged loss with AdamW; returns per-epoch mean loss.

    ``build_slots(rng)`` returns the slot sets of every example and is called
    once per epoch so neighbor sampling is redrawn. Shuffling and sampling
    share one generator seeded from ``config.seed``.
    """
    n = len(golds)
    if n == 0:
        raise ContractError("no training examples")
    rng = np.random.default_rng(config.seed)
    opt = AdamW.from_config(config)
    state = AdamWState.zeros(params)
    history = []
    for epoch in range(config.epochs):
        slots = build_slots(rng)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(
                params,
                [slots[i] for i in idx],
                [golds[i] for i in idx],
                gamma=config.gamma,
                variant=config.loss_variant,
                floor=config.prob_floor,
                weights=None if weights is None else weights[idx],
                reduction="mean",
            )
            if not np.isfinite(loss):
                raise NonFiniteError(f"non-finite loss at epoch {epoch}")
            opt.step(params, grads, state)
            total += loss * len(idx)
        history.append(total / n)
        if log is not None:
            log(epoch, history[-1])
    return history
