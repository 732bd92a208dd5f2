"""Batching, AdamW, the epoch loop and entity prediction."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .codec import DecodeOptions, decode_grid, encode_grid
from .core import NNW, NONE, THW_OFFSET, Entity, LabelSet, NonFinite, RelationGrid, Sentence, ValidationError
from .data import Vocabulary
from .metrics import micro_prf
from .model import ModelConfig, Params, forward, init_params, loss_and_grad, zero_grads, grid_loss
from .numerics import make_rng

logger = logging.getLogger(__name__)

# independent random streams drawn from one seed
_INIT, _SHUFFLE, _DROPOUT = 0, 1, 2


class NonFiniteGradient(NonFinite):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 10
    grad_clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Batch:
    """Padded token ids, true lengths, gold grids and the per-cell validity mask."""

    token_ids: np.ndarray  # (B, N_max), 0 = padding
    lengths: np.ndarray  # (B,)
    gold: list[RelationGrid]
    mask: np.ndarray  # (B, N_max, N_max) bool

    def __len__(self):
        return len(self.lengths)

    def ids(self, k: int) -> np.ndarray:
        return self.token_ids[k, : self.lengths[k]]


def make_batch(sentences: Sequence[Sentence], vocab: Vocabulary, labels: LabelSet) -> Batch:
    lengths = np.array([len(s) for s in sentences], dtype=np.int64)
    n_max = int(lengths.max())
    ids = np.zeros((len(sentences), n_max), dtype=np.int64)
    mask = np.zeros((len(sentences), n_max, n_max), dtype=bool)
    for k, s in enumerate(sentences):
        ids[k, : len(s)] = vocab.encode(s.tokens)
        mask[k, : len(s), : len(s)] = True
    gold = [encode_grid(s, labels) for s in sentences]
    return Batch(ids, lengths, gold, mask)


def batch_loss_and_grad(batch: Batch, params: Params, config: ModelConfig,
                        training: bool = False, rng=None) -> list[float]:
    """Per-sentence losses; gradients of their mean are added into ``params``.

    Each sentence is run on its own valid ``n x n`` block only, so padding never
    reaches the computation and the normalizer is the true ``n**2``.
    """
    scale = 1.0 / len(batch)
    return [
        loss_and_grad(batch.ids(k), batch.gold[k], params, config, training, rng, scale)
        for k in range(len(batch))
    ]


def batch_losses(batch: Batch, params: Params, config: ModelConfig) -> list[float]:
    out = []
    for k in range(len(batch)):
        n = int(batch.lengths[k])
        y = forward(batch.ids(k), params, config).y
        out.append(grid_loss(y, batch.gold[k], n))
    return out


@dataclass
class AdamWState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def global_grad_norm(params: Params) -> float:
    return math.sqrt(sum(float((t.grad * t.grad).sum()) for t in params.values() if t.grad is not None))


def adamw_step(params: Params, state: AdamWState, cfg: TrainConfig) -> float:
    """One decoupled-weight-decay Adam update from ``param.grad``; returns the pre-clip grad norm."""
    for name, t in params.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise NonFiniteGradient(f"non-finite gradient for {name}")
    norm = global_grad_norm(params)
    clip = 1.0
    if cfg.grad_clip_norm is not None and norm > cfg.grad_clip_norm:
        clip = cfg.grad_clip_norm / norm
    b1, b2 = cfg.betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    lr = cfg.learning_rate
    for name, t in params.items():
        g = np.zeros_like(t.data) if t.grad is None else t.grad * clip
        m = state.m.setdefault(name, np.zeros_like(t.data))
        v = state.v.setdefault(name, np.zeros_like(t.data))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        t.data -= lr * cfg.weight_decay * t.data
        t.data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return norm


# -- prediction -------------------------------------------------------------------


def grid_from_probs(y: np.ndarray) -> RelationGrid:
    """Per-cell argmax restricted to the labels legal in each triangle.

    Above the diagonal only NONE/NNW compete, on and below it only NONE/THW-*.
    Ties go to the lowest relation id.
    """
    n, _, r = y.shape
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    legal_upper = np.zeros(r, dtype=bool)
    legal_upper[[NONE, NNW]] = True
    legal_lower = np.ones(r, dtype=bool)
    legal_lower[NNW] = False
    legal = np.where(upper[..., None], legal_upper, legal_lower)
    masked = np.where(legal, y, -np.inf)
    return RelationGrid(np.argmax(masked, axis=-1))


def predict_entities(ids, params: Params, config: ModelConfig, labels: LabelSet,
                     opts: DecodeOptions = DecodeOptions()) -> list[Entity]:
    y = forward(ids, params, config, training=False).y
    return decode_grid(grid_from_probs(y), labels, opts)


def predict_corpus(sentences: Sequence[Sentence], vocab: Vocabulary, params: Params, config: ModelConfig,
                   labels: LabelSet, opts: DecodeOptions = DecodeOptions()) -> list[list[Entity]]:
    return [predict_entities(vocab.encode(s.tokens), params, config, labels, opts) for s in sentences]


def evaluate_f1(sentences, vocab, params, config, labels, opts=DecodeOptions()) -> float:
    pred = predict_corpus(sentences, vocab, params, config, labels, opts)
    return micro_prf(pred, [s.entities for s in sentences]).f1


# -- training loop ---------------------------------------------------------------


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    dev_f1: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.loss!r}\t{self.dev_f1!r}"


@dataclass
class TrainResult:
    params: Params
    log: list[EpochRecord]
    best_epoch: int | None = None


def train_epochs(
    train: Sequence[Sentence],
    labels: LabelSet,
    vocab: Vocabulary,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    dev: Sequence[Sentence] | None = None,
    params: Params | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
    opts: DecodeOptions = DecodeOptions(),
) -> TrainResult:
    """Train with shuffled mini-batches; everything random is derived from ``train_cfg.seed``.

    The loss in the log is the mean per-sentence training loss of the epoch.
    With a dev set, micro-F1 is measured after each epoch and the parameters of
    the best epoch are returned; otherwise the final parameters are returned
    and ``dev_f1`` is NaN.
    """
    if not train:
        raise ValidationError("empty training set")
    seed = train_cfg.seed
    if params is None:
        params = init_params(model_cfg, make_rng(seed, _INIT))
    shuffle_rng = make_rng(seed, _SHUFFLE)
    drop_rng = make_rng(seed, _DROPOUT)
    state = AdamWState()
    train = list(train)
    log = []
    best_f1, best_epoch, best_params = -1.0, None, None
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), train_cfg.batch_size):
            batch = make_batch([train[k] for k in order[start:start + train_cfg.batch_size]], vocab, labels)
            zero_grads(params)
            losses += batch_loss_and_grad(batch, params, model_cfg, True, drop_rng)
            adamw_step(params, state, train_cfg)
        dev_f1 = float("nan")
        if dev is not None:
            dev_f1 = evaluate_f1(dev, vocab, params, model_cfg, labels, opts)
            if dev_f1 > best_f1:
                best_f1, best_epoch, best_params = dev_f1, epoch, copy.deepcopy(params)
        rec = EpochRecord(epoch, float(np.mean(losses)), dev_f1)
        logger.info("epoch %d loss %.6f dev_f1 %.4f", epoch, rec.loss, dev_f1)
        log.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    if best_params is not None:
        params = best_params
    return TrainResult(params, log, best_epoch)
