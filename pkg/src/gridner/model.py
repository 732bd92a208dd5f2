"""Word-pair grid network: encoder, conditional grid, dilated convolutions, co-predictor.

Stages, in order:

* token embedding + dropout + bidirectional LSTM  -> ``H`` (N, d_h)
* conditional layer norm over word pairs          -> ``V`` (N, N, d_h)
* [V; distance emb; region emb] -> linear, GELU, dropout -> ``C`` (N, N, d_c)
* one GELU(dilated conv) per dilation rate, concatenated -> ``Q``
* biaffine scores from ``H`` plus MLP scores from ``Q``, summed, softmaxed

Each stage has a ``_*_fwd`` function returning ``(output, cache)`` and a
``_*_bwd`` partner. Public stage functions return only the output.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .core import NNW, NONE, NonFinite, RelationGrid, ShapeMismatch, ValidationError
from .numerics import (
    Tensor,
    check_finite,
    conv2d_dilated,
    conv2d_dilated_backward,
    dropout,
    dropout_backward,
    gelu,
    gelu_backward,
    glorot_uniform,
    linear,
    linear_backward,
    lstm_backward,
    lstm_forward,
    softmax_rows,
)

CLN_EPS = 1e-8
LOG_FLOOR = 1e-12
MAX_DISTANCE_BUCKET = 9
DISTANCE_TABLE_SIZE = 2 * MAX_DISTANCE_BUCKET + 1


class UnknownTokenId(ValidationError):
    pass


class BothPredictorsDisabled(ValidationError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Network sizes and ablation switches.

    Defaults are desk-scale. Published settings used a 768/1024-wide encoder,
    ``d_c`` in {64, 96, 128}, 20-dim distance and region embeddings and
    dropout 0.5.
    """

    vocab_size: int
    relation_count: int
    d_word: int = 64
    d_h: int = 128
    d_Ed: int = 20
    d_Et: int = 20
    d_c: int = 64
    d_biaffine: int = 64
    d_mlp: int = 64
    kernel_size: int = 3
    dilation_rates: tuple[int, ...] = (1, 2, 3)
    dropout_p: float = 0.5
    use_distance_emb: bool = True
    use_region_emb: bool = True
    use_biaffine: bool = True
    use_mlp_predictor: bool = True
    enabled_dilations: tuple[int, ...] | None = None
    use_nnw: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dilation_rates", tuple(self.dilation_rates))
        if self.enabled_dilations is not None:
            object.__setattr__(self, "enabled_dilations", tuple(self.enabled_dilations))
        if not (self.use_biaffine or self.use_mlp_predictor):
            raise BothPredictorsDisabled("at least one of the biaffine and MLP predictors must be enabled")
        if not self.dilation_rates or any(r < 1 for r in self.dilation_rates):
            raise ValidationError("dilation_rates must be non-empty and all >= 1")
        if self.enabled_dilations is not None:
            extra = set(self.enabled_dilations) - set(self.dilation_rates)
            if extra:
                raise ValidationError(f"enabled dilations {sorted(extra)} not in dilation_rates")
            if self.use_mlp_predictor and not self.enabled_dilations:
                raise ValidationError("the MLP predictor needs at least one enabled dilation")
        if self.kernel_size % 2 != 1:
            raise ValidationError("kernel_size must be odd")
        if self.d_h % 2:
            raise ValidationError("d_h must be even (two LSTM directions of d_h/2)")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValidationError("dropout_p must be in [0, 1)")
        if self.relation_count < 2:
            raise ValidationError("relation_count must be at least 2")

    @property
    def active_dilations(self) -> tuple[int, ...]:
        if self.enabled_dilations is None:
            return self.dilation_rates
        return tuple(r for r in self.dilation_rates if r in self.enabled_dilations)

    @property
    def grid_in_dim(self) -> int:
        return self.d_h + self.d_Ed * self.use_distance_emb + self.d_Et * self.use_region_emb

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilation_rates"] = list(self.dilation_rates)
        if self.enabled_dilations is not None:
            d["enabled_dilations"] = list(self.enabled_dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> ModelConfig:
        return replace(self, **kw)


@dataclass
class GridLogits:
    y_prime: np.ndarray
    y_double_prime: np.ndarray
    y: np.ndarray


Params = dict  # name -> Tensor


def init_params(config: ModelConfig, rng: np.random.Generator) -> Params:
    """Glorot-uniform weights, zero biases, CLN starting as plain standardization."""
    c = config
    h = c.d_h // 2
    R = c.relation_count
    p = {}

    def w(name, shape, fan_in, fan_out):
        p[name] = Tensor(glorot_uniform(rng, shape, fan_in, fan_out))

    def z(name, shape):
        p[name] = Tensor(np.zeros(shape))

    w("emb", (c.vocab_size, c.d_word), c.vocab_size, c.d_word)
    for d in ("fw", "bw"):
        w(f"lstm_{d}_wx", (c.d_word, 4 * h), c.d_word, 4 * h)
        w(f"lstm_{d}_wh", (h, 4 * h), h, 4 * h)
        z(f"lstm_{d}_b", (4 * h,))
    z("cln_wa", (c.d_h, c.d_h))
    p["cln_ba"] = Tensor(np.ones(c.d_h))
    z("cln_wb", (c.d_h, c.d_h))
    z("cln_bb", (c.d_h,))
    if c.use_distance_emb:
        w("dist_emb", (DISTANCE_TABLE_SIZE, c.d_Ed), DISTANCE_TABLE_SIZE, c.d_Ed)
    if c.use_region_emb:
        w("region_emb", (2, c.d_Et), 2, c.d_Et)
    w("grid_w", (c.grid_in_dim, c.d_c), c.grid_in_dim, c.d_c)
    z("grid_b", (c.d_c,))
    k = c.kernel_size
    for r in c.active_dilations:
        w(f"conv{r}_w", (k, k, c.d_c, c.d_c), k * k * c.d_c, k * k * c.d_c)
        z(f"conv{r}_b", (c.d_c,))
    if c.use_biaffine:
        d = c.d_biaffine
        for side in ("s", "o"):
            w(f"bi_{side}_w", (c.d_h, d), c.d_h, d)
            z(f"bi_{side}_b", (d,))
        w("bi_u", (d, R, d), d, d)
        w("bi_w", (R, 2 * d), 2 * d, R)
        z("bi_b", (R,))
    if c.use_mlp_predictor:
        qdim = len(c.active_dilations) * c.d_c
        w("pred_w1", (qdim, c.d_mlp), qdim, c.d_mlp)
        z("pred_b1", (c.d_mlp,))
        w("pred_w2", (c.d_mlp, R), c.d_mlp, R)
        z("pred_b2", (R,))
    return p


def zero_grads(params: Params):
    for t in params.values():
        t.zero_grad()


def _accum(params, name, g):
    t = params[name]
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# -- encoder -----------------------------------------------------------------


def _encode_fwd(ids, params, config, training, rng):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise UnknownTokenId(f"token id outside [0, {config.vocab_size})")
    x0 = params["emb"].data[ids]
    x, m = dropout(x0, config.dropout_p, rng, training)
    hf, cf = lstm_forward(x, params["lstm_fw_wx"].data, params["lstm_fw_wh"].data, params["lstm_fw_b"].data)
    hb, cb = lstm_forward(x[::-1], params["lstm_bw_wx"].data, params["lstm_bw_wh"].data, params["lstm_bw_b"].data)
    H = np.concatenate([hf, hb[::-1]], axis=1)
    return H, (ids, m, cf, cb)


def _encode_bwd(dH, cache, params):
    ids, m, cf, cb = cache
    h = dH.shape[1] // 2
    dxf, dwx, dwh, db = lstm_backward(dH[:, :h], cf)
    _accum(params, "lstm_fw_wx", dwx)
    _accum(params, "lstm_fw_wh", dwh)
    _accum(params, "lstm_fw_b", db)
    dxb, dwx, dwh, db = lstm_backward(dH[::-1, h:], cb)
    _accum(params, "lstm_bw_wx", dwx)
    _accum(params, "lstm_bw_wh", dwh)
    _accum(params, "lstm_bw_b", db)
    dx = dropout_backward(dxf + dxb[::-1], m)
    demb = np.zeros_like(params["emb"].data)
    np.add.at(demb, ids, dx)
    _accum(params, "emb", demb)


def encode_words(ids, params: Params, config: ModelConfig, training: bool = False, rng=None) -> np.ndarray:
    """Word representations ``H`` of shape (N, d_h); forward half first, backward half second."""
    return _encode_fwd(ids, params, config, training, rng)[0]


# -- conditional layer norm ---------------------------------------------------


def _cln_fwd(H, params):
    mu = H.mean(axis=1, keepdims=True)
    xc = H - mu
    sd = np.sqrt((xc * xc).mean(axis=1, keepdims=True))
    sdf = np.maximum(sd, CLN_EPS)
    nrm = xc / sdf
    gain = linear(H, params["cln_wa"].data, params["cln_ba"].data)
    shift = linear(H, params["cln_wb"].data, params["cln_bb"].data)
    V = gain[:, None, :] * nrm[None, :, :] + shift[:, None, :]
    return V, (H, xc, sd, sdf, nrm, gain)


def _cln_bwd(dV, cache, params):
    H, xc, sd, sdf, nrm, gain = cache
    d = H.shape[1]
    dgain = (dV * nrm[None, :, :]).sum(axis=1)
    dshift = dV.sum(axis=1)
    dnrm = (dV * gain[:, None, :]).sum(axis=0)
    dH_a, dwa, dba = linear_backward(dgain, H, params["cln_wa"].data)
    dH_b, dwb, dbb = linear_backward(dshift, H, params["cln_wb"].data)
    _accum(params, "cln_wa", dwa)
    _accum(params, "cln_ba", dba)
    _accum(params, "cln_wb", dwb)
    _accum(params, "cln_bb", dbb)
    live = sd > CLN_EPS  # floored rows treat the scale as a constant
    dxc = dnrm / sdf - live * xc * (dnrm * xc).sum(axis=1, keepdims=True) / (d * sdf ** 3)
    dH_n = dxc - dxc.mean(axis=1, keepdims=True)
    return dH_a + dH_b + dH_n


def cln_grid(H: np.ndarray, params: Params) -> np.ndarray:
    """Grid ``V[i, j] = gain(h_i) * standardize(h_j) + shift(h_i)``."""
    return _cln_fwd(np.asarray(H, dtype=np.float64), params)[0]


# -- grid build-up --------------------------------------------------------------


def distance_bucket(delta):
    """Signed log2 bucket of ``j - i``: 0 for 0, 1..9 for j > i, 10..18 for j < i."""
    delta = np.asarray(delta, dtype=np.int64)
    mag = np.abs(delta)
    b = np.zeros(delta.shape, dtype=np.int64)
    pos = mag > 0
    b[pos] = np.minimum(1 + np.floor(np.log2(mag[pos])).astype(np.int64), MAX_DISTANCE_BUCKET)
    return np.where(delta < 0, b + MAX_DISTANCE_BUCKET, b)


def region_index(n: int) -> np.ndarray:
    """0 for cells on or below the diagonal (i >= j), 1 above it."""
    i, j = np.indices((n, n))
    return (i < j).astype(np.int64)


def _grid_fwd(V, config, params, training, rng):
    n = V.shape[0]
    parts = [V]
    i, j = np.indices((n, n))
    buckets = distance_bucket(j - i)
    regions = region_index(n)
    if config.use_distance_emb:
        parts.append(params["dist_emb"].data[buckets])
    if config.use_region_emb:
        parts.append(params["region_emb"].data[regions])
    feats = np.concatenate(parts, axis=-1)
    z = linear(feats, params["grid_w"].data, params["grid_b"].data)
    C, m = dropout(gelu(z), config.dropout_p, rng, training)
    return C, (feats, z, m, buckets, regions)


def _grid_bwd(dC, cache, config, params):
    feats, z, m, buckets, regions = cache
    dz = gelu_backward(dropout_backward(dC, m), z)
    dfeats, dw, db = linear_backward(dz, feats, params["grid_w"].data)
    _accum(params, "grid_w", dw)
    _accum(params, "grid_b", db)
    d_h = config.d_h
    off = d_h
    if config.use_distance_emb:
        g = np.zeros_like(params["dist_emb"].data)
        np.add.at(g, buckets, dfeats[..., off:off + config.d_Ed])
        _accum(params, "dist_emb", g)
        off += config.d_Ed
    if config.use_region_emb:
        g = np.zeros_like(params["region_emb"].data)
        np.add.at(g, regions, dfeats[..., off:off + config.d_Et])
        _accum(params, "region_emb", g)
    return dfeats[..., :d_h]


def build_grid(V, config: ModelConfig, params: Params, training: bool = False, rng=None) -> np.ndarray:
    """Position/region-aware grid ``C`` of shape (N, N, d_c)."""
    return _grid_fwd(np.asarray(V, dtype=np.float64), config, params, training, rng)[0]


# -- dilated convolutions -------------------------------------------------------


def _dilated_fwd(C, config, params):
    outs, zs = [], []
    for r in config.active_dilations:
        z = conv2d_dilated(C, params[f"conv{r}_w"].data, r) + params[f"conv{r}_b"].data
        zs.append(z)
        outs.append(gelu(z))
    return np.concatenate(outs, axis=-1), (C, zs)


def _dilated_bwd(dQ, cache, config, params):
    C, zs = cache
    dC = np.zeros_like(C)
    dc = config.d_c
    for k, (r, z) in enumerate(zip(config.active_dilations, zs)):
        dz = gelu_backward(dQ[..., k * dc:(k + 1) * dc], z)
        dx, dw = conv2d_dilated_backward(dz, C, params[f"conv{r}_w"].data, r)
        _accum(params, f"conv{r}_w", dw)
        _accum(params, f"conv{r}_b", dz.sum(axis=(0, 1)))
        dC += dx
    return dC


def multi_dilated(C, config: ModelConfig, params: Params) -> np.ndarray:
    """Concatenation of ``GELU(conv_l(C) + bias_l)`` over the enabled rates, in rate order."""
    return _dilated_fwd(np.asarray(C, dtype=np.float64), config, params)[0]


# -- co-predictor ---------------------------------------------------------------


def biaffine(s, o, U, W, b):
    """``y[i, j] = s_i^T U o_j + W [s_i; o_j] + b`` for all pairs; U is (d, R, d), W is (R, 2d)."""
    d = s.shape[1]
    return (
        np.einsum("id,drk,jk->ijr", s, U, o, optimize=True)
        + (s @ W[:, :d].T)[:, None, :]
        + (o @ W[:, d:].T)[None, :, :]
        + b
    )


def _biaffine_fwd(H, config, params, training, rng):
    zs = linear(H, params["bi_s_w"].data, params["bi_s_b"].data)
    zo = linear(H, params["bi_o_w"].data, params["bi_o_b"].data)
    s, ms = dropout(gelu(zs), config.dropout_p, rng, training)
    o, mo = dropout(gelu(zo), config.dropout_p, rng, training)
    y = biaffine(s, o, params["bi_u"].data, params["bi_w"].data, params["bi_b"].data)
    return y, (H, zs, zo, s, o, ms, mo)


def _biaffine_bwd(dy, cache, params):
    H, zs, zo, s, o, ms, mo = cache
    U = params["bi_u"].data
    W = params["bi_w"].data
    d = s.shape[1]
    row = dy.sum(axis=1)  # (i, r)
    col = dy.sum(axis=0)  # (j, r)
    _accum(params, "bi_u", np.einsum("id,ijr,jk->drk", s, dy, o, optimize=True))
    _accum(params, "bi_w", np.concatenate([row.T @ s, col.T @ o], axis=1))
    _accum(params, "bi_b", dy.sum(axis=(0, 1)))
    ds = np.einsum("ijr,drk,jk->id", dy, U, o, optimize=True) + row @ W[:, :d]
    do = np.einsum("id,drk,ijr->jk", s, U, dy, optimize=True) + col @ W[:, d:]
    dzs = gelu_backward(dropout_backward(ds, ms), zs)
    dzo = gelu_backward(dropout_backward(do, mo), zo)
    dH_s, dw, db = linear_backward(dzs, H, params["bi_s_w"].data)
    _accum(params, "bi_s_w", dw)
    _accum(params, "bi_s_b", db)
    dH_o, dw, db = linear_backward(dzo, H, params["bi_o_w"].data)
    _accum(params, "bi_o_w", dw)
    _accum(params, "bi_o_b", db)
    return dH_s + dH_o


def biaffine_scores(H, config: ModelConfig, params: Params, training: bool = False, rng=None) -> np.ndarray:
    return _biaffine_fwd(np.asarray(H, dtype=np.float64), config, params, training, rng)[0]


def _mlp_fwd(Q, config, params, training, rng):
    z = linear(Q, params["pred_w1"].data, params["pred_b1"].data)
    a, m = dropout(gelu(z), config.dropout_p, rng, training)
    y = linear(a, params["pred_w2"].data, params["pred_b2"].data)
    return y, (Q, z, a, m)


def _mlp_bwd(dy, cache, params):
    Q, z, a, m = cache
    da, dw2, db2 = linear_backward(dy, a, params["pred_w2"].data)
    _accum(params, "pred_w2", dw2)
    _accum(params, "pred_b2", db2)
    dz = gelu_backward(dropout_backward(da, m), z)
    dQ, dw1, db1 = linear_backward(dz, Q, params["pred_w1"].data)
    _accum(params, "pred_w1", dw1)
    _accum(params, "pred_b1", db1)
    return dQ


def mlp_scores(Q, config: ModelConfig, params: Params, training: bool = False, rng=None) -> np.ndarray:
    return _mlp_fwd(np.asarray(Q, dtype=np.float64), config, params, training, rng)[0]


def combine_scores(y_prime, y_double_prime, config: ModelConfig) -> np.ndarray:
    """Softmax over relations of the summed predictor scores; a disabled predictor adds nothing."""
    if not (config.use_biaffine or config.use_mlp_predictor):
        raise BothPredictorsDisabled("both predictors disabled")
    total = 0.0
    if config.use_biaffine:
        total = total + y_prime
    if config.use_mlp_predictor:
        total = total + y_double_prime
    return softmax_rows(total)


# -- loss -----------------------------------------------------------------------


def gold_onehot(gold: RelationGrid, relation_count: int) -> np.ndarray:
    return np.eye(relation_count)[gold.cells]


def grid_loss(y: np.ndarray, gold: RelationGrid, n: int | None = None) -> float:
    """Mean negative log-likelihood over the valid ``n x n`` cells.

    ``y`` may be larger than ``n x n`` (padding); the extra cells are ignored
    and the normalizer is ``n**2``.
    """
    n = gold.n if n is None else n
    if y.ndim != 3 or y.shape[0] < n or y.shape[1] < n or gold.n != n:
        raise ShapeMismatch(f"probabilities {y.shape} do not cover gold grid of size {gold.n}")
    yv = y[:n, :n]
    picked = np.take_along_axis(yv, gold.cells[..., None], axis=-1)[..., 0]
    return float(-np.log(np.maximum(picked, LOG_FLOOR)).sum() / (n * n))


def _loss_grad_logits(y, gold):
    n = gold.n
    onehot = gold_onehot(gold, y.shape[-1])
    picked = (y * onehot).sum(axis=-1, keepdims=True)
    return (y - onehot) * (picked > LOG_FLOOR) / (n * n)


def training_target(gold: RelationGrid, config: ModelConfig) -> RelationGrid:
    """Gold grid as seen by the loss; the no-NNW ablation folds NNW into NONE."""
    if config.use_nnw:
        return gold
    cells = gold.cells.copy()
    cells[cells == NNW] = NONE
    return RelationGrid(cells)


# -- full pass ------------------------------------------------------------------


def _forward(ids, params, config, training, rng):
    H, c_enc = _encode_fwd(ids, params, config, training, rng)
    V, c_cln = _cln_fwd(H, params)
    caches = {"enc": c_enc, "cln": c_cln}
    n = H.shape[0]
    R = config.relation_count
    y1 = np.zeros((n, n, R))
    y2 = np.zeros((n, n, R))
    if config.use_mlp_predictor:
        C, caches["grid"] = _grid_fwd(V, config, params, training, rng)
        Q, caches["conv"] = _dilated_fwd(C, config, params)
        y2, caches["mlp"] = _mlp_fwd(Q, config, params, training, rng)
    if config.use_biaffine:
        y1, caches["bi"] = _biaffine_fwd(H, config, params, training, rng)
    y = combine_scores(y1, y2, config)
    return GridLogits(y1, y2, check_finite(y, "probabilities")), caches


def forward(ids, params: Params, config: ModelConfig, training: bool = False, rng=None) -> GridLogits:
    """Relation probabilities for one sentence of token ids."""
    return _forward(ids, params, config, training, rng)[0]


def _backward(dlogits, caches, params, config):
    dH = np.zeros_like(caches["cln"][0])
    if config.use_biaffine:
        dH += _biaffine_bwd(dlogits, caches["bi"], params)
    if config.use_mlp_predictor:
        dQ = _mlp_bwd(dlogits, caches["mlp"], params)
        dC = _dilated_bwd(dQ, caches["conv"], config, params)
        dV = _grid_bwd(dC, caches["grid"], config, params)
        dH += _cln_bwd(dV, caches["cln"], params)
    _encode_bwd(dH, caches["enc"], params)


def loss_and_grad(ids, gold: RelationGrid, params: Params, config: ModelConfig,
                  training: bool = False, rng=None, scale: float = 1.0) -> float:
    """Loss for one sentence; adds ``scale * dLoss/dparam`` into every ``param.grad``."""
    ids = np.asarray(ids)
    if len(ids) != gold.n:
        raise ShapeMismatch(f"{len(ids)} tokens but gold grid has size {gold.n}")
    out, caches = _forward(ids, params, config, training, rng)
    target = training_target(gold, config)
    loss = grid_loss(out.y, target)
    if not math.isfinite(loss):
        raise NonFinite("non-finite loss")
    _backward(scale * _loss_grad_logits(out.y, target), caches, params, config)
    return loss


def param_count(params: Params) -> int:
    return sum(t.data.size for t in params.values())
