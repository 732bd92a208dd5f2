"""Dense float64 building blocks with hand-written backward passes.

Every op comes as a forward function plus a ``*_backward`` partner that takes
the upstream gradient and whatever the forward returned or cached. The model
wires these together into a fixed graph; there is no tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import NonFinite, ShapeMismatch

_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass
class Tensor:
    """A float64 array with an optional gradient buffer of the same shape."""

    data: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.grad is not None and self.grad.shape != self.data.shape:
            raise ShapeMismatch(f"grad shape {self.grad.shape} != data shape {self.data.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator; the output depends only on ``(seed, stream)``."""
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])
    return np.random.Generator(np.random.Philox(seq))


def check_finite(x: np.ndarray, what: str = "value"):
    if not np.all(np.isfinite(x)):
        raise NonFinite(f"non-finite {what}")
    return x


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matmul_backward(dc: np.ndarray, a: np.ndarray, b: np.ndarray):
    return dc @ b.T, a.T @ dc


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map over the last axis; ``w`` is stored as (in, out)."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeMismatch(f"linear expects last dim {w.shape[0]}, got {x.shape[-1]}")
    return x @ w + b


def linear_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    dx = (d2 @ w.T).reshape(x.shape)
    return dx, x2.T @ d2, d2.sum(axis=0)


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU, tanh approximation."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x ** 3)))


def gelu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    u = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
    return dout * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ShapeMismatch("softmax over an empty axis")
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def softmax_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


def dropout(x: np.ndarray, p: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout. Returns ``(out, mask)``; ``mask`` is None when nothing was dropped."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    mask = keep / (1.0 - p)
    return x * mask, mask


def dropout_backward(dout: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dout if mask is None else dout * mask


def _conv_geometry(x, kernels, dilation):
    if x.ndim != 3 or x.shape[0] != x.shape[1]:
        raise ShapeMismatch(f"conv input must be N x N x C, got {x.shape}")
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1] or kernels.shape[2] != x.shape[2]:
        raise ShapeMismatch(f"kernel shape {kernels.shape} does not fit input {x.shape}")
    k = kernels.shape[0]
    if k % 2 == 0:
        raise ShapeMismatch("kernel size must be odd")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    return k, (k - 1) * dilation // 2


def _im2col(x, k, dilation, pad):
    n = x.shape[0]
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    taps = [xp[a * dilation:a * dilation + n, b * dilation:b * dilation + n] for a in range(k) for b in range(k)]
    return np.concatenate(taps, axis=-1)  # n, n, k*k*cin


def conv2d_dilated(x: np.ndarray, kernels: np.ndarray, dilation: int) -> np.ndarray:
    """Same-size 2-D cross-correlation with dilated taps and zero padding.

    ``x`` is (N, N, Cin), ``kernels`` is (K, K, Cin, Cout) with K odd.
    """
    k, pad = _conv_geometry(x, kernels, dilation)
    cols = _im2col(x, k, dilation, pad)
    return cols @ kernels.reshape(-1, kernels.shape[-1])


def conv2d_dilated_backward(dout: np.ndarray, x: np.ndarray, kernels: np.ndarray, dilation: int):
    k, pad = _conv_geometry(x, kernels, dilation)
    n, cin = x.shape[0], x.shape[2]
    cols = _im2col(x, k, dilation, pad)
    wmat = kernels.reshape(-1, kernels.shape[-1])
    dw = cols.reshape(-1, cols.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])
    dcols = dout @ wmat.T
    dxp = np.zeros((n + 2 * pad, n + 2 * pad, cin))
    t = 0
    for a in range(k):
        for b in range(k):
            dxp[a * dilation:a * dilation + n, b * dilation:b * dilation + n] += dcols[..., t * cin:(t + 1) * cin]
            t += 1
    return dxp[pad:pad + n, pad:pad + n], dw.reshape(kernels.shape)


def lstm_forward(x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    """Single-direction LSTM over the rows of ``x``; gate order i, f, g, o.

    Returns the hidden states (T, H) and a cache for :func:`lstm_backward`.
    """
    t_len = x.shape[0]
    hdim = wh.shape[0]
    xw = x @ wx + b
    h = np.zeros((t_len, hdim))
    c = np.zeros((t_len, hdim))
    gates = np.zeros((t_len, 4 * hdim))
    h_prev = np.zeros(hdim)
    c_prev = np.zeros(hdim)
    for t in range(t_len):
        z = xw[t] + h_prev @ wh
        i = sigmoid(z[:hdim])
        f = sigmoid(z[hdim:2 * hdim])
        g = np.tanh(z[2 * hdim:3 * hdim])
        o = sigmoid(z[3 * hdim:])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        gates[t] = np.concatenate([i, f, g, o])
        c[t] = c_prev
        h[t] = h_prev
    return h, (x, wx, wh, h, c, gates)


def lstm_backward(dh: np.ndarray, cache):
    x, wx, wh, h, c, gates = cache
    t_len, hdim = h.shape
    dz_all = np.zeros((t_len, 4 * hdim))
    dh_next = np.zeros(hdim)
    dc_next = np.zeros(hdim)
    for t in reversed(range(t_len)):
        i, f, g, o = (gates[t, k * hdim:(k + 1) * hdim] for k in range(4))
        tc = np.tanh(c[t])
        dh_t = dh[t] + dh_next
        do = dh_t * tc
        dc = dc_next + dh_t * o * (1.0 - tc * tc)
        c_prev = c[t - 1] if t > 0 else np.zeros(hdim)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)])
        dz_all[t] = dz
        dh_next = dz @ wh.T
    h_prev = np.vstack([np.zeros((1, hdim)), h[:-1]])
    dwh = h_prev.T @ dz_all
    dwx = x.T @ dz_all
    db = dz_all.sum(axis=0)
    dx = dz_all @ wx.T
    return dx, dwx, dwh, db


def finite_diff_check(
    f: Callable[[], float],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_coords: int | None = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients against central differences.

    ``f`` takes no arguments, reads the current ``params[k].data``, returns the
    scalar loss and writes analytic gradients into ``params[k].grad``. Tensors
    with more than ``max_coords`` entries are subsampled. Returns the maximum
    relative error, ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError("eps must be in (0, 1e-2]")
    rng = rng if rng is not None else make_rng(0)
    f()
    analytic = []
    for p in params:
        if p.grad is None:
            raise ValueError("f() did not populate a gradient")
        analytic.append(check_finite(p.grad.copy(), "analytic gradient"))
    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            up = f()
            flat[k] = orig - eps
            down = f()
            flat[k] = orig
            num = (up - down) / (2 * eps)
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NonFinite("non-finite loss during finite differences")
            a = grad.reshape(-1)[k]
            err = abs(a - num) / max(abs(a), abs(num), 1e-8)
            worst = max(worst, err)
    f()
    return worst
