"""Slow, obviously-correct reference computations used only by the tests."""

import itertools
import math

import numpy as np

from gridner.core import NNW, THW_OFFSET, Entity


def brute_force_entities(cells, labels):
    """Every increasing index sequence marked by the grid.

    A sequence is marked when its (last, first) cell holds a THW relation and
    every consecutive pair holds NNW. Enumerates all interior subsets for each
    THW cell, so only use it on short spans.
    """
    n = cells.shape[0]
    found = set()
    for tail in range(n):
        for head in range(tail + 1):
            rel = int(cells[tail, head])
            if rel < THW_OFFSET:
                continue
            etype = labels.type_of(rel)
            if tail == head:
                found.add(Entity((head,), etype))
                continue
            interior = range(head + 1, tail)
            for r in range(len(interior) + 1):
                for mid in itertools.combinations(interior, r):
                    seq = (head, *mid, tail)
                    if all(cells[a, b] == NNW for a, b in zip(seq, seq[1:])):
                        found.add(Entity(seq, etype))
    return found


def loop_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def loop_conv(x, w, dilation):
    n, _, cin = x.shape
    k, _, _, cout = w.shape
    half = (k - 1) // 2
    out = np.zeros((n, n, cout))
    for i in range(n):
        for j in range(n):
            for a in range(k):
                for b in range(k):
                    ii = i + (a - half) * dilation
                    jj = j + (b - half) * dilation
                    if not (0 <= ii < n and 0 <= jj < n):
                        continue
                    for ci in range(cin):
                        for co in range(cout):
                            out[i, j, co] += x[ii, jj, ci] * w[a, b, ci, co]
    return out


def gelu_exact(x):
    return 0.5 * x * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))


def gelu_tanh_scalar(v):
    return 0.5 * v * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (v + 0.044715 * v ** 3)))


def loop_cln(H, wa, ba, wb, bb, eps=1e-8):
    n, d = H.shape
    V = np.zeros((n, n, d))
    for i in range(n):
        gain = [sum(H[i, m] * wa[m, k] for m in range(d)) + ba[k] for k in range(d)]
        shift = [sum(H[i, m] * wb[m, k] for m in range(d)) + bb[k] for k in range(d)]
        for j in range(n):
            mu = sum(H[j]) / d
            sd = math.sqrt(sum((h - mu) ** 2 for h in H[j]) / d)
            sd = max(sd, eps)
            for k in range(d):
                V[i, j, k] = gain[k] * (H[j, k] - mu) / sd + shift[k]
    return V


def loop_dense(x, w, b):
    return np.array([sum(x[m] * w[m, k] for m in range(len(x))) + b[k] for k in range(w.shape[1])])


def loop_biaffine(s, o, U, W, b):
    n, d = s.shape
    R = U.shape[1]
    y = np.zeros((n, n, R))
    for i in range(n):
        for j in range(n):
            so = np.concatenate([s[i], o[j]])
            for r in range(R):
                acc = 0.0
                for p in range(d):
                    for q in range(d):
                        acc += s[i, p] * U[p, r, q] * o[j, q]
                acc += sum(W[r, m] * so[m] for m in range(2 * d))
                y[i, j, r] = acc + b[r]
    return y


def loop_loss(y, gold_cells):
    n = gold_cells.shape[0]
    total = 0.0
    for i in range(n):
        for j in range(n):
            for r in range(y.shape[-1]):
                target = 1.0 if gold_cells[i, j] == r else 0.0
                total += target * math.log(max(y[i, j, r], 1e-12))
    return -total / (n * n)
