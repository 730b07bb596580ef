"""Layer zoo: linear, GRU cell, multi-head attention, layer norm, dropout,
softmax, cross-entropy. Hot layers are fused single ops with hand-derived
backward passes; everything passes the central-difference gradient check.
"""

import math

import numpy as np

from ..errors import EmptyScoreVector, ShapeMismatch
from .tensor import (
    Tensor, _make, _sigmoid_np, add, concat, matmul, relu, reshape, scale,
    transpose, tsum,
)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w (+ b); w is (in, out)."""
    y = matmul(x, w)
    if b is not None:
        y = add(y, b)
    return y


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along `axis`; positions where mask is True get exactly zero."""
    data = x.data
    if data.size == 0:
        raise EmptyScoreVector("softmax over an empty tensor")
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), data.shape)
        if (~mask).sum(axis=axis).min() == 0:
            raise ShapeMismatch("softmax row with every position masked")
        neg = np.where(mask, -np.inf, data)
    else:
        neg = data
    m = np.max(neg, axis=axis, keepdims=True)
    e = np.exp(neg - m)  # exp(-inf) == 0 exactly for masked slots
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            inner = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (g - inner))

    return _make(y, (x,), backward)


def cross_entropy(probs: Tensor, target_index: int) -> Tensor:
    """-log p[target] for a 1-D probability vector."""
    p = probs.data
    if p.ndim != 1:
        raise ShapeMismatch(f"cross_entropy expects a vector, got {p.shape}")
    if not (0 <= target_index < p.shape[0]):
        raise ShapeMismatch(f"target {target_index} outside [0, {p.shape[0]})")
    value = -np.log(p[target_index])

    def backward(g):
        if probs.requires_grad:
            gp = np.zeros_like(p)
            gp[target_index] = -g / p[target_index]
            probs._accumulate(gp)

    return _make(np.asarray(value, dtype=p.dtype), (probs,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.data.shape[-1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeMismatch("layer_norm gamma/beta must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = centered * inv
    y = gamma.data * xhat + beta.data

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            term = (gx * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * term))

    return _make(y, (x, gamma, beta), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; exact identity when not training or p == 0."""
    if not train or p == 0.0:
        return x
    if not (0.0 <= p < 1.0):
        raise ShapeMismatch(f"dropout rate must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout in train mode needs a random generator")
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / x.data.dtype.type(1.0 - p)
    data = x.data * keep

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * keep)

    return _make(data, (x,), backward)


def typed_messages(h: Tensor, adjacency: list[np.ndarray],
                   weights: list[Tensor], biases: list[Tensor]) -> Tensor:
    """Sum over edge types of A_t @ (h @ W_t + b_t), fused into one op.

    adjacency[t][dst, src] = 1 marks an edge; a node with no incoming edges
    of any type receives an exactly-zero message.
    """
    hd = h.data
    out = None
    for a, w, b in zip(adjacency, weights, biases):
        try:
            m = a @ (hd @ w.data + b.data)
        except ValueError as exc:
            raise ShapeMismatch(str(exc)) from None
        out = m if out is None else out + m

    def backward(g):
        dh = None
        for a, w, b in zip(adjacency, weights, biases):
            t = a.T @ g
            if w.requires_grad:
                w._accumulate(hd.T @ t)
            if b.requires_grad:
                b._accumulate(t.sum(axis=0))
            if h.requires_grad:
                contrib = t @ w.data.T
                dh = contrib if dh is None else dh + contrib
        if h.requires_grad and dh is not None:
            h._accumulate(dh)

    parents = (h, *weights, *biases)
    return _make(out, parents, backward)


def gru_cell(x: Tensor, h_prev: Tensor, wxr, whr, br, wxz, whz, bz, wxn, whn, bn) -> Tensor:
    """Gated update h' = (1-z)*h + z*tanh(Wn x + Un (r*h)), gates r and z sigmoid."""
    if x.data.shape[0] != h_prev.data.shape[0]:
        raise ShapeMismatch(
            f"row counts differ: x {x.data.shape} vs h {h_prev.data.shape}")
    xd, hd = x.data, h_prev.data
    try:
        ar = xd @ wxr.data + hd @ whr.data + br.data
        az = xd @ wxz.data + hd @ whz.data + bz.data
        r = _sigmoid_np(ar)
        z = _sigmoid_np(az)
        rh = r * hd
        an = xd @ wxn.data + rh @ whn.data + bn.data
    except ValueError as exc:
        raise ShapeMismatch(str(exc)) from None
    n = np.tanh(an)
    out = (1.0 - z) * hd + z * n

    def backward(g):
        dz = g * (n - hd)
        daz = dz * z * (1.0 - z)
        dn = g * z
        dan = dn * (1.0 - n * n)
        dh = g * (1.0 - z)
        drh = dan @ whn.data.T
        dr = drh * hd
        dh += drh * r
        dar = dr * r * (1.0 - r)
        if x.requires_grad:
            x._accumulate(dar @ wxr.data.T + daz @ wxz.data.T + dan @ wxn.data.T)
        if h_prev.requires_grad:
            h_prev._accumulate(dh + dar @ whr.data.T + daz @ whz.data.T)
        for w, d, inp in ((wxr, dar, xd), (wxz, daz, xd), (wxn, dan, xd),
                          (whr, dar, hd), (whz, daz, hd), (whn, dan, rh)):
            if w.requires_grad:
                w._accumulate(inp.T @ d)
        for b, d in ((br, dar), (bz, daz), (bn, dan)):
            if b.requires_grad:
                b._accumulate(d.sum(axis=0))

    parents = (x, h_prev, wxr, whr, br, wxz, whz, bz, wxn, whn, bn)
    return _make(out, parents, backward)


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor,
                         wq, bq, wk, wv, bv, wo, bo,
                         heads: int, mask: np.ndarray | None = None) -> Tensor:
    """Projected multi-head attention over (seq, dim) inputs.

    The key projection carries no bias: softmax shift invariance makes one a
    dead parameter. mask, when given, is a boolean (seq_k,) vector marking
    padded key positions; those receive exactly zero attention weight.
    """
    seq_q, dim = q.data.shape
    seq_k = k.data.shape[0]
    if dim % heads != 0:
        raise ShapeMismatch(f"dim {dim} not divisible by {heads} heads")
    dh = dim // heads

    def split(t: Tensor, seq: int) -> Tensor:
        return transpose(reshape(t, (seq, heads, dh)), (1, 0, 2))

    qh = split(linear(q, wq, bq), seq_q)
    kh = split(linear(k, wk), seq_k)
    vh = split(linear(v, wv, bv), seq_k)
    scores = scale(matmul(qh, transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(dh))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(1, 1, seq_k)
    weights = softmax(scores, axis=-1, mask=mask)
    mixed = matmul(weights, vh)
    merged = reshape(transpose(mixed, (1, 0, 2)), (seq_q, dim))
    return linear(merged, wo, bo)


def attention_weights(q: Tensor, k: Tensor, wq, bq, wk,
                      heads: int, mask: np.ndarray | None = None) -> np.ndarray:
    """Forward-only attention weight matrix (heads, seq_q, seq_k) for checks."""
    seq_q, dim = q.data.shape
    seq_k = k.data.shape[0]
    dh = dim // heads
    qh = transpose(reshape(linear(q, wq, bq), (seq_q, heads, dh)), (1, 0, 2))
    kh = transpose(reshape(linear(k, wk), (seq_k, heads, dh)), (1, 0, 2))
    scores = scale(matmul(qh, transpose(kh, (0, 2, 1))), 1.0 / math.sqrt(dh))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(1, 1, seq_k)
    return softmax(scores, axis=-1, mask=mask).data
