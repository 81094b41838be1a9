"""LSTM and bidirectional LSTM with hand-derived backpropagation.

Arrays are batched as (batch, time, features). Padding must sit at the end
of each row; padded outputs are ignored by callers, so no state masking is
needed in the recurrence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import Param, glorot


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(eq=False)
class LstmCellParams:
    """Weights with gate blocks stacked as [input, forget, cell, output]."""

    W: Param  # (4H, D)
    U: Param  # (4H, H)
    b: Param  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def input_size(self) -> int:
        return self.W.shape[1]

    def params(self) -> list[Param]:
        return [self.W, self.U, self.b]

    @classmethod
    def init(cls, prefix: str, input_size: int, hidden: int, rng: np.random.Generator) -> "LstmCellParams":
        W = glorot(rng, (4 * hidden, input_size))
        U = glorot(rng, (4 * hidden, hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        return cls(Param(f"{prefix}.W", W), Param(f"{prefix}.U", U), Param(f"{prefix}.b", b))


@dataclass
class LstmCache:
    x: np.ndarray
    gates: np.ndarray  # (B, n, 4H) post-activation
    c: np.ndarray      # (B, n, H)
    tanh_c: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray


def lstm_forward(params: LstmCellParams, x: np.ndarray, h0=None, c0=None) -> tuple[np.ndarray, LstmCache]:
    """Run the recurrence over ``x`` of shape (B, n, D) or (n, D)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != params.input_size:
        raise ValueError(f"input feature size {x.shape[-1]} does not match LSTM input size {params.input_size}")
    B, n, _ = x.shape
    H = params.hidden
    h = np.zeros((B, H)) if h0 is None else np.broadcast_to(np.asarray(h0, dtype=np.float64), (B, H)).copy()
    c = np.zeros((B, H)) if c0 is None else np.broadcast_to(np.asarray(c0, dtype=np.float64), (B, H)).copy()
    if h.shape[1] != H or c.shape[1] != H:
        raise ValueError("initial state size does not match hidden size")

    xw = x @ params.W.values.T + params.b.values
    U_T = params.U.values.T
    gates = np.empty((B, n, 4 * H))
    cs = np.empty((B, n, H))
    tcs = np.empty((B, n, H))
    hs = np.empty((B, n, H))
    h_prev = np.empty((B, n, H))
    c_prev = np.empty((B, n, H))
    for t in range(n):
        h_prev[:, t] = h
        c_prev[:, t] = c
        z = xw[:, t] + h @ U_T
        g = np.empty_like(z)
        g[:, :2 * H] = sigmoid(z[:, :2 * H])
        g[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        g[:, 3 * H:] = sigmoid(z[:, 3 * H:])
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 2 * H:3 * H]
        tc = np.tanh(c)
        h = g[:, 3 * H:] * tc
        gates[:, t] = g
        cs[:, t] = c
        tcs[:, t] = tc
        hs[:, t] = h
    cache = LstmCache(x, gates, cs, tcs, h_prev, c_prev)
    return (hs[0] if squeeze else hs), cache


def lstm_backward(params: LstmCellParams, cache: LstmCache, dh_out: np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients; return the gradient wrt the inputs."""
    squeeze = dh_out.ndim == 2
    if squeeze:
        dh_out = dh_out[None]
    B, n, H = dh_out.shape
    U = params.U.values
    W = params.W.values
    dz_all = np.empty((B, n, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(n - 1, -1, -1):
        g = cache.gates[:, t]
        i, f, gg, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        tc = cache.tanh_c[:, t]
        dh = dh_out[:, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dz_all[:, t]
        dz[:, :H] = dc * gg * i * (1.0 - i)
        dz[:, H:2 * H] = dc * cache.c_prev[:, t] * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - gg * gg)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ U
    flat_dz = dz_all.reshape(B * n, 4 * H)
    params.W.grad += flat_dz.T @ cache.x.reshape(B * n, -1)
    params.U.grad += flat_dz.T @ cache.h_prev.reshape(B * n, H)
    params.b.grad += flat_dz.sum(axis=0)
    dx = dz_all @ W
    return dx[0] if squeeze else dx


def reversal_index(lengths: np.ndarray, n: int) -> np.ndarray:
    """Per-row index that reverses the first ``lengths[b]`` steps and fixes padding."""
    t = np.arange(n)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


@dataclass
class BiLstmCache:
    fwd: LstmCache
    bwd: LstmCache
    rev: np.ndarray


def bilstm_forward(fwd: LstmCellParams, bwd: LstmCellParams, x: np.ndarray, lengths=None):
    """Concatenate a forward pass and a per-row reversed pass, forward half first."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    B, n = x.shape[:2]
    lengths = np.full(B, n) if lengths is None else np.asarray(lengths)
    rev = reversal_index(lengths, n)
    rows = np.arange(B)[:, None]
    hf, cf = lstm_forward(fwd, x)
    hb_rev, cb = lstm_forward(bwd, x[rows, rev])
    out = np.concatenate([hf, hb_rev[rows, rev]], axis=2)
    cache = BiLstmCache(cf, cb, rev)
    return (out[0] if squeeze else out), cache


def bilstm_backward(fwd: LstmCellParams, bwd: LstmCellParams, cache: BiLstmCache, dout: np.ndarray) -> np.ndarray:
    squeeze = dout.ndim == 2
    if squeeze:
        dout = dout[None]
    H = fwd.hidden
    rows = np.arange(dout.shape[0])[:, None]
    dx = lstm_backward(fwd, cache.fwd, dout[:, :, :H])
    dx_rev = lstm_backward(bwd, cache.bwd, dout[:, :, H:][rows, cache.rev])
    dx = dx + dx_rev[rows, cache.rev]
    return dx[0] if squeeze else dx
