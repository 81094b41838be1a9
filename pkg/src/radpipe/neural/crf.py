"""Linear-chain CRF: forward algorithm, marginals, likelihood gradients, Viterbi."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .params import Param


@dataclass(eq=False)
class CrfParams:
    transitions: Param  # [i, j] scores tag j following tag i
    start_scores: Param
    end_scores: Param

    @property
    def num_tags(self) -> int:
        return self.start_scores.shape[0]

    def params(self) -> list[Param]:
        return [self.transitions, self.start_scores, self.end_scores]

    @classmethod
    def zeros(cls, num_tags: int, prefix: str = "crf") -> "CrfParams":
        return cls(
            Param(f"{prefix}.transitions", np.zeros((num_tags, num_tags))),
            Param(f"{prefix}.start", np.zeros(num_tags)),
            Param(f"{prefix}.end", np.zeros(num_tags)),
        )

    @classmethod
    def from_arrays(cls, transitions, start, end) -> "CrfParams":
        return cls(Param("crf.transitions", transitions), Param("crf.start", start), Param("crf.end", end))


def logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _check(crf: CrfParams, emissions: np.ndarray) -> np.ndarray:
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[0] == 0:
        raise ValueError("emissions must be a non-empty (n, T) matrix")
    if emissions.shape[1] != crf.num_tags:
        raise ValueError(f"emissions have {emissions.shape[1]} tags, CRF has {crf.num_tags}")
    return emissions


def _forward(crf: CrfParams, e: np.ndarray) -> np.ndarray:
    trans = crf.transitions.values
    alpha = np.empty_like(e)
    alpha[0] = crf.start_scores.values + e[0]
    for t in range(1, e.shape[0]):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + trans, axis=0) + e[t]
    return alpha


def _backward(crf: CrfParams, e: np.ndarray) -> np.ndarray:
    trans = crf.transitions.values
    beta = np.empty_like(e)
    beta[-1] = crf.end_scores.values
    for t in range(e.shape[0] - 2, -1, -1):
        beta[t] = logsumexp(trans + (e[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def crf_log_partition(crf: CrfParams, emissions: np.ndarray) -> float:
    e = _check(crf, emissions)
    alpha = _forward(crf, e)
    return float(logsumexp(alpha[-1] + crf.end_scores.values, axis=0))


def path_score(crf: CrfParams, emissions: np.ndarray, tags: Sequence[int]) -> float:
    e = _check(crf, emissions)
    tags = np.asarray(tags)
    if len(tags) != e.shape[0]:
        raise ValueError(f"{len(tags)} tags for {e.shape[0]} positions")
    score = crf.start_scores.values[tags[0]] + crf.end_scores.values[tags[-1]]
    score += e[np.arange(len(tags)), tags].sum()
    score += crf.transitions.values[tags[:-1], tags[1:]].sum()
    return float(score)


def crf_marginals(crf: CrfParams, emissions: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Return (unary marginals (n, T), pairwise marginals (n-1, T, T), log Z)."""
    e = _check(crf, emissions)
    alpha = _forward(crf, e)
    beta = _backward(crf, e)
    log_z = float(logsumexp(alpha[-1] + crf.end_scores.values, axis=0))
    unary = np.exp(alpha + beta - log_z)
    pair = np.exp(
        alpha[:-1, :, None]
        + crf.transitions.values[None, :, :]
        + (e[1:] + beta[1:])[:, None, :]
        - log_z
    )
    return unary, pair, log_z


def crf_nll(crf: CrfParams, emissions: np.ndarray, gold_tags: Sequence[int], scale: float = 1.0):
    """Negative log-likelihood of ``gold_tags``.

    Accumulates ``scale`` times the gradient into the CRF parameters and
    returns ``(loss, d_loss/d_emissions * scale)``.
    """
    e = _check(crf, emissions)
    gold = np.asarray(gold_tags)
    unary, pair, log_z = crf_marginals(crf, e)
    loss = log_z - path_score(crf, e, gold)

    n = len(gold)
    d_e = unary.copy()
    d_e[np.arange(n), gold] -= 1.0
    crf.start_scores.grad += scale * unary[0]
    crf.start_scores.grad[gold[0]] -= scale
    crf.end_scores.grad += scale * unary[-1]
    crf.end_scores.grad[gold[-1]] -= scale
    if n > 1:
        crf.transitions.grad += scale * pair.sum(axis=0)
        np.add.at(crf.transitions.grad, (gold[:-1], gold[1:]), -scale)
    return float(loss), scale * d_e


def crf_viterbi(crf: CrfParams, emissions: np.ndarray, mask=None) -> list[int]:
    """Highest-scoring tag path.

    ``mask`` is an optional ``(allowed_transitions, allowed_start, allowed_end)``
    triple of boolean arrays; disallowed entries score -inf. Ties resolve to
    the lower tag id at every backtrack step.
    """
    e = _check(crf, emissions)
    n, T = e.shape
    trans = crf.transitions.values
    start = crf.start_scores.values
    end = crf.end_scores.values
    if mask is not None:
        allowed, allowed_start, allowed_end = mask
        trans = np.where(allowed, trans, -np.inf)
        start = np.where(allowed_start, start, -np.inf)
        end = np.where(allowed_end, end, -np.inf)
    delta = start + e[0]
    back = np.empty((n, T), dtype=np.int64)
    for t in range(1, n):
        cand = delta[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(T)] + e[t]
    final = delta + end
    best = int(np.argmax(final))
    if not np.isfinite(final[best]):
        raise ValueError("every tag path is forbidden by the mask")
    path = [best]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path
