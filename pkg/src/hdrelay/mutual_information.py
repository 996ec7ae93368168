"""Mutual information of a DMC and its capacity via Blahut-Arimoto.

All quantities are in bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel_model import StateChannel

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class CapacityResult:
    capacity_bits: float
    argmax: np.ndarray
    lower_bound: float
    upper_bound: float
    iterations: int
    converged: bool
    history: tuple[tuple[float, float], ...] = field(default=(), repr=False)

    @property
    def gap(self) -> float:
        return self.upper_bound - self.lower_bound


def _as_matrix(ch) -> np.ndarray:
    return ch.transition if isinstance(ch, StateChannel) else np.atleast_2d(np.asarray(ch, float))


def _divergences(p_x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """D(W(.|x) || q) in bits for every input x, where q = p_x W."""
    q = p_x @ w
    pos = w > 0
    ratio = np.ones_like(w)
    # q(y) = 0 only for outputs reached by unused inputs, whose
    # divergence is infinite and never weighted
    with np.errstate(divide="ignore"):
        np.divide(w, np.broadcast_to(q, w.shape), out=ratio, where=pos)
        logs = np.where(pos, np.log2(ratio), 0.0)
    return np.sum(w * logs, axis=1)


def mutual_information(p_x, ch) -> float:
    """I(X;Y) in bits for input law ``p_x`` over channel ``ch``.

    Terms with p(x) = 0 or p(y|x) = 0 contribute nothing.
    """
    w = _as_matrix(ch)
    p = np.asarray(p_x, dtype=float)
    if p.ndim != 1 or p.shape[0] != w.shape[0]:
        raise ValueError(f"input distribution of length {p.shape} does not match channel with {w.shape[0]} inputs")
    d = _divergences(p, w)
    used = p > 0
    return float(max(np.sum(p[used] * d[used]), 0.0))


def blahut_arimoto(
    ch,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    keep_history: bool = False,
) -> CapacityResult:
    """Capacity max_p I(X;Y) of a discrete memoryless channel.

    Alternates between the output law induced by the current input law and
    the multiplicative update p(x) <- p(x) 2^{D(x)} / Z. At each step the
    capacity is bracketed by

        I(p) <= C <= max_x D(W(.|x) || pW)

    and iteration stops once the bracket is narrower than ``tol``. Hitting
    ``max_iter`` is not an error; the returned bounds report the slack.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    w = _as_matrix(ch)
    n_in = w.shape[0]
    p = np.full(n_in, 1.0 / n_in)
    history = []
    it = 0
    while True:
        d = _divergences(p, w)
        used = p > 0
        lower = float(np.sum(p[used] * d[used]))
        upper = float(np.max(d))
        if keep_history:
            history.append((lower, upper))
        if upper - lower <= tol or it >= max_iter:
            break
        # shift by the max exponent to avoid overflow in 2**d
        p = p * np.exp2(d - upper)
        p = p / p.sum()
        it += 1
    lower = max(lower, 0.0)
    upper = max(upper, lower)
    return CapacityResult(
        capacity_bits=lower,
        argmax=p,
        lower_bound=lower,
        upper_bound=upper,
        iterations=it,
        converged=upper - lower <= tol,
        history=tuple(history),
    )
