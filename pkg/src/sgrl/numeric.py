"""Dense numeric primitives shared by every trainable piece of the system.

Tensors are plain ``numpy.ndarray`` values.  Training runs in float32; the
finite-difference checker promotes everything to float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

PROB_CLAMP = 1e-7
NORM_EPS = 1e-12


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class GradCheckError(RuntimeError):
    """Finite-difference probe hit a non-finite loss."""


def affine(W: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``W @ x + b``.  ``x`` may be a single vector or a batch of row vectors."""
    W = np.asarray(W)
    b = np.asarray(b)
    x = np.asarray(x)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1:] != (W.shape[1],):
        raise DimensionError(
            f"affine: W{tuple(W.shape)} b{tuple(b.shape)} x{tuple(x.shape)} do not conform"
        )
    return x @ W.T + b


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    x = np.asarray(x)
    # split branches so exp never overflows
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def l2_normalize(q: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """Row-wise ``q / max(||q||, eps)``; zero rows stay zero."""
    q = np.asarray(q)
    norm = np.sqrt(np.sum(q * q, axis=-1, keepdims=True))
    return q / np.maximum(norm, eps)


def l2_normalize_backward(q, out, d_out, eps: float = NORM_EPS):
    norm = np.sqrt(np.sum(q * q, axis=-1, keepdims=True))
    denom = np.maximum(norm, eps)
    proj = np.sum(out * d_out, axis=-1, keepdims=True)
    return np.where(norm >= eps, (d_out - out * proj) / denom, d_out / denom)


def bce_loss(p, y):
    """Binary cross entropy, averaged when given arrays.  ``p`` is clamped."""
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, param: np.ndarray, **kw) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), **kw)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState):
    """One bias-corrected Adam update.  Returns ``(new_param, state)``; the
    state is updated in place."""
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise DimensionError(
            f"adam_step: param{param.shape} grad{grad.shape} moments{state.m.shape}"
        )
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1**state.step)
    v_hat = state.v / (1 - b2**state.step)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return (param - update).astype(param.dtype, copy=False), state


@dataclass
class Adam:
    """Adam over a named parameter dict."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: dict = field(default_factory=dict)

    def step(self, params: dict, grads: Mapping[str, np.ndarray]) -> None:
        for name, g in grads.items():
            st = self.states.get(name)
            if st is None:
                st = AdamState.like(
                    params[name], lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps
                )
                self.states[name] = st
            params[name], _ = adam_step(params[name], g.astype(params[name].dtype), st)


def grad_check(
    loss_fn: Callable[[dict], tuple[float, dict]],
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Largest ``|analytic - central difference| / max(1, |analytic|)``.

    ``loss_fn(params) -> (loss, grads)``.  Everything is promoted to float64.
    With ``max_coords`` only that many coordinates per tensor are probed,
    chosen by a seeded generator.
    """
    if not 1e-5 <= eps <= 1e-3:
        raise ValueError(f"finite-difference step {eps} outside [1e-5, 1e-3]")
    p64 = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    loss, grads = loss_fn(p64)
    if not np.isfinite(loss):
        raise GradCheckError(f"loss is not finite at the base point: {loss}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, arr in p64.items():
        analytic = np.asarray(grads.get(name, np.zeros_like(arr)), dtype=np.float64)
        flat = arr.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, max_coords, replace=False))
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            up, _ = loss_fn(p64)
            flat[c] = orig - eps
            down, _ = loss_fn(p64)
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise GradCheckError(f"non-finite loss while probing {name}[{c}]")
            fd = (up - down) / (2 * eps)
            a = analytic.reshape(-1)[c]
            worst = max(worst, abs(a - fd) / max(1.0, abs(a)))
    return worst
