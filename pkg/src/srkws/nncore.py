"""Minimal differentiable kernel: dense and temporal-conv layers, activations,
hand-derived reverse-mode gradients, and a finite-difference verifier.

Every ``*_backward`` takes the upstream gradient plus the forward inputs (or
outputs, where that is cheaper) and returns exact gradients. There is no tape;
the model composes these in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ParamStore:
    """Named parameter tensors with matching gradient accumulators."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        value = np.array(value)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def accumulate(self, name: str, grad) -> None:
        slot = self.grads[name]
        grad = np.asarray(grad)
        if grad.shape != slot.shape:
            raise ValueError(f"gradient shape {grad.shape} != parameter shape {slot.shape} for {name!r}")
        slot += grad

    def zero_grads(self) -> None:
        for grad in self.grads.values():
            grad[...] = 0.0

    def grad_snapshot(self) -> dict[str, np.ndarray]:
        return {name: grad.copy() for name, grad in self.grads.items()}

    def copy(self) -> "ParamStore":
        clone = ParamStore()
        for name, value in self.params.items():
            clone.add(name, value.copy())
        return clone

    @property
    def n_params(self) -> int:
        return sum(value.size for value in self.params.values())

    def names(self) -> list[str]:
        return list(self.params)


def dense(x, w, b):
    """y = x @ w + b for x (B, I), w (I, O), b (O,)."""
    x, w, b = np.asarray(x), np.asarray(w), np.asarray(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ValueError(f"dense shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w + b


def dense_backward(g_out, x, w):
    return g_out @ w.T, x.T @ g_out, g_out.sum(axis=0)


def _time_windows(x, kernel_len):
    """(B, T, F) -> contiguous (B, T-K+1, K, F) of sliding windows."""
    view = np.lib.stride_tricks.sliding_window_view(x, kernel_len, axis=1)
    return np.ascontiguousarray(view.transpose(0, 1, 3, 2))


def conv1d_time(x, kernels, bias):
    """Valid temporal cross-correlation.

    x (B, T, F), kernels (K, F, O), bias (O,) -> (B, T-K+1, O).
    """
    x, kernels, bias = np.asarray(x), np.asarray(kernels), np.asarray(bias)
    if x.ndim != 3 or kernels.ndim != 3 or x.shape[2] != kernels.shape[1]:
        raise ValueError(f"conv shape mismatch: x {x.shape}, kernels {kernels.shape}")
    k_len = kernels.shape[0]
    if k_len > x.shape[1]:
        raise ValueError(f"kernel length {k_len} exceeds {x.shape[1]} time frames")
    if bias.shape != (kernels.shape[2],):
        raise ValueError(f"bias shape {bias.shape} does not match {kernels.shape[2]} channels")
    b_sz, t_len, f_len = x.shape
    t_out = t_len - k_len + 1
    windows = _time_windows(x, k_len).reshape(b_sz * t_out, k_len * f_len)
    y = windows @ kernels.reshape(k_len * f_len, kernels.shape[2])
    return y.reshape(b_sz, t_out, -1) + bias


def conv1d_time_backward(g_out, x, kernels):
    b_sz, t_len, f_len = x.shape
    k_len, _, o_len = kernels.shape
    t_out = t_len - k_len + 1
    windows = _time_windows(x, k_len).reshape(b_sz * t_out, k_len * f_len)
    g_mat = g_out.reshape(b_sz * t_out, o_len)
    g_kernels = (windows.T @ g_mat).reshape(k_len, f_len, o_len)
    g_bias = g_mat.sum(axis=0)
    g_windows = (g_mat @ kernels.reshape(k_len * f_len, o_len).T).reshape(b_sz, t_out, k_len, f_len)
    g_x = np.zeros_like(x)
    for k in range(k_len):
        g_x[:, k : k + t_out, :] += g_windows[:, :, k, :]
    return g_x, g_kernels, g_bias


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(g_out, x):
    return np.where(x > 0.0, g_out, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def sigmoid_backward(g_out, out):
    return g_out * out * (1.0 - out)


def softmax(z):
    """Row-wise softmax over the last axis, computed with max subtraction."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=-1, keepdims=True)


def softmax_backward(g_out, out):
    inner = (g_out * out).sum(axis=-1, keepdims=True)
    return out * (g_out - inner)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class GradCheckReport:
    """Per-parameter max relative error between analytic and central-difference gradients."""

    max_rel_error: dict[str, float]
    tolerance: float
    failures: list[str] = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values())

    @property
    def passed(self) -> bool:
        return not self.failures


def finite_diff_check(loss_fn, store: ParamStore, batch, tolerance=1e-4, step=1e-5) -> GradCheckReport:
    """Verify analytic gradients against central differences.

    ``loss_fn(store, batch)`` must return ``(scalar_loss, grads)`` where
    ``grads`` maps every parameter name to its gradient array. Relative error
    uses the denominator ``max(|fd| + |analytic|, 1e-6)`` so near-zero
    gradients are not amplified past finite-difference noise.
    """
    loss, grads = loss_fn(store, batch)
    if not np.isfinite(loss):
        raise ValueError(f"loss is not finite: {loss}")
    report: dict[str, float] = {}
    failures = []
    for name in sorted(store.params):
        values = store.params[name]
        analytic = np.asarray(grads[name], dtype=np.float64)
        fd = np.zeros(values.size)
        flat = values.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            loss_plus, _ = loss_fn(store, batch)
            flat[i] = original - step
            loss_minus, _ = loss_fn(store, batch)
            flat[i] = original
            fd[i] = (loss_plus - loss_minus) / (2.0 * step)
        fd = fd.reshape(values.shape)
        denom = np.maximum(np.abs(fd) + np.abs(analytic), 1e-6)
        rel = float((np.abs(fd - analytic) / denom).max())
        report[name] = rel
        if rel > tolerance:
            failures.append(name)
    return GradCheckReport(max_rel_error=report, tolerance=tolerance, failures=failures)
