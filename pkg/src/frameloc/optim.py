"""Adam optimizer and a finite-difference gradient checker.

Both operate on flat dict[str, ndarray] parameter sets so they stay
independent of any particular model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tape, Tensor


class Adam:
    """Adam with bias correction.

    update: m = b1*m + (1-b1)*g ; v = b2*v + (1-b2)*g^2
            theta -= lr * m_hat / (sqrt(v_hat) + eps)
    The instance owns the moment state; step() mutates params in place.
    """

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(grads)
        if missing:
            raise KeyError(f"gradients missing for parameters: {sorted(missing)}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, theta in self.params.items():
            g = grads[name]
            if g.shape != theta.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"'{name}' shape {theta.shape}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            theta -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class GradCheckResult:
    """Worst-case relative error between analytic and numeric gradients."""

    max_rel_err: float
    per_param: dict[str, float]
    worst_param: str = ""
    worst_index: tuple = ()
    entries_checked: int = 0

    def ok(self, tol: float) -> bool:
        return self.max_rel_err < tol


def grad_check(fn: Callable[[dict[str, Tensor]], Tensor],
               params: dict[str, np.ndarray],
               step: float = 1e-5,
               corrupt: tuple[str, int, float] | None = None) -> GradCheckResult:
    """Compare tape gradients of fn against central finite differences.

    fn maps a dict of Tensors (same keys as params) to a scalar Tensor
    and must be deterministic: it is evaluated many times at perturbed
    points. Relative error per entry is |a - n| / max(1e-8, |a| + |n|).

    corrupt=(name, flat_index, delta) shifts one analytic entry before
    comparison; it exists so self-tests can prove the checker catches a
    wrong backward rule.
    """
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}

    tape = Tape()
    tensors = {k: tape.watch(v) for k, v in params.items()}
    loss = fn(tensors)
    if loss.data.shape != ():
        raise ValueError(f"objective must return a scalar, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise FloatingPointError(f"objective is not finite at the start point: {loss.data}")
    tape.backward(loss)
    analytic = {}
    for k, t in tensors.items():
        analytic[k] = np.zeros_like(params[k]) if t.grad is None else t.grad.copy()

    if corrupt is not None:
        name, flat_index, delta = corrupt
        analytic[name].reshape(-1)[flat_index] += delta

    def eval_at(point: dict[str, np.ndarray]) -> float:
        out = fn({k: Tensor(v) for k, v in point.items()})
        value = float(out.data)
        if not np.isfinite(value):
            raise FloatingPointError("objective became non-finite during perturbation")
        return value

    per_param: dict[str, float] = {}
    worst = 0.0
    worst_param = ""
    worst_index: tuple = ()
    checked = 0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        worst_here = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = eval_at(params)
            flat[i] = orig - step
            down = eval_at(params)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            a = analytic[name].reshape(-1)[i]
            rel = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            checked += 1
            if rel > worst_here:
                worst_here = rel
            if rel > worst:
                worst = rel
                worst_param = name
                worst_index = np.unravel_index(i, theta.shape)
        per_param[name] = worst_here
    return GradCheckResult(max_rel_err=worst, per_param=per_param,
                           worst_param=worst_param, worst_index=tuple(int(j) for j in worst_index),
                           entries_checked=checked)
