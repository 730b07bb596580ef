"""Central finite-difference verification of analytic gradients."""

import numpy as np

from .tensor import Tensor


def grad_check(fn, inputs: list[np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between analytic and numeric gradients of `fn`.

    `fn` maps a list of float64 Tensors to a scalar Tensor. Relative error is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) per component.
    """
    tensors = [Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
               for x in inputs]
    out = fn(tensors)
    out.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    worst = 0.0
    for idx, t in enumerate(tensors):
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = fn(tensors).item()
            flat[i] = orig - h
            lo = fn(tensors).item()
            flat[i] = orig
            numeric[i] = (hi - lo) / (2.0 * h)
        a = analytic[idx].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - numeric) / denom)))
    return worst
