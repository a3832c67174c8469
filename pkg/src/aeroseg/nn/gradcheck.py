"""Central finite-difference checks of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_tensor: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return float(diff)
    return float(diff / scale)


def grad_check(fn, tensors: dict[str, Tensor], tolerance: float = 1e-4, h: float = 1e-5) -> GradCheckReport:
    """Compare gradients of the scalar ``fn()`` w.r.t. every tensor in ``tensors``.

    ``fn`` must rebuild its graph from the current ``.data`` of the tensors on
    every call. Relative error is ``|g_ad - g_fd| / max(|g_ad|, |g_fd|)`` in the
    2-norm over each tensor.
    """
    for t in tensors.values():
        t.grad = None
    out = fn()
    out.backward()
    report = GradCheckReport(0.0, tolerance=tolerance)
    for name, t in tensors.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = fn().item()
            flat[i] = orig - h
            minus = fn().item()
            flat[i] = orig
            num_flat[i] = (plus - minus) / (2.0 * h)
        err = _rel_error(analytic, numeric)
        report.per_tensor[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
    return report


def projection_loss(out: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar sum(out * weights): a generic probe for layer outputs."""
    return (out * weights).sum()


def layer_grad_check(layer, inputs: dict[str, Tensor], call, tolerance: float = 1e-4, seed: int = 0):
    """Finite-difference check of every parameter of ``layer`` and each input.

    ``call()`` evaluates the layer on the inputs; its output is reduced with a
    fixed random projection so every output entry contributes.
    """
    for v in inputs.values():
        v.requires_grad = True
    rng = np.random.default_rng(seed)
    probe = rng.normal(size=call().shape)
    tensors = dict(layer.named_parameters()) if layer is not None else {}
    tensors.update({f"input:{k}": v for k, v in inputs.items()})
    return grad_check(lambda: projection_loss(call(), probe), tensors, tolerance)
