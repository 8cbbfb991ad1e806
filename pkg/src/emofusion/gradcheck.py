"""Finite-difference validation of analytic gradients.

The checker is the single instrument used to certify every layer and the
full fusion model: central differences ``(f(p+eps) - f(p-eps)) / (2*eps)``
against the gradients produced by ``Tensor.backward``.  Run it in 64-bit;
finite differences are unreliable in 32-bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import NumericError
from .tensor import Tensor, zero_grad

# Elements where both gradients are this small are compared in absolute
# terms only; protects the relative error from dividing FD noise by ~0.
REL_GUARD = 1e-6


@dataclass
class GradientReport:
    """Per-parameter and aggregate agreement between analytic and FD gradients."""

    per_param: dict[str, tuple[float, float]] = field(default_factory=dict)
    max_abs_err: float = 0.0
    max_rel_err: float = 0.0
    elapsed_s: float = 0.0
    n_elements: int = 0

    def passed(self, rel_tol: float) -> bool:
        return np.isfinite(self.max_rel_err) and self.max_rel_err < rel_tol

    def __str__(self) -> str:
        lines = [
            f"gradient check over {len(self.per_param)} parameter(s), "
            f"{self.n_elements} element(s) in {self.elapsed_s:.2f}s"
        ]
        for name, (abs_e, rel_e) in self.per_param.items():
            lines.append(f"  {name}: max_abs={abs_e:.3e} max_rel={rel_e:.3e}")
        lines.append(f"  overall: max_abs={self.max_abs_err:.3e} max_rel={self.max_rel_err:.3e}")
        return "\n".join(lines)


def _named(params) -> list[tuple[str, Tensor]]:
    if isinstance(params, Mapping):
        return list(params.items())
    out = []
    for i, p in enumerate(params):
        out.append((p.name or f"param{i}", p))
    return out


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor] | Mapping[str, Tensor],
    eps: float = 1e-5,
) -> GradientReport:
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor; it must be
    deterministic (dropout disabled) and close over ``params``, which are
    perturbed in place during the sweep and restored afterwards.
    """
    named = _named(params)
    t0 = time.perf_counter()

    zero_grad(p for _, p in named)
    out = f()
    if not np.isfinite(out.data):
        raise NumericError("finite_diff_check: f returned a non-finite value")
    out.backward()
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in named}

    # FD sweep with graph recording off: halves allocation work per eval.
    flags = [(p, p.requires_grad) for _, p in named]
    for p, _ in flags:
        p.requires_grad = False
    try:
        report = GradientReport()
        for name, p in named:
            if not p.data.flags["C_CONTIGUOUS"]:
                p.data = np.ascontiguousarray(p.data)
            flat = p.data.reshape(-1)  # view: in-place perturbation below
            fd = np.zeros_like(flat)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = float(f().data)
                flat[i] = orig - eps
                lo = float(f().data)
                flat[i] = orig
                if not (np.isfinite(hi) and np.isfinite(lo)):
                    raise NumericError("finite_diff_check: f returned a non-finite value")
                fd[i] = (hi - lo) / (2.0 * eps)
            fd = fd.reshape(p.data.shape)
            a = analytic[name]
            diff = np.abs(a - fd)
            mag = np.maximum(np.abs(a), np.abs(fd))
            abs_err = float(diff.max()) if diff.size else 0.0
            rel = np.where(mag > REL_GUARD, diff / np.maximum(mag, REL_GUARD), 0.0)
            rel_err = float(rel.max()) if rel.size else 0.0
            report.per_param[name] = (abs_err, rel_err)
            report.max_abs_err = max(report.max_abs_err, abs_err)
            report.max_rel_err = max(report.max_rel_err, rel_err)
            report.n_elements += int(flat.size)
    finally:
        for p, had in flags:
            p.requires_grad = had
    report.elapsed_s = time.perf_counter() - t0
    return report
