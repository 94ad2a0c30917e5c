"""Training objective: task loss plus approximation and detail regularizers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor, UsageError
from .layers import ConfigError, causal_moving_average, smooth_l1
from .network import BinnedOutput, NetworkTrace

DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 0.1
DEFAULT_WINDOW = 2


@dataclass
class LossReport:
    task: Tensor
    approx: Tensor
    detail: Tensor
    total: Tensor
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def values(self) -> dict:
        return {
            "task": float(self.task.data),
            "approx": float(self.approx.data),
            "detail": float(self.detail.data),
            "total": float(self.total.data),
        }


@dataclass
class BinnedTarget:
    """Per-step bin index ``[B, T]`` and residual from that bin's centre ``[B, T, act_dim]``."""

    bins: np.ndarray
    residual: np.ndarray


def assign_bins(actions: np.ndarray, centers: np.ndarray) -> BinnedTarget:
    a = np.asarray(actions, dtype=np.float64)
    dist = ((a[..., None, :] - centers) ** 2).sum(axis=-1)
    bins = dist.argmin(axis=-1)
    return BinnedTarget(bins, a - centers[bins])


def _as_scalar_tensor(v) -> Tensor:
    return v if isinstance(v, Tensor) else Tensor(float(v))


def loss_task(pred, target, head_kind: str = "regression") -> Tensor:
    """Regression: MSE over every element.  Binned: mean cross-entropy over
    steps plus the per-step smooth-L1 of the predicted offset error for the
    target bin."""
    if head_kind == "regression":
        target = target if isinstance(target, Tensor) else Tensor(target)
        if pred.shape != target.shape:
            raise DimensionError(f"prediction {pred.shape} vs target {target.shape}")
        return ad.mean(ad.square(ad.sub(pred, target)))
    if head_kind != "binned":
        raise ConfigError(f"unknown head kind {head_kind!r}")
    if not isinstance(pred, BinnedOutput) or not isinstance(target, BinnedTarget):
        raise UsageError("binned loss needs BinnedOutput and BinnedTarget")
    b, t, k = pred.logits.shape
    if target.bins.shape != (b, t):
        raise DimensionError(f"bin targets {target.bins.shape} vs logits {pred.logits.shape}")
    onehot = np.zeros((b, t, k))
    np.put_along_axis(onehot, target.bins[..., None], 1.0, axis=-1)
    ce = ad.scale(ad.sum(ad.mul(ad.log_softmax(pred.logits, -1), Tensor(onehot))), -1.0 / (b * t))
    # offset of the target bin: mask the K axis then sum it out
    chosen = ad.sum(ad.mul(pred.offsets, Tensor(np.broadcast_to(onehot[..., None], pred.offsets.shape))), axis=2)
    off = ad.scale(smooth_l1(ad.sub(chosen, Tensor(target.residual))), 1.0 / (b * t))
    return ad.add(ce, off)


def loss_approx(trace: NetworkTrace, window: int = DEFAULT_WINDOW) -> Tensor:
    """Sum over adjacent scales of smooth-L1(C(finer) - coarser), per batch element."""
    streams = trace.approx
    if not streams or any(s is None for s in streams):
        raise UsageError("trace has no approximation streams")
    if len(streams) < 2:
        return Tensor(0.0)
    batch = streams[0].shape[0]
    total = None
    for finer, coarser in zip(streams[:-1], streams[1:]):
        term = smooth_l1(ad.sub(causal_moving_average(finer, window), coarser))
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / batch)


def loss_detail(trace: NetworkTrace) -> Tensor:
    if not trace.details:
        raise UsageError("trace has no detail streams")
    batch = trace.details[0].shape[0]
    total = None
    for d in trace.details:
        term = smooth_l1(d)
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / batch)


def total_loss(task, approx, detail, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
               include_task: bool = True) -> LossReport:
    """``task + alpha*approx + beta*detail``.

    ``include_task=False`` swaps the task term for the approximation term,
    giving ``approx + alpha*approx + beta*detail``.
    """
    if alpha < 0 or beta < 0:
        raise ConfigError("loss weights must be non-negative")
    task, approx, detail = (_as_scalar_tensor(v) for v in (task, approx, detail))
    reg = ad.add(ad.scale(approx, alpha), ad.scale(detail, beta))
    if include_task:
        total = ad.add(task, reg)
    else:
        total = ad.add(approx, reg)
    return LossReport(task, approx, detail, total, alpha, beta)


def compute_loss(output, trace: NetworkTrace, target, head_kind: str,
                 alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                 window: int = DEFAULT_WINDOW, include_task: bool = True) -> LossReport:
    return total_loss(
        loss_task(output, target, head_kind),
        loss_approx(trace, window),
        loss_detail(trace),
        alpha,
        beta,
        include_task,
    )
