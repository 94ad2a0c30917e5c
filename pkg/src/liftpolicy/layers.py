"""Learnable building blocks: causal dilated convolution, causal attention,
causal moving average and the smooth-L1 penalty.

Sequences are laid out ``[batch, time, channels]`` throughout.
"""

from __future__ import annotations

from typing import Dict, Iterator, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor, UsageError

MASK_VALUE = -1e30


class ConfigError(ValueError):
    """Invalid layer or model configuration."""


class Module:
    """Parameter container.

    Attributes holding a ``Tensor`` with ``requires_grad`` are parameters;
    attributes holding a ``Module`` (or a list of them) are recursed into.
    Names follow attribute order, e.g. ``scales.0.predict.conv0.weight``.
    """

    def named_tensors(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        """Parameters plus non-trainable tensors (buffers such as bin centres)."""
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_tensors(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_tensors(f"{name}.{i}.")

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        return ((k, v) for k, v in self.named_tensors(prefix) if v.requires_grad)

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_tensors()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_tensors())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in own.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise DimensionError(f"{k}: checkpoint shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.weight = _uniform(rng, (in_dim, out_dim), in_dim)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True) if bias else None
        self.in_dim, self.out_dim = in_dim, out_dim

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise DimensionError(f"Linear expects {self.in_dim} features, got {x.shape[-1]}")
        y = ad.matmul(x, self.weight)
        return ad.add_bias(y, self.bias) if self.bias is not None else y


class CausalConv1D(Module):
    """Dilated 1-D convolution over time.

    Tap ``i`` reads ``x[t - i*dilation]`` so with ``causal=True`` the output
    at ``t`` depends only on inputs at ``t`` and earlier; missing past samples
    are zeros.  ``causal=False`` centres the taps instead (the non-causal
    ablation), which reads up to ``ceil((k-1)*dilation/2)`` steps ahead.
    """

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel_size: int,
        dilation: int = 1,
        rng: np.random.Generator | None = None,
        causal: bool = True,
    ):
        if kernel_size < 1 or dilation < 1:
            raise ConfigError("kernel_size and dilation must be >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = _uniform(rng, (out_ch, in_ch, kernel_size), in_ch * kernel_size)
        self.bias = Tensor(np.zeros(out_ch), requires_grad=True)
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel_size, self.dilation, self.causal = kernel_size, dilation, causal

    @property
    def lags(self) -> list[int]:
        lead = 0 if self.causal else -(-(self.kernel_size - 1) * self.dilation // 2)
        return [i * self.dilation - lead for i in range(self.kernel_size)]

    def __call__(self, x: Tensor) -> Tensor:
        return causal_dilated_conv(x, self)


def causal_dilated_conv(x: Tensor, layer: CausalConv1D) -> Tensor:
    if x.ndim != 3:
        raise DimensionError(f"expected [B, T, C], got {x.shape}")
    if x.shape[-1] != layer.in_ch:
        raise DimensionError(f"conv expects {layer.in_ch} channels, got {x.shape[-1]}")
    k, cin, cout = layer.kernel_size, layer.in_ch, layer.out_ch
    taps = [ad.shift_time(x, lag) for lag in layer.lags]
    stacked = taps[0] if k == 1 else ad.concat(taps, axis=-1)
    # [out, in, k] -> [k*in, out], matching the tap-major concat order
    w = ad.reshape(ad.transpose(layer.weight, (2, 1, 0)), (k * cin, cout))
    return ad.add_bias(ad.matmul(stacked, w), layer.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias, self.eps)


def causal_mask(t: int) -> np.ndarray:
    return np.triu(np.full((t, t), MASK_VALUE), k=1)


class CausalAttentionBlock(Module):
    """Pre-norm Transformer block with a lower-triangular attention mask.

    Used as self-attention (splitter) or cross-attention (fuser).  For cross
    attention the key/value sequence gets its own normalization.
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        rng: np.random.Generator,
        cross: bool = False,
        masked: bool = True,
        ff_mult: int = 4,
    ):
        if heads < 1 or dim % heads:
            raise ConfigError(f"model width {dim} is not divisible by {heads} heads")
        self.dim, self.heads, self.cross, self.masked = dim, heads, cross, masked
        self.norm_q = LayerNorm(dim)
        self.norm_kv = LayerNorm(dim) if cross else None
        self.query = Linear(dim, dim, rng)
        # a key bias shifts every score in a row equally; softmax cancels it
        self.key = Linear(dim, dim, rng, bias=False)
        self.value = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng)
        self.norm_ff = LayerNorm(dim)
        self.ff_in = Linear(dim, ff_mult * dim, rng)
        self.ff_out = Linear(ff_mult * dim, dim, rng)

    def _heads(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return ad.transpose(ad.reshape(x, (b, t, self.heads, self.dim // self.heads)), (0, 2, 1, 3))

    def attend(self, q_in: Tensor, kv_in: Tensor) -> Tensor:
        b, t, d = q_in.shape
        dh = d // self.heads
        q = self._heads(self.query(q_in))
        k = self._heads(self.key(kv_in))
        v = self._heads(self.value(kv_in))
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        if self.masked:
            scores = ad.add_const(scores, causal_mask(t))
        ctx = ad.matmul(ad.softmax(scores, axis=-1), v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, t, d))
        return self.out(ctx)

    def feedforward(self, h: Tensor) -> Tensor:
        return self.ff_out(ad.gelu(self.ff_in(self.norm_ff(h))))

    def __call__(self, x: Tensor, kv: Tensor | None = None) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.dim:
            raise DimensionError(f"attention expects [B, T, {self.dim}], got {x.shape}")
        if self.cross:
            if kv is None or kv.shape != x.shape:
                raise DimensionError(f"cross attention needs matching kv, got {None if kv is None else kv.shape}")
            h = ad.add(x, self.attend(self.norm_q(x), self.norm_kv(kv)))
        else:
            xn = self.norm_q(x)
            h = ad.add(x, self.attend(xn, xn))
        return ad.add(h, self.feedforward(h))


def causal_self_attention(x: Tensor, block: CausalAttentionBlock) -> Tensor:
    return block(x)


def causal_cross_attention(q_seq: Tensor, kv_seq: Tensor, block: CausalAttentionBlock) -> Tensor:
    if q_seq.shape != kv_seq.shape:
        raise DimensionError(f"query {q_seq.shape} and key/value {kv_seq.shape} differ")
    return block(q_seq, kv_seq)


def moving_average_matrix(t: int, window: int) -> np.ndarray:
    """Row ``i`` averages columns ``max(0, i-window+1) .. i``."""
    if window < 1:
        raise ConfigError("moving-average window must be >= 1")
    m = np.zeros((t, t))
    for i in range(t):
        lo = max(0, i - window + 1)
        m[i, lo : i + 1] = 1.0 / (i + 1 - lo)
    return m


def causal_moving_average(x: Tensor, window: int) -> Tensor:
    """Trailing mean over ``window`` steps; the window shrinks near ``t = 0``."""
    if x.ndim != 3:
        raise DimensionError(f"expected [B, T, C], got {x.shape}")
    m = Tensor(moving_average_matrix(x.shape[1], window))
    return ad.matmul(m, x)


def smooth_l1(x: Tensor) -> Tensor:
    """Sum of the Huber penalty (threshold 1) over all elements."""
    return ad.sum(ad.huber(x, 1.0))


__all__ = [
    "ConfigError",
    "Module",
    "Linear",
    "LayerNorm",
    "CausalConv1D",
    "CausalAttentionBlock",
    "causal_dilated_conv",
    "causal_self_attention",
    "causal_cross_attention",
    "causal_mask",
    "causal_moving_average",
    "moving_average_matrix",
    "smooth_l1",
    "UsageError",
]
