"""Wavelet policy network: learnable redundant lifting over observation
sequences, converters into action space, and lifting synthesis with
cross-attention fusers.

Data flow for ``L`` scales::

    obs -> embed -> [splitter_l -> predict/update]  (l = 1..L, S_s feeds l+1)
        -> converters (S_s^L and every S_d^l)
        -> [inverse update/predict -> fuser]        (l = L..1)
        -> head

No stage subsamples in time, so every stream keeps the input length.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor, UsageError
from .layers import (
    CausalAttentionBlock,
    CausalConv1D,
    ConfigError,
    Linear,
    Module,
)
from .lifting import LiftingStep, get_wavelet

HEAD_KINDS = ("regression", "binned")
LIFT_KINDS = ("learnable", "haar", "db2")


@dataclass
class WaveletPolicyConfig:
    scales: int = 3
    model_width: int = 32
    obs_dim: int = 4
    act_dim: int = 2
    kernel_size: int = 2
    dilation_schedule: Optional[List[int]] = None
    head_count: int = 4
    head_kind: str = "regression"
    bin_count: int = 8
    context_length: int = 32
    conv_depth: int = 2
    converter_kernel: int = 2
    causal: bool = True
    lifting: str = "learnable"
    use_pos_emb: bool = True
    fuser_causal: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.dilation_schedule is None:
            self.dilation_schedule = [2**l for l in range(self.scales)]
        self.dilation_schedule = [int(d) for d in self.dilation_schedule]
        self.validate()

    def validate(self) -> None:
        if self.scales < 1:
            raise ConfigError("scales must be >= 1")
        if len(self.dilation_schedule) != self.scales:
            raise ConfigError(
                f"dilation_schedule has {len(self.dilation_schedule)} entries for {self.scales} scales"
            )
        if any(d < 1 for d in self.dilation_schedule):
            raise ConfigError("dilations must be >= 1")
        if self.context_length < 1:
            raise ConfigError("context_length must be >= 1")
        if self.model_width % self.head_count:
            raise ConfigError(f"model_width {self.model_width} not divisible by head_count {self.head_count}")
        if self.head_kind not in HEAD_KINDS:
            raise ConfigError(f"head_kind must be one of {HEAD_KINDS}")
        if self.lifting not in LIFT_KINDS:
            raise ConfigError(f"lifting must be one of {LIFT_KINDS}")
        if self.head_kind == "binned" and self.bin_count < 1:
            raise ConfigError("bin_count must be >= 1")
        if min(self.obs_dim, self.act_dim, self.kernel_size, self.conv_depth, self.converter_kernel) < 1:
            raise ConfigError("dimensions, kernel sizes and depth must be >= 1")

    def replace(self, **changes) -> "WaveletPolicyConfig":
        if "scales" in changes and "dilation_schedule" not in changes:
            changes["dilation_schedule"] = None
        return dataclasses.replace(self, **changes)


@dataclass
class StreamPair:
    s: Tensor
    d: Tensor
    scale: int


@dataclass
class BinnedOutput:
    logits: Tensor   # [B, T, K]
    offsets: Tensor  # [B, T, K, act_dim]


@dataclass
class NetworkTrace:
    """Intermediate streams of one forward pass, finest scale first.

    ``approx[l]`` is the coarse action stream entering synthesis at scale
    ``l``: the converted coarsest approximation for the last scale and the
    next-coarser fuser output otherwise.  ``details[l]`` is the converted
    detail stream of scale ``l``.
    """

    analysis: List[StreamPair] = field(default_factory=list)
    approx: List[Tensor] = field(default_factory=list)
    details: List[Tensor] = field(default_factory=list)
    synthesis: List[Tuple[Tensor, Tensor]] = field(default_factory=list)
    fused: List[Tensor] = field(default_factory=list)
    output: Optional[Tensor] = None


class LiftNet(Module):
    """Stack of causal dilated convolutions used for P, U and their inverses."""

    def __init__(self, width: int, kernel: int, dilation: int, depth: int, rng, causal: bool = True):
        self.convs = [CausalConv1D(width, width, kernel, dilation, rng, causal) for _ in range(depth)]

    def __call__(self, x: Tensor) -> Tensor:
        for i, conv in enumerate(self.convs):
            if i:
                x = ad.gelu(x)
            x = conv(x)
        return x

    def zero_(self) -> None:
        for conv in self.convs:
            conv.weight.data[...] = 0.0
            conv.bias.data[...] = 0.0


class AnalysisBlock(Module):
    """Splitter, then ``S_d = S_o - P(S_e)``, ``S_s = S_e + U(S_d)``."""

    def __init__(self, cfg: WaveletPolicyConfig, scale: int, rng):
        dil = cfg.dilation_schedule[scale]
        d = cfg.model_width
        self.scale = scale
        self.splitter = CausalAttentionBlock(d, cfg.head_count, rng)
        self.predict = LiftNet(d, cfg.kernel_size, dil, cfg.conv_depth, rng, cfg.causal)
        self.update = LiftNet(d, cfg.kernel_size, dil, cfg.conv_depth, rng, cfg.causal)

    def lift(self, h: Tensor) -> StreamPair:
        s_e, s_o = h, h
        s_d = ad.sub(s_o, self.predict(s_e))
        s_s = ad.add(s_e, self.update(s_d))
        return StreamPair(s_s, s_d, self.scale)

    def __call__(self, x: Tensor) -> StreamPair:
        return self.lift(self.splitter(x))


class SynthesisBlock(Module):
    """``A_e = A_s - U^(A_d)``, ``A_o = A_d + P^(A_e)``."""

    def __init__(self, cfg: WaveletPolicyConfig, scale: int, rng):
        dil = cfg.dilation_schedule[scale]
        d = cfg.model_width
        self.scale = scale
        self.inv_update = LiftNet(d, cfg.kernel_size, dil, cfg.conv_depth, rng, cfg.causal)
        self.inv_predict = LiftNet(d, cfg.kernel_size, dil, cfg.conv_depth, rng, cfg.causal)

    def __call__(self, a_s: Tensor, a_d: Tensor) -> Tuple[Tensor, Tensor]:
        if a_s.shape != a_d.shape:
            raise DimensionError(f"synthesis streams differ: {a_s.shape} vs {a_d.shape}")
        a_e = ad.sub(a_s, self.inv_update(a_d))
        a_o = ad.add(a_d, self.inv_predict(a_e))
        return a_e, a_o


def _causal_lag(k: int, dilation: int) -> int:
    # polyphase offset k (source[n + k]) -> time lag at this dilation; pairs are
    # 2*dilation apart and future offsets move one pair into the past
    if k > 0:
        k -= 1
    return -2 * k * dilation


def _apply_frozen(step: LiftingStep, streams: dict, dilation: int, sign: float) -> None:
    src = streams[step.source]
    acc = None
    for k, c in step.taps:
        term = ad.scale(ad.shift_time(src, _causal_lag(k, dilation)), c)
        acc = term if acc is None else ad.add(acc, term)
    streams[step.target] = ad.add(streams[step.target], ad.scale(acc, sign))


class FixedAnalysisBlock(Module):
    """Learnable splitter followed by a frozen classical lifting.

    The even stream is the splitter output delayed by the scale's dilation
    and the odd stream is the undelayed output, so for Haar
    ``S_d[t] = h[t] - h[t-dil]`` and ``S_s[t] = (h[t] + h[t-dil]) / 2``.
    """

    def __init__(self, cfg: WaveletPolicyConfig, scale: int, rng):
        self.scale = scale
        self.dilation = cfg.dilation_schedule[scale]
        self.wavelet = get_wavelet(cfg.lifting)
        self.splitter = CausalAttentionBlock(cfg.model_width, cfg.head_count, rng)

    def lift(self, h: Tensor) -> StreamPair:
        w = self.wavelet
        streams = {"even": ad.shift_time(h, self.dilation), "odd": h}
        for step in w.steps:
            _apply_frozen(step, streams, self.dilation, +1.0)
        s = ad.scale(streams["even"], w.even_scale)
        d = ad.scale(streams["odd"], w.odd_scale)
        return StreamPair(s, d, self.scale)

    def __call__(self, x: Tensor) -> StreamPair:
        return self.lift(self.splitter(x))


class FixedSynthesisBlock(Module):
    def __init__(self, cfg: WaveletPolicyConfig, scale: int, rng=None):
        self.scale = scale
        self.dilation = cfg.dilation_schedule[scale]
        self.wavelet = get_wavelet(cfg.lifting)

    def __call__(self, a_s: Tensor, a_d: Tensor) -> Tuple[Tensor, Tensor]:
        w = self.wavelet
        streams = {"even": ad.scale(a_s, 1.0 / w.even_scale), "odd": ad.scale(a_d, 1.0 / w.odd_scale)}
        for step in reversed(w.steps):
            _apply_frozen(step, streams, self.dilation, -1.0)
        return streams["even"], streams["odd"]


class WaveletPolicy(Module):
    def __init__(self, cfg: WaveletPolicyConfig, rng: np.random.Generator | None = None):
        cfg.validate()
        self.config = cfg
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        d = cfg.model_width
        self.embed = Linear(cfg.obs_dim, d, rng)
        self.pos_emb = (
            Tensor(rng.normal(0.0, 0.02, size=(cfg.context_length, d)), requires_grad=True)
            if cfg.use_pos_emb
            else None
        )
        fixed = cfg.lifting != "learnable"
        ana_cls = FixedAnalysisBlock if fixed else AnalysisBlock
        syn_cls = FixedSynthesisBlock if fixed else SynthesisBlock
        self.analysis = [ana_cls(cfg, l, rng) for l in range(cfg.scales)]
        self.convert_approx = CausalConv1D(d, d, cfg.converter_kernel, 1, rng)
        self.convert_detail = [CausalConv1D(d, d, cfg.converter_kernel, 1, rng) for _ in range(cfg.scales)]
        self.synthesis = [syn_cls(cfg, l, rng) for l in range(cfg.scales)]
        self.fusers = [
            CausalAttentionBlock(d, cfg.head_count, rng, cross=True, masked=cfg.fuser_causal)
            for _ in range(cfg.scales)
        ]
        if cfg.head_kind == "regression":
            self.head = Linear(d, cfg.act_dim, rng)
        else:
            k = cfg.bin_count
            self.bin_logits = Linear(d, k, rng)
            self.bin_offsets = Linear(d, k * cfg.act_dim, rng)
            self.bin_centers = Tensor(np.zeros((k, cfg.act_dim)))

    # building blocks -----------------------------------------------------

    def embed_obs(self, obs: Tensor) -> Tensor:
        cfg = self.config
        if obs.ndim != 3:
            raise DimensionError(f"observations must be [B, T, obs_dim], got {obs.shape}")
        b, t, od = obs.shape
        if t == 0:
            raise UsageError("empty observation sequence")
        if od != cfg.obs_dim:
            raise DimensionError(f"obs_dim {od} != configured {cfg.obs_dim}")
        if t > cfg.context_length:
            raise UsageError(f"sequence length {t} exceeds context_length {cfg.context_length}")
        x = self.embed(obs)
        if self.pos_emb is not None:
            pos = ad.reshape(ad.getitem(self.pos_emb, slice(0, t)), (1, t, -1))
            x = ad.add(x, ad.concat([pos] * b, axis=0))
        return x

    def head_out(self, h: Tensor):
        cfg = self.config
        if cfg.head_kind == "regression":
            return self.head(h)
        b, t, _ = h.shape
        offsets = ad.reshape(self.bin_offsets(h), (b, t, cfg.bin_count, cfg.act_dim))
        return BinnedOutput(self.bin_logits(h), offsets)

    def set_bin_centers(self, centers: np.ndarray) -> None:
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape != self.bin_centers.shape:
            raise DimensionError(f"bin centres {centers.shape} != {self.bin_centers.shape}")
        self.bin_centers.data = centers.copy()

    # forward -------------------------------------------------------------

    def forward(self, obs) -> Tuple[object, NetworkTrace]:
        obs = obs if isinstance(obs, Tensor) else Tensor(obs)
        cfg = self.config
        trace = NetworkTrace()
        x = self.embed_obs(obs)
        for block in self.analysis:
            pair = block(x)
            trace.analysis.append(pair)
            x = pair.s
        coarse = self.convert_approx(trace.analysis[-1].s)
        trace.details = [conv(p.d) for conv, p in zip(self.convert_detail, trace.analysis)]
        approx: List[Optional[Tensor]] = [None] * cfg.scales
        approx[-1] = coarse
        synth: List = [None] * cfg.scales
        fused: List = [None] * cfg.scales
        cur = coarse
        for l in reversed(range(cfg.scales)):
            a_e, a_o = self.synthesis[l](cur, trace.details[l])
            synth[l] = (a_e, a_o)
            cur = self.fusers[l](a_e, a_o)
            fused[l] = cur
            if l > 0:
                approx[l - 1] = cur
        trace.approx = approx
        trace.synthesis = synth
        trace.fused = fused
        out = self.head_out(cur)
        trace.output = out if isinstance(out, Tensor) else out.logits
        return out, trace

    __call__ = forward

    def predict_next_action(self, history, rng: np.random.Generator | None = None) -> np.ndarray:
        """Action for the last step of an observation window ``[T, obs_dim]``.

        The binned head takes the argmax bin unless ``rng`` is given, in which
        case the bin is sampled from the softmax over bins.
        """
        hist = np.asarray(history, dtype=np.float64)
        if hist.ndim != 2 or hist.shape[0] == 0:
            raise UsageError("history must be a non-empty [T, obs_dim] window")
        hist = hist[-self.config.context_length :]
        with ad.no_grad():
            out, _ = self.forward(Tensor(hist[None]))
        if isinstance(out, Tensor):
            return out.data[0, -1].copy()
        logits = out.logits.data[0, -1]
        if rng is None:
            k = int(np.argmax(logits))
        else:
            p = np.exp(logits - logits.max())
            k = int(rng.choice(p.size, p=p / p.sum()))
        return self.bin_centers.data[k] + out.offsets.data[0, -1, k]

    # test hooks ----------------------------------------------------------

    def zero_lifting_(self) -> None:
        """Zero every P, U, P^, U^ network (learnable lifting only)."""
        for blk in self.analysis:
            if isinstance(blk, AnalysisBlock):
                blk.predict.zero_()
                blk.update.zero_()
        for blk in self.synthesis:
            if isinstance(blk, SynthesisBlock):
                blk.inv_update.zero_()
                blk.inv_predict.zero_()


def build_policy(cfg: WaveletPolicyConfig, rng: np.random.Generator | None = None) -> WaveletPolicy:
    return WaveletPolicy(cfg, rng)


def make_fixed_wavelet_variant(cfg: WaveletPolicyConfig, kind: str, rng=None) -> WaveletPolicy:
    if kind not in ("haar", "db2"):
        raise ConfigError(f"unknown fixed wavelet {kind!r}")
    return WaveletPolicy(cfg.replace(lifting=kind), rng)


def make_noncausal_variant(cfg: WaveletPolicyConfig, rng=None) -> WaveletPolicy:
    return WaveletPolicy(cfg.replace(causal=False), rng)


def make_variant(cfg: WaveletPolicyConfig, variant: str, rng=None) -> WaveletPolicy:
    """``learnable`` | ``noncausal`` | ``haar`` | ``db2``."""
    if variant == "learnable":
        return WaveletPolicy(cfg.replace(lifting="learnable", causal=True), rng)
    if variant == "noncausal":
        return make_noncausal_variant(cfg.replace(lifting="learnable"), rng)
    return make_fixed_wavelet_variant(cfg, variant, rng)


# config files ------------------------------------------------------------------


def _coerce(raw: str, default):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        out[key] = val
    return out


def config_from_dict(raw: dict, base: WaveletPolicyConfig | None = None) -> WaveletPolicyConfig:
    base = base or WaveletPolicyConfig()
    known = {f.name for f in dataclasses.fields(WaveletPolicyConfig)}
    changes = {}
    for key, val in raw.items():
        if key not in known:
            continue
        if key == "dilation_schedule":
            changes[key] = None if str(val).strip().lower() in ("", "none", "auto") else [
                int(v) for v in str(val).split(",")
            ]
        elif isinstance(val, str):
            changes[key] = _coerce(val, getattr(base, key))
        else:
            changes[key] = val
    return base.replace(**changes)


def config_to_text(cfg: WaveletPolicyConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        elif isinstance(val, bool):
            val = str(val).lower()
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def load_config(path) -> WaveletPolicyConfig:
    return config_from_dict(parse_config_text(Path(path).read_text()))
