"""Seeded property suites: lifting, causality, gradcheck, inversion.

Each suite returns a list of :class:`Check` results; the CLI prints them and
exits non-zero if any fails.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import CausalAttentionBlock, CausalConv1D, causal_moving_average, smooth_l1
from .lifting import analysis, synthesis
from .losses import compute_loss
from .network import AnalysisBlock, SynthesisBlock, WaveletPolicy, WaveletPolicyConfig, make_variant
from .evaluation import causality_probes


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (limit {self.limit:.0e})"


def lifting_suite(seeds: int = 100, max_len: int = 256) -> List[Check]:
    checks = []
    for kind in ("haar", "db2"):
        worst = 0.0
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            for n in range(2, max_len + 1, 2):
                x = rng.standard_normal(n)
                worst = max(worst, float(np.max(np.abs(synthesis(analysis(x, kind), kind) - x))))
        checks.append(Check(f"perfect reconstruction {kind}", worst < 1e-10, worst, 1e-10))
    return checks


def causality_suite(variant: str = "learnable", probes: int = 200, seed: int = 0) -> List[Check]:
    """Perturb-future probes over configs with 1-3 scales and mixed dilations."""
    rng = np.random.default_rng(seed)
    schedules = {1: [[1], [3]], 2: [[1, 2], [2, 1], [1, 3]], 3: [[1, 2, 4], [3, 1, 2], [1, 1, 1]]}
    worst = 0.0
    per_model = 10
    for i in range(probes // per_model):
        scales = int(rng.integers(1, 4))
        sched = schedules[scales][int(rng.integers(len(schedules[scales])))]
        cfg = WaveletPolicyConfig(
            scales=scales, model_width=8, head_count=2, obs_dim=3, act_dim=2, context_length=16,
            dilation_schedule=sched, kernel_size=int(rng.integers(2, 4)),
            head_kind="binned" if i % 2 else "regression", bin_count=3, seed=int(rng.integers(1 << 30)),
        )
        model = make_variant(cfg, variant)
        worst = max(worst, causality_probes(model, per_model, int(rng.integers(1 << 30))))
    return [Check(f"end-to-end causality ({variant})", worst < 1e-12, worst, 1e-12)]


def _layer_checks(rng: np.random.Generator, coords: int) -> Dict[str, float]:
    errs = {}
    x = Tensor(rng.standard_normal((2, 6, 4)))
    conv = CausalConv1D(4, 3, 3, 2, rng)
    errs["conv input"] = ad.grad_check(lambda t: ad.sum(ad.tanh(conv(t))), x)
    errs["conv weight"] = ad.grad_check(lambda w: ad.sum(ad.tanh(conv(x))), conv.weight)
    block = CausalAttentionBlock(8, 2, rng)
    y = Tensor(rng.standard_normal((2, 5, 8)))
    c = Tensor(rng.standard_normal((2, 5, 8)))
    errs["self-attention input"] = ad.grad_check(lambda t: ad.sum(ad.mul(block(t), c)), y)
    cross = CausalAttentionBlock(8, 2, rng, cross=True)
    kv = Tensor(rng.standard_normal((2, 5, 8)))
    errs["cross-attention query"] = ad.grad_check(lambda t: ad.sum(ad.mul(cross(t, kv), c)), y)
    errs["cross-attention kv"] = ad.grad_check(lambda t: ad.sum(ad.mul(cross(y, t), c)), kv)
    z = Tensor(rng.standard_normal((2, 7, 3)) * 2)
    errs["moving average"] = ad.grad_check(lambda t: smooth_l1(causal_moving_average(t, 3)), z)
    errs["smooth-l1"] = ad.grad_check(smooth_l1, z)
    return errs


def tiny_network(head_kind: str = "regression", seed: int = 0) -> WaveletPolicy:
    cfg = WaveletPolicyConfig(scales=2, model_width=8, head_count=2, obs_dim=3, act_dim=2,
                              context_length=4, head_kind=head_kind, bin_count=3, seed=seed)
    return WaveletPolicy(cfg)


def network_gradcheck(model: WaveletPolicy, seed: int = 1, coords: int | None = 8) -> Dict[str, float]:
    """Relative gradient error of the full total loss for every parameter tensor.

    ``coords`` central-difference coordinates are drawn per tensor (all of
    them when ``None``); every tensor also gets a random-direction check that
    covers all of its coordinates at once.
    """
    from .losses import assign_bins

    rng = np.random.default_rng(seed)
    cfg = model.config
    obs = rng.standard_normal((2, cfg.context_length, cfg.obs_dim))
    act = rng.standard_normal((2, cfg.context_length, cfg.act_dim))
    if cfg.head_kind == "binned":
        model.set_bin_centers(rng.standard_normal((cfg.bin_count, cfg.act_dim)))
        target = assign_bins(act, model.bin_centers.data)
    else:
        target = Tensor(act)

    def f(_):
        out, trace = model(Tensor(obs))
        return compute_loss(out, trace, target, cfg.head_kind).total

    errs = {}
    for name, p in model.named_parameters():
        idx = None
        if coords is not None and p.size > coords:
            flat = rng.choice(p.size, size=coords, replace=False)
            idx = [np.unravel_index(int(i), p.shape) for i in sorted(flat)]
        coord_err = ad.grad_check(f, p, indices=idx)
        dir_err = ad.directional_grad_check(f, p, rng)
        errs[name] = max(coord_err, dir_err)
    return errs


def gradcheck_suite(seed: int = 0, coords: int | None = 8) -> List[Check]:
    rng = np.random.default_rng(seed)
    checks = [Check(f"gradcheck {k}", v < 1e-5, v, 1e-5) for k, v in _layer_checks(rng, coords).items()]
    for head in ("regression", "binned"):
        errs = network_gradcheck(tiny_network(head, seed), seed + 1, coords)
        worst = max(errs.values())
        checks.append(Check(f"gradcheck full total loss ({head} head)", worst < 1e-5, worst, 1e-5))
    return checks


def inversion_error(scales: int, T: int, seed: int) -> float:
    """Analysis block then a synthesis block sharing its P/U weights."""
    rng = np.random.default_rng(seed)
    cfg = WaveletPolicyConfig(scales=scales, model_width=8, head_count=2, obs_dim=3, act_dim=2,
                              context_length=T, seed=seed)
    worst = 0.0
    x = Tensor(rng.standard_normal((2, T, 8)))
    for l in range(scales):
        ana = AnalysisBlock(cfg, l, rng)
        syn = SynthesisBlock(cfg, l, rng)
        syn.inv_update, syn.inv_predict = ana.update, ana.predict
        h = ana.splitter(x)
        pair = ana.lift(h)
        a_e, a_o = syn(pair.s, pair.d)
        worst = max(worst, float(np.max(np.abs(a_e.data - h.data))), float(np.max(np.abs(a_o.data - h.data))))
        x = pair.s
    return worst


def inversion_suite(seed: int = 0) -> List[Check]:
    worst = 0.0
    for scales in (1, 2, 3):
        for T in (4, 8, 16):
            worst = max(worst, inversion_error(scales, T, seed + 10 * scales + T))
    return [Check("analysis/synthesis inversion", worst < 1e-9, worst, 1e-9)]


SUITES: Dict[str, Callable[..., List[Check]]] = {
    "lifting": lifting_suite,
    "causality": causality_suite,
    "gradcheck": gradcheck_suite,
    "inversion": inversion_suite,
}
