"""Closed-loop rollouts, the multi-modal entropy metric, causality probes and
the ablation suite."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, UsageError
from .data import (
    FORK_GOAL_RADIUS,
    FORK_OBSTACLE_RADIUS,
    TRACKING_NOISE,
    Dataset,
    Normalizer,
    _tracking_params,
    fork_episode_params,
    fork_path,
    tracking_signal,
)
from .network import WaveletPolicy, WaveletPolicyConfig
from .training import TrainConfig, TrainState, heldout_metrics, train

TRACKING_SUCCESS_MAE = 0.1


def empirical_entropy(labels: Sequence) -> float:
    """Shannon entropy in bits of the observed outcome frequencies."""
    labels = list(labels)
    if not labels:
        raise UsageError("empirical_entropy of an empty list")
    n = len(labels)
    h = 0.0
    for c in Counter(labels).values():
        p = c / n
        h -= p * math.log2(p)
    return h + 0.0


# policies -----------------------------------------------------------------------


class ModelPolicy:
    """Runs a trained network on raw observations.

    ``sample=True`` draws the binned head's bin from its softmax instead of
    taking the argmax; regression heads ignore it.
    """

    def __init__(self, model: WaveletPolicy, obs_norm: Normalizer, act_norm: Normalizer, sample: bool = True):
        self.model, self.obs_norm, self.act_norm, self.sample = model, obs_norm, act_norm, sample

    @classmethod
    def from_state(cls, state: TrainState, sample: bool = True) -> "ModelPolicy":
        return cls(state.model, state.obs_norm, state.act_norm, sample)

    def reset(self, infos) -> None:
        pass

    def act(self, history: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        window = self.obs_norm.normalize(history[:, -self.model.config.context_length:])
        with ad.no_grad():
            out, _ = self.model(Tensor(window))
        if isinstance(out, Tensor):
            z = out.data[:, -1]
        else:
            logits = out.logits.data[:, -1]
            if self.sample:
                p = np.exp(logits - logits.max(axis=-1, keepdims=True))
                p /= p.sum(axis=-1, keepdims=True)
                k = np.array([rng.choice(p.shape[1], p=row) for row in p])
            else:
                k = logits.argmax(axis=-1)
            rows = np.arange(len(k))
            z = self.model.bin_centers.data[k] + out.offsets.data[rows, -1, k]
        return self.act_norm.denormalize(z)


class ZeroPolicy:
    def __init__(self, act_dim: int = 2):
        self.act_dim = act_dim

    def reset(self, infos) -> None:
        pass

    def act(self, history, rng):
        return np.zeros((history.shape[0], self.act_dim))


class ForkOracle:
    """Steers back onto the demonstrated detour (knows each rollout's mode)."""

    def __init__(self, T: int):
        self.T = T
        self.infos: List[dict] = []

    def reset(self, infos) -> None:
        self.infos = list(infos)

    def act(self, history, rng):
        t = history.shape[1]
        out = []
        for info, h in zip(self.infos, history):
            nxt = fork_path(np.asarray(info["goal"]), info["amplitude"], info["side"], [t / self.T])[0]
            out.append(nxt - h[-1, :2])
        return np.asarray(out)


class TrackingOracle:
    def __init__(self):
        self.infos: List[dict] = []

    def reset(self, infos) -> None:
        self.infos = list(infos)

    def act(self, history, rng):
        t = history.shape[1]
        return np.stack([tracking_signal(info["params"], [t])[0] for info in self.infos])


# rollouts -----------------------------------------------------------------------


@dataclass
class RolloutRecord:
    success: bool
    mode: Optional[str]
    ret: float

    def to_dict(self) -> dict:
        return {"success": bool(self.success), "mode": self.mode, "return": float(self.ret)}


def _fork_rollouts(policy, n: int, seed: int, T: int, rng) -> List[RolloutRecord]:
    infos = [fork_episode_params(np.random.default_rng([seed, i])) for i in range(n)]
    policy.reset(infos)
    goals = np.array([info["goal"] for info in infos])
    pos = np.zeros((n, 2))
    hist = np.zeros((n, 0, 4))
    hit = np.zeros(n, dtype=bool)
    lateral = np.zeros(n)
    normals = np.stack([-goals[:, 1], goals[:, 0]], axis=1) / np.linalg.norm(goals, axis=1, keepdims=True)
    for _ in range(T):
        obs = np.concatenate([pos, goals], axis=1)[:, None]
        hist = np.concatenate([hist, obs], axis=1)
        pos = pos + policy.act(hist, rng)
        hit |= np.linalg.norm(pos - goals / 2, axis=1) < FORK_OBSTACLE_RADIUS
        lat = (pos * normals).sum(axis=1)
        lateral = np.where(np.abs(lat) > np.abs(lateral), lat, lateral)
    dist = np.linalg.norm(pos - goals, axis=1)
    records = []
    for i in range(n):
        mode = "left" if lateral[i] > 0 else "right" if lateral[i] < 0 else "none"
        records.append(RolloutRecord(bool(dist[i] < FORK_GOAL_RADIUS and not hit[i]), mode, -float(dist[i])))
    return records


def _tracking_rollouts(policy, n: int, seed: int, T: int, rng, dims: int = 2) -> List[RolloutRecord]:
    infos = []
    signals = []
    for i in range(n):
        r = np.random.default_rng([seed, i])
        params = _tracking_params(r, dims)
        clean = tracking_signal(params, np.arange(T + 1))
        infos.append({"params": params})
        signals.append((clean[:T] + r.normal(0.0, TRACKING_NOISE, (T, dims)), clean[1:]))
    policy.reset(infos)
    obs = np.stack([s[0] for s in signals])
    target = np.stack([s[1] for s in signals])
    err = np.zeros(n)
    for t in range(T):
        a = policy.act(obs[:, : t + 1], rng)
        err += np.abs(a - target[:, t]).mean(axis=1)
    mae = err / T
    return [RolloutRecord(bool(m < TRACKING_SUCCESS_MAE), None, -float(m)) for m in mae]


def rollout(policy, env: str, n_rollouts: int, seed: int, T: int = 32) -> List[RolloutRecord]:
    """Receding-horizon closed loop: one action per step from the latest window.

    Rollout ``i`` draws its initial conditions from ``default_rng([seed, i])``;
    action sampling uses a separate stream seeded by ``seed``.
    """
    rng = np.random.default_rng([seed, 1_000_003])
    if env == "fork":
        return _fork_rollouts(policy, n_rollouts, seed, T, rng)
    if env == "tracking":
        return _tracking_rollouts(policy, n_rollouts, seed, T, rng)
    raise UsageError(f"unknown env {env!r}")


def rollout_report(records: List[RolloutRecord]) -> dict:
    modes = [r.mode for r in records if r.mode is not None]
    report = {
        "rollouts": [r.to_dict() for r in records],
        "success_rate": float(np.mean([r.success for r in records])) if records else 0.0,
    }
    if modes:
        counts = Counter(modes)
        report["mode_frequencies"] = {k: counts[k] / len(modes) for k in sorted(counts)}
        report["entropy"] = empirical_entropy(modes)
    return report


# causality probes -----------------------------------------------------------------


def _outputs(model: WaveletPolicy, obs: np.ndarray) -> np.ndarray:
    with ad.no_grad():
        out, _ = model(Tensor(obs))
    if isinstance(out, Tensor):
        return out.data
    return np.concatenate([out.logits.data, out.offsets.data.reshape(*out.logits.shape[:2], -1)], axis=-1)


def causality_leak(model: WaveletPolicy, obs: np.ndarray, t0: int, rng: np.random.Generator) -> float:
    """Largest change in outputs before ``t0`` when inputs at ``>= t0`` are perturbed."""
    base = _outputs(model, obs)
    pert = obs.copy()
    pert[:, t0:] += rng.normal(0.0, 1.0, size=pert[:, t0:].shape)
    moved = _outputs(model, pert)
    return float(np.max(np.abs(base[:, :t0] - moved[:, :t0]))) if t0 > 0 else 0.0


def causality_probes(model: WaveletPolicy, n_probes: int, seed: int, batch: int = 2) -> float:
    """Max leak over random inputs, lengths and perturbation times."""
    rng = np.random.default_rng(seed)
    cfg = model.config
    worst = 0.0
    for _ in range(n_probes):
        T = int(rng.integers(2, cfg.context_length + 1))
        t0 = int(rng.integers(1, T))
        obs = rng.normal(size=(batch, T, cfg.obs_dim))
        worst = max(worst, causality_leak(model, obs, t0, rng))
    return worst


# ablations ---------------------------------------------------------------------------

ABLATION_VARIANTS = ("learnable", "noncausal", "haar", "db2")
ABLATION_COLUMNS = ["variant", "seed", "val_total", "heldout_mse", "r2", "success_rate", "causal_leak", "params"]


def ablation_suite(
    dataset: Dataset,
    cfg: WaveletPolicyConfig,
    tcfg: TrainConfig,
    seeds: Iterable[int],
    variants: Sequence[str] = ABLATION_VARIANTS,
    n_rollouts: int = 20,
) -> List[dict]:
    """Train every variant under the same budget for each seed."""
    rows = []
    env = dataset.task if dataset.task in ("fork", "tracking") else None
    T = dataset.episodes[0].length
    for seed in seeds:
        for variant in variants:
            vcfg = cfg.replace(seed=int(seed))
            vt = replace(tcfg, seed=int(seed), variant=variant)
            state, log_rows = train(dataset, vcfg, vt)
            _, val = dataset.split(vt.val_fraction, vt.seed)
            metrics = heldout_metrics(state, val)
            vals = [r["val_total"] for r in log_rows if r["val_total"] is not None]
            success = float("nan")
            if env is not None and n_rollouts > 0:
                recs = rollout(ModelPolicy.from_state(state), env, n_rollouts, 10_000 + int(seed), T)
                success = float(np.mean([r.success for r in recs]))
            rows.append({
                "variant": variant,
                "seed": int(seed),
                "val_total": vals[-1] if vals else float("nan"),
                "heldout_mse": metrics["mse"],
                "r2": metrics["r2"],
                "success_rate": success,
                "causal_leak": causality_probes(state.model, 5, int(seed)),
                "params": state.model.num_parameters(),
            })
    return rows


def ablation_summary(rows: List[dict]) -> List[dict]:
    """Mean and (population) std of the numeric columns per variant."""
    out = []
    for variant in dict.fromkeys(r["variant"] for r in rows):
        sub = [r for r in rows if r["variant"] == variant]
        agg = {"variant": variant, "seed": "mean"}
        agg_sd = {"variant": variant, "seed": "std"}
        for col in ABLATION_COLUMNS[2:]:
            vals = np.array([r[col] for r in sub], dtype=np.float64)
            agg[col] = float(vals.mean())
            agg_sd[col] = float(vals.std())
        out += [agg, agg_sd]
    return out


def ablation_csv(rows: List[dict], with_summary: bool = True) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ABLATION_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows + (ablation_summary(rows) if with_summary else []):
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
