"""Behavior-cloning training loop with Adam, held-out evaluation and
resumable checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.cluster.vq import kmeans2

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import decode_arrays, encode_arrays, load_checkpoint, save_checkpoint
from .data import Dataset, Normalizer
from .layers import ConfigError
from .losses import BinnedTarget, LossReport, assign_bins, compute_loss
from .network import WaveletPolicy, WaveletPolicyConfig, make_variant

log = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "epoch", "task", "approx", "detail", "total", "val_total"]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    alpha: float = 0.1
    beta: float = 0.1
    ma_window: int = 2
    include_task: bool = True
    val_fraction: float = 0.1
    seed: int = 0
    variant: str = "learnable"
    check_finite: bool = False

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.batch_size < 1 or self.epochs < 0 or self.lr <= 0:
            raise ConfigError("batch_size >= 1, epochs >= 0 and lr > 0 required")


def train_config_from_dict(raw: dict, base: TrainConfig | None = None) -> TrainConfig:
    base = base or TrainConfig()
    changes = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name not in raw:
            continue
        val, default = raw[f.name], getattr(base, f.name)
        if isinstance(val, str):
            if isinstance(default, bool):
                val = val.strip().lower() in ("true", "1", "yes", "on")
            elif isinstance(default, int):
                val = int(val)
            elif isinstance(default, float):
                val = float(val)
            else:
                val = val.strip()
        changes[f.name] = val
    return dataclasses.replace(base, **changes)


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, named_params: List[Tuple[str, Tensor]], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(named_params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def state(self) -> dict:
        return {"t": self.t, "m": encode_arrays(self.m), "v": encode_arrays(self.v)}

    def load(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = decode_arrays(state["m"])
        self.v = decode_arrays(state["v"])


@dataclass
class TrainState:
    model: WaveletPolicy
    optimizer: Adam
    train_cfg: TrainConfig
    obs_norm: Normalizer
    act_norm: Normalizer
    step: int = 0
    log_rows: List[Dict] = field(default_factory=list)

    @property
    def config(self) -> WaveletPolicyConfig:
        return self.model.config

    def save(self, path) -> None:
        extra = {
            "step": self.step,
            "train_config": dataclasses.asdict(self.train_cfg),
            "adam": self.optimizer.state(),
            "obs_norm": self.obs_norm.to_dict(),
            "act_norm": self.act_norm.to_dict(),
        }
        save_checkpoint(path, self.config, self.model.state_dict(), extra)


def load_state(path) -> TrainState:
    cfg_dict, params, extra = load_checkpoint(path)
    cfg = WaveletPolicyConfig(**cfg_dict)
    model = WaveletPolicy(cfg)
    model.load_state_dict(params)
    tcfg = TrainConfig(**extra.get("train_config", {}))
    opt = Adam(list(model.named_parameters()), tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
    if "adam" in extra:
        opt.load(extra["adam"])
    obs_norm = Normalizer.from_dict(extra["obs_norm"]) if "obs_norm" in extra else Normalizer.identity(cfg.obs_dim)
    act_norm = Normalizer.from_dict(extra["act_norm"]) if "act_norm" in extra else Normalizer.identity(cfg.act_dim)
    return TrainState(model, opt, tcfg, obs_norm, act_norm, int(extra.get("step", 0)))


def fit_bins(actions: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means centroids of (normalized) actions, seeded for repeatability."""
    flat = np.asarray(actions, dtype=np.float64).reshape(-1, actions.shape[-1])
    centers, _ = kmeans2(flat, k, minit="++", seed=np.random.default_rng(seed))
    return centers


def make_target(model: WaveletPolicy, act: np.ndarray):
    if model.config.head_kind == "binned":
        return assign_bins(act, model.bin_centers.data)
    return Tensor(act)


def batch_loss(model: WaveletPolicy, obs: np.ndarray, act: np.ndarray, tcfg: TrainConfig) -> LossReport:
    out, trace = model(Tensor(obs))
    return compute_loss(out, trace, make_target(model, act), model.config.head_kind,
                        tcfg.alpha, tcfg.beta, tcfg.ma_window, tcfg.include_task)


def evaluate(model: WaveletPolicy, obs: np.ndarray, act: np.ndarray, tcfg: TrainConfig,
             batch_size: int = 256) -> Dict[str, float]:
    """Loss terms averaged over batches (weighted by batch size)."""
    totals = {"task": 0.0, "approx": 0.0, "detail": 0.0, "total": 0.0}
    n = len(obs)
    with ad.no_grad():
        for lo in range(0, n, batch_size):
            rep = batch_loss(model, obs[lo:lo + batch_size], act[lo:lo + batch_size], tcfg)
            w = min(batch_size, n - lo) / n
            for k, v in rep.values().items():
                totals[k] += w * v
    return totals


def predict_actions(model: WaveletPolicy, obs: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Point predictions for every step (binned head: argmax bin + offset)."""
    preds = []
    with ad.no_grad():
        for lo in range(0, len(obs), batch_size):
            out, _ = model(Tensor(obs[lo:lo + batch_size]))
            if isinstance(out, Tensor):
                preds.append(out.data)
            else:
                k = out.logits.data.argmax(axis=-1)
                centers = model.bin_centers.data[k]
                off = np.take_along_axis(out.offsets.data, k[..., None, None], axis=2)[:, :, 0]
                preds.append(centers + off)
    return np.concatenate(preds)


def heldout_metrics(state: TrainState, data: Dataset) -> Dict[str, float]:
    """MSE of point predictions in raw action units, against target variance."""
    obs = state.obs_norm.normalize(np.stack([e.observations for e in data.episodes]))
    target = np.stack([e.actions for e in data.episodes])
    pred = state.act_norm.denormalize(predict_actions(state.model, obs))
    mse = float(np.mean((pred - target) ** 2))
    var = float(np.mean(target.reshape(-1, target.shape[-1]).var(axis=0)))
    return {"mse": mse, "target_var": var, "r2": 1.0 - mse / var}


def init_state(train_ds: Dataset, cfg: WaveletPolicyConfig, tcfg: TrainConfig) -> TrainState:
    if cfg.obs_dim != train_ds.obs_dim or cfg.act_dim != train_ds.act_dim:
        raise ConfigError(
            f"config dims (obs {cfg.obs_dim}, act {cfg.act_dim}) do not match dataset "
            f"(obs {train_ds.obs_dim}, act {train_ds.act_dim})"
        )
    model = make_variant(cfg, tcfg.variant, np.random.default_rng(cfg.seed))
    if train_ds.obs_norm is None:
        train_ds.fit_normalizers()
    if cfg.head_kind == "binned":
        _, act = train_ds.arrays()
        model.set_bin_centers(fit_bins(act, cfg.bin_count, cfg.seed))
    opt = Adam(list(model.named_parameters()), tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
    return TrainState(model, opt, tcfg, train_ds.obs_norm, train_ds.act_norm)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def train(
    dataset: Dataset,
    cfg: WaveletPolicyConfig,
    tcfg: TrainConfig | None = None,
    state: TrainState | None = None,
    max_steps: int | None = None,
) -> Tuple[TrainState, List[Dict]]:
    """Minibatch behavior cloning of the total loss.

    Batch order in epoch ``e`` is ``default_rng([seed, e])``'s permutation of
    the training episodes, so a run is fully determined by the global step;
    passing a restored ``state`` resumes exactly where it stopped.
    ``max_steps`` caps the steps taken in this call.
    """
    tcfg = tcfg or TrainConfig()
    tcfg.validate()
    train_ds, val_ds = dataset.split(tcfg.val_fraction, tcfg.seed)
    if state is None:
        state = init_state(train_ds, cfg, tcfg)
    obs, act = state.obs_norm.normalize(train_ds.arrays(False)[0]), state.act_norm.normalize(train_ds.arrays(False)[1])
    vobs, vact = state.obs_norm.normalize(val_ds.arrays(False)[0]), state.act_norm.normalize(val_ds.arrays(False)[1])
    n = len(obs)
    per_epoch = math.ceil(n / tcfg.batch_size)
    end = tcfg.epochs * per_epoch
    if max_steps is not None:
        end = min(end, state.step + max_steps)
    model, opt = state.model, state.optimizer
    new_rows = []
    with ad.finite_checks(tcfg.check_finite):
        while state.step < end:
            epoch, b = divmod(state.step, per_epoch)
            order = np.random.default_rng([tcfg.seed, epoch]).permutation(n)
            idx = np.sort(order[b * tcfg.batch_size:(b + 1) * tcfg.batch_size])
            opt.zero_grad()
            rep = batch_loss(model, obs[idx], act[idx], tcfg)
            vals = rep.values()
            if not all(math.isfinite(v) for v in vals.values()):
                raise TrainingDiverged(f"non-finite loss at step {state.step}: {vals}")
            ad.backward(rep.total)
            opt.step()
            state.step += 1
            val_total = None
            if b == per_epoch - 1:
                val_total = evaluate(model, vobs, vact, tcfg)["total"]
                log.info("epoch %d step %d train %.5f val %.5f", epoch, state.step, vals["total"], val_total)
            row = {"step": state.step, "epoch": epoch, **vals, "val_total": val_total}
            state.log_rows.append(row)
            new_rows.append(row)
    return state, new_rows


def log_to_csv(rows: List[Dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow([r["step"], r["epoch"]] + [_fmt(r[k]) for k in LOG_COLUMNS[2:]])
    return buf.getvalue()
