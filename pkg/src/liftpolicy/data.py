"""Synthetic demonstration data for behavior cloning.

Two tasks:

* ``tracking`` - each observation dimension is a slow plus a fast sinusoid
  with additive noise; the action is the noise-free signal one step ahead.
* ``fork`` - a 2-D point mass travels from the origin to a goal, detouring
  left or right of a disc obstacle at the midpoint.  Observations are
  ``(x, y, goal_x, goal_y)``; actions are per-step displacements.

Episode ``i`` of a dataset generated with ``seed`` draws from
``default_rng([seed, i])`` so episodes do not depend on generation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .autodiff import DimensionError, UsageError

FORK_GOAL_RADIUS = 0.05
FORK_OBSTACLE_RADIUS = 0.1
TRACKING_NOISE = 0.05


@dataclass
class Episode:
    observations: np.ndarray
    actions: np.ndarray
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.observations.ndim != 2 or self.actions.ndim != 2:
            raise DimensionError("observations and actions must be [T, dim]")
        if len(self.observations) != len(self.actions) or len(self.actions) < 1:
            raise DimensionError("observations and actions must share T >= 1")
        if not (np.all(np.isfinite(self.observations)) and np.all(np.isfinite(self.actions))):
            raise ValueError("episode contains non-finite values")

    @property
    def length(self) -> int:
        return len(self.actions)


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Normalizer":
        x = np.asarray(x, dtype=np.float64).reshape(-1, np.shape(x)[-1])
        return cls(x.mean(axis=0), np.maximum(x.std(axis=0), 1e-8))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


@dataclass
class Dataset:
    episodes: List[Episode]
    obs_norm: Optional[Normalizer] = None
    act_norm: Optional[Normalizer] = None

    def __post_init__(self):
        if not self.episodes:
            raise UsageError("dataset has no episodes")
        od = {e.observations.shape[1] for e in self.episodes}
        adim = {e.actions.shape[1] for e in self.episodes}
        if len(od) != 1 or len(adim) != 1:
            raise DimensionError("episodes have inconsistent dimensions")

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def obs_dim(self) -> int:
        return self.episodes[0].observations.shape[1]

    @property
    def act_dim(self) -> int:
        return self.episodes[0].actions.shape[1]

    @property
    def task(self) -> str:
        return self.episodes[0].meta.get("task", "unknown")

    def fit_normalizers(self) -> None:
        self.obs_norm = Normalizer.fit(np.concatenate([e.observations for e in self.episodes]))
        self.act_norm = Normalizer.fit(np.concatenate([e.actions for e in self.episodes]))

    def split(self, val_fraction: float = 0.1, seed: int = 0) -> Tuple["Dataset", "Dataset"]:
        """Seeded shuffle by episode; normalization stats come from the train part."""
        n = len(self.episodes)
        order = np.random.default_rng(seed).permutation(n)
        n_val = max(1, int(round(val_fraction * n))) if n > 1 else 0
        val_idx, train_idx = order[:n_val], order[n_val:]
        train = Dataset([self.episodes[i] for i in sorted(train_idx)])
        train.fit_normalizers()
        val = Dataset([self.episodes[i] for i in sorted(val_idx)] or list(train.episodes),
                      train.obs_norm, train.act_norm)
        return train, val

    def arrays(self, normalized: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """Stack episodes into ``[N, T, dim]``; all episodes must share T."""
        lengths = {e.length for e in self.episodes}
        if len(lengths) != 1:
            raise DimensionError("episodes differ in length; cannot stack")
        obs = np.stack([e.observations for e in self.episodes])
        act = np.stack([e.actions for e in self.episodes])
        if normalized:
            if self.obs_norm is None:
                self.fit_normalizers()
            obs, act = self.obs_norm.normalize(obs), self.act_norm.normalize(act)
        return obs, act


# generators ---------------------------------------------------------------------


def _tracking_params(rng: np.random.Generator, dims: int) -> dict:
    return {
        "slow_amp": rng.uniform(0.5, 1.0, dims).tolist(),
        "slow_freq": rng.uniform(0.01, 0.03, dims).tolist(),
        "slow_phase": rng.uniform(0, 2 * np.pi, dims).tolist(),
        "fast_amp": rng.uniform(0.1, 0.3, dims).tolist(),
        "fast_freq": rng.uniform(0.1, 0.2, dims).tolist(),
        "fast_phase": rng.uniform(0, 2 * np.pi, dims).tolist(),
    }


def tracking_signal(params: dict, t: np.ndarray) -> np.ndarray:
    """Noise-free signal ``[len(t), dims]`` for the given episode parameters."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    p = {k: np.asarray(v) for k, v in params.items()}
    slow = p["slow_amp"] * np.sin(2 * np.pi * p["slow_freq"] * t + p["slow_phase"])
    fast = p["fast_amp"] * np.sin(2 * np.pi * p["fast_freq"] * t + p["fast_phase"])
    return slow + fast


def tracking_episode(seed: int, index: int, T: int, dims: int = 2) -> Episode:
    rng = np.random.default_rng([seed, index])
    params = _tracking_params(rng, dims)
    clean = tracking_signal(params, np.arange(T + 1))
    obs = clean[:T] + rng.normal(0.0, TRACKING_NOISE, size=(T, dims))
    return Episode(obs, clean[1:], {"task": "tracking", "params": params})


def generate_tracking_dataset(n_episodes: int, T: int, seed: int, dims: int = 2) -> Dataset:
    if T < 16:
        raise UsageError("tracking episodes need T >= 16")
    return Dataset([tracking_episode(seed, i, T, dims) for i in range(n_episodes)])


def fork_path(goal: np.ndarray, amplitude: float, side: int, s: np.ndarray) -> np.ndarray:
    """Points along the detour; ``side`` is +1 (left of travel) or -1 (right)."""
    goal = np.asarray(goal, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)[:, None]
    normal = np.array([-goal[1], goal[0]]) / np.linalg.norm(goal)
    return s * goal + side * amplitude * np.sin(np.pi * s) * normal


def fork_episode_params(rng: np.random.Generator, mode_prob: float = 0.5) -> dict:
    side = 1 if rng.random() < mode_prob else -1
    goal = [1.0 + rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)]
    return {"side": side, "goal": goal, "amplitude": rng.uniform(0.2, 0.3)}


def fork_episode(seed: int, index: int, T: int, mode_prob: float = 0.5) -> Episode:
    rng = np.random.default_rng([seed, index])
    p = fork_episode_params(rng, mode_prob)
    goal = np.asarray(p["goal"])
    pos = fork_path(goal, p["amplitude"], p["side"], np.arange(T + 1) / T)
    obs = np.concatenate([pos[:T], np.broadcast_to(goal, (T, 2))], axis=1)
    meta = {"task": "fork", "mode": "left" if p["side"] > 0 else "right", **p}
    return Episode(obs, np.diff(pos, axis=0), meta)


def generate_fork_dataset(n_episodes: int, T: int, seed: int, mode_prob: float = 0.5) -> Dataset:
    if T < 16:
        raise UsageError("fork episodes need T >= 16")
    return Dataset([fork_episode(seed, i, T, mode_prob) for i in range(n_episodes)])


def generate_dataset(task: str, n_episodes: int, T: int, seed: int, **kw) -> Dataset:
    if task == "tracking":
        return generate_tracking_dataset(n_episodes, T, seed, **kw)
    if task == "fork":
        return generate_fork_dataset(n_episodes, T, seed, **kw)
    raise UsageError(f"unknown task {task!r}")


# JSON-lines I/O -------------------------------------------------------------------


def save_jsonl(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        for e in ds.episodes:
            fh.write(json.dumps({"obs": e.observations.tolist(), "act": e.actions.tolist(), "meta": e.meta}))
            fh.write("\n")


def load_jsonl(path) -> Dataset:
    episodes = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                episodes.append(Episode(row["obs"], row["act"], row.get("meta", {})))
            except (json.JSONDecodeError, KeyError, DimensionError, ValueError) as exc:
                raise ValueError(f"{Path(path).name}:{lineno}: bad episode ({exc})") from None
    return Dataset(episodes)
