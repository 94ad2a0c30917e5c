import math

import numpy as np
import pytest

from liftpolicy.autodiff import UsageError
from liftpolicy.data import Normalizer, generate_tracking_dataset
from liftpolicy.evaluation import (
    ABLATION_COLUMNS,
    ForkOracle,
    ModelPolicy,
    TrackingOracle,
    ZeroPolicy,
    ablation_csv,
    ablation_suite,
    ablation_summary,
    causality_leak,
    empirical_entropy,
    rollout,
    rollout_report,
)
from liftpolicy.network import WaveletPolicy, WaveletPolicyConfig
from liftpolicy.training import TrainConfig


def test_entropy_values():
    assert empirical_entropy(["l", "r"] * 5) == pytest.approx(1.0)
    assert empirical_entropy(["l"] * 7) == 0.0
    assert empirical_entropy(["a", "b", "c", "d"]) == pytest.approx(2.0)
    p = 0.3
    h = -(p * math.log2(p) + (1 - p) * math.log2(1 - p))
    assert empirical_entropy(["l"] * 3 + ["r"] * 7) == pytest.approx(h)
    with pytest.raises(UsageError):
        empirical_entropy([])


def test_fork_oracle_succeeds_in_both_modes():
    rep = rollout_report(rollout(ForkOracle(32), "fork", 40, seed=0))
    assert rep["success_rate"] == 1.0
    assert set(rep["mode_frequencies"]) == {"left", "right"}
    assert rep["entropy"] > 0.8


def test_zero_policy_fails():
    rep = rollout_report(rollout(ZeroPolicy(), "fork", 5, seed=0))
    assert rep["success_rate"] == 0.0


def test_tracking_oracle_succeeds():
    rep = rollout_report(rollout(TrackingOracle(), "tracking", 5, seed=1))
    assert rep["success_rate"] == 1.0 and "entropy" not in rep


def test_rollouts_are_seeded():
    cfg = WaveletPolicyConfig(scales=2, model_width=8, head_count=2, obs_dim=4, act_dim=2,
                              context_length=16, head_kind="binned", bin_count=3)
    model = WaveletPolicy(cfg)
    model.set_bin_centers(np.random.default_rng(0).standard_normal((3, 2)) * 0.03)
    pol = ModelPolicy(model, Normalizer.identity(4), Normalizer.identity(2))
    a = rollout_report(rollout(pol, "fork", 6, seed=2, T=16))
    b = rollout_report(rollout(pol, "fork", 6, seed=2, T=16))
    assert a == b


def test_unknown_env():
    with pytest.raises(UsageError):
        rollout(ZeroPolicy(), "kitchen", 1, 0)


def test_causality_leak_zero_before_perturbation():
    cfg = WaveletPolicyConfig(scales=2, model_width=8, head_count=2, obs_dim=3, act_dim=2, context_length=8)
    model = WaveletPolicy(cfg)
    obs = np.random.default_rng(0).standard_normal((2, 8, 3))
    assert causality_leak(model, obs, 5, np.random.default_rng(1)) == 0.0


def test_ablation_suite_rows_and_summary():
    ds = generate_tracking_dataset(20, 16, seed=0)
    cfg = WaveletPolicyConfig(scales=1, model_width=8, head_count=2, obs_dim=2, act_dim=2, context_length=16)
    rows = ablation_suite(ds, cfg, TrainConfig(epochs=1, batch_size=10), [0, 1],
                          ["learnable", "noncausal", "haar", "db2"], n_rollouts=2)
    assert len(rows) == 8
    leaks = {r["variant"]: r["causal_leak"] for r in rows}
    assert leaks["learnable"] == 0.0 and leaks["noncausal"] > 0.0
    summary = ablation_summary(rows)
    assert len(summary) == 8 and summary[0]["seed"] == "mean" and summary[1]["seed"] == "std"
    lines = ablation_csv(rows).splitlines()
    assert lines[0] == ",".join(ABLATION_COLUMNS) and len(lines) == 1 + 8 + 8
