"""
Two ways around an obstacle
===========================

Demonstrations pass a disc obstacle on the left or on the right with equal
probability.  A policy with a binned action head keeps both modes when rolled
out; a plain regression head mostly collapses onto one side or averages the
two and clips the obstacle.
"""

from liftpolicy.data import generate_fork_dataset
from liftpolicy.evaluation import ForkOracle, ModelPolicy, rollout, rollout_report
from liftpolicy.network import WaveletPolicyConfig
from liftpolicy.training import TrainConfig, train

ds = generate_fork_dataset(500, 32, seed=8)
modes = [e.meta["mode"] for e in ds.episodes]
print(f"demonstrations: left {modes.count('left') / len(modes):.2f}, right {modes.count('right') / len(modes):.2f}")

oracle = rollout_report(rollout(ForkOracle(32), "fork", 100, seed=1))
print(f"oracle: success {oracle['success_rate']:.2f}, entropy {oracle['entropy']:.3f} bits")

# %%
# Same network and budget, two heads.
base = WaveletPolicyConfig(scales=3, model_width=32, head_count=4, obs_dim=4, act_dim=2, context_length=32)
for head in ("binned", "regression"):
    state, _ = train(ds, base.replace(head_kind=head, bin_count=8), TrainConfig(epochs=8, seed=8))
    rep = rollout_report(rollout(ModelPolicy.from_state(state), "fork", 100, seed=88))
    f = rep["mode_frequencies"]
    print(f"{head:>10}: success {rep['success_rate']:.2f}, left {f.get('left', 0):.2f}, "
          f"right {f.get('right', 0):.2f}, entropy {rep['entropy']:.3f} bits")
