"""Causal multi-scale policies built on learnable lifting wavelets.

The package is self-contained on numpy: ``autodiff`` supplies the tensor
engine, ``lifting`` the exact Haar/DB2 transforms, ``layers`` and ``network``
the policy, ``losses`` and ``training`` the behavior-cloning objective and
loop, ``evaluation`` rollouts and ablations, ``cli`` the command line.
"""

from .autodiff import DimensionError, NonFiniteError, Tensor, UsageError, backward, grad_check, no_grad
from .data import Dataset, Episode, Normalizer, generate_dataset, load_jsonl, save_jsonl
from .evaluation import ModelPolicy, ablation_suite, empirical_entropy, rollout, rollout_report
from .layers import ConfigError
from .lifting import (
    DB2,
    HAAR,
    LiftedPair,
    analysis,
    decomposition_table,
    multilevel_decompose,
    multilevel_reconstruct,
    synthesis,
)
from .losses import LossReport, compute_loss, loss_approx, loss_detail, loss_task, total_loss
from .network import WaveletPolicy, WaveletPolicyConfig, build_policy, make_variant
from .training import TrainConfig, TrainState, load_state, train

__version__ = "0.1.0"
