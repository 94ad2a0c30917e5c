import numpy as np
import pytest

from liftpolicy import autodiff as ad
from liftpolicy.autodiff import DimensionError, Tensor, UsageError
from liftpolicy.evaluation import causality_probes
from liftpolicy.layers import ConfigError
from liftpolicy.network import (
    AnalysisBlock,
    BinnedOutput,
    FixedAnalysisBlock,
    FixedSynthesisBlock,
    SynthesisBlock,
    WaveletPolicy,
    WaveletPolicyConfig,
    config_from_dict,
    config_to_text,
    make_variant,
    parse_config_text,
)


def small_cfg(**kw):
    base = dict(scales=2, model_width=8, head_count=2, obs_dim=3, act_dim=2, context_length=8)
    base.update(kw)
    return WaveletPolicyConfig(**base)


def test_default_config():
    cfg = WaveletPolicyConfig()
    assert cfg.scales == 3 and cfg.dilation_schedule == [1, 2, 4]
    assert cfg.replace(scales=2).dilation_schedule == [1, 2]


@pytest.mark.parametrize("kw", [
    dict(scales=0), dict(model_width=10, head_count=4), dict(head_kind="mixture"),
    dict(dilation_schedule=[1]), dict(lifting="sym4"),
])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        small_cfg(**kw)


def test_forward_shapes_and_trace():
    cfg = small_cfg(scales=3)
    model = WaveletPolicy(cfg)
    out, trace = model(Tensor(np.random.default_rng(0).standard_normal((2, 5, 3))))
    assert out.shape == (2, 5, 2)
    assert len(trace.analysis) == len(trace.approx) == len(trace.details) == 3
    for a in trace.approx + trace.details:
        assert a.shape == (2, 5, 8)


def test_binned_head_shapes():
    model = WaveletPolicy(small_cfg(head_kind="binned", bin_count=5))
    out, _ = model(Tensor(np.zeros((1, 4, 3))))
    assert isinstance(out, BinnedOutput)
    assert out.logits.shape == (1, 4, 5) and out.offsets.shape == (1, 4, 5, 2)


def test_input_errors():
    model = WaveletPolicy(small_cfg())
    with pytest.raises(DimensionError):
        model(Tensor(np.zeros((1, 4, 2))))
    with pytest.raises(UsageError):
        model(Tensor(np.zeros((1, 9, 3))))
    with pytest.raises(UsageError):
        model(Tensor(np.zeros((1, 0, 3))))


def test_zero_lifting_passes_splitter_through():
    model = WaveletPolicy(small_cfg())
    model.zero_lifting_()
    x = Tensor(np.random.default_rng(1).standard_normal((2, 6, 3)))
    h = model.analysis[0].splitter(model.embed_obs(x))
    pair = model.analysis[0].lift(h)
    np.testing.assert_allclose(pair.s.data, h.data)
    np.testing.assert_allclose(pair.d.data, h.data)


def test_shared_weights_invert():
    cfg = small_cfg(scales=1)
    rng = np.random.default_rng(3)
    ana, syn = AnalysisBlock(cfg, 0, rng), SynthesisBlock(cfg, 0, rng)
    syn.inv_update, syn.inv_predict = ana.update, ana.predict
    h = Tensor(rng.standard_normal((2, 8, 8)))
    pair = ana.lift(h)
    a_e, a_o = syn(pair.s, pair.d)
    np.testing.assert_allclose(a_e.data, h.data, atol=1e-12)
    np.testing.assert_allclose(a_o.data, h.data, atol=1e-12)


def test_fixed_haar_streams():
    cfg = small_cfg(scales=2, lifting="haar", dilation_schedule=[1, 2])
    blk = FixedAnalysisBlock(cfg, 1, np.random.default_rng(0))
    h = np.random.default_rng(1).standard_normal((1, 8, 8))
    pair = blk.lift(Tensor(h))
    np.testing.assert_allclose(pair.d.data[:, 2:], h[:, 2:] - h[:, :-2], atol=1e-12)
    np.testing.assert_allclose(pair.s.data[:, 2:], (h[:, 2:] + h[:, :-2]) / 2, atol=1e-12)
    const = blk.lift(Tensor(np.ones((1, 8, 8))))
    np.testing.assert_allclose(const.d.data[:, 2:], 0.0, atol=1e-12)


@pytest.mark.parametrize("kind", ["haar", "db2"])
def test_fixed_synthesis_inverts_analysis(kind):
    cfg = small_cfg(scales=1, lifting=kind, dilation_schedule=[2])
    blk = FixedAnalysisBlock(cfg, 0, np.random.default_rng(0))
    syn = FixedSynthesisBlock(cfg, 0)
    h = Tensor(np.random.default_rng(2).standard_normal((2, 10, 8)))
    pair = blk.lift(h)
    even, odd = syn(pair.s, pair.d)
    np.testing.assert_allclose(odd.data, h.data, atol=1e-12)
    np.testing.assert_allclose(even.data, ad.shift_time(h, 2).data, atol=1e-12)


@pytest.mark.parametrize("variant", ["learnable", "haar", "db2"])
def test_variants_are_causal(variant):
    model = make_variant(small_cfg(scales=3, dilation_schedule=[1, 3, 2]), variant)
    assert causality_probes(model, 10, seed=4) < 1e-12


def test_noncausal_variant_leaks():
    model = make_variant(small_cfg(), "noncausal")
    assert causality_probes(model, 10, seed=4) > 1e-6


def test_fixed_variant_has_fewer_parameters():
    cfg = small_cfg()
    assert make_variant(cfg, "haar").num_parameters() < make_variant(cfg, "learnable").num_parameters()


def test_seed_determinism_and_state_roundtrip():
    cfg = small_cfg()
    a, b = WaveletPolicy(cfg), WaveletPolicy(cfg)
    for (ka, va), (kb, vb) in zip(a.named_parameters(), b.named_parameters()):
        assert ka == kb
        np.testing.assert_array_equal(va.data, vb.data)
    c = WaveletPolicy(cfg.replace(seed=5))
    c.load_state_dict(a.state_dict())
    x = Tensor(np.random.default_rng(0).standard_normal((1, 4, 3)))
    np.testing.assert_array_equal(c(x)[0].data, a(x)[0].data)


def test_predict_next_action_uses_last_window():
    model = WaveletPolicy(small_cfg(context_length=4))
    hist = np.random.default_rng(0).standard_normal((10, 3))
    out, _ = model(Tensor(hist[None, -4:]))
    np.testing.assert_allclose(model.predict_next_action(hist), out.data[0, -1])


def test_predict_next_action_binned_argmax_and_sampling():
    model = WaveletPolicy(small_cfg(head_kind="binned", bin_count=3))
    model.set_bin_centers(np.arange(6.0).reshape(3, 2))
    hist = np.zeros((3, 3))
    a = model.predict_next_action(hist)
    assert a.shape == (2,)
    b = model.predict_next_action(hist, np.random.default_rng(0))
    assert b.shape == (2,)


def test_config_text_roundtrip():
    cfg = small_cfg(head_kind="binned", dilation_schedule=[1, 3], use_pos_emb=False)
    back = config_from_dict(parse_config_text(config_to_text(cfg)))
    assert back == cfg
    with pytest.raises(ConfigError):
        parse_config_text("scales 3")
