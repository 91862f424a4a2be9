import struct

import numpy as np
import pytest

from atcnn import numerics as nx
from atcnn.errors import ChecksumError, ConfigError, DimensionError, ModelFormatError
from atcnn.model import (
    ArchConfig, dilated_causal_conv, feature_maps, forward, forward_variant, init_parameters,
    lead_feature_stack, parameter_shapes, permute_leads, predict_proba, receptive_field,
    spatial_attention, stack_receptive_field, tcnn_block, temporal_attention,
)
from atcnn.serialization import (
    FORMAT_VERSION, _checksum, load_model, model_from_bytes, model_to_bytes, save_model,
)


def tiny(variant="full", T=32, Z=4, seed=0, **kw):
    cfg = ArchConfig(input_length=T, channels=Z, variant=variant, **kw)
    return init_parameters(cfg, "MI", seed=seed)


# -- dilated causal convolution ------------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 5])
def test_conv_identity_kernel(d):
    x = np.arange(7.0)
    np.testing.assert_array_equal(dilated_causal_conv(x, [1.0], d), x)


def test_conv_direct_summation():
    np.testing.assert_array_equal(dilated_causal_conv([1, 2, 3, 4], [1, 1], 2), [1, 2, 4, 6])


def test_conv_matches_summation_oracle(rng):
    for _ in range(20):
        T, K, d = rng.integers(1, 30), rng.integers(1, 5), rng.integers(1, 6)
        x, w = rng.normal(size=T), rng.normal(size=K)
        oracle = [sum(w[i] * x[n - d * i] for i in range(K) if n - d * i >= 0) for n in range(T)]
        np.testing.assert_allclose(dilated_causal_conv(x, w, d), oracle, atol=1e-12)


def test_conv_last_sample_perturbation():
    x = np.arange(6.0)
    y0 = dilated_causal_conv(x, [0.5, -1.0, 2.0], 2)
    x[-1] += 1.0
    y1 = dilated_causal_conv(x, [0.5, -1.0, 2.0], 2)
    changed = np.flatnonzero(y0 != y1)
    np.testing.assert_array_equal(changed, [5])


@pytest.mark.parametrize("K,d,expected", [(3, 1, 3), (3, 4, 9), (1, 7, 1), (2, 8, 9)])
def test_receptive_field(K, d, expected):
    assert receptive_field(K, d) == expected


def test_stack_receptive_field_default():
    assert stack_receptive_field(ArchConfig()) == 29
    assert stack_receptive_field(ArchConfig(variant="traditional_conv")) == 13


# -- TCNN blocks ---------------------------------------------------------------

def test_block_zero_input_constant_after_transient(rng):
    Z, K, d = 3, 3, 2
    w1, w2 = rng.normal(size=(Z, 1, K)), rng.normal(size=(Z, Z, K))
    b1, b2 = rng.uniform(0.1, 1, size=Z), rng.normal(size=Z)
    out = tcnn_block(np.zeros((1, 20)), w1, b1, w2, b2, d).data
    tail = out[:, (K - 1) * d:]
    np.testing.assert_allclose(tail, tail[:, :1].repeat(tail.shape[1], axis=1))
    # layer one sees only its bias, layer two a constant relu(b1) input
    expected = np.maximum(w2.sum(axis=2) @ np.maximum(b1, 0) + b2, 0)
    np.testing.assert_allclose(tail[:, 0], expected)


def test_block_identity_on_first_channel(rng):
    Z = 4
    w1 = np.zeros((Z, 1, 1)); w1[0, 0, 0] = 1
    w2 = np.zeros((Z, Z, 1)); w2[0, 0, 0] = 1
    x = rng.uniform(0, 2, size=(1, 15))
    out = tcnn_block(x, w1, np.zeros(Z), w2, np.zeros(Z), d=3).data
    np.testing.assert_allclose(out[0], x[0])
    np.testing.assert_array_equal(out[1:], 0)


def test_lead_stack_is_composition_of_blocks(rng):
    m = tiny(Z=3)
    x = rng.normal(size=32)
    got = lead_feature_stack(m, x, lead=4)
    h = x.astype(np.float32).reshape(1, -1)
    for blk, d in enumerate((1, 2, 4)):
        ps = [m.params[f"conv{k}.{s}"].data[4] for k in (2 * blk, 2 * blk + 1) for s in "wb"]
        h = tcnn_block(h, *ps, d=d).data
    np.testing.assert_allclose(got, h, rtol=1e-6)
    assert got.shape == (3, 32)


def test_lead_stack_zero_input_is_deterministic():
    m = tiny()
    a = lead_feature_stack(m, np.zeros(32), lead=0)
    b = lead_feature_stack(m, np.zeros(32), lead=0)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a, 0)  # zero biases at init


def test_impulse_support_is_29_samples(rng):
    cfg = ArchConfig(input_length=120, channels=3)
    m = init_parameters(cfg, "CD", seed=1)
    for name, t in m.params.items():  # positive weights keep every path alive through ReLU
        if name.startswith("conv") and name.endswith(".w"):
            t.data = np.abs(t.data) + 0.01
    x = np.zeros(120); x[40] = 1.0
    F = lead_feature_stack(m, x, lead=0)
    support = np.flatnonzero(np.any(F != 0, axis=0))
    assert support[0] == 40 and support[-1] == 40 + 28
    assert len(support) == 29


def test_stack_is_causal(rng):
    m = tiny(T=48, seed=3)
    for _ in range(50):
        x = rng.normal(size=(12, 48))
        n = int(rng.integers(0, 47))
        x2 = x.copy()
        x2[:, n + 1:] += rng.normal(size=(12, 47 - n))
        F1 = feature_maps(m, x).data
        F2 = feature_maps(m, x2).data
        np.testing.assert_array_equal(F1[..., :n + 1], F2[..., :n + 1])


# -- attention -------------------------------------------------------------------

def test_temporal_attention_uniform_gives_row_means():
    F = np.array([[1.0, 2.0, 6.0], [0.0, -3.0, 3.0]])
    u, a = temporal_attention(F, np.zeros(2), np.zeros(3))
    np.testing.assert_allclose(a.data, [1 / 3] * 3)
    np.testing.assert_allclose(u.data, [3.0, 0.0])


def test_temporal_attention_one_hot_selects_column(rng):
    F = rng.normal(size=(4, 6))
    b = np.full(6, -1e4); b[2] = 1e4   # tanh saturates to -1 / +1
    w = np.zeros(4)
    u, a = temporal_attention(F, w, b)
    # softmax over +-1 is not one-hot; check the weighted mix explicitly
    e = np.exp([-1.0] * 6); e[2] = np.exp(1.0)
    np.testing.assert_allclose(a.data, e / e.sum())
    np.testing.assert_allclose(u.data, F @ (e / e.sum()))


def test_temporal_attention_sums_to_one(rng):
    for _ in range(20):
        _, a = temporal_attention(rng.normal(size=(5, 9)) * 3, rng.normal(size=5), rng.normal(size=9))
        assert abs(a.data.sum() - 1) <= 1e-9


def test_spatial_attention_identical_columns_uniform(rng):
    col = rng.normal(size=(4, 1))
    v, beta = spatial_attention(np.repeat(col, 12, axis=1), rng.normal(size=4), np.zeros(12))
    np.testing.assert_allclose(beta.data, 1 / 12)
    np.testing.assert_allclose(v.data, col[:, 0])


def test_spatial_attention_weighted_sum(rng):
    S = rng.normal(size=(4, 12))
    w, b = rng.normal(size=4), rng.normal(size=12)
    v, beta = spatial_attention(S, w, b)
    e = np.exp(np.tanh(S.T @ w + b))
    np.testing.assert_allclose(beta.data, e / e.sum())
    np.testing.assert_allclose(v.data, S @ beta.data)
    assert abs(beta.data.sum() - 1) <= 1e-9


def test_attention_shape_errors():
    with pytest.raises(DimensionError):
        temporal_attention(np.zeros((3, 5)), np.zeros(4), np.zeros(5))
    with pytest.raises(DimensionError):
        spatial_attention(np.zeros((3, 12)), np.zeros(3), np.zeros(11))


# -- forward ---------------------------------------------------------------------

def test_forward_trace_contract(rng):
    m = tiny(seed=2)
    tr = forward(m, rng.normal(size=(12, 32)))
    assert 0 <= tr.p <= 1
    assert abs(tr.p_pair.sum() - 1) <= 1e-9
    assert tr.p == pytest.approx(tr.p_pair[0], abs=1e-6)
    assert tr.alpha.shape == (12, 32) and tr.beta.shape == (12,)
    np.testing.assert_allclose(tr.alpha.sum(axis=1), 1, atol=1e-6)
    assert abs(tr.beta.sum() - 1) <= 1e-6


def test_forward_deterministic(rng):
    x = rng.normal(size=(12, 32))
    a, b = forward(tiny(seed=5), x), forward(tiny(seed=5), x)
    assert a.p == b.p
    np.testing.assert_array_equal(a.alpha, b.alpha)
    np.testing.assert_array_equal(a.beta, b.beta)


def test_zero_head_gives_one_half(rng):
    m = tiny()
    m.params["head.w"].data[...] = 0
    m.params["head.b"].data[...] = 0
    assert forward(m, rng.normal(size=(12, 32))).p == pytest.approx(0.5, abs=1e-12)


def test_forward_rejects_wrong_length():
    with pytest.raises(DimensionError):
        forward(tiny(), np.zeros((12, 31)))
    with pytest.raises(DimensionError):
        forward(tiny(), np.zeros((11, 32)))


def test_batch_and_single_forward_agree(rng):
    m = tiny(seed=4)
    X = rng.normal(size=(3, 12, 32))
    batch = forward(m, X)
    for i in range(3):
        one = forward(m, X[i])
        assert one.p == pytest.approx(batch.p[i], abs=1e-6)
    np.testing.assert_allclose(predict_proba(m, X, batch_size=2), batch.p, atol=1e-6)


def test_lead_permutation_covariance(rng):
    m = tiny(seed=6)
    X = rng.normal(size=(4, 12, 32))
    perm = rng.permutation(12)
    p = forward(m, X).p
    p_perm = forward(permute_leads(m, perm), X[:, perm]).p
    np.testing.assert_allclose(p_perm, p, atol=1e-6)


# -- variants --------------------------------------------------------------------

def test_traditional_conv_equals_full_forced_to_unit_dilation(rng):
    full = tiny(seed=7)
    trad = init_parameters(ArchConfig(input_length=32, channels=4, variant="traditional_conv"), "MI")
    trad.load_state(full.state())
    X = rng.normal(size=(2, 12, 32))
    np.testing.assert_array_equal(feature_maps(trad, X).data, feature_maps(full, X, dilations=[1] * 6).data)
    assert forward_variant(trad, X[0]).p == pytest.approx(forward(trad, X[0]).p)


def _identity_stacks(m):
    for name, t in m.params.items():
        if name.startswith("conv"):
            t.data[...] = 0
            if name.endswith(".w"):
                t.data[:, 0, 0, 0] = 1


def test_gap_invariant_to_time_permutation(rng):
    m = tiny("no_attention_gap", seed=8)
    _identity_stacks(m)
    X = rng.uniform(0, 1, size=(12, 32))
    p1 = forward_variant(m, X).p
    p2 = forward_variant(m, X[:, rng.permutation(32)]).p
    assert p1 == pytest.approx(p2, abs=1e-6)
    assert forward_variant(m, X).beta is None


def test_single_lead_ignores_other_leads(rng):
    cfg = ArchConfig(input_length=32, channels=4).with_leads([6])
    assert cfg.variant == "single_lead"
    m = init_parameters(cfg, "CD", seed=9)
    X = rng.normal(size=(12, 32))
    X2 = X + rng.normal(size=X.shape) * 5
    X2[6] = X[6]
    assert forward_variant(m, X).p == forward_variant(m, X2).p
    assert forward_variant(m, X).alpha.shape == (1, 32)


def test_forward_variant_rejects_full():
    with pytest.raises(ConfigError):
        forward_variant(tiny(), np.zeros((12, 32)))


@pytest.mark.parametrize("kw", [
    dict(dilations=(1, 2)), dict(dilations=(1, 1, 2)), dict(kernel_size=1), dict(lead_mask=()),
    dict(lead_mask=(3, 1)), dict(variant="single_lead"), dict(residual=True), dict(variant="bogus"),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ArchConfig(**kw)


# -- initialization --------------------------------------------------------------

def test_init_seeded_and_shaped():
    a, b, c = tiny(seed=1), tiny(seed=1), tiny(seed=2)
    assert all(np.array_equal(a.params[k].data, b.params[k].data) for k in a.params)
    assert any(not np.array_equal(a.params[k].data, c.params[k].data) for k in a.params)
    assert {k: v.shape for k, v in a.params.items()} == parameter_shapes(a.config)
    assert a.params["temporal.b"].shape == (12, 32)
    assert tiny(temporal_bias="scalar").params["temporal.b"].shape == (12, 1)


def test_init_bounds():
    m = tiny(Z=8)
    w = m.params["conv3.w"].data
    assert np.abs(w).max() <= np.sqrt(6 / (8 * 3))
    assert all(not m.params[k].data.any() for k in m.params if k.endswith(".b"))


# -- serialization ---------------------------------------------------------------

def test_round_trip_bit_exact(tmp_path, rng):
    m = tiny(seed=11)
    path = save_model(m, tmp_path / "MI.atcn")
    m2 = load_model(path)
    assert m2.config == m.config and m2.target == "MI"
    for k in m.params:
        np.testing.assert_array_equal(m2.params[k].data, m.params[k].data)
    x = rng.normal(size=(12, 32))
    assert forward(m2, x).p == forward(m, x).p


def test_corrupted_byte_fails_checksum():
    buf = bytearray(model_to_bytes(tiny()))
    buf[len(buf) // 2] ^= 0x01
    with pytest.raises(ChecksumError):
        model_from_bytes(bytes(buf))


def test_truncated_and_foreign_files():
    buf = model_to_bytes(tiny())
    with pytest.raises(ModelFormatError):
        model_from_bytes(buf[:-20])
    with pytest.raises(ModelFormatError):
        model_from_bytes(b"NOPE" + buf[4:])


def test_version_mismatch_rejected():
    body = bytearray(model_to_bytes(tiny())[:-8])
    body[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
    buf = bytes(body) + struct.pack("<Q", _checksum(bytes(body)))
    with pytest.raises(ModelFormatError, match="version"):
        model_from_bytes(buf)


def test_model_gradient_flows_to_every_parameter(rng):
    from atcnn.model import forward_batch
    from atcnn.training import bce_batch
    m = tiny(seed=12)
    loss = bce_batch(forward_batch(m, rng.normal(size=(3, 12, 32))).probs, np.array([1, 0, 1]))
    loss.backward()
    for name, p in m.params.items():
        assert p.grad is not None and p.grad.shape == p.shape, name
    with nx.no_grad():
        assert not forward_batch(m, np.zeros((1, 12, 32))).probs.requires_grad
