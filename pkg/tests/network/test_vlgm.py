# Tests for text-guided fusion: global modulation and dual cross-attention

import numpy as np
import pytest

from voxrefine.network import (
    ConfigMismatchError,
    MissingTextError,
    RefineConfig,
    apply_fusion,
    build_weights,
    dcam_forward,
    sigm_modulate,
)
from voxrefine.network.params import ParamStore
from voxrefine.network.vlgm import build_fusion
from voxrefine.tensor import Tensor, backward
from voxrefine.voxio import TextEmbedding

WIDTH, GLOBAL_DIM, TOKEN_DIM = 4, 6, 5


def fusion_params(store=None):
    store = store if store is not None else ParamStore(0)
    return store, build_fusion(store, "t", WIDTH, GLOBAL_DIM, TOKEN_DIM, heads=2)


def feature_volume(seed=0) -> Tensor:
    return Tensor(np.random.default_rng(seed).normal(size=(WIDTH, 2, 2, 2)))


def text(seed=0) -> TextEmbedding:
    rng = np.random.default_rng(seed)
    return TextEmbedding(rng.normal(size=GLOBAL_DIM), rng.normal(size=(3, TOKEN_DIM)))


def randomize_biases(store, rng) -> None:
    for name, tensor in store:
        if name.endswith((".bias", ".gain", ".shift")):
            tensor.data[...] = rng.normal(size=tensor.shape)


def affine(x, p):
    return x @ p.weight.data.T + p.bias.data


def multi_head_reference(queries, context, p, heads):
    def split(rows):
        return rows.reshape(rows.shape[0], heads, -1).transpose(1, 0, 2)

    q, k, v = split(affine(queries, p.q)), split(affine(context, p.k)), split(affine(context, p.v))
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(q.shape[-1])
    probs = np.exp(scores - scores.max(axis=-1, keepdims=True))
    probs /= probs.sum(axis=-1, keepdims=True)
    attended = (probs @ v).transpose(1, 0, 2).reshape(queries.shape[0], -1)
    return affine(attended, p.out)


def layer_norm_reference(rows, gain, shift, eps=1e-5):
    centered = rows - rows.mean(axis=1, keepdims=True)
    return centered / np.sqrt((centered ** 2).mean(axis=1, keepdims=True) + eps) * gain + shift


def dcam_reference(f_in, tokens, p):
    voxels = f_in.reshape(f_in.shape[0], -1).T
    text = affine(tokens, p.token_project)
    text = text + multi_head_reference(text, text, p.text_self, p.heads)
    text = text + multi_head_reference(text, voxels, p.text_to_voxel, p.heads)
    enhanced = multi_head_reference(voxels, text, p.voxel_to_text, p.heads)
    out = layer_norm_reference(enhanced + voxels, p.norm.gain.data, p.norm.shift.data)
    return out.T.reshape(f_in.shape)


# --- Tests for sigm_modulate ---

def test_zero_mlps_leave_features_unchanged():
    store, params = fusion_params()
    store.fill("t.sigm", 0.0)
    f_in = feature_volume()
    out = sigm_modulate(f_in, text().global_vector, params.sigm)
    assert np.array_equal(out.data, f_in.data)


def test_modulation_is_affine_per_channel():
    store, params = fusion_params()
    store.fill("t.sigm", 0.0)
    store.fill("t.sigm.gamma.fc2.bias", 1.0)
    store.fill("t.sigm.beta.fc2.bias", 0.5)
    f_in = feature_volume()
    out = sigm_modulate(f_in, text().global_vector, params.sigm)
    np.testing.assert_allclose(out.data, 2.0 * f_in.data + 0.5)


def test_all_zero_text_gives_bias_only_modulation():
    store, params = fusion_params()
    f_in = feature_volume()
    out = sigm_modulate(f_in, np.zeros(GLOBAL_DIM), params.sigm)
    # biases start at zero, so a zero vector produces gamma = beta = 0
    assert np.array_equal(out.data, f_in.data)


def test_sigm_rejects_matrix_global_vector():
    _, params = fusion_params()
    with pytest.raises(ConfigMismatchError):
        sigm_modulate(feature_volume(), np.zeros((2, GLOBAL_DIM)), params.sigm)


# --- Tests for dcam_forward ---

def test_dcam_output_is_normalised_per_voxel():
    _, params = fusion_params()
    out = dcam_forward(feature_volume(), text().tokens, params.dcam)
    assert out.shape == (WIDTH, 2, 2, 2)
    rows = out.data.reshape(WIDTH, -1)
    np.testing.assert_allclose(rows.mean(axis=0), 0.0, atol=1e-10)


def test_dcam_records_three_attention_maps():
    _, params = fusion_params()
    record = []
    dcam_forward(feature_volume(), text().tokens, params.dcam, record=record)
    assert [p.shape for p in record] == [(2, 3, 3), (2, 3, 8), (2, 8, 3)]
    for probs in record:
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0)


def test_dcam_single_token():
    _, params = fusion_params()
    out = dcam_forward(feature_volume(), np.ones((1, TOKEN_DIM)), params.dcam)
    assert out.all_finite()


def test_dcam_matches_straight_line_oracle():
    rng = np.random.default_rng(10)
    for trial in range(10):
        store, params = fusion_params(ParamStore(trial))
        randomize_biases(store, rng)
        f_in, tokens = feature_volume(trial), text(trial).tokens
        out = dcam_forward(f_in, tokens, params.dcam).data
        np.testing.assert_allclose(out, dcam_reference(f_in.data, tokens, params.dcam), rtol=0, atol=1e-12)


def test_zero_voxel_projection_normalises_the_input():
    store, params = fusion_params()
    store.fill("t.dcam.voxel_to_text.out", 0.0)
    f_in = feature_volume(1)
    out = dcam_forward(f_in, text().tokens, params.dcam).data
    rows = f_in.data.reshape(WIDTH, -1).T
    expected = layer_norm_reference(rows, np.ones(WIDTH), np.zeros(WIDTH)).T.reshape(f_in.shape)
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_single_token_gets_all_voxel_attention():
    _, params = fusion_params()
    record = []
    dcam_forward(feature_volume(), np.ones((1, TOKEN_DIM)), params.dcam, record=record)
    assert np.array_equal(record[2], np.ones((2, 8, 1)))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_reaches_the_tokens(seed):
    rng = np.random.default_rng(seed)
    _, params = fusion_params(ParamStore(seed))
    tokens = Tensor(rng.normal(size=(3, TOKEN_DIM)), requires_grad=True)
    out = dcam_forward(feature_volume(seed), tokens, params.dcam)
    # a plain sum of a layer-normalised output is constant, so weight it
    backward((out * Tensor(rng.normal(size=out.shape))).sum())
    assert tokens.grad is not None
    assert np.abs(tokens.grad).max() > 1e-8


def test_dcam_rejects_empty_tokens():
    _, params = fusion_params()
    with pytest.raises(ConfigMismatchError):
        dcam_forward(feature_volume(), np.zeros((0, TOKEN_DIM)), params.dcam)


# --- Tests for apply_fusion ---

def test_placement_none_passes_through_even_with_text():
    f_in = feature_volume()
    assert apply_fusion(f_in, "none", "feb", text(), None) is f_in


def test_placement_skips_other_stage_kind():
    _, params = fusion_params()
    f_in = feature_volume()
    assert apply_fusion(f_in, "encoder", "fab", text(), params) is f_in
    assert apply_fusion(f_in, "decoder", "feb", text(), params) is f_in


def test_placement_runs_sigm_then_dcam():
    _, params = fusion_params()
    f_in = feature_volume()
    t = text()
    expected = dcam_forward(sigm_modulate(f_in, t.global_vector, params.sigm), t.tokens, params.dcam)
    out = apply_fusion(f_in, "both", "fab", t, params)
    np.testing.assert_array_equal(out.data, expected.data)


@pytest.mark.parametrize("placement, sites", [
    ("none", []),
    ("encoder", ["enc1", "enc2", "enc3", "enc4"]),
    ("decoder", ["dec8", "dec4", "dec2", "dec1"]),
    ("both", ["enc1", "enc2", "enc3", "enc4", "dec8", "dec4", "dec2", "dec1"]),
])
def test_placement_decides_the_fusion_sites(placement, sites):
    cfg = RefineConfig(num_classes=5, base_width=4, dcam_heads=2, text_global_dim=GLOBAL_DIM, text_token_dim=TOKEN_DIM, fusion=placement)
    weights = build_weights(cfg)
    assert list(weights.fusion) == sites
    prefixes = {".".join(name.split(".")[:2]) for name in weights.store.names() if name.startswith("vlgm.")}
    assert prefixes == {f"vlgm.{site}" for site in sites}


def test_missing_text_is_rejected():
    _, params = fusion_params()
    with pytest.raises(MissingTextError):
        apply_fusion(feature_volume(), "encoder", "feb", None, params)


def test_unknown_placement_is_rejected():
    with pytest.raises(ConfigMismatchError):
        apply_fusion(feature_volume(), "middle", "feb", text(), None)
