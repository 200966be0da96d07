import logging

import numpy as np

from voxrefine.checks.models import CaseInstance
from voxrefine.losses import ClassWeights, class_probs, lovasz_softmax, scal, weighted_ce
from voxrefine.network.models import FebParams
from voxrefine.network.params import ParamStore
from voxrefine.network.pnam import build_pna_block, neighborhood_cross_attention, pna_fab_forward, self_attention_block
from voxrefine.network.unet import build_conv_block, build_fab, fab_forward, feb_forward
from voxrefine.network.vlgm import build_fusion, dcam_forward, sigm_modulate
from voxrefine.tensor import (
    Function,
    Tensor,
    abs_,
    attention,
    clamp_min,
    concat,
    conv3d,
    embedding,
    exp,
    instance_norm3d,
    layer_norm,
    leaky_relu,
    linear,
    log,
    log_softmax_lastdim,
    max_pool3d,
    nearest_upsample3d,
    neighborhood_attention,
    neighborhood_index,
    softmax_lastdim,
    take,
)
from voxrefine.voxio import SemGrid

logger = logging.getLogger(__name__)


def _leaf(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def _away_from_zero(rng: np.random.Generator, *shape: int) -> Tensor:
    magnitude = 0.1 + np.abs(rng.normal(size=shape))
    return Tensor(np.where(rng.random(shape) < 0.5, -magnitude, magnitude), requires_grad=True)


def _randomised(store: ParamStore, rng: np.random.Generator, scale: float = 0.5) -> dict[str, Tensor]:
    for _, tensor in store:
        tensor.data[...] = rng.normal(size=tensor.shape) * scale
    return dict(store.tensors)


def _random_target(rng: np.random.Generator, classes: int, dims: tuple[int, int, int]) -> SemGrid:
    labels = rng.integers(0, classes, size=dims)
    valid = rng.random(dims) < 0.8
    valid.flat[0] = True
    return SemGrid(labels, valid)


class _BrokenLeakyReLU(Function):
    name = "broken_leaky_relu"

    def forward(self, x, *, slope: float):
        return np.where(x >= 0, x, slope * x)

    def backward(self, grad):
        x = self.inputs[0].data
        return (grad * np.where(x >= 0, 1.5, 0.0),)


def register_default_cases(registry):
    """Register the gradient checks of every differentiable operation, block and loss"""

    @registry.case(name="conv3d")
    def conv3d_padded(rng):
        """3x3x3 convolution with unit padding."""
        x, w, b = _leaf(rng, 2, 4, 4, 4), _leaf(rng, 3, 2, 3, 3, 3, scale=0.3), _leaf(rng, 3)
        return CaseInstance({"x": x, "w": w, "b": b}, lambda: conv3d(x, w, b, padding=1))

    @registry.case()
    def conv3d_strided(rng):
        """2x2x2 convolution with stride 2 (encoder downsampling)."""
        x, w, b = _leaf(rng, 2, 4, 4, 4), _leaf(rng, 3, 2, 2, 2, 2, scale=0.3), _leaf(rng, 3)
        return CaseInstance({"x": x, "w": w, "b": b}, lambda: conv3d(x, w, b, stride=2))

    @registry.case()
    def conv3d_depthwise(rng):
        """Depthwise 3x3x3 convolution."""
        x, w, b = _leaf(rng, 3, 4, 4, 4), _leaf(rng, 3, 1, 3, 3, 3, scale=0.3), _leaf(rng, 3)
        return CaseInstance({"x": x, "w": w, "b": b}, lambda: conv3d(x, w, b, padding=1, depthwise=True))

    @registry.case(name="instance_norm3d")
    def instance_norm3d_case(rng):
        """Per-channel instance normalisation."""
        x = _leaf(rng, 3, 2, 2, 2)
        return CaseInstance({"x": x}, lambda: instance_norm3d(x, 1e-5))

    @registry.case(name="leaky_relu")
    def leaky_relu_case(rng):
        """Leaky ReLU away from the kink."""
        x = _away_from_zero(rng, 4, 5)
        return CaseInstance({"x": x}, lambda: leaky_relu(x, 0.01))

    @registry.case(name="linear")
    def linear_case(rng):
        """Affine map along the last axis."""
        x, w, b = _leaf(rng, 5, 4), _leaf(rng, 3, 4), _leaf(rng, 3)
        return CaseInstance({"x": x, "w": w, "b": b}, lambda: linear(x, w, b))

    @registry.case()
    def softmax(rng):
        """Softmax over the last axis."""
        x = _leaf(rng, 4, 6)
        return CaseInstance({"x": x}, lambda: softmax_lastdim(x))

    @registry.case()
    def log_softmax(rng):
        """Log-softmax over the last axis."""
        x = _leaf(rng, 4, 6)
        return CaseInstance({"x": x}, lambda: log_softmax_lastdim(x))

    @registry.case(name="layer_norm")
    def layer_norm_case(rng):
        """Layer normalisation with gain and shift."""
        x, gain, shift = _leaf(rng, 5, 6), _leaf(rng, 6), _leaf(rng, 6)
        return CaseInstance({"x": x, "gain": gain, "shift": shift}, lambda: layer_norm(x, gain, shift, 1e-5))

    @registry.case()
    def upsample(rng):
        """Nearest-neighbour 2x upsampling."""
        x = _leaf(rng, 2, 2, 2, 2)
        return CaseInstance({"x": x}, lambda: nearest_upsample3d(x, 2))

    @registry.case(name="max_pool3d")
    def max_pool3d_case(rng):
        """2x2x2 max pooling."""
        x = _leaf(rng, 2, 4, 4, 4)
        return CaseInstance({"x": x}, lambda: max_pool3d(x))

    @registry.case(name="embedding")
    def embedding_case(rng):
        """Table row lookup with repeated indices."""
        table = _leaf(rng, 5, 3)
        indices = rng.integers(0, 5, size=(2, 3, 2))
        return CaseInstance({"table": table}, lambda: embedding(table, indices))

    @registry.case(name="attention")
    def attention_case(rng):
        """Dense multi-head scaled dot-product attention."""
        q, k, v = _leaf(rng, 2, 5, 3), _leaf(rng, 2, 4, 3), _leaf(rng, 2, 4, 3)
        return CaseInstance({"q": q, "k": k, "v": v}, lambda: attention(q, k, v))

    @registry.case()
    def attention_masked(rng):
        """Attention with a key mask."""
        q, k, v = _leaf(rng, 2, 4, 3), _leaf(rng, 2, 4, 3), _leaf(rng, 2, 4, 3)
        mask = np.tril(np.ones((4, 4), dtype=bool))
        return CaseInstance({"q": q, "k": k, "v": v}, lambda: attention(q, k, v, mask))

    @registry.case(name="neighborhood_attention")
    def neighborhood_attention_case(rng):
        """Window-restricted attention on a 3x3x3 volume."""
        q, k, v = _leaf(rng, 2, 27, 3), _leaf(rng, 2, 27, 3), _leaf(rng, 2, 27, 3)
        index = neighborhood_index((3, 3, 3), 3)
        return CaseInstance({"q": q, "k": k, "v": v}, lambda: neighborhood_attention(q, k, v, index))

    @registry.case()
    def elementwise(rng):
        """Arithmetic, exp, log, abs and clamp composed with broadcasting."""
        a, b, c = _leaf(rng, 3, 4), _leaf(rng, 4), _away_from_zero(rng, 3, 1)

        def forward():
            inner = exp(a * 0.5) * (b * b) + 1.0
            return log(inner) / (abs_(c) + 1.0) - clamp_min(a, -10.0)

        return CaseInstance({"a": a, "b": b, "c": c}, forward)

    @registry.case()
    def layout(rng):
        """Reductions and reshapes: sum, mean, reshape, permute, concat, take."""
        a, b = _leaf(rng, 2, 3, 4), _leaf(rng, 2, 3, 2)
        index = np.array([3, 0, 0, 5])

        def forward():
            joined = concat([a, b], axis=2).permute(2, 0, 1)
            picked = take(joined.reshape(6, 6), index, axis=1)
            return picked.sum(axis=0) + picked.mean(axis=1, keepdims=True).reshape(6, 1).sum(axis=0)

        return CaseInstance({"a": a, "b": b}, forward)

    def _feb(rng, variant: str):
        store = ParamStore(int(rng.integers(1 << 30)))
        if variant == "conv_down":
            down = store.conv("down", 4, 2, 2)
        else:
            down = store.conv("down", 4, 2, 1)
        params = FebParams(
            block=build_conv_block(store, "block", 2, 2),
            down=down,
            post_block=build_conv_block(store, "post", 4, 4),
        )
        tensors = _randomised(store, rng)
        x = _leaf(rng, 2, 4, 4, 4)

        def forward():
            skip, out = feb_forward(x, params, variant)
            return concat([skip.reshape(-1), out.reshape(-1)], axis=0)

        return CaseInstance({"x": x, **tensors}, forward)

    @registry.case()
    def feb_conv_down(rng):
        """Encoder block with strided-convolution downsampling and a second ConvBlock."""
        return _feb(rng, "conv_down")

    @registry.case()
    def feb_maxpool(rng):
        """Encoder block with max-pool downsampling."""
        return _feb(rng, "maxpool")

    @registry.case()
    def fab(rng):
        """Convolutional aggregation block."""
        store = ParamStore(int(rng.integers(1 << 30)))
        params = build_fab(store, "fab", 2, 4)
        tensors = _randomised(store, rng)
        coarse, skip = _leaf(rng, 4, 2, 2, 2), _leaf(rng, 2, 4, 4, 4)
        return CaseInstance({"coarse": coarse, "skip": skip, **tensors}, lambda: fab_forward(coarse, skip, params))

    def _pna(rng):
        store = ParamStore(int(rng.integers(1 << 30)))
        params = build_pna_block(store, "pna", 4, heads=2, window=3)
        return params, _randomised(store, rng)

    @registry.case()
    def self_attention(rng):
        """Self-attention block over all voxels."""
        params, tensors = _pna(rng)
        f_up = _leaf(rng, 4, 2, 2, 2)
        return CaseInstance({"f_up": f_up, **tensors}, lambda: self_attention_block(f_up, params))

    @registry.case()
    def neighborhood_cross(rng):
        """Neighborhood cross-attention between decoder and skip features."""
        params, tensors = _pna(rng)
        skip, f_up = _leaf(rng, 4, 3, 3, 3), _leaf(rng, 4, 3, 3, 3)
        return CaseInstance({"skip": skip, "f_up": f_up, **tensors}, lambda: neighborhood_cross_attention(skip, f_up, params))

    @registry.case()
    def pna_fab(rng):
        """Attention aggregation block on a 4x4x4 skip volume."""
        params, tensors = _pna(rng)
        coarse, skip = _leaf(rng, 8, 2, 2, 2), _leaf(rng, 4, 4, 4, 4)
        return CaseInstance({"coarse": coarse, "skip": skip, **tensors}, lambda: pna_fab_forward(coarse, skip, params))

    def _fusion(rng):
        store = ParamStore(int(rng.integers(1 << 30)))
        params = build_fusion(store, "fusion", 4, global_dim=6, token_dim=5, heads=2)
        return params, _randomised(store, rng)

    @registry.case()
    def sigm(rng):
        """Global affine modulation from a text vector."""
        params, tensors = _fusion(rng)
        f_in, g = _leaf(rng, 4, 2, 2, 2), _leaf(rng, 6)
        return CaseInstance({"f_in": f_in, "global": g, **tensors}, lambda: sigm_modulate(f_in, g, params.sigm))

    @registry.case()
    def dcam(rng):
        """Dual cross-attention between tokens and voxels."""
        params, tensors = _fusion(rng)
        f_in, tokens = _leaf(rng, 4, 2, 2, 2), _leaf(rng, 3, 5)
        return CaseInstance({"f_in": f_in, "tokens": tokens, **tensors}, lambda: dcam_forward(f_in, tokens, params.dcam))

    @registry.case(name="weighted_ce")
    def weighted_ce_case(rng):
        """Class-weighted cross-entropy over valid voxels."""
        logits = _leaf(rng, 3, 2, 2, 2)
        target = _random_target(rng, 3, (2, 2, 2))
        weights = ClassWeights(0.5 + rng.random(3))
        return CaseInstance({"logits": logits}, lambda: weighted_ce(logits, target, weights))

    @registry.case()
    def scal_semantic(rng):
        """Semantic scene-class affinity loss on softmax probabilities."""
        logits = _leaf(rng, 3, 2, 2, 2)
        target = _random_target(rng, 3, (2, 2, 2))
        return CaseInstance({"logits": logits}, lambda: scal(class_probs(logits), target, "semantic"))

    @registry.case()
    def scal_geometric(rng):
        """Geometric scene-class affinity loss on softmax probabilities."""
        logits = _leaf(rng, 3, 2, 2, 2)
        target = _random_target(rng, 3, (2, 2, 2))
        return CaseInstance({"logits": logits}, lambda: scal(class_probs(logits), target, "geometric"))

    @registry.case()
    def lovasz(rng):
        """Lovasz-softmax on a few voxels."""
        logits = _leaf(rng, 3, 2, 2, 1)
        target = _random_target(rng, 3, (2, 2, 1))
        return CaseInstance({"logits": logits}, lambda: lovasz_softmax(class_probs(logits), target))

    @registry.case(negative_control=True)
    def corrupted_backward(rng):
        """Leaky ReLU with a deliberately wrong backward pass."""
        x = _away_from_zero(rng, 4, 5)
        return CaseInstance({"x": x}, lambda: _BrokenLeakyReLU.apply(x, slope=0.01))

    logger.debug(f"Registered {len(registry.names(include_negative=True))} gradient check cases")
