from voxrefine.tensor.functional import abs_, clamp_min, concat, exp, log, take
from voxrefine.tensor.models import ShapeError, TensorError
from voxrefine.tensor.ops import (
    attention,
    attention_weights,
    conv3d,
    embedding,
    instance_norm3d,
    layer_norm,
    leaky_relu,
    linear,
    log_softmax_lastdim,
    max_pool3d,
    nearest_upsample3d,
    neighborhood_attention,
    neighborhood_attention_weights,
    neighborhood_index,
    softmax_lastdim,
)
from voxrefine.tensor.tensor import Function, Graph, Tensor, backward, zero_grad

__all__ = [
    'Function',
    'Graph',
    'Tensor',
    'TensorError',
    'ShapeError',
    'backward',
    'abs_',
    'clamp_min',
    'concat',
    'exp',
    'log',
    'take',
    'zero_grad',
    'attention',
    'attention_weights',
    'conv3d',
    'embedding',
    'instance_norm3d',
    'layer_norm',
    'leaky_relu',
    'linear',
    'log_softmax_lastdim',
    'max_pool3d',
    'nearest_upsample3d',
    'neighborhood_attention',
    'neighborhood_attention_weights',
    'neighborhood_index',
    'softmax_lastdim',
]
