from voxrefine.network.checkpoint import (
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_weights,
    save_checkpoint,
)
from voxrefine.network.config import GRID_MULTIPLE, RefineConfig
from voxrefine.network.models import (
    ConfigMismatchError,
    MissingTextError,
    MultiScaleLogits,
    NetworkError,
)
from voxrefine.network.params import ParamStore
from voxrefine.network.pnam import (
    neighborhood_cross_attention,
    pna_fab_forward,
    self_attention_block,
)
from voxrefine.network.unet import (
    RefineWeights,
    argmax_labels,
    build_weights,
    embed_labels,
    fab_forward,
    feb_forward,
    pred_head,
    refine_forward,
)
from voxrefine.network.vlgm import apply_fusion, dcam_forward, sigm_modulate

__all__ = [
    'GRID_MULTIPLE',
    'ConfigMismatchError',
    'MissingTextError',
    'MultiScaleLogits',
    'NetworkError',
    'ParamStore',
    'RefineConfig',
    'RefineWeights',
    'apply_fusion',
    'argmax_labels',
    'build_weights',
    'dcam_forward',
    'decode_checkpoint',
    'embed_labels',
    'encode_checkpoint',
    'fab_forward',
    'feb_forward',
    'load_checkpoint',
    'load_weights',
    'neighborhood_cross_attention',
    'pna_fab_forward',
    'pred_head',
    'refine_forward',
    'save_checkpoint',
    'self_attention_block',
    'sigm_modulate',
]
