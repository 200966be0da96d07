from voxrefine.network import RefineConfig, argmax_labels, build_weights, refine_forward
from voxrefine.train import RunConfig, train_refiner
from voxrefine.voxio import SemGrid, TextEmbedding

__all__ = [
    'RefineConfig',
    'RunConfig',
    'SemGrid',
    'TextEmbedding',
    'argmax_labels',
    'build_weights',
    'refine_forward',
    'train_refiner',
]
