from voxrefine.losses.ce import class_weights_from_frequencies, multiscale_ce, weighted_ce
from voxrefine.losses.lovasz import lovasz_softmax
from voxrefine.losses.models import ClassWeights, LossBreakdown, LossError
from voxrefine.losses.scal import scal
from voxrefine.losses.total import class_probs, total_loss

__all__ = [
    'ClassWeights',
    'LossBreakdown',
    'LossError',
    'class_probs',
    'class_weights_from_frequencies',
    'lovasz_softmax',
    'multiscale_ce',
    'scal',
    'total_loss',
    'weighted_ce',
]
