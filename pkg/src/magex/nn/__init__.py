from .layers import (
    GRUParams,
    GumbelSample,
    LayerParams,
    gcn_layer,
    gumbel_softmax,
    huber_loss,
    linear,
    mlp_forward,
    normalized_adjacency,
    orthogonal,
    recurrent_step,
    sample_gumbel,
)
from .optim import AdamState, adam_update, clip_by_global_norm, global_norm, zero_grads
from .autodiff import ShapeError, Tensor, log_softmax, softmax, straight_through, tensor

__all__ = [
    "AdamState", "GRUParams", "GumbelSample", "LayerParams", "ShapeError", "Tensor",
    "adam_update", "clip_by_global_norm", "gcn_layer", "global_norm", "gumbel_softmax",
    "huber_loss", "linear", "log_softmax", "mlp_forward", "normalized_adjacency", "orthogonal",
    "recurrent_step", "sample_gumbel", "softmax", "straight_through", "tensor", "zero_grads",
]
