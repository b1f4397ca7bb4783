from .functional import (
    batch_norm,
    cross_entropy,
    dropout,
    dropout_mask,
    he_init,
    log_softmax,
    logsumexp,
    relu,
    softmax,
    softplus,
)
from .gradcheck import check_gradients, relative_error
from .rng import RngStream, as_generator
from .tape import Node, Tape

__all__ = [
    "Node", "RngStream", "Tape", "as_generator", "batch_norm", "check_gradients",
    "cross_entropy", "dropout", "dropout_mask", "he_init", "log_softmax", "logsumexp",
    "relative_error", "relu", "softmax", "softplus",
]
