"""Weight-Freezing for fully connected classifiers, with an EEG-style pipeline."""

from .layers import FrozenDense, MaskMatrix, apply_mask_to_grad, make_mask, sparsify_weights
from .optim import AdamW, SGD, softmax_cross_entropy
from .tensor import Rng, matmul, sym_eig, sym_inv_sqrt

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "FrozenDense",
    "MaskMatrix",
    "Rng",
    "SGD",
    "apply_mask_to_grad",
    "make_mask",
    "matmul",
    "softmax_cross_entropy",
    "sparsify_weights",
    "sym_eig",
    "sym_inv_sqrt",
]
