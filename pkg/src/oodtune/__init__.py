"""Tools for probing and patching a classifier's out-of-distribution blind spots.

A trained softmax classifier induces an energy over inputs whose low-energy
regions are exactly its high-confidence predictions.  This package samples
those regions with a Langevin-style sampler and fine-tunes the classifier to
respond to them with high entropy, improving OOD detection while preserving
in-distribution accuracy.  Everything runs on a small built-in reverse-mode
autodiff engine over numpy float64 arrays.
"""

from .autodiff import Tensor, backward, grad_check, sgd_step
from .model import (
    Discriminator,
    EnergyConfig,
    confidence,
    energy,
    generator_score,
    shannon_entropy,
    softmax_probs,
)

__version__ = "0.1.0"
