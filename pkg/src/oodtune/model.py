"""MLP classifier and the scalar functionals derived from its logits.

The classifier maps a D-dimensional input to C logits through relu hidden
layers.  From the logits we derive softmax probabilities, Shannon entropy,
prediction confidence, a nonnegative negative-entropy score, and the scaled
energy whose Boltzmann form defines the classifier's implicit sample density:

    energy(x) = sum_y (f_y / c) * (1 - exp(f_y / c))

Low energy corresponds to peaked (low-entropy, high-confidence) predictions.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ArrayLike = Union[np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class EnergyConfig:
    """Scaling constant for the energy; c_scale=1 leaves the logits raw."""

    c_scale: float = 5.0

    def __post_init__(self):
        if not self.c_scale > 0:
            raise ValueError(f"c_scale must be positive, got {self.c_scale}")


class Discriminator:
    """Fully connected relu network producing one logit per class.

    ``layer_dims`` is (D, h1, ..., C) with C >= 2.  Weights use He-normal
    initialization from the supplied generator; biases start at zero.
    """

    def __init__(self, layer_dims: Sequence[int], rng: np.random.Generator):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2:
            raise ValueError("layer_dims needs at least input and output sizes")
        if any(d < 1 for d in dims):
            raise ValueError(f"layer dimensions must be positive: {dims}")
        if dims[-1] < 2:
            raise ValueError(f"class count must be >= 2, got {dims[-1]}")
        self.layer_dims = dims
        self.weights: List[Tensor] = []
        self.biases: List[Tensor] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
        self._frozen_views: Optional[List[Tensor]] = None

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> List[Tensor]:
        params: List[Tensor] = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def _constant_params(self) -> List[Tensor]:
        # params are rebound (never mutated in place) by the optimizer, so an
        # identity check keeps cached constant views valid
        params = self.parameters()
        views = self._frozen_views
        if views is None or any(v.data is not p.data for v, p in zip(views, params)):
            views = [p.detach() for p in params]
            self._frozen_views = views
        return views

    def logits(self, x: Union[Tensor, ArrayLike], params_on_tape: bool = True) -> Tensor:
        """Forward pass producing the n x C logit matrix.

        With ``params_on_tape=False`` the parameters enter as constants, so a
        backward pass reaches only the input (used by the sampler and by
        input-perturbation detectors; it cannot touch or grad the weights).
        """
        if not isinstance(x, Tensor):
            x = Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        if x.data.ndim != 2 or x.data.shape[1] != self.n_inputs:
            raise ValueError(
                f"input width {x.data.shape} does not match model D={self.n_inputs}")
        if params_on_tape:
            layers = list(zip(self.weights, self.biases))
        else:
            views = self._constant_params()
            layers = list(zip(views[0::2], views[1::2]))
        out = x
        last = len(layers) - 1
        for i, (w, b) in enumerate(layers):
            out = ad.add(ad.matmul(out, w), b)
            if i != last:
                out = ad.relu(out)
        return out

    def predict(self, x: ArrayLike) -> np.ndarray:
        """Argmax class per row; ties resolve to the lowest index."""
        logits = self.logits(x, params_on_tape=False).data
        return logits.argmax(axis=1)

    def copy(self) -> "Discriminator":
        dup = Discriminator.__new__(Discriminator)
        dup.layer_dims = list(self.layer_dims)
        dup.weights = [Tensor(w.data.copy(), requires_grad=True) for w in self.weights]
        dup.biases = [Tensor(b.data.copy(), requires_grad=True) for b in self.biases]
        dup._frozen_views = None
        return dup

    def param_digest(self) -> str:
        """SHA-256 over dims and raw parameter bytes; detects any mutation."""
        h = hashlib.sha256()
        h.update(np.asarray(self.layer_dims, dtype=np.int64).tobytes())
        for p in self.parameters():
            h.update(p.data.tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# array-level functionals (scoring and logging paths, no tape)
# ---------------------------------------------------------------------------

def softmax_probs(logits: ArrayLike) -> np.ndarray:
    """Stable (max-shifted) softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("softmax on non-finite logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def shannon_entropy(probs: ArrayLike) -> Union[float, np.ndarray]:
    """H = -sum p ln p along the last axis, with 0 ln 0 := 0."""
    p = np.asarray(probs, dtype=np.float64)
    if (p < -1e-12).any():
        raise ValueError("negative probabilities")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    h = -terms.sum(axis=-1)
    return float(h) if h.ndim == 0 else h


def confidence(probs: ArrayLike) -> Union[float, np.ndarray]:
    """Maximum class probability along the last axis."""
    p = np.asarray(probs, dtype=np.float64)
    m = p.max(axis=-1)
    return float(m) if m.ndim == 0 else m


class EnergyOverflowError(OverflowError):
    """exp blew up for some logit; reports which one."""


def _energy_row(row: np.ndarray, c_scale: float) -> float:
    total = 0.0
    for j, f in enumerate(row):
        s = f / c_scale
        try:
            e = math.exp(s)
        except OverflowError:
            raise EnergyOverflowError(
                f"logit {j} = {f!r} overflows exp at scale c={c_scale}") from None
        total += s * (1.0 - e)
    return total


def energy(logits: ArrayLike, cfg: EnergyConfig) -> Union[float, np.ndarray]:
    """Scaled energy sum_y (f_y/c)(1 - exp(f_y/c)); c=1 gives the raw form.

    Accumulates term by term in order, one class at a time, so the value is
    bit-identical to a straightforward loop over classes.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(z).all():
        raise ValueError("energy on non-finite logits")
    if z.ndim == 1:
        return _energy_row(z, cfg.c_scale)
    return np.array([_energy_row(row, cfg.c_scale) for row in z])


def generator_score(logits: ArrayLike, c_offset: float) -> float:
    """Nonnegative density score -H + c_offset of the implicit generator.

    ``c_offset`` must be at least ln C so the score stays nonnegative over
    the whole simplex.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("generator_score expects a single logit vector")
    log_c = math.log(z.shape[0])
    if c_offset < log_c - 1e-12:
        raise ValueError(f"c_offset {c_offset} < ln C = {log_c:.6f}")
    return float(-shannon_entropy(softmax_probs(z)) + c_offset)


# ---------------------------------------------------------------------------
# tape composites (differentiable paths)
# ---------------------------------------------------------------------------

def log_softmax_t(logits: Tensor) -> Tensor:
    """Row-wise max-shifted log-softmax on the tape."""
    m = ad.reduce_max(logits, axis=1, keepdims=True)
    shifted = ad.sub(logits, m)
    lse = ad.log(ad.reduce_sum(ad.exp(shifted), axis=1, keepdims=True))
    return ad.sub(shifted, lse)


def mean_entropy_t(logits: Tensor) -> Tensor:
    """Mean Shannon entropy of the rows' softmax distributions."""
    logp = log_softmax_t(logits)
    p = ad.exp(logp)
    row_neg_h = ad.reduce_sum(ad.mul(p, logp), axis=1)
    return ad.scale(ad.reduce_mean(row_neg_h), -1.0)


def cross_entropy_t(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels."""
    labels = np.asarray(labels)
    n, n_classes = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels outside [0, C)")
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels] = 1.0
    picked = ad.reduce_sum(ad.mul(Tensor(onehot), log_softmax_t(logits)), axis=1)
    return ad.scale(ad.reduce_mean(picked), -1.0)


def energy_t(logits: Tensor, cfg: EnergyConfig) -> Tensor:
    """Tape version of ``energy`` summed over every row and class."""
    s = ad.scale(logits, 1.0 / cfg.c_scale)
    return ad.reduce_sum(ad.sub(s, ad.mul(s, ad.exp(s))))
