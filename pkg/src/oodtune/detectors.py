"""Post-hoc OOD scoring: max-softmax baseline and the perturbed temperature-
scaled variant.

The perturbed detector nudges each input a small step toward higher
temperature-scaled confidence before scoring:

    x' = clip(x - eps * sign(-grad_x log max_y softmax(f(x)/T)_y), -1, 1)
    score(x) = max_y softmax(f(x')/T)_y

At (T=1, eps=0) it reduces exactly to the baseline.  Scoring is read-only
over the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward
from .metrics import auroc
from .model import Discriminator, log_softmax_t, softmax_probs


@dataclass(frozen=True)
class OdinConfig:
    temperature: float = 1.0
    perturb_eps: float = 0.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.perturb_eps < 0:
            raise ValueError(f"perturb_eps must be >= 0, got {self.perturb_eps}")


def msp_score(model: Discriminator, x) -> np.ndarray:
    """Maximum softmax probability per row; higher means more ID-like."""
    logits = model.logits(np.atleast_2d(np.asarray(x, float)),
                          params_on_tape=False).data
    return softmax_probs(logits).max(axis=1)


def odin_score(model: Discriminator, x, cfg: OdinConfig) -> np.ndarray:
    """Temperature-scaled confidence after a confidence-raising perturbation."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if cfg.perturb_eps > 0.0:
        xt = Tensor(x, requires_grad=True)
        logp = log_softmax_t(ad.scale(model.logits(xt, params_on_tape=False),
                                      1.0 / cfg.temperature))
        backward(ad.reduce_sum(ad.reduce_max(logp, axis=1)))
        g = xt.grad
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite input gradient during scoring")
        x = np.clip(x - cfg.perturb_eps * np.sign(-g), -1.0, 1.0)
    logits = model.logits(x, params_on_tape=False).data
    return softmax_probs(logits / cfg.temperature).max(axis=1)


DEFAULT_TEMPERATURES = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0)


def default_odin_grid() -> List[OdinConfig]:
    """10 temperatures x 21 perturbation magnitudes in [0, 0.004]."""
    return [OdinConfig(temperature=t, perturb_eps=float(e))
            for t in DEFAULT_TEMPERATURES
            for e in np.linspace(0.0, 0.004, 21)]


@dataclass
class SweepResult:
    best: OdinConfig
    best_auroc: float
    table: List[Tuple[OdinConfig, float]]


def detector_sweep(model: Discriminator, id_x, ood_x,
                   grid: Sequence[OdinConfig]) -> SweepResult:
    """AUROC per config; best is the argmax, first in grid order on ties."""
    id_x = np.atleast_2d(np.asarray(id_x, float))
    ood_x = np.atleast_2d(np.asarray(ood_x, float))
    if id_x.shape[0] == 0 or ood_x.shape[0] == 0:
        raise ValueError("detector_sweep needs nonempty ID and OOD sets")
    if not grid:
        raise ValueError("empty detector grid")
    table = []
    for cfg in grid:
        value = auroc(odin_score(model, id_x, cfg),
                      odin_score(model, ood_x, cfg)).auroc
        table.append((cfg, value))
    best_idx = max(range(len(table)), key=lambda i: (table[i][1], -i))
    return SweepResult(best=table[best_idx][0], best_auroc=table[best_idx][1],
                       table=table)


def detector_sweep_multi(model: Discriminator, id_x,
                         ood_sets: Dict[str, np.ndarray],
                         grid: Sequence[OdinConfig],
                         per_set: bool = False):
    """Sweep against several OOD sets.

    ``per_set=False`` picks one config maximizing the mean AUROC across sets;
    ``per_set=True`` returns an independent SweepResult per set.
    """
    if per_set:
        return {name: detector_sweep(model, id_x, ood, grid)
                for name, ood in ood_sets.items()}
    if not ood_sets:
        raise ValueError("no OOD sets supplied")
    id_x = np.atleast_2d(np.asarray(id_x, float))
    table = []
    for cfg in grid:
        id_scores = odin_score(model, id_x, cfg)
        mean_val = float(np.mean([
            auroc(id_scores, odin_score(model, ood, cfg)).auroc
            for ood in ood_sets.values()]))
        table.append((cfg, mean_val))
    best_idx = max(range(len(table)), key=lambda i: (table[i][1], -i))
    return SweepResult(best=table[best_idx][0], best_auroc=table[best_idx][1],
                       table=table)
