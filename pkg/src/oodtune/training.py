"""Pretraining and entropy-regularized fine-tuning of the classifier.

Fine-tuning minimizes, per mini-batch,

    loss = CE(id_batch) - mean_entropy(generated_batch)

where the generated batch comes either from the Langevin sampler run against
a teacher (the model itself in ``live`` mode, a start-of-run snapshot in
``frozen`` mode) or from clipped Gaussian noise.  Generated samples enter the
loss as constants; no gradient reaches the sampler.  Samples are drawn fresh
every mini-batch, never cached, because each update moves the model's
high-confidence regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward, sgd_step
from .datasets import Dataset
from .detectors import msp_score
from .metrics import accuracy, auroc
from .model import (
    Discriminator,
    confidence,
    cross_entropy_t,
    energy,
    mean_entropy_t,
    shannon_entropy,
    softmax_probs,
)
from .sampler import LangevinConfig, draw_batch


@dataclass(frozen=True)
class FinetuneConfig:
    k: float = 0.1                 # generated samples per ID sample
    mu: float = 0.001              # learning rate
    batch_size: int = 128
    epochs: int = 30
    source: str = "langevin"       # or "gaussian"
    teacher_mode: str = "live"     # or "frozen"
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ValueError(f"k must lie in [0, 1], got {self.k}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.source not in ("langevin", "gaussian"):
            raise ValueError(f"unknown sample source {self.source!r}")
        if self.teacher_mode not in ("live", "frozen"):
            raise ValueError(f"unknown teacher_mode {self.teacher_mode!r}")


@dataclass
class EpochStats:
    epoch: int
    id_cross_entropy: float
    gen_entropy: float        # nan when the epoch generated nothing
    gen_confidence: float
    gen_energy: float
    id_accuracy: float


@dataclass
class TrainLog:
    records: List[EpochStats] = field(default_factory=list)
    lds_chains_run: int = 0

    CSV_HEADER = "epoch,ce,gen_entropy,gen_conf,gen_energy,id_acc"

    def csv_lines(self) -> List[str]:
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(",".join([
                str(r.epoch), repr(r.id_cross_entropy), repr(r.gen_entropy),
                repr(r.gen_confidence), repr(r.gen_energy), repr(r.id_accuracy),
            ]))
        return lines

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.csv_lines()) + "\n")


def standard_lr_schedule(lr0: float, total_epochs: int) -> Callable[[int], float]:
    """lr0 divided by 10 at 50% and again at 75% of the epoch budget."""
    def schedule(epoch: int) -> float:
        lr = lr0
        if total_epochs and epoch >= total_epochs // 2:
            lr /= 10.0
        if total_epochs and epoch >= (3 * total_epochs) // 4:
            lr /= 10.0
        return lr
    return schedule


def _check_labeled(dataset: Dataset, n_classes: int) -> None:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if dataset.labels is None:
        raise ValueError("dataset has no labels")
    if dataset.labels.max() >= n_classes:
        raise ValueError(
            f"label {dataset.labels.max()} outside [0, {n_classes})")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def pretrain(model: Discriminator, id_dataset: Dataset, epochs: int,
             rng: np.random.Generator,
             lr_schedule: Optional[Callable[[int], float]] = None,
             batch_size: int = 128) -> Tuple[Discriminator, TrainLog]:
    """Standard cross-entropy SGD over shuffled mini-batches, in place."""
    _check_labeled(id_dataset, model.n_classes)
    if lr_schedule is None:
        lr_schedule = standard_lr_schedule(0.1, epochs)
    log = TrainLog()
    params = model.parameters()
    for epoch in range(epochs):
        lr = lr_schedule(epoch)
        ce_sum, n_seen = 0.0, 0
        for idx in _batches(len(id_dataset), batch_size, rng):
            loss = cross_entropy_t(model.logits(id_dataset.inputs[idx]),
                                   id_dataset.labels[idx])
            backward(loss)
            sgd_step(params, lr)
            ce_sum += loss.item() * idx.size
            n_seen += idx.size
        log.records.append(EpochStats(
            epoch=epoch,
            id_cross_entropy=ce_sum / n_seen,
            gen_entropy=math.nan, gen_confidence=math.nan, gen_energy=math.nan,
            id_accuracy=accuracy(model, id_dataset.inputs, id_dataset.labels),
        ))
    return model, log


def finetune_loss(model: Discriminator, id_x: np.ndarray, id_y: np.ndarray,
                  gen_x: np.ndarray) -> Tensor:
    """CE on the ID batch minus the generated batch's mean entropy."""
    ce, entropy_term = _loss_parts(model, id_x, id_y, gen_x)
    if entropy_term is None:
        return ce
    return ad.sub(ce, entropy_term)


def _loss_parts(model, id_x, id_y, gen_x):
    ce = cross_entropy_t(model.logits(id_x), np.asarray(id_y))
    gen_x = np.asarray(gen_x, dtype=np.float64)
    if gen_x.size == 0:
        return ce, None
    # constants: gradients flow to the parameters only, never to the samples
    return ce, mean_entropy_t(model.logits(Tensor(gen_x)))


def finetune(model: Discriminator, id_dataset: Dataset,
             cfg: FinetuneConfig) -> Tuple[Discriminator, TrainLog]:
    """Fine-tune in place per the configured sample source and teacher mode."""
    _check_labeled(id_dataset, model.n_classes)
    master = np.random.SeedSequence(cfg.rng_seed)
    ss_shuffle, ss_sampler, ss_noise = master.spawn(3)
    shuffle_rng = np.random.default_rng(ss_shuffle)
    noise_rng = np.random.default_rng(ss_noise)

    teacher = model if cfg.teacher_mode == "live" else model.copy()
    params = model.parameters()
    log = TrainLog()
    dim = model.n_inputs

    for epoch in range(cfg.epochs):
        ce_sum, n_seen = 0.0, 0
        gen_ent_sum = gen_conf_sum = gen_energy_sum = 0.0
        n_gen_total = 0
        for idx in _batches(len(id_dataset), cfg.batch_size, shuffle_rng):
            n_gen = int(round(idx.size * cfg.k))
            if n_gen == 0:
                gen_x = np.zeros((0, dim))
            elif cfg.source == "langevin":
                chain_rng = np.random.default_rng(ss_sampler.spawn(1)[0])
                gen_x = draw_batch(teacher, cfg.langevin, n_gen, chain_rng)
                log.lds_chains_run += n_gen
            else:
                gen_x = np.clip(noise_rng.normal(size=(n_gen, dim)), -1.0, 1.0)

            if n_gen:
                gen_logits = model.logits(gen_x, params_on_tape=False).data
                gen_probs = softmax_probs(gen_logits)
                gen_ent_sum += float(np.sum(shannon_entropy(gen_probs)))
                gen_conf_sum += float(np.sum(confidence(gen_probs)))
                gen_energy_sum += float(np.sum(energy(gen_logits,
                                                      cfg.langevin.energy_cfg)))
                n_gen_total += n_gen

            ce, entropy_term = _loss_parts(
                model, id_dataset.inputs[idx], id_dataset.labels[idx], gen_x)
            loss = ce if entropy_term is None else ad.sub(ce, entropy_term)
            backward(loss)
            sgd_step(params, cfg.mu)
            ce_sum += ce.item() * idx.size
            n_seen += idx.size

        log.records.append(EpochStats(
            epoch=epoch,
            id_cross_entropy=ce_sum / n_seen,
            gen_entropy=gen_ent_sum / n_gen_total if n_gen_total else math.nan,
            gen_confidence=gen_conf_sum / n_gen_total if n_gen_total else math.nan,
            gen_energy=gen_energy_sum / n_gen_total if n_gen_total else math.nan,
            id_accuracy=accuracy(model, id_dataset.inputs, id_dataset.labels),
        ))
    return model, log


@dataclass
class EvalBundle:
    id_test: Dataset
    ood_sets: Sequence[Dataset]


def msp_auroc(model: Discriminator, bundle: EvalBundle) -> float:
    """Mean confidence-score AUROC across the bundle's OOD sets."""
    id_scores = msp_score(model, bundle.id_test.inputs)
    values = [auroc(id_scores, msp_score(model, ood.inputs)).auroc
              for ood in bundle.ood_sets]
    return float(np.mean(values))


@dataclass
class KSweepRow:
    k: float
    auroc: float
    accuracy: float


def k_sweep(model: Discriminator, id_dataset: Dataset,
            k_values: Sequence[float], bundle: EvalBundle,
            cfg: Optional[FinetuneConfig] = None) -> List[KSweepRow]:
    """Fine-tune a fresh copy of ``model`` per K and evaluate each."""
    base = cfg or FinetuneConfig()
    rows = []
    for k in k_values:
        candidate = model.copy()
        finetune(candidate, id_dataset, replace(base, k=float(k)))
        rows.append(KSweepRow(
            k=float(k),
            auroc=msp_auroc(candidate, bundle),
            accuracy=accuracy(candidate, bundle.id_test.inputs,
                              bundle.id_test.labels),
        ))
    return rows


DEFAULT_K_VALUES = (0.0, 0.01, 0.1, 0.4, 0.7, 1.0)
