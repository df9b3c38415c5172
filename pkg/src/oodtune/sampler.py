"""Langevin-style sampler drawing low-entropy inputs from a classifier.

Each chain starts uniform in the clip box and descends the classifier's
scaled energy by sign-gradient steps with Gaussian noise injected:

    x_t = clip(x_{t-1} - (eps_t / 2) * sign(grad_x energy(x_{t-1})) + z_t)

with z_t ~ N(0, eps_t * I) and eps_t decayed by gamma every ``decay_period``
steps.  A chain stops once the confidence of its iterates stays within
``conv_tol`` over the last ``conv_window`` steps, or at ``t_max``.  The model
is consumed read-only; its parameters never join the gradient graph.

Chains never communicate: each owns a generator stream, and batches advance
in fixed groups of ``GROUP_SIZE`` whose rows share one tape per step purely
for speed.  The grouping is a function of the chain count alone, so a batch
is reproducible and identical whether the groups run sequentially or on a
thread pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .model import Discriminator, EnergyConfig, energy, energy_t, softmax_probs

GROUP_SIZE = 16


class ChainError(RuntimeError):
    """A chain hit a non-finite state; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class BatchSamplingError(RuntimeError):
    """One or more chains of a batch failed; lists the failing indices."""

    def __init__(self, failures: List[Tuple[int, int, str]]):
        idx = [i for i, _, _ in failures]
        super().__init__(f"{len(failures)} chain(s) failed at indices {idx}: "
                         + "; ".join(f"chain {i}: {msg} at iteration {t}"
                                     for i, t, msg in failures))
        self.failed_indices = idx


@dataclass(frozen=True)
class LangevinConfig:
    eps0: float = 0.1
    gamma: float = 0.9
    decay_period: int = 100
    t_max: int = 100
    conv_window: int = 5
    conv_tol: float = 1e-3
    clip_lo: float = -1.0
    clip_hi: float = 1.0
    energy_cfg: EnergyConfig = field(default_factory=EnergyConfig)
    rng_seed: int = 0
    # noise z ~ N(0, eps*I) read as covariance, so std = sqrt(eps);
    # "std" instead uses std = eps directly.
    noise_mode: str = "covariance"

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError(f"eps0 must be positive, got {self.eps0}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.decay_period < 1 or self.t_max < 1:
            raise ValueError("decay_period and t_max must be >= 1")
        if self.conv_window < 2:
            raise ValueError("conv_window must be >= 2")
        if not self.clip_lo < self.clip_hi:
            raise ValueError("clip_lo must be below clip_hi")
        if self.noise_mode not in ("covariance", "std"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")

    def noise_std(self, eps: float) -> float:
        return math.sqrt(eps) if self.noise_mode == "covariance" else eps


def step_size(cfg: LangevinConfig, t: int) -> float:
    """eps_t = eps0 * gamma^floor(t / decay_period), exactly."""
    return cfg.eps0 * cfg.gamma ** (t // cfg.decay_period)


@dataclass
class Chain:
    x: np.ndarray
    t: int
    eps_t: float
    conf_history: Tuple[float, ...]
    converged: bool


@dataclass
class ChainResult:
    sample: np.ndarray
    t_stop: int
    converged: bool
    initial_confidence: float
    final_confidence: float
    initial_energy: float
    final_energy: float
    # rows (t, confidence, energy, x...) including t=0, when recorded
    trajectory: Optional[List[Tuple[float, ...]]] = None


def init_chain(dim: int, cfg: LangevinConfig, rng: np.random.Generator) -> Chain:
    """Fresh chain with x0 uniform over the clip box."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    x0 = rng.uniform(cfg.clip_lo, cfg.clip_hi, size=dim)
    return Chain(x=x0, t=0, eps_t=cfg.eps0, conf_history=(), converged=False)


def _grad_rows(model: Discriminator, xs: np.ndarray,
               energy_cfg: EnergyConfig) -> np.ndarray:
    """Row-wise gradient of the total energy; parameters stay off the tape."""
    xt = Tensor(xs, requires_grad=True)
    ad.backward(energy_t(model.logits(xt, params_on_tape=False), energy_cfg))
    return xt.grad


def _score_rows(model: Discriminator, xs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(confidence, logits) per row, without recording anything."""
    logits = model.logits(xs, params_on_tape=False).data
    return softmax_probs(logits).max(axis=1), logits


def lds_step(chain: Chain, model: Discriminator, cfg: LangevinConfig,
             rng: np.random.Generator) -> Chain:
    """Advance one iteration; appends the new state's confidence."""
    if chain.converged:
        raise ValueError("stepping a converged chain")
    t = chain.t + 1
    eps = step_size(cfg, t)
    try:
        g = _grad_rows(model, chain.x[None, :], cfg.energy_cfg)[0]
    except ValueError as exc:
        raise ChainError(f"non-finite forward at iteration {t}: {exc}", t) from exc
    if not np.isfinite(g).all():
        raise ChainError(f"non-finite energy gradient at iteration {t}", t)
    z = rng.normal(0.0, cfg.noise_std(eps), size=chain.x.shape)
    x_new = np.clip(chain.x - (eps / 2.0) * np.sign(g) + z,
                    cfg.clip_lo, cfg.clip_hi)
    try:
        conf = float(_score_rows(model, x_new[None, :])[0][0])
    except ValueError as exc:
        raise ChainError(f"non-finite forward at iteration {t}: {exc}", t) from exc
    history = (chain.conf_history + (conf,))[-cfg.conv_window:]
    converged = (len(history) == cfg.conv_window
                 and max(history) - min(history) < cfg.conv_tol)
    return Chain(x=x_new, t=t, eps_t=eps, conf_history=history, converged=converged)


def _run_group(model: Discriminator, cfg: LangevinConfig,
               streams: Sequence[np.random.Generator],
               record_trajectory: bool = False,
               ) -> Tuple[List[Optional[ChainResult]], List[Tuple[int, int, str]]]:
    """Advance a group of chains to completion, one shared tape per step.

    Returns per-chain results (None where a chain aborted) plus the abort
    messages.  Rows whose forward or gradient turns non-finite are probed
    individually so failures name the exact chain.
    """
    m = len(streams)
    dim = model.n_inputs
    xs = np.stack([s.uniform(cfg.clip_lo, cfg.clip_hi, size=dim) for s in streams])
    conf0, logits = _score_rows(model, xs)  # initial state is finite by clipping
    e0 = np.asarray(energy(logits, cfg.energy_cfg), dtype=np.float64).reshape(m)

    histories: List[Tuple[float, ...]] = [()] * m
    alive = np.ones(m, dtype=bool)
    converged = np.zeros(m, dtype=bool)
    t_stop = np.full(m, cfg.t_max, dtype=int)
    cur_logits = logits.copy()
    failures: List[Tuple[int, int, str]] = []
    trails: Optional[List[List[Tuple[float, ...]]]] = None
    if record_trajectory:
        trails = [[(0, float(conf0[i]), float(e0[i]), *xs[i])] for i in range(m)]

    def fail(i: int, t: int, why: str) -> None:
        failures.append((i, t, why))
        alive[i] = False

    t = 0
    while alive.any() and t < cfg.t_max:
        t += 1
        eps = step_size(cfg, t)
        idx = np.flatnonzero(alive)

        try:
            g = _grad_rows(model, xs[idx], cfg.energy_cfg)
        except ValueError:
            g = np.full((idx.size, dim), np.nan)
            for j, i in enumerate(idx):
                try:
                    g[j] = _grad_rows(model, xs[i:i + 1], cfg.energy_cfg)[0]
                except ValueError as exc:
                    fail(i, t, f"non-finite forward: {exc}")
        finite = np.isfinite(g).all(axis=1)
        for j in np.flatnonzero(~finite):
            if alive[idx[j]]:
                fail(idx[j], t, "non-finite energy gradient")
        idx, g = idx[finite], g[finite]
        if idx.size == 0:
            continue

        std = cfg.noise_std(eps)
        z = np.stack([streams[i].normal(0.0, std, size=dim) for i in idx])
        xs[idx] = np.clip(xs[idx] - (eps / 2.0) * np.sign(g) + z,
                          cfg.clip_lo, cfg.clip_hi)

        try:
            conf, logits = _score_rows(model, xs[idx])
        except ValueError:
            conf = np.full(idx.size, np.nan)
            logits = np.full((idx.size, model.n_classes), np.nan)
            for j, i in enumerate(idx):
                try:
                    row_conf, row_logits = _score_rows(model, xs[i:i + 1])
                    conf[j], logits[j] = row_conf[0], row_logits[0]
                except ValueError as exc:
                    fail(i, t, f"non-finite forward: {exc}")

        for j, i in enumerate(idx):
            if not alive[i]:
                continue
            cur_logits[i] = logits[j]
            histories[i] = (histories[i] + (float(conf[j]),))[-cfg.conv_window:]
            if trails is not None:
                trails[i].append((t, float(conf[j]),
                                  float(energy(logits[j], cfg.energy_cfg)), *xs[i]))
            window = histories[i]
            if len(window) == cfg.conv_window and max(window) - min(window) < cfg.conv_tol:
                converged[i] = True
                alive[i] = False
                t_stop[i] = t

    failed = {i for i, _, _ in failures}
    results: List[Optional[ChainResult]] = []
    for i in range(m):
        if i in failed:
            results.append(None)
            continue
        results.append(ChainResult(
            sample=xs[i],
            t_stop=int(t_stop[i]),
            converged=bool(converged[i]),
            initial_confidence=float(conf0[i]),
            final_confidence=histories[i][-1] if histories[i] else float(conf0[i]),
            initial_energy=float(e0[i]),
            final_energy=float(energy(cur_logits[i], cfg.energy_cfg)),
            trajectory=trails[i] if trails is not None else None,
        ))
    return results, failures


def run_lds(model: Discriminator, cfg: LangevinConfig, rng: np.random.Generator,
            record_trajectory: bool = False) -> ChainResult:
    """Run one chain to confidence convergence or t_max; model is read-only."""
    results, failures = _run_group(model, cfg, [rng], record_trajectory)
    if failures:
        _, iteration, message = failures[0]
        raise ChainError(f"{message} at iteration {iteration}", iteration)
    return results[0]


def draw_batch(model: Discriminator, cfg: LangevinConfig, count: int,
               rng: np.random.Generator, parallel: bool = False) -> np.ndarray:
    """Run ``count`` independent chains and stack their samples.

    Chains get their own generators spawned from ``rng`` up front and are
    partitioned into groups by index alone, so the output is identical
    whether or not the groups execute on a thread pool.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count == 0:
        return np.zeros((0, model.n_inputs))
    streams = rng.spawn(count)
    spans = [(lo, min(lo + GROUP_SIZE, count)) for lo in range(0, count, GROUP_SIZE)]

    outputs: List[Optional[List[Optional[ChainResult]]]] = [None] * len(spans)
    all_failures: List[Tuple[int, int, str]] = []

    def run_span(k: int) -> None:
        lo, hi = spans[k]
        results, failures = _run_group(model, cfg, streams[lo:hi])
        outputs[k] = results
        all_failures.extend((lo + i, t, msg) for i, t, msg in failures)

    if parallel:
        with ThreadPoolExecutor() as pool:
            list(pool.map(run_span, range(len(spans))))
    else:
        for k in range(len(spans)):
            run_span(k)

    if all_failures:
        all_failures.sort()
        raise BatchSamplingError(all_failures)
    return np.vstack([res.sample for group in outputs for res in group])
