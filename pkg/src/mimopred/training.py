"""Meta-training, per-user adaptation, and the joint-training baseline.

The meta-learner takes one full-batch SGD step per task on its support
samples, evaluates the stepped parameters on the query samples, and
applies a single ADAM update to the shared initialization using the sum
of the per-task query losses of the batch.  First-order mode (default)
treats the stepped parameters as constants when differentiating the
query loss; second-order mode differentiates through the inner step.

Adaptation to a new user repeats the same full-batch SGD step a fixed
number of times on that user's adaptation samples.  The baseline trains
one network with ADAM on all source samples pooled, matched to the
meta-learner in optimizer-step count, and is adapted identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, grad, mse_loss, no_grad
from .datasets import decode, pairs_to_arrays
from .errors import ConfigurationError, DatasetError, NumericError
from .models import ModelParams, init_params, mlp_forward
from .seeding import derive_seed, substream


@dataclass(frozen=True)
class MetaConfig:
    """Knobs of the meta-training loop."""

    inner_lr: float = 0.1
    outer_lr: float = 1e-5
    batch_size: int = 64
    n_epoch: int = 20
    adapt_steps: int = 10
    first_order: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.inner_lr <= 0 or self.outer_lr <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.n_epoch < 0:
            raise ConfigurationError(f"n_epoch must be >= 0, got {self.n_epoch}")
        if self.adapt_steps < 0:
            raise ConfigurationError(f"adapt_steps must be >= 0, got {self.adapt_steps}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")


class AdamState:
    """First and second moment accumulators with bias correction."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, params: ModelParams):
        self.m = [np.zeros_like(t.data) for t in params.tensors]
        self.v = [np.zeros_like(t.data) for t in params.tensors]
        self.t = 0


def adam_step(state: AdamState, params: ModelParams, grads, lr: float) -> ModelParams:
    """One ADAM update; mutates ``state``, returns fresh parameters."""
    if len(grads) != len(params.tensors):
        raise DatasetError(f"{len(grads)} gradients for {len(params.tensors)} tensors")
    state.t += 1
    b1, b2 = AdamState.BETA1, AdamState.BETA2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    fresh = []
    for i, (p, g) in enumerate(zip(params.tensors, grads)):
        g = g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient in ADAM step")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        step = lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + AdamState.EPS)
        fresh.append(Tensor(p.data - step, requires_grad=True))
    return params.replace_tensors(fresh)


def _batch_loss(params: ModelParams, x: np.ndarray, y: np.ndarray):
    return mse_loss(mlp_forward(params, x), Tensor(y))


def inner_update(params: ModelParams, support, inner_lr: float) -> ModelParams:
    """One full-batch SGD step on the support samples.

    Pure: the input parameters are untouched and the result is a fresh
    set of gradient-tracking leaves.
    """
    if not support:
        raise DatasetError("inner_update needs a non-empty support set")
    x, y = pairs_to_arrays(support)
    work = params.clone()
    loss = _batch_loss(work, x, y)
    gs = grad(loss, work.tensors)
    stepped = [Tensor(p.data - inner_lr * g.data, requires_grad=True)
               for p, g in zip(work.tensors, gs)]
    return params.replace_tensors(stepped)


def _first_order_task_grads(params: ModelParams, task, inner_lr: float):
    """Support loss, query loss, and query gradients at the stepped params."""
    xs, ys = pairs_to_arrays(task.support)
    xq, yq = pairs_to_arrays(task.query)
    sup_loss = _batch_loss(params, xs, ys)
    gs = grad(sup_loss, params.tensors)
    stepped = params.replace_tensors(
        [Tensor(p.data - inner_lr * g.data, requires_grad=True)
         for p, g in zip(params.tensors, gs)]
    )
    que_loss = _batch_loss(stepped, xq, yq)
    gq = grad(que_loss, stepped.tensors)
    return sup_loss.item(), que_loss.item(), gq


def _second_order_task_grads(params: ModelParams, task, inner_lr: float):
    """Like the first-order variant but differentiates through the step."""
    xs, ys = pairs_to_arrays(task.support)
    xq, yq = pairs_to_arrays(task.query)
    sup_loss = _batch_loss(params, xs, ys)
    gs = grad(sup_loss, params.tensors, create_graph=True)
    stepped = params.replace_tensors(
        [p - g * inner_lr for p, g in zip(params.tensors, gs)]
    )
    que_loss = _batch_loss(stepped, xq, yq)
    gq = grad(que_loss, params.tensors)
    return sup_loss.item(), que_loss.item(), gq


def meta_train(tasks, spec, cfg: MetaConfig, init: ModelParams | None = None):
    """Meta-train a shared initialization over the source tasks.

    Each epoch shuffles the task order and walks it once in batches of
    ``cfg.batch_size`` (the trailing short batch is still processed).
    Returns the trained parameters and a history of
    (iteration, mean support loss, mean query loss) rows, one per outer
    update, with losses recorded before that update.
    """
    tasks = list(tasks)
    if not tasks:
        raise DatasetError("meta_train needs at least one task")
    params = init.clone() if init is not None else init_params(spec, derive_seed(cfg.seed, "init"))
    state = AdamState(params)
    shuffler = substream(cfg.seed, "meta")
    task_grads = _first_order_task_grads if cfg.first_order else _second_order_task_grads
    history = []
    iteration = 0
    for _ in range(cfg.n_epoch):
        order = shuffler.permutation(len(tasks))
        for lo in range(0, len(order), cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            summed = [np.zeros_like(t.data) for t in params.tensors]
            sup_losses, que_losses = [], []
            for ti in batch:
                sup, que, gq = task_grads(params, tasks[int(ti)], cfg.inner_lr)
                sup_losses.append(sup)
                que_losses.append(que)
                for acc, g in zip(summed, gq):
                    acc += g.data
            params = adam_step(state, params, summed, cfg.outer_lr)
            iteration += 1
            history.append((iteration, float(np.mean(sup_losses)), float(np.mean(que_losses))))
    return params, history


def adapt(params: ModelParams, pairs, inner_lr: float, steps: int) -> ModelParams:
    """Fine-tune on one user's adaptation samples with full-batch SGD.

    If a step overshoots into non-finite or runaway parameters the
    previous iterate is kept; repeated raw SGD steps can blow up on a
    badly conditioned adaptation set and a finite (if poor) model keeps
    downstream evaluation meaningful. The magnitude cutoff is orders of
    magnitude beyond anything a converging run reaches on unit-scale
    data.
    """
    if steps < 0:
        raise ConfigurationError(f"steps must be >= 0, got {steps}")
    if steps == 0:
        return params.clone()
    current = params
    for _ in range(steps):
        stepped = inner_update(current, pairs, inner_lr)
        sane = all(np.all(np.isfinite(t.data)) and np.max(np.abs(t.data)) < 1e6
                   for t in stepped.tensors)
        if not sane:
            break
        current = stepped
    return current if current is not params else params.clone()


def predict(params: ModelParams, inputs: np.ndarray) -> np.ndarray:
    """Predict complex channel vectors for encoded input windows.

    Returns a (n_samples, n_antennas) complex array.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    with no_grad():
        out = mlp_forward(params, inputs).data
    n_antennas = params.spec.output_dim // 2
    return np.stack([decode(row, n_antennas)[:, 0] for row in out])


def train_mlp_baseline(tasks, spec, cfg: MetaConfig, init: ModelParams | None = None):
    """Train one network jointly on all source samples, pooled.

    Support and query samples are merged; each epoch shuffles the pool
    and takes ADAM steps on batches sized so the number of optimizer
    updates matches meta-training on the same task list.  History rows
    mirror :func:`meta_train` with the batch loss in both columns.
    """
    tasks = list(tasks)
    if not tasks:
        raise DatasetError("train_mlp_baseline needs at least one task")
    pairs = [p for t in tasks for p in t.support + t.query]
    x, y = pairs_to_arrays(pairs)
    per_task = len(pairs) // len(tasks)
    batch_rows = cfg.batch_size * max(per_task, 1)
    params = init.clone() if init is not None else init_params(spec, derive_seed(cfg.seed, "init"))
    state = AdamState(params)
    shuffler = substream(cfg.seed, "meta")
    history = []
    iteration = 0
    for _ in range(cfg.n_epoch):
        order = shuffler.permutation(len(pairs))
        for lo in range(0, len(order), batch_rows):
            rows = order[lo:lo + batch_rows]
            loss = _batch_loss(params, x[rows], y[rows])
            gs = grad(loss, params.tensors)
            params = adam_step(state, params, gs, cfg.outer_lr)
            iteration += 1
            history.append((iteration, loss.item(), loss.item()))
    return params, history
