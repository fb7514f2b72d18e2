"""Untrained-network denoising of estimate traces.

A randomly initialized sequence generator is fit, from scratch, to the
real/imaginary stacking of one user's estimate trace by minimizing the
squared Frobenius distance with ADAM.  Because the generator's
architecture favors smooth sequences, stopping after a fixed number of
iterations reconstructs mostly channel, not noise.  No training data is
involved; each trace is its own optimization problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, grad, no_grad, tensor_sum
from .channel import LsTrace
from .errors import ConfigurationError, DimensionError, NumericError
from .models import DipSpec, ModelParams, dip_forward, init_params
from .seeding import derive_seed, substream
from .training import AdamState, adam_step

Z1_SCALE = 0.1


@dataclass
class DipRun:
    """Record of one generator fit: architecture, fixed input, trajectory."""

    spec: DipSpec
    z1: np.ndarray
    n_iter: int
    seed: int
    loss_history: list = field(default_factory=list)


def stack_real(h: np.ndarray) -> np.ndarray:
    """Stack a complex (M, N) matrix into real (2M, N): real rows on top."""
    h = np.asarray(h)
    if h.ndim != 2:
        raise DimensionError(f"stack_real needs a 2-d input, got shape {h.shape}")
    return np.vstack([h.real, h.imag]).astype(np.float64)


def unstack_real(stacked: np.ndarray) -> np.ndarray:
    """Invert :func:`stack_real`."""
    stacked = np.asarray(stacked, dtype=np.float64)
    if stacked.ndim != 2 or stacked.shape[0] % 2 != 0:
        raise DimensionError(f"unstack_real needs an even row count, got shape {stacked.shape}")
    m = stacked.shape[0] // 2
    return stacked[:m] + 1j * stacked[m:]


def padded_len(n: int, depth: int) -> int:
    factor = 2 ** (depth - 1)
    return -(-n // factor) * factor


def denoise(ls_trace: LsTrace, depth: int = 4, filters: int = 64, n_iter: int = 2000,
            lr: float = 1e-2, seed: int = 0):
    """Fit a fresh generator to one trace and return the denoised trace.

    The trace is right-padded by edge replication to the generator's
    native output length and cropped back afterwards.  Returns the
    denoised :class:`LsTrace` and a :class:`DipRun` whose loss history
    has one entry per iteration, recorded before the corresponding
    update.
    """
    if n_iter < 1:
        raise ConfigurationError(f"n_iter must be >= 1, got {n_iter}")
    if lr <= 0:
        raise ConfigurationError(f"lr must be positive, got {lr}")
    h_ls = np.asarray(ls_trace.h_ls)
    if h_ls.ndim != 2:
        raise DimensionError(f"estimate trace must be 2-d, got shape {h_ls.shape}")
    m, n = h_ls.shape
    n_pad = padded_len(n, depth)
    spec = DipSpec(depth=depth, filters=filters, base_len=n_pad // 2 ** (depth - 1),
                   out_channels=2 * m)
    target_np = np.pad(stack_real(h_ls), ((0, 0), (0, n_pad - n)), mode="edge")
    target = Tensor(target_np)
    z1 = Tensor(substream(seed, "dip-input").normal(0.0, Z1_SCALE, (filters, spec.base_len)))
    params = init_params(spec, derive_seed(seed, "dip-init"))
    state = AdamState(params)
    run = DipRun(spec=spec, z1=z1.data, n_iter=n_iter, seed=seed)
    for _ in range(n_iter):
        diff = dip_forward(params, z1) - target
        loss = tensor_sum(diff * diff)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError("denoising diverged to a non-finite loss")
        run.loss_history.append(value)
        params = adam_step(state, params, grad(loss, params.tensors), lr)
    with no_grad():
        fitted = dip_forward(params, z1).data[:, :n]
    denoised = unstack_real(fitted)
    energy = float(np.sum(np.abs(denoised) ** 2))
    budget = 2.0 * float(np.sum(np.abs(h_ls) ** 2))
    if energy > budget:
        raise NumericError(
            f"denoised energy {energy:.3e} exceeds twice the input energy {budget / 2:.3e}"
        )
    return LsTrace(ue_id=ls_trace.ue_id, h_ls=denoised, snr_db=ls_trace.snr_db,
                   denoised=True), run
