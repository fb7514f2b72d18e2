"""Prediction quality, link-level value, and computational cost metrics.

Prediction quality is normalized mean squared error averaged over
per-sample error/energy ratios.  Link-level value is the zero-forcing
uplink sum rate obtained when combiners are built from predicted
channels but applied to the true ones.  Cost is an exact integer count
of multiply-accumulate dominated floating point operations for the
dense layers, which dwarf everything else.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, NumericError, SingularMatrixError

CONDITION_LIMIT = 1e12

RESULT_COLUMNS = ("seed", "snr_db", "n_ad", "t_ad", "method", "nmse_db", "sum_rate",
                  "flops_total")


@dataclass(frozen=True)
class FlopsReport:
    """Operation counts per pipeline stage; exact integers."""

    train: int
    adapt: int
    test: int
    dip: int = 0

    @property
    def total(self) -> int:
        """Predictor cost alone; the denoiser term is tracked separately."""
        return self.train + self.adapt + self.test

    @property
    def grand_total(self) -> int:
        return self.total + self.dip


@dataclass
class EvalReport:
    """One method's metrics for one experiment point."""

    method: str
    nmse_linear: float
    nmse_db: float
    sum_rate_bits: float
    per_ue_rates: list
    flops: FlopsReport
    config_echo: dict = field(default_factory=dict)


def nmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean over samples of ||error||^2 / ||truth||^2.

    Inputs are (n_samples, n_antennas) complex arrays; a zero-energy
    truth row is rejected rather than divided by.
    """
    pred = np.atleast_2d(np.asarray(pred))
    truth = np.atleast_2d(np.asarray(truth))
    if pred.shape != truth.shape:
        raise DimensionError(f"nmse shapes {pred.shape} and {truth.shape} differ")
    if pred.size == 0:
        raise DataError("nmse needs at least one sample")
    err = np.sum(np.abs(pred - truth) ** 2, axis=1)
    ref = np.sum(np.abs(truth) ** 2, axis=1)
    if np.any(ref == 0.0):
        raise NumericError("nmse: zero-energy truth sample")
    return float(np.mean(err / ref))


def to_db(x: float) -> float:
    if x <= 0:
        raise NumericError(f"cannot convert non-positive value {x} to dB")
    return float(10.0 * np.log10(x))


def zf_combiner(h_hat: np.ndarray) -> np.ndarray:
    """Unit-norm zero-forcing combiners from a predicted (M, K) channel.

    Column k of the result nulls every other user's predicted channel:
    before normalization the combiner bank is the transposed
    pseudo-inverse, computed via QR for stability.  Channels whose
    condition number exceeds 1e12 are rejected.
    """
    h_hat = np.asarray(h_hat)
    if h_hat.ndim != 2:
        raise DimensionError(f"zf_combiner needs a 2-d channel, got shape {h_hat.shape}")
    m, k = h_hat.shape
    if k > m:
        raise DimensionError(f"more users ({k}) than antennas ({m})")
    if not np.all(np.isfinite(h_hat.real)) or not np.all(np.isfinite(h_hat.imag)):
        raise NumericError("zf_combiner: non-finite channel entries")
    if np.linalg.cond(h_hat) > CONDITION_LIMIT:
        raise SingularMatrixError(
            f"predicted channel is effectively rank deficient (cond > {CONDITION_LIMIT:.0e})"
        )
    q, r = np.linalg.qr(h_hat)
    # pinv(H)^T columns: solve R^H R f = conj(H) column-wise via R^-1 Q^H
    pinv = np.linalg.solve(r, q.conj().T)
    combiners = pinv.T
    return combiners / np.linalg.norm(combiners, axis=0, keepdims=True)


def sum_rate(h_true: np.ndarray, h_hat: np.ndarray, snr_db: float):
    """Per-user and total uplink rates with predicted-channel combiners.

    Combiners come from ``h_hat`` but are applied to ``h_true``; with
    imperfect prediction the residual interference lands in the rate
    denominator.
    """
    h_true = np.asarray(h_true)
    h_hat = np.asarray(h_hat)
    if h_true.shape != h_hat.shape:
        raise DimensionError(f"channel shapes {h_true.shape} and {h_hat.shape} differ")
    f = zf_combiner(h_hat)
    rho = 10.0 ** (snr_db / 10.0)
    cross = f.T @ h_true  # entry (k, i): combiner k applied to user i
    power = rho * np.abs(cross) ** 2
    k = h_true.shape[1]
    rates = []
    for i in range(k):
        signal = power[i, i]
        interference = float(np.sum(power[i])) - signal
        rates.append(float(np.log2(1.0 + signal / (interference + 1.0))))
    return rates, float(np.sum(rates))


def _per_sample_passes(width_ratio: int, order: int, hidden_layers: int,
                       n_antennas: int) -> int:
    return width_ratio * (order + (hidden_layers - 1) * width_ratio + 1) * n_antennas**2


def flops_maml(n_epoch: int, n_tasks: int, samples_per_task: int, adapt_steps: int,
               n_adapt: int, n_test: int, width_ratio: int, order: int,
               hidden_layers: int, n_antennas: int) -> FlopsReport:
    """Dense-layer operation counts for train / adapt / test stages.

    ``width_ratio`` is hidden width divided by antenna count.  All
    arguments and results are exact Python integers.
    """
    for name, v in (("n_epoch", n_epoch), ("n_tasks", n_tasks),
                    ("samples_per_task", samples_per_task), ("adapt_steps", adapt_steps),
                    ("n_adapt", n_adapt), ("n_test", n_test), ("width_ratio", width_ratio),
                    ("order", order), ("hidden_layers", hidden_layers),
                    ("n_antennas", n_antennas)):
        if not isinstance(v, (int, np.integer)) or v < 0:
            raise DataError(f"flops_maml: {name} must be a non-negative integer, got {v!r}")
    per_pass = _per_sample_passes(int(width_ratio), int(order), int(hidden_layers),
                                  int(n_antennas))
    return FlopsReport(
        train=int(n_epoch) * int(n_tasks) * int(samples_per_task) * per_pass,
        adapt=int(adapt_steps) * int(n_adapt) * per_pass,
        test=int(n_test) * per_pass,
    )


def flops_dip(n_iter: int, time_len: int, filters: int, n_antennas: int) -> int:
    """Dense-layer operation count of one generator fit.

    ``time_len`` is the generator's native output length (the padded
    trace length).
    """
    for name, v in (("n_iter", n_iter), ("time_len", time_len), ("filters", filters),
                    ("n_antennas", n_antennas)):
        if not isinstance(v, (int, np.integer)) or v < 0:
            raise DataError(f"flops_dip: {name} must be a non-negative integer, got {v!r}")
    return int(n_iter) * int(time_len) * int(filters) * (2 * int(filters) + int(n_antennas))


def write_results_csv(path, reports) -> None:
    """Write evaluation rows with a fixed column set and full precision.

    Values are formatted with ``repr`` so identical runs produce byte
    identical files.  ``flops_total`` includes the denoiser cost when a
    denoising method was used.
    """
    reports = list(reports)
    if not reports:
        raise DataError("refusing to write an empty results file")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in reports:
            echo = r.config_echo
            writer.writerow([
                echo["seed"], repr(float(echo["snr_db"])), echo["n_ad"], echo["t_ad"],
                r.method, repr(float(r.nmse_db)), repr(float(r.sum_rate_bits)),
                r.flops.grand_total,
            ])
