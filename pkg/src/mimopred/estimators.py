"""Estimator-style wrappers over the functional core.

The predictors follow the familiar fit/predict shape (plus ``adapt``,
the few-shot step this package exists for); the denoiser is a
transformer whose per-trace optimization happens in ``transform``, since
an untrained network has nothing to learn from a corpus in ``fit``.
Hyperparameters are constructor arguments and round-trip through
``get_params``/``set_params``, so the usual model-selection tooling
works.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .channel import LsTrace
from .datasets import pairs_to_arrays
from .errors import DataError, DimensionError
from .evaluation import nmse
from .models import MlpSpec
from .denoise import denoise
from .training import MetaConfig, adapt, meta_train, predict, train_mlp_baseline


def check_complex_matrix(x, name: str = "X") -> np.ndarray:
    """Validate and return a 2-d finite complex matrix."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {x.shape}")
    x = x.astype(np.complex128)
    if not np.all(np.isfinite(x.real)) or not np.all(np.isfinite(x.imag)):
        raise DataError(f"{name} contains non-finite entries")
    return x


def check_encoded_inputs(x, input_dim: int, name: str = "X") -> np.ndarray:
    """Validate encoded window rows against the fitted input width."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise DimensionError(f"{name} shape {x.shape} does not match (n, {input_dim})")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} contains non-finite entries")
    return x


def _infer_dims(tasks) -> tuple:
    first = next(iter(tasks), None)
    if first is None:
        raise DataError("need at least one task to fit")
    sample = (first.support or first.query)[0]
    return sample.inputs.size, sample.label.size


class _PredictorCore(BaseEstimator):
    """Shared plumbing of the two predictor estimators."""

    def __init__(self, hidden_layers=4, hidden_width=128, inner_lr=0.1, outer_lr=1e-5,
                 batch_size=64, n_epoch=20, adapt_steps=10, first_order=True, seed=0):
        self.hidden_layers = hidden_layers
        self.hidden_width = hidden_width
        self.inner_lr = inner_lr
        self.outer_lr = outer_lr
        self.batch_size = batch_size
        self.n_epoch = n_epoch
        self.adapt_steps = adapt_steps
        self.first_order = first_order
        self.seed = seed

    def _meta_config(self) -> MetaConfig:
        return MetaConfig(inner_lr=self.inner_lr, outer_lr=self.outer_lr,
                          batch_size=self.batch_size, n_epoch=self.n_epoch,
                          adapt_steps=self.adapt_steps, first_order=self.first_order,
                          seed=self.seed)

    def _trainer(self):
        raise NotImplementedError

    def fit(self, tasks, y=None):
        """Train the shared initialization on a list of few-shot tasks."""
        input_dim, output_dim = _infer_dims(tasks)
        spec = MlpSpec(input_dim=input_dim, hidden_layers=self.hidden_layers,
                       hidden_width=self.hidden_width, output_dim=output_dim)
        self.params_, self.history_ = self._trainer()(tasks, spec, self._meta_config())
        self.n_antennas_ = output_dim // 2
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise DataError(f"{type(self).__name__} is not fitted yet")

    def adapt(self, pairs):
        """Return a copy fine-tuned on one user's adaptation samples."""
        self._check_fitted()
        tuned = self.__class__(**self.get_params())
        tuned.params_ = adapt(self.params_, list(pairs), self.inner_lr, self.adapt_steps)
        tuned.history_ = self.history_
        tuned.n_antennas_ = self.n_antennas_
        return tuned

    def predict(self, X) -> np.ndarray:
        """Map encoded windows to complex (n_samples, n_antennas) predictions."""
        self._check_fitted()
        X = check_encoded_inputs(X, self.params_.spec.input_dim)
        return predict(self.params_, X)

    def score(self, X, y) -> float:
        """Negative normalized mean squared error (higher is better)."""
        truth = check_complex_matrix(np.atleast_2d(np.asarray(y)), "y")
        return -nmse(self.predict(X), truth)


class MamlChannelPredictor(_PredictorCore):
    """Channel predictor meta-trained for fast per-user adaptation."""

    def _trainer(self):
        return meta_train


class MlpChannelPredictor(_PredictorCore):
    """Baseline predictor trained jointly on the pooled source samples."""

    def _trainer(self):
        return train_mlp_baseline


class DipDenoiser(BaseEstimator, TransformerMixin):
    """Per-trace untrained-network denoiser.

    ``transform`` runs a fresh generator fit against each given trace;
    ``fit`` only validates, because nothing carries over between traces.
    """

    def __init__(self, depth=4, filters=64, n_iter=2000, lr=1e-2, seed=0):
        self.depth = depth
        self.filters = filters
        self.n_iter = n_iter
        self.lr = lr
        self.seed = seed

    def fit(self, X, y=None):
        check_complex_matrix(X)
        return self

    def transform(self, X) -> np.ndarray:
        """Denoise one complex (n_antennas, n_slots) trace."""
        X = check_complex_matrix(X)
        trace = LsTrace(ue_id=0, h_ls=X, snr_db=float("nan"))
        cleaned, run = denoise(trace, depth=self.depth, filters=self.filters,
                               n_iter=self.n_iter, lr=self.lr, seed=self.seed)
        self.loss_history_ = run.loss_history
        return cleaned.h_ls

    def score(self, X, y) -> float:
        """Negative mean squared error against a known clean trace."""
        cleaned = self.transform(X)
        truth = check_complex_matrix(y, "y")
        if truth.shape != cleaned.shape:
            raise DimensionError(f"y shape {truth.shape} does not match {cleaned.shape}")
        return -float(np.mean(np.abs(cleaned - truth) ** 2))
