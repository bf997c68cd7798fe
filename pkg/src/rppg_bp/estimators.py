"""scikit-learn style wrappers around the two-branch network.

Inputs are packed into one 2-D array so the estimators slot into sklearn
tooling: each row is a flattened ``(5, 512)`` beat window followed by the
37 encoded profile features. The Baseline variant takes only the features,
the PPG variant only the window.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .beats import PAD_LENGTH, WINDOW_BEATS
from .errors import NoWindows, VariantInputMismatch
from .features import N_FEATURES
from .neural.checkpoint import model_from_doc, model_to_doc
from .neural.model import Head, ModelConfig, Variant
from .neural.training import Dataset, TrainConfig, predict_session, predict_windows, train


def pack_inputs(windows=None, features=None) -> np.ndarray:
    """Concatenate flattened windows and profile features column-wise."""
    parts = []
    if windows is not None:
        w = np.asarray(windows, dtype=float)
        parts.append(w.reshape(len(w), -1))
    if features is not None:
        parts.append(np.asarray(features, dtype=float))
    if not parts:
        raise VariantInputMismatch("nothing to pack")
    if len(parts) == 2 and len(parts[0]) != len(parts[1]):
        raise ValueError("windows and features must have the same number of rows")
    return np.hstack(parts)


class _BPNetEstimator(BaseEstimator):
    _head = Head.REGRESSION

    def __init__(self, variant="Hybrid", epochs=30, batch_size=32, learning_rate=1e-3,
                 train_fraction=0.8, select_best=True, random_state=0, model_config=None):
        self.variant = variant
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.train_fraction = train_fraction
        self.select_best = select_best
        self.random_state = random_state
        self.model_config = model_config

    def _config(self) -> ModelConfig:
        overrides = dict(self.model_config or {})
        overrides.update(variant=Variant(self.variant), head=self._head)
        return ModelConfig(**overrides)

    @staticmethod
    def _n_columns(cfg: ModelConfig) -> int:
        n = 0
        if cfg.variant is not Variant.BASELINE:
            n += cfg.in_channels * cfg.input_length
        if cfg.variant is not Variant.PPG:
            n += cfg.n_features
        return n

    def _unpack(self, X, cfg: ModelConfig):
        if X.shape[1] != self._n_columns(cfg):
            raise VariantInputMismatch(
                f"{cfg.variant.value} expects {self._n_columns(cfg)} columns, got {X.shape[1]}")
        n_wave = 0 if cfg.variant is Variant.BASELINE else cfg.in_channels * cfg.input_length
        windows = None if n_wave == 0 else X[:, :n_wave].reshape(len(X), cfg.in_channels, cfg.input_length)
        features = None if cfg.variant is Variant.PPG else X[:, n_wave:]
        return windows, features

    def _fit(self, X, y, groups):
        cfg = self._config()
        windows, features = self._unpack(X, cfg)
        groups = np.arange(len(X)) if groups is None else np.asarray(groups)
        tc = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size, epochs=self.epochs,
                         train_fraction=self.train_fraction, seed=self.random_state, select_best=self.select_best)
        result = train(Dataset(windows, features, y, groups), tc, cfg)
        self.model_ = result["model"]
        self.history_ = result["history"]
        self.train_mask_ = result["train_mask"]
        self.n_features_in_ = X.shape[1]
        return self

    def _raw_predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        windows, features = self._unpack(X, self.model_.cfg)
        return predict_windows(self.model_, windows, features)

    def predict_sessions(self, X, session_ids) -> dict:
        """Average window predictions per session; keys keep first-seen order."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        session_ids = np.asarray(session_ids)
        out = {}
        for sid in dict.fromkeys(session_ids.tolist()):
            rows = X[session_ids == sid]
            if len(rows) == 0:
                raise NoWindows(f"session {sid} has no windows")
            w, f = self._unpack(rows, self.model_.cfg)
            out[sid] = predict_session(self.model_, w, f)
        return out

    def to_doc(self, feature_norm=None) -> dict:
        check_is_fitted(self, "model_")
        return model_to_doc(self.model_, feature_norm, {"estimator_params": self.get_params()})

    @classmethod
    def from_doc(cls, doc: dict):
        est = cls(**doc.get("estimator_params", {}))
        est.model_ = model_from_doc(doc)
        est.n_features_in_ = cls._n_columns(est.model_.cfg)
        est.history_ = []
        return est


class BPRegressor(RegressorMixin, _BPNetEstimator):
    """Predicts (SBP, DBP) in mm Hg per beat window.

    ``fit`` takes ``groups`` (subject ids) so the internal validation split
    never shares a subject with training.
    """

    _head = Head.REGRESSION

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, dtype=np.float64, multi_output=True)
        y = np.asarray(y, dtype=float)
        if y.ndim != 2 or y.shape[1] != 2:
            raise ValueError("y must have two columns (SBP, DBP)")
        return self._fit(X, y, groups)

    def predict(self, X):
        return self._raw_predict(X)


class HypertensionClassifier(ClassifierMixin, _BPNetEstimator):
    """Binary SBP >= 130 mm Hg classifier; ``predict_proba`` gives the positive-class probability."""

    _head = Head.BINARY
    threshold_mmhg = 130.0

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = np.asarray(y)
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")
        self.classes_ = np.array([0, 1])
        return self._fit(X, y.astype(float), groups)

    @classmethod
    def from_doc(cls, doc: dict):
        est = super().from_doc(doc)
        est.classes_ = np.array([0, 1])
        return est

    def predict_proba(self, X):
        p = self._raw_predict(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


def window_columns() -> int:
    return WINDOW_BEATS * PAD_LENGTH


def feature_columns() -> int:
    return N_FEATURES
