"""scikit-learn estimators over the scaled-integer trainers.

Both classifiers accept real-valued features, do the integer preprocessing
themselves and expose the usual ``fit`` / ``predict`` / ``score`` surface,
so they drop into pipelines and ``cross_val_score``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..backend import make_backend
from . import data as D
from . import train as T


def _check_choice(name, value, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {choices}, got {value!r}")


class _Base(ClassifierMixin, BaseEstimator):
    def _backend(self):
        return make_backend(self.backend, seed=self.seed) if self.mode == "enc" else None

    def _config(self) -> T.ScaleConfig:
        raise NotImplementedError


class EncryptedLogisticRegression(_Base):
    """Binary logistic regression trained by full-batch gradient descent.

    ``mode="int"`` runs the exact integer schedule, ``mode="enc"`` runs the
    same schedule as gate circuits on ``backend``, ``mode="float"`` is the
    real-valued reference. Integer modes round features to the nearest
    integer; coefficients are stored at scale ``q``.
    """

    def __init__(self, activation="g", mode="int", iters=40, q=64, alpha=1, width=16,
                 rounding="floor", backend="clear", seed=0):
        self.activation = activation
        self.mode = mode
        self.iters = iters
        self.q = q
        self.alpha = alpha
        self.width = width
        self.rounding = rounding
        self.backend = backend
        self.seed = seed

    def _config(self):
        return T.ScaleConfig(q=self.q, alpha=self.alpha, width=self.width, rounding=self.rounding)

    def _features(self, X):
        if self.mode == "float":
            return D.add_bias(np.asarray(X, dtype=float), 1.0)
        return D.add_bias(D.preprocess(X, "rounding", width=self.width).X)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        _check_choice("mode", self.mode, T.MODES)
        if self.mode != "float" and self.activation == "sigmoid":
            raise ValueError("the sigmoid activation is only available in float mode")
        self.classes_, yi = np.unique(y, return_inverse=True)
        if len(self.classes_) != 2:
            raise ValueError(f"binary targets required, got {len(self.classes_)} classes")
        cfg = self._config()
        self.model_ = T.train_lr(self._features(X), yi, cfg, self.activation, self.mode,
                                 self.iters, backend=self._backend())
        self.n_features_in_ = X.shape[1]
        coef = self.model_.coef()
        self.intercept_ = np.array([coef[0]])
        self.coef_ = coef[None, 1:]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return self.classes_[T.predict_lr(self.model_, self._features(X))]


class EncryptedMLPClassifier(_Base):
    """One-hidden-layer network trained per sample with momentum.

    Features are standardized with the training mean and deviation, then
    zoomed by ``q``. Rates ``alpha*`` and momenta ``beta*`` are integers in
    ``[0, q]`` read as fractions of ``q``.
    """

    def __init__(self, hidden=6, activation="g", mode="int", epochs=40, q=256, width=20,
                 alpha1=16, alpha2=16, beta1=192, beta2=192, rounding="nearest",
                 standardize=True, backend="clear", seed=1):
        self.hidden = hidden
        self.activation = activation
        self.mode = mode
        self.epochs = epochs
        self.q = q
        self.width = width
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.beta1 = beta1
        self.beta2 = beta2
        self.rounding = rounding
        self.standardize = standardize
        self.backend = backend
        self.seed = seed

    def _config(self):
        return T.ScaleConfig(q=self.q, alpha1=self.alpha1, alpha2=self.alpha2, beta1=self.beta1,
                             beta2=self.beta2, width=self.width, rounding=self.rounding)

    def _features(self, X):
        Z = (X - self.mean_) / self.scale_
        if self.mode == "float":
            return D.add_bias(Z, 1.0)
        return D.add_bias(D.preprocess(Z, "zoom", self.q, self.width).X, self.q)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        _check_choice("mode", self.mode, T.MODES)
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")
        if self.mode != "float" and self.activation == "sigmoid":
            raise ValueError("the sigmoid activation is only available in float mode")
        self.classes_, yi = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.scale_ = np.where(sd > 0, sd, 1.0)
        else:
            self.mean_, self.scale_ = np.zeros(X.shape[1]), np.ones(X.shape[1])
        self.n_features_in_ = X.shape[1]
        Y = D.one_hot(yi, len(self.classes_))
        self.model_ = T.train_nn(self._features(X), Y, self._config(), self.hidden, self.activation,
                                 self.mode, self.epochs, self.seed, backend=self._backend(),
                                 track="none")
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = T.nn_outputs(self.model_, self._features(X))
        return out / self.q if self.mode != "float" else out

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
