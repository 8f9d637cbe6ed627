"""Scaled-integer training of logistic regression and a small network."""

from .data import Dataset, load_iris, make_synthetic, preprocess
from .estimators import EncryptedLogisticRegression, EncryptedMLPClassifier
from .train import LRModel, NNModel, ScaleConfig, predict_lr, predict_nn, train_lr, train_nn

__all__ = [
    "Dataset", "EncryptedLogisticRegression", "EncryptedMLPClassifier", "LRModel", "NNModel",
    "ScaleConfig", "load_iris", "make_synthetic", "predict_lr", "predict_nn", "preprocess",
    "train_lr", "train_nn",
]
