import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from mktorus.ml import EncryptedLogisticRegression, EncryptedMLPClassifier
from mktorus.ml import data as D


@pytest.fixture(scope="module")
def synthetic():
    return D.make_synthetic()


@pytest.fixture(scope="module")
def iris_split():
    X, y = D.load_iris()
    return D.split_half(X, y, 0)


def test_lr_params_roundtrip():
    est = EncryptedLogisticRegression(activation="taylor7", q=16)
    params = est.get_params()
    assert params["activation"] == "taylor7" and params["q"] == 16
    twin = clone(est).set_params(q=64)
    assert twin.q == 64 and est.q == 16


def test_lr_fit_predict(synthetic):
    X, y = synthetic
    est = EncryptedLogisticRegression().fit(X, y)
    assert est.score(X, y) >= 0.95
    assert est.coef_.shape == (1, 2) and est.intercept_.shape == (1,)
    assert est.n_features_in_ == 2


def test_lr_string_labels(synthetic):
    X, y = synthetic
    labels = np.array(["neg", "pos"])[y]
    est = EncryptedLogisticRegression().fit(X, labels)
    assert set(est.predict(X)) <= {"neg", "pos"}
    assert est.score(X, labels) >= 0.95


def test_lr_enc_mode_matches_int(synthetic):
    X, y = synthetic
    a = EncryptedLogisticRegression(mode="enc", iters=2).fit(X[:8], y[:8])
    b = EncryptedLogisticRegression(mode="int", iters=2).fit(X[:8], y[:8])
    assert np.array_equal(a.model_.theta, b.model_.theta)


def test_lr_validation(synthetic):
    X, y = synthetic
    with pytest.raises(ValueError, match="binary"):
        EncryptedLogisticRegression().fit(X[:3], [0, 1, 2])
    with pytest.raises(ValueError, match="sigmoid"):
        EncryptedLogisticRegression(activation="sigmoid").fit(X, y)
    with pytest.raises(ValueError, match="mode"):
        EncryptedLogisticRegression(mode="gpu").fit(X, y)
    with pytest.raises(NotFittedError):
        EncryptedLogisticRegression().predict(X)
    est = EncryptedLogisticRegression().fit(X, y)
    with pytest.raises(ValueError, match="features"):
        est.predict(X[:, :1])
    with pytest.raises(ValueError):
        EncryptedLogisticRegression().fit(X[:, :0], y)


def test_lr_float_sigmoid(synthetic):
    X, y = synthetic
    assert EncryptedLogisticRegression(activation="sigmoid", mode="float").fit(X, y).score(X, y) >= 0.93


def test_lr_in_pipeline_and_cv(synthetic):
    X, y = synthetic
    pipe = make_pipeline(FunctionTransformer(), EncryptedLogisticRegression(iters=20))
    scores = cross_val_score(pipe, X, y, cv=3)
    assert scores.mean() > 0.8


def test_mlp_iris(iris_split):
    Xtr, Xte, ytr, yte = iris_split
    est = EncryptedMLPClassifier().fit(Xtr, ytr)
    assert est.score(Xte, yte) >= 0.90
    assert list(est.classes_) == [0, 1, 2]
    assert est.decision_function(Xte).shape == (75, 3)


def test_mlp_float_mode(iris_split):
    Xtr, Xte, ytr, yte = iris_split
    est = EncryptedMLPClassifier(mode="float", activation="sigmoid").fit(Xtr, ytr)
    assert est.score(Xte, yte) >= 0.93


def test_mlp_enc_small(iris_split):
    Xtr, _, ytr, _ = iris_split
    idx = [0, 1, 2]
    kw = dict(hidden=2, epochs=1, q=16, width=16, alpha1=4, alpha2=4, beta1=8, beta2=8)
    a = EncryptedMLPClassifier(mode="enc", **kw).fit(Xtr[idx], ytr[idx])
    b = EncryptedMLPClassifier(mode="int", **kw).fit(Xtr[idx], ytr[idx])
    assert np.array_equal(a.model_.W, b.model_.W) and np.array_equal(a.model_.V, b.model_.V)


def test_mlp_validation(iris_split):
    Xtr, _, ytr, _ = iris_split
    with pytest.raises(ValueError):
        EncryptedMLPClassifier(hidden=0).fit(Xtr, ytr)
    with pytest.raises(ValueError):
        EncryptedMLPClassifier(activation="sigmoid").fit(Xtr, ytr)
    with pytest.raises(ValueError):
        EncryptedMLPClassifier().fit(Xtr, np.zeros(len(Xtr)))
    est = EncryptedMLPClassifier(standardize=False, q=16, width=16, epochs=1,
                                 beta1=8, beta2=8).fit(Xtr, ytr)
    assert np.all(est.scale_ == 1)
    with pytest.raises(ValueError, match="features"):
        est.predict(Xtr[:, :2])
