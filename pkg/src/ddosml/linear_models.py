"""Gaussian naive Bayes and a one-vs-rest linear SVM with squared hinge loss."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ArgumentError


def _check_predict_input(est, X):
    check_is_fitted(est, "classes_")
    X = check_array(X, dtype=np.float64, ensure_all_finite=False, ensure_min_samples=0)
    if not np.isfinite(X).all():
        raise ArgumentError("X contains NaN or infinite values")
    if X.shape[1] != est.n_features_in_:
        raise ArgumentError(f"X has {X.shape[1]} features, model was fit on {est.n_features_in_}")
    return X


class GaussianNB(ClassifierMixin, BaseEstimator):
    """Naive Bayes with one independent Gaussian per (class, feature).

    Every variance is inflated by ``smoothing_scale`` times the largest
    per-feature variance of the training data, so constant features keep a
    finite log-density.
    """

    def __init__(self, smoothing_scale=1e-9):
        self.smoothing_scale = smoothing_scale

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        n_classes = self.classes_.size
        self.theta_ = np.zeros((n_classes, X.shape[1]))
        self.raw_var_ = np.zeros((n_classes, X.shape[1]))
        counts = np.bincount(y_enc, minlength=n_classes)
        for c in range(n_classes):
            Xc = X[y_enc == c]
            self.theta_[c] = Xc.mean(axis=0)
            self.raw_var_[c] = Xc.var(axis=0)
        spread = float(X.var(axis=0).max()) if X.shape[1] else 0.0
        # All-constant training data: fall back to the bare scale.
        self.epsilon_ = self.smoothing_scale * (spread if spread > 0 else 1.0)
        self.var_ = self.raw_var_ + self.epsilon_
        self.class_prior_ = counts / counts.sum()
        return self

    def log_posteriors(self, X):
        """Unnormalized log posterior per class: log prior + sum of log densities."""
        X = _check_predict_input(self, X)
        out = np.empty((X.shape[0], self.classes_.size))
        for c in range(self.classes_.size):
            var = self.var_[c]
            log_density = -0.5 * (np.log(2.0 * np.pi * var) + (X - self.theta_[c]) ** 2 / var)
            out[:, c] = np.log(self.class_prior_[c]) + log_density.sum(axis=1)
        return out

    def predict_proba(self, X):
        scores = self.log_posteriors(X)
        scores -= scores.max(axis=1, keepdims=True)
        p = np.exp(scores)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.log_posteriors(X), axis=1)]

    def get_state(self):
        return {
            "params": self.get_params(),
            "classes": self.classes_.tolist(),
            "priors": self.class_prior_.tolist(),
            "means": self.theta_.tolist(),
            "variances": self.var_.tolist(),
            "smoothing": float(self.epsilon_),
        }

    @classmethod
    def from_state(cls, state):
        est = cls(**state["params"])
        est.classes_ = np.asarray(state["classes"])
        est.class_prior_ = np.asarray(state["priors"], dtype=np.float64)
        est.theta_ = np.asarray(state["means"], dtype=np.float64)
        est.var_ = np.asarray(state["variances"], dtype=np.float64)
        est.epsilon_ = float(state["smoothing"])
        est.raw_var_ = est.var_ - est.epsilon_
        est.n_features_in_ = est.theta_.shape[1]
        return est


def svm_objective(w, b, X, y, C=1.0, reg=1.0) -> float:
    """(reg/2)*|w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))^2 for y in {-1, +1}."""
    w = np.asarray(w, dtype=np.float64)
    slack = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return float(0.5 * reg * (w @ w) + C * (slack @ slack))


def svm_gradient(w, b, X, y, C=1.0, reg=1.0):
    """Gradient of :func:`svm_objective` with respect to ``(w, b)``."""
    w = np.asarray(w, dtype=np.float64)
    slack = np.maximum(0.0, 1.0 - y * (X @ w + b))
    coef = -2.0 * C * y * slack
    return reg * w + X.T @ coef, float(coef.sum())


def _canonical_order(X, y):
    # Sort rows lexicographically so the fit ignores input row order.
    keys = np.column_stack([X, y]).T[::-1]
    return np.lexsort(keys)


def _fit_binary(X, y, C, reg, max_epochs, tol, learning_rate, lr_decay, batch_size, rng):
    """Epoch-shuffled minibatch subgradient descent on the primal.

    Each epoch is accepted only if it lowers the full objective; a rejected
    epoch restores the weights and halves the base step. The recorded trace
    (one value per accepted epoch, starting from the zero model) is
    therefore non-increasing.
    """
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    obj = svm_objective(w, b, X, y, C, reg)
    trace = [obj]
    eta0 = learning_rate
    step = 0
    for _ in range(max_epochs):
        perm = rng.permutation(n)
        w_new, b_new = w.copy(), b
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            eta = eta0 / (1.0 + lr_decay * step)
            step += 1
            Xb, yb = X[idx], y[idx]
            slack = np.maximum(0.0, 1.0 - yb * (Xb @ w_new + b_new))
            coef = -2.0 * C * yb * slack / idx.size
            w_new -= eta * (reg * w_new / n + Xb.T @ coef)
            b_new -= eta * coef.sum()
        new_obj = svm_objective(w_new, b_new, X, y, C, reg)
        if np.isfinite(new_obj) and new_obj < obj:
            improvement = obj - new_obj
            w, b, obj = w_new, b_new, new_obj
            trace.append(obj)
            if improvement < tol * max(obj, 1.0):
                break
        else:
            eta0 /= 2.0
            if eta0 < 1e-12:
                break
    return w, b, trace


class LinearSVM(ClassifierMixin, BaseEstimator):
    """One-vs-rest linear SVM minimizing the squared-hinge primal per class.

    Parameters
    ----------
    C : float
        Cost on the summed squared hinge terms.
    reg : float
        Weight on the (1/2)|w|^2 regularizer.
    max_epochs, tol :
        Stop after ``max_epochs`` passes or once an accepted epoch improves
        the objective by less than ``tol`` relative to its value.
    learning_rate, lr_decay, batch_size :
        Step schedule ``learning_rate / (1 + lr_decay * t)`` over minibatch
        steps ``t``.
    seed : int
        Shuffling seed; class ``k`` uses a stream derived from ``(seed, k)``.
    """

    def __init__(self, C=1.0, reg=1.0, max_epochs=200, tol=1e-6, learning_rate=0.05,
                 lr_decay=1e-3, batch_size=64, seed=0):
        self.C = C
        self.reg = reg
        self.max_epochs = max_epochs
        self.tol = tol
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y):
        if self.C <= 0 or self.reg <= 0 or self.tol <= 0:
            raise ArgumentError("C, reg and tol must be positive")
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ArgumentError("one-vs-rest SVM needs at least 2 classes")
        order = _canonical_order(X, y_enc)
        X, y_enc = X[order], y_enc[order]
        self.n_features_in_ = X.shape[1]
        n_classes = self.classes_.size
        self.coef_ = np.zeros((n_classes, X.shape[1]))
        self.intercept_ = np.zeros(n_classes)
        self.objective_trace_ = []
        for k in range(n_classes):
            target = np.where(y_enc == k, 1.0, -1.0)
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(k,)))
            w, b, trace = _fit_binary(X, target, self.C, self.reg, self.max_epochs, self.tol,
                                      self.learning_rate, self.lr_decay, self.batch_size, rng)
            self.coef_[k] = w
            self.intercept_[k] = b
            self.objective_trace_.append(trace)
        return self

    def decision_function(self, X):
        """Raw margin ``w_c . x + b_c`` per class."""
        X = _check_predict_input(self, X)
        return X @ self.coef_.T + self.intercept_

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def get_state(self):
        return {
            "params": self.get_params(),
            "classes": self.classes_.tolist(),
            "weights": self.coef_.tolist(),
            "biases": self.intercept_.tolist(),
        }

    @classmethod
    def from_state(cls, state):
        est = cls(**state["params"])
        est.classes_ = np.asarray(state["classes"])
        est.coef_ = np.asarray(state["weights"], dtype=np.float64)
        est.intercept_ = np.asarray(state["biases"], dtype=np.float64)
        est.n_features_in_ = est.coef_.shape[1]
        return est
