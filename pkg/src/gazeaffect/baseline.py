"""One-vs-rest linear SVM over static features (no gaze sequence).

Each class head minimises ``reg/2 * |w|^2 + sum(max(0, 1 - y (w.x + b)))``
(``reg`` plays the role of 1/C) by stochastic subgradient descent on the
per-sample form, with step ``1 / (lam * (t + t0))`` where ``lam = reg / n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

LAYOUTS = {
    "stimulus": ("stimulus",),
    "stimulus+personality": ("stimulus", "personality"),
}


@dataclass
class LinearSvmModel:
    weights: np.ndarray   # (3, d)
    biases: np.ndarray    # (3,)
    reg_strength: float
    layout: str

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def layout_features(records, layout: str) -> np.ndarray:
    if layout not in LAYOUTS:
        raise ValidationError(f"unknown SVM layout {layout!r}; choose from {sorted(LAYOUTS)}")
    return np.array([np.concatenate([getattr(r, g) for g in LAYOUTS[layout]]) for r in records], dtype=float)


def hinge_objective(w, b, X, y, reg):
    margins = y * (X @ w + b)
    return 0.5 * reg * float(w @ w) + float(np.sum(np.maximum(0.0, 1.0 - margins)))


def hinge_subgradient(w, b, X, y, reg):
    """(dw, db) of :func:`hinge_objective`; at a kink the zero branch is taken."""
    active = y * (X @ w + b) < 1.0
    coef = -(y * active)
    return reg * w + X.T @ coef, float(coef.sum())


def _fit_binary(X, y, reg, epochs, rng, t0):
    n, d = X.shape
    lam = reg / n
    w = np.zeros(d)
    b = 0.0
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * (t + t0))
            w = (1 - eta * lam) * w
            if y[i] * (X[i] @ w + b) < 1.0:
                w = w + eta * y[i] * X[i]
                b += eta * y[i]
    return w, b


def svm_train(records, labels, layout="stimulus", reg_strength=1.0, epochs=50, seed=0,
              t0=None) -> LinearSvmModel:
    """Fit three one-vs-rest heads. ``records`` may also be a feature matrix."""
    X = records if isinstance(records, np.ndarray) else layout_features(records, layout)
    y = np.asarray([int(l) for l in labels], dtype=int)
    missing = [c for c in range(3) if not np.any(y == c)]
    if missing:
        raise ValidationError(f"SVM training needs every class, missing {missing}")
    if reg_strength <= 0:
        raise ValidationError("reg_strength must be positive")
    # first step is about 1
    t0 = t0 if t0 is not None else len(X) / reg_strength
    W = np.zeros((3, X.shape[1]))
    B = np.zeros(3)
    for c in range(3):
        rng = np.random.default_rng([seed, c])
        W[c], B[c] = _fit_binary(X, np.where(y == c, 1.0, -1.0), reg_strength, epochs, rng, t0)
    return LinearSvmModel(W, B, reg_strength, layout)


def svm_scores(model: LinearSvmModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.dim:
        raise ValidationError(f"SVM expects {model.dim} features, got {X.shape[1]}")
    return X @ model.weights.T + model.biases


def svm_predict(model: LinearSvmModel, record):
    """ClassBin of the highest one-vs-rest score; ties go to the lower class."""
    from .dataset import ClassBin

    x = record if isinstance(record, np.ndarray) else layout_features([record], model.layout)
    return ClassBin(int(np.argmax(svm_scores(model, x)[0])))


def svm_predict_batch(model: LinearSvmModel, records) -> np.ndarray:
    X = records if isinstance(records, np.ndarray) else layout_features(records, model.layout)
    return np.argmax(svm_scores(model, X), axis=1)
