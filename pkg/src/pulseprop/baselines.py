"""Supervised comparators: KNN, Gaussian naive Bayes, logistic regression.

Small, dependency-free implementations with pinned tie rules so runs are
reproducible: KNN breaks distance ties toward the lower training index,
prediction thresholds send exact 0.5 to the artifact class, and the
logistic solver is plain gradient descent with a backtracking line search.
Models serialize to a self-describing JSON document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .preprocess import PulseMatrix

MODEL_SCHEMA = 1
KINDS = ("knn", "gaussian_nb", "logistic")


@dataclass
class TrainedModel:
    kind: str
    parameters: dict


def fit(kind: str, features, labels, **hyperparams) -> TrainedModel:
    """Train one of the baseline models on 0/1 labels.

    Hyperparameters: knn takes k (default 7); logistic takes l2 (1e-4),
    grad_tol (1e-6) and max_steps (10000); gaussian_nb takes none.
    """
    x = _as_array(features)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise ValueError("labels must align with feature rows")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if (y == 0).sum() == 0 or (y == 1).sum() == 0:
        raise ValueError("both classes must be present in the training data")

    if kind == "knn":
        k = int(hyperparams.pop("k", 7))
        _reject_extras(kind, hyperparams)
        if not 1 <= k <= x.shape[0]:
            raise ValueError(f"k={k} outside [1, {x.shape[0]}]")
        return TrainedModel("knn", {"k": k, "exemplars": x.copy(), "labels": y.copy()})

    if kind == "gaussian_nb":
        _reject_extras(kind, hyperparams)
        return TrainedModel("gaussian_nb", _fit_gaussian_nb(x, y))

    if kind == "logistic":
        l2 = float(hyperparams.pop("l2", 1e-4))
        grad_tol = float(hyperparams.pop("grad_tol", 1e-6))
        max_steps = int(hyperparams.pop("max_steps", 10_000))
        _reject_extras(kind, hyperparams)
        weights, bias, info = _fit_logistic(x, y, l2, grad_tol, max_steps)
        return TrainedModel("logistic", {"weights": weights, "bias": bias, "l2": l2, **info})

    raise ValueError(f"unknown model kind {kind!r}, expected one of {KINDS}")


def predict_proba(model: TrainedModel, features) -> np.ndarray:
    """Per-row probability of the artifact class (all values in [0, 1])."""
    x = _as_array(features)
    p = model.parameters
    if model.kind == "knn":
        exemplars = p["exemplars"]
        if x.shape[1] != exemplars.shape[1]:
            raise ValueError("feature dimensionality differs from training")
        nn = _kernels.topk_neighbors(x, exemplars, p["k"], exclude_self=False)
        return (p["labels"][nn] == 1).mean(axis=1)
    if model.kind == "gaussian_nb":
        return _gaussian_nb_proba(p, x)
    if model.kind == "logistic":
        weights = p["weights"]
        if x.shape[1] != weights.shape[0]:
            raise ValueError("feature dimensionality differs from training")
        return _sigmoid(x @ weights + p["bias"])
    raise ValueError(f"unknown model kind {model.kind!r}")


def predict(model: TrainedModel, features) -> np.ndarray:
    """Hardened 0/1 labels at threshold 0.5; an exact 0.5 goes to class 1."""
    return (predict_proba(model, features) >= 0.5).astype(np.int64)


def save_model(model: TrainedModel, path) -> None:
    doc = {"schema": MODEL_SCHEMA, "kind": model.kind, "parameters": _jsonify(model.parameters)}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"{path}: unsupported model schema {doc.get('schema')!r}")
    if doc.get("kind") not in KINDS:
        raise ValueError(f"{path}: unknown model kind {doc.get('kind')!r}")
    params = doc["parameters"]
    for key, value in params.items():
        if isinstance(value, list):
            params[key] = np.asarray(value)
    return TrainedModel(doc["kind"], params)


def _fit_gaussian_nb(x, y) -> dict:
    classes = (0, 1)
    n, d = x.shape
    means = np.empty((2, d))
    variances = np.empty((2, d))
    priors = np.empty(2)
    for c in classes:
        rows = x[y == c]
        means[c] = rows.mean(axis=0)
        variances[c] = rows.var(axis=0)
        priors[c] = rows.shape[0] / n
    # variance floor keeps the log densities finite on constant features
    floor = max(1e-9 * float(x.var(axis=0).max()), 1e-12)
    np.maximum(variances, floor, out=variances)
    return {"means": means, "variances": variances, "priors": priors, "variance_floor": floor}


def _gaussian_nb_proba(p, x) -> np.ndarray:
    means, variances, priors = p["means"], p["variances"], p["priors"]
    if x.shape[1] != means.shape[1]:
        raise ValueError("feature dimensionality differs from training")
    joint = np.empty((x.shape[0], 2))
    for c in (0, 1):
        diff = x - means[c]
        log_density = -0.5 * (np.log(2.0 * np.pi * variances[c]) + diff**2 / variances[c]).sum(axis=1)
        joint[:, c] = np.log(priors[c]) + log_density
    # normalize in log space to dodge underflow at 256 features
    joint -= joint.max(axis=1, keepdims=True)
    posterior = np.exp(joint)
    posterior /= posterior.sum(axis=1, keepdims=True)
    return posterior[:, 1]


def _fit_logistic(x, y, l2, grad_tol, max_steps):
    n, d = x.shape
    weights = np.zeros(d)
    bias = 0.0
    target = y.astype(np.float64)

    def value_and_grad(w, b):
        z = x @ w + b
        # log(1 + e^z) - y*z, evaluated stably
        loss = float(np.mean(np.logaddexp(0.0, z) - target * z)) + 0.5 * l2 * float(w @ w)
        residual = _sigmoid(z) - target
        grad_w = x.T @ residual / n + l2 * w
        grad_b = float(residual.mean())
        return loss, grad_w, grad_b

    loss, grad_w, grad_b = value_and_grad(weights, bias)
    step = 1.0
    steps_used = 0
    while steps_used < max_steps:
        grad_norm = float(np.sqrt(grad_w @ grad_w + grad_b**2))
        if grad_norm < grad_tol:
            break
        # backtracking line search with a mild Armijo condition
        step = min(step * 2.0, 1e4)
        while True:
            w_new = weights - step * grad_w
            b_new = bias - step * grad_b
            loss_new, grad_w_new, grad_b_new = value_and_grad(w_new, b_new)
            if loss_new <= loss - 1e-4 * step * grad_norm**2 or step < 1e-16:
                break
            step *= 0.5
        weights, bias = w_new, b_new
        loss, grad_w, grad_b = loss_new, grad_w_new, grad_b_new
        steps_used += 1
    converged = float(np.sqrt(grad_w @ grad_w + grad_b**2)) < grad_tol
    return weights, bias, {"steps": steps_used, "converged": bool(converged)}


def logistic_loss_and_grad(weights, bias, x, y, l2):
    """Objective and gradient of the regularized log-loss (for gradient checks)."""
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(y, dtype=np.float64)
    z = x @ weights + bias
    loss = float(np.mean(np.logaddexp(0.0, z) - target * z)) + 0.5 * l2 * float(weights @ weights)
    residual = _sigmoid(z) - target
    grad_w = x.T @ residual / x.shape[0] + l2 * weights
    grad_b = float(residual.mean())
    return loss, grad_w, grad_b


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_array(features) -> np.ndarray:
    if isinstance(features, PulseMatrix):
        return np.ascontiguousarray(features.features, dtype=np.float64)
    arr = np.ascontiguousarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("features must be 2-D")
    return arr


def _reject_extras(kind, extras):
    if extras:
        raise TypeError(f"unexpected hyperparameters for {kind}: {sorted(extras)}")


def _jsonify(parameters: dict) -> dict:
    out = {}
    for key, value in parameters.items():
        if isinstance(value, np.ndarray):
            out[key] = value.tolist()
        elif isinstance(value, (np.integer, np.floating)):
            out[key] = value.item()
        else:
            out[key] = value
    return out
