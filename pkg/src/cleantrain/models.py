"""Convex per-example losses, their gradients, and first-order cleaning corrections.

Every loss family exposes the same surface: a per-example ``loss`` /
``gradient`` pair (the analytic gradient always matches central finite
differences of the loss), vectorized batch means, a deterministic
``train_full`` solver, and ``taylor_matrices`` returning the correction
matrices used to re-weight sampling of still-dirty records.

Conventions
-----------
* ``linear_regression``: phi = 0.5 * (theta.x - y)^2, gradient (theta.x - y) x.
* ``logistic_regression``: y in {0, 1}, h = sigmoid(theta.x), gradient (h - y) x.
* ``svm_binary``: y in {-1, +1}, hinge max(0, 1 - y theta.x); subgradient
  -y x when y theta.x < 1, zero otherwise.
* ``svm_multiclass``: one-vs-all hinge over columns of a (d, c) theta;
  y is a class index.
* ``mean`` / ``median``: aggregate queries over x[0]; labels unused and
  regularization disallowed.

``l2_reg`` is the per-example regularization coefficient: each example
contributes ``l2_reg * ||theta||^2`` to its loss and ``2 * l2_reg * theta``
to its gradient, so the total objective carries ``n * l2_reg * ||theta||^2``.

``taylor_matrices`` returns matrices oriented for additive corrections with
deltas measured as (dirty - clean): with M = -(d gradient / d input),

    gradient(clean) ~= gradient(dirty) + M_x @ (x_dirty - x_clean)
                                       + M_y @ (y_dirty - y_clean)

holds to first order. All operations are pure; batch reductions are plain
sums and may be reordered within 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.special

LOSSES = (
    "linear_regression",
    "logistic_regression",
    "svm_binary",
    "svm_multiclass",
    "mean",
    "median",
)

AGGREGATE_LOSSES = ("mean", "median")


@dataclass(frozen=True)
class ModelSpec:
    """Loss family, feature dimension, and regularization strength."""

    loss: str
    d: int
    l2_reg: float = 0.0
    n_classes: int = 2

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be >= 0")
        if self.loss in AGGREGATE_LOSSES and self.l2_reg != 0:
            raise ValueError(f"{self.loss} is unregularized; l2_reg must be 0")
        if self.loss == "svm_multiclass" and self.n_classes < 2:
            raise ValueError("svm_multiclass needs n_classes >= 2")


@dataclass(frozen=True)
class GradientEstimate:
    """A gradient vector tagged with how it was obtained."""

    g: np.ndarray
    provenance: str  # "exact" or "sampled"


def theta_shape(spec: ModelSpec) -> tuple:
    if spec.loss in AGGREGATE_LOSSES:
        return (1,)
    if spec.loss == "svm_multiclass":
        return (spec.d, spec.n_classes)
    return (spec.d,)


def zero_theta(spec: ModelSpec) -> np.ndarray:
    return np.zeros(theta_shape(spec))


def _as_x(spec: ModelSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise ValueError(f"x has shape {x.shape}, expected ({spec.d},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("x contains non-finite values")
    return x


def _as_y(y) -> float:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (1,):
        raise ValueError(f"y has shape {y.shape}, expected a scalar or length-1 vector")
    if not np.isfinite(y[0]):
        raise ValueError("y is non-finite")
    return float(y[0])


def _as_theta(spec: ModelSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != theta_shape(spec):
        raise ValueError(f"theta has shape {theta.shape}, expected {theta_shape(spec)}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta contains non-finite values")
    return theta


def _sigmoid(z):
    return scipy.special.expit(z)


def _reg_loss(spec: ModelSpec, theta: np.ndarray) -> float:
    return spec.l2_reg * float(np.sum(theta * theta))


def loss(spec: ModelSpec, x, y, theta) -> float:
    """Per-example loss, including the per-example l2 share."""
    x = _as_x(spec, x)
    theta = _as_theta(spec, theta)
    kind = spec.loss
    if kind == "linear_regression":
        r = float(theta @ x) - _as_y(y)
        return 0.5 * r * r + _reg_loss(spec, theta)
    if kind == "logistic_regression":
        z = float(theta @ x)
        yv = _as_y(y)
        # log(1 + exp(-z)) + (1 - y) z, stable in both tails
        return float(np.logaddexp(0.0, -z) + (1.0 - yv) * z) + _reg_loss(spec, theta)
    if kind == "svm_binary":
        yv = _as_y(y)
        return max(0.0, 1.0 - yv * float(theta @ x)) + _reg_loss(spec, theta)
    if kind == "svm_multiclass":
        k = int(_as_y(y))
        if not 0 <= k < spec.n_classes:
            raise ValueError(f"class label {k} outside [0, {spec.n_classes})")
        scores = x @ theta
        signs = np.full(spec.n_classes, -1.0)
        signs[k] = 1.0
        return float(np.maximum(0.0, 1.0 - signs * scores).sum()) + _reg_loss(spec, theta)
    if kind == "mean":
        r = float(theta[0]) - x[0]
        return r * r
    if kind == "median":
        return abs(x[0] - float(theta[0]))
    raise AssertionError(kind)


def gradient(spec: ModelSpec, x, y, theta) -> GradientEstimate:
    """Analytic per-example gradient (exact provenance)."""
    x = _as_x(spec, x)
    theta = _as_theta(spec, theta)
    kind = spec.loss
    reg = 2.0 * spec.l2_reg * theta
    if kind == "linear_regression":
        r = float(theta @ x) - _as_y(y)
        return GradientEstimate(r * x + reg, "exact")
    if kind == "logistic_regression":
        h = _sigmoid(float(theta @ x))
        return GradientEstimate((h - _as_y(y)) * x + reg, "exact")
    if kind == "svm_binary":
        yv = _as_y(y)
        g = -yv * x if yv * float(theta @ x) < 1.0 else np.zeros_like(x)
        return GradientEstimate(g + reg, "exact")
    if kind == "svm_multiclass":
        k = int(_as_y(y))
        if not 0 <= k < spec.n_classes:
            raise ValueError(f"class label {k} outside [0, {spec.n_classes})")
        scores = x @ theta
        signs = np.full(spec.n_classes, -1.0)
        signs[k] = 1.0
        g = np.zeros_like(theta)
        violated = signs * scores < 1.0
        g[:, violated] = np.outer(x, -signs[violated])
        return GradientEstimate(g + reg, "exact")
    if kind == "mean":
        return GradientEstimate(np.array([2.0 * (float(theta[0]) - x[0])]), "exact")
    if kind == "median":
        return GradientEstimate(np.array([float(np.sign(float(theta[0]) - x[0]))]), "exact")
    raise AssertionError(kind)


def _check_xy(spec: ModelSpec, X: np.ndarray, Y: np.ndarray):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[1] != spec.d:
        raise ValueError(f"X has shape {X.shape}, expected (n, {spec.d})")
    if Y.shape[0] != X.shape[0]:
        raise ValueError("X and Y disagree on n")
    return X, Y


def mean_loss(spec: ModelSpec, X, Y, theta) -> float:
    """Mean per-example loss over a batch (vectorized)."""
    X, Y = _check_xy(spec, X, Y)
    theta = _as_theta(spec, theta)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    kind = spec.loss
    if kind == "linear_regression":
        r = X @ theta - Y
        return float(0.5 * np.mean(r * r)) + _reg_loss(spec, theta)
    if kind == "logistic_regression":
        z = X @ theta
        return float(np.mean(np.logaddexp(0.0, -z) + (1.0 - Y) * z)) + _reg_loss(spec, theta)
    if kind == "svm_binary":
        m = 1.0 - Y * (X @ theta)
        return float(np.mean(np.maximum(0.0, m))) + _reg_loss(spec, theta)
    if kind == "svm_multiclass":
        scores = X @ theta
        signs = np.where(np.arange(spec.n_classes)[None, :] == Y.astype(int)[:, None], 1.0, -1.0)
        return float(np.mean(np.maximum(0.0, 1.0 - signs * scores).sum(axis=1))) + _reg_loss(spec, theta)
    if kind == "mean":
        r = float(theta[0]) - X[:, 0]
        return float(np.mean(r * r))
    if kind == "median":
        return float(np.mean(np.abs(X[:, 0] - float(theta[0]))))
    raise AssertionError(kind)


def mean_gradient(spec: ModelSpec, X, Y, theta) -> np.ndarray:
    """Mean per-example gradient over a batch (vectorized)."""
    X, Y = _check_xy(spec, X, Y)
    theta = _as_theta(spec, theta)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    kind = spec.loss
    reg = 2.0 * spec.l2_reg * theta
    if kind == "linear_regression":
        r = X @ theta - Y
        return (X.T @ r) / n + reg
    if kind == "logistic_regression":
        h = _sigmoid(X @ theta)
        return (X.T @ (h - Y)) / n + reg
    if kind == "svm_binary":
        viol = Y * (X @ theta) < 1.0
        g = -(X[viol].T @ Y[viol]) / n if np.any(viol) else np.zeros(spec.d)
        return g + reg
    if kind == "svm_multiclass":
        scores = X @ theta
        signs = np.where(np.arange(spec.n_classes)[None, :] == Y.astype(int)[:, None], 1.0, -1.0)
        viol = (signs * scores < 1.0).astype(float)
        return -(X.T @ (signs * viol)) / n + reg
    if kind == "mean":
        return np.array([2.0 * (float(theta[0]) - float(np.mean(X[:, 0])))])
    if kind == "median":
        return np.array([float(np.mean(np.sign(float(theta[0]) - X[:, 0])))])
    raise AssertionError(kind)


def _examples_to_xy(spec: ModelSpec, examples):
    if isinstance(examples, tuple) and len(examples) == 2 and hasattr(examples[0], "ndim"):
        X, Y = examples
    else:
        pairs = list(examples)
        if not pairs:
            raise ValueError("train_full needs at least one example")
        X = np.array([np.asarray(x, dtype=float) for x, _ in pairs])
        Y = np.array([_as_y(y) for _, y in pairs])
    return _check_xy(spec, X, Y)


def descend(spec, X, Y, theta, tol=1e-8, max_iter=5000):
    """Backtracking full-batch descent; stalls cleanly on nonsmooth objectives."""
    step = 1.0
    f = mean_loss(spec, X, Y, theta)
    for _ in range(max_iter):
        g = mean_gradient(spec, X, Y, theta)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            break
        improved = False
        while step > 1e-18:
            cand = theta - step * g
            fc = mean_loss(spec, X, Y, cand)
            if fc <= f - 1e-4 * step * gn * gn:
                theta, f = cand, fc
                improved = True
                step = min(step * 2.0, 1e6)
                break
            step *= 0.5
        if not improved:
            break
    return theta


def train_full(spec: ModelSpec, examples, tol: float = 1e-8, max_iter: int = 100_000) -> np.ndarray:
    """Deterministic full-batch fit of the mean objective.

    Exact formulas for the aggregate losses; otherwise quasi-Newton descent
    with the analytic gradient, polished by backtracking descent until the
    gradient norm is at or below ``tol`` or the iteration cap is reached
    (hinge objectives may stall above ``tol`` at a subgradient kink).
    """
    X, Y = _examples_to_xy(spec, examples)
    if X.shape[0] < 1:
        raise ValueError("train_full needs at least one example")
    if spec.loss == "mean":
        return np.array([float(np.mean(X[:, 0]))])
    if spec.loss == "median":
        return np.array([float(np.median(X[:, 0]))])

    shape = theta_shape(spec)

    def f(flat):
        return mean_loss(spec, X, Y, flat.reshape(shape))

    def fg(flat):
        return mean_gradient(spec, X, Y, flat.reshape(shape)).reshape(-1)

    res = scipy.optimize.minimize(
        f,
        np.zeros(int(np.prod(shape))),
        jac=fg,
        method="L-BFGS-B",
        options={"maxiter": min(max_iter, 20_000), "ftol": 1e-16, "gtol": 1e-12},
    )
    theta = res.x.reshape(shape)
    theta = descend(spec, X, Y, theta, tol, max_iter=min(max_iter, 5_000))
    return theta


def evaluate(spec: ModelSpec, theta, X, Y) -> dict:
    """Held-out metrics: classification accuracy (or R^2) and mean loss."""
    X, Y = _check_xy(spec, X, Y)
    theta = _as_theta(spec, theta)
    kind = spec.loss
    ml = mean_loss(spec, X, Y, theta)
    if kind == "svm_binary":
        pred = np.where(X @ theta >= 0.0, 1.0, -1.0)
        acc = float(np.mean(pred == np.sign(Y)))
    elif kind == "logistic_regression":
        pred = (X @ theta >= 0.0).astype(float)
        acc = float(np.mean(pred == (Y > 0.5).astype(float)))
    elif kind == "svm_multiclass":
        pred = np.argmax(X @ theta, axis=1)
        acc = float(np.mean(pred == Y.astype(int)))
    else:
        if kind == "linear_regression":
            resid = Y - X @ theta
            target = Y
        else:
            resid = X[:, 0] - float(theta[0])
            target = X[:, 0]
        ss_tot = float(np.sum((target - np.mean(target)) ** 2))
        ss_res = float(np.sum(resid**2))
        acc = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return {"accuracy": acc, "mean_loss": ml}


def taylor_matrices(spec: ModelSpec, x, y, theta, jacobian_consistent: bool = True):
    """Correction matrices (M_x, M_y) for first-order gradient repair.

    With deltas measured dirty-minus-clean, ``gradient(dirty) + M_x @ dx +
    M_y @ dy`` approximates the clean gradient; equivalently M is the
    negated Jacobian of the gradient w.r.t. the example. Pass
    ``jacobian_consistent=False`` for the uncorrected legacy closed forms
    (kept for comparison; they carry known sign and diagonal defects).

    Supported: linear_regression, logistic_regression, svm_binary, and the
    aggregate constants (mean -> 2 I, median -> 0).
    """
    x = _as_x(spec, x)
    theta = _as_theta(spec, theta)
    kind = spec.loss
    if kind == "mean":
        return np.array([[2.0]]), np.zeros((1, 1))
    if kind == "median":
        return np.zeros((1, 1)), np.zeros((1, 1))
    if kind == "svm_multiclass":
        raise ValueError("taylor_matrices does not support svm_multiclass")

    d = spec.d
    yv = _as_y(y)
    if kind == "linear_regression":
        r = float(theta @ x) - yv
        if jacobian_consistent:
            m_x = -(np.outer(x, theta) + r * np.eye(d))
            m_y = x.reshape(d, 1).copy()
        else:
            m_x = np.outer(x, theta)
            np.fill_diagonal(m_x, 2.0 * x + (theta @ x - theta * x) - yv)
            m_y = x.reshape(d, 1).copy()
        return m_x, m_y
    if kind == "logistic_regression":
        h = _sigmoid(float(theta @ x))
        s = h * (1.0 - h)
        if jacobian_consistent:
            m_x = -(s * np.outer(x, theta) + (h - yv) * np.eye(d))
            m_y = x.reshape(d, 1).copy()
        else:
            m_x = s * np.outer(x, theta) + h
            np.fill_diagonal(m_x, s * theta * x + h - yv)
            m_y = x.reshape(d, 1).copy()
        return m_x, m_y
    if kind == "svm_binary":
        if yv * float(theta @ x) < 1.0:
            m_x = yv * np.eye(d) if jacobian_consistent else -yv * np.eye(d)
            m_y = x.reshape(d, 1).copy()
        else:
            m_x = np.zeros((d, d))
            m_y = np.zeros((d, 1))
        return m_x, m_y
    raise AssertionError(kind)
