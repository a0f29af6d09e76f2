"""Independent oracles the tests check the library against.

Everything here is computed from first principles (finite differences,
closed forms, brute-force enumeration) without calling back into the code
under test, so agreement is evidence rather than tautology.
"""

import itertools

import numpy as np
from scipy import optimize


def fd_gradient(f, theta, h=1e-6):
    """Central finite differences of a scalar function at theta."""
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e.flat[i] = h
        g.flat[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def fd_jacobian(f, v, h=1e-6):
    """Central-difference Jacobian of a vector function w.r.t. v.

    Returns J with J[i, j] = d f(v)[i] / d v[j].
    """
    v = np.asarray(v, dtype=float)
    f0 = np.asarray(f(v), dtype=float)
    J = np.zeros((f0.size, v.size))
    for j in range(v.size):
        e = np.zeros_like(v)
        e.flat[j] = h
        J[:, j] = (np.asarray(f(v + e)) - np.asarray(f(v - e))).ravel() / (2 * h)
    return J


def ridge_exact(X, Y, l2_per_example):
    """Closed-form minimizer of (1/n) sum [ 0.5 (theta.x - y)^2 + l2 |theta|^2 ].

    Stationarity: (1/n) X^T (X theta - Y) + 2 l2 theta = 0.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(Y, dtype=float).reshape(-1)
    n = X.shape[0]
    A = X.T @ X + 2.0 * l2_per_example * n * np.eye(X.shape[1])
    return np.linalg.solve(A, X.T @ y)


def logistic_exact(X, Y, l2_per_example):
    """Reference logistic fit via scipy on the same per-example objective."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(Y, dtype=float).reshape(-1)
    n, d = X.shape

    def obj(theta):
        z = X @ theta
        # log(1 + e^-z) stably, shifted by (1-y) z for the negative class
        ll = np.logaddexp(0.0, -z) + (1.0 - y) * z
        return ll.mean() + l2_per_example * theta @ theta

    res = optimize.minimize(obj, np.zeros(d), method="L-BFGS-B",
                            options={"ftol": 1e-14, "gtol": 1e-12, "maxiter": 5000})
    return res.x


def ls_slope_intercept(x, y):
    """Simple-regression slope and intercept, closed form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    slope = ((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum()
    return slope, ym - slope * xm


def reweighted_mean_variance(values, probs, k):
    """E ||mu_hat - mean||^2 for the 1/p-weighted with-replacement mean
    estimator, by enumerating all n^k outcomes."""
    vals = [np.atleast_1d(np.asarray(v, dtype=float)) for v in values]
    probs = np.asarray(probs, dtype=float)
    n = len(vals)
    mean = sum(vals) / n
    total = 0.0
    for idxs in itertools.product(range(n), repeat=k):
        est = sum(vals[i] / probs[i] for i in idxs) / (k * n)
        p = float(np.prod([probs[i] for i in idxs]))
        err = est - mean
        total += p * float(err @ err)
    return total


def f1(pred, truth):
    """F1 of boolean arrays: prediction vs ground truth."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    if 2 * tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def perceptron_separable(X, labels, epochs=2000):
    """Plain perceptron with a bias column; returns True when it finds a
    separating hyperplane (certificate of linear separability)."""
    X = np.asarray(X, dtype=float)
    s = np.where(np.asarray(labels) > 0, 1.0, -1.0)
    Z = np.hstack([X, np.ones((X.shape[0], 1))])
    w = np.zeros(Z.shape[1])
    for _ in range(epochs):
        wrong = False
        for i in range(Z.shape[0]):
            if s[i] * (Z[i] @ w) <= 0:
                w = w + s[i] * Z[i]
                wrong = True
        if not wrong:
            return True
    return False
