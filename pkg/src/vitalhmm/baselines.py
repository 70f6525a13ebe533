"""Static-feature reference classifiers.

Two deliberately simple models for comparison against the sequence
models: an L2-penalized logistic regression fitted by damped Newton
iterations with a cross-validated penalty grid, and an extreme learning
machine (random frozen hidden layer, least-squares readout). Both are
deterministic given their seeds.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ._numeric import sigmoid
from .errors import ContractError, TrainingError

log = logging.getLogger(__name__)

LAMBDA_GRID = np.logspace(-5.0, 5.0, 11)


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    lam: float

    def decision(self, X):
        X = np.asarray(X, dtype=float)
        return X @ self.weights + self.bias

    def predict_proba(self, X):
        return sigmoid(self.decision(X))

    def predict(self, X):
        return (self.decision(X) >= 0.0).astype(int)


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def logreg_objective(X, y, w, b, lam):
    """Mean cross-entropy plus (lam/2) * ||w||^2; bias unpenalized."""
    z = X @ w + b
    ce = float(np.mean(_softplus(z) - y * z))
    return ce + 0.5 * lam * float(w @ w)


def logreg_grad(X, y, w, b, lam):
    """(grad_w, grad_b) of :func:`logreg_objective`."""
    B = X.shape[0]
    p = sigmoid(X @ w + b)
    r = (p - y) / B
    return X.T @ r + lam * w, float(r.sum())


def logreg_fit(X, y, lam, tol=1e-10, max_iters=200, init=None):
    """Damped Newton minimization of the penalized cross-entropy.

    ``init`` optionally provides (weights, bias) to start from; the
    objective is convex, so any start converges to the same minimizer.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ContractError("need a (B, d) matrix and matching label vector")
    if np.unique(y).shape[0] < 2:
        raise TrainingError("logistic fit needs both classes present")
    B, d = X.shape
    if init is None:
        w = np.zeros(d)
        b = 0.0
    else:
        w = np.array(init[0], dtype=float)
        b = float(init[1])

    obj = logreg_objective(X, y, w, b, lam)
    for _ in range(max_iters):
        gw, gb = logreg_grad(X, y, w, b, lam)
        gnorm = np.sqrt(gw @ gw + gb * gb)
        if gnorm <= tol:
            break
        p = sigmoid(X @ w + b)
        r = p * (1.0 - p)
        G = np.hstack([X, np.ones((B, 1))])
        H = (G * r[:, None]).T @ G / B
        H[:d, :d] += lam * np.eye(d)
        H += 1e-12 * np.eye(d + 1)
        g = np.append(gw, gb)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        # halving line search keeps Newton descent monotone
        t = 1.0
        for _ in range(60):
            w_new = w - t * step[:d]
            b_new = b - t * step[d]
            obj_new = logreg_objective(X, y, w_new, b_new, lam)
            if obj_new <= obj:
                break
            t *= 0.5
        else:
            break
        improvement = obj - obj_new
        w, b, obj = w_new, b_new, obj_new
        if improvement < 1e-16:
            break
    return LogisticModel(w, float(b), float(lam))


def stratified_folds(y, n_folds, seed):
    """Round-robin class-balanced fold assignment, shuffled per class."""
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    assignment = np.empty(y.shape[0], dtype=int)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.shape[0])]
        for pos, i in enumerate(idx):
            assignment[i] = pos % n_folds
    return assignment


def logreg_cv_grid(X, y, grid=None, n_folds=3, seed=0, tol=1e-10):
    """Pick the penalty by stratified cross-validated accuracy, refit on all.

    Ties go to the larger penalty. Folds whose training part collapses to
    one class are skipped for that penalty.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if grid is None:
        grid = LAMBDA_GRID
    grid = np.sort(np.asarray(grid, dtype=float))
    if X.shape[0] < n_folds:
        raise ContractError(f"{X.shape[0]} samples cannot fill {n_folds} folds")
    assignment = stratified_folds(y, n_folds, seed)

    best_lam = None
    best_acc = -1.0
    for lam in grid:
        accs = []
        for fold in range(n_folds):
            train = assignment != fold
            test = ~train
            if not test.any() or np.unique(y[train]).shape[0] < 2:
                continue
            model = logreg_fit(X[train], y[train].astype(float), lam, tol=tol)
            accs.append(float((model.predict(X[test]) == y[test]).mean()))
        if not accs:
            continue
        acc = float(np.mean(accs))
        if acc >= best_acc:
            best_acc = acc
            best_lam = float(lam)
    if best_lam is None:
        raise TrainingError("no usable cross-validation fold")
    log.debug("cv picked lambda %.3g with accuracy %.4f", best_lam, best_acc)
    return logreg_fit(X, y.astype(float), best_lam, tol=tol)


@dataclass
class ElmModel:
    hidden_weights: np.ndarray  # (h, d), frozen after seeding
    hidden_bias: np.ndarray  # (h,)
    readout_weights: np.ndarray  # (h,)
    readout_bias: float
    ridge: float

    def hidden(self, X):
        X = np.asarray(X, dtype=float)
        return sigmoid(X @ self.hidden_weights.T + self.hidden_bias)

    def score(self, X):
        return self.hidden(X) @ self.readout_weights + self.readout_bias

    def predict(self, X):
        return (self.score(X) >= 0.5).astype(int)


def elm_fit(X, y, n_hidden=100, ridge=1e-6, seed=0):
    """Random uniform hidden layer, ridge least-squares readout.

    Targets are the raw 0/1 labels; the readout bias carries no penalty.
    With ridge exactly zero the readout is the minimum-norm least-squares
    solution, which interpolates whenever the hidden design has full row
    rank.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ContractError("need a (B, d) matrix and matching label vector")
    if n_hidden < 1:
        raise ContractError("need at least one hidden unit")
    rng = np.random.default_rng(seed)
    W = rng.uniform(-1.0, 1.0, size=(n_hidden, X.shape[1]))
    b = rng.uniform(-1.0, 1.0, size=n_hidden)
    H = sigmoid(X @ W.T + b)
    G = np.hstack([H, np.ones((X.shape[0], 1))])
    if ridge == 0.0:
        beta = np.linalg.lstsq(G, y, rcond=None)[0]
    else:
        penalty = np.eye(n_hidden + 1)
        penalty[-1, -1] = 0.0
        beta = np.linalg.solve(G.T @ G + ridge * penalty, G.T @ y)
    return ElmModel(W, b, beta[:-1], float(beta[-1]), float(ridge))
