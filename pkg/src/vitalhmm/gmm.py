"""Diagonal-covariance Gaussian mixture emission model.

One ``GmmEmission`` holds the per-state density of an HMM: a K-component
mixture of axis-aligned Gaussians with a closed-form, responsibility-weighted
M-step. All density work is done in the log domain.
"""

from dataclasses import dataclass

import numpy as np

from ._numeric import logsumexp, normalize_probs
from .errors import ContractError

VARIANCE_FLOOR = 1e-6
WEIGHT_FLOOR = 1e-10
LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GmmEmission:
    """Mixture of diagonal Gaussians over a fixed input dimension.

    log_weights : (K,) mixture log-weights, summing to 1 in linear domain
    means       : (K, d) component means
    variances   : (K, d) diagonal variances, each >= VARIANCE_FLOOR
    """

    log_weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.variances = np.maximum(
            np.atleast_2d(np.asarray(self.variances, dtype=float)), VARIANCE_FLOOR
        )

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def component_log_density(self, X):
        """Per-component Gaussian log-densities, shape (T, K).

        Uses the expanded quadratic form so no (T, K, d) intermediate is
        materialized.
        """
        X = _as_matrix(X, self.dim)
        inv_var = 1.0 / self.variances                       # (K, d)
        const = (LOG_2PI + np.log(self.variances)).sum(axis=1)
        const = const + (self.means**2 * inv_var).sum(axis=1)  # (K,)
        quad = X**2 @ inv_var.T - 2.0 * (X @ (self.means * inv_var).T)
        return -0.5 * (const[None, :] + quad)

    def log_density(self, X):
        """Mixture log-density per row of X, shape (T,)."""
        lp = self.component_log_density(X) + self.log_weights[None, :]
        return logsumexp(lp, axis=1)

    def m_step(self, X, gammas):
        """Responsibility-weighted MLE update. Returns a new emission.

        ``gammas`` is the per-row state posterior weight (>= 0, not all zero).
        Components that receive essentially no responsibility mass keep their
        parameters and have their weight floored before renormalization.
        """
        X = _as_matrix(X, self.dim)
        gammas = np.asarray(gammas, dtype=float)
        if gammas.shape != (X.shape[0],):
            raise ContractError(
                f"gamma length {gammas.shape} does not match {X.shape[0]} samples"
            )
        if np.any(gammas < 0):
            raise ContractError("negative state posterior weight")
        total_gamma = gammas.sum()
        if total_gamma <= 0:
            raise ContractError("all-zero state posteriors in GMM M-step")

        log_r = self.component_log_density(X) + self.log_weights[None, :]
        log_r -= logsumexp(log_r, axis=1)[:, None]
        resp = np.exp(log_r) * gammas[:, None]               # (T, K)
        mass = resp.sum(axis=0)                              # (K,)

        alive = mass > 1e-12 * total_gamma
        means = self.means.copy()
        variances = self.variances.copy()
        safe_mass = np.where(alive, mass, 1.0)
        mu = resp.T @ X / safe_mass[:, None]
        ex2 = resp.T @ (X**2) / safe_mass[:, None]
        var = np.maximum(ex2 - mu**2, VARIANCE_FLOOR)
        means[alive] = mu[alive]
        variances[alive] = var[alive]

        weights = normalize_probs(mass / total_gamma, WEIGHT_FLOOR)
        return GmmEmission(np.log(weights), means, variances)

    def sample(self, rng, size):
        """Draw ``size`` points from the mixture (used by the synthetic generator)."""
        weights = np.exp(self.log_weights)
        comp = rng.choice(self.n_components, size=size, p=weights / weights.sum())
        noise = rng.standard_normal((size, self.dim))
        return self.means[comp] + np.sqrt(self.variances[comp]) * noise


def gmm_init(X, n_components, n_states, seed):
    """Seed one GmmEmission per state from pooled training samples.

    k-means++ style seeding picks ``n_components * n_states`` centers on the
    pooled data; centers are dealt round-robin across states. Variances start
    at the global per-channel variance and weights uniform.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n_centers = n_components * n_states
    if X.shape[0] < n_centers:
        raise ContractError(
            f"need at least {n_centers} samples to seed {n_states} states "
            f"with {n_components} components, got {X.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_centers(X, n_centers, rng)
    global_var = np.maximum(X.var(axis=0), VARIANCE_FLOOR)
    log_w = np.full(n_components, -np.log(n_components))
    emissions = []
    for s in range(n_states):
        means = centers[s::n_states]
        variances = np.tile(global_var, (n_components, 1))
        emissions.append(GmmEmission(log_w.copy(), means.copy(), variances))
    return emissions


def _kmeanspp_centers(X, n_centers, rng):
    n = X.shape[0]
    centers = np.empty((n_centers, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for i in range(1, n_centers):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[i] = X[idx]
        d2 = np.minimum(d2, ((X - centers[i]) ** 2).sum(axis=1))
    return centers


def _as_matrix(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ContractError(f"expected samples of dimension {dim}, got shape {X.shape}")
    return X
