"""Hidden Markov models over fixed-length vector sequences.

All recursions run in log space with a hand-rolled log-sum-exp so that
likelihoods stay finite for long sequences. Emission densities are
pluggable: anything with ``log_density(X) -> (T,) array`` and
``m_step(X, gammas) -> new emission`` works. Training is Baum-Welch;
decoding is Viterbi; two trained models plus class log-priors form a
maximum-a-posteriori classifier.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from ._numeric import logsumexp, normalize_probs
from .errors import ContractError, NumericalError, TrainingError
from .gmm import gmm_init

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-10


@dataclass
class HmmModel:
    """State chain with per-state emission densities.

    ``log_q`` is the initial-state distribution and ``log_A[i, j]`` the
    transition probability i -> j, both stored as logs of floored,
    normalized probabilities.
    """

    log_q: np.ndarray
    log_A: np.ndarray
    emissions: list

    def __post_init__(self):
        self.log_q = np.asarray(self.log_q, dtype=float)
        self.log_A = np.asarray(self.log_A, dtype=float)
        n = self.log_q.shape[0]
        if self.log_A.shape != (n, n):
            raise ContractError(
                f"transition matrix {self.log_A.shape} does not match {n} states"
            )
        if len(self.emissions) != n:
            raise ContractError(
                f"{len(self.emissions)} emissions for {n} states"
            )

    @property
    def n_states(self):
        return self.log_q.shape[0]

    def emission_log_probs(self, X):
        """(T, n_states) matrix of per-state log-densities."""
        X = np.asarray(X, dtype=float)
        T = X.shape[0]
        logB = np.empty((T, self.n_states))
        for s, e in enumerate(self.emissions):
            col = np.asarray(e.log_density(X))
            if not np.all(np.isfinite(col)):
                t = int(np.argwhere(~np.isfinite(col))[0][0])
                raise NumericalError(
                    f"non-finite emission log-density at state {s}, time {t}"
                )
            logB[:, s] = col
        return logB


def _batch_emission_log_probs(model, batch):
    """(B, T, n) log-densities for a stack of equal-length sequences."""
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 2:
        batch = batch[None, ...]
    B, T, d = batch.shape
    flat = batch.reshape(B * T, d)
    logB = np.empty((B * T, model.n_states))
    for s, e in enumerate(model.emissions):
        col = np.asarray(e.log_density(flat))
        if not np.all(np.isfinite(col)):
            i = int(np.argwhere(~np.isfinite(col))[0][0])
            raise NumericalError(
                f"non-finite emission log-density at state {s}, "
                f"sequence {i // T}, time {i % T}"
            )
        logB[:, s] = col
    return logB.reshape(B, T, model.n_states)


def forward_log(model, logB):
    """Log-domain forward recursion.

    ``logB`` is (T, n) or (B, T, n); returns (log_alpha, log_likelihood)
    with matching leading shape. log_alpha[..., t, s] is the joint
    log-probability of the prefix up to t and state s at t.
    """
    logB = np.asarray(logB, dtype=float)
    single = logB.ndim == 2
    if single:
        logB = logB[None, ...]
    B, T, n = logB.shape
    if T == 0:
        raise ContractError("sequences must have at least one time step")
    la = np.empty((B, T, n))
    la[:, 0] = model.log_q[None, :] + logB[:, 0]
    for t in range(1, T):
        tmp = la[:, t - 1, :, None] + model.log_A[None, :, :]
        m = tmp.max(axis=1)
        safe = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            la[:, t] = logB[:, t] + safe + np.log(
                np.exp(tmp - safe[:, None, :]).sum(axis=1)
            )
        la[:, t] = np.where(np.isfinite(m), la[:, t], -np.inf)
    ll = logsumexp(la[:, -1], axis=1)
    if single:
        return la[0], float(ll[0])
    return la, ll


def backward_log(model, logB):
    """Log-domain backward recursion; log_beta[..., T-1, :] = 0."""
    logB = np.asarray(logB, dtype=float)
    single = logB.ndim == 2
    if single:
        logB = logB[None, ...]
    B, T, n = logB.shape
    lb = np.zeros((B, T, n))
    for t in range(T - 2, -1, -1):
        tmp = model.log_A[None, :, :] + (lb[:, t + 1] + logB[:, t + 1])[:, None, :]
        m = tmp.max(axis=2)
        safe = np.where(np.isfinite(m), m, 0.0)
        with np.errstate(divide="ignore"):
            lb[:, t] = safe + np.log(np.exp(tmp - safe[:, :, None]).sum(axis=2))
        lb[:, t] = np.where(np.isfinite(m), lb[:, t], -np.inf)
    if single:
        return lb[0]
    return lb


def sequence_log_likelihood(model, X):
    """log p(sequence | model) via the forward recursion."""
    logB = model.emission_log_probs(X)
    _, ll = forward_log(model, logB)
    return ll


def posteriors(model, logB):
    """State posteriors gamma and summed transition posteriors xi.

    Returns (gammas, xi_sum, log_likelihood) for one sequence:
    gammas is (T, n) with rows summing to one, xi_sum is (n, n) with total
    mass T - 1.
    """
    la, ll = forward_log(model, logB)
    lb = backward_log(model, logB)
    lg = la + lb - ll
    gammas = np.exp(lg)
    gammas /= gammas.sum(axis=1, keepdims=True)
    lxi = (
        la[:-1, :, None]
        + model.log_A[None, :, :]
        + (logB[1:] + lb[1:])[:, None, :]
        - ll
    )
    xi_sum = np.exp(lxi).sum(axis=0)
    return gammas, xi_sum, ll


def viterbi(model, X):
    """Most probable state path and its joint log-probability."""
    logB = model.emission_log_probs(X)
    T, n = logB.shape
    if T == 0:
        raise ContractError("sequences must have at least one time step")
    delta = model.log_q + logB[0]
    back = np.zeros((T, n), dtype=int)
    for t in range(1, T):
        cand = delta[:, None] + model.log_A
        back[t] = cand.argmax(axis=0)
        delta = cand.max(axis=0) + logB[t]
    path = np.empty(T, dtype=int)
    path[-1] = int(delta.argmax())
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta.max())


@dataclass
class BaumWelchConfig:
    max_iters: int = 30
    tol: float = 1e-3


def baum_welch(model, sequences, config=None):
    """Expectation-maximization fit; returns (model, log-likelihood trace).

    ``sequences`` is a (B, T, d) stack. The trace holds the total data
    log-likelihood evaluated before each applied update, plus a final
    evaluation under the last model, so it has one more entry than the
    number of applied updates. Iteration stops when the improvement drops
    below ``tol`` (that update is not applied) or at ``max_iters``.
    """
    config = config or BaumWelchConfig()
    batch = np.asarray(sequences, dtype=float)
    if batch.ndim == 2:
        batch = batch[None, ...]
    if batch.ndim != 3:
        raise ContractError(f"expected (B, T, d) sequences, got shape {batch.shape}")
    B, T, d = batch.shape
    n = model.n_states

    trace = []
    for it in range(config.max_iters):
        logB_all = _batch_emission_log_probs(model, batch)
        la, ll = forward_log(model, logB_all)
        lb = backward_log(model, logB_all)
        total_ll = float(ll.sum())
        if not np.isfinite(total_ll):
            raise TrainingError(f"non-finite log-likelihood at iteration {it}")
        if trace and total_ll - trace[-1] < config.tol:
            trace.append(total_ll)
            return model, trace
        trace.append(total_ll)

        lg = la + lb - ll[:, None, None]
        gammas = np.exp(lg)
        gammas /= gammas.sum(axis=2, keepdims=True)

        xi_total = np.zeros((n, n))
        for b in range(B):
            lxi = (
                la[b, :-1, :, None]
                + model.log_A[None, :, :]
                + (logB_all[b, 1:] + lb[b, 1:])[:, None, :]
                - ll[b]
            )
            xi_total += np.exp(lxi).sum(axis=0)

        new_q = normalize_probs(gammas[:, 0, :].sum(axis=0), PROB_FLOOR)
        row = xi_total.sum(axis=1, keepdims=True)
        new_A = np.where(row > 0, xi_total / np.where(row > 0, row, 1.0), 1.0 / n)
        new_A = np.stack([normalize_probs(r, PROB_FLOOR) for r in new_A])

        flat_X = batch.reshape(B * T, d)
        flat_g = gammas.reshape(B * T, n)
        new_emissions = [
            model.emissions[s].m_step(flat_X, flat_g[:, s]) for s in range(n)
        ]
        model = replace(
            model,
            log_q=np.log(new_q),
            log_A=np.log(new_A),
            emissions=new_emissions,
        )

    logB_all = _batch_emission_log_probs(model, batch)
    _, ll = forward_log(model, logB_all)
    trace.append(float(ll.sum()))
    return model, trace


def init_chain(n_states, seed):
    """Uniform q; A uniform plus a small seeded perturbation, row-normalized.

    The perturbation breaks the symmetry that would otherwise pin EM at the
    uniform-transition fixed point.
    """
    rng = np.random.default_rng(seed)
    q = np.full(n_states, 1.0 / n_states)
    A = np.full((n_states, n_states), 1.0 / n_states)
    A = A + rng.uniform(0.0, 0.01, size=A.shape)
    A = A / A.sum(axis=1, keepdims=True)
    return np.log(q), np.log(A)


def init_gmm_hmm(sequences, n_states, n_components, seed):
    """Perturbed-uniform chain plus k-means++ seeded Gaussian mixtures."""
    batch = np.asarray(sequences, dtype=float)
    if batch.ndim == 2:
        batch = batch[None, ...]
    B, T, d = batch.shape
    flat = batch.reshape(B * T, d)
    emissions = gmm_init(flat, n_components, n_states, seed)
    log_q, log_A = init_chain(n_states, seed)
    return HmmModel(log_q, log_A, emissions)


def train_gmm_hmm(sequences, n_states, n_components, seed, config=None):
    model = init_gmm_hmm(sequences, n_states, n_components, seed)
    return baum_welch(model, sequences, config)


@dataclass
class ClassifierPair:
    """Two per-class models and class log-priors for MAP classification."""

    models: list
    log_priors: np.ndarray

    def __post_init__(self):
        self.log_priors = np.asarray(self.log_priors, dtype=float)
        if len(self.models) != self.log_priors.shape[0]:
            raise ContractError("one log-prior per class model is required")
        if abs(np.exp(self.log_priors).sum() - 1.0) > 1e-9:
            raise ContractError("class priors must sum to one")

    @property
    def n_classes(self):
        return len(self.models)

    def class_scores(self, batch):
        """(B, n_classes) matrix of log p(x | class) + log prior."""
        batch = np.asarray(batch, dtype=float)
        if batch.ndim == 2:
            batch = batch[None, ...]
        B = batch.shape[0]
        scores = np.empty((B, self.n_classes))
        for j, m in enumerate(self.models):
            logB = _batch_emission_log_probs(m, batch)
            _, ll = forward_log(m, logB)
            scores[:, j] = ll
        return scores + self.log_priors[None, :]

    def classify(self, batch, use_priors=True):
        """MAP class labels; ``use_priors=False`` drops the prior term.

        Ties resolve to the lower class index via argmax.
        """
        scores = self.class_scores(batch)
        if not use_priors:
            scores = scores - self.log_priors[None, :]
        return scores.argmax(axis=1)

    def classify_one(self, seq, use_priors=True):
        """(label, score gap) for one sequence; gap = score1 - score0."""
        scores = self.class_scores(np.asarray(seq, dtype=float)[None, ...])[0]
        if not use_priors:
            scores = scores - self.log_priors
        return int(scores.argmax()), float(scores[1] - scores[0])


def log_priors_from_labels(labels, n_classes=2):
    """Floored empirical class frequencies on the log scale."""
    labels = np.asarray(labels, dtype=int)
    counts = np.bincount(labels, minlength=n_classes).astype(float)
    if counts.sum() <= 0:
        raise ContractError("cannot infer class priors from an empty label set")
    return np.log(normalize_probs(counts / counts.sum(), PROB_FLOOR))
