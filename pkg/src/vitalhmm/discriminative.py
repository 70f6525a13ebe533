"""Discriminative fine-tuning of a two-class flow-emission classifier.

The objective is the summed log-posterior of the correct class: for each
sequence, (score of the true class) minus (log-sum-exp over both class
scores), where a class score is the sequence log-likelihood under that
class's model plus the class log-prior. Gradients reach only the coupling
network parameters; initial-state and transition probabilities, class
priors, and mixture weights are left untouched. One ADAM step is taken
per mini-batch.

The gradient of a sequence log-likelihood with respect to a state's
emission parameters is the state-posterior-weighted sum of per-sample
log-density gradients; this is the exact derivative of the log-space
forward recursion, not an approximation.
"""

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from ._numeric import logsumexp
from .errors import ContractError, TrainingError
from .flow import FlowEmission, emission_grad_arrays, emission_param_arrays, weighted_log_density_grad
from .hmm import ClassifierPair, _batch_emission_log_probs, backward_log, forward_log
from .optim import AdamConfig, AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class DiscriminativeConfig:
    epochs: int = 1
    batch_size: int = 8
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError("need at least one epoch")
        if self.batch_size < 1:
            raise ContractError("need a positive batch size")


def _scores_and_gammas(pair, batch):
    """Per-class scores and state posteriors for a stack of sequences.

    Returns (scores (B, 2), gammas list of (B, T, n) per class, ll (B, 2)).
    """
    batch = np.asarray(batch, dtype=float)
    B = batch.shape[0]
    scores = np.empty((B, pair.n_classes))
    gammas = []
    for j, model in enumerate(pair.models):
        logB = _batch_emission_log_probs(model, batch)
        la, ll = forward_log(model, logB)
        lb = backward_log(model, logB)
        lg = la + lb - ll[:, None, None]
        g = np.exp(lg)
        g /= g.sum(axis=2, keepdims=True)
        gammas.append(g)
        scores[:, j] = ll + pair.log_priors[j]
    return scores, gammas


def posterior_objective(pair, batch, labels):
    """Summed log-posterior of the true class over the batch; always <= 0."""
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 2:
        batch = batch[None, ...]
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != batch.shape[0]:
        raise ContractError("one label per sequence is required")
    if np.any((labels < 0) | (labels >= pair.n_classes)):
        raise ContractError("labels outside the classifier's class range")
    scores = np.empty((batch.shape[0], pair.n_classes))
    for j, model in enumerate(pair.models):
        logB = _batch_emission_log_probs(model, batch)
        _, ll = forward_log(model, logB)
        scores[:, j] = ll + pair.log_priors[j]
    total = logsumexp(scores, axis=1)
    return float((scores[np.arange(len(labels)), labels] - total).sum())


def _require_flow_models(pair):
    for model in pair.models:
        for e in model.emissions:
            if not isinstance(e, FlowEmission):
                raise ContractError(
                    "discriminative fine-tuning needs flow emissions in both models"
                )


def _batch_objective_and_grads(pair, batch, labels):
    """Objective plus flat gradient arrays matching _flat_params order."""
    scores, gammas = _scores_and_gammas(pair, batch)
    total = logsumexp(scores, axis=1)
    objective = float((scores[np.arange(len(labels)), labels] - total).sum())
    posterior = np.exp(scores - total[:, None])
    onehot = np.zeros_like(posterior)
    onehot[np.arange(len(labels)), labels] = 1.0
    w = onehot - posterior  # (B, n_classes)

    B, T, _ = np.asarray(batch, dtype=float).shape
    flat_X = np.asarray(batch, dtype=float).reshape(B * T, -1)
    grads_flat = []
    for j, model in enumerate(pair.models):
        g = gammas[j]
        for s, emission in enumerate(model.emissions):
            coeff = (w[:, j:j + 1] * g[:, :, s]).reshape(B * T)
            _, comp_grads = weighted_log_density_grad(emission, flat_X, coeff)
            grads_flat.extend(emission_grad_arrays(comp_grads))
    return objective, grads_flat


def _flat_params(pair):
    out = []
    for model in pair.models:
        for emission in model.emissions:
            out.extend(emission_param_arrays(emission))
    return out


def discriminative_finetune(pair, sequences, labels, config=None):
    """Mini-batch ascent on the class-posterior objective.

    Returns a new pair whose coupling networks are updated in place of the
    old values; chain parameters and priors are byte-identical to the
    input. Batches with non-finite gradients are skipped; if every batch
    is skipped the run fails.
    """
    config = config or DiscriminativeConfig()
    _require_flow_models(pair)
    batch_all = np.asarray(sequences, dtype=float)
    if batch_all.ndim != 3:
        raise ContractError(
            f"expected (B, T, d) training sequences, got shape {batch_all.shape}"
        )
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != batch_all.shape[0]:
        raise ContractError("one label per training sequence is required")

    tuned = copy.deepcopy(pair)
    params = _flat_params(tuned)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    n = batch_all.shape[0]
    applied = 0
    skipped = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            _, grads = _batch_objective_and_grads(
                tuned, batch_all[idx], labels[idx]
            )
            if not all(np.all(np.isfinite(g)) for g in grads):
                skipped += 1
                log.warning("skipping mini-batch with non-finite gradient")
                continue
            adam_step(state, params, grads, config.adam, maximize=True)
            applied += 1
    if applied == 0:
        raise TrainingError(
            f"all {skipped} mini-batches produced non-finite gradients"
        )
    return tuned
