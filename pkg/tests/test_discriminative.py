import copy

import numpy as np
import pytest

import reference
import vitalhmm.discriminative as disc_mod
from vitalhmm.discriminative import (
    DiscriminativeConfig,
    discriminative_finetune,
    posterior_objective,
)
from vitalhmm.errors import ContractError, TrainingError
from vitalhmm.flow import emission_param_arrays, init_flow_hmm
from vitalhmm.gmm import GmmEmission
from vitalhmm.hmm import ClassifierPair, HmmModel
from vitalhmm.optim import AdamConfig


def flow_pair(seed=0, dim=2, n_states=2, M=1, C=2):
    m0 = init_flow_hmm(dim, n_states, M, C, seed)
    m1 = init_flow_hmm(dim, n_states, M, C, seed + 1)
    return ClassifierPair([m0, m1], np.log([0.5, 0.5]))


def pair_params(pair):
    out = []
    for model in pair.models:
        for e in model.emissions:
            out.extend(emission_param_arrays(e))
    return out


def separable_batch(seed=0, B=12, T=20, dim=2):
    rng = np.random.default_rng(seed)
    labels = np.arange(B) % 2
    X = np.empty((B, T, dim))
    for i, y in enumerate(labels):
        mean = -1.5 if y == 0 else 1.5
        X[i] = rng.normal(mean, 0.6, size=(T, dim))
    return X, labels


def test_identical_models_objective_is_uniform_log():
    pair = flow_pair(seed=2)
    pair.models[1] = copy.deepcopy(pair.models[0])
    X, labels = separable_batch(seed=3, B=6)
    obj = posterior_objective(pair, X, labels)
    assert abs(obj - 6 * np.log(0.5)) <= 1e-12


def test_objective_nonpositive_and_label_sensitive():
    pair = flow_pair(seed=4)
    X, labels = separable_batch(seed=5, B=8)
    obj = posterior_objective(pair, X, labels)
    assert obj <= 0.0
    flipped = posterior_objective(pair, X, 1 - labels)
    assert not np.isclose(obj, flipped, atol=1e-9)


def test_objective_input_validation():
    pair = flow_pair(seed=6)
    X, labels = separable_batch(seed=7, B=4)
    with pytest.raises(ContractError):
        posterior_objective(pair, X, labels[:-1])
    with pytest.raises(ContractError):
        posterior_objective(pair, X, labels + 2)


def test_batch_gradients_match_central_differences():
    pair = flow_pair(seed=8)
    rng = np.random.default_rng(9)
    for p in pair_params(pair):
        p += rng.normal(0.0, 0.2, size=p.shape)
    X, labels = separable_batch(seed=10, B=4, T=6)
    obj, grads = disc_mod._batch_objective_and_grads(pair, X, labels)
    assert np.isclose(obj, posterior_objective(pair, X, labels), atol=1e-12)
    params = pair_params(pair)

    def f():
        return posterior_objective(pair, X, labels)

    fd = reference.central_difference(f, params, h=1e-5)
    for g, g_fd in zip(grads, fd):
        scale = max(np.abs(g_fd).max(), 1e-6)
        assert np.abs(g - g_fd).max() / scale <= 1e-4


def test_finetune_improves_same_batch_objective():
    pair = flow_pair(seed=11)
    X, labels = separable_batch(seed=12, B=16, T=15)
    before = posterior_objective(pair, X, labels)
    tuned = discriminative_finetune(
        pair, X, labels,
        DiscriminativeConfig(epochs=3, batch_size=16,
                             adam=AdamConfig(step_size=5e-3), seed=13),
    )
    after = posterior_objective(tuned, X, labels)
    assert after > before


def test_finetune_touches_only_network_parameters():
    pair = flow_pair(seed=14)
    X, labels = separable_batch(seed=15, B=8, T=10)
    tuned = discriminative_finetune(
        pair, X, labels,
        DiscriminativeConfig(epochs=1, batch_size=4,
                             adam=AdamConfig(step_size=1e-3), seed=16),
    )
    for orig, new in zip(pair.models, tuned.models):
        assert np.array_equal(orig.log_q, new.log_q)
        assert np.array_equal(orig.log_A, new.log_A)
        for eo, en in zip(orig.emissions, new.emissions):
            assert np.array_equal(eo.log_mix_weights, en.log_mix_weights)
    assert np.array_equal(pair.log_priors, tuned.log_priors)
    changed = any(
        not np.array_equal(a, b)
        for a, b in zip(pair_params(pair), pair_params(tuned))
    )
    assert changed


def test_finetune_leaves_input_pair_untouched():
    pair = flow_pair(seed=17)
    snapshot = [p.copy() for p in pair_params(pair)]
    X, labels = separable_batch(seed=18, B=6, T=8)
    discriminative_finetune(
        pair, X, labels, DiscriminativeConfig(epochs=1, batch_size=3, seed=19)
    )
    for before, after in zip(snapshot, pair_params(pair)):
        assert np.array_equal(before, after)


def test_all_skipped_batches_raise(monkeypatch):
    def poisoned(pair, batch, labels):
        grads = [np.full((2, 2), np.nan)]
        return 0.0, grads

    monkeypatch.setattr(disc_mod, "_batch_objective_and_grads", poisoned)
    pair = flow_pair(seed=20)
    X, labels = separable_batch(seed=21, B=6, T=5)
    with pytest.raises(TrainingError):
        discriminative_finetune(
            pair, X, labels, DiscriminativeConfig(epochs=1, batch_size=2, seed=22)
        )


def test_partial_skip_still_trains(monkeypatch):
    real = disc_mod._batch_objective_and_grads
    calls = {"n": 0}

    def flaky(pair, batch, labels):
        calls["n"] += 1
        obj, grads = real(pair, batch, labels)
        if calls["n"] == 1:
            grads[0] = np.full_like(grads[0], np.nan)
        return obj, grads

    monkeypatch.setattr(disc_mod, "_batch_objective_and_grads", flaky)
    pair = flow_pair(seed=23)
    X, labels = separable_batch(seed=24, B=8, T=5)
    tuned = discriminative_finetune(
        pair, X, labels, DiscriminativeConfig(epochs=1, batch_size=4, seed=25)
    )
    assert calls["n"] == 2
    changed = any(
        not np.array_equal(a, b)
        for a, b in zip(pair_params(pair), pair_params(tuned))
    )
    assert changed


def test_gmm_emissions_rejected():
    e = GmmEmission(np.zeros(1), np.zeros((1, 2)), np.ones((1, 2)))
    m = HmmModel(np.zeros(1), np.zeros((1, 1)), [e])
    pair = ClassifierPair([m, copy.deepcopy(m)], np.log([0.5, 0.5]))
    X = np.zeros((2, 4, 2))
    with pytest.raises(ContractError):
        discriminative_finetune(pair, X, np.array([0, 1]))


def test_config_validation():
    with pytest.raises(ContractError):
        DiscriminativeConfig(epochs=0)
    with pytest.raises(ContractError):
        DiscriminativeConfig(batch_size=0)


def test_bad_shapes_rejected():
    pair = flow_pair(seed=26)
    with pytest.raises(ContractError):
        discriminative_finetune(pair, np.zeros((4, 5)), np.zeros(4, dtype=int))
    with pytest.raises(ContractError):
        discriminative_finetune(pair, np.zeros((4, 5, 2)), np.zeros(3, dtype=int))
