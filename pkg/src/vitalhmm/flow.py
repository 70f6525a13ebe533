"""Invertible coupling-layer emission model with exact log-likelihood.

Each state density is a mixture of small normalizing flows: a stack of
affine coupling layers mapping a standard-normal latent to data space.
Evaluating the density runs the analytic inverse and applies the change of
variables, so likelihoods are exact. Parameter gradients come from a
hand-derived reverse pass through the inverse computation; ``flow_mstep``
ascends the posterior-weighted log-density with ADAM while mixture weights
are updated in closed form.
"""

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from ._numeric import logsumexp, normalize_probs
from .errors import ContractError, NumericalError
from .optim import AdamConfig, AdamState, adam_step

log = logging.getLogger(__name__)

HIDDEN_WIDTH = 3
SCALE_CAP = 5.0
WEIGHT_FLOOR = 1e-10
LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class MlpParams:
    """One-hidden-layer tanh network: in -> HIDDEN_WIDTH -> out."""

    w1: np.ndarray  # (HIDDEN_WIDTH, n_in)
    b1: np.ndarray  # (HIDDEN_WIDTH,)
    w2: np.ndarray  # (n_out, HIDDEN_WIDTH)
    b2: np.ndarray  # (n_out,)

    def arrays(self):
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class MlpGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self):
        return [self.w1, self.b1, self.w2, self.b2]


@dataclass
class CouplingLayer:
    """Affine coupling step.

    Coordinates where ``mask`` is True pass through unchanged and feed the
    two conditioner networks; the complementary coordinates are scaled and
    shifted. The log-scale output is squashed to (-SCALE_CAP, SCALE_CAP) so
    the Jacobian determinant stays bounded for any parameter values.
    """

    mask: np.ndarray  # (dim,) bool
    shift: MlpParams
    scale: MlpParams


@dataclass
class FlowComponent:
    layers: list

    @property
    def dim(self):
        return self.layers[0].mask.shape[0]


@dataclass
class FlowMstepConfig:
    adam: AdamConfig = field(default_factory=AdamConfig)
    steps: int = 10


@dataclass
class FlowMstepReport:
    objective_before: float
    objective_after: float


@dataclass
class FlowEmission:
    """Mixture of flow components serving as one HMM state density."""

    log_mix_weights: np.ndarray
    components: list
    mstep_config: FlowMstepConfig | None = None

    @property
    def n_components(self):
        return len(self.components)

    @property
    def dim(self):
        return self.components[0].dim

    def log_density(self, X):
        X = _as_matrix(X, self.dim)
        per_comp, _ = _per_component_log_density(self, X, want_cache=False)
        return logsumexp(per_comp + self.log_mix_weights[None, :], axis=1)

    def m_step(self, X, gammas):
        cfg = self.mstep_config or FlowMstepConfig()
        new, report = flow_mstep(self, X, gammas, cfg.adam, cfg.steps)
        log.debug(
            "flow m-step objective %.6f -> %.6f",
            report.objective_before,
            report.objective_after,
        )
        return new


def _clamp_scale(raw):
    return SCALE_CAP * np.tanh(raw / SCALE_CAP)


def _mlp_forward(p, U):
    a1 = U @ p.w1.T + p.b1
    h1 = np.tanh(a1)
    out = h1 @ p.w2.T + p.b2
    return out, (U, h1)


def _mlp_backward(p, cache, d_out):
    U, h1 = cache
    g_w2 = d_out.T @ h1
    g_b2 = d_out.sum(axis=0)
    dh1 = d_out @ p.w2
    da1 = dh1 * (1.0 - h1**2)
    g_w1 = da1.T @ U
    g_b1 = da1.sum(axis=0)
    dU = da1 @ p.w1
    return dU, MlpGrads(g_w1, g_b1, g_w2, g_b2)


def flow_forward(component, Z):
    """Map latent points to data space: returns (X, log_det).

    ``log_det`` is log|det dX/dZ| per row, the sum of the clamped scale
    outputs across layers.
    """
    Z, squeeze = _as_matrix_flex(Z, component.dim)
    X = np.array(Z, dtype=float)
    log_det = np.zeros(X.shape[0])
    for layer in component.layers:
        m = layer.mask
        U = X[:, m]
        s_raw, _ = _mlp_forward(layer.scale, U)
        s = _clamp_scale(s_raw)
        t, _ = _mlp_forward(layer.shift, U)
        out = np.array(X)
        out[:, ~m] = X[:, ~m] * np.exp(s) + t
        X = out
        log_det += s.sum(axis=1)
    _check_finite(X, "flow forward pass")
    if squeeze:
        return X[0], float(log_det[0])
    return X, log_det


def flow_inverse(component, X, want_cache=False):
    """Exact inverse of :func:`flow_forward`: returns (Z, log_det_inverse).

    ``log_det_inverse`` equals minus the forward log-determinant evaluated at
    the recovered latent point. With ``want_cache`` the per-layer
    intermediates needed for the parameter backward pass are returned too.
    """
    X, squeeze = _as_matrix_flex(X, component.dim)
    H = np.array(X, dtype=float)
    log_det_inv = np.zeros(H.shape[0])
    caches = [] if want_cache else None
    for layer in reversed(component.layers):
        m = layer.mask
        U = H[:, m]
        s_raw, scale_cache = _mlp_forward(layer.scale, U)
        s = _clamp_scale(s_raw)
        t, shift_cache = _mlp_forward(layer.shift, U)
        exp_neg_s = np.exp(-s)
        V0 = (H[:, ~m] - t) * exp_neg_s
        out = np.array(H)
        out[:, ~m] = V0
        H = out
        log_det_inv -= s.sum(axis=1)
        if want_cache:
            caches.append((layer, s, exp_neg_s, V0, scale_cache, shift_cache))
    _check_finite(H, "flow inverse pass")
    if want_cache:
        return H, log_det_inv, caches
    if squeeze:
        return H[0], float(log_det_inv[0])
    return H, log_det_inv


def _component_log_density(component, X, want_cache=False):
    if want_cache:
        Z, log_det_inv, caches = flow_inverse(component, X, want_cache=True)
    else:
        Z, log_det_inv = flow_inverse(component, X)
        caches = None
    base = -0.5 * component.dim * LOG_2PI - 0.5 * (Z**2).sum(axis=1)
    return base + log_det_inv, Z, caches


def _per_component_log_density(emission, X, want_cache=False):
    per_comp = np.empty((X.shape[0], emission.n_components))
    cache_per_comp = []
    for j, comp in enumerate(emission.components):
        lp, Z, caches = _component_log_density(comp, X, want_cache=want_cache)
        per_comp[:, j] = lp
        cache_per_comp.append((Z, caches))
    return per_comp, cache_per_comp


def flow_log_density(emission, x):
    """Mixture log-density at a single point or batch of points."""
    X, squeeze = _as_matrix_flex(x, emission.dim)
    out = emission.log_density(X)
    return float(out[0]) if squeeze else out


def _component_weighted_grad(component, coeff, Z, caches):
    """Gradients of sum_t coeff_t * log p_comp(x_t) for all layer parameters.

    Walks the cached inverse pass in reverse. The seed is the base-density
    term d(-0.5 ||z||^2)/dz; each layer adds the direct log-determinant
    contribution before backpropagating through its conditioner networks.
    """
    grads = [None] * len(component.layers)
    gH = -coeff[:, None] * Z
    # caches[0] belongs to the last-applied inverse layer (layers[-1] ... [0]),
    # so the reverse walk runs layers in forward order.
    for pos, (layer, s, exp_neg_s, V0, scale_cache, shift_cache) in enumerate(
        reversed(caches)
    ):
        m = layer.mask
        gV0 = gH[:, ~m]
        gU_pass = gH[:, m]
        ds = -gV0 * V0 - coeff[:, None]          # dV0/ds = -V0; log-det term
        ds_raw = ds * (1.0 - (s / SCALE_CAP) ** 2)
        dt = -gV0 * exp_neg_s
        dV = gV0 * exp_neg_s
        dU_scale, g_scale = _mlp_backward(layer.scale, scale_cache, ds_raw)
        dU_shift, g_shift = _mlp_backward(layer.shift, shift_cache, dt)
        gH = np.empty_like(gH)
        gH[:, m] = gU_pass + dU_scale + dU_shift
        gH[:, ~m] = dV
        grads[pos] = (g_shift, g_scale)
    return grads


def emission_param_arrays(emission):
    """Flat list of the emission's trainable net parameter arrays.

    Order is fixed (component, layer, shift then scale, w1/b1/w2/b2) so it
    can be zipped against :func:`emission_grad_arrays`.
    """
    out = []
    for comp in emission.components:
        for layer in comp.layers:
            out.extend(layer.shift.arrays())
            out.extend(layer.scale.arrays())
    return out


def emission_grad_arrays(grads_per_component):
    out = []
    for comp_grads in grads_per_component:
        for g_shift, g_scale in comp_grads:
            out.extend(g_shift.arrays())
            out.extend(g_scale.arrays())
    return out


def weighted_log_density_grad(emission, X, coeff):
    """Gradient of sum_t coeff_t * log p_mix(x_t) w.r.t. every net parameter.

    Returns (objective_value, grads) where grads is a per-component list of
    per-layer (shift, scale) MlpGrads. Mixture weights pick up no gradient
    here; they are updated in closed form by the M-step and held fixed in
    discriminative training.
    """
    X = _as_matrix(X, emission.dim)
    coeff = np.asarray(coeff, dtype=float)
    per_comp, cache_per_comp = _per_component_log_density(emission, X, want_cache=True)
    scored = per_comp + emission.log_mix_weights[None, :]
    total = logsumexp(scored, axis=1)
    resp = np.exp(scored - total[:, None])
    objective = float(coeff @ total)
    grads = []
    for j, comp in enumerate(emission.components):
        Z, caches = cache_per_comp[j]
        grads.append(_component_weighted_grad(comp, coeff * resp[:, j], Z, caches))
    return objective, grads


def flow_mstep(emission, X, gammas, adam_cfg, steps):
    """Gradient M-step: ascend the gamma-weighted log-density with ADAM.

    Net parameters take ``steps`` ADAM steps; mixture weights are then
    refreshed from per-component responsibilities. No monotonicity is
    guaranteed (generalized EM); the report carries the objective before and
    after so callers can track it. A non-finite gradient aborts the
    remaining steps.
    """
    if steps < 1:
        raise ContractError("flow M-step needs at least one gradient step")
    X = _as_matrix(X, emission.dim)
    gammas = np.asarray(gammas, dtype=float)
    if np.any(gammas < 0):
        raise ContractError("negative state posterior weight")

    new = copy.deepcopy(emission)
    params = emission_param_arrays(new)
    state = AdamState.for_params(params)
    objective_before = None
    for step in range(steps):
        value, grads = weighted_log_density_grad(new, X, gammas)
        if objective_before is None:
            objective_before = value
        flat = emission_grad_arrays(grads)
        if not all(np.all(np.isfinite(g)) for g in flat):
            log.warning("non-finite flow gradient at step %d; aborting M-step", step)
            break
        adam_step(state, params, flat, adam_cfg, maximize=True)

    per_comp, _ = _per_component_log_density(new, X, want_cache=False)
    scored = per_comp + new.log_mix_weights[None, :]
    resp = np.exp(scored - logsumexp(scored, axis=1)[:, None])
    mass = gammas @ resp
    if mass.sum() > 0:
        new.log_mix_weights = np.log(normalize_probs(mass / mass.sum(), WEIGHT_FLOOR))
    objective_after = float(gammas @ logsumexp(scored, axis=1))
    if objective_before is None:
        objective_before = objective_after
    return new, FlowMstepReport(objective_before, objective_after)


def flow_init(dim, n_components, n_layers, seed, mstep_config=None):
    """Near-identity flow emission: tiny uniform weights, zero biases.

    Masks alternate starting with the first ceil(dim/2) coordinates in the
    identity role. Requires dim >= 2 (a coupling layer needs a split).
    """
    if dim < 2:
        raise ContractError("coupling layers need input dimension >= 2")
    if n_components < 1 or n_layers < 1:
        raise ContractError("need at least one component and one layer")
    rng = np.random.default_rng(seed)
    base_mask = np.zeros(dim, dtype=bool)
    base_mask[: (dim + 1) // 2] = True

    def small(shape):
        return rng.uniform(-0.01, 0.01, size=shape)

    components = []
    for _ in range(n_components):
        layers = []
        for li in range(n_layers):
            mask = base_mask if li % 2 == 0 else ~base_mask
            n_in = int(mask.sum())
            n_out = dim - n_in
            shift = MlpParams(
                small((HIDDEN_WIDTH, n_in)), np.zeros(HIDDEN_WIDTH),
                small((n_out, HIDDEN_WIDTH)), np.zeros(n_out),
            )
            scale = MlpParams(
                small((HIDDEN_WIDTH, n_in)), np.zeros(HIDDEN_WIDTH),
                small((n_out, HIDDEN_WIDTH)), np.zeros(n_out),
            )
            layers.append(CouplingLayer(mask.copy(), shift, scale))
        components.append(FlowComponent(layers))
    log_w = np.full(n_components, -np.log(n_components))
    return FlowEmission(log_w, components, mstep_config)


def init_flow_hmm(dim, n_states, n_flow_components, n_layers, seed, mstep_config=None):
    """Flow-emission HMM with per-state child seeds and a perturbed chain."""
    from .hmm import HmmModel, init_chain

    children = np.random.SeedSequence(seed).spawn(n_states)
    emissions = [
        flow_init(dim, n_flow_components, n_layers, children[s], mstep_config)
        for s in range(n_states)
    ]
    log_q, log_A = init_chain(n_states, seed)
    return HmmModel(log_q, log_A, emissions)


def train_flow_hmm(
    sequences, n_states, n_flow_components, n_layers, seed,
    bw_config=None, mstep_config=None,
):
    from .hmm import baum_welch

    batch = np.asarray(sequences, dtype=float)
    if batch.ndim == 2:
        batch = batch[None, ...]
    model = init_flow_hmm(
        batch.shape[2], n_states, n_flow_components, n_layers, seed, mstep_config
    )
    return baum_welch(model, batch, bw_config)


def _check_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))
        raise NumericalError(f"non-finite value in {where} at index {tuple(bad[0])}")


def _as_matrix(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ContractError(f"expected samples of dimension {dim}, got shape {X.shape}")
    return X


def _as_matrix_flex(X, dim):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        if X.shape[0] != dim:
            raise ContractError(f"expected vector of dimension {dim}, got {X.shape}")
        return X[None, :], True
    return _as_matrix(X, dim), False
