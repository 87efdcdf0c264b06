"""Initialization and Baum-Welch reestimation for both model orders.

Reestimation uses the classical posterior ratios assembled from the scaled
lattices (per-slice normalization makes every posterior exact, so the total
training log-likelihood is non-decreasing across iterations up to floor
projections). Topology zeros are preserved exactly: a forbidden transition
contributes an exact zero to every accumulator and stays zero forever.

Conventions applied here:

* left-to-right models keep their initial distribution fixed at e_0;
  circular models reestimate it from the first-frame posterior;
* the order-2 tensor update normalizes the triple posterior
  eta_t(i,j,k) over successor states k for every allowed (i,j);
* the order-2 pairwise matrix ``trans1`` is reestimated from the pair
  posterior of the first transition only (that is the only place it acts);
* rows that receive no posterior mass keep their previous values (those
  parameters never touched the likelihood);
* the variance floor is relative, floor_d = variance_floor * global
  per-dimension variance of the training frames (1e-12 absolute backstop);
* segmental k-means provides Gaussian-mixture starting points only, all
  reestimation is Baum-Welch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .errors import ImpossibleObservationError, UtteranceTooShortError
from .inference import (
    _backward1_core,
    _backward2_core,
    _forward1_core,
    _forward2_core,
    _frames_of,
    _shifted_emissions,
    log_emission_matrix,
)
from .models import (
    DiscreteEmission,
    GmmEmission,
    Hmm1Model,
    Hmm2Model,
    circular_topology,
    ltr_topology,
    symmetrize_ring_transitions,
)

__all__ = [
    "TrainConfig",
    "TrainReport",
    "VariantSpec",
    "init_ltr",
    "init_circular1",
    "init_circular2",
    "segmental_kmeans_init",
    "baum_welch1",
    "baum_welch2",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for Baum-Welch.

    ``variance_floor`` is relative to the global per-dimension variance of
    the training frames; the other floors are absolute probabilities.
    ``seed`` drives k-means initialization only (reestimation itself is
    deterministic).
    """

    max_iterations: int = 100
    rel_tol: float = 1e-6
    variance_floor: float = 1e-4
    mixture_weight_floor: float = 1e-6
    transition_floor: float = 1e-8
    seed: int = 0
    symmetrize: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        for name in ("variance_floor", "mixture_weight_floor", "transition_floor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class TrainReport:
    """Result of a training run.

    ``log_likelihoods[k]`` is the total log-likelihood of the model
    entering iteration k (before that iteration's update). When the run
    stops on convergence the returned model is the one that achieved
    ``log_likelihoods[-1]``; when it stops on max_iterations the model
    carries one further update whose likelihood was not evaluated.
    """

    model: object
    log_likelihoods: list
    converged: bool
    n_utterances: int

    @property
    def iterations_run(self) -> int:
        return len(self.log_likelihoods)

    @property
    def final_log_likelihood(self) -> float:
        return self.log_likelihoods[-1]

    def training_metadata(self, **extra) -> dict:
        meta = {
            "iterations": self.iterations_run,
            "final_log_likelihood": self.final_log_likelihood,
            "converged": self.converged,
            "n_utterances": self.n_utterances,
        }
        meta.update(extra)
        return meta


@dataclass(frozen=True)
class VariantSpec:
    """Which model family to train.

    ``n_mixtures`` is the Gaussian component count, or the symbol-alphabet
    size when ``emission == "discrete"``.
    """

    order: int = 1
    topology: str = "ltr"          # "ltr" | "circular"
    n_states: int = 5
    n_mixtures: int = 5
    skip_width: int = 2
    emission: str = "gmm"          # "gmm" | "discrete"

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.topology not in ("ltr", "circular"):
            raise ValueError("topology must be 'ltr' or 'circular'")
        if self.emission not in ("gmm", "discrete"):
            raise ValueError("emission must be 'gmm' or 'discrete'")
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if self.topology == "circular" and self.n_states < 3:
            raise ValueError("circular topology needs n_states >= 3")
        if self.n_mixtures < 1:
            raise ValueError("n_mixtures must be >= 1")
        if self.skip_width < 1:
            raise ValueError("skip_width must be >= 1")

    @property
    def label(self) -> str:
        return ("ltr" if self.topology == "ltr" else "circ") + str(self.order)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _emissions_from_spec(spec, n_states):
    """Accept a prepared emission list or a ("gmm", M, D) / ("discrete", M)
    placeholder spec and return a length-n_states tuple."""
    if len(spec) and isinstance(spec[0], (GmmEmission, DiscreteEmission)):
        return tuple(spec)
    kind = spec[0]
    if kind == "gmm":
        _, m, d = spec
        e = GmmEmission(np.full(m, 1.0 / m), np.zeros((m, d)), np.ones((m, d)))
    elif kind == "discrete":
        _, m = spec
        e = DiscreteEmission(np.full(m, 1.0 / m))
    else:
        raise ValueError(f"unknown emission spec kind {kind!r}")
    return tuple(e for _ in range(n_states))


def init_circular1(n_states: int, emission_spec) -> Hmm1Model:
    """Uniform ring start: initial 1/N, 1/3 on each of the three ring
    neighbours, placeholder emissions (uniform 1/M for discrete)."""
    mask = circular_topology(n_states)
    trans = np.where(mask.allowed1, 1.0 / 3.0, 0.0)
    initial = np.full(n_states, 1.0 / n_states)
    return Hmm1Model(mask, initial, trans, _emissions_from_spec(emission_spec, n_states))


def init_circular2(n_states: int, emission_spec) -> Hmm2Model:
    """Uniform ring start for the second-order chain: 1/3 on every allowed
    triple (and on every allowed pair for the first transition)."""
    mask = circular_topology(n_states)
    trans1 = np.where(mask.allowed1, 1.0 / 3.0, 0.0)
    trans2 = np.where(mask.allowed2, 1.0 / 3.0, 0.0)
    initial = np.full(n_states, 1.0 / n_states)
    return Hmm2Model(
        mask, initial, trans1, trans2, _emissions_from_spec(emission_spec, n_states)
    )


def init_ltr(n_states: int, skip_width: int, emission_spec, order: int = 1):
    """Left-to-right start: initial e_0, rows uniform over allowed
    successors (for order 2, uniform over allowed triples)."""
    mask = ltr_topology(n_states, skip_width)
    counts = mask.allowed1.sum(axis=1).astype(np.float64)
    trans = mask.allowed1 / counts[:, None]
    initial = np.zeros(n_states)
    initial[0] = 1.0
    ems = _emissions_from_spec(emission_spec, n_states)
    if order == 1:
        return Hmm1Model(mask, initial, trans, ems)
    if order == 2:
        trans2 = mask.allowed2 / counts[None, :, None]
        return Hmm2Model(mask, initial, trans, trans2, ems)
    raise ValueError("order must be 1 or 2")


def segmental_kmeans_init(
    obs_set,
    n_states: int,
    n_mixtures: int,
    seed: int = 0,
    variance_floor: float = 1e-4,
    weight_floor: float = 1e-6,
):
    """Gaussian-mixture starting points from equal contiguous segments.

    Every utterance is cut into n_states contiguous segments of (near)
    equal length, remainder frames going to the later segments; segment i
    pools across utterances and is clustered into n_mixtures centers
    (seeded k-means++ assignment). Mixture weights are proportional to
    cluster sizes, variances are per-dimension cluster variances; both are
    floored. Returns a list of GmmEmission, one per state.
    """
    frames_list = [np.asarray(_frames_of(o), dtype=np.float64) for o in obs_set]
    if not frames_list:
        raise ValueError("obs_set is empty")
    for u, x in enumerate(frames_list):
        if x.ndim != 2:
            raise ValueError(f"utterance {u} is not a (T, D) matrix")
        if x.shape[0] < n_states:
            raise UtteranceTooShortError(x.shape[0], n_states, utterance=u)
    n_dims = frames_list[0].shape[1]
    pooled = np.concatenate(frames_list, axis=0)
    gvar = pooled.var(axis=0)
    floor_d = np.maximum(variance_floor * gvar, 1e-12)
    fallback_var = np.maximum(gvar, floor_d)

    segments = [[] for _ in range(n_states)]
    for x in frames_list:
        t = x.shape[0]
        base, extra = divmod(t, n_states)
        lengths = [base] * (n_states - extra) + [base + 1] * extra
        pos = 0
        for i, ln in enumerate(lengths):
            segments[i].append(x[pos:pos + ln])
            pos += ln

    rng = np.random.default_rng(seed)
    emissions = []
    for i in range(n_states):
        data = np.concatenate(segments[i], axis=0)
        m = n_mixtures
        if data.shape[0] < m:
            centers = np.tile(data.mean(axis=0), (m, 1))
            centers[: data.shape[0]] = data
            counts = np.zeros(m)
            counts[: data.shape[0]] = 1.0
            labels = np.arange(data.shape[0])
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                centers, labels = kmeans2(data, m, iter=20, minit="++", seed=rng)
            counts = np.bincount(labels, minlength=m).astype(np.float64)
        weights = counts / counts.sum()
        weights = np.maximum(weights, weight_floor)
        weights = weights / weights.sum()
        variances = np.empty((m, n_dims))
        for c in range(m):
            members = data[labels == c] if data.shape[0] >= 1 else data
            if members.shape[0] >= 1:
                variances[c] = members.var(axis=0)
            else:
                variances[c] = fallback_var
        variances = np.maximum(variances, floor_d[None, :])
        emissions.append(GmmEmission(weights, centers, variances))
    return emissions


# ---------------------------------------------------------------------------
# shared reestimation pieces
# ---------------------------------------------------------------------------

def _row_normalize_floored(values, allowed, floor):
    v = np.where(allowed, np.maximum(values, floor), 0.0)
    s = v.sum(axis=-1, keepdims=True)
    return np.divide(v, s, out=np.zeros_like(v), where=s > 0)


def _utt_name(obs, index):
    meta = getattr(obs, "meta", None)
    source = getattr(meta, "source", "") if meta is not None else ""
    return source or index


class _EmissionStats:
    """Sufficient statistics for the emission update, shared by both orders."""

    def __init__(self, model):
        self.discrete = isinstance(model.emissions[0], DiscreteEmission)
        n = model.n_states
        if self.discrete:
            m = model.emissions[0].n_symbols
            self.counts = np.zeros((n, m))
        else:
            m = model.emissions[0].n_components
            d = model.emissions[0].n_dims
            self.r = np.zeros((n, m))
            self.s1 = np.zeros((n, m, d))
            self.s2 = np.zeros((n, m, d))

    def accumulate(self, model, x, gamma):
        if self.discrete:
            m = self.counts.shape[1]
            for i in range(model.n_states):
                self.counts[i] += np.bincount(x, weights=gamma[:, i], minlength=m)
            return
        for i, e in enumerate(model.emissions):
            comp = e.component_log_density(x)           # (T, M)
            tot = logsumexp(comp, axis=1)
            ratio = np.zeros_like(comp)
            alive = np.isfinite(tot)
            ratio[alive] = np.exp(comp[alive] - tot[alive, None])
            resp = gamma[:, i][:, None] * ratio         # (T, M)
            self.r[i] += resp.sum(axis=0)
            self.s1[i] += resp.T @ x
            self.s2[i] += resp.T @ (x * x)

    def updated_emissions(self, model, config, floor_d):
        if self.discrete:
            out = []
            for i, e in enumerate(model.emissions):
                total = self.counts[i].sum()
                if total <= 0.0:
                    out.append(e)
                    continue
                p = self.counts[i] / total
                p = np.maximum(p, config.mixture_weight_floor)
                out.append(DiscreteEmission(p / p.sum()))
            return tuple(out)
        out = []
        for i, e in enumerate(model.emissions):
            r = self.r[i]
            total = r.sum()
            if total <= 0.0:
                out.append(e)
                continue
            weights = np.maximum(r / total, config.mixture_weight_floor)
            weights = weights / weights.sum()
            means = e.means.copy()
            variances = e.variances.copy()
            active = r > 1e-300
            means[active] = self.s1[i][active] / r[active, None]
            variances[active] = (
                self.s2[i][active] / r[active, None] - means[active] ** 2
            )
            variances = np.maximum(variances, floor_d[None, :])
            out.append(GmmEmission(weights, means, variances))
        return tuple(out)


def _variance_floor_vector(model, obs_list, config):
    if isinstance(model.emissions[0], DiscreteEmission):
        return None
    pooled = np.concatenate([np.asarray(x, dtype=np.float64) for x in obs_list])
    return np.maximum(config.variance_floor * pooled.var(axis=0), 1e-12)


def _prepare_obs(model, obs_set):
    discrete = isinstance(model.emissions[0], DiscreteEmission)
    out = []
    for u, o in enumerate(obs_set):
        x = np.asarray(_frames_of(o))
        if discrete:
            x = x.astype(np.int64)
        else:
            x = x.astype(np.float64)
        out.append((x, _utt_name(o, u)))
    if not out:
        raise ValueError("obs_set is empty")
    return out


# ---------------------------------------------------------------------------
# first-order Baum-Welch
# ---------------------------------------------------------------------------

def _estep1(model, obs_list):
    n = model.n_states
    total_ll = 0.0
    xi_sum = np.zeros((n, n))
    first_sum = np.zeros(n)
    emstats = _EmissionStats(model)
    for x, name in obs_list:
        logb = log_emission_matrix(model, x)
        try:
            lat = _forward1_core(model, logb)
            beta = _backward1_core(model, logb, lat)
        except ImpossibleObservationError as err:
            raise ImpossibleObservationError(err.frame, utterance=name) from None
        total_ll += lat.log_likelihood
        gamma = lat.alpha * beta
        gamma /= gamma.sum(axis=1, keepdims=True)
        first_sum += gamma[0]
        t_count = logb.shape[0]
        if t_count > 1:
            bsh, _ = _shifted_emissions(logb)
            w = bsh[1:] * beta[1:]
            tri = lat.alpha[:-1][:, :, None] * model.trans[None, :, :] * w[:, None, :]
            tri /= tri.sum(axis=(1, 2), keepdims=True)
            xi_sum += tri.sum(axis=0)
        emstats.accumulate(model, x, gamma)
    return total_ll, xi_sum, first_sum, emstats


def _mstep1(model, xi_sum, first_sum, emstats, config, floor_d, n_utt):
    trans = model.trans.copy()
    has_data = xi_sum.sum(axis=1) > 0.0
    trans[has_data] = xi_sum[has_data]
    trans = _row_normalize_floored(trans, model.mask.allowed1, config.transition_floor)
    if model.mask.kind == "circular":
        initial = first_sum / n_utt
        initial = initial / initial.sum()
    else:
        initial = model.initial
    emissions = emstats.updated_emissions(model, config, floor_d)
    return replace(model, initial=initial, trans=trans, emissions=emissions)


def baum_welch1(model: Hmm1Model, obs_set, config: TrainConfig = TrainConfig()) -> TrainReport:
    """Reestimate a first-order model on a set of utterances.

    Stops when the relative log-likelihood improvement drops below
    ``config.rel_tol`` or after ``config.max_iterations`` updates.
    """
    obs_list = _prepare_obs(model, obs_set)
    floor_d = _variance_floor_vector(model, [x for x, _ in obs_list], config)
    lls = []
    converged = False
    for _ in range(config.max_iterations):
        total_ll, xi_sum, first_sum, emstats = _estep1(model, obs_list)
        lls.append(total_ll)
        if len(lls) > 1:
            rel = abs(lls[-1] - lls[-2]) / max(abs(lls[-1]), 1e-12)
            if rel < config.rel_tol:
                converged = True
                break
        model = _mstep1(model, xi_sum, first_sum, emstats, config, floor_d, len(obs_list))
    return TrainReport(model, lls, converged, len(obs_list))


# ---------------------------------------------------------------------------
# second-order Baum-Welch
# ---------------------------------------------------------------------------

def _estep2(model, obs_list):
    n = model.n_states
    total_ll = 0.0
    eta_sum = np.zeros((n, n, n))
    pair1_sum = np.zeros((n, n))
    first_sum = np.zeros(n)
    emstats = _EmissionStats(model)
    for x, name in obs_list:
        logb = log_emission_matrix(model, x)
        t_count = logb.shape[0]
        try:
            lat = _forward2_core(model, logb)
            beta = _backward2_core(model, logb, lat)
        except ImpossibleObservationError as err:
            raise ImpossibleObservationError(err.frame, utterance=name) from None
        total_ll += lat.log_likelihood
        pair = lat.alpha[1:] * beta[1:]                 # (T-1, N, N)
        pair /= pair.sum(axis=(1, 2), keepdims=True)
        gamma = np.empty((t_count, n))
        gamma[0] = pair[0].sum(axis=1)
        gamma[1:] = pair.sum(axis=1)
        first_sum += gamma[0]
        pair1_sum += pair[0]
        if t_count > 2:
            bsh, _ = _shifted_emissions(logb)
            tri = (
                lat.alpha[1:t_count - 1][:, :, :, None]
                * model.trans2[None]
                * bsh[2:][:, None, None, :]
                * beta[2:][:, None, :, :]
            )
            tri /= tri.sum(axis=(1, 2, 3), keepdims=True)
            eta_sum += tri.sum(axis=0)
        emstats.accumulate(model, x, gamma)
    return total_ll, eta_sum, pair1_sum, first_sum, emstats


def _mstep2(model, eta_sum, pair1_sum, first_sum, emstats, config, floor_d, n_utt):
    trans2 = model.trans2.copy()
    has_data = eta_sum.sum(axis=2) > 0.0
    trans2[has_data] = eta_sum[has_data]
    trans2 = _row_normalize_floored(trans2, model.mask.allowed2, config.transition_floor)
    trans1 = model.trans1.copy()
    rows = pair1_sum.sum(axis=1) > 0.0
    trans1[rows] = pair1_sum[rows]
    trans1 = _row_normalize_floored(trans1, model.mask.allowed1, config.transition_floor)
    if model.mask.kind == "circular":
        initial = first_sum / n_utt
        initial = initial / initial.sum()
    else:
        initial = model.initial
    emissions = emstats.updated_emissions(model, config, floor_d)
    return replace(
        model, initial=initial, trans1=trans1, trans2=trans2, emissions=emissions
    )


def baum_welch2(model: Hmm2Model, obs_set, config: TrainConfig = TrainConfig()) -> TrainReport:
    """Reestimate a second-order model. Every utterance needs T >= 3 so
    that triple statistics exist."""
    obs_list = _prepare_obs(model, obs_set)
    for x, name in obs_list:
        if x.shape[0] < 3:
            raise UtteranceTooShortError(x.shape[0], 3, utterance=name)
    floor_d = _variance_floor_vector(model, [x for x, _ in obs_list], config)
    lls = []
    converged = False
    for _ in range(config.max_iterations):
        total_ll, eta_sum, pair1_sum, first_sum, emstats = _estep2(model, obs_list)
        lls.append(total_ll)
        if len(lls) > 1:
            rel = abs(lls[-1] - lls[-2]) / max(abs(lls[-1]), 1e-12)
            if rel < config.rel_tol:
                converged = True
                break
        model = _mstep2(
            model, eta_sum, pair1_sum, first_sum, emstats, config, floor_d, len(obs_list)
        )
    return TrainReport(model, lls, converged, len(obs_list))


# ---------------------------------------------------------------------------
# one-call driver
# ---------------------------------------------------------------------------

def train(variant: VariantSpec, obs_set, config: TrainConfig = TrainConfig()) -> TrainReport:
    """Initialize per the variant's conventions and run Baum-Welch.

    Gaussian variants get segmental k-means starting points; discrete
    variants start from uniform symbol tables. When ``config.symmetrize``
    is set and the topology is circular, the pairwise transitions of the
    final model are projected toward symmetry (the recorded likelihoods
    refer to the unprojected parameters).
    """
    if variant.emission == "gmm":
        emission_spec = segmental_kmeans_init(
            obs_set,
            variant.n_states,
            variant.n_mixtures,
            seed=config.seed,
            variance_floor=config.variance_floor,
            weight_floor=config.mixture_weight_floor,
        )
    else:
        emission_spec = ("discrete", variant.n_mixtures)

    if variant.topology == "circular":
        if variant.order == 1:
            model = init_circular1(variant.n_states, emission_spec)
        else:
            model = init_circular2(variant.n_states, emission_spec)
    else:
        model = init_ltr(variant.n_states, variant.skip_width, emission_spec, variant.order)

    if variant.order == 1:
        report = baum_welch1(model, obs_set, config)
    else:
        report = baum_welch2(model, obs_set, config)

    if config.symmetrize and variant.topology == "circular":
        report.model = symmetrize_ring_transitions(report.model)
    return report
