"""Scaled forward/backward, Viterbi and joint-probability evaluation.

Numerical regime
----------------
The recursions run in the linear domain with per-frame normalization: every
alpha time-slice is divided by its sum, and ``scales[t]`` stores the
multiplier applied at frame t, so

    log_likelihood = -sum_t log(scales[t]).

Log-space arithmetic is confined to emission-density evaluation. Before
exponentiating, each frame's log-densities are shifted by their maximum and
the shift is folded back into that frame's normalizer, so a frame whose
densities are merely tiny never looks impossible; ImpossibleObservationError
fires only when every state with incoming probability mass has log-density
-inf at some frame.

Second-order lattices
---------------------
For order 2 the alpha/beta tables are (T, N, N): slice t holds values for
the state pair occupying frames (t-1, t), valid for t >= 1. The first frame
is a plain state vector stored in ``alpha_start``. The terminal backward
slice is constant 1 for left-to-right models and 1/N for circular models;
reestimation ratios are invariant to that constant.

State indices are 0-based; frame indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ImpossibleObservationError
from .models import (
    DiscreteEmission,
    GmmEmission,
    Hmm1Model,
    Hmm2Model,
    custom_topology,
)

__all__ = [
    "TrellisLattice",
    "StatePath",
    "forward1",
    "backward1",
    "forward_backward1",
    "viterbi1",
    "likelihood_via_transition",
    "forward2",
    "backward2",
    "forward_backward2",
    "viterbi2",
    "sequence_log_prob",
    "embed_pair_states",
]


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _frames_of(obs):
    """Accept a FeatureMatrix-like object (has .frames) or a raw array."""
    return obs.frames if hasattr(obs, "frames") else obs


def log_emission_matrix(model, obs) -> np.ndarray:
    """(T, N) matrix of per-state log emission densities for ``obs``."""
    x = _frames_of(obs)
    first = model.emissions[0]
    if isinstance(first, GmmEmission):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(
                f"continuous observations must be (T, D), got shape {x.shape}"
            )
    else:
        x = np.asarray(x)
        if x.ndim != 1:
            raise ValueError("discrete observations must be a 1-D symbol sequence")
    if x.shape[0] == 0:
        raise ValueError("empty observation sequence")
    cols = [e.log_density(x) for e in model.emissions]
    logb = np.stack(cols, axis=1)
    if np.isposinf(logb).any():
        raise ValueError("emission density is infinite (zero variance?)")
    return logb


def _shifted_emissions(logb):
    """Per-frame max-shifted linear densities.

    Returns (bsh, shifts) with bsh[t] = exp(logb[t] - shifts[t]) in [0, 1].
    A frame whose densities are all -inf raises immediately.
    """
    shifts = np.max(logb, axis=1)
    dead = np.isneginf(shifts)
    if dead.any():
        raise ImpossibleObservationError(int(np.flatnonzero(dead)[0]))
    return np.exp(logb - shifts[:, None]), shifts


@dataclass
class TrellisLattice:
    """Scaled forward (and optionally backward) tables for one utterance.

    order 1: alpha/beta are (T, N). order 2: alpha/beta are (T, N, N) pair
    tables valid for slice index >= 1, and ``alpha_start`` holds the scaled
    first-frame state vector. ``scales`` are the per-slice normalizer
    multipliers; ``slice_log_norms`` are their negated logs (kept separately
    so downstream passes never re-derive them through exp/log round trips);
    log_likelihood = sum(slice_log_norms) = -sum(log(scales)). For a slice
    whose conditional probability underflows float64 (log norm < -709),
    ``scales`` saturates to inf while ``slice_log_norms`` stays exact —
    always prefer the log-domain field.
    """

    order: int
    alpha: np.ndarray
    scales: np.ndarray
    slice_log_norms: np.ndarray
    log_likelihood: float
    beta: np.ndarray | None = None
    alpha_start: np.ndarray | None = None
    emission_shifts: np.ndarray = field(default=None, repr=False)

    @property
    def n_frames(self) -> int:
        return self.alpha.shape[0]


def _norms_from(forward, T, shifts):
    """Recover per-slice shifted-domain normalizers from a lattice or a
    bare scales vector."""
    if isinstance(forward, TrellisLattice):
        if forward.slice_log_norms.shape[0] != T:
            raise ValueError(
                f"scales length {forward.slice_log_norms.shape[0]} != T = {T}"
            )
        return np.exp(forward.slice_log_norms - shifts)
    scales = np.asarray(forward, dtype=np.float64)
    if scales.shape != (T,):
        raise ValueError(f"scales length {scales.shape} != ({T},)")
    return np.exp(-np.log(scales) - shifts)


# ---------------------------------------------------------------------------
# first order
# ---------------------------------------------------------------------------

def forward1(model: Hmm1Model, obs) -> TrellisLattice:
    """Scaled forward pass. alpha[t] is the normalized joint of frames
    0..t and the state at t; log_likelihood is exact (computed from the
    per-slice normalizers in the log domain)."""
    logb = log_emission_matrix(model, obs)
    return _forward1_core(model, logb)


def _forward1_core(model, logb):
    bsh, shifts = _shifted_emissions(logb)
    T, N = logb.shape
    alpha = np.empty((T, N))
    log_norms = np.empty(T)
    u = model.initial * bsh[0]
    s = u.sum()
    if s <= 0.0:
        raise ImpossibleObservationError(0)
    alpha[0] = u / s
    log_norms[0] = np.log(s) + shifts[0]
    for t in range(1, T):
        u = (alpha[t - 1] @ model.trans) * bsh[t]
        s = u.sum()
        if s <= 0.0:
            raise ImpossibleObservationError(t)
        alpha[t] = u / s
        log_norms[t] = np.log(s) + shifts[t]
    with np.errstate(over="ignore"):
        scales = np.exp(-log_norms)
    return TrellisLattice(
        order=1,
        alpha=alpha,
        scales=scales,
        slice_log_norms=log_norms,
        log_likelihood=float(log_norms.sum()),
        emission_shifts=shifts,
    )


def backward1(model: Hmm1Model, obs, forward) -> np.ndarray:
    """Scaled backward pass sharing the forward pass's scale factors.

    ``forward`` is the TrellisLattice from forward1 (preferred) or its
    scales vector. The terminal slice is 1 for left-to-right models and
    1/N for circular models; reestimation ratios are invariant to that
    constant. Returns the (T, N) scaled backward table.
    """
    logb = log_emission_matrix(model, obs)
    return _backward1_core(model, logb, forward)


def _backward1_core(model, logb, forward):
    bsh, shifts = _shifted_emissions(logb)
    T, N = logb.shape
    norms = _norms_from(forward, T, shifts)
    beta = np.empty((T, N))
    term = 1.0 / N if model.mask.kind == "circular" else 1.0
    beta[T - 1] = term / norms[T - 1]
    for t in range(T - 2, -1, -1):
        beta[t] = (model.trans @ (bsh[t + 1] * beta[t + 1])) / norms[t]
    return beta


def forward_backward1(model: Hmm1Model, obs) -> TrellisLattice:
    """Forward pass plus backward table in one lattice."""
    lat = forward1(model, obs)
    lat.beta = backward1(model, obs, lat)
    return lat


def likelihood_via_transition(model: Hmm1Model, obs, t: int) -> float:
    """Total observation probability, summed over the transition t -> t+1.

    Computes P(obs) = sum_ij alpha_t(i) a_ij b_j(O_{t+1}) beta_{t+1}(j)
    with unscaled tables, so it is meant for short sequences; the value is
    independent of t and equals exp(forward1 log-likelihood), which makes
    it a cross-check on the scaled pass. The terminal backward value is 1
    here for every topology (that is the convention under which the sum
    equals the total probability). ``t`` is a 0-based frame index with
    0 <= t <= T-2.
    """
    logb = log_emission_matrix(model, obs)
    T, N = logb.shape
    if not 0 <= t <= T - 2:
        raise IndexError(f"t = {t} outside [0, {T - 2}]")
    b = np.exp(logb)
    alpha = np.empty((T, N))
    alpha[0] = model.initial * b[0]
    for s in range(1, T):
        alpha[s] = (alpha[s - 1] @ model.trans) * b[s]
    beta = np.empty((T, N))
    beta[T - 1] = 1.0
    for s in range(T - 2, -1, -1):
        beta[s] = model.trans @ (b[s + 1] * beta[s + 1])
    return float(
        np.sum(alpha[t][:, None] * model.trans * (b[t + 1] * beta[t + 1])[None, :])
    )


@dataclass(frozen=True)
class StatePath:
    """A decoded state sequence and its joint log-probability."""

    states: np.ndarray
    log_prob: float

    def __post_init__(self):
        object.__setattr__(
            self, "states", np.asarray(self.states, dtype=np.int64)
        )


def viterbi1(model: Hmm1Model, obs) -> StatePath:
    """Most probable state path (log-domain dynamic programming).

    Ties break toward the lowest state index, both at the final frame and
    at every backtrack step.
    """
    logb = log_emission_matrix(model, obs)
    T, N = logb.shape
    with np.errstate(divide="ignore"):
        loga = np.where(model.trans > 0.0, np.log(model.trans), -np.inf)
        logpi = np.where(model.initial > 0.0, np.log(model.initial), -np.inf)
    dp = logpi + logb[0]
    if np.max(dp) == -np.inf:
        raise ImpossibleObservationError(0)
    ptr = np.empty((T, N), dtype=np.int64)
    for t in range(1, T):
        cand = dp[:, None] + loga          # (i, j)
        ptr[t] = np.argmax(cand, axis=0)
        dp = cand[ptr[t], np.arange(N)] + logb[t]
        if np.max(dp) == -np.inf:
            raise ImpossibleObservationError(t)
    states = np.empty(T, dtype=np.int64)
    states[T - 1] = int(np.argmax(dp))
    for t in range(T - 1, 0, -1):
        states[t - 1] = ptr[t, states[t]]
    return StatePath(states, float(np.max(dp)))


# ---------------------------------------------------------------------------
# second order
# ---------------------------------------------------------------------------

def forward2(model: Hmm2Model, obs) -> TrellisLattice:
    """Scaled forward pass over state pairs.

    alpha[t] (t >= 1) is the normalized joint of frames 0..t and the pair
    (state at t-1, state at t); alpha_start is the scaled first-frame state
    vector. A single-frame utterance degenerates to the initial/emission
    product.
    """
    logb = log_emission_matrix(model, obs)
    return _forward2_core(model, logb)


def _forward2_core(model, logb):
    bsh, shifts = _shifted_emissions(logb)
    T, N = logb.shape
    alpha = np.zeros((T, N, N))
    log_norms = np.empty(T)
    u = model.initial * bsh[0]
    s = u.sum()
    if s <= 0.0:
        raise ImpossibleObservationError(0)
    astart = u / s
    log_norms[0] = np.log(s) + shifts[0]
    if T > 1:
        u2 = (astart[:, None] * model.trans1) * bsh[1][None, :]
        s = u2.sum()
        if s <= 0.0:
            raise ImpossibleObservationError(1)
        alpha[1] = u2 / s
        log_norms[1] = np.log(s) + shifts[1]
        for t in range(2, T):
            u2 = np.einsum("ij,ijk->jk", alpha[t - 1], model.trans2) * bsh[t][None, :]
            s = u2.sum()
            if s <= 0.0:
                raise ImpossibleObservationError(t)
            alpha[t] = u2 / s
            log_norms[t] = np.log(s) + shifts[t]
    with np.errstate(over="ignore"):
        scales = np.exp(-log_norms)
    return TrellisLattice(
        order=2,
        alpha=alpha,
        scales=scales,
        slice_log_norms=log_norms,
        log_likelihood=float(log_norms.sum()),
        alpha_start=astart,
        emission_shifts=shifts,
    )


def backward2(model: Hmm2Model, obs, forward) -> np.ndarray:
    """Scaled pair-state backward table sharing forward2's scale factors.

    beta[t] (t >= 1) conditions on the pair (state at t-1, state at t);
    slice 0 is unused and left at zero. Terminal value 1 (left-to-right)
    or 1/N (circular), as for backward1.
    """
    logb = log_emission_matrix(model, obs)
    return _backward2_core(model, logb, forward)


def _backward2_core(model, logb, forward):
    bsh, shifts = _shifted_emissions(logb)
    T, N = logb.shape
    norms = _norms_from(forward, T, shifts)
    beta = np.zeros((T, N, N))
    if T == 1:
        return beta
    term = 1.0 / N if model.mask.kind == "circular" else 1.0
    beta[T - 1] = term / norms[T - 1]
    for t in range(T - 2, 0, -1):
        beta[t] = np.einsum(
            "ijk,k,jk->ij", model.trans2, bsh[t + 1], beta[t + 1]
        ) / norms[t]
    return beta


def forward_backward2(model: Hmm2Model, obs) -> TrellisLattice:
    lat = forward2(model, obs)
    lat.beta = backward2(model, obs, lat)
    return lat


def viterbi2(model: Hmm2Model, obs) -> StatePath:
    """Most probable state path under the second-order model.

    The pair-state recursion starts from
    d_1(j, k) = initial_j b_j(O_0) a1_jk b_k(O_1) and maximizes over the
    predecessor of each pair. Ties break toward the lowest predecessor
    index, and the final pair is chosen in row-major order (lowest
    second-to-last state, then lowest last state).
    """
    logb = log_emission_matrix(model, obs)
    T, N = logb.shape
    with np.errstate(divide="ignore"):
        logpi = np.where(model.initial > 0.0, np.log(model.initial), -np.inf)
        loga1 = np.where(model.trans1 > 0.0, np.log(model.trans1), -np.inf)
        loga2 = np.where(model.trans2 > 0.0, np.log(model.trans2), -np.inf)
    start = logpi + logb[0]
    if np.max(start) == -np.inf:
        raise ImpossibleObservationError(0)
    if T == 1:
        best = int(np.argmax(start))
        return StatePath(np.array([best]), float(start[best]))
    dp = start[:, None] + loga1 + logb[1][None, :]
    if np.max(dp) == -np.inf:
        raise ImpossibleObservationError(1)
    ptr = np.empty((T, N, N), dtype=np.int64)
    for t in range(2, T):
        cand = dp[:, :, None] + loga2          # (i, j, k)
        ptr[t] = np.argmax(cand, axis=0)
        j_idx, k_idx = np.indices((N, N))
        dp = cand[ptr[t], j_idx, k_idx] + logb[t][None, :]
        if np.max(dp) == -np.inf:
            raise ImpossibleObservationError(t)
    flat = int(np.argmax(dp))
    j, k = divmod(flat, N)
    states = np.empty(T, dtype=np.int64)
    states[T - 2] = j
    states[T - 1] = k
    for t in range(T - 1, 1, -1):
        states[t - 2] = ptr[t, states[t - 1], states[t]]
    return StatePath(states, float(dp[j, k]))


def sequence_log_prob(model, obs, states) -> float:
    """Joint log-probability of ``states`` and ``obs`` under the model.

    For order 1 this is log of initial * prod(trans) * prod(emissions);
    for order 2 the first transition uses trans1 and later ones trans2.
    A topology-forbidden transition yields -inf (not an error).
    """
    logb = log_emission_matrix(model, obs)
    T = logb.shape[0]
    q = np.asarray(states, dtype=np.int64)
    if q.shape != (T,):
        raise ValueError(f"state path length {q.shape} != number of frames ({T},)")
    if q.size and (q.min() < 0 or q.max() >= model.n_states):
        raise ValueError("state index out of range")
    with np.errstate(divide="ignore"):
        total = float(np.log(model.initial[q[0]])) + float(logb[np.arange(T), q].sum())
        if isinstance(model, Hmm1Model):
            if T > 1:
                total += float(np.log(model.trans[q[:-1], q[1:]]).sum())
        else:
            if T > 1:
                total += float(np.log(model.trans1[q[0], q[1]]))
            if T > 2:
                total += float(np.log(model.trans2[q[:-2], q[1:-1], q[2:]]).sum())
    return total


# ---------------------------------------------------------------------------
# pair-state embedding (second order as a first-order chain over pairs)
# ---------------------------------------------------------------------------

def embed_pair_states(model: Hmm2Model, obs):
    """Re-express a second-order model as a first-order chain on state pairs.

    Composite state j*N+k stands for (state j at the previous frame, state
    k at the current frame). Its transition matrix is
    a'[(i,j),(j',k)] = [j == j'] * trans2[i,j,k], its emission is that of
    the current state k, and its initial vector folds in the first frame:
    initial'[(j,k)] = initial_j * b_j(O_0) * trans1[j,k]. Run the embedded
    model on obs[1:]; its forward/Viterbi results then match forward2 and
    viterbi2 on the full sequence (slice t of the embedded chain is the
    pair occupying frames t and t+1).

    The embedded initial vector is intentionally unnormalized (it carries
    emission weight), so ``validate`` will flag the embedded model; it is a
    computational device, not a modeling topology. Returns
    (embedded_model, obs_tail).
    """
    x = _frames_of(obs)
    x = np.asarray(x)
    if x.shape[0] < 2:
        raise ValueError("pair-state embedding needs at least 2 frames")
    N = model.n_states
    logb0 = log_emission_matrix(model, x[:1])[0]
    b0 = np.exp(logb0)
    init = (model.initial * b0)[:, None] * model.trans1   # (j, k)
    trans = np.zeros((N, N, N, N))
    for j in range(N):
        trans[:, j, j, :] = model.trans2[:, j, :]
    trans = trans.reshape(N * N, N * N)
    allowed = trans > 0.0
    dead = ~allowed.any(axis=1)
    if dead.any():
        idx = np.flatnonzero(dead)
        trans[idx, idx] = 1.0      # unreachable composite rows; keep rows stochastic
        allowed[idx, idx] = True
    mask = custom_topology(allowed)
    emissions = tuple(model.emissions[k] for j in range(N) for k in range(N))
    embedded = Hmm1Model(mask, init.reshape(-1), trans, emissions)
    return embedded, x[1:]


def decode_pair_path(composite_states, n_states: int) -> np.ndarray:
    """Map a composite-state path from an embedded chain back to states.

    A length-(T-1) composite path yields the length-T state path: the first
    composite provides both of its states, later composites contribute
    their current state.
    """
    comp = np.asarray(composite_states, dtype=np.int64)
    out = np.empty(comp.shape[0] + 1, dtype=np.int64)
    out[0] = comp[0] // n_states
    out[1:] = comp % n_states
    return out
