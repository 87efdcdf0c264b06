"""Model types: topologies, emissions, first- and second-order chains.

Conventions
-----------
States are indexed 0-based everywhere in code and in serialized files (the
file header records this). A first-order model is (initial, trans, emissions)
with ``trans[i, j] = P(state j at t | state i at t-1)``. A second-order model
adds ``trans2[i, j, k] = P(state k at t | state j at t-1, state i at t-2)``;
its ``trans1`` matrix drives the single transition out of the first frame.
Emission densities depend on the current state only.

Two modeling topologies are supported:

* left-to-right: from state i only states i..i+skip_width are reachable and
  the first frame starts in state 0 (initial = e_0);
* circular (ring): from state i only the ring neighbours {i-1, i, i+1} mod N
  are reachable; no absorbing state exists and N >= 3.

A third kind, "custom", wraps an explicit allowed-set matrix. It exists so
derived chains (notably the pair-state embedding of a second-order model)
can be expressed as first-class models; it is not a modeling topology.

Models are immutable values: construct a new one instead of mutating.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "TopologyMask",
    "ltr_topology",
    "circular_topology",
    "custom_topology",
    "GmmEmission",
    "DiscreteEmission",
    "Hmm1Model",
    "Hmm2Model",
    "validate",
    "save_model",
    "load_model",
    "symmetrize_ring_transitions",
]

_SUM_TOL = 1e-9


def _as_float_array(x, name, ndim):
    a = np.array(x, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# topology masks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TopologyMask:
    """Allowed-transition structure of a chain.

    ``allowed1[i, j]`` is True when the one-step transition i -> j is
    permitted; ``allowed2[i, j, k] = allowed1[i, j] and allowed1[j, k]``
    is the induced set of permitted state triples.
    """

    n_states: int
    allowed1: np.ndarray
    allowed2: np.ndarray
    kind: str                      # "ltr" | "circular" | "custom"
    skip_width: int | None = None

    def __post_init__(self):
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        a1 = np.array(self.allowed1, dtype=bool)
        if a1.shape != (self.n_states, self.n_states):
            raise ValueError(
                f"allowed1 shape {a1.shape} != ({self.n_states}, {self.n_states})"
            )
        if not a1.any(axis=1).all():
            dead = int(np.flatnonzero(~a1.any(axis=1))[0])
            raise ValueError(f"state {dead} has no allowed successor")
        object.__setattr__(self, "allowed1", a1)
        object.__setattr__(
            self, "allowed2", a1[:, :, None] & a1[None, :, :]
        )


def ltr_topology(n_states: int, skip_width: int = 2) -> TopologyMask:
    """Left-to-right mask: i -> j allowed iff 0 <= j - i <= skip_width.

    The last state keeps its self-loop, so every row has a successor.
    """
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    if skip_width < 1:
        raise ValueError("skip_width must be >= 1")
    i, j = np.indices((n_states, n_states))
    a1 = (j >= i) & (j - i <= skip_width)
    return TopologyMask(n_states, a1, np.empty(0), "ltr", skip_width)


def circular_topology(n_states: int) -> TopologyMask:
    """Ring mask: i -> j allowed iff j is i-1, i or i+1 modulo n_states."""
    if n_states < 3:
        raise ValueError("circular topology needs n_states >= 3")
    i, j = np.indices((n_states, n_states))
    d = (j - i) % n_states
    a1 = (d == 0) | (d == 1) | (d == n_states - 1)
    return TopologyMask(n_states, a1, np.empty(0), "circular", None)


def custom_topology(allowed1) -> TopologyMask:
    """Mask with an explicit allowed set (for derived/embedded chains)."""
    a1 = np.array(allowed1, dtype=bool)
    if a1.ndim != 2 or a1.shape[0] != a1.shape[1]:
        raise ValueError("allowed1 must be a square boolean matrix")
    return TopologyMask(a1.shape[0], a1, np.empty(0), "custom", None)


# ---------------------------------------------------------------------------
# emissions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GmmEmission:
    """Diagonal-covariance Gaussian mixture over feature vectors.

    weights: (M,), means: (M, D), variances: (M, D). ``log_density`` returns
    the per-frame log of sum_m weights[m] * N(x; means[m], diag(variances[m])).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = _as_float_array(self.weights, "weights", 1)
        mu = _as_float_array(self.means, "means", 2)
        v = _as_float_array(self.variances, "variances", 2)
        if mu.shape != v.shape or mu.shape[0] != w.shape[0]:
            raise ValueError(
                f"inconsistent mixture shapes: weights {w.shape}, "
                f"means {mu.shape}, variances {v.shape}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def n_dims(self) -> int:
        return self.means.shape[1]

    def log_density(self, frames) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames[None, :]
        if frames.shape[1] != self.n_dims:
            raise ValueError(
                f"frames have dimension {frames.shape[1]}, emission has {self.n_dims}"
            )
        # (T, M): log w_m + sum_d log N(x_d; mu_md, v_md)
        return logsumexp(self.component_log_density(frames), axis=1)

    def component_log_density(self, frames) -> np.ndarray:
        """(T, M) matrix of log(weights[m]) + log N(x; means[m], variances[m])."""
        frames = np.asarray(frames, dtype=np.float64)
        diff = frames[:, None, :] - self.means[None, :, :]
        quad = np.sum(diff * diff / self.variances[None, :, :], axis=2)
        const = -0.5 * np.sum(np.log(2.0 * np.pi * self.variances), axis=1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw[None, :] + const[None, :] - 0.5 * quad


@dataclass(frozen=True)
class DiscreteEmission:
    """Probability table over a finite symbol alphabet. probs: (M,)."""

    probs: np.ndarray

    def __post_init__(self):
        p = _as_float_array(self.probs, "probs", 1)
        object.__setattr__(self, "probs", p)

    @property
    def n_symbols(self) -> int:
        return self.probs.shape[0]

    def log_density(self, symbols) -> np.ndarray:
        sym = np.asarray(symbols)
        if sym.ndim != 1:
            raise ValueError("symbol sequence must be 1-dimensional")
        if not np.issubdtype(sym.dtype, np.integer):
            raise ValueError("discrete emissions need integer symbols")
        if sym.size and (sym.min() < 0 or sym.max() >= self.n_symbols):
            raise ValueError(
                f"symbol out of range [0, {self.n_symbols}): "
                f"min {sym.min()}, max {sym.max()}"
            )
        with np.errstate(divide="ignore"):
            return np.log(self.probs[sym])


Emission = GmmEmission | DiscreteEmission


def _check_emissions(emissions, n_states):
    ems = tuple(emissions)
    if len(ems) != n_states:
        raise ValueError(f"need {n_states} emissions, got {len(ems)}")
    first = ems[0]
    for e in ems:
        if type(e) is not type(first):
            raise ValueError("all states must share one emission type")
        if isinstance(e, GmmEmission):
            if (e.n_components, e.n_dims) != (first.n_components, first.n_dims):
                raise ValueError("all GMM emissions must share (M, D)")
        else:
            if e.n_symbols != first.n_symbols:
                raise ValueError("all discrete emissions must share alphabet size")
    return ems


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hmm1Model:
    """First-order chain: initial (N,), trans (N, N), one emission per state."""

    mask: TopologyMask
    initial: np.ndarray
    trans: np.ndarray
    emissions: tuple

    def __post_init__(self):
        n = self.mask.n_states
        init = _as_float_array(self.initial, "initial", 1)
        trans = _as_float_array(self.trans, "trans", 2)
        if init.shape != (n,):
            raise ValueError(f"initial shape {init.shape} != ({n},)")
        if trans.shape != (n, n):
            raise ValueError(f"trans shape {trans.shape} != ({n}, {n})")
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "emissions", _check_emissions(self.emissions, n))

    @property
    def n_states(self) -> int:
        return self.mask.n_states

    @property
    def order(self) -> int:
        return 1


@dataclass(frozen=True)
class Hmm2Model:
    """Second-order chain.

    ``trans1`` carries the transition out of the first frame; ``trans2`` is
    the (N, N, N) tensor of triple transitions; rows over the last axis are
    stochastic for every allowed (i, j) pair and identically zero elsewhere.
    """

    mask: TopologyMask
    initial: np.ndarray
    trans1: np.ndarray
    trans2: np.ndarray
    emissions: tuple

    def __post_init__(self):
        n = self.mask.n_states
        init = _as_float_array(self.initial, "initial", 1)
        t1 = _as_float_array(self.trans1, "trans1", 2)
        t2 = _as_float_array(self.trans2, "trans2", 3)
        if init.shape != (n,):
            raise ValueError(f"initial shape {init.shape} != ({n},)")
        if t1.shape != (n, n):
            raise ValueError(f"trans1 shape {t1.shape} != ({n}, {n})")
        if t2.shape != (n, n, n):
            raise ValueError(f"trans2 shape {t2.shape} != ({n}, {n}, {n})")
        object.__setattr__(self, "initial", init)
        object.__setattr__(self, "trans1", t1)
        object.__setattr__(self, "trans2", t2)
        object.__setattr__(self, "emissions", _check_emissions(self.emissions, n))

    @property
    def n_states(self) -> int:
        return self.mask.n_states

    @property
    def order(self) -> int:
        return 2


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _check_rows(name, matrix, allowed, problems):
    sums = matrix.sum(axis=1)
    for i in np.flatnonzero(np.abs(sums - 1.0) > _SUM_TOL):
        problems.append(
            f"{name} row {i} sums to {sums[i]:.12g} (off by {sums[i] - 1.0:.3g})"
        )
    if (matrix < 0).any():
        i, j = np.argwhere(matrix < 0)[0]
        problems.append(f"{name}[{i},{j}] = {matrix[i, j]:.12g} is negative")
    bad = (matrix != 0.0) & ~allowed
    for i, j in np.argwhere(bad):
        problems.append(
            f"{name}[{i},{j}] = {matrix[i, j]:.12g} but the topology forbids ({i},{j})"
        )


def validate(model) -> list[str]:
    """Return a list of constraint violations (empty means valid).

    Checks probability normalization, nonnegativity, topology-mask
    compliance and emission parameter sanity. Reported indices are 0-based.
    """
    problems: list[str] = []
    mask = model.mask
    init = model.initial

    if (init < 0).any():
        problems.append("initial distribution has negative entries")
    if abs(init.sum() - 1.0) > _SUM_TOL:
        problems.append(
            f"initial distribution sums to {init.sum():.12g} "
            f"(off by {init.sum() - 1.0:.3g})"
        )

    a2 = mask.allowed1[:, :, None] & mask.allowed1[None, :, :]
    if not np.array_equal(mask.allowed2, a2):
        problems.append("mask.allowed2 is not induced by mask.allowed1")

    if isinstance(model, Hmm1Model):
        _check_rows("trans", model.trans, mask.allowed1, problems)
    else:
        _check_rows("trans1", model.trans1, mask.allowed1, problems)
        t2 = model.trans2
        sums = t2.sum(axis=2)
        for i, j in np.argwhere(mask.allowed1):
            if abs(sums[i, j] - 1.0) > _SUM_TOL:
                problems.append(
                    f"trans2[{i},{j},:] sums to {sums[i, j]:.12g} "
                    f"(off by {sums[i, j] - 1.0:.3g})"
                )
        if (t2 < 0).any():
            i, j, k = np.argwhere(t2 < 0)[0]
            problems.append(f"trans2[{i},{j},{k}] = {t2[i, j, k]:.12g} is negative")
        bad = (t2 != 0.0) & ~mask.allowed2
        for i, j, k in np.argwhere(bad):
            problems.append(
                f"trans2[{i},{j},{k}] = {t2[i, j, k]:.12g} "
                f"but the topology forbids ({i},{j},{k})"
            )

    for s, e in enumerate(model.emissions):
        if isinstance(e, GmmEmission):
            if abs(e.weights.sum() - 1.0) > _SUM_TOL:
                problems.append(
                    f"state {s} mixture weights sum to {e.weights.sum():.12g}"
                )
            if (e.weights < 0).any():
                problems.append(f"state {s} has a negative mixture weight")
            if (e.variances <= 0).any():
                m, d = np.argwhere(e.variances <= 0)[0]
                problems.append(
                    f"state {s} variance[{m},{d}] = {e.variances[m, d]:.12g} is not positive"
                )
        else:
            if abs(e.probs.sum() - 1.0) > _SUM_TOL:
                problems.append(
                    f"state {s} symbol probabilities sum to {e.probs.sum():.12g}"
                )
            if (e.probs < 0).any():
                problems.append(f"state {s} has a negative symbol probability")

    return problems


def symmetrize_ring_transitions(model):
    """Project a circular model's pairwise transitions onto symmetry.

    Averages the transition matrix with its transpose on the allowed set,
    then renormalizes rows (the renormalization is what keeps rows
    stochastic, and it can leave a small residual asymmetry when row masses
    differ). First-order models project ``trans``; second-order models
    project ``trans1`` only. Off by default everywhere; apply explicitly.
    """
    if model.mask.kind != "circular":
        raise ValueError("symmetrization applies to circular models only")
    a = model.trans if isinstance(model, Hmm1Model) else model.trans1
    s = 0.5 * (a + a.T)
    s = np.where(model.mask.allowed1, s, 0.0)
    s = s / s.sum(axis=1, keepdims=True)
    if isinstance(model, Hmm1Model):
        return replace(model, trans=s)
    return replace(model, trans1=s)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
#
# Model files are JSON (UTF-8) with this layout:
#
#   {
#     "format": "hmmsid-model",
#     "format_version": 1,
#     "state_indexing": "0-based",
#     "order": 1 | 2,
#     "topology": {"kind": "ltr"|"circular"|"custom", "n_states": N,
#                  "skip_width": int|null, "allowed1": [[0/1,..],..] only for custom},
#     "emission_type": "gmm" | "discrete",
#     "initial": [...],
#     "trans": [[...]]                      (order 1)
#     "trans1": [[...]], "trans2": [[[...]]] (order 2)
#     "emissions": [{"weights": [...], "means": [[...]], "variances": [[...]]} ...]
#                  or [{"probs": [...]} ...]
#     "training": {...} | null      free-form metadata (iterations, final
#                                   log-likelihood, seed, config hash, ...)
#   }
#
# Floats are written with Python's shortest round-trip repr, so a load of a
# save reproduces every value bit for bit.

FORMAT_NAME = "hmmsid-model"
FORMAT_VERSION = 1


def _topology_to_dict(mask: TopologyMask) -> dict:
    d = {"kind": mask.kind, "n_states": mask.n_states, "skip_width": mask.skip_width}
    if mask.kind == "custom":
        d["allowed1"] = mask.allowed1.astype(int).tolist()
    return d


def _topology_from_dict(d: dict) -> TopologyMask:
    kind = d["kind"]
    if kind == "ltr":
        return ltr_topology(d["n_states"], d["skip_width"])
    if kind == "circular":
        return circular_topology(d["n_states"])
    if kind == "custom":
        return custom_topology(np.array(d["allowed1"], dtype=bool))
    raise ValueError(f"unknown topology kind {kind!r}")


def model_to_dict(model, training: dict | None = None) -> dict:
    ems = []
    if isinstance(model.emissions[0], GmmEmission):
        etype = "gmm"
        for e in model.emissions:
            ems.append({
                "weights": e.weights.tolist(),
                "means": e.means.tolist(),
                "variances": e.variances.tolist(),
            })
    else:
        etype = "discrete"
        for e in model.emissions:
            ems.append({"probs": e.probs.tolist()})
    d = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "state_indexing": "0-based",
        "order": model.order,
        "topology": _topology_to_dict(model.mask),
        "emission_type": etype,
        "initial": model.initial.tolist(),
        "emissions": ems,
        "training": training,
    }
    if isinstance(model, Hmm1Model):
        d["trans"] = model.trans.tolist()
    else:
        d["trans1"] = model.trans1.tolist()
        d["trans2"] = model.trans2.tolist()
    return d


def model_from_dict(d: dict):
    if d.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} file")
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {d.get('format_version')!r}")
    mask = _topology_from_dict(d["topology"])
    if d["emission_type"] == "gmm":
        ems = tuple(
            GmmEmission(e["weights"], e["means"], e["variances"])
            for e in d["emissions"]
        )
    else:
        ems = tuple(DiscreteEmission(e["probs"]) for e in d["emissions"])
    if d["order"] == 1:
        return Hmm1Model(mask, d["initial"], d["trans"], ems)
    if d["order"] == 2:
        return Hmm2Model(mask, d["initial"], d["trans1"], d["trans2"], ems)
    raise ValueError(f"unsupported order {d['order']!r}")


def _atomic_write_text(path, text):
    path = os.fspath(path)
    dirname = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(model, path, training: dict | None = None) -> None:
    """Write a model (plus optional training metadata) to ``path``.

    The write is atomic (temp file + rename) and deterministic: the same
    model always produces the same bytes.
    """
    text = json.dumps(model_to_dict(model, training), indent=1, sort_keys=True)
    _atomic_write_text(path, text + "\n")


def load_model(path):
    """Read a model file. Returns (model, header_dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    return model_from_dict(d), d
