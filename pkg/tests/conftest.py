"""Shared builders for randomized tests.

All randomness is drawn from explicitly-seeded generators inside each test;
nothing here keeps global state.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from hmmsid.models import (
    DiscreteEmission,
    GmmEmission,
    Hmm1Model,
    Hmm2Model,
    circular_topology,
    ltr_topology,
)

# (order, topology, emission) — the eight model configurations exercised by
# the randomized suites. Ring topologies need at least 3 states.
ALL_CONFIGS = [
    (order, topology, emission)
    for order in (1, 2)
    for topology in ("ltr", "circular")
    for emission in ("discrete", "gmm")
]

N_SYMBOLS = 4


def states_for(topology: str, rng) -> int:
    if topology == "circular":
        return 3
    return int(rng.integers(2, 4))


def make_mask(topology: str, n_states: int):
    if topology == "circular":
        return circular_topology(n_states)
    return ltr_topology(n_states, skip_width=2)


def random_simplex(rng, size, floor=0.05):
    v = rng.uniform(floor, 1.0, size=size)
    return v / v.sum()


def random_emissions(rng, kind: str, n_states: int, n_dims: int = 2, n_mixtures: int = 2):
    out = []
    for _ in range(n_states):
        if kind == "discrete":
            out.append(DiscreteEmission(random_simplex(rng, N_SYMBOLS)))
        else:
            out.append(
                GmmEmission(
                    weights=random_simplex(rng, n_mixtures),
                    means=rng.normal(0.0, 2.0, size=(n_mixtures, n_dims)),
                    variances=rng.uniform(0.3, 2.0, size=(n_mixtures, n_dims)),
                )
            )
    return tuple(out)


def random_initial(rng, mask):
    if mask.kind == "ltr":
        init = np.zeros(mask.n_states)
        init[0] = 1.0
        return init
    return random_simplex(rng, mask.n_states)


def random_trans1(rng, mask):
    n = mask.n_states
    trans = np.zeros((n, n))
    for i in range(n):
        row = np.where(mask.allowed1[i], rng.uniform(0.05, 1.0, n), 0.0)
        trans[i] = row / row.sum()
    return trans


def random_trans2(rng, mask):
    n = mask.n_states
    trans2 = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            if not mask.allowed1[i, j]:
                continue
            row = np.where(mask.allowed2[i, j], rng.uniform(0.05, 1.0, n), 0.0)
            trans2[i, j] = row / row.sum()
    return trans2


def make_random_model(rng, order: int, topology: str, emission: str,
                      n_states: int | None = None, n_dims: int = 2,
                      n_mixtures: int = 2):
    if n_states is None:
        n_states = states_for(topology, rng)
    mask = make_mask(topology, n_states)
    emissions = random_emissions(rng, emission, n_states, n_dims, n_mixtures)
    if order == 1:
        return Hmm1Model(
            mask=mask,
            initial=random_initial(rng, mask),
            trans=random_trans1(rng, mask),
            emissions=emissions,
        )
    return Hmm2Model(
        mask=mask,
        initial=random_initial(rng, mask),
        trans1=random_trans1(rng, mask),
        trans2=random_trans2(rng, mask),
        emissions=emissions,
    )


def make_obs(rng, emission: str, t_count: int, n_dims: int = 2) -> np.ndarray:
    if emission == "discrete":
        return rng.integers(0, N_SYMBOLS, size=t_count)
    return rng.normal(0.0, 2.0, size=(t_count, n_dims))
