"""Walk through the model layer: topology masks, emissions, validation,
and lossless serialization.

Run from anywhere after installing the package:

    python3 demos/01_topologies_and_models.py
"""

import numpy as np

from hmmsid import (
    GmmEmission,
    Hmm1Model,
    Hmm2Model,
    circular_topology,
    ltr_topology,
    model_from_dict,
    model_to_dict,
    validate,
)


def show_mask(name, mask):
    print(f"{name} ({mask.n_states} states):")
    for row in mask.allowed1.astype(int):
        print("   ", " ".join(str(v) for v in row))


def main():
    print("== Topology masks ==")
    print("A left-to-right mask allows self-loops and forward jumps up to the")
    print("skip width; a ring mask allows self-loops and both ring neighbors.\n")
    show_mask("left-to-right, skip width 2", ltr_topology(5, skip_width=2))
    print()
    show_mask("ring", circular_topology(5))

    print("\n== A small first-order model ==")
    mask = ltr_topology(3, skip_width=1)
    emissions = tuple(
        GmmEmission(
            weights=np.array([1.0]),
            means=np.array([[float(2 * i)]]),
            variances=np.array([[1.0]]),
        )
        for i in range(3)
    )
    model = Hmm1Model(
        mask=mask,
        initial=np.array([1.0, 0.0, 0.0]),  # LTR chains must start in state 0
        trans=np.array([
            [0.6, 0.4, 0.0],
            [0.0, 0.7, 0.3],
            [0.0, 0.0, 1.0],
        ]),
        emissions=emissions,
    )
    problems = validate(model)
    print(f"validate() -> {problems!r} (empty list means every invariant holds)")

    print("\n== Second-order transitions ==")
    print("A second-order chain conditions each move on the previous TWO")
    print("states, so its transition table is a cube trans2[i, j, k]; each")
    print("(i, j) row is a distribution over k wherever j -> k is allowed.")
    ring = circular_topology(3)
    uniform_row = np.array([1.0, 1.0, 1.0]) / 3.0
    trans2 = np.broadcast_to(uniform_row, (3, 3, 3)).copy()
    model2 = Hmm2Model(
        mask=ring,
        initial=uniform_row.copy(),
        trans1=np.broadcast_to(uniform_row, (3, 3)).copy(),
        trans2=trans2,
        emissions=emissions,
    )
    print(f"order = {model2.order}, validate() -> {validate(model2)!r}")

    print("\n== Serialization round-trip ==")
    blob = model_to_dict(model2)
    back = model_from_dict(blob)
    same = (
        np.array_equal(back.trans2, model2.trans2)
        and np.array_equal(back.initial, model2.initial)
    )
    print(f"model -> dict -> model preserves every value exactly: {same}")


if __name__ == "__main__":
    main()
