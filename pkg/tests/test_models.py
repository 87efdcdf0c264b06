import numpy as np
import pytest

import oracles
from conftest import ALL_CONFIGS, make_obs, make_random_model

from hmmsid.models import (
    DiscreteEmission,
    GmmEmission,
    Hmm1Model,
    circular_topology,
    load_model,
    ltr_topology,
    model_from_dict,
    model_to_dict,
    save_model,
    symmetrize_ring_transitions,
    validate,
)


class TestEmissionDensities:
    def test_gmm_log_density_matches_reference(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            e = GmmEmission(
                weights=np.array([0.3, 0.7]),
                means=rng.normal(size=(2, 3)),
                variances=rng.uniform(0.2, 2.0, size=(2, 3)),
            )
            x = rng.normal(size=(5, 3))
            got = e.log_density(x)
            want = [oracles.emission_log_density(e, xi) for xi in x]
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_gmm_zero_weight_component_ignored(self):
        e = GmmEmission(
            weights=np.array([1.0, 0.0]),
            means=np.array([[0.0], [100.0]]),
            variances=np.array([[1.0], [1.0]]),
        )
        only = GmmEmission(
            weights=np.array([1.0]),
            means=np.array([[0.0]]),
            variances=np.array([[1.0]]),
        )
        x = np.array([[0.3], [-1.2]])
        np.testing.assert_allclose(e.log_density(x), only.log_density(x), rtol=1e-14)

    def test_discrete_log_density_and_zero_prob(self):
        e = DiscreteEmission(np.array([0.5, 0.5, 0.0]))
        vals = e.log_density(np.array([0, 2, 1]))
        assert vals[0] == pytest.approx(np.log(0.5))
        assert np.isneginf(vals[1])
        assert vals[2] == pytest.approx(np.log(0.5))

    def test_discrete_rejects_out_of_range_symbol(self):
        e = DiscreteEmission(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            e.log_density(np.array([0, 2]))
        with pytest.raises(ValueError):
            e.log_density(np.array([-1]))

    def test_discrete_rejects_float_symbols(self):
        e = DiscreteEmission(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            e.log_density(np.array([0.0, 1.0]))


class TestValidate:
    def test_random_models_validate_clean(self):
        rng = np.random.default_rng(11)
        for order, topology, emission in ALL_CONFIGS:
            model = make_random_model(rng, order, topology, emission)
            assert validate(model) == []

    def test_detects_unnormalized_row(self):
        rng = np.random.default_rng(12)
        model = make_random_model(rng, 1, "ltr", "gmm", n_states=3)
        bad = model.trans.copy()
        bad[0] *= 2.0
        model2 = Hmm1Model(model.mask, model.initial, bad, model.emissions)
        assert any("trans[0" in p or "row 0" in p for p in validate(model2))

    def test_detects_mask_violation(self):
        rng = np.random.default_rng(13)
        model = make_random_model(rng, 1, "ltr", "gmm", n_states=3)
        bad = model.trans.copy()
        bad[2, 0] = 0.5
        bad[2] /= bad[2].sum()
        model2 = Hmm1Model(model.mask, model.initial, bad, model.emissions)
        assert any("forbid" in p for p in validate(model2))

    def test_detects_bad_initial(self):
        rng = np.random.default_rng(14)
        model = make_random_model(rng, 1, "circular", "gmm")
        model2 = Hmm1Model(model.mask, model.initial * 0.5, model.trans, model.emissions)
        assert any("initial" in p for p in validate(model2))

    def test_detects_forbidden_triple(self):
        rng = np.random.default_rng(15)
        model = make_random_model(rng, 2, "ltr", "gmm", n_states=3)
        bad = model.trans2.copy()
        bad[2, 2, 0] = 0.25
        from hmmsid.models import Hmm2Model

        model2 = Hmm2Model(model.mask, model.initial, model.trans1, bad, model.emissions)
        assert any("forbids" in p for p in validate(model2))

    def test_detects_negative_variance(self):
        rng = np.random.default_rng(16)
        model = make_random_model(rng, 1, "ltr", "gmm", n_states=2)
        e = model.emissions[0]
        bad_var = e.variances.copy()
        bad_var[0, 0] = -1.0
        bad = GmmEmission(e.weights, e.means, bad_var)
        model2 = Hmm1Model(model.mask, model.initial, model.trans, (bad,) + model.emissions[1:])
        assert any("variance" in p for p in validate(model2))


class TestShapeChecks:
    def test_wrong_trans_shape_rejected(self):
        rng = np.random.default_rng(17)
        model = make_random_model(rng, 1, "ltr", "gmm", n_states=3)
        with pytest.raises(ValueError):
            Hmm1Model(model.mask, model.initial, model.trans[:2], model.emissions)

    def test_wrong_emission_count_rejected(self):
        rng = np.random.default_rng(18)
        model = make_random_model(rng, 1, "ltr", "gmm", n_states=3)
        with pytest.raises(ValueError):
            Hmm1Model(model.mask, model.initial, model.trans, model.emissions[:2])

    def test_mixed_emission_kinds_rejected(self):
        rng = np.random.default_rng(19)
        model = make_random_model(rng, 1, "ltr", "gmm", n_states=2)
        mixed = (model.emissions[0], DiscreteEmission(np.array([0.5, 0.5])))
        with pytest.raises(ValueError):
            Hmm1Model(model.mask, model.initial, model.trans, mixed)


class TestSerialization:
    @pytest.mark.parametrize("order,topology,emission", ALL_CONFIGS)
    def test_round_trip_is_exact(self, tmp_path, order, topology, emission):
        rng = np.random.default_rng(hash((order, topology, emission)) % (2**32))
        model = make_random_model(rng, order, topology, emission)
        path = tmp_path / "model.json"
        save_model(model, path, training={"note": "x", "seed": 5})
        back, header = load_model(path)
        assert header["training"] == {"note": "x", "seed": 5}
        assert type(back) is type(model)
        assert back.mask.kind == model.mask.kind
        np.testing.assert_array_equal(back.initial, model.initial)
        if order == 1:
            np.testing.assert_array_equal(back.trans, model.trans)
        else:
            np.testing.assert_array_equal(back.trans1, model.trans1)
            np.testing.assert_array_equal(back.trans2, model.trans2)
        for a, b in zip(back.emissions, model.emissions):
            if emission == "discrete":
                np.testing.assert_array_equal(a.probs, b.probs)
            else:
                np.testing.assert_array_equal(a.weights, b.weights)
                np.testing.assert_array_equal(a.means, b.means)
                np.testing.assert_array_equal(a.variances, b.variances)

    def test_save_is_deterministic(self, tmp_path):
        rng = np.random.default_rng(20)
        model = make_random_model(rng, 2, "circular", "gmm")
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_foreign_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            load_model(path)

    def test_dict_round_trip_without_files(self):
        rng = np.random.default_rng(21)
        model = make_random_model(rng, 2, "ltr", "discrete")
        back = model_from_dict(model_to_dict(model))
        np.testing.assert_array_equal(back.trans2, model.trans2)


class TestSymmetrize:
    def test_projects_onto_symmetry_and_stays_stochastic(self):
        rng = np.random.default_rng(22)
        model = make_random_model(rng, 1, "circular", "gmm", n_states=4)
        sym = symmetrize_ring_transitions(model)
        assert validate(sym) == []
        np.testing.assert_allclose(sym.trans.sum(axis=1), 1.0, atol=1e-12)
        # each allowed pair's mass comes from the symmetric average before
        # row renormalization, so detailed symmetry shows as ratio equality
        avg = (model.trans + model.trans.T) / 2.0
        expected = np.where(model.mask.allowed1, avg, 0.0)
        expected /= expected.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(sym.trans, expected, rtol=1e-12)

    def test_uniform_ring_is_a_fixed_point(self):
        model = make_random_model(np.random.default_rng(23), 1, "circular", "gmm", n_states=4)
        uniform = np.where(model.mask.allowed1, 1.0 / 3.0, 0.0)
        fixed = Hmm1Model(model.mask, model.initial, uniform, model.emissions)
        out = symmetrize_ring_transitions(fixed)
        np.testing.assert_allclose(out.trans, uniform, rtol=1e-12)

    def test_order2_symmetrizes_first_step_matrix(self):
        model = make_random_model(np.random.default_rng(24), 2, "circular", "gmm")
        sym = symmetrize_ring_transitions(model)
        assert validate(sym) == []
        np.testing.assert_array_equal(sym.trans2, model.trans2)

    def test_rejects_ltr(self):
        model = make_random_model(np.random.default_rng(25), 1, "ltr", "gmm")
        with pytest.raises(ValueError):
            symmetrize_ring_transitions(model)
