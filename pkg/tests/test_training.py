import numpy as np
import pytest

import oracles
from conftest import ALL_CONFIGS, make_obs, make_random_model

from hmmsid.errors import UtteranceTooShortError
from hmmsid.inference import forward1, forward2
from hmmsid.models import validate
from hmmsid.training import (
    TrainConfig,
    VariantSpec,
    baum_welch1,
    baum_welch2,
    init_circular1,
    init_circular2,
    init_ltr,
    segmental_kmeans_init,
    train,
)

TIGHT = TrainConfig(max_iterations=10, rel_tol=1e-15)


def _welch(model, obs_set, config):
    return baum_welch1(model, obs_set, config) if model.order == 1 else baum_welch2(model, obs_set, config)


def _total_ll(model, obs_set):
    fwd = forward1 if model.order == 1 else forward2
    return sum(fwd(model, o).log_likelihood for o in obs_set)


class TestMonotonicity:
    @pytest.mark.parametrize("order,topology,emission", ALL_CONFIGS)
    def test_log_likelihood_never_drops(self, order, topology, emission):
        rng = np.random.default_rng(300 + order)
        for _ in range(4):
            model = make_random_model(rng, order, topology, emission)
            obs_set = [make_obs(rng, emission, int(rng.integers(6, 12))) for _ in range(3)]
            report = _welch(model, obs_set, TIGHT)
            lls = report.log_likelihoods
            assert len(lls) == 10
            for a, b in zip(lls, lls[1:]):
                assert b - a >= -1e-8

    @pytest.mark.parametrize("order,topology,emission", ALL_CONFIGS)
    def test_invariants_hold_after_every_iteration(self, order, topology, emission):
        rng = np.random.default_rng(320 + order)
        model = make_random_model(rng, order, topology, emission)
        obs_set = [make_obs(rng, emission, 8) for _ in range(2)]
        one = TrainConfig(max_iterations=1, rel_tol=1e-15)
        for _ in range(6):
            report = _welch(model, obs_set, one)
            model = report.model
            assert validate(model) == []

    def test_chained_single_steps_equal_one_run(self):
        rng = np.random.default_rng(330)
        model = make_random_model(rng, 2, "circular", "gmm")
        obs_set = [make_obs(rng, "gmm", 9) for _ in range(2)]
        whole = baum_welch2(model, obs_set, TrainConfig(max_iterations=4, rel_tol=1e-15))
        stepped = model
        lls = []
        for _ in range(4):
            rep = baum_welch2(stepped, obs_set, TrainConfig(max_iterations=1, rel_tol=1e-15))
            stepped = rep.model
            lls.extend(rep.log_likelihoods)
        np.testing.assert_allclose(lls, whole.log_likelihoods, rtol=1e-12)
        np.testing.assert_allclose(stepped.trans2, whole.model.trans2, rtol=1e-12)


class TestReportedLikelihoods:
    def test_lls_are_the_prestep_totals(self):
        rng = np.random.default_rng(340)
        model = make_random_model(rng, 1, "circular", "gmm")
        obs_set = [make_obs(rng, "gmm", 10) for _ in range(2)]
        report = baum_welch1(model, obs_set, TrainConfig(max_iterations=3, rel_tol=1e-15))
        assert report.log_likelihoods[0] == pytest.approx(_total_ll(model, obs_set), rel=1e-12)
        # the final stored model carries one update beyond the last recorded ll
        assert _total_ll(report.model, obs_set) >= report.log_likelihoods[-1] - 1e-8

    def test_convergence_flag_and_early_stop(self):
        rng = np.random.default_rng(341)
        model = make_random_model(rng, 1, "ltr", "gmm")
        obs_set = [make_obs(rng, "gmm", 8)]
        report = baum_welch1(model, obs_set, TrainConfig(max_iterations=50, rel_tol=1e9))
        assert report.converged
        assert report.iterations_run == 2

    def test_single_iteration_neither_converges_nor_stalls(self):
        rng = np.random.default_rng(342)
        model = make_random_model(rng, 2, "ltr", "discrete")
        obs_set = [make_obs(rng, "discrete", 8)]
        report = baum_welch2(model, obs_set, TrainConfig(max_iterations=1))
        assert not report.converged
        assert report.iterations_run == 1
        assert report.n_utterances == 1

    def test_training_metadata_contents(self):
        rng = np.random.default_rng(343)
        model = make_random_model(rng, 1, "ltr", "gmm")
        report = baum_welch1(model, [make_obs(rng, "gmm", 8)], TrainConfig(max_iterations=2))
        meta = report.training_metadata(seed=7)
        assert meta["iterations"] == 2
        assert meta["converged"] is False
        assert meta["n_utterances"] == 1
        assert meta["seed"] == 7
        assert meta["final_log_likelihood"] == pytest.approx(report.final_log_likelihood)


class TestUpdateEquations:
    def test_order1_discrete_update_matches_enumeration_statistics(self):
        rng = np.random.default_rng(350)
        model = make_random_model(rng, 1, "circular", "discrete")
        obs_set = [make_obs(rng, "discrete", 6) for _ in range(2)]
        floor = 1e-8
        cfg = TrainConfig(max_iterations=1, transition_floor=floor, mixture_weight_floor=1e-6)
        got = baum_welch1(model, obs_set, cfg).model

        xi_sum = np.zeros((model.n_states, model.n_states))
        gamma0 = np.zeros(model.n_states)
        sym_counts = np.zeros((model.n_states, 4))
        for obs in obs_set:
            xi_sum += oracles.enum_pair_posteriors(model, obs).sum(axis=0)
            g = oracles.enum_state_posteriors(model, obs)
            gamma0 += g[0]
            for t, symbol in enumerate(np.asarray(obs)):
                sym_counts[:, symbol] += g[t]

        want_trans = np.zeros_like(model.trans)
        for i in range(model.n_states):
            row = np.where(model.mask.allowed1[i], np.maximum(xi_sum[i], floor), 0.0)
            want_trans[i] = row / row.sum()
        np.testing.assert_allclose(got.trans, want_trans, rtol=1e-8, atol=1e-12)

        want_init = gamma0 / len(obs_set)
        want_init /= want_init.sum()
        np.testing.assert_allclose(got.initial, want_init, rtol=1e-8)

        for s in range(model.n_states):
            vals = np.maximum(sym_counts[s], 1e-6)
            np.testing.assert_allclose(
                got.emissions[s].probs, vals / vals.sum(), rtol=1e-8, atol=1e-12
            )

    def test_order1_single_gaussian_update_matches_enumeration_statistics(self):
        rng = np.random.default_rng(351)
        model = make_random_model(rng, 1, "circular", "gmm", n_mixtures=1)
        obs_set = [make_obs(rng, "gmm", 6) for _ in range(2)]
        cfg = TrainConfig(max_iterations=1, variance_floor=1e-12)
        got = baum_welch1(model, obs_set, cfg).model
        for s in range(model.n_states):
            num_mean = np.zeros(2)
            num_sq = np.zeros(2)
            den = 0.0
            for obs in obs_set:
                g = oracles.enum_state_posteriors(model, obs)[:, s]
                num_mean += g @ obs
                num_sq += g @ (obs**2)
                den += g.sum()
            mean = num_mean / den
            var = num_sq / den - mean**2
            np.testing.assert_allclose(got.emissions[s].means[0], mean, rtol=1e-8)
            np.testing.assert_allclose(got.emissions[s].variances[0], var, rtol=1e-6)

    @pytest.mark.parametrize("topology,emission", [("circular", "gmm"), ("ltr", "gmm"), ("circular", "discrete")])
    def test_order2_update_matches_composite_chain_reference(self, topology, emission):
        rng = np.random.default_rng(352)
        model = make_random_model(rng, 2, topology, emission)
        obs_set = [make_obs(rng, emission, int(rng.integers(4, 8))) for _ in range(2)]
        cfg = TrainConfig(max_iterations=1)
        got = baum_welch2(model, obs_set, cfg)
        want = oracles.em_step2_reference(
            model,
            [np.asarray(o) for o in obs_set],
            variance_floor=cfg.variance_floor,
            weight_floor=cfg.mixture_weight_floor,
            transition_floor=cfg.transition_floor,
        )
        assert got.log_likelihoods[0] == pytest.approx(want["log_likelihood"], rel=1e-10)
        np.testing.assert_allclose(got.model.trans2, want["trans2"], rtol=1e-8, atol=1e-12)
        np.testing.assert_allclose(got.model.trans1, want["trans1"], rtol=1e-8, atol=1e-12)
        np.testing.assert_allclose(got.model.initial, want["initial"], rtol=1e-8, atol=1e-12)
        for s in range(model.n_states):
            if emission == "discrete":
                np.testing.assert_allclose(
                    got.model.emissions[s].probs, want["emissions"][s], rtol=1e-8, atol=1e-12
                )
            else:
                w, mu, var = want["emissions"][s]
                np.testing.assert_allclose(got.model.emissions[s].weights, w, rtol=1e-8, atol=1e-12)
                np.testing.assert_allclose(got.model.emissions[s].means, mu, rtol=1e-7, atol=1e-10)
                np.testing.assert_allclose(got.model.emissions[s].variances, var, rtol=1e-6, atol=1e-10)

    def test_ltr_keeps_pinned_start_state(self):
        rng = np.random.default_rng(353)
        model = make_random_model(rng, 1, "ltr", "gmm")
        report = baum_welch1(model, [make_obs(rng, "gmm", 10)], TrainConfig(max_iterations=3))
        np.testing.assert_array_equal(report.model.initial, model.initial)


class TestFloors:
    def test_transition_floor_respected_on_updated_rows(self):
        rng = np.random.default_rng(360)
        floor = 1e-3
        model = make_random_model(rng, 1, "circular", "gmm")
        obs_set = [make_obs(rng, "gmm", 20) for _ in range(2)]
        report = baum_welch1(model, obs_set, TrainConfig(max_iterations=5, transition_floor=floor))
        trans = report.model.trans
        assert trans[model.mask.allowed1].min() >= floor * 0.9

    def test_variance_floor_scales_with_data_spread(self):
        rng = np.random.default_rng(361)
        scale = 50.0
        obs_set = [scale * make_obs(rng, "gmm", 30) for _ in range(2)]
        variant = VariantSpec(order=1, topology="ltr", n_states=2, n_mixtures=2)
        cfg = TrainConfig(max_iterations=5, variance_floor=1e-4)
        report = train(variant, obs_set, cfg)
        all_frames = np.concatenate([np.asarray(o) for o in obs_set])
        floor_d = 1e-4 * all_frames.var(axis=0)
        for e in report.model.emissions:
            assert (e.variances >= floor_d[None, :] * 0.999).all()

    def test_mixture_weights_stay_positive(self):
        rng = np.random.default_rng(362)
        obs_set = [make_obs(rng, "gmm", 25) for _ in range(2)]
        variant = VariantSpec(order=1, topology="circular", n_states=3, n_mixtures=3)
        report = train(variant, obs_set, TrainConfig(max_iterations=8))
        for e in report.model.emissions:
            assert e.weights.min() >= 1e-6 * 0.9


class TestSegmentalKmeans:
    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(370)
        obs_set = [make_obs(rng, "gmm", 20) for _ in range(3)]
        a = segmental_kmeans_init(obs_set, 4, 2, seed=9)
        b = segmental_kmeans_init(obs_set, 4, 2, seed=9)
        for ea, eb in zip(a, b):
            np.testing.assert_array_equal(ea.means, eb.means)
            np.testing.assert_array_equal(ea.weights, eb.weights)

    def test_produces_full_mixture_shapes(self):
        rng = np.random.default_rng(371)
        obs_set = [make_obs(rng, "gmm", 15) for _ in range(2)]
        emissions = segmental_kmeans_init(obs_set, 3, 4, seed=0)
        assert len(emissions) == 3
        for e in emissions:
            assert e.weights.shape == (4,)
            assert e.means.shape == (4, 2)
            assert (e.variances > 0).all()
            assert e.weights.sum() == pytest.approx(1.0)

    def test_separated_clusters_are_found(self):
        rng = np.random.default_rng(372)
        lump_a = rng.normal(0.0, 0.1, size=(30, 2))
        lump_b = rng.normal(8.0, 0.1, size=(30, 2))
        frames = np.concatenate([lump_a, lump_b])
        emissions = segmental_kmeans_init([frames], 1, 2, seed=1)
        centers = np.sort(emissions[0].means[:, 0])
        assert centers[0] == pytest.approx(0.0, abs=0.5)
        assert centers[1] == pytest.approx(8.0, abs=0.5)

    def test_too_short_utterance_rejected(self):
        rng = np.random.default_rng(373)
        with pytest.raises(UtteranceTooShortError):
            segmental_kmeans_init([make_obs(rng, "gmm", 3)], 5, 2, seed=0)

    def test_more_mixtures_than_frames_is_padded(self):
        rng = np.random.default_rng(374)
        obs_set = [make_obs(rng, "gmm", 4)]
        emissions = segmental_kmeans_init(obs_set, 2, 8, seed=0)
        for e in emissions:
            assert e.weights.shape == (8,)
            assert np.isfinite(e.means).all()


class TestInitializers:
    def test_circular_inits_are_uniform_on_masks(self):
        m1 = init_circular1(4, ("discrete", 3))
        assert np.allclose(m1.initial, 0.25)
        assert np.allclose(m1.trans[m1.mask.allowed1], 1.0 / 3.0)
        m2 = init_circular2(4, ("discrete", 3))
        assert np.allclose(m2.trans2[m2.mask.allowed2], 1.0 / 3.0)
        assert validate(m1) == [] and validate(m2) == []

    def test_ltr_init_pins_start_and_normalizes_rows(self):
        m = init_ltr(4, 2, ("discrete", 3), order=1)
        assert m.initial[0] == 1.0 and m.initial[1:].sum() == 0.0
        np.testing.assert_allclose(m.trans.sum(axis=1), 1.0)
        m2 = init_ltr(4, 2, ("discrete", 3), order=2)
        sums = m2.trans2.sum(axis=2)
        np.testing.assert_allclose(sums[m2.mask.allowed1], 1.0)
        assert validate(m2) == []


class TestTrainDispatch:
    @pytest.mark.parametrize("label,order,topology", [
        ("ltr1", 1, "ltr"), ("ltr2", 2, "ltr"), ("circ1", 1, "circular"), ("circ2", 2, "circular"),
    ])
    def test_variants_build_matching_models(self, label, order, topology):
        rng = np.random.default_rng(380)
        obs_set = [make_obs(rng, "gmm", 12) for _ in range(2)]
        variant = VariantSpec(order=order, topology=topology, n_states=3, n_mixtures=2)
        assert variant.label == label
        report = train(variant, obs_set, TrainConfig(max_iterations=3))
        assert report.model.order == order
        assert report.model.mask.kind == topology
        assert validate(report.model) == []

    def test_discrete_variant_trains(self):
        rng = np.random.default_rng(381)
        obs_set = [make_obs(rng, "discrete", 10) for _ in range(2)]
        variant = VariantSpec(order=1, topology="circular", n_states=3, n_mixtures=4, emission="discrete")
        report = train(variant, obs_set, TrainConfig(max_iterations=4))
        assert report.model.emissions[0].probs.shape == (4,)
        for a, b in zip(report.log_likelihoods, report.log_likelihoods[1:]):
            assert b - a >= -1e-8

    def test_symmetrize_flag_projects_ring(self):
        rng = np.random.default_rng(382)
        obs_set = [make_obs(rng, "gmm", 12) for _ in range(2)]
        variant = VariantSpec(order=1, topology="circular", n_states=3, n_mixtures=1)
        plain = train(variant, obs_set, TrainConfig(max_iterations=3, seed=1))
        proj = train(variant, obs_set, TrainConfig(max_iterations=3, seed=1, symmetrize=True))
        avg = (plain.model.trans + plain.model.trans.T) / 2
        expect = np.where(plain.model.mask.allowed1, avg, 0.0)
        expect /= expect.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(proj.model.trans, expect, rtol=1e-10)

    def test_order2_rejects_two_frame_utterances(self):
        rng = np.random.default_rng(383)
        obs_set = [make_obs(rng, "gmm", 2)]
        model = make_random_model(rng, 2, "circular", "gmm")
        with pytest.raises(UtteranceTooShortError):
            baum_welch2(model, obs_set, TrainConfig(max_iterations=1))

    def test_bad_variant_specs_rejected(self):
        with pytest.raises(ValueError):
            VariantSpec(order=3)
        with pytest.raises(ValueError):
            VariantSpec(topology="grid")
        with pytest.raises(ValueError):
            VariantSpec(n_states=0)
        with pytest.raises(ValueError):
            VariantSpec(emission="histogram")

    def test_bad_train_configs_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(max_iterations=0)
        with pytest.raises(ValueError):
            TrainConfig(rel_tol=0.0)
        with pytest.raises(ValueError):
            TrainConfig(variance_floor=-1.0)
