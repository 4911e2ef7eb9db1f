"""Tests for the alternating low-rank plus sparse-inverse fit."""

import numpy as np
import pytest

from rescomp import em, linalg, metrics, rca
from rescomp.datagen import SimSpec, gen_confounded
from rescomp.em import EmRcaConfig, EmRcaState
from rescomp.exceptions import InvalidInput
from rescomp.glasso import SparsePrecision, kkt_residual, support_of

from oracles import condition_joint_gaussian, ppca_closed_form, random_spd


def make_state(loadings, precision_entries, noise_var, lam):
    precision = SparsePrecision(entries=precision_entries,
                                support=support_of(precision_entries))
    return EmRcaState(loadings_w=loadings, precision=precision,
                      noise_var=noise_var, lam=lam, bound=np.nan, iteration=0)


def random_model(seed, n=10, p=4, q=2):
    rng = np.random.default_rng(seed)
    loadings = rng.standard_normal((p, q))
    precision = random_spd(rng, p, condition_boost=0.4)
    data = rng.standard_normal((n, p))
    return data, loadings, precision


class TestEStep:
    def test_unit_isotropic_split(self):
        """W = 0, precision = I, noise 1: posterior splits evenly."""
        rng = np.random.default_rng(0)
        data = rng.standard_normal((7, 3))
        moments = em.e_step(data, np.zeros((3, 0)), 1.0, np.eye(3))
        np.testing.assert_allclose(moments.cov_z, 0.5 * np.eye(3), atol=1e-12)
        np.testing.assert_allclose(moments.means, data / 2.0, atol=1e-12)

    def test_confident_prior_pins_latent(self):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((5, 3))
        loadings = rng.standard_normal((3, 2))
        moments = em.e_step(data, loadings, 1.0, 1e6 * np.eye(3))
        assert np.max(np.abs(moments.cov_z)) < 1e-4
        assert np.max(np.abs(moments.means)) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_against_joint_conditioning_oracle(self, seed):
        data, loadings, precision = random_model(seed)
        n, p = data.shape
        moments = em.e_step(data, loadings, 0.7, precision)
        prior_cov = np.linalg.inv(precision)
        obs_cov = loadings @ loadings.T + 0.7 * np.eye(p)
        joint = np.block([[prior_cov, prior_cov],
                          [prior_cov, prior_cov + obs_cov]])
        for i in range(n):
            mean, cov = condition_joint_gaussian(joint, p, data[i])
            np.testing.assert_allclose(moments.means[i], mean, atol=1e-8)
            np.testing.assert_allclose(moments.cov_z, cov, atol=1e-8)

    def test_second_moment_identity(self):
        data, loadings, precision = random_model(9, n=12)
        moments = em.e_step(data, loadings, 0.5, precision)
        rebuilt = moments.cov_z + moments.means.T @ moments.means / data.shape[0]
        assert np.max(np.abs(rebuilt - moments.second_moment_avg)) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInput):
            em.e_step(np.zeros((4, 3)), np.zeros((5, 1)), 1.0, np.eye(3))


class TestMStep:
    def test_identity_moments_unpenalized(self):
        moments = em.PosteriorMoments(cov_z=np.eye(4), means=np.zeros((6, 4)),
                                      second_moment_avg=np.eye(4))
        fit = em.m_step(moments, 0.0)
        np.testing.assert_allclose(fit.entries, np.eye(4), atol=1e-8)

    def test_large_penalty_is_diagonal(self):
        data, loadings, precision = random_model(3, n=30, p=5)
        moments = em.e_step(data, loadings, 1.0, precision)
        lam = float(np.max(np.abs(moments.second_moment_avg))) + 1.0
        fit = em.m_step(moments, lam)
        assert fit.support == frozenset()

    def test_seeded_kkt_certificate(self):
        data, loadings, precision = random_model(4, n=25, p=6)
        moments = em.e_step(data, loadings, 0.9, precision)
        fit = em.m_step(moments, 0.05)
        assert kkt_residual(fit.entries, moments.second_moment_avg, 0.05) < 1e-6


class TestRcaStep:
    def test_isotropic_reduction_to_ppca(self):
        """precision = I and noise s2 make sigma = (1 + s2) I, so the step
        equals the closed-form isotropic fit with that noise level."""
        rng = np.random.default_rng(11)
        data = rng.multivariate_normal(np.zeros(5), random_spd(rng, 5), size=60)
        data -= data.mean(axis=0)
        s2 = 0.4
        got = em.rca_step(data, np.eye(5), s2)
        expected, _ = ppca_closed_form(data.T @ data / 60, 1.0 + s2)
        assert got.shape == expected.shape
        np.testing.assert_allclose(np.abs(got), np.abs(expected), atol=1e-8)

    def test_fully_explained_moment_selects_rank_zero(self):
        """Data whose second moment equals the model covariance exactly has
        no residual components (all generalized eigenvalues are one)."""
        rng = np.random.default_rng(12)
        p = 6
        precision = random_spd(rng, p, condition_boost=0.6)
        s2 = 0.3
        cov = np.linalg.inv(precision) + s2 * np.eye(p)
        # rows engineered so data.T @ data / n == cov with no sampling noise
        root = np.linalg.cholesky(cov)
        n = 20
        data = np.vstack([np.sqrt(n) * root.T, np.zeros((n - p, p))])
        got = em.rca_step(data, precision, s2)
        assert got.shape == (p, 0)

    def test_pure_gmrf_keeps_rank_near_sampling_floor(self):
        """Sampled no-low-rank data: retained eigenvalues can only exceed
        one by finite-sample fluctuation, bounded by the usual
        (1 + sqrt(p/n))^2 edge."""
        rng = np.random.default_rng(12)
        p, n = 6, 5000
        precision = random_spd(rng, p, condition_boost=0.6)
        s2 = 0.3
        cov = np.linalg.inv(precision) + s2 * np.eye(p)
        data = rng.multivariate_normal(np.zeros(p), cov, size=n)
        data -= data.mean(axis=0)
        sigma = np.linalg.inv(precision) + s2 * np.eye(p)
        solution = rca.rca_fit(data.T @ data / n, sigma, role="primal")
        edge = (1.0 + np.sqrt(p / n)) ** 2
        if solution.rank:
            assert np.max(solution.retained_values) < edge + 0.05

    def test_seeded_gep_residual(self):
        inst = gen_confounded(SimSpec(n=60, p=12, q=2, sparsity=0.05, seed=5))
        data = inst.data - inst.data.mean(axis=0)
        n = data.shape[0]
        sigma = np.linalg.inv(inst.truth_precision.entries) + \
            inst.noise_var * np.eye(12)
        solution = rca.rca_fit(data.T @ data / n, sigma, role="primal")
        got = em.rca_step(data, inst.truth_precision, inst.noise_var)
        np.testing.assert_allclose(got, solution.loadings, atol=1e-10)
        decomp = linalg.GepDecomp(vectors=solution.basis,
                                  values=solution.retained_values)
        assert linalg.gep_residual(data.T @ data / n, sigma, decomp) < 1e-8

    def test_max_rank_cap(self):
        inst = gen_confounded(SimSpec(n=80, p=10, q=3, sparsity=0.05, seed=6))
        data = inst.data - inst.data.mean(axis=0)
        capped = em.rca_step(data, inst.truth_precision, inst.noise_var, max_rank=1)
        assert capped.shape[1] <= 1


class TestLowerBound:
    def test_marginal_likelihood_identity(self):
        """At the exact posterior the bound equals the penalized marginal
        log-likelihood."""
        data, loadings, precision = random_model(21, n=8, p=3, q=2)
        lam = 0.3
        state = make_state(loadings, precision, 0.8, lam)
        moments = em.e_step(data, loadings, 0.8, precision)
        bound = em.lower_bound(data, state, moments)
        marginal = em.penalized_marginal_loglik(data, loadings, precision, 0.8, lam)
        assert abs(bound - marginal) < 1e-8 * max(1.0, abs(marginal))

    def test_pinned_origin_value(self):
        """W = 0, precision = I, noise 1, zero data: the bound collapses to
        -(n p / 2) ln(4 pi)."""
        n, p = 4, 3
        data = np.zeros((n, p))
        state = make_state(np.zeros((p, 0)), np.eye(p), 1.0, 0.7)
        moments = em.e_step(data, state.loadings_w, 1.0, np.eye(p))
        bound = em.lower_bound(data, state, moments)
        assert abs(bound - (-(n * p / 2.0) * np.log(4.0 * np.pi))) < 1e-10

    def test_e_step_tightens_bound(self):
        """Fresh moments never score below moments computed under a stale
        precision (same W and precision in the state)."""
        data, loadings, precision = random_model(22, n=9, p=4)
        lam = 0.1
        state = make_state(loadings, precision, 0.6, lam)
        stale = em.e_step(data, loadings, 0.6, np.eye(4))
        fresh = em.e_step(data, loadings, 0.6, precision)
        assert em.lower_bound(data, state, fresh) >= \
            em.lower_bound(data, state, stale) - 1e-10

    @pytest.mark.parametrize("seed", range(10))
    def test_e_m_pair_never_decreases_bound(self, seed):
        """Holding W fixed, E-step + M-step is monotone in the bound."""
        data, loadings, precision0 = random_model(100 + seed, n=14, p=5, q=2)
        lam = 0.08
        noise = 0.7
        state0 = make_state(loadings, precision0, noise, lam)
        moments0 = em.e_step(data, loadings, noise, precision0)
        before = em.lower_bound(data, state0, moments0)
        refit = em.m_step(moments0, lam)
        state1 = make_state(loadings, refit.entries, noise, lam)
        moments1 = em.e_step(data, loadings, noise, refit.entries)
        after = em.lower_bound(data, state1, moments1)
        assert after >= before - 1e-8 * abs(before)


class TestEmRcaFit:
    def test_degenerate_shapes_rejected(self):
        with pytest.raises(InvalidInput):
            em.em_rca_fit(np.zeros((0, 5)), 0.1)
        with pytest.raises(InvalidInput):
            em.em_rca_fit(np.zeros((10, 1)), 0.1)

    def test_noise_var_fixed_and_trace_recorded(self):
        inst = gen_confounded(SimSpec(n=50, p=8, q=1, sparsity=0.08, seed=7))
        data = inst.data - inst.data.mean(axis=0)
        n, p = data.shape
        expected_noise = float(np.trace(data.T @ data / n)) / (2.0 * p)
        state = em.em_rca_fit(data, 0.1, config=EmRcaConfig(max_iter=15))
        assert state.noise_var == expected_noise
        assert len(state.trace) == state.iteration + 1
        assert np.all(np.isfinite(state.trace))
        assert state.bound == state.trace[-1]

    def test_objective_nondecreasing_on_seeded_instance(self):
        inst = gen_confounded(SimSpec(n=60, p=10, q=2, sparsity=0.05, seed=8))
        data = inst.data - inst.data.mean(axis=0)
        state = em.em_rca_fit(data, 0.05, config=EmRcaConfig(max_iter=40))
        assert state.decreases == []
        diffs = np.diff(state.trace)
        assert np.all(diffs >= -1e-6 * np.abs(np.asarray(state.trace)[:-1]))

    def test_gmrf_only_data_recovers_edges_above_chance(self):
        """q = 0 generative data: ranked precision magnitudes beat the
        prevalence baseline."""
        inst = gen_confounded(SimSpec(n=150, p=15, q=0, sparsity=0.06, seed=9))
        data = inst.data - inst.data.mean(axis=0)
        state = em.em_rca_fit(data, 0.001, config=EmRcaConfig(max_iter=60))
        scored = metrics.edges_from_precision(state.precision, mode="support")
        truth = frozenset(inst.truth_precision.support)
        universe = 15 * 14 // 2
        curve = metrics.precision_recall(
            metrics.EdgeScoreSet(scores=scored, truth=truth, universe_size=universe))
        prevalence = len(truth) / universe
        assert curve.area > prevalence

    def test_deterministic(self):
        inst = gen_confounded(SimSpec(n=40, p=6, q=1, sparsity=0.1, seed=10))
        data = inst.data - inst.data.mean(axis=0)
        cfg = EmRcaConfig(max_iter=10)
        a = em.em_rca_fit(data, 0.1, config=cfg)
        b = em.em_rca_fit(data.copy(), 0.1, config=cfg)
        assert np.array_equal(a.loadings_w, b.loadings_w)
        assert np.array_equal(a.precision.entries, b.precision.entries)
        assert a.trace == b.trace
