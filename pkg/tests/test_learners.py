import numpy as np
import pytest

from selfrank.errors import DivergenceError, InvalidInputError, NumericalError
from selfrank.learners import (
    FactorPair,
    TrainConfig,
    factorized_objective,
    fit_hs,
    fit_lowrank,
    fit_lowrank_mtl,
    halving_step_search,
    hs_weights,
    lowrank_step,
    lowrank_weights,
    mtl_weights,
)
from selfrank.oracles import ExplicitProblem, explicit_gd, explicit_gd_multitask, nuclear_norm

ONE = np.array([[1.0]])


def random_problem(rng, n_max=40, d_max=8, t_max=6):
    n = int(rng.integers(6, n_max + 1))
    d = int(rng.integers(2, d_max + 1))
    T = int(rng.integers(2, t_max + 1))
    X = rng.standard_normal((n, d))
    Y = rng.standard_normal((n, T))
    return X, Y


class TestTrainConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lam": -0.1, "rank": 1, "step": 0.1, "max_iters": 1},
            {"lam": 0.1, "rank": 0, "step": 0.1, "max_iters": 1},
            {"lam": 0.1, "rank": 1, "step": -0.1, "max_iters": 1},
            {"lam": 0.1, "rank": 1, "step": 0.1, "max_iters": 0},
            {"lam": 0.1, "rank": 1, "step": 0.1, "max_iters": 1, "tol": -1e-3},
        ],
    )
    def test_invalid_configs_rejected(self, kwargs):
        with pytest.raises(InvalidInputError):
            TrainConfig(**kwargs)


class TestFitHs:
    def test_scalar_closed_form(self):
        model = fit_hs(ONE, 1.0)
        np.testing.assert_allclose(hs_weights(model, np.array([1.0])), [0.5])

    def test_large_lambda_shrinks_to_zero(self):
        model = fit_hs(np.eye(3), 1e12)
        alpha = hs_weights(model, np.ones(3))
        assert np.all(np.abs(alpha) < 1e-11)

    def test_identity_kernel_halves_basis_vector(self):
        model = fit_hs(np.eye(2), 0.5)
        np.testing.assert_allclose(hs_weights(model, np.array([1.0, 0.0])), [0.5, 0.0])

    def test_zero_rhs_and_linearity(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 3))
        model = fit_hs(X @ X.T, 0.3)
        np.testing.assert_array_equal(hs_weights(model, np.zeros(6)), np.zeros(6))
        v = rng.standard_normal(6)
        np.testing.assert_allclose(hs_weights(model, 3.0 * v), 3.0 * hs_weights(model, v))

    def test_matches_dense_direct_solve(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((5, 5))
        K = A @ A.T
        lam = 0.2
        model = fit_hs(K, lam)
        v = rng.standard_normal(5)
        expected = np.linalg.solve(K + 5 * lam * np.eye(5), v)
        np.testing.assert_allclose(hs_weights(model, v), expected, rtol=1e-10)

    def test_normal_equation_residual_bound(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(3, 30))
            X = rng.standard_normal((n, 4))
            K = X @ X.T
            lam = float(rng.uniform(1e-3, 1.0))
            model = fit_hs(K, lam)
            v = rng.standard_normal(n)
            alpha = hs_weights(model, v)
            resid = np.linalg.norm((K + n * lam * np.eye(n)) @ alpha - v)
            assert resid <= 1e-10 * np.linalg.norm(v)

    def test_lambda_must_be_positive(self):
        with pytest.raises(InvalidInputError):
            fit_hs(np.eye(2), 0.0)

    def test_indefinite_matrix_fails_with_numerical_error(self):
        with pytest.raises(NumericalError):
            fit_hs(-10.0 * np.eye(2), 1e-6)

    def test_length_mismatch(self):
        model = fit_hs(np.eye(3), 1.0)
        with pytest.raises(InvalidInputError):
            hs_weights(model, np.ones(4))


class TestLowrankStep:
    def test_hand_example(self):
        M1, N1 = lowrank_step(np.array([[2.0]]), ONE, ONE, ONE, 0.0, 0.1)
        assert M1[0, 0] == pytest.approx(1.9)
        assert N1[0, 0] == pytest.approx(0.8)

    def test_zero_step_is_identity(self):
        rng = np.random.default_rng(3)
        M, N = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
        K = np.eye(4)
        M2, N2 = lowrank_step(M, N, K, K, 0.7, 0.0)
        np.testing.assert_array_equal(M2, M)
        np.testing.assert_array_equal(N2, N)

    def test_zero_factors_are_fixed_point(self):
        Z = np.zeros((3, 2))
        K = np.eye(3)
        M2, N2 = lowrank_step(Z, Z, K, K, 1.0, 1.0)
        np.testing.assert_array_equal(M2, Z)
        np.testing.assert_array_equal(N2, Z)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            lowrank_step(np.ones((3, 2)), np.ones((4, 2)), np.eye(3), np.eye(3), 0.1, 0.1)


class TestFactorizedObjective:
    def test_zero_factors_give_output_trace(self):
        rng = np.random.default_rng(4)
        Y = rng.standard_normal((5, 3))
        KY = Y @ Y.T
        Z = np.zeros((5, 2))
        assert factorized_objective(Z, Z, np.eye(5), KY, 0.0) == pytest.approx(np.trace(KY))

    def test_scalar_example(self):
        assert factorized_objective(np.array([[2.0]]), ONE, ONE, ONE, 0.0) == pytest.approx(1.0)

    def test_exact_interpolation_gives_zero(self):
        # K_X M N^T acts as the identity on the span of K_Y
        K_X = 2.0 * ONE
        M, N = np.array([[1.0]]), np.array([[0.5]])
        assert factorized_objective(M, N, K_X, ONE, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_nonnegative_on_random_inputs(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            X, Y = random_problem(rng, n_max=15)
            M = rng.standard_normal((X.shape[0], 2))
            N = rng.standard_normal((X.shape[0], 2))
            obj = factorized_objective(M, N, X @ X.T, Y @ Y.T, 0.1)
            assert obj >= 0.0


class TestFitLowrank:
    def test_stationary_point_stays_fixed(self):
        cfg = TrainConfig(lam=0.0, rank=1, step=0.3, max_iters=5, tol=0.0)
        fp = fit_lowrank(ONE, ONE, cfg, init=(ONE, ONE))
        np.testing.assert_allclose(fp.M, ONE)
        np.testing.assert_allclose(fp.N, ONE)

    def test_one_step_hand_example(self):
        cfg = TrainConfig(lam=0.0, rank=1, step=0.1, max_iters=1, tol=0.0)
        fp = fit_lowrank(ONE, ONE, cfg, init=(np.array([[2.0]]), ONE))
        assert fp.M[0, 0] == pytest.approx(1.9)
        assert fp.N[0, 0] == pytest.approx(0.8)

    def test_zero_output_gram_reduces_to_shrinkage(self):
        rng = np.random.default_rng(6)
        n, r = 5, 2
        K = np.eye(n)
        KY = np.zeros((n, n))
        M0 = rng.standard_normal((n, r))
        N0 = rng.standard_normal((n, r))
        lam, step, iters = 0.5, 0.1, 7
        cfg = TrainConfig(lam=lam, rank=r, step=step, max_iters=iters, tol=0.0)
        fp = fit_lowrank(K, KY, cfg, init=(M0, N0))
        np.testing.assert_allclose(fp.M, (1 - lam * step) ** iters * M0, rtol=1e-12)
        assert np.all(np.diff(fp.objective_trace) <= 1e-12)

    def test_trace_length_matches_iters_run(self):
        rng = np.random.default_rng(7)
        X, Y = random_problem(rng, n_max=12)
        cfg = TrainConfig(lam=0.1, rank=2, step=1e-3, max_iters=50, tol=0.0)
        fp = fit_lowrank(X @ X.T, Y @ Y.T, cfg)
        assert len(fp.objective_trace) == fp.iters_run + 1
        assert fp.iters_run == 50

    def test_tolerance_stops_early(self):
        cfg = TrainConfig(lam=0.0, rank=1, step=0.3, max_iters=500, tol=1e-9)
        fp = fit_lowrank(ONE, ONE, cfg, init=(ONE, ONE))  # fixed point: zero change
        assert fp.iters_run == 1

    def test_divergence_error_names_iterate(self):
        rng = np.random.default_rng(8)
        X, Y = random_problem(rng, n_max=20)
        cfg = TrainConfig(lam=0.1, rank=2, step=50.0, max_iters=500, tol=0.0)
        with pytest.raises(DivergenceError) as err:
            fit_lowrank(X @ X.T, Y @ Y.T, cfg)
        assert err.value.iterate >= 1

    def test_shape_mismatch(self):
        cfg = TrainConfig(lam=0.1, rank=1, step=0.1, max_iters=1)
        with pytest.raises(InvalidInputError):
            fit_lowrank(np.eye(3), np.eye(4), cfg)

    def test_monotone_descent_with_halving_step(self):
        rng = np.random.default_rng(9)
        for _ in range(3):
            X, Y = random_problem(rng)
            K, KY = X @ X.T, Y @ Y.T
            cfg = TrainConfig(lam=0.2, rank=3, step=1.0, max_iters=150, seed=0, tol=0.0)
            step = halving_step_search(K, KY, cfg, probe_iters=None)
            fp = fit_lowrank(K, KY, TrainConfig(lam=0.2, rank=3, step=step, max_iters=150, seed=0, tol=0.0))
            assert np.all(np.diff(fp.objective_trace) <= 0)


class TestLowrankWeights:
    def test_zero_vector(self):
        fp = FactorPair(M=np.ones((4, 2)), N=np.ones((4, 2)), iters_run=0)
        np.testing.assert_array_equal(lowrank_weights(fp, np.zeros(4)), np.zeros(4))

    def test_rank_one_structure(self):
        m = np.array([[1.0], [2.0]])
        u = np.array([[3.0], [4.0]])
        fp = FactorPair(M=m, N=u, iters_run=0)
        v = np.array([1.0, 1.0])
        np.testing.assert_allclose(lowrank_weights(fp, v), u[:, 0] * (m[:, 0] @ v))

    def test_associativity_against_one_shot_product(self):
        rng = np.random.default_rng(10)
        M, N = rng.standard_normal((7, 3)), rng.standard_normal((7, 3))
        v = rng.standard_normal(7)
        fp = FactorPair(M=M, N=N, iters_run=0)
        np.testing.assert_allclose(lowrank_weights(fp, v), (N @ M.T) @ v, rtol=1e-12)

    def test_length_mismatch(self):
        fp = FactorPair(M=np.ones((4, 2)), N=np.ones((4, 2)), iters_run=0)
        with pytest.raises(InvalidInputError):
            lowrank_weights(fp, np.zeros(5))


class TestLossTrickEquivalence:
    """The kernel iterates must represent the explicit factors at every step."""

    def test_factor_and_weight_equivalence(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            X, Y = random_problem(rng)
            n = X.shape[0]
            r = int(rng.integers(1, 5))
            K, KY = X @ X.T, Y @ Y.T
            M0 = rng.standard_normal((n, r)) / np.sqrt(n * r)
            N0 = rng.standard_normal((n, r)) / np.sqrt(n * r)
            lam = float(rng.uniform(0.05, 0.5))
            base = TrainConfig(lam=lam, rank=r, step=1.0, max_iters=100, tol=0.0)
            step = halving_step_search(K, KY, base, probe_iters=None, init=(M0, N0))
            cfg = TrainConfig(lam=lam, rank=r, step=step, max_iters=100, tol=0.0)
            fp = fit_lowrank(K, KY, cfg, init=(M0, N0))
            traj = explicit_gd(ExplicitProblem(X, Y), X.T @ M0, Y.T @ N0, lam, step, 100)
            for k in (1, 50, 100):
                A_k, B_k = traj[k]
                partial = fit_lowrank(
                    K, KY, TrainConfig(lam=lam, rank=r, step=step, max_iters=k, tol=0.0),
                    init=(M0, N0),
                )
                assert np.linalg.norm(A_k - X.T @ partial.M) <= 1e-8 * max(np.linalg.norm(A_k), 1e-12)
                assert np.linalg.norm(B_k - Y.T @ partial.N) <= 1e-8 * max(np.linalg.norm(B_k), 1e-12)
            # weights reproduce the explicit predictor
            x = rng.standard_normal(X.shape[1])
            alpha = lowrank_weights(fp, X @ x)
            lhs = alpha @ Y
            rhs = x @ traj[-1][0] @ traj[-1][1].T
            scale = max(np.linalg.norm(rhs), 1e-12)
            assert np.linalg.norm(lhs - rhs) <= 1e-8 * scale

    def test_gram_balance_at_stationarity(self):
        rng = np.random.default_rng(12)
        X = rng.standard_normal((12, 4))
        Y = rng.standard_normal((12, 4))
        K, KY = X @ X.T, Y @ Y.T
        base = TrainConfig(lam=0.5, rank=2, step=1.0, max_iters=400, seed=1, tol=0.0)
        step = halving_step_search(K, KY, base, probe_iters=None)
        fp = fit_lowrank(K, KY, TrainConfig(lam=0.5, rank=2, step=step, max_iters=200000, seed=1, tol=1e-10))
        gm = fp.M.T @ K @ fp.M
        gn = fp.N.T @ KY @ fp.N
        assert np.linalg.norm(gm - gn) <= 1e-3 * (np.linalg.norm(gm) + 1.0)

    def test_half_penalty_dominates_nuclear_norm(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            X, Y = random_problem(rng)
            r = int(rng.integers(1, 4))
            M = rng.standard_normal((X.shape[0], r))
            N = rng.standard_normal((X.shape[0], r))
            A, B = X.T @ M, Y.T @ N
            half_pen = 0.5 * (np.trace(M.T @ X @ X.T @ M) + np.trace(N.T @ Y @ Y.T @ N))
            assert nuclear_norm(B @ A.T) <= half_pen + 1e-10 * max(half_pen, 1.0)


class TestFitLowrankMtl:
    def test_t1_reduction_matches_single_problem(self):
        rng = np.random.default_rng(14)
        n, d, T_out, r = 12, 4, 3, 2
        X = rng.standard_normal((n, d))
        Y = rng.standard_normal((n, T_out))
        K, KY = X @ X.T, Y @ Y.T
        nu, lam = 0.02, 0.5
        ms = fit_lowrank_mtl([K], [KY], TrainConfig(lam=lam, rank=r, step=nu, max_iters=50, seed=3, tol=0.0))
        fp = fit_lowrank(K, KY, TrainConfig(lam=lam * n, rank=r, step=nu / n, max_iters=50, seed=3, tol=0.0))
        assert np.linalg.norm(ms.M - fp.M) <= 1e-8 * np.linalg.norm(fp.M)
        assert np.linalg.norm(ms.N_per_task[0] - fp.N) <= 1e-8 * np.linalg.norm(fp.N)

    def test_matches_explicit_masked_gradient_oracle(self):
        rng = np.random.default_rng(15)
        sizes = [5, 8, 3, 6]
        d, r = 4, 2
        Xb = [rng.standard_normal((m, d)) for m in sizes]
        Yb = [rng.standard_normal((m, p)) for m, p in zip(sizes, [2, 1, 3, 1])]
        Xstack = np.vstack(Xb)
        blocks = [Xt @ Xstack.T for Xt in Xb]
        grams = [Yt @ Yt.T for Yt in Yb]
        cfg = TrainConfig(lam=0.2, rank=r, step=0.01, max_iters=60, seed=5, tol=0.0)
        ms = fit_lowrank_mtl(blocks, grams, cfg)
        scale = 1.0 / np.sqrt(sum(sizes) * r)
        rng2 = np.random.default_rng(5)
        M0 = scale * rng2.standard_normal((sum(sizes), r))
        N0s = [scale * rng2.standard_normal((m, r)) for m in sizes]
        traj = explicit_gd_multitask(
            Xb, Yb, Xstack.T @ M0, [Yt.T @ N0 for Yt, N0 in zip(Yb, N0s)], 0.2, 0.01, 60
        )
        A_k, B_ks = traj[-1]
        assert np.linalg.norm(A_k - Xstack.T @ ms.M) <= 1e-10 * np.linalg.norm(A_k)
        for t in range(4):
            ref = np.linalg.norm(B_ks[t])
            assert np.linalg.norm(B_ks[t] - Yb[t].T @ ms.N_per_task[t]) <= 1e-10 * max(ref, 1e-12)

    def test_zero_output_grams_shrink(self):
        rng = np.random.default_rng(16)
        sizes = [4, 5]
        d = 3
        Xb = [rng.standard_normal((m, d)) for m in sizes]
        Xstack = np.vstack(Xb)
        blocks = [Xt @ Xstack.T for Xt in Xb]
        grams = [np.zeros((m, m)) for m in sizes]
        lam, nu = 0.5, 0.1
        cfg = TrainConfig(lam=lam, rank=2, step=nu, max_iters=4, seed=6, tol=0.0)
        ms = fit_lowrank_mtl(blocks, grams, cfg)
        rng2 = np.random.default_rng(6)
        scale = 1.0 / np.sqrt(sum(sizes) * 2)
        M0 = scale * rng2.standard_normal((sum(sizes), 2))
        np.testing.assert_allclose(ms.M, (1 - lam * nu) ** 4 * M0, rtol=1e-12)

    def test_zero_step_keeps_factors(self):
        rng = np.random.default_rng(17)
        X = rng.standard_normal((6, 3))
        Y = rng.standard_normal((6, 2))
        cfg = TrainConfig(lam=0.1, rank=2, step=0.0, max_iters=3, seed=7, tol=0.0)
        ms = fit_lowrank_mtl([X @ X.T], [Y @ Y.T], cfg)
        rng2 = np.random.default_rng(7)
        scale = 1.0 / np.sqrt(6 * 2)
        M0 = scale * rng2.standard_normal((6, 2))
        np.testing.assert_array_equal(ms.M, M0)

    def test_block_shape_validation(self):
        with pytest.raises(InvalidInputError):
            fit_lowrank_mtl([np.ones((3, 5))], [np.eye(3)], TrainConfig(lam=0.1, rank=1, step=0.1, max_iters=1))


class TestMtlWeights:
    def _fitted(self, rng):
        sizes = [4, 6]
        Xb = [rng.standard_normal((m, 3)) for m in sizes]
        Yb = [rng.standard_normal((m, 1)) for m in sizes]
        Xstack = np.vstack(Xb)
        blocks = [Xt @ Xstack.T for Xt in Xb]
        grams = [Yt @ Yt.T for Yt in Yb]
        cfg = TrainConfig(lam=0.2, rank=2, step=0.01, max_iters=10, seed=8, tol=0.0)
        return fit_lowrank_mtl(blocks, grams, cfg), Xstack

    def test_zero_vector_gives_zero_weights(self):
        rng = np.random.default_rng(18)
        ms, Xstack = self._fitted(rng)
        for alpha in mtl_weights(ms, np.zeros(Xstack.shape[0])):
            np.testing.assert_array_equal(alpha, np.zeros_like(alpha))

    def test_scaling_is_linear(self):
        rng = np.random.default_rng(19)
        ms, Xstack = self._fitted(rng)
        v = rng.standard_normal(Xstack.shape[0])
        for a1, a2 in zip(mtl_weights(ms, v), mtl_weights(ms, 2.5 * v)):
            np.testing.assert_allclose(a2, 2.5 * a1, rtol=1e-12)

    def test_t1_weights_match_lowrank_weights(self):
        rng = np.random.default_rng(20)
        n, r = 10, 2
        X = rng.standard_normal((n, 4))
        Y = rng.standard_normal((n, 3))
        K, KY = X @ X.T, Y @ Y.T
        nu, lam = 0.02, 0.5
        ms = fit_lowrank_mtl([K], [KY], TrainConfig(lam=lam, rank=r, step=nu, max_iters=30, seed=9, tol=0.0))
        fp = fit_lowrank(K, KY, TrainConfig(lam=lam * n, rank=r, step=nu / n, max_iters=30, seed=9, tol=0.0))
        v = rng.standard_normal(n)
        np.testing.assert_allclose(mtl_weights(ms, v)[0], lowrank_weights(fp, v), rtol=1e-8)

    def test_length_mismatch(self):
        rng = np.random.default_rng(21)
        ms, Xstack = self._fitted(rng)
        with pytest.raises(InvalidInputError):
            mtl_weights(ms, np.zeros(3))
