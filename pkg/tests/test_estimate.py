"""Two-stage pipeline: OLS, second-stage design, moment fits, sandwich pieces."""

import itertools

import numpy as np
import pytest

from dgp_helpers import (
    MU1,
    SIGMA1,
    centered_product_covariance,
    draw_dataset,
    gaussian_product_moment_matrices,
    mkl_from_raw_moments,
)
from rcreg import (
    Dataset,
    DimensionError,
    DomainError,
    LassoSolution,
    MomentFit,
    SingularDesignError,
    SingularGramError,
    build_second_stage,
    fit_moments,
    half_dim,
    halfvec_indices,
    min_eigenvalue,
    ols,
    sandwich,
    select_means,
    unvec_half,
    v_transform,
    vec_half,
)


class TestOls:
    def test_interpolation(self):
        rng = np.random.default_rng(0)
        X = np.concatenate([np.ones((50, 1)), rng.normal(size=(50, 3))], axis=1)
        c = np.array([1.0, -2.0, 0.5, 3.0])
        assert np.max(np.abs(ols(X @ c, X) - c)) <= 1e-10

    def test_square_system_exact(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(4, 4)) + np.eye(4)
        Y = rng.normal(size=4)
        assert ols(Y, X) == pytest.approx(np.linalg.solve(X, Y), abs=1e-9)

    def test_matches_qr_oracle(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 5))
        Y = rng.normal(size=300)
        Q, R = np.linalg.qr(X)
        qr_solution = np.linalg.solve(R, Q.T @ Y)
        assert np.max(np.abs(ols(Y, X) - qr_solution)) <= 1e-9

    def test_rank_deficient_rejected(self):
        X = np.ones((10, 2))
        with pytest.raises(SingularDesignError):
            ols(np.arange(10.0), X)


class TestSecondStage:
    def test_perfect_fit_gives_zero_targets(self):
        rng = np.random.default_rng(3)
        X = np.concatenate([np.ones((40, 1)), rng.normal(size=(40, 2))], axis=1)
        mu = np.array([2.0, 1.0, -1.0])
        data = Dataset(X=X, Y=X @ mu)
        stage = build_second_stage(data, mu)
        assert np.max(stage.ysig) <= 1e-20

    def test_single_observation_arithmetic(self):
        # one row x = (1, 2), y = 5, mu = (1, 1): residual 2, squared 4
        X = np.array([[1.0, 2.0], [1.0, 0.0]])
        data = Dataset(X=X, Y=np.array([5.0, 1.0]))
        stage = build_second_stage(data, np.array([1.0, 1.0]))
        assert stage.ysig[0] == pytest.approx(4.0)
        assert np.array_equal(stage.xsig[0], [1.0, 4.0, 4.0])

    def test_quadratic_form_identity_rowwise(self):
        rng = np.random.default_rng(4)
        data = draw_dataset(60, seed=5)
        stage = build_second_stage(data, np.zeros(data.p))
        A = rng.normal(size=(data.p, data.p))
        M = (A + A.T) / 2
        lhs = stage.xsig @ vec_half(M)
        rhs = np.einsum("ij,jk,ik->i", data.X, M, data.X)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))

    def test_mu_length_checked(self):
        data = draw_dataset(30, seed=6)
        with pytest.raises(DimensionError):
            build_second_stage(data, np.zeros(data.p + 1))


class TestFitMoments:
    def test_deterministic_coefficients_select_nothing(self):
        rng = np.random.default_rng(7)
        n = 300
        W = rng.uniform(-1, 1, (n, 3))
        a = np.array([3.0, 1.0, 0.0, -2.0])
        X = np.concatenate([np.ones((n, 1)), W], axis=1)
        data = Dataset(X=X, Y=X @ a)
        fit = fit_moments(data, 1e-6)
        penalized = np.ones(half_dim(data.p), dtype=bool)
        penalized[0] = False
        assert np.array_equal(fit.sigma_hat[penalized], np.zeros(penalized.sum()))
        assert np.max(np.abs(fit.mu_hat - a)) <= 1e-8
        assert fit.psd

    def test_zero_lambda_equals_second_stage_ols(self):
        data = draw_dataset(2500, seed=8)
        fit = fit_moments(data, 0.0)
        stage = build_second_stage(data, fit.mu_hat)
        direct = ols(stage.ysig, stage.xsig)
        assert np.max(np.abs(fit.sigma_hat - direct)) <= 1e-6
        assert np.array_equal(fit.sigma_init, direct)

    def test_reconstruction_consistency(self):
        data = draw_dataset(3000, seed=9)
        fit = fit_moments(data, 2.0)
        assert np.array_equal(vec_half(fit.Sigma_hat), fit.sigma_hat)
        assert fit.psd == (min_eigenvalue(fit.Sigma_hat) >= -1e-9)
        assert fit.lambda_used == 2.0

    def test_short_sample_rejected(self):
        rng = np.random.default_rng(10)
        W = rng.uniform(-1, 1, (8, 3))
        X = np.concatenate([np.ones((8, 1)), W], axis=1)
        data = Dataset(X=X, Y=rng.normal(size=8))
        with pytest.raises(SingularDesignError):
            fit_moments(data, 1.0)  # n = 8 < p(p+1)/2 = 10


class TestSelectMeans:
    def test_noiseless_support_recovery(self):
        rng = np.random.default_rng(11)
        n, p = 200, 6
        X = np.concatenate([np.ones((n, 1)), rng.normal(size=(n, p - 1))], axis=1)
        mu = np.array([4.0, 0.0, -3.0, 0.0, 2.0, 0.0])
        sol = select_means(Dataset(X=X, Y=X @ mu), 1e-4)
        assert np.array_equal(sol.active_set, np.flatnonzero(mu))
        assert np.max(np.abs(sol.beta - mu)) <= 1e-4

    def test_zero_lambda_is_ols(self):
        data = draw_dataset(500, seed=12)
        sol = select_means(data, 0.0)
        assert np.max(np.abs(sol.beta - ols(data.Y, data.X))) <= 1e-7

    def test_study_scale_support_recovery(self):
        """Means (40, 15, 0, -10, 20, 0, ...) at p=10, n=5000: support found."""
        mu10 = np.concatenate([MU1, [20.0], np.zeros(5)])
        cov10 = np.zeros((10, 10))
        cov10[:4, :4] = SIGMA1
        cov10 += 1e-12 * np.eye(10)  # keep the factorization happy
        support = np.flatnonzero(mu10)
        hits = 0
        for i in range(200):
            data = draw_dataset(5000, seed=1_000 + i, mu=mu10, cov=cov10, n_covariates=9)
            sol = select_means(data, 0.2)
            hits += np.array_equal(sol.active_set, support)
        assert hits >= 190  # 95% of 200


class TestSandwich:
    def test_deterministic_coefficients_middle_matrix_vanishes(self):
        rng = np.random.default_rng(13)
        n = 400
        W = rng.uniform(-1, 1, (n, 2))
        X = np.concatenate([np.ones((n, 1)), W], axis=1)
        a = np.array([1.0, 2.0, -1.0])
        data = Dataset(X=X, Y=X @ a)
        fit = fit_moments(data, 1e-8)
        est = sandwich(data, fit)
        assert np.max(np.abs(est.b_hat)) <= 1e-16

    def test_gram_matches_three_point_enumeration(self):
        """Empirical Gram of v(X) against the exact 9-point enumeration, p=3."""
        data = draw_dataset(100_000, seed=14, mu=np.zeros(3), cov=np.eye(3),
                            n_covariates=2, law="three_point")
        fit = fit_moments(data, 0.0)
        est = sandwich(data, fit)
        exact = np.zeros_like(est.c_hat)
        for combo in itertools.product([-1.0, 0.0, 1.0], repeat=2):
            vx = v_transform(np.array([1.0, *combo]))
            exact += np.outer(vx, vx) / 9.0
        rel = np.linalg.norm(est.c_hat - exact) / np.linalg.norm(exact)
        assert rel <= 0.05

    def test_middle_matrix_matches_enumeration_oracle(self):
        """Plug-in middle matrix against the exact heteroscedasticity profile."""
        mu = np.array([2.0, -1.0, 0.5])
        Sg = np.array([[2.0, 0.6, -0.3], [0.6, 1.5, 0.2], [-0.3, 0.2, 1.0]])
        d = half_dim(3)
        pairs = halfvec_indices(3)
        psi = np.zeros((d, d))
        for K, (k, l) in enumerate(pairs):
            for L, (u, v) in enumerate(pairs):
                psi[K, L] = Sg[k, u] * Sg[l, v] + Sg[k, v] * Sg[l, u]
        b_exact = np.zeros((d, d))
        c_exact = np.zeros((d, d))
        for combo in itertools.product([-1.0, 0.0, 1.0], repeat=2):
            vx = v_transform(np.array([1.0, *combo]))
            b_exact += (vx @ psi @ vx) * np.outer(vx, vx) / 9.0
            c_exact += np.outer(vx, vx) / 9.0
        data = draw_dataset(200_000, seed=3, mu=mu, cov=Sg, n_covariates=2,
                            law="three_point")
        fit = fit_moments(data, 0.0)
        est = sandwich(data, fit)
        assert np.linalg.norm(est.b_hat - b_exact) / np.linalg.norm(b_exact) <= 0.10
        assert np.linalg.norm(est.c_hat - c_exact) / np.linalg.norm(c_exact) <= 0.01

    def test_symmetry_and_psd(self):
        data = draw_dataset(4000, seed=15)
        fit = fit_moments(data, 1.0)
        est = sandwich(data, fit)
        assert np.array_equal(est.c_hat, est.c_hat.T)
        assert np.array_equal(est.b_hat, est.b_hat.T)
        assert min_eigenvalue(est.c_hat) >= -1e-9
        assert min_eigenvalue(est.b_hat) >= -1e-9
        assert est.avar_s.shape == (est.active_set.size, est.active_set.size)

    def test_singular_gram_rejected(self):
        # binary covariate makes the w^2 and w columns of v(X) collinear
        rng = np.random.default_rng(16)
        n = 60
        W = rng.integers(0, 2, size=(n, 1)).astype(float)
        X = np.concatenate([np.ones((n, 1)), W], axis=1)
        data = Dataset(X=X, Y=rng.normal(size=n))
        d = half_dim(2)
        beta = np.array([1.0, 0.5, 0.5])
        fake = MomentFit(
            mu_hat=np.zeros(2),
            sigma_hat=beta,
            Sigma_hat=unvec_half(beta, 2),
            psd=True,
            lambda_used=0.0,
            sigma_init=np.ones(d),
            solution=LassoSolution(
                beta=beta, active_set=np.arange(d), kkt_residual=0.0,
                iterations=1, converged=True, lam=0.0,
            ),
        )
        with pytest.raises(SingularGramError):
            sandwich(data, fake)


class TestMomentIdentityOracle:
    def test_gaussian_law(self):
        kappa1, kappa2, K1, K2 = gaussian_product_moment_matrices(MU1, SIGMA1)
        for (k, l) in halfvec_indices(4):
            via_identity = mkl_from_raw_moments(MU1, kappa1, kappa2, K1, K2, k, l)
            direct = centered_product_covariance(MU1, SIGMA1, k, l)
            assert np.max(np.abs(via_identity - direct)) <= 1e-9 * max(
                1.0, np.max(np.abs(direct))
            )

    def test_discrete_law(self):
        """The raw-moment combination equals the centered definition exactly."""
        rng = np.random.default_rng(17)
        atoms = rng.integers(-3, 4, size=(5, 3)).astype(float)
        probs = rng.dirichlet(np.ones(5))
        mu = probs @ atoms
        p = 3

        def ev(f):
            return sum(pr * f(a) for a, pr in zip(atoms, probs))

        kappa1 = np.array(
            [[ev(lambda a: a[k] * a[u]) - mu[k] * mu[u] for u in range(p)] for k in range(p)]
        )
        pairs = halfvec_indices(p)
        kappa2 = {
            (k, l): np.array(
                [ev(lambda a: a[k] * a[l] * a[u]) - ev(lambda a: a[k] * a[l]) * mu[u] for u in range(p)]
            )
            for (k, l) in pairs
        }
        K1 = {
            k: np.array(
                [
                    [ev(lambda a: a[k] * a[u] * a[v]) - mu[k] * ev(lambda a: a[u] * a[v]) for v in range(p)]
                    for u in range(p)
                ]
            )
            for k in range(p)
        }
        K2 = {
            (k, l): np.array(
                [
                    [
                        ev(lambda a: a[k] * a[l] * a[u] * a[v])
                        - ev(lambda a: a[k] * a[l]) * ev(lambda a: a[u] * a[v])
                        for v in range(p)
                    ]
                    for u in range(p)
                ]
            )
            for (k, l) in pairs
        }
        for (k, l) in pairs:
            direct = np.array(
                [
                    [
                        ev(
                            lambda a: (a[k] - mu[k]) * (a[l] - mu[l]) * (a[u] - mu[u]) * (a[v] - mu[v])
                        )
                        - ev(lambda a: (a[k] - mu[k]) * (a[l] - mu[l]))
                        * ev(lambda a: (a[u] - mu[u]) * (a[v] - mu[v]))
                        for v in range(p)
                    ]
                    for u in range(p)
                ]
            )
            via_identity = mkl_from_raw_moments(mu, kappa1, kappa2, K1, K2, k, l)
            assert np.max(np.abs(via_identity - direct)) <= 1e-9 * max(
                1.0, np.max(np.abs(direct))
            )


class TestDatasetValidation:
    def test_intercept_column_required(self):
        with pytest.raises(DomainError):
            Dataset(X=np.array([[2.0, 1.0], [1.0, 0.0]]), Y=np.zeros(2))

    def test_n_at_least_p(self):
        with pytest.raises(DimensionError):
            Dataset(X=np.ones((1, 2)), Y=np.zeros(1))

    def test_from_covariates(self):
        d = Dataset.from_covariates(np.array([[1.0], [2.0], [0.5]]), np.zeros(3))
        assert np.array_equal(d.X[:, 0], np.ones(3))
        assert (d.n, d.p) == (3, 2)
