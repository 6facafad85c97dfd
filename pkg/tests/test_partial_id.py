"""Sharp Var(B1) bounds over PSD completions, against a dense grid oracle."""

import numpy as np
import pytest

from rcreg import (
    Classification,
    DimensionError,
    DomainError,
    InfeasibleError,
    PartialIdBlocks,
    assemble_covariance,
    classify_randomness,
    min_eigenvalue,
    partial_id_bounds,
)


def grid_scan(blocks, tol=1e-9, step=1e-4, hi=None):
    """Feasible-interval endpoints by brute-force scan of the smallest eigenvalue."""
    v0 = blocks.cov_b0_b2[0, 0]
    if hi is None:
        hi = (np.sqrt(max(v0, 0.0)) + np.sqrt(blocks.var_b0_plus_b1)) ** 2 + 2 * step
    s = np.arange(0.0, hi, step)
    base = assemble_covariance(blocks, 0.0)
    mats = np.broadcast_to(base, (s.size, *base.shape)).copy()
    mats[:, 1, 1] = s
    mats[:, 0, 1] -= s / 2.0
    mats[:, 1, 0] -= s / 2.0
    mins = np.linalg.eigvalsh(mats)[:, 0]
    feasible = s[mins >= -tol]
    if feasible.size == 0:
        return None
    return float(feasible[0]), float(feasible[-1])


def random_blocks(rng, p, scale=0.6):
    """Random consistent blocks with O(1) variances."""
    q = p - 1
    A = rng.normal(size=(q, q + 1))
    C = A @ A.T / (q + 1)
    dd = np.sqrt(np.diagonal(C))
    C = scale * C / np.outer(dd, dd)
    s_b1 = rng.uniform(0.0, 1.2) * scale
    cross = rng.uniform(-0.3, 0.3, size=q - 1) * np.sqrt(np.diagonal(C)[1:] * s_b1)
    v01 = C[0, 0] + s_b1 + 2.0 * rng.uniform(-0.8, 0.8) * np.sqrt(C[0, 0] * s_b1)
    return PartialIdBlocks(
        cov_b0_b2=C, cov_b1_b2=cross, var_b0_plus_b1=max(v01, 0.0)
    )


class TestAnalyticCases:
    def test_p2_unit_variances(self):
        blocks = PartialIdBlocks(
            cov_b0_b2=np.array([[1.0]]), cov_b1_b2=np.zeros(0), var_b0_plus_b1=1.0
        )
        b = partial_id_bounds(blocks)
        assert b.lower == 0.0
        assert b.upper == pytest.approx(4.0, abs=1e-6)
        assert b.classification is Classification.INTERVAL
        oracle = grid_scan(blocks, hi=10.0)
        assert b.lower == pytest.approx(oracle[0], abs=2e-4)
        assert b.upper == pytest.approx(oracle[1], abs=2e-4)

    @pytest.mark.parametrize("v0", [0.25, 1.0, 3.7])
    def test_p2_upper_is_four_lambda_min(self, v0):
        blocks = PartialIdBlocks(
            cov_b0_b2=np.array([[v0]]), cov_b1_b2=np.zeros(0), var_b0_plus_b1=v0
        )
        b = partial_id_bounds(blocks)
        assert b.upper == pytest.approx(4.0 * v0, abs=1e-6)

    def test_nonzero_cross_covariance_forces_positive(self):
        blocks = PartialIdBlocks(
            cov_b0_b2=np.eye(2), cov_b1_b2=np.array([0.5]), var_b0_plus_b1=1.0
        )
        b = partial_id_bounds(blocks)
        assert b.lower > 0.0
        assert b.classification is Classification.FORCED_POSITIVE
        # Cov(B1, B2) = 0.5 with unit variances: feasible interval is 2 -/+ sqrt(3)
        assert b.lower == pytest.approx(2.0 - np.sqrt(3.0), abs=1e-6)
        assert b.upper == pytest.approx(2.0 + np.sqrt(3.0), abs=1e-6)

    def test_degenerate_kernel_forces_zero(self):
        blocks = PartialIdBlocks(
            cov_b0_b2=np.array([[1.0, 1.0], [1.0, 1.0]]),
            cov_b1_b2=np.array([0.0]),
            var_b0_plus_b1=1.0,
        )
        b = partial_id_bounds(blocks)
        assert (b.lower, b.upper) == (0.0, 0.0)
        assert b.classification is Classification.FORCED_ZERO

    def test_infeasible_blocks(self):
        blocks = PartialIdBlocks(
            cov_b0_b2=np.eye(2), cov_b1_b2=np.array([10.0]), var_b0_plus_b1=1.0
        )
        with pytest.raises(InfeasibleError):
            partial_id_bounds(blocks)


class TestRandomizedOracle:
    def test_grid_agreement(self):
        rng = np.random.default_rng(2024)
        for trial in range(15):
            blocks = random_blocks(rng, p=2 + trial % 5)
            try:
                b = partial_id_bounds(blocks)
            except InfeasibleError:
                assert grid_scan(blocks) is None
                continue
            oracle = grid_scan(blocks)
            assert oracle is not None
            assert b.lower == pytest.approx(oracle[0], abs=2e-4)
            assert b.upper == pytest.approx(oracle[1], abs=2e-4)

    def test_endpoints_feasible_and_sharp(self):
        rng = np.random.default_rng(7)
        tol = 1e-9
        for trial in range(20):
            blocks = random_blocks(rng, p=2 + trial % 5)
            try:
                b = partial_id_bounds(blocks, tol=tol)
            except InfeasibleError:
                continue
            for s in (b.lower, b.upper):
                assert min_eigenvalue(assemble_covariance(blocks, s)) >= -10 * tol
            if b.classification is not Classification.FORCED_ZERO:
                assert min_eigenvalue(assemble_covariance(blocks, b.upper + 0.01)) < 0


class TestClassification:
    def test_unequal_variances(self):
        blocks = PartialIdBlocks(
            cov_b0_b2=np.array([[1.0]]), cov_b1_b2=np.zeros(0), var_b0_plus_b1=2.0
        )
        assert classify_randomness(blocks) is Classification.FORCED_POSITIVE

    def test_full_rank_equal_variances(self):
        blocks = PartialIdBlocks(
            cov_b0_b2=np.array([[1.0, 0.2], [0.2, 1.0]]),
            cov_b1_b2=np.array([0.0]),
            var_b0_plus_b1=1.0,
        )
        assert classify_randomness(blocks) is Classification.INTERVAL
        assert partial_id_bounds(blocks).upper > 0.0

    def test_degenerate_case(self):
        blocks = PartialIdBlocks(
            cov_b0_b2=np.array([[1.0, -1.0], [-1.0, 1.0]]),
            cov_b1_b2=np.array([0.0]),
            var_b0_plus_b1=1.0,
        )
        assert classify_randomness(blocks) is Classification.FORCED_ZERO


class TestBlockValidation:
    def test_non_psd_rejected(self):
        with pytest.raises(DomainError):
            PartialIdBlocks(
                cov_b0_b2=np.array([[1.0, 2.0], [2.0, 1.0]]),
                cov_b1_b2=np.array([0.0]),
                var_b0_plus_b1=1.0,
            )

    def test_negative_variance_rejected(self):
        with pytest.raises(DomainError):
            PartialIdBlocks(
                cov_b0_b2=np.array([[1.0]]), cov_b1_b2=np.zeros(0), var_b0_plus_b1=-0.1
            )

    def test_cross_length_mismatch(self):
        with pytest.raises(DimensionError):
            PartialIdBlocks(
                cov_b0_b2=np.eye(2), cov_b1_b2=np.zeros(3), var_b0_plus_b1=1.0
            )
