import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmle.fisher import (FisherMatrix, SingularFisherError, WeightVector, bank_fims,
                         combine_fims, fim_quantized, fim_quantized_score,
                         predict_asymptotic_mse)
from qmle.models import PAPER_FAMILY, PAPER_THETA, GammaClaytonFamily, ParameterVector
from qmle.quantize import QuantizerBank


def rel_frobenius(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestFimQuantized:
    @pytest.mark.parametrize("shape,threshold", [(4.0, 15.0), (2.5, 4.0), (6.0, 30.0)])
    def test_single_sensor_bernoulli(self, shape, threshold):
        fam1 = GammaClaytonFamily((4.0,))
        fim = fim_quantized(ParameterVector(1.0, (shape,)), QuantizerBank((threshold,)), fam1)
        # independent oracle: high-precision derivative of P(Y >= t) in the shape
        mpmath.mp.dps = 40
        p_of = lambda a: mpmath.gammainc(a, threshold / 4.0, mpmath.inf, regularized=True)
        p = float(p_of(shape))
        dp = float(mpmath.diff(p_of, shape))
        want = dp ** 2 / (p * (1 - p))
        assert fim.matrix[1, 1] == pytest.approx(want, rel=1e-5)
        # the copula parameter carries no information with one sensor
        assert fim.matrix[0, 0] == 0.0

    def test_step_halving(self, paper_banks):
        for bank in paper_banks:
            a = fim_quantized(PAPER_THETA, bank, PAPER_FAMILY).matrix
            b = fim_quantized(PAPER_THETA, bank, PAPER_FAMILY, rel_step=0.5e-5).matrix
            assert rel_frobenius(a, b) < 1e-4

    def test_paper_banks_positive_definite(self, paper_banks):
        for bank in paper_banks:
            fim = fim_quantized(PAPER_THETA, bank, PAPER_FAMILY)
            assert np.allclose(fim.matrix, fim.matrix.T, atol=1e-10)
            assert np.linalg.eigvalsh(fim.matrix).min() > 0.0

    def test_two_identities_agree(self, paper_banks):
        for bank in paper_banks:
            a = fim_quantized(PAPER_THETA, bank, PAPER_FAMILY).matrix
            b = fim_quantized_score(PAPER_THETA, bank, PAPER_FAMILY).matrix
            assert rel_frobenius(a, b) < 1e-4

    def test_rejects_near_empty_cell(self):
        with pytest.raises(SingularFisherError):
            fim_quantized(PAPER_THETA, QuantizerBank((1e4, 15.0)), PAPER_FAMILY)

    def test_matches_observed_information_of_ideal_counts(self, paper_banks):
        # Hessian of the per-sample expected log-likelihood equals -FIM at the truth
        from qmle.estimate import CellCounts, QuantizedDataset, quantized_loglik
        from qmle.quantize import cell_pmf
        bank = paper_banks[2]
        p = cell_pmf(PAPER_THETA, bank, PAPER_FAMILY)

        def expected_ll(x):
            th = ParameterVector.from_array(x)
            return float(p @ np.log(cell_pmf(th, bank, PAPER_FAMILY)))

        x0, h = PAPER_THETA.as_array(), 1e-3
        hess = np.empty((3, 3))
        for i, j in itertools.product(range(3), repeat=2):
            ei, ej = np.eye(3)[i] * h, np.eye(3)[j] * h
            hess[i, j] = (expected_ll(x0 + ei + ej) - expected_ll(x0 + ei - ej)
                          - expected_ll(x0 - ei + ej) + expected_ll(x0 - ei - ej)) / (4 * h * h)
        fim = fim_quantized(PAPER_THETA, bank, PAPER_FAMILY).matrix
        assert rel_frobenius(-hess, fim) < 1e-4


class TestCombine:
    def test_single_bank_is_plain_inverse(self, paper_banks):
        fim = fim_quantized(PAPER_THETA, paper_banks[1], PAPER_FAMILY)
        pred = combine_fims([fim], WeightVector((1.0,)))
        np.testing.assert_allclose(pred.covariance, np.linalg.inv(fim.matrix), rtol=1e-10)
        assert pred.condition_number >= 1.0

    def test_scalar_combination_values(self):
        with_outlier = combine_fims([FisherMatrix.scalar(x) for x in (3e-3, 3.0, 3.3)], WeightVector.equal(3))
        without = combine_fims([FisherMatrix.scalar(x) for x in (3.0, 3.3)], WeightVector.equal(2))
        assert with_outlier.covariance[0, 0] == pytest.approx(0.4760, abs=5e-5)
        assert without.covariance[0, 0] == pytest.approx(0.3175, abs=5e-5)

    def test_outlier_robustness(self):
        good = (3.0, 3.3)
        outlier = 3.0 / 1e3
        v_all = combine_fims([FisherMatrix.scalar(x) for x in (outlier, *good)], WeightVector.equal(3)).covariance[0, 0]
        v_good = combine_fims([FisherMatrix.scalar(x) for x in good], WeightVector.equal(2)).covariance[0, 0]
        assert v_all / v_good < 1.6
        assert (1.0 / outlier) / v_all > 600

    def test_permutation_bit_identical(self, paper_banks):
        fims = bank_fims(PAPER_THETA, paper_banks, PAPER_FAMILY)
        w = WeightVector((0.1, 0.2, 0.3, 0.4))
        base = combine_fims(fims, w)
        for perm in itertools.permutations(range(4)):
            other = combine_fims([fims[i] for i in perm], WeightVector(tuple(w.omegas[i] for i in perm)))
            assert np.array_equal(base.covariance, other.covariance)

    def test_singular(self):
        with pytest.raises(SingularFisherError):
            combine_fims([FisherMatrix(np.diag([1.0, 0.0]))], WeightVector((1.0,)))
        fam1 = GammaClaytonFamily((4.0,))
        fim = fim_quantized(ParameterVector(1.0, (4.0,)), QuantizerBank((15.0,)), fam1)
        with pytest.raises(SingularFisherError):
            combine_fims([fim], WeightVector((1.0,)))

    @given(seed=st.integers(0, 2 ** 32 - 1), n_banks=st.integers(1, 5), k=st.integers(1, 4))
    def test_combined_covariance_bounded_by_worst_bank(self, seed, n_banks, k):
        rng = np.random.default_rng(seed)
        fims = []
        for _ in range(n_banks):
            a = rng.normal(size=(k, k))
            fims.append(FisherMatrix(a @ a.T + 0.1 * np.eye(k)))
        w = rng.dirichlet(np.ones(n_banks))
        w = WeightVector(tuple(w / w.sum()))
        if abs(sum(w.omegas) - 1.0) > 1e-12:
            return
        cov = combine_fims(fims, w).covariance
        worst = max(np.linalg.eigvalsh(np.linalg.inv(f.matrix)).max() for f in fims)
        assert np.linalg.eigvalsh(cov).max() <= worst + 1e-10
        assert np.linalg.eigvalsh(cov).min() > 0.0

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            WeightVector((0.5, 0.6))
        with pytest.raises(ValueError):
            WeightVector((1.5, -0.5))
        assert WeightVector.from_sizes([10, 30]).omegas == (0.25, 0.75)
        with pytest.raises(ValueError):
            combine_fims([FisherMatrix.scalar(1.0)], WeightVector.equal(2))


class TestPrediction:
    def test_one_over_n(self, paper_banks):
        w = WeightVector.equal(4)
        a = predict_asymptotic_mse(PAPER_THETA, paper_banks, w, PAPER_FAMILY, 400)
        b = predict_asymptotic_mse(PAPER_THETA, paper_banks, w, PAPER_FAMILY, 800)
        np.testing.assert_allclose(b, a / 2, rtol=1e-15)

    def test_definition(self, paper_banks):
        w = WeightVector.equal(4)
        got = predict_asymptotic_mse(PAPER_THETA, paper_banks, w, PAPER_FAMILY, 400)
        cov = combine_fims(bank_fims(PAPER_THETA, paper_banks, PAPER_FAMILY), w).covariance
        assert np.all(np.isfinite(got)) and np.all(got > 0)
        np.testing.assert_array_equal(got, np.diag(cov) / 400)

    def test_rejects_bad_n(self, paper_banks):
        with pytest.raises(ValueError):
            predict_asymptotic_mse(PAPER_THETA, paper_banks, WeightVector.equal(4), PAPER_FAMILY, 0)
