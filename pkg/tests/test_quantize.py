import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmle.models import (PAPER_FAMILY, PAPER_THETA, ClaytonCopula, GammaClaytonFamily,
                         GammaMarginal, ParameterVector, gamma_quantile)
from qmle.quantize import (PmfConsistencyError, QuantizerBank, ThresholdQuantizer, _checked,
                           all_words, cell_pmf, cell_region_volume_check, index_word,
                           quantize_point, word_index)
from qmle.simulate import SamplerConfig, sample_joint


def median_bank(theta):
    """Bank whose thresholds sit at the marginal medians, so u1 = u2 = 0.5."""
    return QuantizerBank(tuple(gamma_quantile(0.5, GammaMarginal(a, 4.0)) for a in theta.marginal_shapes))


class TestQuantizePoint:
    def test_examples(self):
        assert quantize_point((30.0, 5.0), QuantizerBank((25.0, 25.0))) == (1, 0)
        assert quantize_point((25.0, 25.0), QuantizerBank((25.0, 25.0))) == (1, 1)
        assert quantize_point((9.99, 10.01), QuantizerBank((10.0, 10.0))) == (0, 1)

    def test_array_form_matches(self, rng):
        bank = QuantizerBank((15.0, 20.0))
        ys = rng.uniform(0, 40, size=(200, 2))
        idx = bank.quantize_array(ys)
        assert [word_index(quantize_point(y, bank)) for y in ys] == idx.tolist()

    @given(t=st.floats(-100, 100), a=st.floats(-1e3, 1e3), b=st.floats(-1e3, 1e3))
    def test_quantizer_monotone(self, t, a, b):
        q = ThresholdQuantizer(t)
        lo, hi = sorted((a, b))
        assert q(lo) <= q(hi) and q(lo) in (0, 1)

    def test_word_indexing(self):
        words = all_words(3)
        assert len(set(words)) == 8
        assert [word_index(w) for w in words] == list(range(8))
        assert all(index_word(i, 3) == w for i, w in enumerate(words))
        assert word_index((1, 0)) == 2


class TestCellPmf:
    def test_independence_quarters(self):
        theta = ParameterVector(1e-9, (4.0, 5.0))
        np.testing.assert_allclose(cell_pmf(theta, median_bank(theta), PAPER_FAMILY), 0.25, atol=1e-9)

    def test_hand_values_theta0_one(self):
        theta = ParameterVector(1.0, (4.0, 5.0))
        np.testing.assert_allclose(cell_pmf(theta, median_bank(theta), PAPER_FAMILY),
                                   [1 / 3, 1 / 6, 1 / 6, 1 / 3], atol=1e-9)

    def test_matches_sampler_frequencies(self):
        ys = sample_joint(1_000_000, SamplerConfig(PAPER_THETA, seed=99))
        bank = QuantizerBank((15.0, 15.0))
        p = cell_pmf(PAPER_THETA, bank, PAPER_FAMILY)
        freq = np.bincount(bank.quantize_array(ys), minlength=4) / len(ys)
        sigma = np.sqrt(p * (1 - p) / len(ys))
        assert np.all(np.abs(freq - p) < 3 * sigma)

    def test_paper_banks_have_no_empty_cell(self, paper_banks):
        for bank in paper_banks:
            assert cell_pmf(PAPER_THETA, bank, PAPER_FAMILY).min() > 0.0

    @given(t0=st.floats(0.2, 5.0), t1=st.floats(1.0, 8.0), t2=st.floats(1.0, 8.0),
           c1=st.floats(1.0, 60.0), c2=st.floats(1.0, 60.0))
    def test_sums_to_one(self, t0, t1, t2, c1, c2):
        p = cell_pmf(ParameterVector(t0, (t1, t2)), QuantizerBank((c1, c2)), PAPER_FAMILY)
        assert abs(p.sum() - 1.0) <= 1e-10
        assert np.all((p >= 0) & (p <= 1))

    @given(t_lo=st.floats(1.0, 50.0), t_hi=st.floats(1.0, 50.0))
    def test_raising_threshold_raises_zero_bit_mass(self, t_lo, t_hi):
        t_lo, t_hi = sorted((t_lo, t_hi))
        a = cell_pmf(PAPER_THETA, QuantizerBank((t_lo, 15.0)), PAPER_FAMILY)
        b = cell_pmf(PAPER_THETA, QuantizerBank((t_hi, 15.0)), PAPER_FAMILY)
        assert a[0] + a[1] <= b[0] + b[1] + 1e-15

    def test_inclusion_exclusion_three_sensors(self):
        fam3 = GammaClaytonFamily((4.0, 4.0, 4.0))
        theta3 = ParameterVector(1.0759, (4.0, 5.0, 3.0))
        bank3 = QuantizerBank((15.0, 20.0, 10.0))
        p3 = cell_pmf(theta3, bank3, fam3)
        assert p3.sum() == pytest.approx(1.0, abs=1e-12)
        # bivariate margins of a trivariate Clayton copula are bivariate Clayton
        p2 = cell_pmf(PAPER_THETA, QuantizerBank((15.0, 20.0)), PAPER_FAMILY)
        np.testing.assert_allclose(p3.reshape(4, 2).sum(axis=1), p2, atol=1e-12)
        ys = sample_joint(400_000, SamplerConfig(theta3, 5, fam3))
        freq = np.bincount(bank3.quantize_array(ys), minlength=8) / len(ys)
        sigma = np.sqrt(p3 * (1 - p3) / len(ys))
        assert np.all(np.abs(freq - p3) < 4 * sigma)

    def test_single_sensor(self):
        fam1 = GammaClaytonFamily((4.0,))
        p = cell_pmf(ParameterVector(1.0, (4.0,)), QuantizerBank((15.0,)), fam1)
        u = GammaMarginal(4.0).cdf(15.0)
        np.testing.assert_allclose(p, [u, 1 - u])

    def test_explicit_corner_formula(self):
        bank = QuantizerBank((20.0, 10.0))
        model = PAPER_FAMILY.at(PAPER_THETA)
        u1, u2 = model.marginals[0].cdf(20.0), model.marginals[1].cdf(10.0)
        c = model.copula.cdf((u1, u2))
        np.testing.assert_allclose(cell_pmf(PAPER_THETA, bank, PAPER_FAMILY),
                                   [c, u1 - c, u2 - c, 1 - u1 - u2 + c], rtol=0, atol=0)

    def test_consistency_checks(self):
        assert _checked([0.5, 0.5 + 5e-13, -5e-13, 0.0]) == pytest.approx([0.5, 0.5, 0.0, 0.0])
        with pytest.raises(PmfConsistencyError):
            _checked([0.6, 0.4 + 1e-9, -1e-9, 0.0])
        with pytest.raises(PmfConsistencyError):
            _checked([0.6, 0.6, 0.0, 0.0])

    def test_sensor_mismatch(self):
        with pytest.raises(ValueError):
            cell_pmf(PAPER_THETA, QuantizerBank((1.0, 2.0, 3.0)), PAPER_FAMILY)


class TestVolumeCheck:
    def test_paper_theta(self):
        assert cell_region_volume_check(PAPER_THETA, QuantizerBank((20.0, 20.0)), PAPER_FAMILY, 400) < 5e-3

    def test_independence(self):
        theta = ParameterVector(1e-9, (4.0, 5.0))
        assert cell_region_volume_check(theta, QuantizerBank((14.0, 22.0)), PAPER_FAMILY, 400) < 1e-3

    def test_theta0_one_medians(self):
        theta = ParameterVector(1.0, (4.0, 5.0))
        assert cell_region_volume_check(theta, median_bank(theta), PAPER_FAMILY, 400) < 1e-3

    def test_needs_two_sensors(self):
        with pytest.raises(ValueError):
            cell_region_volume_check(ParameterVector(1.0, (4.0,)), QuantizerBank((1.0,)),
                                     GammaClaytonFamily((4.0,)))
