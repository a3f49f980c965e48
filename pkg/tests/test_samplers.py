import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from perturbed_karlin.rng import RngStream
from perturbed_karlin.samplers import (
    INT_CAP,
    DomainError,
    ParetoParam,
    SibuyaParam,
    frechet_ppf,
    sibuya_from_uniform,
    sibuya_logsf,
    sibuya_pmf,
    sibuya_sample,
    stable_from_uniforms,
    stable_sample,
    zeta_label_law,
)

betas = st.floats(0.05, 0.95)
unit = st.floats(1e-300, 1 - 1e-12, allow_nan=False)


class TestSibuya:
    def test_pmf_oracle(self):
        # beta = 1/2: P(Q=1) = 1/2, P(Q=2) = 1/8, P(Q=3) = 1/16
        np.testing.assert_allclose(sibuya_pmf(0.5, [1, 2, 3]), [0.5, 0.125, 0.0625], rtol=1e-14)
        np.testing.assert_allclose(np.exp(sibuya_logsf(0.5, [0, 1, 2])), [1.0, 0.5, 0.375], rtol=1e-14)

    def test_inversion_oracle(self):
        q = sibuya_from_uniform(0.5, [0.9, 0.5, 0.4, 1e-6])
        assert q.tolist() == [1, 1, 2, 318309886184]

    def test_extreme_uniform_hits_cap(self):
        assert sibuya_from_uniform(0.5, [1e-300])[0] == INT_CAP

    @given(betas, st.integers(1, 200))
    def test_pmf_sums_with_survival(self, beta, k):
        # P(Q > k-1) - P(Q > k) = P(Q = k)
        lhs = np.exp(sibuya_logsf(beta, k - 1)) - np.exp(sibuya_logsf(beta, k))
        assert math.isclose(lhs, sibuya_pmf(beta, k), rel_tol=1e-9, abs_tol=1e-15)

    @given(betas, unit)
    def test_inversion_is_generalized_inverse(self, beta, u):
        q = int(sibuya_from_uniform(beta, [u])[0])
        if q < INT_CAP:
            assert sibuya_logsf(beta, q) <= math.log(u)
            assert q == 1 or sibuya_logsf(beta, q - 1) > math.log(u)

    @given(betas, unit, unit)
    def test_inversion_monotone(self, beta, u, v):
        a, b = sibuya_from_uniform(beta, [min(u, v), max(u, v)])
        assert a >= b

    def test_domain(self):
        with pytest.raises(DomainError):
            SibuyaParam(1.0)
        with pytest.raises(DomainError):
            sibuya_pmf(0.5, 0)

    def test_sample_shapes_and_determinism(self):
        assert isinstance(sibuya_sample(0.5, RngStream(1)), int)
        a = sibuya_sample(SibuyaParam(0.5), RngStream(3), 5)
        assert a.tolist() == [1, 2, 1, 1, 6]


class TestPareto:
    def test_oracle(self):
        p = ParetoParam(2.0)
        assert p.sf(2.0) == 0.25
        assert p.isf(0.25) == 2.0
        assert p.cdf(0.5) == 0.0

    @given(st.floats(0.1, 5), st.floats(0.5, 3), st.floats(1e-12, 1.0))
    def test_isf_inverts_sf(self, alpha, xmin, u):
        p = ParetoParam(alpha, xmin)
        assert math.isclose(float(p.sf(p.isf(u))), u, rel_tol=1e-9)

    def test_bad_parameters(self):
        with pytest.raises(DomainError):
            ParetoParam(0.0)
        with pytest.raises(DomainError):
            ParetoParam(1.0, -1.0)

    def test_sample_ks(self):
        x = ParetoParam(1.5).sample(RngStream(5), 20000)
        assert stats.kstest(x, "pareto", args=(1.5,)).pvalue > 1e-3


def test_frechet_ppf_oracle():
    assert math.isclose(frechet_ppf(math.exp(-1.0), 1.0), 1.0, rel_tol=1e-15)


class TestZeta:
    def test_oracle(self):
        law = zeta_label_law(0.5)
        # p_1 = 1 / zeta(2) = 6 / pi^2
        assert math.isclose(law.pmf(1), 6 / math.pi**2, rel_tol=1e-14)
        assert math.isclose(law.sf(1), 1 - 6 / math.pi**2, rel_tol=1e-12)
        assert law.from_uniform([0.99, 0.5, 0.1, 1e-9]).tolist() == [1, 1, 6, 607927102]

    @given(st.sampled_from([0.3, 0.5, 0.7]), st.floats(1e-15, 1 - 1e-9))
    def test_inverse_is_generalized_inverse(self, beta, v):
        law = zeta_label_law(beta)
        k = int(law.from_uniform([v])[0])
        # resolution of the label beyond 2^53 is limited by float spacing
        if k < 2**50:
            assert law.sf(k) <= v * (1 + 1e-9)
            assert k == 1 or law.sf(k - 1) >= v * (1 - 1e-9)

    def test_tail_and_table_agree_at_boundary(self):
        law = zeta_label_law(0.5)
        v = law.tail[law.k_max] * np.array([1.0 - 1e-9, 0.5])
        assert np.all(law.from_uniform(v) > law.k_max)

    def test_sample_frequencies(self):
        law = zeta_label_law(0.5)
        y = law.sample(RngStream(2), 100000)
        counts = np.bincount(np.minimum(y, 6), minlength=7)[1:]
        probs = np.append(law.pmf(np.arange(1, 6)), law.sf(5))
        assert stats.chisquare(counts, probs * y.size).pvalue > 1e-3


class TestStable:
    def test_kanter_oracle(self):
        np.testing.assert_allclose(stable_from_uniforms(0.5, [0.3, 0.7], [1.0, 2.0]), [0.31490405, 0.60648], rtol=1e-6)

    def test_half_stable_is_levy(self):
        # S_{1/2} with Laplace exp(-sqrt(s)) is Levy with scale 1/2
        x = stable_sample(0.5, RngStream(9), 20000)
        assert stats.kstest(x, "levy", args=(0, 0.5)).pvalue > 1e-3

    @given(st.floats(0.1, 0.9))
    def test_laplace_transform(self, beta):
        x = stable_sample(beta, RngStream(4), 4000)
        emp = np.exp(-x).mean()
        assert abs(emp - math.exp(-1.0)) < 5 * np.exp(-x).std() / math.sqrt(x.size)
