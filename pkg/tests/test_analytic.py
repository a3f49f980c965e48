import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from perturbed_karlin.analytic import (
    Regime,
    frechet_cdf,
    limit_cdf,
    logistic_fdd_cdf,
    normalizer_kind,
    product_tail,
    regime_classify,
    solve_normalizer,
    ztilde_alpha_moment,
    ztilde_tail,
)
from perturbed_karlin.karlin_process import ModelParams, nu
from perturbed_karlin.samplers import DomainError, InverseCdfLaw, ParetoParam, zeta_label_law


@pytest.mark.parametrize(
    "triple, regime",
    [
        ((3, 1, Fraction(1, 2)), Regime.NOISE_DOMINANCE),
        ((Fraction(1, 2), 2, Fraction(1, 2)), Regime.SIGNAL_DOMINANCE),
        ((1, 2, Fraction(1, 2)), Regime.CRITICAL),
        ((0.3, 1.0, 0.3), Regime.CRITICAL),
        ((0.3 + 1e-9, 1.0, 0.3), Regime.NOISE_DOMINANCE),
    ],
)
def test_regime_table(triple, regime):
    assert regime_classify(*triple) is regime


def test_exact_critical_line_is_exact():
    assert regime_classify(Fraction(1, 3), 1, Fraction(1, 3)) is Regime.CRITICAL
    assert regime_classify(Fraction(1, 3) + Fraction(1, 10**15), 1, Fraction(1, 3)) is Regime.NOISE_DOMINANCE


def test_regime_domain():
    with pytest.raises(DomainError):
        regime_classify(1, 1, 1)


@given(st.floats(0.05, 5), st.floats(0.05, 5), st.floats(0.05, 0.95))
def test_regime_matches_sign(a, ap, b):
    r = regime_classify(a, ap, b)
    d = a - ap * b
    if abs(d) > 1e-9:
        assert r is (Regime.NOISE_DOMINANCE if d > 0 else Regime.SIGNAL_DOMINANCE)


def test_closed_form_oracles():
    assert frechet_cdf(2.0, 1.0, 2.0) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert frechet_cdf(0.0, 1.0, 0.5) == 1.0
    assert logistic_fdd_cdf([0.5, 0.5], [1.0, 1.0], 2, 0.5) == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert ztilde_tail(ParetoParam(2.0), 0.5, 4.0) == 0.25
    # moment 1 + alpha / (alpha' beta - alpha) for the canonical signal triple
    assert ztilde_alpha_moment(ParetoParam(2.0), 0.5, 0.5) == 2.0
    with pytest.raises(DomainError):
        ztilde_alpha_moment(ParetoParam(2.0), 0.5, 1.0)


def test_product_tail_oracles():
    # critical: x^-1 (1 + ln x)
    assert product_tail(ParetoParam(1.0), ParetoParam(2.0), 0.5, math.e) == pytest.approx(2 / math.e, rel=1e-14)
    assert product_tail(ParetoParam(1.0), ParetoParam(2.0), 0.5, 20.0) == pytest.approx(0.19978661367769956, rel=1e-13)
    assert product_tail(ParetoParam(1.0), ParetoParam(1.0), 0.5, math.e) == pytest.approx(0.8451818782538245, rel=1e-13)


def test_product_tail_quadrature_matches_closed_form():
    p = ParetoParam(2.0)
    generic = InverseCdfLaw(p.isf, p.sf, "pareto-generic")
    for x in (1.5, 7.0, 40.0):
        assert product_tail(ParetoParam(0.7), generic, 0.5, x) == pytest.approx(
            product_tail(ParetoParam(0.7), p, 0.5, x), rel=1e-8
        )


def test_nu_oracle():
    law = zeta_label_law(0.5)
    # 1/p_k = zeta(2) k^2 <= x
    assert nu(1000, law) == 24
    assert nu(10**6, law) == 779
    assert nu(1.0, law) == 0


@pytest.mark.parametrize("regime", ["noise", "signal", "critical"])
@pytest.mark.parametrize("n", [10**2, 10**3, 10**5, 10**7, 10**9])
def test_normalizer_residuals(regime, n):
    params = ModelParams.canonical(regime)
    for kind in "abc":
        res = solve_normalizer(kind, n, params)
        assert res.residual < 1e-10
        assert isinstance(res.residual, float)


def test_normalizer_oracles():
    p = ModelParams.canonical("signal")
    assert solve_normalizer("a", 1000, p).value == pytest.approx((math.gamma(0.5) * 24) ** 2, rel=1e-12)
    assert solve_normalizer("c", 1000, p).value == pytest.approx(math.sqrt(1000), rel=1e-15)
    assert solve_normalizer("b", 1000, ModelParams.canonical("critical")).value == pytest.approx(282.635059579834, rel=1e-12)


@given(st.integers(2, 10**9), st.sampled_from([0.25, 0.5, 1.0, 2.0, 4.0]))
def test_c_n_pareto_power(n, ap):
    params = ModelParams(1.0, ap, 0.5)
    # exponents with exact reciprocals keep the reference exact; the residual is
    # flat over a few ulps of its argument, which moves the root by that over alpha'
    eps = np.finfo(float).eps
    assert solve_normalizer("c", n, params).value == pytest.approx(n ** (1 / ap), rel=8 * eps / min(ap, 1.0))


@pytest.mark.parametrize("regime", ["noise", "signal", "critical"])
def test_c_n_canonical_machine_precision(regime):
    params = ModelParams.canonical(regime)
    for n in 10 ** np.arange(2, 10):
        ref = float(n) ** (1 / float(params.alpha_prime))
        assert abs(solve_normalizer("c", int(n), params).value - ref) <= 2 * np.spacing(ref)


def test_limit_cdf():
    sig = ModelParams.canonical("signal")
    assert limit_cdf(Regime.SIGNAL_DOMINANCE, sig, 1.0, 4.0) == pytest.approx(math.exp(-1.0))
    crit = ModelParams.canonical("critical")
    assert limit_cdf(Regime.CRITICAL, crit, 1.0, 1.0) == pytest.approx(math.exp(-1.0))
    with pytest.raises(DomainError):
        limit_cdf(Regime.NOISE_DOMINANCE, ModelParams.canonical("noise"), 1.0, 1.0)
    assert normalizer_kind(Regime.CRITICAL) == "b"


def test_poissonized_cdf_closed_form_and_simulation():
    from scipy.special import erf, zeta

    from perturbed_karlin.analytic import poissonized_max_cdf
    from perturbed_karlin.boxes import Box
    from perturbed_karlin.poisson_karlin import poisson_box_maxima
    from perturbed_karlin.rng import RngStream

    p = ModelParams.canonical("critical")
    lam, x = 1e4, 300.0
    # eps ~ Pareto(1), Z ~ Pareto(2): E exp(-t F_Z-bar(x / eps)) in closed form
    k = np.arange(1, 10**6 + 1, dtype=float)
    t = lam * k**-2 / zeta(2)
    per = np.exp(-t / x**2) - np.sqrt(np.pi * t) / x * (erf(np.sqrt(t)) - erf(np.sqrt(t) / x))
    rest = lam * zeta(2, 10**6 + 1) / zeta(2) * product_tail(ParetoParam(1.0), ParetoParam(2.0), 1.0, x)
    ref = math.exp(np.sum(np.log(per)) - rest)
    assert poissonized_max_cdf(p, lam, x) == pytest.approx(ref, rel=1e-6)
    sims = np.array([poisson_box_maxima(p, lam, [Box.unit()], RngStream(31, r))[0] for r in range(3000)])
    emp = np.mean(sims <= x)
    assert abs(emp - ref) < 4 * math.sqrt(ref * (1 - ref) / sims.size)


def test_poissonized_cdf_needs_pareto():
    from perturbed_karlin.analytic import poissonized_max_cdf

    p = ModelParams(1, 2, 0.5)
    p.noise_law = InverseCdfLaw(p.noise_law.isf, p.noise_law.sf)
    with pytest.raises(TypeError):
        poissonized_max_cdf(p, 100.0, 5.0)
