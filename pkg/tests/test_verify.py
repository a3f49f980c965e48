import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from perturbed_karlin.rng import RngStream
from perturbed_karlin.verify import (
    ConfigError,
    ExperimentConfig,
    Suite,
    VerificationReport,

    run_experiment,
)
from perturbed_karlin.verify.report import check
from perturbed_karlin.verify.oracles import ppp_jumps_for, ppp_stable_sample
from perturbed_karlin.verify.stats import (
    KS_C01,
    chi_square_gof,
    cdf_table,
    ks_statistic,
    ks_threshold,
    mean_and_stderr,
    two_sample_ks,
    two_sample_threshold,
)


class TestStats:
    def test_ks_matches_scipy(self):
        x = RngStream(1).uniform(500)
        assert ks_statistic(x, lambda z: z) == pytest.approx(stats.kstest(x, "uniform").statistic, rel=1e-12)

    def test_two_sample_matches_scipy(self):
        a, b = RngStream(2).uniform(300), RngStream(3).uniform(450) ** 1.2
        assert two_sample_ks(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, rel=1e-12)

    def test_thresholds(self):
        assert KS_C01 == pytest.approx(1.6276, abs=1e-4)
        assert ks_threshold(10**5) == pytest.approx(0.005147, abs=1e-6)
        assert two_sample_threshold(100, 100) == pytest.approx(KS_C01 * math.sqrt(0.02))

    def test_chi_square_tail_cell(self):
        stat, dof, p = chi_square_gof([50, 30], [0.5, 0.3], total=100)
        assert stat == pytest.approx(0.0, abs=1e-12) and dof == 2 and p == pytest.approx(1.0)
        ref = stats.chisquare([40, 40, 20], [50, 30, 20])
        stat, dof, p = chi_square_gof([40, 40], [0.5, 0.3], total=100)
        assert stat == pytest.approx(ref.statistic) and p == pytest.approx(ref.pvalue)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=100))
    def test_ks_bounds(self, xs):
        d = ks_statistic(xs, lambda z: stats.norm.cdf(z))
        assert 0 <= d <= 1
        assert two_sample_ks(xs, xs) == 0.0

    def test_misc(self):
        m, se = mean_and_stderr([1.0, 2.0, 3.0])
        assert m == 2.0 and se == pytest.approx(1 / math.sqrt(3))
        rows = cdf_table(np.arange(100.0), lambda z: z / 100, points=4)
        assert len(rows) == 4 and all(len(r) == 3 for r in rows)
        with pytest.raises(ValueError):
            ks_statistic([], lambda z: z)


def test_ppp_oracle_laplace():
    s = ppp_stable_sample(0.5, 20000, RngStream(4), jumps=ppp_jumps_for(0.5))
    m, se = mean_and_stderr(np.exp(-s))
    assert abs(m - math.exp(-1.0)) < 4 * se


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig.from_json('{"suite": "regime", "regime": "signal", "lambda": 1000, "alpha": "1/2"}')
        assert cfg.suite is Suite.REGIME and cfg.lam == 1000.0
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    @pytest.mark.parametrize(
        "d",
        [
            {"suite": "nope"},
            {"seed": 1},
            {"suite": "rsm", "reps": 5},
            {"suite": "regime", "regime": "weird"},
            {"suite": "rsm", "boxes": "0:2"},
            {"suite": "rsm", "tolerances": {"bogus": 1}},
            {"suite": "rsm", "extra_key": 1},
            {"suite": "sibuya", "seed": -1},
            {"suite": "sibuya", "alpha": "x"},
        ],
    )
    def test_rejects(self, d):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(d)

    def test_bad_json(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json("{")

    def test_model_params(self):
        assert ExperimentConfig("regime", regime="noise").model_params().alpha == 3
        with pytest.raises(ConfigError):
            ExperimentConfig("regime", alpha=1).model_params()
        assert ExperimentConfig("regime", regime="all").regimes() == ["noise", "signal", "critical"]


class TestReport:
    def test_check_comparisons(self):
        assert check("a", "ks", 0.01, 0.05).passed
        assert not check("a", "ks", 0.06, 0.05).passed
        assert check("p", "chi2_pvalue", 0.5, 1e-3, "gt", p_value=0.5).passed
        assert check("m", "mean", 1.1, 0.2, "abs_le", target=1.0).passed

    def test_bonferroni_and_json(self):
        cfg = ExperimentConfig("sibuya", beta=0.5)
        rep = VerificationReport("SIBUYA", cfg.to_dict(), [], [], 0.01)
        rep.records.append(check("x", "chi2_pvalue", 0.004, 1e-3, "gt", p_value=0.004))
        rep.records.append(check("y", "chi2_pvalue", 0.5, 1e-3, "gt", p_value=0.5))
        assert rep.passed and not rep.bonferroni_passed
        d = json.loads(rep.to_json())
        assert d["bonferroni_passed"] is False
        assert "timing" not in json.loads(rep.deterministic_json())


def test_sibuya_suite_small():
    cfg = ExperimentConfig("sibuya", seed=3, options={"draws": 20000, "betas": [0.4]})
    rep = run_experiment(cfg)
    assert rep.calibrated and rep.bonferroni_passed
    assert rep.deterministic_json() == run_experiment(cfg).deterministic_json()


def test_rsm_suite_small_writes_cdf():
    cfg = ExperimentConfig(
        "rsm", seed=2, reps=2000, boxes="0:0.5,0:1",
        options={"kinds": ["IS", "CRITICAL"], "max_stability": {}},
    )
    rep = run_experiment(cfg)
    assert rep.records and all(r.passed for r in rep.records)
    buf = io.StringIO()
    assert rep.write_cdf_csv(buf) > 0
    assert buf.getvalue().startswith("test,z,F_emp,F_target")


def test_regime_suite_rejects_mismatched_regime():
    cfg = ExperimentConfig("regime", regime="noise", alpha=0.5, alpha_prime=2, beta=0.5, reps=100)
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_regime_suite_small_signal():
    cfg = ExperimentConfig("regime", seed=4, regime="signal", n=10**4, reps=300, options={"calibration_reps": 1000})
    rep = run_experiment(cfg)
    assert rep.calibrated
    names = [r.name for r in rep.records]
    assert any(n.startswith("normalizer_residual") for n in names)


def test_threads_do_not_change_results():
    base = dict(seed=5, regime="critical", n=10**4, reps=200, options={"calibration_reps": 500})
    one = run_experiment(ExperimentConfig("poissonization", threads=1, **base))
    two = run_experiment(ExperimentConfig("poissonization", threads=2, **base))
    a, b = json.loads(one.deterministic_json()), json.loads(two.deterministic_json())
    a["config"].pop("threads"), b["config"].pop("threads")
    assert a == b
