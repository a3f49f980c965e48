"""Acceptance criteria 1-10, each at its stated scale and tolerance.

Every test prints one ``CRITERION k ... PASS|FAIL`` line (also repeated in the
terminal summary).  All runs use seed 0.
"""

import json
import math
import time

import numpy as np
import pytest

from perturbed_karlin.analytic import solve_normalizer
from perturbed_karlin.karlin_process import ModelParams
from perturbed_karlin.rng import RngStream
from perturbed_karlin.verify import ExperimentConfig, run_experiment
from perturbed_karlin.verify.suites import TAG_MODEL, logistic_grid_records, substable_record

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 0
RESULTS = []


def report(label, ok, elapsed, limit, detail):
    fast = elapsed < limit
    budget = f"{elapsed:.1f}s" if math.isinf(limit) else f"{elapsed:.1f}s of {limit:g}s"
    line = f"CRITERION {label}: {'PASS' if ok and fast else 'FAIL'} ({detail}; {budget})"
    RESULTS.append(line)
    print(line)
    assert ok, line
    assert fast, line


def timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


def worst(records, key=lambda r: r.empirical):
    return ", ".join(f"{r.name} {r.statistic}={key(r):.4g}/{r.tolerance:.4g}" for r in records)


def picked(rep, prefix):
    recs = [r for r in rep.records if r.name.startswith(prefix)]
    assert recs, f"no records named {prefix}*"
    return recs


def test_criterion_01_sibuya():
    rep, dt = timed(lambda: run_experiment(ExperimentConfig("sibuya", seed=SEED)))
    recs = picked(rep, "chi2_first50")
    assert len(recs) == 3
    report("1 Sibuya chi-square (p > 1e-3)", rep.calibrated and all(r.passed for r in recs), dt, 10,
           "min p=" + f"{min(r.empirical for r in recs):.3g}")


def test_criterion_02_stable():
    rep, dt = timed(lambda: run_experiment(ExperimentConfig("stable", seed=SEED)))
    lap = picked(rep, "laplace[")
    ks = picked(rep, "ks2_vs_ppp_oracle")
    assert len(lap) == 9 and len(ks) == 3
    ok = rep.calibrated and all(r.passed for r in lap + ks)
    zmax = max(abs(r.empirical - r.target) / r.stderr for r in lap)
    report("2 stable Laplace + PPP oracle KS", ok, dt, 30,
           f"max |err|/stderr={zmax:.2f}, max ks2/thr={max(r.empirical / r.tolerance for r in ks):.2f}")


def test_criterion_03_occupancy():
    rep, dt = timed(lambda: run_experiment(ExperimentConfig("occupancy", seed=SEED)))
    recs = picked(rep, "K_n/nu(n)")
    assert len(recs) == 3
    rel = [abs(r.empirical - r.target) / r.target for r in recs]
    report("3 occupancy K_n/nu(n) -> Gamma(1-beta) within 2%", all(r.passed for r in recs), dt, 120,
           "rel errs " + ", ".join(f"{x:.4f}" for x in rel))


def test_criterion_04_karlin_marginal():
    cfg = ExperimentConfig("rsm", seed=SEED, boxes="0:0.25,0:0.5,0:1", options={"kinds": ["KARLIN"], "max_stability": {}})
    rep, dt = timed(lambda: run_experiment(cfg))
    recs = picked(rep, "karlin_marginal")
    assert len(recs) == 6
    report("4 Karlin RSM marginal KS < 1% threshold", all(r.passed for r in recs), dt, 60,
           f"max ks/thr={max(r.empirical / r.tolerance for r in recs):.3f}")


def test_criterion_05_logistic_fdd():
    rng = RngStream(SEED).child(TAG_MODEL, 5)
    recs, dt = timed(lambda: logistic_grid_records(2.0, 0.5, 10**5, rng, 3.0))
    assert len(recs) == 9
    zmax = max(abs(r.empirical - r.target) / r.stderr for r in recs)
    report("5 logistic fdd on 3x3 grid within 3 stderr", all(r.passed for r in recs), dt, 60, f"max |err|/stderr={zmax:.2f}")


@pytest.mark.parametrize(
    "regime, prefix, limit",
    [
        ("signal", "regime[signal]ks_vs_limit", 300),
        ("noise", "regime[noise]ks2_vs_annealed_oracle", 300),
        ("critical", "regime[critical]ks_vs_limit", 900),
    ],
)
def test_criterion_06_phase_transition(regime, prefix, limit):
    rep, dt = timed(lambda: run_experiment(ExperimentConfig("regime", seed=SEED, regime=regime)))
    (rec,) = picked(rep, prefix)
    res = picked(rep, "normalizer_residual")
    bias = rec.detail.get("prelimit_distance")
    extra = f", exact prelimit distance={bias:.4f}" if bias is not None else ""
    report(f"6 {regime} regime KS < {rec.tolerance:g}", rec.passed and all(r.passed for r in res), dt, limit,
           f"{rec.statistic}={rec.empirical:.4f}{extra}")


def test_criterion_07_poissonization():
    rep, dt = timed(lambda: run_experiment(ExperimentConfig("poissonization", seed=SEED, regime="all")))
    recs = picked(rep, "poissonization[")
    ks = [r for r in recs if "]ks2[" in r.name]
    assert len(ks) == 3
    report("7 Poissonization two-sample KS < 0.05", all(r.passed for r in ks), dt, 600,
           ", ".join(f"{r.name.split('[')[1].split(']')[0]}={r.empirical:.4f}" for r in ks))


def test_criterion_08_normalizers():
    def run():
        worst_res, worst_ulp = 0.0, 0.0
        for name in ("noise", "signal", "critical"):
            p = ModelParams.canonical(name)
            for n in 10 ** np.arange(2, 10):
                for kind in "abc":
                    r = solve_normalizer(kind, int(n), p)
                    worst_res = max(worst_res, r.residual)
                    if kind == "c":
                        ref = float(n) ** (1 / float(p.alpha_prime))
                        worst_ulp = max(worst_ulp, abs(r.value - ref) / np.spacing(ref))
        return worst_res, worst_ulp

    (res, ulp), dt = timed(run)
    report("8 normalizer residuals < 1e-10, c_n = n^(1/alpha')", res < 1e-10 and ulp <= 2, dt, 1,
           f"max residual={res:.2e}, max c_n error={ulp:.0f} ulp")


def test_criterion_09_substable():
    rng = RngStream(SEED).child(TAG_MODEL, 9)
    rec, dt = timed(lambda: substable_record(1.0, 0.5, 0.5, 10**5, rng))
    report("9 sub-stable identity KS < 1% threshold", rec.passed, dt, 60, f"ks2={rec.empirical:.5f}/{rec.tolerance:.5f}")


SMALL = [
    {"suite": "sibuya", "options": {"draws": 50000}},
    {"suite": "stable", "options": {"draws": 20000, "oracle_draws": 5000}},
    {"suite": "occupancy", "n": 20000, "reps": 100, "options": {"cluster_reps": 300}},
    {"suite": "rsm", "reps": 3000, "boxes": "0:0.25,0:0.5,0:1"},
    {"suite": "regime", "regime": "all", "n": 20000, "reps": 200, "options": {"oracle_reps": 1000, "calibration_reps": 500}},
    {"suite": "poissonization", "regime": "all", "n": 20000, "reps": 200, "options": {"calibration_reps": 500}},
]


def test_criterion_10_determinism():
    def run():
        same = []
        for d in SMALL:
            a = run_experiment(ExperimentConfig.from_dict({**d, "seed": 7})).deterministic_json()
            b = run_experiment(ExperimentConfig.from_dict({**d, "seed": 7})).deterministic_json()
            c = run_experiment(ExperimentConfig.from_dict({**d, "seed": 8})).deterministic_json()
            same.append(a == b and a != c and "timing" not in json.loads(a))
        return same

    same, dt = timed(run)
    report("10 same seed gives byte-identical reports", all(same), dt, math.inf,
           f"{sum(same)}/{len(same)} suites identical")
