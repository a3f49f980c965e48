"""Verification suites.

Each suite first checks its oracles against themselves (calibration), then
tests the model or sampler against the oracle.  Replication r of a sample
set always uses ``RngStream(seed, r)`` under a fixed tag, so results do not
depend on chunking or on the number of workers.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
from scipy.special import gamma as gamma_fn

from ..analytic import (
    Regime,
    frechet_cdf,
    limit_cdf,
    poissonized_max_cdf,
    logistic_fdd_cdf,
    normalizer_kind,
    solve_normalizer,
    ztilde_alpha_moment,
)
from ..boxes import Box, as_boxes
from ..karlin_process import (
    CANONICAL,
    ModelParams,
    box_label_counts,
    empirical_sup_measure,
    interval_maxima,
    nu,
    occupancy_stats,
    simulate_path,
)
from ..limit_measures import SignalEnvironment, TruncationPolicy, sample_box_values
from ..poisson_karlin import poisson_box_maxima, poisson_karlin_sup_measure, simulate_marked_points
from ..rng import RngStream
from ..samplers import (
    ParetoParam,
    frechet_sample,
    sibuya_logsf,
    sibuya_pmf,
    sibuya_sample,
    stable_sample,
)
from .config import ConfigError, ExperimentConfig, Suite
from .oracles import ppp_jumps_for, ppp_remainder_sd, ppp_stable_sample
from .report import VerificationReport, check
from .stats import (
    chi_square_gof,
    cdf_table,
    ks_pvalue,
    ks_statistic,
    ks_threshold,
    mean_and_stderr,
    two_sample_ks,
    two_sample_pvalue,
    two_sample_threshold,
)

# stream tags keep sample sets of one experiment independent
TAG_MODEL, TAG_POISSON, TAG_ORACLE, TAG_CALIB, TAG_ENV = 11, 12, 13, 14, 15


@contextmanager
def _timed(report: VerificationReport, key: str):
    t0 = time.perf_counter()
    yield
    report.timing[key] = round(time.perf_counter() - t0, 3)


def _tag_stream(seed: int, *tags: int) -> RngStream:
    return RngStream(seed, 0).child(*tags)


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    return f"{float(x):g}"


# ---------------------------------------------------------------------------
# replication workers (top level so process pools can pickle them)


def _maxima_chunk(task):
    """Scaled box maxima for replications lo..hi-1 of one sample set."""
    params, model, size, boxes, seed, tag, lo, hi, scale, method, env = task
    out = np.empty((hi - lo, len(boxes)))
    for k, r in enumerate(range(lo, hi)):
        rng = RngStream(seed, r).child(tag)
        if model == "discrete":
            if method == "direct":
                out[k] = empirical_sup_measure(simulate_path(params, size, rng), boxes)
            else:
                out[k] = interval_maxima(params, size, boxes, rng, env=env)
        else:
            if method == "direct":
                pts = simulate_marked_points(params, size, boxes[0].dim, rng)
                out[k] = poisson_karlin_sup_measure(pts, boxes)
            else:
                out[k] = poisson_box_maxima(params, size, boxes, rng)
    return out / scale


def _occupancy_chunk(task):
    params, n, seed, lo, hi, method = task
    ratios, j1 = [], []
    for r in range(lo, hi):
        rng = RngStream(seed, r).child(TAG_MODEL)
        if method == "direct":
            labels = params.label_law.sample(rng, n)
            path_stats = occupancy_stats(_labels_only_path(labels))
            k_n, j_1 = path_stats.K_n, path_stats.J.get(1, 0)
        else:
            ((_, counts),) = box_label_counts(params.label_law, [n], rng)
            k_n, j_1 = counts.size, int(np.sum(counts == 1))
        ratios.append(k_n)
        j1.append(j_1 / k_n)
    return np.array(ratios, dtype=float), np.array(j1)


def _labels_only_path(labels):
    from ..karlin_process import LabeledPath, index_labels

    uniq, idx = index_labels(labels)
    empty = np.empty(0)
    return LabeledPath(labels.size, labels, uniq, empty, idx, empty, empty)


def _run_chunks(worker, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, tasks))


def _split(reps: int, threads: int, per_chunk: int = 250):
    size = max(1, min(per_chunk, math.ceil(reps / threads)))
    return [(lo, min(reps, lo + size)) for lo in range(0, reps, size)]


def model_maxima(params, model, size, boxes, reps, seed, tag, scale, threads=1, method="counts", env=None):
    boxes = as_boxes(boxes)
    tasks = [
        (params, model, size, boxes, seed, tag, lo, hi, scale, method, env) for lo, hi in _split(reps, threads)
    ]
    return np.concatenate(_run_chunks(_maxima_chunk, tasks, threads), axis=0)


# ---------------------------------------------------------------------------
# SIBUYA


def run_sibuya_experiment(cfg: ExperimentConfig) -> VerificationReport:
    rep = VerificationReport(cfg.suite.value, cfg.to_dict(), family_level=cfg.tol("family_level"))
    betas = [float(b) for b in cfg.opt("betas", [cfg.beta] if cfg.beta is not None else [0.3, 0.5, 0.8])]
    draws = int(cfg.opt("draws", 10**6))
    atoms = int(cfg.opt("atoms", 50))
    p_min = cfg.tol("chi2_p")
    k = np.arange(1, atoms + 1)
    with _timed(rep, "calibration"):
        for b in betas:
            big = np.arange(1, 10**5 + 1)
            total = float(np.sum(sibuya_pmf(b, big)) + math.exp(float(sibuya_logsf(b, 10**5))))
            rep.calibration.append(check(f"pmf_mass[beta={_fmt(b)}]", "abs_err", total, 1e-10, "abs_le", target=1.0))
            # the GOF machinery on exact multinomial draws from the pmf
            pk = sibuya_pmf(b, k)
            counts = _tag_stream(cfg.seed, TAG_CALIB, len(rep.calibration)).gen.multinomial(draws, np.append(pk, 1 - pk.sum()))
            stat, dof, p = chi_square_gof(counts[:-1], pk, draws)
            rep.calibration.append(check(f"chi2_self[beta={_fmt(b)}]", "chi2_pvalue", p, p_min, "gt", p_value=p, chi2=stat, dof=dof))
    with _timed(rep, "tests"):
        for i, b in enumerate(betas):
            q = sibuya_sample(b, _tag_stream(cfg.seed, TAG_MODEL, i), draws)
            counts = np.bincount(np.minimum(q, atoms + 1), minlength=atoms + 2)[1 : atoms + 1]
            pk = sibuya_pmf(b, k)
            stat, dof, p = chi_square_gof(counts, pk, draws)
            rep.records.append(check(f"chi2_first{atoms}[beta={_fmt(b)}]", "chi2_pvalue", p, p_min, "gt", p_value=p, chi2=stat, dof=dof))
            zpow = 0.5 ** q.astype(float)
            m, se = mean_and_stderr(zpow)
            target = 1 - 0.5**b
            rep.records.append(check(f"pgf_at_half[beta={_fmt(b)}]", "mean", m, cfg.tol("stderr_mult") * se, "abs_le", target=target, stderr=se))
    return rep


# ---------------------------------------------------------------------------
# STABLE


def run_stable_experiment(cfg: ExperimentConfig) -> VerificationReport:
    rep = VerificationReport(cfg.suite.value, cfg.to_dict(), family_level=cfg.tol("family_level"))
    betas = [float(b) for b in cfg.opt("betas", [cfg.beta] if cfg.beta is not None else [0.3, 0.5, 0.8])]
    s_grid = [float(s) for s in cfg.opt("s", [0.5, 1.0, 2.0])]
    draws = int(cfg.opt("draws", 10**6))
    oracle_draws = int(cfg.opt("oracle_draws", 10**5))
    jumps_opt = cfg.opt("jumps", None)
    mult = cfg.tol("stderr_mult")
    level = cfg.tol("ks_level")
    oracle = {}
    with _timed(rep, "calibration"):
        for i, b in enumerate(betas):
            jumps = int(jumps_opt) if jumps_opt else ppp_jumps_for(b)
            o = ppp_stable_sample(b, oracle_draws, _tag_stream(cfg.seed, TAG_ORACLE, i), jumps)
            oracle[b] = o
            m, se = mean_and_stderr(np.exp(-o))
            rep.calibration.append(
                check(f"ppp_oracle_laplace[beta={_fmt(b)}]", "mean", m, mult * se + ppp_remainder_sd(b, jumps), "abs_le",
                      target=math.exp(-1.0), stderr=se, jumps=jumps)
            )
    with _timed(rep, "tests"):
        for i, b in enumerate(betas):
            s_draws = stable_sample(b, _tag_stream(cfg.seed, TAG_MODEL, i), draws)
            for s in s_grid:
                m, se = mean_and_stderr(np.exp(-s * s_draws))
                rep.records.append(
                    check(f"laplace[beta={_fmt(b)},s={_fmt(s)}]", "mean", m, mult * se, "abs_le", target=math.exp(-(s**b)), stderr=se)
                )
            a = s_draws[:oracle_draws]
            d = two_sample_ks(a, oracle[b])
            rep.records.append(
                check(f"ks2_vs_ppp_oracle[beta={_fmt(b)}]", "ks2", d, two_sample_threshold(a.size, oracle_draws, level), "lt",
                      p_value=two_sample_pvalue(d, a.size, oracle_draws))
            )
    return rep


# ---------------------------------------------------------------------------
# OCCUPANCY


def run_occupancy_experiment(cfg: ExperimentConfig) -> VerificationReport:
    rep = VerificationReport(cfg.suite.value, cfg.to_dict(), family_level=cfg.tol("family_level"))
    betas = [float(b) for b in cfg.opt("betas", [cfg.beta] if cfg.beta is not None else [0.3, 0.5, 0.7])]
    n = cfg.n or 10**6
    reps = cfg.reps or 100
    method = cfg.opt("method", "direct")
    cluster_reps = int(cfg.opt("cluster_reps", 2000))
    atoms = int(cfg.opt("cluster_atoms", 10))
    p_min = cfg.tol("chi2_p")
    with _timed(rep, "calibration"):
        for i, b in enumerate(betas):
            q = sibuya_sample(b, _tag_stream(cfg.seed, TAG_CALIB, i), 10**5)
            counts = np.bincount(np.minimum(q, atoms + 1), minlength=atoms + 2)[1 : atoms + 1]
            stat, dof, p = chi_square_gof(counts, sibuya_pmf(b, np.arange(1, atoms + 1)), q.size)
            rep.calibration.append(check(f"sibuya_oracle[beta={_fmt(b)}]", "chi2_pvalue", p, p_min, "gt", p_value=p, chi2=stat, dof=dof))
    with _timed(rep, "tests"):
        for i, b in enumerate(betas):
            params = ModelParams(1, 1, b)
            seed = cfg.seed + 7919 * i
            tasks = [(params, n, seed, lo, hi, method) for lo, hi in _split(reps, cfg.threads)]
            parts = _run_chunks(_occupancy_chunk, tasks, cfg.threads)
            k_n = np.concatenate([p[0] for p in parts])
            j1 = np.concatenate([p[1] for p in parts])
            v = nu(n, params.label_law)
            ratio, se = mean_and_stderr(k_n / v)
            target = float(gamma_fn(1 - b))
            rep.records.append(
                check(f"K_n/nu(n)[beta={_fmt(b)}]", "mean", ratio, cfg.tol("occupancy_rel") * target, "abs_le",
                      target=target, stderr=se, n=n, nu=v, reps=reps)
            )
            m1, se1 = mean_and_stderr(j1)
            rep.records.append(
                check(f"J_1/K_n[beta={_fmt(b)}]", "mean", m1, cfg.tol("j1_rel") * b, "abs_le", target=b, stderr=se1)
            )
            sizes = np.empty(cluster_reps, dtype=np.int64)
            for r in range(cluster_reps):
                rng = RngStream(seed, r).child(TAG_POISSON)
                ((labs, counts),) = box_label_counts(params.label_law, [n], rng)
                eps = params.signal_law.sample(rng, labs.size)
                sizes[r] = counts[np.argmax(eps)]
            counts = np.bincount(np.minimum(sizes, atoms + 1), minlength=atoms + 2)[1 : atoms + 1]
            stat, dof, p = chi_square_gof(counts, sibuya_pmf(b, np.arange(1, atoms + 1)), cluster_reps)
            rep.records.append(
                check(f"top_cluster_size_gof[beta={_fmt(b)}]", "chi2_pvalue", p, p_min, "gt", p_value=p, chi2=stat, dof=dof)
            )
    return rep


# ---------------------------------------------------------------------------
# RSM


def _ks_record(name, sample, cdf, level, **detail):
    d = ks_statistic(sample, cdf)
    return check(name, "ks", d, ks_threshold(len(sample), level), "lt", p_value=ks_pvalue(d, len(sample)),
                 cdf_table=cdf_table(sample, cdf), **detail)


def run_rsm_experiment(cfg: ExperimentConfig) -> VerificationReport:
    rep = VerificationReport(cfg.suite.value, cfg.to_dict(), family_level=cfg.tol("family_level"))
    reps = cfg.reps or 10**5
    boxes = as_boxes(cfg.boxes)
    mus = [b.volume for b in boxes]
    level = cfg.tol("ks_level")
    mult = cfg.tol("stderr_mult")
    kinds = [k.upper() for k in cfg.opt("kinds", ["IS", "KARLIN", "SIGNAL", "CRITICAL", "NOISE"])]
    halves = [Box.interval(0, 0.5), Box.interval(0.5, 1)]
    with _timed(rep, "calibration"):
        zs = np.array([0.3, 0.7, 1.0, 2.0, 5.0])
        gap = float(np.max(np.abs(frechet_cdf(1.0, 1.0, zs) - logistic_fdd_cdf([1.0], zs[None, :], 2.0, 0.5))))
        rep.calibration.append(check("frechet_vs_logistic_full_space", "max_abs", gap, 1e-14, "lt"))
        f = frechet_sample(1.0, 1.0, _tag_stream(cfg.seed, TAG_CALIB), reps)
        rep.calibration.append(_ks_record("frechet_inversion_self", f, lambda z: frechet_cdf(1.0, 1.0, z), level))
    t_tests = time.perf_counter()
    tag = iter(range(100, 10**6))

    def stream():
        return _tag_stream(cfg.seed, TAG_MODEL, next(tag))

    if "IS" in kinds:
        a = float(cfg.opt("is_alpha", 1.0))
        v = sample_box_values("is", boxes, reps, stream(), alpha=a)
        for j, m in enumerate(mus):
            rep.records.append(_ks_record(f"is_marginal[alpha={_fmt(a)},mu={m:g}]", v[:, j], lambda z, m=m: frechet_cdf(m, a, z), level))
        h = sample_box_values("is", halves, reps, stream(), alpha=a)
        e1, e2 = h[:, 0] > 1.0, h[:, 1] > 1.0
        corr = float(np.corrcoef(e1, e2)[0, 1])
        rep.records.append(check(f"is_disjoint_independence[alpha={_fmt(a)}]", "corr", corr, mult / math.sqrt(reps), "abs_le", target=0.0, stderr=1 / math.sqrt(reps)))
    if "KARLIN" in kinds:
        for a, b in cfg.opt("karlin_params", [[1, 0.5], [2, 0.3]]):
            a, b = float(a), float(b)
            v = sample_box_values("karlin", boxes, reps, stream(), alpha=a, beta=b)
            for j, m in enumerate(mus):
                rep.records.append(
                    _ks_record(f"karlin_marginal[alpha={_fmt(a)},beta={_fmt(b)},mu={m:g}]", v[:, j],
                               lambda z, m=m: frechet_cdf(m**b, a, z), level)
                )
            if len(set(mus)) >= 2:
                # theta(B) = -log P(M(B) <= z) z^alpha, fitted against mu(B)
                z0 = 1.0
                theta = np.array([-math.log(np.mean(v[:, j] <= z0)) * z0**a for j in range(len(mus))])
                slope = float(np.polyfit(np.log(mus), np.log(theta), 1)[0])
                rep.records.append(check(f"karlin_extremal_exponent[alpha={_fmt(a)},beta={_fmt(b)}]", "slope", slope, 0.03, "abs_le", target=b))
    if "SIGNAL" in kinds:
        a, b, ap = (float(x) for x in cfg.opt("signal_params", [0.5, 0.5, 2]))
        law = ParetoParam(ap)
        c = ztilde_alpha_moment(law, b, a)
        v = sample_box_values("signal", boxes, reps, stream(), alpha=a, beta=b, noise_law=law)
        for j, m in enumerate(mus):
            rep.records.append(
                _ks_record(f"signal_marginal[alpha={_fmt(a)},beta={_fmt(b)},alpha'={_fmt(ap)},mu={m:g}]", v[:, j],
                           lambda z, m=m: frechet_cdf(c * m**b, a, z), level)
            )
    if "CRITICAL" in kinds:
        ap, b = (float(x) for x in cfg.opt("critical_params", [2, 0.5]))
        v = sample_box_values("critical", boxes, reps, stream(), alpha_prime=ap, beta=b)
        for j, m in enumerate(mus):
            rep.records.append(
                _ks_record(f"critical_marginal[alpha'={_fmt(ap)},beta={_fmt(b)},mu={m:g}]", v[:, j],
                           lambda z, m=m: frechet_cdf(m**b, ap * b, z), level)
            )
        rep.records.extend(logistic_grid_records(ap, b, reps, stream(), mult))
        gamma_ = float(cfg.opt("substable_gamma", 0.5))
        rep.records.append(substable_record(ap * b, b, gamma_, reps, stream(), level))
    if "NOISE" in kinds:
        params = ModelParams(*CANONICAL["noise"])
        env = SignalEnvironment.draw(params, _tag_stream(cfg.seed, TAG_ENV))
        ap = float(params.alpha_prime)
        v = sample_box_values("noise", boxes, reps, stream(), alpha_prime=ap, env=env)
        for j, m in enumerate(mus):
            rep.records.append(
                _ks_record(f"noise_quenched_marginal[mu={m:g}]", v[:, j], lambda z, m=m: frechet_cdf(env.moment * m, ap, z),
                           level, moment=env.moment)
            )
    stab = cfg.opt("max_stability", {"IS": 1.0, "KARLIN": [1.0, 0.5], "CRITICAL": [2.0, 0.5]})
    for kind, par in stab.items():
        if kind.upper() in kinds:
            rep.records.append(max_stability_record(kind, par, max(reps // 10, 1000), stream(), level))
    rep.timing["tests"] = round(time.perf_counter() - t_tests, 3)
    return rep


def logistic_grid_records(alpha_prime, beta, reps, rng, mult=3.0, grid=(0.5, 1.0, 2.0)):
    halves = [Box.interval(0, 0.5), Box.interval(0.5, 1)]
    v = sample_box_values("critical", halves, reps, rng, alpha_prime=alpha_prime, beta=beta)
    out = []
    for z1 in grid:
        for z2 in grid:
            emp = float(np.mean((v[:, 0] <= z1) & (v[:, 1] <= z2)))
            tgt = logistic_fdd_cdf([0.5, 0.5], [z1, z2], alpha_prime, beta)
            se = math.sqrt(tgt * (1 - tgt) / reps)
            out.append(
                check(f"logistic_joint[alpha'={_fmt(alpha_prime)},beta={_fmt(beta)},z=({z1:g},{z2:g})]", "prob", emp, mult * se,
                      "abs_le", target=tgt, stderr=se)
            )
    return out


def substable_record(alpha, beta, gamma_, reps, rng, level=0.01):
    """S_gamma^(1/alpha) times a logistic(alpha, beta) value vs a logistic(alpha gamma, beta gamma) value, full space."""
    unit = [Box.unit()]
    lhs = sample_box_values("critical", unit, reps, rng.child(1), alpha_prime=alpha / beta, beta=beta)[:, 0]
    lhs = lhs * stable_sample(gamma_, rng.child(2), reps) ** (1.0 / alpha)
    rhs = sample_box_values("critical", unit, reps, rng.child(3), alpha_prime=alpha / beta, beta=beta * gamma_)[:, 0]
    d = two_sample_ks(lhs, rhs)
    return check(f"substable_identity[alpha={_fmt(alpha)},beta={_fmt(beta)},gamma={_fmt(gamma_)}]", "ks2", d,
                 two_sample_threshold(reps, reps, level), "lt", p_value=two_sample_pvalue(d, reps, reps))


def max_stability_record(kind, par, reps, rng, level=0.01, m=5):
    kind = kind.upper()
    unit = [Box.unit()]
    if kind == "IS":
        kw, a_eff = {"alpha": float(par)}, float(par)
    elif kind == "KARLIN":
        kw, a_eff = {"alpha": float(par[0]), "beta": float(par[1])}, float(par[0])
    elif kind == "SIGNAL":
        kw = {"alpha": float(par[0]), "beta": float(par[1]), "noise_law": ParetoParam(float(par[2]))}
        a_eff = float(par[0])
    elif kind == "CRITICAL":
        kw, a_eff = {"alpha_prime": float(par[0]), "beta": float(par[1])}, float(par[0]) * float(par[1])
    else:
        raise ValueError(f"no max-stability check for {kind}")
    big = sample_box_values(kind, unit, m * reps, rng.child(1), **kw)[:, 0].reshape(reps, m)
    lhs = big.max(axis=1) * m ** (-1.0 / a_eff)
    rhs = sample_box_values(kind, unit, reps, rng.child(2), **kw)[:, 0]
    d = two_sample_ks(lhs, rhs)
    return check(f"max_stability[{kind.lower()},m={m}]", "ks2", d, two_sample_threshold(reps, reps, level), "lt",
                 p_value=two_sample_pvalue(d, reps, reps))


# ---------------------------------------------------------------------------
# REGIME


def _resolve_regime(cfg: ExperimentConfig, name):
    params = cfg.model_params(name)
    reg = params.regime
    if name is None and cfg.regime in CANONICAL and reg.short != cfg.regime:
        raise ConfigError(
            f"regime {cfg.regime!r} requested but (alpha, alpha', beta) = "
            f"({_fmt(params.alpha)}, {_fmt(params.alpha_prime)}, {_fmt(params.beta)}) is {reg.value}"
        )
    return params, reg


def _normalizer_record(reg, n, params, rep):
    res = solve_normalizer(normalizer_kind(reg), n, params)
    rep.records.append(
        check(f"normalizer_residual[{reg.short},{res.kind}]", "residual", res.residual, 1e-10, "lt", value=res.value, n=n)
    )
    return res


def _prelimit_distance(params, n, mu, norm, cdf, table, points=25):
    """Largest gap between the exact Poissonized prelimit CDF and the limit on the table grid.

    This is the KS distance an infinite number of replications would report
    (up to Poissonization); None when the laws are not Pareto.
    """
    z = np.array([row[0] for row in table])[:: max(1, len(table) // points)]
    try:
        exact = poissonized_max_cdf(params, n, norm * z, box_measure=mu)
    except TypeError:
        return None
    return float(np.max(np.abs(exact - cdf(z))))


def noise_oracle(params, boxes, reps, rng):
    """Annealed noise-dominance limit: every realization gets a fresh environment."""
    return sample_box_values("noise", boxes, reps, rng, alpha_prime=float(params.alpha_prime), params=params)


def run_regime_experiment(cfg: ExperimentConfig) -> VerificationReport:
    rep = VerificationReport(cfg.suite.value, cfg.to_dict(), family_level=cfg.tol("family_level"))
    boxes = as_boxes(cfg.boxes, dim=1)
    reps = cfg.reps or 2000
    method = cfg.opt("method", "counts")
    level = cfg.tol("ks_level")
    calib_reps = int(cfg.opt("calibration_reps", 5000))
    for idx, name in enumerate(cfg.regimes()):
        params, reg = _resolve_regime(cfg, name)
        n = cfg.n or (10**6 if reg is Regime.CRITICAL else 10**5)
        tol = cfg.tol("ks_regime_critical" if reg is Regime.CRITICAL else "ks_regime")
        seed = cfg.seed + 104729 * idx
        with _timed(rep, f"calibration[{reg.short}]"):
            rep.calibration.extend(_regime_calibration(params, reg, boxes, calib_reps, seed, level))
        with _timed(rep, f"tests[{reg.short}]"):
            norm = _normalizer_record(reg, n, params, rep)
            sample = model_maxima(params, "discrete", n, boxes, reps, seed, TAG_MODEL, norm.value, cfg.threads, method)
            if reg is Regime.NOISE_DOMINANCE:
                o_reps = int(cfg.opt("oracle_reps", 20000))
                oracle = noise_oracle(params, boxes, o_reps, _tag_stream(seed, TAG_ORACLE))
                for j, b in enumerate(boxes):
                    d = two_sample_ks(sample[:, j], oracle[:, j])
                    rep.records.append(
                        check(f"regime[{reg.short}]ks2_vs_annealed_oracle[box={b}]", "ks2", d, tol, "lt",
                              p_value=two_sample_pvalue(d, reps, o_reps), n=n, reps=reps, oracle_reps=o_reps,
                              normalizer=norm.value)
                    )
                if method == "counts" and cfg.opt("quenched_check", True):
                    rep.records.extend(_quenched_records(params, boxes, n, reps, seed, norm.value, tol, cfg.threads))
            else:
                for j, b in enumerate(boxes):
                    cdf = lambda z, m=b.volume: limit_cdf(reg, params, m, z)
                    d = ks_statistic(sample[:, j], cdf)
                    table = cdf_table(sample[:, j], cdf)
                    rep.records.append(
                        check(f"regime[{reg.short}]ks_vs_limit[box={b}]", "ks", d, tol, "lt", n=n, reps=reps,
                              normalizer=norm.value, cdf_table=table,
                              prelimit_distance=_prelimit_distance(params, n, b.volume, norm.value, cdf, table))
                    )
    return rep


def _regime_calibration(params, reg, boxes, reps, seed, level):
    rng = _tag_stream(seed, TAG_CALIB)
    out = []
    ap, b, a = float(params.alpha_prime), float(params.beta), float(params.alpha)
    if reg is Regime.SIGNAL_DOMINANCE:
        v = sample_box_values("signal", boxes, reps, rng, alpha=a, beta=b, noise_law=params.noise_law)
    elif reg is Regime.CRITICAL:
        v = sample_box_values("critical", boxes, reps, rng, alpha_prime=ap, beta=b)
    else:
        # annealed oracle vs its closed form given each realization's moment
        batch_v = noise_oracle(params, boxes, reps, rng)
        m = np.array(
            [SignalEnvironment.draw(params, rng.child(99, i)).moment for i in range(reps)]
        )
        direct = (m[:, None] * np.array([bx.volume for bx in boxes])[None, :]) ** (1.0 / ap) * frechet_sample(
            ap, 1.0, rng.child(98), (reps, len(boxes))
        )
        for j, bx in enumerate(boxes):
            d = two_sample_ks(batch_v[:, j], direct[:, j])
            out.append(check(f"calibration[{reg.short}]annealed_oracle[box={bx}]", "ks2", d,
                             two_sample_threshold(reps, reps, level), "lt", p_value=two_sample_pvalue(d, reps, reps)))
        return out
    for j, bx in enumerate(boxes):
        out.append(_ks_record(f"calibration[{reg.short}]limit_sampler[box={bx}]", v[:, j],
                              lambda z, m=bx.volume: limit_cdf(reg, params, m, z), level))
    return out


def _quenched_records(params, boxes, n, reps, seed, scale, tol, threads):
    """One frozen environment: model maxima vs exp(-m mu(B) z^(-alpha'))."""
    env = SignalEnvironment.draw(params, _tag_stream(seed, TAG_ENV))
    sample = model_maxima(params, "discrete", n, boxes, reps, seed, TAG_ENV, scale, threads, "counts", env)
    ap = float(params.alpha_prime)
    out = []
    for j, b in enumerate(boxes):
        cdf = lambda z, m=b.volume: frechet_cdf(env.moment * m, ap, z)
        d = ks_statistic(sample[:, j], cdf)
        out.append(check(f"regime[noise]quenched_ks[box={b}]", "ks", d, tol, "lt", moment=env.moment,
                         cdf_table=cdf_table(sample[:, j], cdf)))
    return out


# ---------------------------------------------------------------------------
# POISSONIZATION


def _cdf_at(sample, z):
    s = np.sort(sample)
    return np.searchsorted(s, z, side="right") / s.size


def run_poissonization_experiment(cfg: ExperimentConfig) -> VerificationReport:
    rep = VerificationReport(cfg.suite.value, cfg.to_dict(), family_level=cfg.tol("family_level"))
    boxes = as_boxes(cfg.boxes, dim=1)
    reps = cfg.reps or 2000
    method = cfg.opt("method", "counts")
    level = cfg.tol("ks_level")
    tol = cfg.tol("ks_poissonization")
    deltas = cfg.opt("deltas", [0.05, 0.2])
    mult = cfg.tol("stderr_mult")
    names = cfg.regimes() if cfg.regime is not None or cfg.alpha is not None else list(CANONICAL)
    for idx, name in enumerate(names):
        params, reg = _resolve_regime(cfg, name)
        n = cfg.n or int(cfg.lam or 10**5)
        seed = cfg.seed + 104729 * idx
        norm = solve_normalizer(normalizer_kind(reg), n, params).value
        with _timed(rep, f"calibration[{reg.short}]"):
            a = model_maxima(params, "discrete", n, boxes, reps, seed, TAG_CALIB, norm, cfg.threads, method)
            b = model_maxima(params, "discrete", n, boxes, reps, seed + 1, TAG_CALIB, norm, cfg.threads, method)
            for j, bx in enumerate(boxes):
                d = two_sample_ks(a[:, j], b[:, j])
                rep.calibration.append(check(f"calibration[{reg.short}]discrete_vs_discrete[box={bx}]", "ks2", d,
                                             two_sample_threshold(reps, reps, level), "lt",
                                             p_value=two_sample_pvalue(d, reps, reps)))
        with _timed(rep, f"tests[{reg.short}]"):
            disc = model_maxima(params, "discrete", n, boxes, reps, seed, TAG_MODEL, norm, cfg.threads, method)
            pois = model_maxima(params, "poisson", n, boxes, reps, seed, TAG_POISSON, norm, cfg.threads, method)
            for j, bx in enumerate(boxes):
                d = two_sample_ks(disc[:, j], pois[:, j])
                rep.records.append(check(f"poissonization[{reg.short}]ks2[box={bx}]", "ks2", d, tol, "lt",
                                         p_value=two_sample_pvalue(d, reps, reps), n=n, reps=reps))
            spread = {}
            for k, delta in enumerate(deltas):
                hi = model_maxima(params, "poisson", n * (1 + delta), boxes, reps, seed, 40 + 2 * k, norm, cfg.threads, method)
                lo = model_maxima(params, "poisson", n * (1 - delta), boxes, reps, seed, 41 + 2 * k, norm, cfg.threads, method)
                spread[delta] = max(two_sample_ks(hi[:, j], lo[:, j]) for j in range(len(boxes)))
                if k:
                    continue
                worst = -np.inf
                for j in range(len(boxes)):
                    z = np.quantile(disc[:, j], np.linspace(0.02, 0.98, 49))
                    fd, fh, fl = _cdf_at(disc[:, j], z), _cdf_at(hi[:, j], z), _cdf_at(lo[:, j], z)
                    se = np.sqrt((fd * (1 - fd) + np.maximum(fh * (1 - fh), fl * (1 - fl))) / reps)
                    worst = max(worst, float(np.max(np.maximum(fh - fd, fd - fl) - mult * se)))
                rep.records.append(check(f"poissonization[{reg.short}]sandwich[delta={delta:g}]", "excess", worst, 0.0,
                                         "lt", n=n))
            if len(deltas) >= 2:
                d_small, d_big = spread[deltas[0]], spread[deltas[-1]]
                slack = two_sample_threshold(reps, reps, level)
                rep.records.append(check(f"poissonization[{reg.short}]delta_consistency", "ks2_gap", d_small - d_big, slack,
                                         "lt", spread={str(k): v for k, v in spread.items()}))
    return rep


RUNNERS = {
    Suite.SIBUYA: run_sibuya_experiment,
    Suite.STABLE: run_stable_experiment,
    Suite.OCCUPANCY: run_occupancy_experiment,
    Suite.RSM: run_rsm_experiment,
    Suite.REGIME: run_regime_experiment,
    Suite.POISSONIZATION: run_poissonization_experiment,
}


def run_experiment(cfg: ExperimentConfig) -> VerificationReport:
    t0 = time.perf_counter()
    rep = RUNNERS[cfg.suite](cfg)
    rep.timing["total"] = round(time.perf_counter() - t0, 3)
    return rep
