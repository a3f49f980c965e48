"""Closed-form limit laws, tails and normalizing sequences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from numbers import Rational

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .samplers import DomainError, ParetoParam

CRITICAL_TOL = 1e-12


class Regime(str, Enum):
    NOISE_DOMINANCE = "NOISE_DOMINANCE"
    SIGNAL_DOMINANCE = "SIGNAL_DOMINANCE"
    CRITICAL = "CRITICAL"

    @property
    def short(self) -> str:
        return {"NOISE_DOMINANCE": "noise", "SIGNAL_DOMINANCE": "signal", "CRITICAL": "critical"}[self.value]


def _is_exact(x) -> bool:
    return isinstance(x, Rational) and not isinstance(x, bool)


def regime_classify(alpha, alpha_prime, beta) -> Regime:
    """Noise dominance iff alpha > alpha' beta, signal iff <, critical iff =.

    Exact comparison when every input is an int or Fraction; otherwise
    equality within 1e-12.
    """
    if min(alpha, alpha_prime) <= 0 or not 0 < beta < 1:
        raise DomainError("need alpha, alpha' > 0 and beta in (0, 1)")
    if all(_is_exact(v) for v in (alpha, alpha_prime, beta)):
        diff = Fraction(alpha) - Fraction(alpha_prime) * Fraction(beta)
        if diff == 0:
            return Regime.CRITICAL
    else:
        diff = float(alpha) - float(alpha_prime) * float(beta)
        if abs(diff) <= CRITICAL_TOL * max(1.0, abs(float(alpha))):
            return Regime.CRITICAL
    return Regime.NOISE_DOMINANCE if diff > 0 else Regime.SIGNAL_DOMINANCE


def frechet_cdf(theta, alpha, z):
    """exp(-theta z^(-alpha)); identically 1 when theta = 0."""
    z = np.asarray(z, dtype=float)
    if theta == 0:
        out = np.ones_like(z)
    else:
        with np.errstate(divide="ignore"):
            out = np.exp(-theta * np.where(z > 0, z, 0.0) ** (-float(alpha)))
    return float(out) if out.ndim == 0 else out


def logistic_fdd_cdf(mus, xs, alpha_prime, beta):
    """exp(-(sum_i mu_i x_i^(-alpha'))^beta): joint CDF of the critical limit on disjoint sets."""
    mus = np.asarray(mus, dtype=float)
    xs = np.asarray(xs, dtype=float)
    if mus.shape[0] != xs.shape[0]:
        raise ValueError(f"{len(mus)} measures but {len(xs)} thresholds")
    if np.any(mus < 0) or mus.sum() > 1.0 + 1e-12:
        raise DomainError("box measures must be nonnegative with total at most 1")
    with np.errstate(divide="ignore", over="ignore"):
        inner = np.sum(mus.reshape(mus.shape + (1,) * (xs.ndim - 1)) * xs ** (-float(alpha_prime)), axis=0)
    out = np.exp(-(inner ** float(beta)))
    return float(out) if np.ndim(out) == 0 else out


def _require_pareto(law, what="noise law"):
    if not isinstance(law, ParetoParam):
        raise TypeError(f"closed form needs a Pareto {what}")
    return law


def ztilde_tail(noise_law, beta, x):
    """P(max of Sibuya(beta)-many noise draws > x) = min(1, F_Z-bar(x))^beta."""
    sf = np.minimum(1.0, np.asarray(noise_law.sf(x), dtype=float))
    out = sf ** float(beta)
    return float(out) if out.ndim == 0 else out


def ztilde_alpha_moment(noise_law: ParetoParam, beta, alpha) -> float:
    """E Ztilde^alpha for Pareto noise: x_min^alpha (1 + alpha / (alpha' beta - alpha))."""
    law = _require_pareto(noise_law)
    kappa = law.alpha * float(beta)
    if kappa <= alpha:
        raise DomainError(f"E Ztilde^alpha diverges: alpha' beta = {kappa:g} <= alpha = {alpha:g}")
    return law.x_min ** alpha * (1.0 + alpha / (kappa - alpha))


def _two_pareto_tail(a, b, x):
    # P(E * W > x), E ~ Pareto(a), W ~ Pareto(b), both x_min = 1, x >= 1
    lx = np.log(x)
    if math.isclose(a, b, rel_tol=1e-12):
        return x ** (-a) * (1.0 + a * lx)
    return (b * x ** (-a) - a * x ** (-b)) / (b - a)


def product_tail(signal_law, noise_law, beta, x):
    """P(eps * Ztilde > x) with eps and Ztilde independent, Ztilde-bar = F_Z-bar^beta.

    Exact for Pareto laws (in the critical case x^(-alpha)(1 + alpha ln x));
    otherwise by quadrature over the quantile of Ztilde.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(signal_law, ParetoParam) and isinstance(noise_law, ParetoParam):
        scale = signal_law.x_min * noise_law.x_min
        xs = x / scale
        if np.any(xs < 1):
            raise DomainError("product tail is 1 below the product of the lower endpoints")
        out = _two_pareto_tail(signal_law.alpha, noise_law.alpha * float(beta), xs)
        return float(out) if np.ndim(out) == 0 else out

    def one(xv):
        f = lambda u: float(signal_law.sf(xv / float(noise_law.isf(u ** (1.0 / beta)))))
        return integrate.quad(f, 0.0, 1.0, limit=200, epsabs=1e-13, epsrel=1e-12)[0]

    out = np.vectorize(one)(x)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# normalizing sequences


class BracketingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NormalizerResult:
    kind: str
    n: int
    value: float
    residual: float

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "value": self.value, "residual": self.residual}


def _root_of_tail(lhs, x0: float) -> tuple[float, float]:
    """Root of the decreasing map x -> lhs(x) - 1 above x0, bisected in log space."""
    lo = x0
    if lhs(lo) < 1.0:
        raise BracketingError("defining equation has no root above the lower endpoint")
    hi = 2.0 * lo
    for _ in range(2000):
        if lhs(hi) < 1.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketingError("could not bracket the root: tail hook not decreasing to 0?")
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(400):
        mid = 0.5 * (llo + lhi)
        if mid in (llo, lhi):
            break
        if lhs(math.exp(mid)) >= 1.0:
            llo = mid
        else:
            lhi = mid
    # the log grid is coarser than float spacing; finish on adjacent floats
    lo, hi = math.exp(llo), math.exp(lhi)
    while lo > x0 and lhs(lo) < 1.0:
        lo = math.nextafter(lo, 0.0)
    while lhs(hi) >= 1.0:
        hi = math.nextafter(hi, math.inf)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if lhs(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    cands = [lo, hi]
    res = [abs(lhs(c) - 1.0) for c in cands]
    i = int(np.argmin(res))
    return cands[i], res[i]


def solve_normalizer(kind: str, n: int, params) -> NormalizerResult:
    """Solve the defining equation of a_n, b_n or c_n.

    a_n: Gamma(1-beta) nu(n) F_eps-bar(a) = 1
    b_n: Gamma(1-beta) nu(n) P(eps Ztilde > b) = 1
    c_n: n F_Z-bar(c) = 1
    """
    from .karlin_process import nu

    kind = kind.lower().rstrip("_n")
    n = int(n)
    if n < 1:
        raise DomainError("n must be >= 1")
    beta = float(params.beta)
    if kind == "c":
        law = params.noise_law
        lhs = lambda x: n * float(law.sf(x))
        x0 = getattr(law, "x_min", 1e-300)
    else:
        weight = gamma_fn(1.0 - beta) * nu(n, params.label_law)
        if kind == "a":
            law = params.signal_law
            lhs = lambda x: weight * float(law.sf(x))
            x0 = getattr(law, "x_min", 1e-300)
        elif kind == "b":
            sig, noi = params.signal_law, params.noise_law
            lhs = lambda x: weight * float(product_tail(sig, noi, beta, x))
            x0 = getattr(sig, "x_min", 1.0) * getattr(noi, "x_min", 1.0)
        else:
            raise ValueError(f"unknown normalizer kind {kind!r}")
    value, residual = _root_of_tail(lhs, x0)
    return NormalizerResult(kind + "_n", n, float(value), float(residual))


def normalizer_kind(regime: Regime) -> str:
    return {Regime.SIGNAL_DOMINANCE: "a", Regime.CRITICAL: "b", Regime.NOISE_DOMINANCE: "c"}[regime]


def limit_cdf(regime: Regime, params, box_measure, z):
    """Closed-form marginal of the scaled box maximum where one exists.

    Signal: exp(-mu^beta E Ztilde^alpha z^-alpha); critical: exp(-mu^beta z^-(alpha' beta)).
    The noise-dominance limit has a random (environment) scale and no closed form.
    """
    beta = float(params.beta)
    if regime is Regime.SIGNAL_DOMINANCE:
        c = ztilde_alpha_moment(params.noise_law, beta, float(params.alpha))
        return frechet_cdf(box_measure**beta * c, float(params.alpha), z)
    if regime is Regime.CRITICAL:
        return logistic_fdd_cdf([box_measure], np.atleast_1d(z)[None, ...], float(params.alpha_prime), beta)
    raise DomainError("noise-dominance limit is environment dependent; use the Monte Carlo oracle")


# ---------------------------------------------------------------------------
# exact prelimit law (Poissonized, Pareto marginals)


def poissonized_max_cdf(params, lam, x, box_measure=1.0, nodes: int = 160, head_rate: float = 1e-3):
    """P(max of eps_Y Z over a Poisson-Karlin box with mean lam mu(B) <= x).

    Labels are independent under Poissonization, so the law factorizes:
    log P = sum_l log E exp(-t_l F_Z-bar(x / eps)), t_l = lam mu(B) p_l.
    Labels with t_l > ``head_rate`` are integrated over eps by Gauss-Legendre;
    the rest use the cumulant expansion -t m1 + t^2 (m2 - m1^2) / 2, whose
    error is O(sum t_l^3).  Needs Pareto signal and noise and the zeta label law.
    """
    sig, noi, law = params.signal_law, params.noise_law, params.label_law
    _require_pareto(sig, "signal law")
    _require_pareto(noi)
    from scipy.special import zeta

    rate = float(lam) * float(box_measure)
    if not rate > 0:
        raise DomainError("lam * mu(B) must be positive")
    a, ap = sig.alpha, noi.alpha
    s, zs = law.s, law.zeta_s
    n_head = max(1, int(math.ceil((rate / (head_rate * zs)) ** law.beta)))
    t = rate * np.arange(1, n_head + 1, dtype=float) ** -s / zs
    r1 = rate * float(zeta(s, n_head + 1.0)) / zs
    r2 = rate**2 * float(zeta(2 * s, n_head + 1.0)) / zs**2
    g, w = np.polynomial.legendre.leggauss(nodes)
    scale = sig.x_min * noi.x_min

    def one(xv):
        xs = xv / scale
        if xs <= 1.0:
            return 0.0
        # eps = x_min v^(-1/a); F_Z-bar(x / eps) = 1 once v <= v_star
        log_vs = -a * math.log(xs)
        sv = 0.5 * log_vs * (1.0 - g)  # log v on (log v_star, 0)
        wv = -0.5 * log_vs * w * np.exp(sv)
        fz = np.exp(ap * (-sv / a - math.log(xs)))
        head = np.exp(-np.outer(t, fz)) @ wv + math.exp(log_vs) * np.exp(-t)
        m1 = _two_pareto_tail(a, ap, xs)
        m2 = _two_pareto_tail(a, 2 * ap, xs)
        return float(np.sum(np.log(head)) - r1 * m1 + 0.5 * r2 * (m2 - m1**2))

    x = np.asarray(x, dtype=float)
    out = np.exp(np.vectorize(one)(x))
    return float(out) if out.ndim == 0 else out
