"""Exact seeded samplers for the primitive random objects.

Sibuya cluster sizes, Pareto marginals, Frechet variables, Poisson arrival
times, zeta-law labels and positive stable variables.  All samplers take an
:class:`~perturbed_karlin.rng.RngStream` and an optional ``size`` and follow
the numpy convention: ``size=None`` returns a scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import gammaln, poch, zeta

from .rng import RngStream

# int64 representational ceiling for heavy-tailed integer draws
INT_CAP = 2**62


class DomainError(ValueError):
    """Parameter outside the domain of a distribution."""


def _check_beta(beta) -> float:
    beta = float(beta)
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    return beta


def _scalar(x, size):
    return x.item() if size is None else x


# ---------------------------------------------------------------------------
# Sibuya


@dataclass(frozen=True)
class SibuyaParam:
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "beta", _check_beta(self.beta))


def sibuya_pmf(beta, k):
    """P(Q = k) = beta Gamma(k - beta) / (Gamma(1 - beta) Gamma(k + 1)), in log space."""
    beta = _check_beta(beta)
    k_arr = np.asarray(k)
    if np.any(k_arr < 1) or np.any(k_arr != np.floor(k_arr)):
        raise DomainError("Sibuya support is the positive integers")
    kf = k_arr.astype(float)
    logp = math.log(beta) + gammaln(kf - beta) - gammaln(1.0 - beta) - gammaln(kf + 1.0)
    out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def sibuya_logsf(beta, k):
    """log P(Q > k) = log prod_{j<=k} (1 - beta/j), for k >= 0."""
    beta = _check_beta(beta)
    kf = np.asarray(k, dtype=float)
    out = np.log(poch(kf + 1.0, -beta)) - gammaln(1.0 - beta)
    return np.where(kf <= 0, 0.0, out)


_SIBUYA_TABLE = 10**4


@lru_cache(maxsize=64)
def _sibuya_survival_table(beta: float) -> np.ndarray:
    # S(k) for k = 1.._SIBUYA_TABLE via the sequential-trial ratios 1 - beta/k
    j = np.arange(1, _SIBUYA_TABLE + 1, dtype=float)
    return np.exp(np.cumsum(np.log1p(-beta / j)))


def _int_bisect(logsf, lo, hi, logu):
    """Smallest k in (lo, hi] with logsf(k) <= logu, elementwise; logsf(hi) <= logu assumed."""
    lo = lo.copy()
    hi = hi.copy()
    logu = np.broadcast_to(logu, lo.shape)
    active = np.flatnonzero(hi - lo > 1)
    while active.size:
        mid = lo[active] + (hi[active] - lo[active]) // 2
        ok = logsf(mid) <= logu[active]
        hi[active[ok]] = mid[ok]
        lo[active[~ok]] = mid[~ok]
        active = active[hi[active] - lo[active] > 1]
    return hi


def sibuya_from_uniform(beta, u):
    """Inverse-survival transform: Q = 1 + #{k >= 1 : P(Q > k) > u}.

    Tabulated survival products cover k <= 10^4; beyond that the survival
    function is inverted exactly by integer bisection.  Values are capped at
    ``INT_CAP``.
    """
    beta = _check_beta(beta)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    table = _sibuya_survival_table(beta)
    q = np.searchsorted(-table, -u, side="left") + 1
    tail = q > _SIBUYA_TABLE
    if np.any(tail):
        ut = u[tail]
        logu = np.log(ut)
        with np.errstate(over="ignore"):
            guess = np.exp((logu + gammaln(1.0 - beta)) / -beta)
            hi = np.minimum(np.maximum(2.0 * guess, 2.0 * _SIBUYA_TABLE), float(INT_CAP)).astype(np.int64)
        f = lambda k: sibuya_logsf(beta, k)
        for _ in range(80):
            short = (f(hi) > logu) & (hi < INT_CAP)
            if not np.any(short):
                break
            hi = np.where(short, np.minimum(hi * 4, INT_CAP), hi)
        lo = np.full_like(hi, _SIBUYA_TABLE)
        res = _int_bisect(f, lo, hi, logu)
        res = np.where(f(res) > logu, INT_CAP, res)
        q = q.astype(np.int64)
        q[tail] = res
    return q.astype(np.int64)


def sibuya_sample(param, rng: RngStream, size=None):
    """Sibuya(beta) draws; ``param`` is a SibuyaParam or a bare beta."""
    beta = param.beta if isinstance(param, SibuyaParam) else _check_beta(param)
    u = rng.uniform(size)
    out = sibuya_from_uniform(beta, u)
    return int(out[0]) if size is None else out.reshape(np.shape(u))


# ---------------------------------------------------------------------------
# continuous marginals


@dataclass(frozen=True)
class ParetoParam:
    """Pareto law with tail (x / x_min)^(-alpha) on [x_min, inf)."""

    alpha: float
    x_min: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.x_min > 0):
            raise DomainError("Pareto needs alpha > 0 and x_min > 0")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "x_min", float(self.x_min))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x <= self.x_min, 1.0, (np.maximum(x, self.x_min) / self.x_min) ** -self.alpha)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def isf(self, u):
        return self.x_min * np.asarray(u, dtype=float) ** (-1.0 / self.alpha)

    def sample(self, rng: RngStream, size=None):
        return pareto_sample(self, rng, size)

    def to_dict(self):
        return {"law": "pareto", "alpha": self.alpha, "x_min": self.x_min}


@dataclass(frozen=True)
class InverseCdfLaw:
    """Generic positive law given by its survival function and inverse.

    ``isf(u)`` must map uniforms on (0, 1) to the law; ``sf`` is used by the
    normalizer solvers.
    """

    isf: Callable
    sf: Callable
    name: str = "custom"

    def cdf(self, x):
        return 1.0 - self.sf(x)

    def sample(self, rng: RngStream, size=None):
        out = np.asarray(self.isf(rng.uniform(size)), dtype=float)
        return _scalar(out, size)

    def to_dict(self):
        return {"law": self.name}


def pareto_sample(param: ParetoParam, rng: RngStream, size=None):
    out = param.isf(rng.uniform(size))
    return _scalar(np.asarray(out), size)


def frechet_ppf(u, alpha, scale=1.0):
    """Inverse of z -> exp(-scale z^(-alpha))."""
    return (scale / -np.log(np.asarray(u, dtype=float))) ** (1.0 / alpha)


def frechet_sample(alpha, scale, rng: RngStream, size=None):
    """X with P(X <= z) = exp(-scale z^(-alpha)), by inversion."""
    if not (alpha > 0 and scale > 0):
        raise DomainError("Frechet needs alpha > 0 and scale > 0")
    return _scalar(np.asarray(frechet_ppf(rng.uniform(size), alpha, scale)), size)


def poisson_arrivals(count: int, rng: RngStream) -> np.ndarray:
    """First ``count`` arrival times of a unit-rate Poisson process."""
    if count < 1:
        raise DomainError("count must be >= 1")
    return np.cumsum(rng.exponential(int(count)))


# ---------------------------------------------------------------------------
# zeta labels

_HEAD = 2048


@dataclass(frozen=True, eq=False)
class ZetaLabelLaw:
    """Labels with p_k = k^(-1/beta) / zeta(1/beta).

    ``tail`` holds the remainders R(k) = P(Y > k) for k = 0..k_max; beyond
    k_max draws are inverted through the Hurwitz zeta function.
    """

    beta: float
    k_max: int = 10**6
    tail: np.ndarray = field(init=False, repr=False)
    _neg_tail: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        beta = _check_beta(self.beta)
        object.__setattr__(self, "beta", beta)
        s = 1.0 / beta
        zs = float(zeta(s))
        k = np.arange(1, self.k_max + 1, dtype=float)
        p = k**-s / zs
        boundary = float(zeta(s, self.k_max + 1.0)) / zs
        # reverse accumulation keeps small remainders accurate
        tail = np.empty(self.k_max + 1)
        tail[-1] = boundary
        tail[:-1] = boundary + np.cumsum(p[::-1])[::-1]
        if abs(tail[0] - 1.0) > 1e-9:
            raise RuntimeError(
                f"zeta label table inconsistent at k_max={self.k_max}: total mass {tail[0]!r}"
            )
        tail[0] = 1.0
        object.__setattr__(self, "tail", tail)
        object.__setattr__(self, "_neg_tail", -tail[1:])

    @property
    def s(self) -> float:
        return 1.0 / self.beta

    @property
    def zeta_s(self) -> float:
        return float(zeta(self.s))

    def pmf(self, k):
        k = np.asarray(k, dtype=float)
        out = k**-self.s / self.zeta_s
        return float(out) if out.ndim == 0 else out

    def sf(self, k):
        """P(Y > k)."""
        k = np.asarray(k, dtype=float)
        out = np.where(k < 1, 1.0, zeta(self.s, np.maximum(k, 1.0) + 1.0) / self.zeta_s)
        return float(out) if out.ndim == 0 else out

    def from_uniform(self, v):
        """Label = 1 + #{k >= 1 : P(Y > k) > v}."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        neg = self._neg_tail
        # most mass sits on small labels: search a cache-resident head first
        lab = np.searchsorted(neg[:_HEAD], -v, side="left").astype(np.int64) + 1
        deep = lab > _HEAD
        if np.any(deep):
            lab[deep] = np.searchsorted(neg, -v[deep], side="left") + 1
        far = lab > self.k_max
        if np.any(far):
            lab[far] = self._tail_inverse(v[far])
        return lab

    def _tail_inverse(self, v):
        s, zs = self.s, self.zeta_s
        logv = np.log(v)
        logsf = lambda k: np.log(zeta(s, k.astype(float) + 1.0) / zs)
        # P(Y > k) = (k + 1/2)^(1-s) / ((s - 1) zeta(s)) up to a relative O(k^-2),
        # so a narrow bracket around the inverted asymptote usually suffices
        with np.errstate(over="ignore"):
            guess = (v * (s - 1.0) * zs) ** (-1.0 / (s - 1.0)) - 0.5
        cap = float(INT_CAP)
        lo = np.clip(guess * (1 - 1e-6) - 2.0, self.k_max, cap).astype(np.int64)
        hi = np.clip(guess * (1 + 1e-6) + 2.0, self.k_max + 1, cap).astype(np.int64)
        bad = logsf(lo) <= logv
        lo[bad] = self.k_max
        for _ in range(80):
            short = (logsf(hi) > logv) & (hi < INT_CAP)
            if not np.any(short):
                break
            hi = np.where(short, np.minimum(hi * 4, INT_CAP), hi)
        res = _int_bisect(logsf, lo, hi, logv)
        over = logsf(res) > logv
        if np.any(over):
            # beyond int64 reach: map each draw injectively into [INT_CAP, 2 INT_CAP)
            # so distinct draws stay distinct labels
            frac = v[over] / (self.sf(INT_CAP) * (1.0 + 1e-12))
            res[over] = INT_CAP + (frac * (INT_CAP - 1)).astype(np.int64)
        return res

    def sample(self, rng: RngStream, size=None):
        return zeta_label_sample(self, rng, size)


@lru_cache(maxsize=16)
def zeta_label_law(beta: float, k_max: int = 10**6) -> ZetaLabelLaw:
    """Cached constructor; the prefix table costs a few tens of milliseconds."""
    return ZetaLabelLaw(float(beta), int(k_max))


def zeta_label_sample(law: ZetaLabelLaw, rng: RngStream, size=None):
    v = rng.uniform(size)
    out = law.from_uniform(v)
    return int(out[0]) if size is None else out.reshape(np.shape(v))


# ---------------------------------------------------------------------------
# positive stable


@dataclass(frozen=True)
class StableParam:
    """Totally skewed beta-stable law with Laplace transform exp(-s^beta)."""

    beta: float

    def __post_init__(self):
        object.__setattr__(self, "beta", _check_beta(self.beta))


def stable_from_uniforms(beta, u, e):
    """Kanter's representation: S = (A(pi u) / e)^((1 - beta) / beta).

    ``u`` uniform on (0, 1), ``e`` standard exponential.  Evaluated in log
    space so beta close to 1 stays finite.
    """
    beta = _check_beta(beta)
    w = np.pi * np.asarray(u, dtype=float)
    c = (1.0 - beta) / beta
    logs = (
        np.log(np.sin(beta * w))
        + c * np.log(np.sin((1.0 - beta) * w))
        - np.log(np.sin(w)) / beta
        - c * np.log(np.asarray(e, dtype=float))
    )
    return np.exp(logs)


def stable_sample(param, rng: RngStream, size=None):
    beta = param.beta if isinstance(param, StableParam) else _check_beta(param)
    u = rng.uniform(size)
    e = rng.exponential(size)
    return _scalar(np.asarray(stable_from_uniforms(beta, u, e)), size)
