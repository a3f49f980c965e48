"""Goodness-of-fit statistics.

Statistics are computed here; null distributions come from scipy.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

# asymptotic Kolmogorov quantile at level 0.01
KS_C01 = float(stats.kstwobign.isf(0.01))


def _nonempty(x, name="sample"):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError(f"empty {name}")
    return x


def ks_statistic(sample, cdf) -> float:
    """sup_x |F_emp(x) - F(x)| for a continuous F, attained at sample points."""
    x = np.sort(_nonempty(sample))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_threshold(n: int, level: float = 0.01) -> float:
    """Asymptotic one-sample critical value c(level)/sqrt(n); c(0.01) = 1.628."""
    return float(stats.kstwobign.isf(level)) / math.sqrt(n)


def ks_pvalue(d: float, n: int) -> float:
    return float(stats.kstwo.sf(d, n))


def two_sample_ks(a, b) -> float:
    """sup_x |F_a(x) - F_b(x)| over the pooled sample."""
    a = np.sort(_nonempty(a, "first sample"))
    b = np.sort(_nonempty(b, "second sample"))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def two_sample_threshold(n: int, m: int, level: float = 0.01) -> float:
    return float(stats.kstwobign.isf(level)) * math.sqrt((n + m) / (n * m))


def two_sample_pvalue(d: float, n: int, m: int) -> float:
    return float(stats.kstwobign.sf(d * math.sqrt(n * m / (n + m))))


def chi_square_gof(counts, probs, total: int | None = None):
    """Pearson chi-square of observed ``counts`` against cell probabilities.

    If ``probs`` sums to less than one, the missing mass becomes a final
    cell whose count is ``total - sum(counts)``.  Returns (statistic, dof, p).
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if counts.size == 0 or counts.shape != probs.shape:
        raise ValueError("counts and probs must be nonempty and aligned")
    total = int(counts.sum()) if total is None else int(total)
    rest = 1.0 - probs.sum()
    if rest > 1e-12:
        counts = np.append(counts, total - counts.sum())
        probs = np.append(probs, rest)
    expected = total * probs
    stat = float(np.sum((counts - expected) ** 2 / expected))
    dof = counts.size - 1
    return stat, dof, float(stats.chi2.sf(stat, dof))


def mean_and_stderr(x):
    x = _nonempty(x)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf


def cdf_table(sample, cdf, points: int = 50):
    """Rows (z, F_emp(z), F_target(z)) at evenly spaced empirical quantiles."""
    x = np.sort(_nonempty(sample))
    qs = (np.arange(1, points + 1) - 0.5) / points
    z = np.quantile(x, qs)
    emp = np.searchsorted(x, z, side="right") / x.size
    tgt = np.asarray(cdf(z), dtype=float)
    return [[float(a), float(b), float(c)] for a, b, c in zip(z, emp, tgt)]
