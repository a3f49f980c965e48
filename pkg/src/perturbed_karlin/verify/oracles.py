"""Independent constructions used only as test oracles."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma as gamma_fn

from ..rng import RngStream
from ..samplers import _check_beta


def ppp_stable_sample(beta, size: int, rng: RngStream, jumps: int = 1000, chunk: int = 20000) -> np.ndarray:
    """S_beta as the sum of subordinator jumps at time 1.

    Jumps (Gamma(1 - beta) Gamma_l)^(-1/beta), l <= ``jumps``, from the Levy
    measure beta / Gamma(1 - beta) x^(-beta-1) dx; the jumps below the last
    kept one are replaced by their mean beta J^(1-beta) / ((1 - beta) Gamma(1 - beta)).
    """
    beta = _check_beta(beta)
    g1b = gamma_fn(1.0 - beta)
    out = np.empty(int(size))
    for c, lo in enumerate(range(0, out.size, chunk)):
        hi = min(out.size, lo + chunk)
        g = np.cumsum(rng.child(c).exponential((hi - lo, jumps)), axis=1)
        j = (g1b * g) ** (-1.0 / beta)
        small = beta * j[:, -1] ** (1.0 - beta) / ((1.0 - beta) * g1b)
        out[lo:hi] = j.sum(axis=1) + small
    return out


def ppp_jumps_for(beta, sd: float = 1e-3, cap: int = 1000) -> int:
    """Fewest kept jumps (doubling from 32) whose dropped-jump sd is below ``sd``."""
    k = 32
    while k < cap and ppp_remainder_sd(beta, k) > sd:
        k *= 2
    return min(k, cap)


def ppp_remainder_sd(beta, jumps: int) -> float:
    """Rough sd of the dropped small jumps, taking Gamma_L = L."""
    g1b = gamma_fn(1.0 - beta)
    j = (g1b * jumps) ** (-1.0 / beta)
    return math.sqrt(beta * j ** (2.0 - beta) / ((2.0 - beta) * g1b))
