"""Discrete-time perturbed Karlin model X_i = eps_{Y_i} Z_i."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, TextIO

import numpy as np

from .analytic import Regime, regime_classify
from .boxes import Box, as_boxes
from .rng import RngStream
from .samplers import InverseCdfLaw, ParetoParam, ZetaLabelLaw, zeta_label_law

DEFAULT_MAX_N = 10**8


class ResourceLimitError(RuntimeError):
    pass


def max_n() -> int:
    return int(os.environ.get("KARLIN_MAX_N", DEFAULT_MAX_N))


def check_size(n: int, what: str = "n") -> None:
    limit = max_n()
    if n > limit:
        raise ResourceLimitError(f"{what}={n} exceeds the configured maximum {limit} (KARLIN_MAX_N)")


def parse_number(x):
    """Numbers from configs: ``"1/2"`` becomes an exact Fraction, ints stay exact."""
    if isinstance(x, str):
        x = x.strip()
        if "/" in x or ("." not in x and "e" not in x.lower()):
            return Fraction(x)
        return float(x)
    if isinstance(x, (int, Fraction, float)):
        return x
    return float(x)


def _number_json(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return x


CANONICAL = {
    "noise": (3, 1, Fraction(1, 2)),
    "signal": (Fraction(1, 2), 2, Fraction(1, 2)),
    "critical": (1, 2, Fraction(1, 2)),
}


@dataclass
class ModelParams:
    """Tail indices (alpha, alpha') of signal and noise and memory beta.

    Laws default to standard Pareto marginals and the zeta label law.
    """

    alpha: object
    alpha_prime: object
    beta: object
    signal_law: ParetoParam | InverseCdfLaw | None = None
    noise_law: ParetoParam | InverseCdfLaw | None = None
    label_law: ZetaLabelLaw | None = None

    def __post_init__(self):
        self.alpha = parse_number(self.alpha)
        self.alpha_prime = parse_number(self.alpha_prime)
        self.beta = parse_number(self.beta)
        if self.signal_law is None:
            self.signal_law = ParetoParam(float(self.alpha))
        if self.noise_law is None:
            self.noise_law = ParetoParam(float(self.alpha_prime))
        if self.label_law is None:
            self.label_law = zeta_label_law(float(self.beta))
        elif not math.isclose(self.label_law.beta, float(self.beta), rel_tol=0, abs_tol=1e-15):
            raise ValueError("label law beta differs from model beta")

    @classmethod
    def canonical(cls, regime: str) -> "ModelParams":
        return cls(*CANONICAL[regime])

    @property
    def regime(self) -> Regime:
        return regime_classify(self.alpha, self.alpha_prime, self.beta)

    @property
    def gamma(self) -> float:
        return min(float(self.alpha), float(self.alpha_prime))

    def to_dict(self) -> dict:
        return {
            "alpha": _number_json(self.alpha),
            "alpha_prime": _number_json(self.alpha_prime),
            "beta": _number_json(self.beta),
            "signal_law": self.signal_law.to_dict(),
            "noise_law": self.noise_law.to_dict(),
            "label_law": {"law": "zeta", "beta": float(self.beta), "k_max": self.label_law.k_max},
        }


def index_labels(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sorted distinct labels and, per entry, the position of its label among them.

    Labels up to a dense cutoff go through a bincount lookup table; the rare
    larger ones are sorted separately.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    cut = min(int(labels.max()), 2 * labels.size + 1024)
    small = labels <= cut
    counts = np.bincount(labels[small] if not small.all() else labels, minlength=cut + 1)
    uniq = np.flatnonzero(counts)
    lookup = np.zeros(cut + 1, dtype=np.int64)
    lookup[uniq] = np.arange(uniq.size)
    idx = np.empty(labels.size, dtype=np.int64)
    if small.all():
        idx[:] = lookup[labels]
        return uniq.astype(np.int64), idx
    big_u, big_inv = np.unique(labels[~small], return_inverse=True)
    idx[small] = lookup[labels[small]]
    idx[~small] = uniq.size + big_inv
    return np.concatenate([uniq.astype(np.int64), big_u.astype(np.int64)]), idx


@dataclass(frozen=True, eq=False)
class LabeledPath:
    """Simulated trajectory; ``signal_values[label_index[i]]`` is sigma_i."""

    n: int
    labels: np.ndarray
    signal_labels: np.ndarray
    signal_values: np.ndarray
    label_index: np.ndarray
    noise: np.ndarray
    products: np.ndarray = field(repr=False)

    @property
    def sigma(self) -> np.ndarray:
        return self.signal_values[self.label_index]

    @property
    def locations(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    @property
    def signal_map(self) -> dict[int, float]:
        return dict(zip(self.signal_labels.tolist(), self.signal_values.tolist()))

    def signal_value(self, label: int) -> float:
        j = np.searchsorted(self.signal_labels, label)
        if j >= self.signal_labels.size or self.signal_labels[j] != label:
            raise KeyError(f"label {label} not visited")
        return float(self.signal_values[j])


def simulate_path(params: ModelParams, n: int, rng: RngStream) -> LabeledPath:
    """Simulate X_1..X_n; each visited label gets exactly one signal draw."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    check_size(n)
    labels = params.label_law.sample(rng, n)
    uniq, idx = index_labels(labels)
    eps = np.asarray(params.signal_law.sample(rng, uniq.size), dtype=float)
    z = np.asarray(params.noise_law.sample(rng, n), dtype=float)
    return LabeledPath(n, labels, uniq, eps, idx, z, eps[idx] * z)


@dataclass(frozen=True)
class OccupancyStats:
    K_n: int
    visited: np.ndarray
    visit_counts: np.ndarray
    J: dict[int, int]

    @property
    def K_n_ell(self) -> dict[int, int]:
        return dict(zip(self.visited.tolist(), self.visit_counts.tolist()))


def occupancy_from_index(labels_sorted: np.ndarray, label_index: np.ndarray) -> OccupancyStats:
    counts = np.bincount(label_index, minlength=labels_sorted.size)
    ks, jk = np.unique(counts[counts > 0], return_counts=True)
    J = dict(zip(ks.tolist(), jk.tolist()))
    stats = OccupancyStats(int(labels_sorted.size), labels_sorted, counts, J)
    n = int(label_index.size)
    assert sum(J.values()) == stats.K_n
    assert sum(k * c for k, c in J.items()) == n
    assert int(counts.sum()) == n
    return stats


def occupancy_stats(path: LabeledPath) -> OccupancyStats:
    """K_n, per-label visit counts K_{n,l} and J_{n,k} = #labels visited exactly k times."""
    return occupancy_from_index(path.signal_labels, path.label_index)


def nu(x: float, law) -> int:
    """max{k : 1/p_k <= x}, 0 when x < 1/p_1."""
    x = float(x)
    if x <= 0:
        raise ValueError("x must be positive")
    if isinstance(law, ZetaLabelLaw):
        s, logz = law.s, math.log(law.zeta_s)
        ok = lambda k: k >= 1 and logz + s * math.log(k) <= math.log(x)
        k = int(math.floor((x / law.zeta_s) ** law.beta))
        while k > 0 and not ok(k):
            k -= 1
        while ok(k + 1):
            k += 1
        return k
    # general non-increasing pmf: bracket then bisect
    if 1.0 / law.pmf(1) > x:
        return 0
    lo, hi = 1, 2
    while 1.0 / law.pmf(hi) <= x:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if 1.0 / law.pmf(mid) <= x:
            lo = mid
        else:
            hi = mid
    return lo


def interval_slices(n: int, boxes: Iterable[Box]) -> list[slice]:
    """0-based index ranges of the steps i with i/n inside each interval."""
    pos = np.arange(1, n + 1) / n
    out = []
    for b in boxes:
        if b.dim != 1:
            raise ValueError("time boxes are one dimensional")
        lo, hi = b.lo[0], b.hi[0]
        start = int(np.searchsorted(pos, lo, side="left"))
        stop = n if hi == 1.0 else int(np.searchsorted(pos, hi, side="left"))
        out.append(slice(start, stop))
    return out


def empirical_sup_measure(path: LabeledPath, boxes) -> list[float]:
    """Max of X_i over steps with i/n in each interval; 0 for empty intervals."""
    boxes = as_boxes(boxes, dim=1)
    out = []
    for sl in interval_slices(path.n, boxes):
        seg = path.products[sl]
        out.append(float(seg.max()) if seg.size else 0.0)
    return out


def _top(values: np.ndarray, k: int) -> list[tuple[int, float]]:
    order = np.lexsort((np.arange(values.size), -values))[:k]
    return [(int(i) + 1, float(values[i])) for i in order]


def top_locations(path: LabeledPath, k: int) -> dict[str, list[tuple[int, float]]]:
    """Top-k (step, value) pairs of X, sigma and Z; ties go to the earlier step."""
    if not 1 <= k <= path.n:
        raise ValueError("need 1 <= k <= n")
    return {"x": _top(path.products, k), "sigma": _top(path.sigma, k), "z": _top(path.noise, k)}


def write_path_csv(path: LabeledPath, fh: TextIO, comments: Iterable[str] = ()) -> None:
    for line in comments:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["i", "label", "sigma", "z", "x"])
    rows = zip(
        range(1, path.n + 1),
        path.labels.tolist(),
        map(repr, path.sigma.tolist()),
        map(repr, path.noise.tolist()),
        map(repr, path.products.tolist()),
    )
    w.writerows(rows)


# ---------------------------------------------------------------------------
# count-based box maxima
#
# For disjoint boxes only the per-label visit counts inside each box matter:
# the maximum over c noise draws is one inversion, and each label's signal is
# shared across boxes.  This gives the exact law of the box maxima at a cost
# that hardly grows with n.


def _head_size(law: ZetaLabelLaw, total: float) -> int:
    """Smallest power of two M with total * P(Y > M) <= M, capped at k_max."""
    m = 64
    while m < law.k_max and total * law.tail[m] > m:
        m *= 2
    return min(m, law.k_max)


def _tail_labels(law: ZetaLabelLaw, head: int, count: int, rng: RngStream) -> np.ndarray:
    # labels conditioned on Y > head
    return law.from_uniform(law.tail[head] * rng.uniform(count))


def max_of_iid(law, counts: np.ndarray, rng: RngStream) -> np.ndarray:
    """One draw of max(Z_1..Z_c) per entry of ``counts`` (all >= 1), by inversion."""
    counts = np.asarray(counts, dtype=float)
    u = rng.uniform(counts.size)
    # P(max > x) = 1 - F(x)^c, so the survival level is 1 - u^(1/c)
    return np.asarray(law.isf(-np.expm1(np.log(u) / counts)), dtype=float)


def box_label_counts(law: ZetaLabelLaw, sizes, rng: RngStream, poisson: bool = False):
    """Per-box occupied labels and visit counts.

    ``sizes[j]`` is the number of steps in box j (multinomial counts) or, with
    ``poisson``, the Poisson mean lambda * mu(B_j) (independent Poisson counts).
    Returns a list of ``(labels, counts)`` pairs with labels sorted.
    """
    sizes = [float(s) for s in sizes]
    head = _head_size(law, max(sizes) if sizes else 1.0)
    p = np.diff(-law.tail[: head + 1])
    tail_mass = law.tail[head]
    out = []
    for m in sizes:
        if poisson:
            c = rng.poisson(m * p)
            n_tail = int(rng.poisson(m * tail_mass))
        else:
            full = rng.gen.multinomial(int(m), np.append(p, tail_mass))
            c, n_tail = full[:-1], int(full[-1])
        labs = np.flatnonzero(c) + 1
        cnts = c[labs - 1]
        if n_tail:
            tl, tc = np.unique(_tail_labels(law, head, n_tail, rng), return_counts=True)
            labs = np.concatenate([labs, tl])
            cnts = np.concatenate([cnts, tc])
        out.append((labs.astype(np.int64), cnts.astype(np.int64)))
    return out


def maxima_from_counts(params: ModelParams, blocks, rng: RngStream, with_noise: bool = True, env=None):
    """Box maxima given per-box ``(labels, counts)``; signals shared across boxes.

    ``env`` (anything with a vectorized ``signals(labels)``) freezes the signals.
    """
    nonempty = [labs for labs, _ in blocks if labs.size]
    if not nonempty:
        return np.zeros(len(blocks))
    uniq = np.unique(np.concatenate(nonempty))
    if env is None:
        eps = np.asarray(params.signal_law.sample(rng, uniq.size), dtype=float)
    else:
        eps = np.asarray(env.signals(uniq), dtype=float)
    res = np.zeros(len(blocks))
    for j, (labs, cnts) in enumerate(blocks):
        if labs.size == 0:
            continue
        e = eps[np.searchsorted(uniq, labs)]
        if with_noise:
            e = e * max_of_iid(params.noise_law, cnts, rng)
        res[j] = e.max()
    return res


def interval_maxima(params: ModelParams, n: int, boxes, rng: RngStream, with_noise: bool = True, env=None) -> np.ndarray:
    """Exact joint law of the box maxima of X_1..X_n over disjoint time intervals.

    Equal in distribution to ``empirical_sup_measure(simulate_path(...), boxes)``
    but generated from label counts.
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    check_size(n)
    boxes = as_boxes(boxes, dim=1)
    _require_disjoint(boxes)
    sizes = [sl.stop - sl.start for sl in interval_slices(n, boxes)]
    blocks = box_label_counts(params.label_law, sizes, rng)
    return maxima_from_counts(params, blocks, rng, with_noise, env)


def _require_disjoint(boxes) -> None:
    for i, a in enumerate(boxes):
        for b in boxes[i + 1 :]:
            if all(max(l1, l2) < min(h1, h2) for l1, h1, l2, h2 in zip(a.lo, a.hi, b.lo, b.hi)):
                raise ValueError(f"count-based maxima need disjoint boxes; {a} and {b} overlap")
