"""Truncated-series samplers for the limit random sup-measures.

All kinds live on the unit cube with Lebesgue control measure.  A realization
is a finite list of atoms (weight, locations); its value on a box is the
largest weight among atoms with a location in the box.

Truncation.  Atoms come from a unit-rate Poisson sequence Gamma_1 < Gamma_2 <
... and are kept while Gamma <= G.  G is chosen so that, for every box B with
mu(B) >= m_min, the value on B is already decided by a kept atom except on an
event of probability at most ``tol``:

* IS, CRITICAL, NOISE: some kept atom lands in B w.p. 1 - exp(-G mu(B)).
* KARLIN: a kept cluster hits B w.p. 1 - exp(-G mu(B)^beta).
* SIGNAL: clusters are re-indexed by their largest point, so the leading
  point of some kept cluster lands in B w.p. 1 - exp(-G mu(B)).

Heavy clusters keep only their first ``cap`` points (for SIGNAL, the top
``cap`` by weight); a capped cluster misses B with all kept points w.p. at
most (1 - m_min)^cap, and that term is added to the bound.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .analytic import ztilde_alpha_moment
from .boxes import Box, as_boxes
from .rng import RngStream
from .samplers import (
    DomainError,
    ParetoParam,
    ZetaLabelLaw,
    _check_beta,
    sibuya_from_uniform,
    sibuya_logsf,
    stable_from_uniforms,
)

DEFAULT_M_MIN = 1e-3
DEFAULT_TOL = 1e-4
# rows (atom locations) generated per chunk in batched sampling
_ROW_BUDGET = 2_000_000


class RsmKind(str, Enum):
    IS = "IS"
    KARLIN = "KARLIN"
    SIGNAL = "SIGNAL"
    CRITICAL = "CRITICAL"
    NOISE = "NOISE"


class LimitParameterError(DomainError):
    """The requested limit does not exist (e.g. an infinite moment)."""


class CertificateError(ValueError):
    """Evaluation on a box smaller than the certified m_min."""


class SignalEnvironmentError(RuntimeError):
    """The environment moment cannot be certified finite."""


@dataclass(frozen=True)
class TruncationPolicy:
    m_min: float = DEFAULT_M_MIN
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not 0 < self.m_min <= 1:
            raise ValueError("m_min must lie in (0, 1]")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")

    def cap(self, n_clusters: float, share: float) -> int:
        """Smallest k with n_clusters (1 - m_min)^k <= share."""
        if self.m_min >= 1.0:
            return 1
        k = math.log(share / max(n_clusters, 1.0)) / math.log1p(-self.m_min)
        return max(1, math.ceil(k))


@dataclass(frozen=True)
class RsmEvaluation:
    box: Box
    value: float


@dataclass(frozen=True, eq=False)
class TruncatedRSM:
    """One realization: atoms ``(weight, locations)`` in decreasing weight order."""

    kind: RsmKind
    params: dict
    atoms: list
    truncation_bound: float
    m_min: float
    dim: int = 1

    def evaluate(self, boxes) -> list[RsmEvaluation]:
        boxes = _checked_boxes(boxes, self.dim, self.m_min)
        out = []
        for b in boxes:
            v = 0.0
            for w, locs in self.atoms:
                if w > v and b.contains(locs).any():
                    v = w
            out.append(RsmEvaluation(b, float(v)))
        return out

    def values(self, boxes) -> np.ndarray:
        return np.array([e.value for e in self.evaluate(boxes)])

    @property
    def full_space_value(self) -> float:
        return float(max(w for w, _ in self.atoms))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "params": self.params,
            "atoms": [{"w": float(w), "locs": np.asarray(l).tolist()} for w, l in self.atoms],
            "truncation_bound": self.truncation_bound,
            "m_min": self.m_min,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True, eq=False)
class RsmBatch:
    """Many realizations in flat arrays, one row per atom location, rows grouped by rep."""

    kind: RsmKind
    params: dict
    reps: int
    rep: np.ndarray
    atom: np.ndarray
    weight: np.ndarray
    loc: np.ndarray
    truncation_bound: float
    m_min: float
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.loc.shape[1])

    @property
    def starts(self) -> np.ndarray:
        return np.searchsorted(self.rep, np.arange(self.reps))

    def evaluate(self, boxes) -> np.ndarray:
        """(reps, len(boxes)) array of values."""
        boxes = _checked_boxes(boxes, self.dim, self.m_min)
        starts = self.starts
        out = np.empty((self.reps, len(boxes)))
        for j, b in enumerate(boxes):
            vals = np.where(b.contains(self.loc), self.weight, 0.0)
            out[:, j] = np.maximum.reduceat(vals, starts)
        return out

    def full_space(self) -> np.ndarray:
        return np.maximum.reduceat(self.weight, self.starts)

    def realization(self, i: int) -> TruncatedRSM:
        lo, hi = np.searchsorted(self.rep, [i, i + 1])
        atom, w, loc = self.atom[lo:hi], self.weight[lo:hi], self.loc[lo:hi]
        order = np.lexsort((atom, -w))
        atoms = []
        seen = {}
        for r in order:
            a = int(atom[r])
            if a not in seen:
                seen[a] = len(atoms)
                atoms.append([float(w[r]), []])
            atoms[seen[a]][1].append(loc[r])
        params = dict(self.params)
        params.update({k: (v[i].tolist() if isinstance(v, np.ndarray) else v) for k, v in self.extra.items()})
        return TruncatedRSM(
            self.kind, params, [(w, np.array(l)) for w, l in atoms], self.truncation_bound, self.m_min, self.dim
        )


def _checked_boxes(boxes, dim, m_min):
    if isinstance(boxes, Box):
        boxes = [boxes]
    boxes = as_boxes(boxes, dim=dim)
    for b in boxes:
        if b.volume < m_min * (1 - 1e-12):
            raise CertificateError(f"box {b} has measure {b.volume:g} < certified m_min {m_min:g}")
    return boxes


def _concat(batches: list[RsmBatch]) -> RsmBatch:
    if len(batches) == 1:
        return batches[0]
    offs = np.cumsum([0] + [b.reps for b in batches[:-1]])
    first = batches[0]
    extra = {k: np.concatenate([b.extra[k] for b in batches]) for k in first.extra}
    return RsmBatch(
        first.kind,
        first.params,
        int(sum(b.reps for b in batches)),
        np.concatenate([b.rep + o for b, o in zip(batches, offs)]),
        np.concatenate([b.atom for b in batches]),
        np.concatenate([b.weight for b in batches]),
        np.concatenate([b.loc for b in batches]),
        first.truncation_bound,
        first.m_min,
        extra,
    )


# ---------------------------------------------------------------------------
# Poisson arrivals up to a horizon


def _arrivals(reps: int, horizon: float, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """(rep index, Gamma) for all Gamma_l <= horizon, and always Gamma_1."""
    k = int(horizon + 8.0 * math.sqrt(horizon) + 16)
    g = np.cumsum(rng.exponential((reps, k)), axis=1)
    while np.any(g[:, -1] <= horizon):
        more = g[:, -1:] + np.cumsum(rng.exponential((reps, k)), axis=1)
        g = np.concatenate([g, more], axis=1)
    mask = g <= horizon
    mask[:, 0] = True
    rep = np.nonzero(mask)[0]
    return rep, g[mask]


def _chunks(reps: int, rows_per_rep: float):
    size = max(1, min(reps, int(_ROW_BUDGET // max(rows_per_rep, 1.0))))
    for c, lo in enumerate(range(0, reps, size)):
        yield c, min(size, reps - lo)


def _single_or_batch(sampler, reps, rng, rows_per_rep):
    if reps is None:
        return sampler(1, rng).realization(0)
    reps = int(reps)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    return _concat([sampler(r, rng.child(c)) for c, r in _chunks(reps, rows_per_rep)])


def _is_like(kind, alpha, params, reps, rng, dim, policy, scale_fn=None, extra_name=None):
    horizon = math.log(1.0 / policy.tol) / policy.m_min

    def one(r, s):
        scale = scale_fn(r, s.child(1)) if scale_fn else None
        rep, g = _arrivals(r, horizon, s)
        w = g ** (-1.0 / alpha)
        if scale is not None:
            w = w * scale[rep] ** (1.0 / alpha)
        atom = np.arange(rep.size) - np.searchsorted(rep, rep)
        extra = {extra_name: scale} if extra_name else {}
        return RsmBatch(kind, params, r, rep, atom, w, s.uniform((rep.size, dim)), policy.tol, policy.m_min, extra)

    return _single_or_batch(one, reps, rng, horizon + 1)


# ---------------------------------------------------------------------------
# samplers


def sample_is_rsm(alpha, rng: RngStream, reps=None, dim: int = 1, policy: TruncationPolicy = TruncationPolicy()):
    """Independently scattered alpha-Frechet: atoms (Gamma_l^(-1/alpha), U_l)."""
    alpha = float(alpha)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return _is_like(RsmKind.IS, alpha, {"alpha": alpha}, reps, rng, dim, policy)


def sample_karlin_rsm(alpha, beta, rng: RngStream, reps=None, dim: int = 1, policy: TruncationPolicy = TruncationPolicy()):
    """Karlin RSM: atom l has weight Gamma_l^(-1/alpha) and Q_l ~ Sibuya(beta) uniform locations."""
    alpha = float(alpha)
    beta = _check_beta(beta)
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    horizon = math.log(2.0 / policy.tol) / policy.m_min**beta
    cap = policy.cap(horizon, policy.tol / 2)
    sf_cap = math.exp(float(sibuya_logsf(beta, cap)))
    bound = math.exp(-horizon * policy.m_min**beta) + horizon * sf_cap * (1 - policy.m_min) ** cap
    params = {"alpha": alpha, "beta": beta}

    def one(r, s):
        rep, g = _arrivals(r, horizon, s)
        q = sibuya_from_uniform(beta, s.uniform(rep.size))
        nloc = np.minimum(q, cap)
        row_atom = np.repeat(np.arange(rep.size), nloc)
        first = np.searchsorted(rep, rep)
        atom = (np.arange(rep.size) - first)[row_atom]
        w = (g ** (-1.0 / alpha))[row_atom]
        return RsmBatch(
            RsmKind.KARLIN, params, r, rep[row_atom], atom, w, s.uniform((row_atom.size, dim)), bound, policy.m_min
        )

    return _single_or_batch(one, reps, rng, (horizon + 1) * min(cap, 8))


def sample_critical_limit_rsm(alpha_prime, beta, rng: RngStream, reps=None, dim: int = 1, policy: TruncationPolicy = TruncationPolicy()):
    """S_beta^(1/alpha') times an alpha'-Frechet IS measure, one S per realization."""
    alpha_prime = float(alpha_prime)
    beta = _check_beta(beta)
    if not alpha_prime > 0:
        raise DomainError("alpha' must be positive")

    def stable(r, s):
        return stable_from_uniforms(beta, s.uniform(r), s.exponential(r))

    return _is_like(
        RsmKind.CRITICAL, alpha_prime, {"alpha_prime": alpha_prime, "beta": beta}, reps, rng, dim, policy, stable, "S"
    )


def sample_signal_limit_rsm(alpha, beta, noise_law, rng: RngStream, reps=None, dim: int = 1, policy: TruncationPolicy = TruncationPolicy()):
    """Signal-dominance limit: point (l, i) has weight Gamma_l^(-1/alpha) Z_{l,i}, i <= Q_l.

    Clusters are generated in decreasing order of their largest weight
    y_l = Gamma_l^(-1/alpha) max_i Z_{l,i}.  Those maxima form a Poisson
    process with intensity E Ztilde^alpha d(-y^(-alpha)); under the matching
    tilt, Ztilde ~ Pareto(alpha' beta - alpha), Q - 1 given Ztilde = x is
    negative binomial (1 - beta, F_Z-bar(x)), and the remaining Z's are i.i.d.
    F_Z conditioned on being <= x.
    """
    alpha = float(alpha)
    beta = _check_beta(beta)
    if not isinstance(noise_law, ParetoParam):
        raise TypeError("the signal limit sampler needs Pareto noise")
    kappa = noise_law.alpha * beta
    if kappa <= alpha:
        raise LimitParameterError(
            f"alpha' beta = {kappa:g} <= alpha = {alpha:g}: E Ztilde^alpha is infinite and the limit does not exist"
        )
    c = ztilde_alpha_moment(noise_law, beta, alpha)
    horizon = math.log(2.0 / policy.tol) / policy.m_min
    cap = policy.cap(horizon, policy.tol / 2)
    bound = math.exp(-horizon * policy.m_min) + horizon * (1 - policy.m_min) ** cap
    params = {"alpha": alpha, "beta": beta, "noise_law": noise_law.to_dict(), "ztilde_moment": c}
    ap, xm = noise_law.alpha, noise_law.x_min

    def one(r, s):
        rep, g = _arrivals(r, horizon, s)
        m = rep.size
        y = (c / g) ** (1.0 / alpha)
        log_zt = -np.log(s.uniform(m)) / (kappa - alpha)  # log(Ztilde / x_min)
        log_t = -ap * log_zt  # log F_Z-bar(Ztilde)
        # Q - 1 | Ztilde: gamma-Poisson mixture with mean (1 - beta)(1 - t)/t
        with np.errstate(over="ignore"):
            lam = s.gen.standard_gamma(1.0 - beta, m) * np.exp(np.log(-np.expm1(log_t)) - log_t)
        big = lam > 1e12
        others = np.where(big, lam, 0.0)
        others[~big] = s.poisson(lam[~big])
        k = np.minimum(others, cap - 1).astype(np.int64)
        # top-k order statistics of `others` uniforms, as log V
        seg = np.repeat(np.arange(m), k)
        j = np.arange(seg.size) - np.repeat(np.cumsum(k) - k, k)
        steps = np.log(s.uniform(seg.size)) / (others[seg] - j)
        csum = np.cumsum(steps)
        base = np.concatenate([[0.0], csum])[np.repeat(np.cumsum(k) - k, k)]
        log_v = csum - base
        # level = t + (1 - t)(1 - V) = P(Z > z); z = x_min level^(-1/alpha')
        lt = log_t[seg]
        with np.errstate(divide="ignore"):
            a = np.log(-np.expm1(lt)) + np.log(-np.expm1(log_v)) - lt
        log_level = lt + np.logaddexp(0.0, a)
        ratio = np.exp(-log_level / ap - log_zt[seg])  # Z_i / Ztilde
        w = np.concatenate([y, y[seg] * np.minimum(ratio, 1.0)])
        atom_id = np.concatenate([np.arange(m), seg])
        order = np.lexsort((atom_id, rep[atom_id]))
        first = np.searchsorted(rep, rep)
        atom_local = (np.arange(m) - first)[atom_id]
        return RsmBatch(
            RsmKind.SIGNAL,
            params,
            r,
            rep[atom_id][order],
            atom_local[order],
            w[order],
            s.uniform((w.size, dim)),
            bound,
            policy.m_min,
        )

    return _single_or_batch(one, reps, rng, (horizon + 1) * min(cap, 16))


# ---------------------------------------------------------------------------
# noise dominance: signal environments


@dataclass(eq=False)
class SignalEnvironment:
    """A frozen realization of the signals eps_l, l >= 1.

    Labels up to ``eps.size`` are materialized; later labels are drawn lazily
    on first use.  ``moment`` is E_eps eps_Y^alpha' = sum_l p_l eps_l^alpha',
    exact over the materialized labels plus the mean of the remainder.
    """

    label_law: ZetaLabelLaw
    alpha_prime: float
    eps: np.ndarray
    tail_mean: float
    tail_sd: float
    signal_law: object = None
    rng: RngStream | None = None
    lazy: dict = field(default_factory=dict)

    @classmethod
    def draw(cls, params, rng: RngStream, tail_mass: float = 1e-5, max_labels: int = 10**6) -> "SignalEnvironment":
        law = params.label_law
        ap = float(params.alpha_prime)
        sig = params.signal_law
        if not isinstance(sig, ParetoParam):
            raise SignalEnvironmentError("environment moments are certified for Pareto signals only")
        if sig.alpha <= ap:
            raise SignalEnvironmentError(
                f"E eps^alpha' is infinite (alpha = {sig.alpha:g} <= alpha' = {ap:g}); "
                "the remainder of the moment series cannot be bounded"
            )
        n_lab = int(min(max_labels, law.k_max, max(1, np.searchsorted(-law.tail, -tail_mass))))
        eps = np.asarray(sig.sample(rng, n_lab), dtype=float)
        m1 = sig.x_min**ap * sig.alpha / (sig.alpha - ap)
        rem = float(law.tail[n_lab])
        # sd of the remainder, when the second moment is finite
        if sig.alpha > 2 * ap:
            m2 = sig.x_min ** (2 * ap) * sig.alpha / (sig.alpha - 2 * ap)
            tail_sd = math.sqrt((m2 - m1**2) * float(_sum_sq_tail(law, n_lab)))
        else:
            tail_sd = math.inf
        return cls(law, ap, eps, rem * m1, tail_sd, sig, rng.child(0xE5))

    @classmethod
    def from_values(cls, eps, label_law: ZetaLabelLaw, alpha_prime, tail_value_moment: float) -> "SignalEnvironment":
        """Environment with given eps_1..eps_L; later labels contribute ``tail_value_moment`` each on average."""
        eps = np.asarray(eps, dtype=float)
        rem = float(label_law.tail[eps.size])
        return cls(label_law, float(alpha_prime), eps, rem * float(tail_value_moment), 0.0)

    @property
    def materialized(self) -> int:
        return int(self.eps.size)

    @property
    def head_weights(self) -> np.ndarray:
        k = np.arange(1, self.eps.size + 1)
        return self.label_law.pmf(k) * self.eps**self.alpha_prime

    @property
    def moment(self) -> float:
        return float(np.sum(self.head_weights) + self.tail_mean)

    def scaled(self, c: float) -> "SignalEnvironment":
        return SignalEnvironment(
            self.label_law, self.alpha_prime, self.eps * c, self.tail_mean * c**self.alpha_prime,
            self.tail_sd * c**self.alpha_prime, self.signal_law, self.rng,
        )

    def signal(self, label: int) -> float:
        if 1 <= label <= self.eps.size:
            return float(self.eps[label - 1])
        if label not in self.lazy:
            if self.signal_law is None or self.rng is None:
                raise KeyError(f"label {label} beyond the materialized environment")
            self.lazy[label] = float(self.signal_law.sample(self.rng.child(label)))
        return self.lazy[label]

    def signals(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        out = np.empty(labels.size)
        head = labels <= self.eps.size
        out[head] = self.eps[labels[head] - 1]
        out[~head] = [self.signal(int(l)) for l in labels[~head]]
        return out

    def tilted_labels(self, count: int, rng: RngStream) -> np.ndarray:
        """Labels with P(l) proportional to p_l eps_l^alpha' (remainder labels conditioned past the head)."""
        cw = np.cumsum(self.head_weights)
        total = cw[-1] + self.tail_mean
        v = rng.uniform(count) * total
        lab = np.searchsorted(cw, v, side="right") + 1
        deep = lab > self.eps.size
        if np.any(deep):
            rem = self.label_law.tail[self.eps.size]
            lab[deep] = self.label_law.from_uniform(rem * rng.uniform(int(deep.sum())))
        return lab.astype(np.int64)


def _sum_sq_tail(law: ZetaLabelLaw, start: int) -> float:
    from scipy.special import zeta

    return float(zeta(2.0 * law.s, start + 1.0) / law.zeta_s**2)


def sample_noise_limit_rsm(alpha_prime, env: SignalEnvironment | None, rng: RngStream, reps=None, dim: int = 1,
                           policy: TruncationPolicy = TruncationPolicy(), params=None, env_tail_mass: float = 1e-5):
    """Noise-dominance limit: atoms eps_{Y_l} Gamma_l^(-1/alpha') at U_l against a fixed environment.

    Conditional on the environment the atoms form a Poisson process, which is
    generated in decreasing order as (m / Gamma'_l)^(1/alpha') with m the
    environment moment and labels from the eps^alpha'-tilted label law.

    With ``env=None`` every realization draws a fresh environment from
    ``params`` (the annealed law).
    """
    alpha_prime = float(alpha_prime)
    if not alpha_prime > 0:
        raise DomainError("alpha' must be positive")
    if env is None and params is None:
        raise ValueError("need an environment or model params for fresh environments")
    if env is not None and not math.isclose(env.alpha_prime, alpha_prime):
        raise ValueError("environment built for a different alpha'")
    horizon = math.log(1.0 / policy.tol) / policy.m_min
    info = {"alpha_prime": alpha_prime, "annealed": env is None}
    if env is not None:
        info["moment"] = env.moment

    def one(r, s):
        rep, g = _arrivals(r, horizon, s)
        first = np.searchsorted(rep, rep)
        if env is not None:
            moments = np.full(r, env.moment)
            labels = env.tilted_labels(rep.size, s.child(2))
        else:
            envs = [SignalEnvironment.draw(params, s.child(3, i), env_tail_mass) for i in range(r)]
            moments = np.array([e.moment for e in envs])
            labels = np.concatenate(
                [e.tilted_labels(int(np.sum(rep == i)), s.child(4, i)) for i, e in enumerate(envs)]
            )
        w = (moments[rep] / g) ** (1.0 / alpha_prime)
        return RsmBatch(
            RsmKind.NOISE, info, r, rep, np.arange(rep.size) - first, w, s.uniform((rep.size, dim)),
            policy.tol, policy.m_min, {"moment": moments, "labels": labels},
        )

    return _single_or_batch(one, reps, rng, horizon + 1)


# ---------------------------------------------------------------------------
# batched box values


def sample_box_values(kind, boxes, reps: int, rng: RngStream, *, dim: int = 1, policy: TruncationPolicy | None = None,
                      **kw) -> np.ndarray:
    """(reps, len(boxes)) box values of ``kind`` realizations, generated chunkwise.

    ``policy`` defaults to m_min = the smallest box measure.
    """
    kind = RsmKind(str(kind).upper())
    boxes = as_boxes(boxes, dim=dim)
    if policy is None:
        policy = TruncationPolicy(m_min=min(b.volume for b in boxes))
    sampler = {
        RsmKind.IS: lambda r, s: sample_is_rsm(kw["alpha"], s, r, dim, policy),
        RsmKind.KARLIN: lambda r, s: sample_karlin_rsm(kw["alpha"], kw["beta"], s, r, dim, policy),
        RsmKind.CRITICAL: lambda r, s: sample_critical_limit_rsm(kw["alpha_prime"], kw["beta"], s, r, dim, policy),
        RsmKind.SIGNAL: lambda r, s: sample_signal_limit_rsm(kw["alpha"], kw["beta"], kw["noise_law"], s, r, dim, policy),
        RsmKind.NOISE: lambda r, s: sample_noise_limit_rsm(
            kw["alpha_prime"], kw.get("env"), s, r, dim, policy, kw.get("params")
        ),
    }[kind]
    out = [sampler(r, rng.child(1000 + c)).evaluate(boxes) for c, r in _chunks(int(reps), 5000)]
    return np.concatenate(out, axis=0)
