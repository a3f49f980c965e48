"""Experiment configuration, loaded from JSON or keyword arguments."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction

from ..boxes import MalformedBoxError, as_boxes, parse_boxes
from ..karlin_process import CANONICAL, ModelParams, parse_number


class ConfigError(ValueError):
    pass


class Suite(str, Enum):
    SIBUYA = "SIBUYA"
    STABLE = "STABLE"
    OCCUPANCY = "OCCUPANCY"
    RSM = "RSM"
    REGIME = "REGIME"
    POISSONIZATION = "POISSONIZATION"


DEFAULT_TOLERANCES = {
    "ks_regime": 0.05,
    "ks_regime_critical": 0.1,
    "ks_poissonization": 0.05,
    "occupancy_rel": 0.02,
    "j1_rel": 0.03,
    "chi2_p": 1e-3,
    "ks_level": 0.01,
    "stderr_mult": 3.0,
    "family_level": 0.01,
}

# suites that compare distributions need enough replications
_MIN_REPS = {Suite.OCCUPANCY: 100, Suite.REGIME: 100, Suite.POISSONIZATION: 100, Suite.RSM: 100}


def _num_json(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    return x


@dataclass
class ExperimentConfig:
    suite: Suite
    seed: int = 0
    alpha: object = None
    alpha_prime: object = None
    beta: object = None
    regime: str | None = None
    n: int | None = None
    lam: float | None = None
    reps: int | None = None
    boxes: list = field(default_factory=lambda: [[[0.0], [1.0]]])
    tolerances: dict = field(default_factory=dict)
    threads: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            self.suite = Suite(str(self.suite).upper())
        except ValueError as exc:
            raise ConfigError(f"unknown suite {self.suite!r}") from exc
        try:
            self.seed = int(self.seed)
            for k in ("alpha", "alpha_prime", "beta"):
                v = getattr(self, k)
                if v is not None:
                    setattr(self, k, parse_number(v))
            if self.n is not None:
                self.n = int(self.n)
            if self.lam is not None:
                self.lam = float(self.lam)
            if self.reps is not None:
                self.reps = int(self.reps)
            self.threads = int(self.threads)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad numeric field: {exc}") from exc
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.n is not None and self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.reps is not None and self.reps < _MIN_REPS.get(self.suite, 1):
            raise ConfigError(f"{self.suite.value} needs reps >= {_MIN_REPS[self.suite]}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.regime is not None:
            self.regime = str(self.regime).lower()
            if self.regime not in (*CANONICAL, "auto", "all"):
                raise ConfigError(f"unknown regime {self.regime!r}")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance keys {sorted(unknown)}")
        try:
            if isinstance(self.boxes, str):
                self.boxes = [b.to_list() for b in parse_boxes(self.boxes)]
            self.boxes = [b.to_list() for b in as_boxes(self.boxes)]
        except (MalformedBoxError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad boxes: {exc}") from exc
        if self.suite in (Suite.RSM, Suite.REGIME) and not self.boxes:
            raise ConfigError("boxes must be nonempty")

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "suite" not in d:
            raise ConfigError("config needs a suite")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["suite"] = self.suite.value
        for k in ("alpha", "alpha_prime", "beta"):
            d[k] = _num_json(d[k])
        return d

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    def opt(self, key: str, default):
        return self.options.get(key, default)

    def model_params(self, regime: str | None = None) -> ModelParams:
        """Explicit (alpha, alpha', beta) win; without them the canonical triple of the regime.

        ``regime`` (one entry of :meth:`regimes`) overrides both.
        """
        if regime is not None:
            return ModelParams.canonical(regime)
        explicit = [self.alpha, self.alpha_prime, self.beta]
        given = sum(v is not None for v in explicit)
        if given == 3:
            return ModelParams(*explicit)
        if given:
            raise ConfigError("give all of alpha, alpha_prime, beta or none of them")
        if self.regime in CANONICAL:
            return ModelParams.canonical(self.regime)
        raise ConfigError("need alpha, alpha_prime and beta, or a named regime")

    def regimes(self) -> list[str | None]:
        if self.regime == "all":
            return list(CANONICAL)
        return [None]

