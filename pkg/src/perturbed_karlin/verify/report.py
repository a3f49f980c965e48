"""Verification records and reports."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import TextIO

from .. import __version__


def _clean(x):
    """JSON-safe floats: inf and nan become strings."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item"):
        return _clean(x.item())
    return x


@dataclass
class TestRecord:
    """One check: ``passed`` compares ``statistic`` with ``tolerance`` as ``comparison`` says.

    comparison: "lt" (statistic < tolerance), "gt" (statistic > tolerance),
    "abs_le" (|empirical - target| <= tolerance).
    """

    name: str
    statistic: str
    empirical: float
    target: float | None
    tolerance: float
    comparison: str
    passed: bool
    stderr: float | None = None
    p_value: float | None = None
    detail: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class


def check(name, statistic, empirical, tolerance, comparison="lt", target=None, stderr=None, p_value=None, **detail):
    empirical = float(empirical)
    if comparison == "lt":
        ok = empirical < tolerance
    elif comparison == "gt":
        ok = empirical > tolerance
    elif comparison == "abs_le":
        ok = abs(empirical - float(target)) <= tolerance
    else:
        raise ValueError(f"unknown comparison {comparison!r}")
    return TestRecord(name, statistic, empirical, None if target is None else float(target), float(tolerance),
                      comparison, bool(ok), None if stderr is None else float(stderr),
                      None if p_value is None else float(p_value), detail)


@dataclass
class VerificationReport:
    suite: str
    config: dict
    calibration: list = field(default_factory=list)
    records: list = field(default_factory=list)
    family_level: float = 0.01
    timing: dict = field(default_factory=dict)

    @property
    def calibrated(self) -> bool:
        return all(r.passed for r in self.calibration)

    @property
    def passed(self) -> bool:
        return self.calibrated and bool(self.records) and all(r.passed for r in self.records)

    @property
    def bonferroni_passed(self) -> bool:
        """Records with a p-value pass iff p >= family_level / m; the others keep their own verdict."""
        if not self.calibrated or not self.records:
            return False
        m = sum(r.p_value is not None for r in self.records) or 1
        for r in self.records:
            if r.p_value is not None:
                if r.p_value < self.family_level / m:
                    return False
            elif not r.passed:
                return False
        return True

    def to_dict(self, with_timing: bool = True) -> dict:
        d = {
            "suite": self.suite,
            "version": __version__,
            "seed": self.config.get("seed"),
            "config": self.config,
            "calibration": [asdict(r) for r in self.calibration],
            "records": [asdict(r) for r in self.records],
            "passed": self.passed,
            "bonferroni_passed": self.bonferroni_passed,
            "family_level": self.family_level,
        }
        if with_timing:
            d["timing"] = self.timing
        return _clean(d)

    def to_json(self, with_timing: bool = True) -> str:
        return json.dumps(self.to_dict(with_timing), sort_keys=True, indent=2)

    def deterministic_json(self) -> str:
        """The report without its timing block; reruns with the same config match byte for byte."""
        return self.to_json(with_timing=False)

    def write_cdf_csv(self, fh: TextIO) -> int:
        """Empirical vs target CDF tables of all records that carry one; returns rows written."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["test", "z", "F_emp", "F_target"])
        rows = 0
        for r in self.records:
            for z, fe, ft in r.detail.get("cdf_table", []):
                w.writerow([r.name, repr(z), repr(fe), repr(ft)])
                rows += 1
        return rows

    def summary_lines(self) -> list[str]:
        out = []
        for r in self.calibration + self.records:
            tag = "PASS" if r.passed else "FAIL"
            shown = abs(r.empirical - r.target) if r.comparison == "abs_le" else r.empirical
            out.append(f"{tag} {r.name}: {r.statistic}={shown:.6g} tol={r.tolerance:.6g}")
        return out
