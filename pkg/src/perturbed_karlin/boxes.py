"""Axis-aligned boxes in the unit cube.

Boxes are half-open ``[lo, hi)`` in every coordinate, except that an upper
face sitting at 1 is closed, so a partition of ``[0, 1]^d`` counts every
point exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class MalformedBoxError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not lo:
            raise MalformedBoxError(f"box corners disagree in dimension: {lo} vs {hi}")
        for a, b in zip(lo, hi):
            if not (0.0 <= a < b <= 1.0):
                raise MalformedBoxError(f"bad interval [{a}, {b}) in unit cube")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def interval(cls, s, t) -> "Box":
        return cls((s,), (t,))

    @classmethod
    def unit(cls, dim: int = 1) -> "Box":
        return cls((0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def contains(self, points) -> np.ndarray:
        """Membership mask for an ``(m, d)`` (or ``(m,)`` when d = 1) array."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] != self.dim:
            raise MalformedBoxError(f"points of dimension {pts.shape[1]} tested against {self.dim}-d box")
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        upper = (pts < hi) | ((hi == 1.0) & (pts <= 1.0))
        return np.all((pts >= lo) & upper, axis=1)

    def __str__(self) -> str:
        return " x ".join(f"[{a:g},{b:g}{']' if b == 1.0 else ')'}" for a, b in zip(self.lo, self.hi))

    def to_list(self):
        return [list(self.lo), list(self.hi)]


def as_boxes(boxes, dim: int | None = None) -> list[Box]:
    """Normalize a box spec: Box objects, ``(s, t)`` pairs, or ``(lo, hi)`` corner pairs."""
    out = []
    for b in boxes:
        if isinstance(b, Box):
            box = b
        else:
            a, c = b
            box = Box(a, c)
        if dim is not None and box.dim != dim:
            raise MalformedBoxError(f"expected {dim}-d boxes, got {box.dim}-d")
        out.append(box)
    if not out:
        raise MalformedBoxError("empty box list")
    return out


def parse_boxes(text: str) -> list[Box]:
    """Parse ``"0:0.5,0.5:1"``; for d > 1 one ``;``-separated group per coordinate.

    ``"0:0.5,0.5:1;0:1,0:0.5"`` gives two 2-d boxes, the j-th box taking the
    j-th interval of every group.
    """
    groups = [g.strip() for g in text.strip().split(";") if g.strip()]
    if not groups:
        raise MalformedBoxError("empty box specification")
    per_dim: list[list[tuple[float, float]]] = []
    for g in groups:
        ivs = []
        for item in g.split(","):
            parts = item.strip().split(":")
            if len(parts) != 2:
                raise MalformedBoxError(f"interval {item!r} is not lo:hi")
            try:
                ivs.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise MalformedBoxError(f"interval {item!r} is not numeric") from exc
        per_dim.append(ivs)
    counts = {len(ivs) for ivs in per_dim}
    if len(counts) != 1:
        raise MalformedBoxError("every coordinate group needs the same number of intervals")
    return [Box(tuple(iv[j][0] for iv in per_dim), tuple(iv[j][1] for iv in per_dim)) for j in range(counts.pop())]


def format_boxes(boxes: Sequence[Box]) -> str:
    dim = boxes[0].dim
    return ";".join(",".join(f"{b.lo[d]:g}:{b.hi[d]:g}" for b in boxes) for d in range(dim))


def halves(dim: int = 1) -> list[Box]:
    """``[0, .5)`` and ``[.5, 1]`` along the first coordinate."""
    rest_lo, rest_hi = (0.0,) * (dim - 1), (1.0,) * (dim - 1)
    return [Box((0.0,) + rest_lo, (0.5,) + rest_hi), Box((0.5,) + rest_lo, (1.0,) + rest_hi)]


def box_maxima(values: np.ndarray, points: np.ndarray, boxes: Iterable[Box]) -> np.ndarray:
    """Per-box max of ``values`` over points inside; 0 for an empty box."""
    res = []
    for box in boxes:
        mask = box.contains(points)
        res.append(float(values[mask].max()) if mask.any() else 0.0)
    return np.array(res)
