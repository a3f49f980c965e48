"""Poisson-Karlin model with multiplicative noise on the unit cube.

N(lambda) ~ Poisson(lambda) points carry i.i.d. uniform locations U_i in
[0, 1]^d, zeta labels Y_i, one signal value per distinct label and i.i.d.
noise Z_i.  Points sharing a label form a cluster.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .boxes import as_boxes
from .karlin_process import (
    ModelParams,
    _require_disjoint,
    box_label_counts,
    check_size,
    index_labels,
    maxima_from_counts,
)
from .rng import RngStream


@dataclass(frozen=True, eq=False)
class MarkedPointSet:
    """One realization; ``signal_values[label_index[i]]`` is the signal of point i."""

    lam: float
    locations: np.ndarray
    labels: np.ndarray
    signal_labels: np.ndarray
    signal_values: np.ndarray
    label_index: np.ndarray
    noise: np.ndarray
    products: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.labels.size)

    @property
    def dim(self) -> int:
        return int(self.locations.shape[1])

    @property
    def sigma(self) -> np.ndarray:
        return self.signal_values[self.label_index]

    @property
    def signal_map(self) -> dict[int, float]:
        return dict(zip(self.signal_labels.tolist(), self.signal_values.tolist()))


@dataclass(frozen=True, eq=False)
class LabelCluster:
    label: int
    signal: float
    locations: np.ndarray

    @property
    def size(self) -> int:
        return int(self.locations.shape[0])


def simulate_marked_points(params: ModelParams, lam: float, dim: int, rng: RngStream) -> MarkedPointSet:
    lam = float(lam)
    dim = int(dim)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    count = int(rng.poisson(lam))
    check_size(count, "N(lambda)")
    locs = rng.uniform((count, dim))
    labels = params.label_law.sample(rng, count)
    uniq, idx = index_labels(labels)
    eps = np.asarray(params.signal_law.sample(rng, uniq.size), dtype=float).reshape(-1)
    z = np.asarray(params.noise_law.sample(rng, count), dtype=float).reshape(-1)
    return MarkedPointSet(lam, locs, labels, uniq, eps, idx, z, eps[idx] * z)


def cluster_sizes(points: MarkedPointSet) -> np.ndarray:
    """Visit count of every occupied label, aligned with ``signal_labels``."""
    return np.bincount(points.label_index, minlength=points.signal_labels.size)


def extract_clusters(points: MarkedPointSet) -> list[LabelCluster]:
    """One cluster per occupied label, largest signal first."""
    order = np.argsort(points.label_index, kind="stable")
    bounds = np.searchsorted(points.label_index[order], np.arange(points.signal_labels.size + 1))
    by_eps = np.argsort(-points.signal_values, kind="stable")
    return [
        LabelCluster(
            int(points.signal_labels[j]),
            float(points.signal_values[j]),
            points.locations[order[bounds[j] : bounds[j + 1]]],
        )
        for j in by_eps
    ]


def poisson_karlin_sup_measure(points: MarkedPointSet, boxes, with_noise: bool = True) -> list[float]:
    """Per-box max of eps_{Y_i} (times Z_i with noise) over points in the box; 0 if empty."""
    boxes = as_boxes(boxes, dim=points.dim)
    vals = points.products if with_noise else points.sigma
    out = []
    for b in boxes:
        mask = b.contains(points.locations)
        out.append(float(vals[mask].max()) if mask.any() else 0.0)
    return out


def poisson_box_maxima(params: ModelParams, lam: float, boxes, rng: RngStream, with_noise: bool = True) -> np.ndarray:
    """Exact joint law of the sup-measure on disjoint boxes, from Poisson label counts.

    Counts of label l in box B are independent Poisson(lambda p_l mu(B)).
    """
    lam = float(lam)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    check_size(int(lam), "lambda")
    boxes = as_boxes(boxes)
    _require_disjoint(boxes)
    blocks = box_label_counts(params.label_law, [lam * b.volume for b in boxes], rng, poisson=True)
    return maxima_from_counts(params, blocks, rng, with_noise)


def top_cluster_size(params: ModelParams, lam: float, rng: RngStream) -> int:
    """Size of the cluster carrying the largest signal among occupied labels."""
    (labs, cnts), = box_label_counts(params.label_law, [float(lam)], rng, poisson=True)
    eps = np.asarray(params.signal_law.sample(rng, labs.size), dtype=float)
    return int(cnts[np.argmax(eps)])


def write_points_csv(points: MarkedPointSet, fh: TextIO, comments: Iterable[str] = ()) -> None:
    for line in comments:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"u_{j + 1}" for j in range(points.dim)] + ["label", "sigma", "z", "x"])
    cols = [map(repr, points.locations[:, j].tolist()) for j in range(points.dim)]
    cols += [
        points.labels.tolist(),
        map(repr, points.sigma.tolist()),
        map(repr, points.noise.tolist()),
        map(repr, points.products.tolist()),
    ]
    w.writerows(zip(*cols))
