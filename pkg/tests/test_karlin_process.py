import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from perturbed_karlin.boxes import Box, halves, parse_boxes
from perturbed_karlin.karlin_process import (
    ModelParams,
    ResourceLimitError,
    box_label_counts,
    empirical_sup_measure,
    index_labels,
    interval_maxima,
    interval_slices,
    max_of_iid,
    nu,
    occupancy_stats,
    parse_number,
    simulate_path,
    top_locations,
    write_path_csv,
)
from perturbed_karlin.rng import RngStream
from perturbed_karlin.samplers import ParetoParam, zeta_label_law


def test_parse_number_keeps_exact_values():
    assert parse_number("1/2") == Fraction(1, 2)
    assert parse_number("3") == 3 and isinstance(parse_number("3"), Fraction)
    assert parse_number("0.5") == 0.5
    assert parse_number(2) == 2


def test_frozen_path_labels():
    path = simulate_path(ModelParams.canonical("signal"), 5, RngStream(1))
    assert path.labels.tolist() == [1, 3, 1, 2, 6]


def test_each_label_gets_one_signal():
    path = simulate_path(ModelParams.canonical("noise"), 5000, RngStream(2))
    for lab in np.unique(path.labels)[:50]:
        sig = path.sigma[path.labels == lab]
        assert np.all(sig == sig[0]) and sig[0] == path.signal_value(int(lab))
    np.testing.assert_array_equal(path.products, path.sigma * path.noise)
    with pytest.raises(KeyError):
        path.signal_value(-1)


def test_same_seed_same_path():
    p = ModelParams.canonical("critical")
    a, b = simulate_path(p, 1000, RngStream(4)), simulate_path(p, 1000, RngStream(4))
    np.testing.assert_array_equal(a.products, b.products)


@given(st.lists(st.integers(1, 10**15), min_size=1, max_size=300))
def test_index_labels_matches_unique(labels):
    labels = np.array(labels, dtype=np.int64)
    uniq, idx = index_labels(labels)
    ref_u, ref_i = np.unique(labels, return_inverse=True)
    np.testing.assert_array_equal(uniq, ref_u)
    np.testing.assert_array_equal(idx, ref_i)


@given(st.integers(1, 3000), st.integers(0, 10**6))
def test_occupancy_identities(n, seed):
    path = simulate_path(ModelParams(1, 1, 0.5), n, RngStream(seed))
    st_ = occupancy_stats(path)
    assert sum(st_.J.values()) == st_.K_n == np.unique(path.labels).size
    assert sum(k * c for k, c in st_.J.items()) == n


def test_nu_generic_law_matches_zeta():
    law = zeta_label_law(0.3)

    class Generic:
        pmf = staticmethod(law.pmf)

    for x in (1.0, 10.0, 1e4, 1e7):
        assert nu(x, Generic()) == nu(x, law)


def test_interval_slices_convention():
    sl = interval_slices(10, halves())
    # steps i/n in [0, .5) are i = 1..4, in [.5, 1] are i = 5..10
    assert [(s.start, s.stop) for s in sl] == [(0, 4), (4, 10)]


def test_empirical_sup_and_top():
    path = simulate_path(ModelParams.canonical("signal"), 200, RngStream(5))
    full = empirical_sup_measure(path, [Box.unit()])[0]
    assert full == path.products.max()
    assert max(empirical_sup_measure(path, halves())) == full
    top = top_locations(path, 3)
    assert top["x"][0] == (int(np.argmax(path.products)) + 1, full)
    assert [v for _, v in top["z"]] == sorted(path.noise, reverse=True)[:3]


def test_resource_limit(monkeypatch):
    monkeypatch.setenv("KARLIN_MAX_N", "100")
    with pytest.raises(ResourceLimitError):
        simulate_path(ModelParams.canonical("signal"), 101, RngStream(0))


def test_write_path_csv_round_trip():
    path = simulate_path(ModelParams.canonical("noise"), 20, RngStream(6))
    buf = io.StringIO()
    write_path_csv(path, buf, ["seed: 6"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# seed: 6" and lines[1] == "i,label,sigma,z,x"
    data = np.loadtxt(io.StringIO(buf.getvalue()), delimiter=",", comments="#", skiprows=2)
    np.testing.assert_array_equal(data[:, 4], path.products)


def test_max_of_iid_law():
    law = ParetoParam(2.0)
    x = max_of_iid(law, np.full(20000, 5), RngStream(1))
    # P(max <= x) = (1 - x^-2)^5
    assert stats.kstest(x, lambda z: np.clip(1 - z**-2.0, 0, 1) ** 5).pvalue > 1e-3


def test_box_label_counts_totals():
    law = zeta_label_law(0.5)
    blocks = box_label_counts(law, [1000, 3000], RngStream(2))
    assert [int(c.sum()) for _, c in blocks] == [1000, 3000]
    for labs, cnts in blocks:
        assert np.all(np.diff(labs) > 0) and np.all(cnts >= 1)


def test_interval_maxima_requires_disjoint():
    with pytest.raises(ValueError):
        interval_maxima(ModelParams.canonical("signal"), 100, parse_boxes("0:0.6,0.4:1"), RngStream(0))


@pytest.mark.parametrize("regime", ["noise", "signal", "critical"])
def test_count_sampler_matches_direct_simulation(regime):
    # same law of the joint box maxima from label counts and from a full path
    params = ModelParams.canonical(regime)
    boxes = halves()
    reps, n = 400, 2000
    direct = np.array([empirical_sup_measure(simulate_path(params, n, RngStream(10, r)), boxes) for r in range(reps)])
    counts = np.array([interval_maxima(params, n, boxes, RngStream(20, r)) for r in range(reps)])
    for j in range(2):
        assert stats.ks_2samp(np.log(direct[:, j]), np.log(counts[:, j])).pvalue > 1e-3
    # dependence through shared signals: compare P(both halves below the median)
    med = np.median(direct[:, 0])
    pd = np.mean((direct < med).all(axis=1))
    pc = np.mean((counts < med).all(axis=1))
    assert abs(pd - pc) < 4 * math.sqrt(0.25 / reps) + 0.02
