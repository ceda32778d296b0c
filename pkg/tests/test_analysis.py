import math
from fractions import Fraction

import numpy as np
import pytest

from driftstab.analysis import (
    TailBoundParams,
    analytic_drift_limit,
    check_conditions,
    estimate_drift_at_stops,
    estimate_moment,
    estimate_stopping_tail,
    min_bins_for_second_moment,
    moment_condition_value,
    tail_lower_bound,
    tail_upper_bound,
    tail_upper_bounds,
    wilson_interval,
)
from driftstab.errors import SynthesisError
from driftstab.loop import LoopParams
from driftstab.plant import PlantParams
from driftstab.quantizer import snap_gains_to_lattice


def test_reference_condition_values(ref):
    rep = check_conditions(2.5, 1.0, 0.9, ref.quantizer, 2)
    assert rep.moment_value == 0.9765625
    assert rep.necessary_value == pytest.approx(0.85, abs=1e-15)
    assert Fraction(6.25) * (Fraction(1, 10) + Fraction(9, 10) / 16) == Fraction(0.9765625)
    assert rep.capacity_margin == pytest.approx(2 * 0.9 - math.log2(2.5), abs=1e-15)
    assert rep.all_ok


def test_two_bins_fail_but_are_reported():
    rep = check_conditions(2.5, 1.0, 0.9, None, 2, K=2)
    assert rep.moment_value == 2.03125 and not rep.moment_ok
    assert not rep.capacity_ok
    assert [r[0] for r in rep.rows()] == ["capacity", "rbdd2", "rbdd3", "moment_2", "necessary_2"]


def test_check_conditions_needs_K_without_config():
    with pytest.raises(ValueError):
        check_conditions(2.5, 1.0, 0.9, None, 2)


@pytest.mark.parametrize("a,p,bins", [(2.5, 0.9, 5), (1.0, 1.0, 2)])
def test_min_bins(a, p, bins):
    assert min_bins_for_second_moment(a, p) == bins


def test_min_bins_infeasible():
    with pytest.raises(SynthesisError):
        min_bins_for_second_moment(2.5, 0.8)


def test_min_bins_tight_at_reference_example():
    bins = min_bins_for_second_moment(2.5, 0.9)
    assert moment_condition_value(2.5, 0.9, bins - 1, 2) < 1
    assert moment_condition_value(2.5, 0.9, bins - 2, 2) >= 1


@pytest.mark.parametrize("a,p,K", [(2.5, 0.9, 4), (2.5, 0.9, 16), (3.0, 0.95, 8), (1.5, 0.8, 4)])
def test_moment_condition_implies_rbdd3(a, p, K):
    if moment_condition_value(a, p, K, 2) < 1:
        cfg = snap_gains_to_lattice(a, p, K, 2, m=2)
        assert check_conditions(a, 1.0, p, cfg, 2).rbdd3_ok


@pytest.mark.parametrize("k,p,v", [(1, 0.9, 1.0), (3, 0.9, 0.01), (2, 0.5, 0.5)])
def test_tail_lower_bound(k, p, v):
    assert tail_lower_bound(k, p) == pytest.approx(v, rel=1e-14)


def test_tail_bound_params(ref):
    tb = TailBoundParams.from_params(ref)
    assert tb.xi > 1 and tb.N_const > 0.5
    assert tb.sigma_prime == pytest.approx(math.sqrt(1 / (1 - 2.5**-2)))


def test_tail_upper_bound_limits(ref):
    tb = TailBoundParams.from_params(ref)
    assert tail_upper_bound(1, 8.0, tb, 0.9) == 1.0
    cfg = ref.quantizer
    prev = None
    for idx in range(10, 40, 3):
        th = tail_upper_bounds(8, cfg.bin_size(idx), tb, 0.9)
        ratio = th / 0.1 ** np.arange(8)
        assert np.all(ratio >= 1 - 1e-12)
        if prev is not None:
            assert np.all(ratio <= prev + 1e-12)
        prev = ratio
    assert np.allclose(prev, 1.0, rtol=1e-12)


def test_tail_recursion_gaussian_term_vanishes(ref):
    tb = TailBoundParams.from_params(ref)
    d0 = 8.0
    th = tail_upper_bounds(10, d0, tb, 0.9)
    terms = [tb.C(d0) * math.exp(-tb.Xi(k, d0)) for k in range(2, 11)]
    for k in range(2, 11):
        assert th[k - 1] <= th[k - 2] * 0.1 + terms[k - 2] * (1 + 1e-12)
    assert all(b <= a for a, b in zip(terms, terms[1:]))
    # larger delta0 kills the Gaussian term
    big = tail_upper_bounds(10, 2.0**12, tb, 0.9)
    assert np.allclose(big, 0.1 ** np.arange(10), rtol=1e-12, atol=0)


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(30, 1000)
    assert lo < 0.03 < hi
    assert wilson_interval(0, 100)[0] == 0.0


def test_stopping_tail_first_row_and_sandwich(ref):
    table = estimate_stopping_tail(ref, 15, 20_000, 6, seed=3)
    assert table.rows[0][2] == 1.0
    assert all(table.sandwich_ok())


def _perfect_channel():
    cfg = snap_gains_to_lattice(2.5, 1.0, 4, 2)
    return LoopParams.build(PlantParams(a=2.5), cfg, 1.0)


def test_stopping_tail_perfect_channel():
    table = estimate_stopping_tail(_perfect_channel(), 20, 5000, 4, seed=0)
    assert table.rows[0][2] == 1.0
    assert table.rows[1][2] == 0.0


def test_drift_perfect_channel_is_two_log_alpha():
    params = _perfect_channel()
    rows = estimate_drift_at_stops(params, 2000, [20, 25], seed=0)
    for r in rows:
        assert r[2] == pytest.approx(2 * math.log(params.quantizer.alpha), rel=1e-12)


def test_drift_large_delta_brackets_limit(ref):
    limit = analytic_drift_limit(ref)
    assert limit == pytest.approx(
        2 * math.log(ref.quantizer.alpha) + 2 * (1 / 0.9 - 1) * math.log(ref.quantizer.zoom_out_gain)
    )
    rows = estimate_drift_at_stops(ref, 20_000, [1, 30], seed=1)
    assert rows[0][0] == 1  # the floor is merely reported
    assert rows[1][3] <= limit <= rows[1][4]


def test_moment_parallel_equals_serial(ref):
    a = estimate_moment(ref, 2, 5000, 3, seed=4, jobs=1)
    b = estimate_moment(ref, 2, 5000, 3, seed=4, jobs=2)
    assert [r.average for r in a.runs] == [r.average for r in b.runs]
    assert [r.stream_id for r in b.runs] == [0, 1, 2]


def test_three_bins_cannot_be_configured():
    assert moment_condition_value(2.5, 0.9, 2, 2) > 1
    with pytest.raises(SynthesisError):
        snap_gains_to_lattice(2.5, 0.9, 2, 2, m=2)
