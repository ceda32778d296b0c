import math

import numpy as np
import pytest

from driftstab.driftlab import (
    DriftSpec,
    FiniteChain,
    FixedN,
    Hitting,
    StateDependent,
    birth_death,
    hitting_cost,
    kac_moment,
    parse_drift_spec,
    random_chain,
    read_chain,
    sample_path,
    sampled_kernel,
    stationary_dist,
    supermartingale_check,
    v3_constant,
    verify_pi_f_bound,
    verify_random_time_drift,
)
from driftstab.errors import ConfigError, EnumerationLimit, InputError, StructureError

from oracles import brute_block, hitting_by_iteration

N_BD = 21


def bd_spec(stop=FixedN(1), f=1.0, delta=1.0):
    V = 5.0 * (np.arange(N_BD) + 1)
    return DriftSpec.build(N_BD, V, f, delta, {0, 1}, 3.0, stop)


@pytest.fixture(scope="module")
def bd():
    return birth_death(N_BD, 0.7)


# --- stationary law ----------------------------------------------------------------


@pytest.mark.parametrize(
    "P,pi",
    [
        ([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]),
        ([[0.8, 0.2], [0.3, 0.7]], [0.6, 0.4]),
        ([[0, 1, 0], [0, 0, 1], [1, 0, 0]], [1 / 3] * 3),
    ],
)
def test_stationary_examples(P, pi):
    assert np.allclose(stationary_dist(FiniteChain(np.array(P, float))), pi, atol=1e-14)


def test_reducible_chain_rejected():
    chain = FiniteChain(np.array([[1.0, 0.0], [0.5, 0.5]]))
    with pytest.raises(StructureError) as e:
        stationary_dist(chain)
    assert len(e.value.classes) == 2


@pytest.mark.parametrize(
    "P", [[[0.5, 0.6], [0.5, 0.5]], [[1.2, -0.2], [0.5, 0.5]], [[1.0, 0.0]], [[np.nan, 1], [0, 1]]]
)
def test_invalid_matrix(P):
    with pytest.raises(InputError):
        FiniteChain(np.array(P, float))


# --- Kac -----------------------------------------------------------------------------


def test_kac_examples():
    sym = FiniteChain(np.full((2, 2), 0.5))
    assert kac_moment(sym, 1.0, {0}) == pytest.approx((1.0, 1.0), abs=1e-14)
    assert kac_moment(sym, 1.0, {0, 1}) == pytest.approx((1.0, 1.0), abs=1e-14)


def test_kac_random_chains():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        chain = random_chain(n, rng)
        f = rng.uniform(1, 10, n)
        A = set(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist())
        lhs, rhs = kac_moment(chain, f, A)
        assert abs(lhs - rhs) < 1e-10


# --- hitting costs and V3 ----------------------------------------------------------


def test_hitting_cost_two_state():
    chain = FiniteChain(np.array([[1.0, 0.0], [1.0, 0.0]]))
    f = np.array([2.0, 3.0])
    W = hitting_cost(chain, f, {0}, inclusive=True)
    assert W.tolist() == [2.0, 5.0]
    assert chain.P[1] @ W == W[1] - f[1]


def test_hitting_cost_unit_f_is_mean_hitting_time():
    rng = np.random.default_rng(5)
    chain = random_chain(6, rng)
    g = hitting_cost(chain, 1.0, {0, 3})
    target = np.zeros(6, bool)
    target[[0, 3]] = True
    _, g_ref = hitting_by_iteration(chain.P, np.ones(6), target)
    assert np.allclose(g, g_ref, rtol=1e-9)


def test_v3_random_chains():
    rng = np.random.default_rng(6)
    for _ in range(50):
        chain = random_chain(6, rng)
        f = rng.uniform(1, 5, 6)
        C = set(rng.choice(6, size=2, replace=False).tolist())
        res = v3_constant(chain, f, C)
        assert res.off_c_residual(C) < 1e-10
        assert math.isfinite(res.b_f)
        assert np.all(chain.P @ res.W <= res.W - f + res.b_f * np.isin(np.arange(6), list(C)) + 1e-10)


def test_inclusive_and_exclusive_differ_by_entry_cost():
    rng = np.random.default_rng(7)
    chain = random_chain(5, rng)
    f = rng.uniform(1, 3, 5)
    C = {1}
    incl = hitting_cost(chain, f, C, inclusive=True)
    excl = hitting_cost(chain, f, C, inclusive=False)
    off = [x for x in range(5) if x not in C]
    assert np.allclose(incl[off], excl[off] + f[1], rtol=1e-12)


def test_unreachable_target():
    chain = FiniteChain(np.array([[1.0, 0.0], [0.5, 0.5]]))
    with pytest.raises(StructureError):
        hitting_cost(chain, 1.0, {1})


# --- random-time drift -------------------------------------------------------------


def test_degenerate_spec_holds():
    chain = random_chain(4, np.random.default_rng(0))
    spec = DriftSpec.build(4, 1.0, 1.0, 1.0, range(4), 1.0, FixedN(1))
    rep = verify_random_time_drift(chain, spec)
    assert rep.holds and rep.b_min == pytest.approx(1.0)


def test_birth_death_spec(bd):
    rep = verify_random_time_drift(bd, bd_spec())
    assert rep.holds
    V = 5.0 * (np.arange(N_BD) + 1)
    off = np.arange(2, N_BD)
    assert np.all(rep.next_V[off] - V[off] + 1 <= -1 + 1e-12)
    assert rep.b_min == pytest.approx(2.5)


def test_birth_death_state_dependent_matches_enumeration(bd):
    steps = tuple(1 + (i % 2) for i in range(N_BD))
    spec = bd_spec(StateDependent(steps), delta=2.0)
    Q, g = sampled_kernel(bd, spec.stop, spec.f)
    # depth-2 enumeration on a small chain with the same rule
    small = birth_death(6, 0.7)
    st = tuple(1 + (i % 2) for i in range(6))
    V = np.arange(6) + 1.0
    nv, cost = brute_block(small.P, V, np.ones(6), st)
    Qs, gs = sampled_kernel(small, StateDependent(st), 1.0)
    assert np.allclose(Qs @ V, nv, atol=1e-12) and np.allclose(gs, cost, atol=1e-12)
    assert np.allclose(g, [1 + (i % 2) for i in range(N_BD)])
    assert np.allclose(Q.sum(axis=1), 1.0)


def test_drift_verification_against_enumeration():
    rng = np.random.default_rng(11)
    for trial in range(15):
        chain = random_chain(5, rng)
        V = rng.uniform(1, 20, 5)
        f = rng.uniform(1, 3, 5)
        delta = rng.uniform(1, 8, 5)
        C = set(rng.choice(5, size=2, replace=False).tolist())
        rules = [FixedN(1), FixedN(2), FixedN(3), StateDependent(tuple(rng.integers(1, 4, 5).tolist()))]
        for rule in rules:
            spec = DriftSpec.build(5, V, f, delta, C, 4.0, rule)
            rep = verify_random_time_drift(chain, spec)
            steps = [rule.n] * 5 if isinstance(rule, FixedN) else list(rule.n)
            nv, cost = brute_block(chain.P, V, f, steps)
            assert np.allclose(rep.next_V, nv, atol=1e-10)
            assert np.allclose(rep.block_f, cost, atol=1e-10)
            inC = np.isin(np.arange(5), list(C))
            drift_ok = nv - V + delta <= 4.0 * inC + 1e-10
            assert np.array_equal(rep.drift_ok, drift_ok)
            assert np.array_equal(rep.block_ok, cost <= delta + 1e-10)


def test_hitting_rule_against_iteration():
    rng = np.random.default_rng(12)
    for _ in range(10):
        chain = random_chain(5, rng)
        f = rng.uniform(1, 3, 5)
        target = np.zeros(5, bool)
        target[rng.choice(5, size=2, replace=False)] = True
        Q, g = sampled_kernel(chain, Hitting(frozenset(np.flatnonzero(target).tolist())), f)
        Q_ref, g_ref = hitting_by_iteration(chain.P, f, target)
        assert np.allclose(Q, Q_ref, atol=1e-10) and np.allclose(g, g_ref, rtol=1e-9)


def test_violating_spec_flags_states(bd):
    rep = verify_random_time_drift(bd, bd_spec(f=3.0, delta=3.0))
    assert not rep.holds
    # state 0 needs b = 4.5 > 3; the reflecting top state has extra downward drift
    assert rep.violating_states() == [0, *range(2, N_BD - 1)]


# --- supermartingale ----------------------------------------------------------------


def test_supermartingale_degenerate_is_tight():
    chain = random_chain(4, np.random.default_rng(1))
    spec = DriftSpec.build(4, 1.0, 1.0, 1.0, range(4), 1.0, FixedN(1))
    rep = supermartingale_check(chain, spec, 3)
    assert rep.holds and rep.n_tight == rep.n_prefixes


def test_supermartingale_birth_death(bd):
    for cost in ("f", "delta"):
        rep = supermartingale_check(bd, bd_spec(), 3, cost=cost)
        assert rep.holds and rep.min_slack > 0
    steps = tuple(1 + (i % 2) for i in range(N_BD))
    rep = supermartingale_check(bd, bd_spec(StateDependent(steps), delta=2.0), 2)
    assert rep.holds


def test_supermartingale_flags_violation(bd):
    rep = supermartingale_check(bd, bd_spec(f=3.0, delta=3.0), 2)
    assert not rep.holds
    assert sorted(rep.violations) == [0, *range(2, N_BD - 1)]


def test_supermartingale_matches_direct_increment():
    rng = np.random.default_rng(3)
    chain = random_chain(5, rng)
    V = rng.uniform(1, 10, 5)
    spec = DriftSpec.build(5, V, 1.5, 1.0, {0}, 2.0, FixedN(2))
    nv, cost = brute_block(chain.P, V, spec.f, [2] * 5)
    slack = -(nv + cost - V - 2.0 * (np.arange(5) == 0))
    rep = supermartingale_check(chain, spec, 1)
    assert rep.min_slack == pytest.approx(slack.min(), abs=1e-12)
    assert sorted(rep.violations) == np.flatnonzero(slack < -1e-10).tolist()


def test_enumeration_cap(bd):
    with pytest.raises(EnumerationLimit):
        supermartingale_check(bd, bd_spec(), 6)


# --- pi(f) bound ----------------------------------------------------------------------


def test_pi_f_bound(bd):
    rep = verify_pi_f_bound(bd, bd_spec())
    assert rep.pi_f == pytest.approx(1.0) and rep.holds and rep.b_f >= 1
    f = 1 + np.arange(N_BD) / 10
    rep = verify_pi_f_bound(bd, bd_spec(f=f))
    pi = stationary_dist(bd)
    assert rep.pi_f == pytest.approx(float(pi @ f), rel=1e-14) and rep.holds
    scaled = verify_pi_f_bound(bd, bd_spec(f=10 * f))
    assert scaled.pi_f == pytest.approx(10 * rep.pi_f, rel=1e-12)
    assert scaled.b_f == pytest.approx(10 * rep.b_f, rel=1e-12)


# --- simulation corollaries -----------------------------------------------------------


def test_law_of_large_numbers(bd):
    f = 1 + np.arange(N_BD) / 20
    assert verify_random_time_drift(bd, bd_spec(f=f, delta=f)).holds
    path = sample_path(bd, 10**6, seed=0)
    g = np.sin(np.arange(N_BD))  # |g| <= f
    vals = g[path]
    batches = vals.reshape(1000, -1).mean(axis=1)
    se = batches.std(ddof=1) / math.sqrt(len(batches))
    assert abs(vals.mean() - stationary_dist(bd) @ g) < 3 * se


def test_recurrence_to_C(bd):
    spec = bd_spec()
    assert verify_random_time_drift(bd, spec).holds
    path = sample_path(bd, 10**6, seed=1, start=N_BD - 1)
    visits = np.flatnonzero(np.isin(path, [0, 1]))
    assert visits.size > 0
    gaps = np.diff(visits)
    pi_C = stationary_dist(bd)[[0, 1]].sum()
    assert gaps.mean() == pytest.approx(1 / pi_C, rel=0.02)


def test_sample_path_deterministic(bd):
    assert np.array_equal(sample_path(bd, 1000, seed=4), sample_path(bd, 1000, seed=4))


# --- input parsing --------------------------------------------------------------------


def test_parse_spec_rules():
    base = {"V": [1, 2, 3], "C": [0]}
    assert parse_drift_spec({**base, "stop": {"rule": "fixed", "n": 2}}, 3).stop == FixedN(2)
    assert parse_drift_spec({**base, "stop": {"rule": "state_dependent", "n": [1, 2, 1]}}, 3).stop == StateDependent(
        (1, 2, 1)
    )
    assert parse_drift_spec({**base, "stop": {"rule": "hitting", "target": [0]}}, 3).stop == Hitting(frozenset({0}))


@pytest.mark.parametrize(
    "data",
    [
        {"V": [1, 2], "C": [0], "stop": {"rule": "fixed", "n": 1}, "typo": 1},
        {"V": [1, 2], "C": [0], "stop": {"rule": "sometimes"}},
        {"V": [1, 2], "C": [5], "stop": {"rule": "fixed", "n": 1}},
        {"V": [1, 2], "C": [0], "f": 0.5, "stop": {"rule": "fixed", "n": 1}},
        {"V": [1, 2], "C": [0]},
    ],
)
def test_parse_spec_errors(data):
    with pytest.raises(ConfigError):
        parse_drift_spec(data, 2)


def test_read_chain_errors(tmp_path):
    bad = tmp_path / "chain.txt"
    bad.write_text("0.5 0.5\n0.5 oops\n")
    with pytest.raises(InputError):
        read_chain(bad)
