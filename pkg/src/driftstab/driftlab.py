"""Exact drift verification on finite-state Markov chains.

Everything here is a finite linear-algebra computation: stationary laws,
first-passage costs, the sampled kernel of a stopping rule, and an exhaustive
walk over stop-time prefixes for the supermartingale check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml
from scipy.sparse.csgraph import breadth_first_order, connected_components

from . import _kernels
from .errors import ConfigError, EnumerationLimit, InputError, StructureError
from .plant import RandomStream

ROW_SUM_TOL = 1e-12
PRUNE = 1e-12
ENUMERATION_CAP = 10**6
TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FiniteChain:
    P: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
            raise InputError(f"transition matrix must be square, got shape {P.shape}")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise InputError("transition probabilities must be finite and non-negative")
        bad = np.flatnonzero(np.abs(P.sum(axis=1) - 1) > ROW_SUM_TOL)
        if bad.size:
            raise InputError(f"rows {bad.tolist()} do not sum to 1")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def communicating_classes(self) -> list[list[int]]:
        k, labels = connected_components(self.P > 0, directed=True, connection="strong")
        return [np.flatnonzero(labels == c).tolist() for c in range(k)]

    def is_irreducible(self) -> bool:
        return len(self.communicating_classes()) == 1


# Stopping rules: T_{z+1} - T_z as a function of the path after T_z.

@dataclass(frozen=True)
class FixedN:
    n: int


@dataclass(frozen=True)
class StateDependent:
    n: tuple[int, ...]


@dataclass(frozen=True)
class Hitting:
    """Next stop is the first t >= 1 with phi_t in ``target``."""

    target: frozenset[int]


StopRule = FixedN | StateDependent | Hitting


def _as_vector(v, n: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(arr)):
        raise ConfigError("values must be finite", name)
    return arr


def _mask(states, n: int) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    idx = list(states)
    if any(not 0 <= i < n for i in idx):
        raise ConfigError(f"state set {sorted(idx)} outside 0..{n - 1}")
    m[idx] = True
    return m


@dataclass
class DriftSpec:
    V: np.ndarray
    f: np.ndarray
    delta: np.ndarray
    C: frozenset[int]
    b: float
    stop: StopRule

    @classmethod
    def build(cls, n: int, V, f, delta, C, b: float, stop: StopRule) -> "DriftSpec":
        spec = cls(
            _as_vector(V, n, "V"), _as_vector(f, n, "f"), _as_vector(delta, n, "delta"),
            frozenset(int(c) for c in C), float(b), stop,
        )
        spec.check(n)
        return spec

    def check(self, n: int):
        if np.any(self.V <= 0):
            raise ConfigError("V must be positive", "V")
        if np.any(self.f < 1):
            raise ConfigError("f must be >= 1", "f")
        if np.any(self.delta < 1):
            raise ConfigError("delta must be >= 1", "delta")
        _mask(self.C, n)
        if isinstance(self.stop, FixedN) and self.stop.n < 1:
            raise ConfigError("fixed stopping step must be >= 1", "stop.n")
        if isinstance(self.stop, StateDependent):
            if len(self.stop.n) != n or min(self.stop.n) < 1:
                raise ConfigError(f"need {n} state-dependent steps, all >= 1", "stop.n")
        if isinstance(self.stop, Hitting):
            if not self.stop.target:
                raise ConfigError("hitting target must be non-empty", "stop.target")
            _mask(self.stop.target, n)


def _require_irreducible(chain: FiniteChain):
    classes = chain.communicating_classes()
    if len(classes) > 1:
        raise StructureError(f"chain is reducible; communicating classes {classes}", classes)


def stationary_dist(chain: FiniteChain) -> np.ndarray:
    _require_irreducible(chain)
    n = chain.n
    M = chain.P.T - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return np.linalg.solve(M, rhs)


def _check_reachable(chain: FiniteChain, target: np.ndarray):
    # states that can reach the target: BFS from the target on reversed edges
    G = (chain.P.T > 0).astype(np.int8)
    seen = np.zeros(chain.n, dtype=bool)
    for t in np.flatnonzero(target):
        seen[breadth_first_order(G, t, directed=True, return_predecessors=False)] = True
    if not seen.all():
        raise StructureError(f"target set unreachable from states {np.flatnonzero(~seen).tolist()}")


def _first_passage(chain: FiniteChain, target: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve g = r + P[:, out] g[out] for every state (sum of r up to tau_target - 1).

    ``r`` may be a vector or a matrix with one column per right-hand side.
    """
    _check_reachable(chain, target)
    P, out = chain.P, ~target
    g = np.empty_like(r, dtype=float)
    if out.any():
        A = np.eye(out.sum()) - P[np.ix_(out, out)]
        g[out] = np.linalg.solve(A, r[out])
    g[target] = r[target] + P[np.ix_(target, out)] @ g[out]
    return g


def kac_moment(chain: FiniteChain, f, A) -> tuple[float, float]:
    """Both sides of pi(f) = sum_{x in A} pi(x) E_x[sum_{t < tau_A} f(phi_t)]."""
    pi = stationary_dist(chain)
    f = _as_vector(f, chain.n, "f")
    mask = _mask(A, chain.n)
    if pi[mask].sum() <= 0:
        raise StructureError("pi(A) = 0")
    g = _first_passage(chain, mask, f)
    return float(pi @ f), float(pi[mask] @ g[mask])


def hitting_cost(chain: FiniteChain, f, C, inclusive: bool = False) -> np.ndarray:
    """Expected f-cost until C.

    ``inclusive=False``: E_x[sum_{t=0}^{tau_C - 1} f] with tau_C = min{t >= 1}.
    ``inclusive=True``: E_x[sum_{t=0}^{sigma_C} f] with sigma_C = min{t >= 0},
    which equals f on C and solves PW = W - f exactly off C. Off C the two
    differ by E_x[f(phi_{tau_C})].
    """
    f = _as_vector(f, chain.n, "f")
    mask = _mask(C, chain.n)
    if not inclusive:
        return _first_passage(chain, mask, f)
    P, out = chain.P, ~mask
    _check_reachable(chain, mask)
    W = f.copy()
    if out.any():
        A = np.eye(out.sum()) - P[np.ix_(out, out)]
        W[out] = np.linalg.solve(A, f[out] + P[np.ix_(out, mask)] @ f[mask])
    return W


@dataclass
class V3Result:
    W: np.ndarray
    b_f: float
    gap: np.ndarray  # PW - W + f; <= b_f on C, == 0 off C

    def off_c_residual(self, C) -> float:
        out = ~_mask(C, len(self.W))
        return float(np.max(np.abs(self.gap[out]))) if out.any() else 0.0


def v3_constant(chain: FiniteChain, f, C) -> V3Result:
    """Inclusive hitting cost W and the smallest b_f with PW <= W - f + b_f 1_C."""
    f = _as_vector(f, chain.n, "f")
    W = hitting_cost(chain, f, C, inclusive=True)
    gap = chain.P @ W - W + f
    return V3Result(W, float(gap[_mask(C, chain.n)].max()), gap)


def sampled_kernel(chain: FiniteChain, stop: StopRule, f) -> tuple[np.ndarray, np.ndarray]:
    """Law of the next stop state and expected f-cost over the block.

    Returns ``(Q, g)`` with ``Q[x, y] = P_x(phi_T = y)`` and
    ``g[x] = E_x[sum_{k=0}^{T-1} f(phi_k)]``, T the first stop after 0.
    """
    n, P = chain.n, chain.P
    f = _as_vector(f, n, "f")
    if isinstance(stop, Hitting):
        target = _mask(stop.target, n)
        Q = np.zeros((n, n))
        Q[:, target] = _first_passage(chain, target, P[:, target].copy())
        return Q, _first_passage(chain, target, f)
    steps = [stop.n] * n if isinstance(stop, FixedN) else list(stop.n)
    Q, g = np.zeros((n, n)), np.zeros(n)
    Pk, cost = np.eye(n), np.zeros(n)
    for k in range(1, max(steps) + 1):
        cost = cost + Pk @ f
        Pk = Pk @ P
        for x in np.flatnonzero(np.asarray(steps) == k):
            Q[x], g[x] = Pk[x], cost[x]
    return Q, g


@dataclass
class DriftReport:
    next_V: np.ndarray  # E_x[V(phi_T)]
    block_f: np.ndarray  # E_x[sum_{k<T} f(phi_k)]
    drift_ok: np.ndarray
    block_ok: np.ndarray
    b_min: float  # smallest b making the first inequality hold on C
    in_C: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(self.drift_ok.all() and self.block_ok.all())

    def violating_states(self) -> list[int]:
        return np.flatnonzero(~(self.drift_ok & self.block_ok)).tolist()


def verify_random_time_drift(chain: FiniteChain, spec: DriftSpec) -> DriftReport:
    spec.check(chain.n)
    Q, g = sampled_kernel(chain, spec.stop, spec.f)
    inC = _mask(spec.C, chain.n)
    next_V = Q @ spec.V
    excess = next_V - spec.V + spec.delta
    drift_ok = excess <= spec.b * inC + TOL
    block_ok = g <= spec.delta + TOL
    b_min = max(0.0, float(excess[inC].max())) if inC.any() else 0.0
    return DriftReport(next_V, g, drift_ok, block_ok, b_min, inC)


def _block_paths(chain: FiniteChain, x: int, n: int, prune: float):
    """All length-n continuations of state x with probability above ``prune``."""
    P = chain.P
    frontier = [((x,), 1.0)]
    for _ in range(n):
        nxt = []
        for path, pr in frontier:
            for y in np.flatnonzero(P[path[-1]]):
                q = pr * P[path[-1], y]
                if q > prune:
                    nxt.append((path + (int(y),), q))
        frontier = nxt
    return frontier


@dataclass
class SupermartingaleReport:
    n_prefixes: int
    min_slack: float  # min over prefixes of M_z - E[M_{z+1} | F_{T_z}]
    n_tight: int  # prefixes where the slack is zero to TOL
    violations: dict[int, float] = field(default_factory=dict)  # state -> slack < 0

    @property
    def holds(self) -> bool:
        return not self.violations


def supermartingale_check(
    chain: FiniteChain,
    spec: DriftSpec,
    horizon: int,
    cost: str = "f",
    prune: float = PRUNE,
    cap: int = ENUMERATION_CAP,
) -> SupermartingaleReport:
    """Check E[M_{z+1} | F_{T_z}] <= M_z along every stop-time prefix up to ``horizon``.

    M_0 = V(phi_0) and M_{z+1} = V(phi_{T_{z+1}}) + sum_{k < T_{z+1}} f(phi_k)
    - sum_{j <= z} b 1_C(phi_{T_j}). The increment given a prefix ending at
    stop state x is E_x[V(phi_T) + sum_{k<T} f(phi_k)] - V(x) - b 1_C(x). For
    fixed and state-dependent rules that expectation is taken by enumerating
    every block path; hitting rules use the first-passage solve. Prefixes
    start from every state and extend through the sampled kernel, pruning
    those below ``prune`` in probability.

    ``cost="delta"`` uses the other construction, where each block adds
    delta(phi_{T_z}) in place of its f-cost.
    """
    if cost not in ("f", "delta"):
        raise ValueError(f"cost must be 'f' or 'delta', got {cost!r}")
    spec.check(chain.n)
    n = chain.n
    if n**horizon > cap:
        raise EnumerationLimit(f"{n}^{horizon} prefixes exceed the cap {cap}")
    inC = _mask(spec.C, n)
    Q, g = sampled_kernel(chain, spec.stop, spec.f)
    incr = {}

    def increment(x: int) -> float:
        if x not in incr:
            if cost == "delta":
                e = Q[x] @ spec.V + spec.delta[x]
            elif isinstance(spec.stop, Hitting):
                e = Q[x] @ spec.V + g[x]
            else:
                steps = spec.stop.n if isinstance(spec.stop, FixedN) else spec.stop.n[x]
                e = math.fsum(
                    pr * (spec.V[p[-1]] + math.fsum(spec.f[s] for s in p[:-1]))
                    for p, pr in _block_paths(chain, x, steps, prune)
                )
            incr[x] = e - spec.V[x] - spec.b * inC[x]
        return incr[x]

    report = SupermartingaleReport(0, math.inf, 0)
    frontier = [(x, 1.0) for x in range(n)]
    for _ in range(horizon):
        nxt = []
        for x, pr in frontier:
            slack = -increment(x)
            report.n_prefixes += 1
            report.min_slack = min(report.min_slack, slack)
            if abs(slack) <= TOL:
                report.n_tight += 1
            elif slack < 0:
                report.violations[x] = slack
            for y in np.flatnonzero(Q[x] > 0):
                q = pr * Q[x, y]
                if q > prune:
                    nxt.append((int(y), q))
        frontier = nxt
    return report


@dataclass
class PiBoundReport:
    pi_f: float
    b_f: float

    @property
    def holds(self) -> bool:
        return self.pi_f <= self.b_f + TOL


def verify_pi_f_bound(chain: FiniteChain, spec: DriftSpec) -> PiBoundReport:
    """pi(f) against the constant b_f of the inclusive hitting-cost solution on C."""
    pi = stationary_dist(chain)
    return PiBoundReport(float(pi @ spec.f), v3_constant(chain, spec.f, spec.C).b_f)


def sample_path(chain: FiniteChain, T: int, seed: int, start: int = 0, stream_id: int = 0) -> np.ndarray:
    cum = np.cumsum(chain.P, axis=1)
    cum[:, -1] = 1.0
    u = RandomStream(seed, stream_id).uniform(T - 1)
    return _kernels.chain_path(cum, start, u)


def read_chain(path) -> FiniteChain:
    try:
        P = np.loadtxt(path, ndmin=2)
    except ValueError as e:
        raise InputError(f"{path}: {e}") from e
    return FiniteChain(P)


_SPEC_KEYS = {"V", "f", "delta", "C", "b", "stop"}


def parse_drift_spec(data: dict, n: int) -> DriftSpec:
    if not isinstance(data, dict):
        raise ConfigError("drift spec must be a mapping")
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "spec")
    missing = _SPEC_KEYS - set(data) - {"f", "delta", "b"}
    if missing:
        raise ConfigError(f"missing keys {sorted(missing)}", "spec")
    stop = data["stop"]
    if not isinstance(stop, dict) or "rule" not in stop:
        raise ConfigError("stop needs a 'rule' entry", "stop")
    rule = stop["rule"]
    extra = set(stop) - {"rule", "n", "target"}
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)}", "stop")
    if rule == "fixed":
        rule_obj = FixedN(int(stop["n"]))
    elif rule == "state_dependent":
        rule_obj = StateDependent(tuple(int(k) for k in stop["n"]))
    elif rule == "hitting":
        rule_obj = Hitting(frozenset(int(k) for k in stop["target"]))
    else:
        raise ConfigError(f"unknown rule {rule!r}", "stop.rule")
    return DriftSpec.build(
        n, data["V"], data.get("f", 1.0), data.get("delta", 1.0), data["C"], data.get("b", 0.0), rule_obj
    )


def read_drift_spec(path, n: int) -> DriftSpec:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return parse_drift_spec(data, n)


def birth_death(n: int, down: float) -> FiniteChain:
    """Reflecting walk on {0..n-1}: down with prob ``down``, up otherwise."""
    P = np.zeros((n, n))
    for i in range(n):
        P[i, max(i - 1, 0)] += down
        P[i, min(i + 1, n - 1)] += 1 - down
    return FiniteChain(P)


def random_chain(n: int, rng: np.random.Generator, density: float = 0.6) -> FiniteChain:
    """Random irreducible chain: a random cycle plus random extra edges."""
    while True:
        W = rng.random((n, n)) * (rng.random((n, n)) < density)
        perm = rng.permutation(n)
        W[perm, np.roll(perm, -1)] += rng.random(n) + 0.1
        P = W / W.sum(axis=1, keepdims=True)
        chain = FiniteChain(P)
        if chain.is_irreducible():
            return chain
