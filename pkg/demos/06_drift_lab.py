"""
Exact drift checks on a finite chain
====================================

A reflecting walk on {0..20} that steps down with probability 0.7. The drift
inequality is verified by linear algebra, cross-checked by a walk over all
stop-time prefixes, and its long-run consequences are simulated.
"""
import numpy as np

from driftstab.driftlab import (
    DriftSpec,
    FixedN,
    StateDependent,
    birth_death,
    kac_moment,
    sample_path,
    stationary_dist,
    supermartingale_check,
    verify_pi_f_bound,
    verify_random_time_drift,
)

n = 21
chain = birth_death(n, 0.7)
V = 5.0 * (np.arange(n) + 1)
f = 1 + np.arange(n) / 20

spec = DriftSpec.build(n, V, f, f, {0, 1}, 3.0, FixedN(1))
rep = verify_random_time_drift(chain, spec)
print(f"one-step drift holds: {rep.holds}; smallest b on C: {rep.b_min}")

alt = DriftSpec.build(n, V, 1.0, 2.0, {0, 1}, 4.0, StateDependent(tuple(1 + i % 2 for i in range(n))))
# a larger delta costs more slack on C, so b goes up to 4
print(f"alternating 1/2-step rule holds: {verify_random_time_drift(chain, alt).holds}")

sm = supermartingale_check(chain, spec, 3)
print(f"supermartingale over {sm.n_prefixes} prefixes: min slack {sm.min_slack:.3f}")

bad = DriftSpec.build(n, V, 3.0, 3.0, {0, 1}, 3.0, FixedN(1))
print(f"over-demanding spec flags states {verify_random_time_drift(chain, bad).violating_states()}")

pib = verify_pi_f_bound(chain, spec)
lhs, rhs = kac_moment(chain, f, {0})
print(f"pi(f) = {pib.pi_f:.6f} <= b_f = {pib.b_f:.4f}; Kac sides {lhs:.12f} {rhs:.12f}")

path = sample_path(chain, 10**6, seed=0)
print(f"time average of f: {f[path].mean():.5f} against pi(f) {stationary_dist(chain) @ f:.5f}")
