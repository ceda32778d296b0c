"""
Why the 5-bin second moment is hard to see
==========================================

The moment condition |a|^2 (1-p+p/K^2) = 0.977 < 1 holds with 5 bins, yet
running averages of x^2 do not settle in 10^6 steps. Two effects:

* A run of k erasures multiplies x by about 2.5^k while it has probability
  0.1^k, so P(x^2 > y) falls off like y^(-ln 10 / ln 6.25), an index near
  1.26. The mean exists, the variance of x^2 does not, and sample means
  converge slowly with large jumps.
* Noise pushing the state just past the granular edge triggers zoom-out
  at gain 2.52 against growth 2.5; catching up takes hundreds of steps.
"""
import math

import numpy as np

from driftstab import estimate_moment, reference_scenario, simulate

print(f"tail index ln10/ln6.25 = {math.log(10) / math.log(6.25):.3f}")

for K in (4, 16):
    est = estimate_moment(reference_scenario(K=K), 2, 200_000, 4, seed=0)
    print(f"{K + 1} bins: " + ", ".join(f"{r.average:.3g} ({r.diagnostic:.0%})" for r in est.runs))

# Longest under-zoom excursion in a short 5-bin path.
traj = simulate(reference_scenario(), 20_000, seed=0)
under = np.abs(traj.column("h")) > 1
runs, n = [], 0
for u in under:
    n = n + 1 if u else 0
    runs.append(n)
print(f"longest under-zoom run: {max(runs)} steps, peak |x| {np.abs(traj.column('x')).max():.3g}")
