"""
Inter-stop times against their bounds
=====================================

From a perfectly zoomed start at a large bin size, the time to the next
successful granular reception is nearly geometric. Monte-Carlo tails are
compared with the geometric lower bound and the recursive upper bound.
"""
import math

from driftstab import estimate_stopping_tail, reference_scenario

params = reference_scenario()
cfg = params.quantizer

for idx in (3, 8, math.ceil(10 / cfg.s_float)):
    table = estimate_stopping_tail(params, idx, 100_000, 8, seed=1)
    print(f"\ndelta0 = {table.delta0:.4g}")
    print("  k   lower      empirical  [99% CI]              upper")
    for (k, lo, emp, clo, chi, up), ok in zip(table.rows, table.sandwich_ok()):
        print(f"  {k:<3} {lo:.3e}  {emp:.3e}  [{clo:.3e}, {chi:.3e}]  {up:.3e} {'' if ok else '<-'}")

# At small delta0 the upper bound carries a large Gaussian term; it decays to
# the geometric law as delta0 grows.
