"""
Rate conditions and lattice synthesis
=====================================

An unstable scalar plant x' = 2.5 x + u + d is driven over a channel that
erases one packet in ten. How many quantizer bins do we need, and what zoom
factors make the bin size live on an exact log2 lattice?
"""
from driftstab import check_conditions, min_bins_for_second_moment, snap_gains_to_lattice
from driftstab.analysis import moment_condition_value

a, p = 2.5, 0.9

# The second-moment condition gives a bin count directly.
bins = min_bins_for_second_moment(a, p)
print(f"smallest bin count with a finite second moment: {bins}")
for K in range(2, 7):
    print(f"  K={K}: |a|^2 (1-p+p/K^2) = {moment_condition_value(a, p, K, 2):.6f}")

# Snap the zoom gains onto the lattice. With m=2 the synthesis also keeps the
# bin-size second moment contracting between stopping times.
for m in (None, 2):
    cfg = snap_gains_to_lattice(a, p, bins - 1, B_exp=2, m=m)
    print(f"\nm={m}: s={float(cfg.s):.6f} alpha={cfg.alpha:.6f} zoom-out={cfg.zoom_out_gain:.6f} "
          f"delta={cfg.delta(a):.4f}")
    for name, expr, value, ok in check_conditions(a, 1.0, p, cfg, 2).rows():
        print(f"  {name:<9} {expr:<28} {value:10.6f} {'ok' if ok else 'FAIL'}")

# Two finite bins cannot carry 2.5x growth: the capacity bound already fails.
rep = check_conditions(a, 1.0, p, None, 2, K=2)
print(f"\nK=2: capacity margin {rep.capacity_margin:.4f}, moment value {rep.moment_value}")
