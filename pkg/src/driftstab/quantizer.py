"""Uniform K-bin quantizer with an overflow symbol and the adaptive zoom rule.

Bin sizes live on the lattice ``log2(delta) = s * idx`` with integer ``idx``.
Zoom-in subtracts ``A_exp`` from the index and zoom-out adds ``B_exp``, so
repeated updates never leave the lattice; the float bin size is recomputed
from the index whenever it is needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from scipy.optimize import brentq

from .errors import ConfigError, InputError, SynthesisError

MAX_A_EXP = 64


@dataclass(frozen=True)
class QuantizerConfig:
    K: int
    s: Fraction
    A_exp: int
    B_exp: int
    L_idx: int

    def __post_init__(self):
        if not isinstance(self.K, int) or self.K < 2 or self.K % 2:
            raise ConfigError(f"K must be an even integer >= 2, got {self.K!r}", "quantizer.K")
        s = Fraction(self.s)
        if s <= 0:
            raise ConfigError("lattice step s must be positive", "quantizer.s")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "_s_float", float(s))
        for name in ("A_exp", "B_exp"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer", f"quantizer.{name}")
        if math.gcd(self.A_exp, self.B_exp) != 1:
            raise ConfigError(
                f"A_exp={self.A_exp} and B_exp={self.B_exp} are not coprime", "quantizer.A_exp"
            )
        if self.L_idx < self.A_exp:
            # L' = alpha * 2**(s*L_idx) = 2**(s*(L_idx - A_exp)) >= 1
            raise ConfigError("L_idx must be >= A_exp so that the floor L' is >= 1", "quantizer.L_idx")

    @property
    def s_float(self) -> float:
        return self._s_float

    @property
    def R(self) -> float:
        return math.log2(self.K + 1)

    @property
    def R_prime(self) -> float:
        return math.log2(self.K)

    @property
    def alpha(self) -> float:
        return 2.0 ** (-self.A_exp * self._s_float)

    @property
    def zoom_out_gain(self) -> float:
        return 2.0 ** (self.B_exp * self._s_float)

    @property
    def floor_idx(self) -> int:
        return self.L_idx - self.A_exp

    @property
    def L(self) -> float:
        return self.bin_size(self.L_idx)

    @property
    def L_prime(self) -> float:
        return self.bin_size(self.floor_idx)

    def delta(self, a: float) -> float:
        return self.zoom_out_gain - abs(a)

    def bin_size(self, idx: int) -> float:
        return 2.0 ** (self._s_float * idx)

    def level(self, symbol: int, idx: int) -> float:
        """Reconstruction value of a channel symbol at bin index ``idx``."""
        if symbol == self.K + 1:
            return 0.0
        if not 1 <= symbol <= self.K:
            raise InputError(f"symbol {symbol} outside 1..{self.K + 1}")
        return (symbol - (self.K + 1) / 2) * self.bin_size(idx)

    def violations(self, a: float, p: float) -> list[str]:
        """Names of the rate inequalities that fail for plant gain ``a``."""
        out = []
        if not 0 < self.alpha < 1:
            out.append("alpha in (0,1)")
        if not self.zoom_out_gain > abs(a):
            out.append("zoom-out gain > |a|")
        if not self.alpha > abs(a) * 2.0 ** (-self.R_prime):
            out.append("Rbdd2")
        if not self.alpha * self.zoom_out_gain ** (1 / p - 1) < 1:
            out.append("Rbdd3")
        return out

    def validate(self, a: float, p: float) -> "QuantizerConfig":
        bad = self.violations(a, p)
        if bad:
            raise ConfigError(f"violates {', '.join(bad)} for a={a}, p={p}", "quantizer")
        return self


@dataclass(frozen=True)
class QuantizerOutput:
    symbol: int
    value: float


def overflow_ratio(cfg: QuantizerConfig, idx: int, x: float) -> float:
    return x / (cfg.bin_size(idx) * (cfg.K / 2))


def quantize(cfg: QuantizerConfig, idx: int, x: float) -> QuantizerOutput:
    if not math.isfinite(x):
        raise InputError(f"cannot quantize non-finite value {x}")
    K = cfg.K
    d = cfg.bin_size(idx)
    # granularity is decided by h so that quantize and update_bin agree
    if abs(x / (d * (K / 2))) > 1.0:
        return QuantizerOutput(K + 1, 0.0)
    k = _bin_index(x, d, K)
    return QuantizerOutput(k, (k - (K + 1) / 2) * d)


def _bin_index(x: float, d: float, K: int) -> int:
    k = math.floor(x / d) + K // 2 + 1
    # x/d may round across a bin edge; settle against the exact edges
    if k <= K and x >= (k - K // 2) * d:
        k += 1
    elif k >= 1 and x < (k - 1 - K // 2) * d:
        k -= 1
    return min(max(k, 1), K)


def update_bin(cfg: QuantizerConfig, idx: int, h: float, erasure_ok: bool) -> int:
    if abs(h) > 1.0 or not erasure_ok:
        return idx + cfg.B_exp
    if idx >= cfg.L_idx:
        return idx - cfg.A_exp
    return idx


def _moment_root(A: int, B: int, p: float, m: int) -> float:
    """Largest s with p*2**(-A m s) + (1-p)*2**(B m s) < 1 (inf when p == 1)."""
    if p >= 1:
        return math.inf

    def F(s):
        return p * 2.0 ** (-A * m * s) + (1 - p) * 2.0 ** (B * m * s) - 1

    hi = 1.0
    while F(hi) < 0:
        hi *= 2
    lo = hi / 2
    while F(lo) >= 0 and lo > 1e-12:
        lo /= 2
    if F(lo) >= 0:
        return 0.0
    return brentq(F, lo, hi, xtol=1e-15)


def snap_gains_to_lattice(
    a: float,
    p: float,
    K: int,
    B_exp: int = 2,
    m: int | None = None,
    L_idx: int | None = None,
    max_A: int = MAX_A_EXP,
) -> QuantizerConfig:
    """Choose ``s`` and ``A_exp`` so the lattice zoom factors satisfy the rate bounds.

    Candidates ``A_exp = 1, 2, ...`` coprime to ``B_exp`` are tried in order.
    For each, the admissible ``s`` form an open interval: zoom-out gain
    ``2**(B s) > |a|`` bounds it below, ``alpha = 2**(-A s) > |a|/K`` bounds it
    above, and ``alpha * (2**(B s))**(1/p - 1) < 1`` reduces to
    ``A > B (1/p - 1)``. When ``m`` is given the upper end is further cut so
    that ``p alpha**m + (1-p) gain**m < 1``, the condition under which the
    m-th moment of the bin size contracts between stopping times. The
    midpoint of the first non-empty interval is returned. ``L_idx`` defaults
    to ``A_exp`` (floor ``L' = 1``).
    """
    if K < 2 or K % 2:
        raise ConfigError(f"K must be an even integer >= 2, got {K}", "quantizer.K")
    if not 0 < p <= 1:
        raise ConfigError(f"p must lie in (0, 1], got {p}", "channel.p")
    la, lk = math.log2(abs(a)), math.log2(K)
    if not lk * p > la:
        raise SynthesisError(
            f"capacity condition log2(K) p > log2|a| fails: {lk * p:.6g} <= {la:.6g}", "capacity"
        )
    reasons = set()
    for A in range(1, max_A + 1):
        if math.gcd(A, B_exp) != 1:
            continue
        if not A > B_exp * (1 / p - 1):
            reasons.add("Rbdd3")
            continue
        lo, hi = la / B_exp, (lk - la) / A
        if hi <= lo:
            reasons.add("Rbdd2")
            continue
        if m is not None:
            hi = min(hi, _moment_root(A, B_exp, p, m))
            if hi <= lo:
                reasons.add(f"moment contraction (m={m})")
                continue
        s = Fraction((lo + hi) / 2).limit_denominator(10**12)
        cfg = QuantizerConfig(K, s, A, B_exp, A if L_idx is None else L_idx)
        if not cfg.violations(a, p):
            return cfg
    raise SynthesisError(
        f"no A_exp <= {max_A} coprime to B_exp={B_exp} satisfies the rate bounds "
        f"(violated: {', '.join(sorted(reasons))})",
        ", ".join(sorted(reasons)),
    )
