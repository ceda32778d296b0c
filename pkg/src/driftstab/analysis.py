"""Stability condition checks, stopping-time tail bounds and Monte-Carlo estimators."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import norm
from statsmodels.stats.proportion import proportion_confint

from . import _kernels
from .errors import ConfigError, SynthesisError
from .loop import LoopParams, initial_state
from .plant import CHANNEL_LANE, INIT_LANE, NOISE_LANE, RandomStream
from .quantizer import QuantizerConfig

CONFIDENCE = 0.99
CHUNK = 1 << 16


def _dec(v) -> Fraction:
    """Shortest decimal that round-trips to ``v``, as an exact fraction."""
    return Fraction(repr(float(v)))


def moment_condition_value(a: float, p: float, K: int, m: int) -> float:
    """|a|^m (1 - p + p / (2^R - 1)^m) with R = log2(K+1), i.e. 2^R - 1 = K.

    Evaluated in exact rationals on the decimal reading of the inputs
    (0.9 is 9/10), rounded once.
    """
    a, p = abs(_dec(a)), _dec(p)
    return float(a**m * (1 - p + p / K**m))


def necessary_value(a: float, p: float, K: int, m: int) -> float:
    """|a|^m (1 - p + p / 2^(mR)): the necessary-condition counterpart."""
    a, p = abs(_dec(a)), _dec(p)
    return float(a**m * (1 - p + p / (K + 1) ** m))


@dataclass(frozen=True)
class ConditionReport:
    m: int
    capacity_margin: float
    rbdd2_margin: float
    rbdd3_value: float
    moment_value: float
    necessary_value: float

    @property
    def capacity_ok(self) -> bool:
        return self.capacity_margin > 0

    @property
    def rbdd2_ok(self) -> bool:
        return self.rbdd2_margin > 0

    @property
    def rbdd3_ok(self) -> bool:
        return self.rbdd3_value < 1

    @property
    def moment_ok(self) -> bool:
        return self.moment_value < 1

    @property
    def necessary_ok(self) -> bool:
        return self.necessary_value < 1

    @property
    def all_ok(self) -> bool:
        return all((self.capacity_ok, self.rbdd2_ok, self.rbdd3_ok, self.moment_ok, self.necessary_ok))

    def rows(self) -> list[tuple[str, str, float, bool]]:
        return [
            ("capacity", "log2(K) p - log2|a|", self.capacity_margin, self.capacity_ok),
            ("rbdd2", "alpha - |a| 2^-R'", self.rbdd2_margin, self.rbdd2_ok),
            ("rbdd3", "alpha (|a|+delta)^(1/p-1)", self.rbdd3_value, self.rbdd3_ok),
            (f"moment_{self.m}", "|a|^m (1-p+p/(2^R-1)^m)", self.moment_value, self.moment_ok),
            (f"necessary_{self.m}", "|a|^m (1-p+p/2^(mR))", self.necessary_value, self.necessary_ok),
        ]


def check_conditions(
    a: float, b: float, p: float, cfg: QuantizerConfig | None, m: int, K: int | None = None
) -> ConditionReport:
    """Evaluate all five conditions.

    With ``cfg=None`` (no admissible lattice exists) pass ``K``; the two
    rate-bound entries are then NaN and report as failing.
    """
    # b does not enter any of the inequalities; kept for a uniform call signature
    if cfg is None:
        if K is None:
            raise ValueError("K is required when cfg is None")
        rbdd2, rbdd3 = math.nan, math.nan
    else:
        K = cfg.K
        rbdd2 = cfg.alpha - abs(a) * 2.0 ** (-cfg.R_prime)
        rbdd3 = cfg.alpha * cfg.zoom_out_gain ** (1 / p - 1)
    return ConditionReport(
        m=m,
        capacity_margin=math.log2(K) * p - math.log2(abs(a)),
        rbdd2_margin=rbdd2,
        rbdd3_value=rbdd3,
        moment_value=moment_condition_value(a, p, K, m),
        necessary_value=necessary_value(a, p, K, m),
    )


def min_bins_for_second_moment(a: float, p: float) -> int:
    """Smallest bin count K+1 = ceil(sqrt(p / (1/a^2 - (1-p)))) + 1.

    Evaluated in exact rational arithmetic on the decimal inputs.
    """
    a, p = _dec(a), _dec(p)
    gap = 1 / a**2 - (1 - p)
    if gap <= 0:
        raise SynthesisError(
            f"1/a^2 - (1-p) = {float(gap):.6g} <= 0: no finite rate gives a second moment",
            "second-moment feasibility",
        )
    r = p / gap
    c = math.isqrt(r.numerator // r.denominator)
    while c * c * r.denominator < r.numerator:
        c += 1
    return c + 1


def tail_lower_bound(k: int, p: float) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return (1 - p) ** (k - 1)


@dataclass(frozen=True)
class TailBoundParams:
    sigma_prime: float
    xi: float
    N_const: float

    @classmethod
    def from_params(cls, params: LoopParams) -> "TailBoundParams":
        a = abs(params.plant.a)
        if a <= 1:
            raise ConfigError("tail bounds need |a| > 1", "plant.a")
        cfg = params.quantizer
        return cls(
            sigma_prime=math.sqrt(params.plant.noise_std**2 / (1 - a**-2)),
            xi=cfg.zoom_out_gain / a,
            N_const=2.0 ** (cfg.R_prime - 1) / (a / cfg.alpha),
        )

    def C(self, delta0: float) -> float:
        return 2 * self.sigma_prime / (math.sqrt(2 * math.pi) * (2 * self.N_const - 1) * delta0 / 2)

    def Xi(self, k: int, delta0: float) -> float:
        return ((self.xi ** (k - 2) * self.N_const - 0.5) * delta0) ** 2 / (2 * self.sigma_prime**2)


def tail_upper_bounds(k_max: int, delta0: float, tb: TailBoundParams, p: float) -> np.ndarray:
    """theta[k-1] for k = 1..k_max of theta_k = theta_{k-1} (1-p) + C exp(-Xi_k), theta_1 = 1."""
    out = np.empty(k_max)
    out[0] = 1.0
    c = tb.C(delta0)
    for k in range(2, k_max + 1):
        out[k - 1] = out[k - 2] * (1 - p) + c * math.exp(-tb.Xi(k, delta0))
    return out


def tail_upper_bound(k: int, delta0: float, tb: TailBoundParams, p: float) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(tail_upper_bounds(k, delta0, tb, p)[-1])


def wilson_interval(count, n, confidence: float = CONFIDENCE):
    return proportion_confint(count, n, alpha=1 - confidence, method="wilson")


def _kernel_args(params: LoopParams):
    cfg, pl = params.quantizer, params.plant
    return (pl.a, pl.b, cfg.K, cfg.s_float, cfg.A_exp, cfg.B_exp, cfg.L_idx)


class _Draws:
    """Growing buffers of plant noise and channel outcomes read front to back."""

    def __init__(self, params: LoopParams, seed: int, stream_id: int):
        self._noise = RandomStream(seed, stream_id, NOISE_LANE)
        self._chan = RandomStream(seed, stream_id, CHANNEL_LANE)
        self._std, self._p = params.plant.noise_std, params.channel.p
        self.noise = np.empty(0)
        self.ok = np.empty(0, dtype=np.bool_)
        self.pos = 0

    def grow(self):
        self.noise = np.concatenate([self.noise[self.pos:], self._std * self._noise.normal(CHUNK)])
        self.ok = np.concatenate([self.ok[self.pos:], self._chan.uniform(CHUNK) < self._p])
        self.pos = 0


def sample_inter_stop(
    params: LoopParams, idx0: int, n_samples: int, seed: int, stream_id: int = 0,
    max_steps: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Independent first inter-stop times from perfectly-zoomed starts at bin index ``idx0``.

    Each sample starts at ``x0 ~ U[0, delta0)`` (the bin just right of zero)
    with a successful transmission at time 0. Returns ``(T, idx_T)``;
    ``T == -1`` marks samples censored at ``max_steps``.
    """
    cfg = params.quantizer
    if idx0 < cfg.L_idx:
        raise ConfigError(f"delta0 index {idx0} is below L_idx={cfg.L_idx}", "run.delta0_idx")
    x0 = cfg.bin_size(idx0) * RandomStream(seed, stream_id, INIT_LANE).uniform(n_samples)
    draws = _Draws(params, seed, stream_id)
    args = _kernel_args(params)
    T = np.empty(n_samples, dtype=np.int64)
    idx_T = np.empty(n_samples, dtype=np.int64)
    i = 0
    while i < n_samples:
        i, draws.pos = _kernels.first_stop_batch(
            x0, i, idx0, draws.noise, draws.ok, draws.pos, max_steps, T, idx_T, *args
        )
        if i < n_samples:
            draws.grow()
    return T, idx_T


TAIL_COLUMNS = ("k", "lower", "empirical", "ci_lo", "ci_hi", "upper")


@dataclass
class TailTable:
    delta0_idx: int
    delta0: float
    n_samples: int
    rows: list[tuple] = field(default_factory=list)

    def sandwich_ok(self) -> list[bool]:
        return [lo <= ci_hi and ci_lo <= up for _, lo, _, ci_lo, ci_hi, up in self.rows]


def estimate_stopping_tail(
    params: LoopParams, delta0_idx: int, n_samples: int, k_max: int, seed: int
) -> TailTable:
    T, _ = sample_inter_stop(params, delta0_idx, n_samples, seed, max_steps=k_max)
    T = np.where(T < 0, k_max, T)
    p = params.channel.p
    delta0 = params.quantizer.bin_size(delta0_idx)
    upper = tail_upper_bounds(k_max, delta0, TailBoundParams.from_params(params), p)
    table = TailTable(delta0_idx, delta0, n_samples)
    for k in range(1, k_max + 1):
        count = int(np.count_nonzero(T >= k))
        lo, hi = wilson_interval(count, n_samples)
        table.rows.append((k, tail_lower_bound(k, p), count / n_samples, lo, hi, float(upper[k - 1])))
    return table


def analytic_drift_limit(params: LoopParams) -> float:
    """Large-delta limit of the log(delta^2) drift between consecutive stops."""
    cfg, p = params.quantizer, params.channel.p
    return 2 * math.log(cfg.alpha) + 2 * (1 / p - 1) * math.log(cfg.zoom_out_gain)


DRIFT_COLUMNS = ("delta0_idx", "delta0", "drift", "ci_lo", "ci_hi", "n")


def estimate_drift_at_stops(
    params: LoopParams, n_samples: int, delta0_grid, seed: int, max_steps: int = 100_000
) -> list[tuple]:
    """Monte-Carlo drift of V0 = log(delta^2) + B0 from one stop to the next.

    Grid point ``idx0`` draws from stream id ``idx0``. The drift per sample is
    exact on the lattice, ``2 ln 2 * s * (idx_T - idx0)``; CIs are normal at
    99%. B0 cancels in the difference.
    """
    z = norm.ppf(0.5 + CONFIDENCE / 2)
    scale = 2 * math.log(2) * params.quantizer.s_float
    rows = []
    for idx0 in delta0_grid:
        T, idx_T = sample_inter_stop(params, int(idx0), n_samples, seed, int(idx0), max_steps)
        if np.any(T < 0):
            raise RuntimeError(f"{np.count_nonzero(T < 0)} samples never stopped within {max_steps} steps")
        dv = scale * (idx_T - idx0)
        mean = math.fsum(dv) / n_samples
        half = z * dv.std(ddof=1) / math.sqrt(n_samples)
        rows.append((int(idx0), params.quantizer.bin_size(int(idx0)), mean, mean - half, mean + half, n_samples))
    return rows


@dataclass
class MomentRun:
    stream_id: int
    steps: int
    average: float  # (1/N) sum_{t<N} |x_t|^m
    half_average: float  # same over the first N/2 steps
    escaped_at: int = -1
    trace: np.ndarray | None = None

    @property
    def diagnostic(self) -> float:
        """Relative change of the running average between N/2 and N."""
        return abs(self.average - self.half_average) / abs(self.average)

    def converged(self, tol: float = 0.05) -> bool:
        return self.escaped_at < 0 and self.diagnostic < tol


@dataclass
class MomentEstimate:
    m: int
    runs: list[MomentRun]

    @property
    def aggregate(self) -> float:
        return math.fsum(r.average for r in self.runs) / len(self.runs)


def run_moment_trajectory(
    params: LoopParams, m: int, T: int, seed: int, stream_id: int, n_trace: int = 100
) -> MomentRun:
    state = initial_state(params)
    noise = RandomStream(seed, stream_id, NOISE_LANE)
    chan = RandomStream(seed, stream_id, CHANNEL_LANE)
    rec_every = T // n_trace if n_trace and T >= n_trace else 0
    trace = np.full(n_trace if rec_every else 0, np.nan)
    x, idx, t, acc, comp = state.x, state.idx, 0, 0.0, 0.0
    mark, at_mark, escaped = T // 2, math.nan, -1
    args = _kernel_args(params)
    while t < T:
        n = min(CHUNK, T - t)
        d = params.plant.noise_std * noise.normal(n)
        ok = chan.uniform(n) < params.channel.p
        x, idx, t, acc, comp, am, escaped = _kernels.moment_chunk(
            x, idx, t, acc, comp, d, ok, float(m), *args, mark, rec_every, trace
        )
        if not math.isnan(am):
            at_mark = am
        if escaped >= 0:
            break
    return MomentRun(stream_id, t, (acc + comp) / t, at_mark / mark, escaped, trace)


def _moment_job(job):
    return run_moment_trajectory(*job)


def estimate_moment(
    params: LoopParams, m: int, T: int, n_traj: int, seed: int, jobs: int = 1
) -> MomentEstimate:
    """Time averages of |x_t|^m over ``n_traj`` trajectories (stream ids 0..n_traj-1)."""
    if T < 2:
        raise ConfigError("T must be >= 2", "run.T")
    work = [(params, m, T, seed, i) for i in range(n_traj)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            runs = list(ex.map(_moment_job, work))
    else:
        runs = [_moment_job(w) for w in work]
    return MomentEstimate(m, sorted(runs, key=lambda r: r.stream_id))
