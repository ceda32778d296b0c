"""Closed-loop Markov chain (x_t, delta_t): one-step map, simulation, stopping times.

Each step runs observe -> quantize -> transmit -> decode -> control ->
plant update -> bin update. The encoder and the controller both update the
bin index; the controller only sees the channel output, and the two copies
are compared at every step.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .channel import ChannelParams, channel_output, decode, decoder_update
from .errors import ConfigError, NumericEscape
from .plant import CHANNEL_LANE, NOISE_LANE, PlantParams, RandomStream, step_plant
from .quantizer import QuantizerConfig, overflow_ratio, quantize, update_bin

CSV_COLUMNS = ("t", "x", "delta", "h", "erasure_ok", "symbol", "x_hat", "u", "is_stop")


@dataclass(frozen=True)
class LoopParams:
    plant: PlantParams
    quantizer: QuantizerConfig
    channel: ChannelParams

    def __post_init__(self):
        if self.channel.alphabet_size != self.quantizer.K + 1:
            raise ConfigError(
                f"alphabet size {self.channel.alphabet_size} != K+1 = {self.quantizer.K + 1}",
                "channel.alphabet_size",
            )
        self.quantizer.validate(self.plant.a, self.channel.p)

    @classmethod
    def build(cls, plant: PlantParams, quantizer: QuantizerConfig, p: float) -> "LoopParams":
        return cls(plant, quantizer, ChannelParams(p, quantizer.K + 1))


@dataclass(frozen=True)
class LoopState:
    x: float
    idx: int


@dataclass(frozen=True)
class StepRecord:
    t: int
    x: float
    delta: float
    h: float
    erasure_ok: bool
    symbol: int
    x_hat: float
    u: float
    is_stop: bool


@dataclass
class Trajectory:
    params: LoopParams
    records: list[StepRecord] = field(default_factory=list)
    stop_times: list[int] = field(default_factory=list)
    final_state: LoopState | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def loop_step(
    state: LoopState, noise: float, erasure_ok: bool, params: LoopParams, t: int = 0
) -> tuple[LoopState, StepRecord]:
    cfg, plant = params.quantizer, params.plant
    x, idx = state.x, state.idx
    h = overflow_ratio(cfg, idx, x)
    q = quantize(cfg, idx, x)
    out = channel_output(q.symbol, erasure_ok)
    x_hat, _ = decode(out, idx, cfg)
    u = -(plant.a / plant.b) * x_hat
    x_next = step_plant(plant, x, u, noise)
    if not math.isfinite(x_next):
        raise NumericEscape(f"plant state left the floats (x={x}, delta={cfg.bin_size(idx)})", t)
    # same update written as the error recursion a (x - Upsilon Q(x)) + d
    alt = plant.a * (x - (q.value if erasure_ok else 0.0)) + noise
    scale = abs(plant.a * x) + abs(plant.b * u) + abs(noise)
    if abs(x_next - alt) > 8 * np.finfo(float).eps * scale:
        raise AssertionError(f"plant update forms disagree at step {t}: {x_next} vs {alt}")
    idx_next = update_bin(cfg, idx, h, erasure_ok)
    if idx_next != decoder_update(cfg, idx, out):
        raise AssertionError(f"encoder and decoder bin indices diverged at step {t}")
    rec = StepRecord(
        t, x, cfg.bin_size(idx), h, erasure_ok, q.symbol, x_hat, u, abs(h) <= 1.0 and erasure_ok
    )
    return LoopState(x_next, idx_next), rec


def initial_state(params: LoopParams, x0: float | None = None, idx0: int | None = None) -> LoopState:
    cfg = params.quantizer
    idx0 = cfg.L_idx if idx0 is None else idx0
    if idx0 < cfg.L_idx:
        raise ConfigError(f"initial bin index {idx0} is below L_idx={cfg.L_idx}", "run.delta0_idx")
    return LoopState(params.plant.x0 if x0 is None else float(x0), idx0)


def simulate(
    params: LoopParams,
    T: int,
    seed: int,
    stream_id: int = 0,
    x0: float | None = None,
    idx0: int | None = None,
    zoomed_start: bool = False,
) -> Trajectory:
    """Run ``T`` steps of the closed loop.

    Plant noise and channel draws come from separate lanes of
    ``(seed, stream_id)``. With ``zoomed_start`` the initial state must lie in
    the granular region and the first transmission is taken as successful, so
    that ``stop_times[0] == 0``; otherwise the first stop is whatever comes.
    """
    if T < 1:
        raise ConfigError("T must be >= 1", "run.T")
    state = initial_state(params, x0, idx0)
    cfg = params.quantizer
    if zoomed_start and abs(overflow_ratio(cfg, state.idx, state.x)) > 1:
        raise ConfigError("initial state is not perfectly zoomed", "plant.x0")
    noise = params.plant.noise_std * RandomStream(seed, stream_id, NOISE_LANE).normal(T)
    ok = RandomStream(seed, stream_id, CHANNEL_LANE).uniform(T) < params.channel.p
    if zoomed_start:
        ok[0] = True
    traj = Trajectory(params)
    for t in range(T):
        state, rec = loop_step(state, float(noise[t]), bool(ok[t]), params, t)
        traj.records.append(rec)
        if rec.is_stop:
            traj.stop_times.append(t)
    traj.final_state = state
    return traj


def detect_stopping_times(traj: Trajectory) -> list[int]:
    return [r.t for r in traj.records if r.is_stop]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_trajectory_csv(records: Iterable[StepRecord], fh: IO[str], comment: str | None = None):
    if comment:
        fh.write(f"# {comment}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    w.writerows([_fmt(getattr(r, c)) for c in CSV_COLUMNS] for r in records)


def read_trajectory_csv(fh: IO[str]) -> list[StepRecord]:
    rows = csv.reader(line for line in fh if not line.startswith("#"))
    header = next(rows)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected trajectory header {header}")
    out = []
    for r in rows:
        out.append(
            StepRecord(
                int(r[0]), float(r[1]), float(r[2]), float(r[3]), r[4] == "1",
                int(r[5]), float(r[6]), float(r[7]), r[8] == "1",
            )
        )
    return out
