"""Experiment configuration: YAML file with plant/quantizer/channel/run sections."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import yaml

from .errors import ConfigError, SynthesisError
from .loop import LoopParams
from .plant import PlantParams
from .quantizer import QuantizerConfig, snap_gains_to_lattice

SEED_ENV = "DRIFTSTAB_SEED"

_SECTIONS = {
    "plant": {"a", "b", "noise_std", "x0"},
    "quantizer": {"K", "B_exp", "L_idx", "s", "A_exp"},
    "channel": {"p"},
    "run": {"T", "n_traj", "seed", "m", "delta0_idx", "k_max", "n_samples", "delta0_grid"},
}


@dataclass
class RunConfig:
    T: int = 10_000
    n_traj: int = 8
    seed: int = 0
    m: int = 2
    delta0_idx: int | None = None
    k_max: int = 10
    n_samples: int = 100_000
    delta0_grid: list[int] | None = None


@dataclass
class ExperimentConfig:
    plant: PlantParams
    K: int
    p: float
    run: RunConfig = field(default_factory=RunConfig)
    quantizer: QuantizerConfig | None = None
    synthesis_error: SynthesisError | None = None

    def loop_params(self) -> LoopParams:
        if self.quantizer is None:
            raise ConfigError(f"no admissible quantizer: {self.synthesis_error}", "quantizer")
        return LoopParams.build(self.plant, self.quantizer, self.p)

    def resolved(self) -> dict:
        q = self.quantizer
        quant = {"K": self.K}
        if q is not None:
            quant.update(s=str(q.s), A_exp=q.A_exp, B_exp=q.B_exp, L_idx=q.L_idx)
        return {
            "plant": asdict(self.plant),
            "quantizer": quant,
            "channel": {"p": self.p},
            "run": asdict(self.run),
        }

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _number(section: dict, key: str, path: str, kind=float, default=None):
    if key not in section:
        if default is None:
            raise ConfigError("missing required field", f"{path}.{key}")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise ConfigError(f"expected a number, got {v!r}", f"{path}.{key}")
    try:
        if kind is int:
            if isinstance(v, float) and not v.is_integer():
                raise ValueError
            return int(v)
        if kind is Fraction:
            return Fraction(v)
        return float(v)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot read {v!r} as {kind.__name__}", f"{path}.{key}") from None


def parse_config(data, seed_override: str | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with plant/quantizer/channel/run sections")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}", sorted(unknown)[0])
    for name, keys in _SECTIONS.items():
        sec = data.get(name, {}) or {}
        if not isinstance(sec, dict):
            raise ConfigError("section must be a mapping", name)
        extra = set(sec) - keys
        if extra:
            raise ConfigError("unknown key", f"{name}.{sorted(extra)[0]}")
    pl, qu = data.get("plant") or {}, data.get("quantizer") or {}
    ch, rn = data.get("channel") or {}, data.get("run") or {}

    plant = PlantParams(
        a=_number(pl, "a", "plant"),
        b=_number(pl, "b", "plant", default=1.0),
        noise_std=_number(pl, "noise_std", "plant", default=1.0),
        x0=_number(pl, "x0", "plant", default=0.0),
    )
    p = _number(ch, "p", "channel")
    if not 0 < p <= 1:
        raise ConfigError(f"p must lie in (0, 1], got {p}", "channel.p")
    grid = rn.get("delta0_grid")
    if grid is not None:
        if not isinstance(grid, list) or not all(isinstance(g, int) for g in grid):
            raise ConfigError("expected a list of integer bin indices", "run.delta0_grid")
    run = RunConfig(
        T=_number(rn, "T", "run", int, 10_000),
        n_traj=_number(rn, "n_traj", "run", int, 8),
        seed=_number(rn, "seed", "run", int, 0),
        m=_number(rn, "m", "run", int, 2),
        delta0_idx=_number(rn, "delta0_idx", "run", int) if "delta0_idx" in rn else None,
        k_max=_number(rn, "k_max", "run", int, 10),
        n_samples=_number(rn, "n_samples", "run", int, 100_000),
        delta0_grid=grid,
    )
    if seed_override is not None:
        try:
            run.seed = int(seed_override)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={seed_override!r} is not an integer", "run.seed") from None
    for key in ("T", "n_traj", "k_max", "n_samples", "m"):
        if getattr(run, key) < 1:
            raise ConfigError("must be >= 1", f"run.{key}")
    if run.seed < 0:
        raise ConfigError("must be >= 0", "run.seed")

    K = _number(qu, "K", "quantizer", int)
    B = _number(qu, "B_exp", "quantizer", int, 2)
    L_idx = _number(qu, "L_idx", "quantizer", int) if "L_idx" in qu else None
    cfg = synth_err = None
    if "s" in qu or "A_exp" in qu:
        s = _number(qu, "s", "quantizer", Fraction)
        A = _number(qu, "A_exp", "quantizer", int)
        cfg = QuantizerConfig(K, s, A, B, A if L_idx is None else L_idx)
    else:
        try:
            cfg = snap_gains_to_lattice(plant.a, p, K, B, m=run.m, L_idx=L_idx)
        except SynthesisError as e:
            synth_err = e
    return ExperimentConfig(plant, K, p, run, cfg, synth_err)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed YAML: {e}") from None
    return parse_config(data, os.environ.get(SEED_ENV))


def reference_scenario(K: int = 4, m: int | None = 2, L_idx: int | None = None) -> LoopParams:
    """a = 2.5, b = 1, N(0,1) noise, erasure probability 0.1, floor L' = 1 by default."""
    plant = PlantParams(a=2.5, b=1.0, noise_std=1.0)
    cfg = snap_gains_to_lattice(plant.a, 0.9, K, 2, m=m, L_idx=L_idx)
    return LoopParams.build(plant, cfg, 0.9)


__all__ = [
    "ExperimentConfig", "RunConfig", "SEED_ENV",
    "load_config", "reference_scenario", "parse_config",
]
