"""Scalar plant x' = a x + b u + d with Gaussian process noise."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Substream lanes of one trajectory. Distinct lanes never share draws.
NOISE_LANE = 0
CHANNEL_LANE = 1
INIT_LANE = 2


@dataclass(frozen=True)
class PlantParams:
    a: float
    b: float = 1.0
    noise_std: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.a) or abs(self.a) < 1:
            raise ConfigError(f"|a| must be >= 1, got {self.a}", "plant.a")
        if self.b == 0 or not np.isfinite(self.b):
            raise ConfigError("b must be finite and nonzero", "plant.b")
        if not self.noise_std > 0 or not np.isfinite(self.noise_std):
            raise ConfigError(f"noise_std must be > 0, got {self.noise_std}", "plant.noise_std")
        if not np.isfinite(self.x0):
            raise ConfigError("x0 must be finite", "plant.x0")


@dataclass
class RandomStream:
    """Reproducible substream keyed by ``(seed, stream_id, lane)``.

    Built on PCG64 with a ``SeedSequence`` spawn key, so distinct stream ids
    (and lanes) give statistically independent sequences. Normals use numpy's
    ziggurat sampler; bulk draws equal the concatenation of scalar draws.
    """

    seed: int
    stream_id: int = 0
    lane: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0 or self.lane < 0:
            raise ConfigError("seed, stream_id and lane must be non-negative")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, self.lane))
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        return self._gen.random(size)


def step_plant(params: PlantParams, x: float, u: float, d: float) -> float:
    return params.a * x + params.b * u + d


def sample_noise(params: PlantParams, stream: RandomStream) -> float:
    return params.noise_std * float(stream.normal())
