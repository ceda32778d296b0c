"""Memoryless erasure channel over the alphabet {1, ..., K+1}.

The encoder is the identity on symbol indices, so a received symbol is the
quantizer symbol itself. Symbol K+1 is the overflow symbol.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError, InputError
from .plant import RandomStream
from .quantizer import QuantizerConfig


@dataclass(frozen=True)
class ChannelParams:
    p: float
    alphabet_size: int

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ConfigError(f"p must lie in (0, 1], got {self.p}", "channel.p")
        if self.alphabet_size < 3:
            raise ConfigError("alphabet must hold K+1 >= 3 symbols", "channel.alphabet_size")


@dataclass(frozen=True)
class ChannelOutput:
    symbol: int | None  # None is the erasure symbol

    @property
    def erased(self) -> bool:
        return self.symbol is None


ERASED = ChannelOutput(None)


def channel_output(q: int, erasure_ok: bool) -> ChannelOutput:
    return ChannelOutput(q) if erasure_ok else ERASED


def transmit(params: ChannelParams, q: int, stream: RandomStream) -> ChannelOutput:
    if not 1 <= q <= params.alphabet_size:
        raise InputError(f"symbol {q} outside 1..{params.alphabet_size}")
    return channel_output(q, float(stream.uniform()) < params.p)


def decode(out: ChannelOutput, idx: int, cfg: QuantizerConfig) -> tuple[float, bool]:
    if out.erased:
        return 0.0, False
    return cfg.level(out.symbol, idx), True


def decoder_update(cfg: QuantizerConfig, idx: int, out: ChannelOutput) -> int:
    """Bin update computed from the channel output alone (controller side)."""
    if out.erased or out.symbol == cfg.K + 1:
        return idx + cfg.B_exp
    if idx >= cfg.L_idx:
        return idx - cfg.A_exp
    return idx
