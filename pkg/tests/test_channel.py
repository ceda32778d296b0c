import numpy as np
import pytest
from scipy.stats import chi2_contingency

from driftstab.channel import ERASED, ChannelOutput, ChannelParams, decode, transmit
from driftstab.errors import ConfigError
from driftstab.plant import RandomStream
from driftstab.quantizer import quantize


def test_perfect_channel():
    s = RandomStream(0)
    ch = ChannelParams(1.0, 5)
    assert all(transmit(ch, 3, s) == ChannelOutput(3) for _ in range(1000))


def test_erasure_fraction():
    s = RandomStream(1)
    ch = ChannelParams(0.9, 5)
    erased = sum(transmit(ch, 1, s).erased for _ in range(10**6))
    assert abs(erased / 1e6 - 0.1) < 0.002


def test_reproducible_pattern():
    ch = ChannelParams(0.5, 5)
    s1, s2 = RandomStream(3, 4), RandomStream(3, 4)
    assert [transmit(ch, 2, s1) for _ in range(500)] == [transmit(ch, 2, s2) for _ in range(500)]


def test_memoryless_lag1():
    ok = RandomStream(7, 0, 1).uniform(10**5) < 0.9
    table = np.zeros((2, 2))
    np.add.at(table, (ok[:-1].astype(int), ok[1:].astype(int)), 1)
    assert chi2_contingency(table)[1] > 0.01


def test_decode(unit_cfg):
    assert decode(ERASED, 0, unit_cfg) == (0.0, False)
    assert decode(ChannelOutput(3), 0, unit_cfg) == (0.5, True)
    assert decode(ChannelOutput(5), 0, unit_cfg) == (0.0, True)


def test_round_trip(unit_cfg):
    for x in np.linspace(-2, 2, 401):
        q = quantize(unit_cfg, 0, float(x))
        assert decode(ChannelOutput(q.symbol), 0, unit_cfg)[0] == q.value


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
def test_bad_p(p):
    with pytest.raises(ConfigError):
        ChannelParams(p, 5)
