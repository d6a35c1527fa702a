import numpy as np
import pytest

from loopchannel.channel import ChannelParams, PhysicalChannel, taylor_aris

L_REF = 1e-3
R0_REF = 1e-4
V_REF = 5e-5
D_LOW, D_HIGH = 1.25e-9, 5e-9
X1, X2 = 0.39e-3, 0.84e-3


def ref_channel(d_molecular, d_rx):
    d_eff = taylor_aris(PhysicalChannel(d_molecular, R0_REF, V_REF))
    return ChannelParams(d_eff, V_REF, L_REF, d_rx)


@pytest.fixture
def ref_low():
    return ref_channel(D_LOW, X1)


@pytest.fixture
def ref_high_x2():
    return ref_channel(D_HIGH, X2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
