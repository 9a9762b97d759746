import numpy as np
import pytest

from lutread.dataset import synth_dataset
from lutread.design import DesignPoint, Grids
from lutread.integrator import feature_word_width
from lutread.lutnet import build_topology, extract_tables, train


def make_dp(start_sample=0, num_windows=2, shift_m=2, shift_n=3,
            ell0=20, num_hidden=2, ell1=8, ell2=5, ell3=5,
            beta_in=1, beta_hidden=2, beta_out=2,
            gamma_in=6, gamma_hidden=6, gamma_out=6) -> DesignPoint:
    return DesignPoint(start_sample, num_windows, shift_m, shift_n,
                       ell0, num_hidden, ell1, ell2, ell3,
                       beta_in, beta_hidden, beta_out,
                       gamma_in, gamma_hidden, gamma_out)


# compact grids so searches in tests stay fast and always feasible at T=64
SMALL_GRIDS = Grids(
    start_sample=(0, 8, 16),
    num_windows=(1, 2),
    shift_m=(2, 3, 4),
    shift_n=(2, 3, 4),
    ell0=(10, 15, 20),
    num_hidden=(2, 3),
    ell_hidden=(5, 10),
    beta=(1, 2),
    gamma_in=(6, 7),
    gamma_narrow=(6, 7, 8, 9, 10),
    gamma_wide=(6, 7, 8),
)


@pytest.fixture(scope="session")
def small_ds():
    """Separable 64-sample traces: threshold on the mean is near-perfect."""
    return synth_dataset(n=2000, T=64, separation=200, noise_sd=100, seed=3)


@pytest.fixture(scope="session")
def flat_ds():
    """Zero-separation traces: no classifier can beat chance."""
    return synth_dataset(n=1000, T=64, separation=0, noise_sd=100, seed=5)


@pytest.fixture(scope="session")
def trained_small(small_ds):
    """(dp, cfg, topo, net, ttn) for a small trained design, X <= 12."""
    dp = make_dp()
    cfg = dp.integrator
    T = small_ds.trace_len
    ww = feature_word_width(cfg, T)
    topo = build_topology(dp, feature_bits=2 * dp.num_windows * ww,
                          seed=1, word_width=ww)
    net = train(topo, small_ds, cfg, epochs=3, batch_size=128, lr=0.1, seed=1)
    return dp, cfg, topo, net, extract_tables(net)


def random_traces(rng: np.random.Generator, n: int, T: int, lo=-512, hi=512):
    """Random bounded traces as (I, Q) int16 arrays."""
    i = rng.integers(lo, hi, size=(n, T)).astype(np.int16)
    q = rng.integers(lo, hi, size=(n, T)).astype(np.int16)
    return i, q
