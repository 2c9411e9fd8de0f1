"""Shared fixtures: the reference four-mode plaquette device."""

import numpy as np
import pytest

from synthlat import FitParams

# Full-lattice parameters of the reference device (frequencies GHz,
# linewidths MHz, efficiencies and couplings dimensionless).
DEVICE_NU = (4.1589, 6.0992, 7.4726, 9.4806)
DEVICE_KAPPA = (1.0147, 1.6533, 2.9161, 4.5858)
DEVICE_ETA = (0.68, 0.74, 0.88, 0.76)
DEVICE_BETA = (0.8452, 0.8601, 0.7964, 1.0252)  # links ac, ad, bc, bd

# Coupling rates |g| (MHz) the beta values derive from.
DEVICE_G = (2.9077, 3.7107, 3.4973, 5.6458)

# Transmission scale factors, row-major off-diagonal order
# (ab, ac, ad, ba, bc, bd, ca, cb, cd, da, db, dc).
DEVICE_C = (19.1, 20.1, 20.1, 5.8, 9.5, 10.3, 8.4, 12.8, 14.3, 4.3, 7.2, 7.2)

# Independently measured single-link values used as fit starting points.
PAIRWISE_NU = (4.1578, 6.0979, 7.4719, 9.4802)
PAIRWISE_KAPPA = (1.0745, 1.6298, 2.8179, 4.1049)
PAIRWISE_ETA = (0.46, 0.62, 0.86, 0.74)
PAIRWISE_BETA = (0.8561, 0.7474, 0.8589, 0.9000)
PAIRWISE_PUMP_NU = (3.3136, 5.3223, 1.3733, 3.382)

FOUR_PHASES = (0.0, np.pi / 4, np.pi / 2, np.pi)


@pytest.fixture(scope="session")
def device_params() -> FitParams:
    return FitParams.canonical(
        DEVICE_NU, DEVICE_KAPPA, DEVICE_ETA, DEVICE_BETA,
        phi_off=0.31, c_scales=DEVICE_C,
    )


@pytest.fixture(scope="session")
def device_lattice(device_params):
    return device_params.to_lattice()


@pytest.fixture(scope="session")
def pairwise_init() -> FitParams:
    return FitParams.canonical(
        PAIRWISE_NU, PAIRWISE_KAPPA, PAIRWISE_ETA, PAIRWISE_BETA,
        phi_off=0.0, c_scales=np.ones(12),
    )
