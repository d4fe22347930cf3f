"""
Physical constants and isotope data.

Default units used throughout the package:

- Distance: nanometer, nm
- Time: microsecond, us
- Magnetic field: millitesla, mT
- Frequency (all Hamiltonian parameters): MHz
- Gyromagnetic ratio: MHz / mT

Gyromagnetic ratios carry their physical sign. The electron ratio is negative,
so the Zeeman term ``-gamma_e * Bz * Sz`` lowers the ``m_s = -1`` level as the
field grows.
"""
from dataclasses import dataclass

import numpy as np
from scipy import constants as _sc

ELECTRON_GYRO = -28.02495
"""Free-electron gyromagnetic ratio in MHz/mT (28024.95 MHz/T, g ~ 2.0023)."""

DIPOLAR_PREFACTOR = _sc.mu_0 * _sc.h / (4 * np.pi) * 1e39
r"""Point-dipole prefactor :math:`\mu_0 h / 4\pi` in MHz nm^3 / (MHz/mT)^2.

For two spins with gyromagnetic ratios ``g1, g2`` (MHz/mT) separated by ``r`` (nm)
the coupling tensor is ``-DIPOLAR_PREFACTOR * g1 * g2 * (3 r r^T - |r|^2) / |r|^5``.
Numerically ~0.0662607 MHz nm^3 (MHz/mT)^-2.
"""


@dataclass(frozen=True)
class Isotope:
    name: str
    spin: float
    gyro: float  # MHz / mT
    abundance: float


ISOTOPES = {
    '29Si': Isotope('29Si', 0.5, -8.4653e-3, 0.04685),
    '13C': Isotope('13C', 0.5, 10.7084e-3, 0.0107),
    '1H': Isotope('1H', 0.5, 42.577478e-3, 0.99985),
    '14N': Isotope('14N', 1.0, 3.077e-3, 0.99636),
    '15N': Isotope('15N', 0.5, -4.316e-3, 0.00364),
}
"""Common nuclear isotopes. Values can be overridden per bath spin."""


def isotope(name):
    try:
        return ISOTOPES[name]
    except KeyError:
        raise KeyError(f"unknown isotope {name!r}; known: {sorted(ISOTOPES)}") from None
