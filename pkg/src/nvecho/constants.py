"""Physical constants (CODATA 2018, SI units) and unit conversions.

Library-wide unit system: time in microseconds, rates in 1/us, noise
amplitude in rad/us, spin densities in cm^-3. The sample table stores
concentrations in units of 1e17 cm^-3.
"""

import math

MU_0 = 4.0e-7 * math.pi           # T m / A
BOHR_MAGNETON = 9.2740100783e-24  # J / T
HBAR = 1.054571817e-34            # J s
PLANCK = 6.62607015e-34           # J s

# electron gyromagnetic ratio, 28 MHz/mT expressed in Hz/T (cyclic)
GAMMA_E_HZ_PER_T = 28.0e9
GAMMA_E = 2.0 * math.pi * GAMMA_E_HZ_PER_T  # rad / (s T)

G_NV = 2.0028

PER_CM3_TO_PER_M3 = 1.0e6
PER_S_TO_PER_US = 1.0e-6
TABLE_CONC_UNIT = 1.0e17  # cm^-3, column unit of the sample table
