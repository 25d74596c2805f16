"""Physical constants (SI units, CODATA 2022)."""

HBAR = 1.054571817e-34      # J s
ELEMENTARY_CHARGE = 1.602176634e-19  # C
ATOMIC_MASS = 1.66053906892e-27      # kg

# calcium-40, the default ion species
CA40_MASS = 39.9625908 * ATOMIC_MASS  # kg

# qubit laser wavelength used to derive the default Lamb-Dicke parameter
QUBIT_WAVELENGTH = 729e-9   # m
