"""Analytic 1-D surface-trap model and least-norm trapping solutions.

Each control electrode is modelled as an infinite strip in the trap plane
(gapless-plane approximation).  The potential a strip of width L produces at
height h above the plane, per volt applied, is the Poisson-kernel integral

    phi(x) = (1/pi) * [arctan((x - xc + L/2)/h) - arctan((x - xc - L/2)/h)]

which is smooth, bounded in [0, 1] and has closed-form derivatives.  All
positions are in meters, frequencies in Hz, voltages in volts.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .constants import CA40_MASS, ELEMENTARY_CHARGE


class NoWellFound(Exception):
    """No potential minimum inside the search bracket."""


class SingularConstraints(Exception):
    """Well-position/curvature constraint matrix is rank deficient."""


@dataclass(frozen=True)
class ElectrodeGeometry:
    """Linear array of strip electrodes below the ion."""

    electrode_count: int = 12
    pitch: float = 70e-6        # m
    ion_height: float = 70e-6   # m
    center: float = 105e-6      # m, array midpoint on the transport axis

    def __post_init__(self):
        if self.electrode_count < 3:
            raise ValueError("need at least 3 electrodes for two constraints")
        if self.pitch <= 0 or self.ion_height <= 0:
            raise ValueError("pitch and ion_height must be positive")

    @property
    def electrode_centers(self) -> np.ndarray:
        k = np.arange(self.electrode_count)
        return self.center + (k - (self.electrode_count - 1) / 2) * self.pitch

    @property
    def span(self) -> tuple[float, float]:
        """Outer edges of the electrode array."""
        c = self.electrode_centers
        return c[0] - self.pitch / 2, c[-1] + self.pitch / 2


@dataclass(frozen=True)
class TrapModel:
    geometry: ElectrodeGeometry = field(default_factory=ElectrodeGeometry)
    ion_mass: float = CA40_MASS          # kg
    ion_charge: float = ELEMENTARY_CHARGE  # C

    def __post_init__(self):
        if self.ion_mass <= 0 or self.ion_charge <= 0:
            raise ValueError("ion mass and charge must be positive")

    # per-electrode basis potential and its spatial derivatives, all
    # vectorized over x; shape (..., electrode_count)
    def basis_potential(self, x) -> np.ndarray:
        g = self.geometry
        u1, u2 = self._edges(x)
        return (np.arctan(u1 / g.ion_height) - np.arctan(u2 / g.ion_height)) / np.pi

    def basis_gradient(self, x) -> np.ndarray:
        h = self.geometry.ion_height
        u1, u2 = self._edges(x)
        return (h / (h * h + u1 * u1) - h / (h * h + u2 * u2)) / np.pi

    def basis_curvature(self, x) -> np.ndarray:
        h = self.geometry.ion_height
        u1, u2 = self._edges(x)
        return (-2 * h * u1 / (h * h + u1 * u1) ** 2
                + 2 * h * u2 / (h * h + u2 * u2) ** 2) / np.pi

    def _edges(self, x):
        g = self.geometry
        dx = np.asarray(x)[..., None] - g.electrode_centers
        return dx + g.pitch / 2, dx - g.pitch / 2

    def potential(self, voltages, x):
        """Total potential (volts) of a voltage vector at position(s) x."""
        return self.basis_potential(x) @ np.asarray(voltages)

    def potential_energy(self, voltages, x):
        return self.ion_charge * self.potential(voltages, x)


def electrode_basis_potential(model: TrapModel, e: int, x) -> np.ndarray:
    """Potential per volt of electrode index e at position(s) x."""
    return model.basis_potential(x)[..., e]


@dataclass(frozen=True)
class TrapSolution:
    """Voltage set producing a harmonic well at one location."""

    well_position: float        # m
    voltages: np.ndarray        # V, one entry per electrode
    axial_frequency: float      # Hz


@dataclass(frozen=True)
class BaseSolutionSet:
    """Equally spaced trapping solutions sharing one axial frequency."""

    solutions: tuple
    model: TrapModel

    def __len__(self):
        return len(self.solutions)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.well_position for s in self.solutions])

    @property
    def voltage_matrix(self) -> np.ndarray:
        """(count, electrode_count) stack of voltage vectors."""
        return np.array([s.voltages for s in self.solutions])

    @property
    def spacing(self) -> float:
        p = self.positions
        return (p[-1] - p[0]) / (len(p) - 1)

    @property
    def base_frequency(self) -> float:
        return self.solutions[0].axial_frequency


# finite-difference step for curvature measurements; small against the
# electrode pitch, large enough to stay clear of float64 cancellation
CURVATURE_FD_STEP = 5e-9  # m


def well_properties(model: TrapModel, voltages, guess: float,
                    bracket: float = 10e-6) -> tuple[float, float]:
    """Locate the potential minimum near `guess` and measure its frequency.

    The stationary point comes from bounded 1-D minimization of the
    potential energy; the frequency from a central finite difference of the
    potential with step CURVATURE_FD_STEP, f = sqrt(q phi'' / m) / 2pi.

    Raises NoWellFound if the bracket contains no interior minimum.
    """
    voltages = np.asarray(voltages, dtype=float)

    def energy(x):
        return model.potential_energy(voltages, x)

    lo, hi = guess - bracket, guess + bracket
    res = minimize_scalar(energy, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13})
    xw = float(res.x)
    if min(xw - lo, hi - xw) < 1e-2 * bracket:
        raise NoWellFound(f"no interior minimum within {bracket:g} m of {guess:g} m")
    h = CURVATURE_FD_STEP
    curv = (energy(xw + h) - 2 * energy(xw) + energy(xw - h)) / (h * h)
    if curv <= 0:
        raise NoWellFound(f"stationary point at {xw:g} m is not a minimum")
    freq = np.sqrt(curv / model.ion_mass) / (2 * np.pi)
    return xw, float(freq)


def solve_least_norm_solution(model: TrapModel, x0: float, f0: float) -> TrapSolution:
    """Minimum-norm voltage vector with a well of frequency f0 at x0.

    Solves min ||V|| subject to  sum_e V_e phi_e'(x0) = 0  and
    sum_e V_e phi_e''(x0) = m (2 pi f0)^2 / q  via the pseudoinverse of the
    2 x N constraint matrix.
    """
    if f0 <= 0:
        raise ValueError("target frequency must be positive")
    a = np.vstack([model.basis_gradient(x0), model.basis_curvature(x0)])
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] < 1e-12 * sv[0]:
        raise SingularConstraints(f"constraint matrix rank deficient at x = {x0:g} m")
    target_curvature = model.ion_mass * (2 * np.pi * f0) ** 2 / model.ion_charge
    b = np.array([0.0, target_curvature])
    voltages = np.linalg.pinv(a) @ b
    return TrapSolution(well_position=float(x0), voltages=voltages, axial_frequency=float(f0))


def generate_base_solutions(model: TrapModel, x_a: float, x_b: float,
                            count: int, f0: float) -> BaseSolutionSet:
    """Least-norm solutions at `count` equally spaced wells from x_a to x_b."""
    if count < 2:
        raise ValueError("count must be at least 2")
    positions = np.linspace(x_a, x_b, count)
    sols = []
    for x in positions:
        try:
            sols.append(solve_least_norm_solution(model, x, f0))
        except SingularConstraints as err:
            raise SingularConstraints(f"{err} (while generating base set)") from err
    return BaseSolutionSet(solutions=tuple(sols), model=model)


BASE_FILE_VERSION = 1


def save_base_solutions(base: BaseSolutionSet, path) -> None:
    """Write a base solution set as a versioned tab-separated table."""
    g = base.model.geometry
    with open(path, "w") as f:
        f.write(f"# ionshuttle base solutions v{BASE_FILE_VERSION}\n")
        f.write(f"# frequency_hz={base.base_frequency!r} electrode_count={g.electrode_count}"
                f" pitch_m={g.pitch!r} ion_height_m={g.ion_height!r} center_m={g.center!r}\n")
        f.write("position_m\t" + "\t".join(f"v{e}" for e in range(g.electrode_count)) + "\n")
        for s in base.solutions:
            row = "\t".join(repr(v) for v in s.voltages)
            f.write(f"{s.well_position!r}\t{row}\n")


def load_base_solutions(path, model: TrapModel) -> BaseSolutionSet:
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("# ionshuttle base solutions v"):
            raise ValueError(f"{path}: not a base solution file")
        version = int(header.rsplit("v", 1)[1])
        if version != BASE_FILE_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        meta = dict(kv.split("=") for kv in f.readline().strip("# \n").split())
        f.readline()  # column header
        data = np.loadtxt(f, ndmin=2)
    f0 = float(meta["frequency_hz"])
    if int(meta["electrode_count"]) != model.geometry.electrode_count:
        raise ValueError("electrode count mismatch between file and model")
    sols = tuple(TrapSolution(well_position=row[0], voltages=row[1:], axial_frequency=f0)
                 for row in data)
    return BaseSolutionSet(solutions=sols, model=model)
