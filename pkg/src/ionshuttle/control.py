"""Optimizer state: trajectory curve, axial-frequency profile, penalties.

The optimization state X = (f, b) holds interior axial-frequency points (MHz)
and dimensionless trajectory control points.  Frequencies in this module stay
in MHz, the optimizer's natural coordinates; physical modules work in SI.

The transport trajectory s : [0,1] -> [0,1] is a Bezier curve whose
coefficient vector is built so that s(0) = 0, s(1) = 1, ds/dtau = 0 at both
endpoints and s(1 - tau) = 1 - s(tau) hold by construction.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .trap import TrapSolution


@dataclass(frozen=True)
class OptState:
    """Closed-loop optimization state: frequency points then trajectory points."""

    freq_points: np.ndarray = field(default_factory=lambda: np.empty(0))  # MHz
    traj_points: np.ndarray = field(default_factory=lambda: np.empty(0))  # dimensionless

    def __post_init__(self):
        object.__setattr__(self, "freq_points", np.atleast_1d(np.asarray(self.freq_points, float)))
        object.__setattr__(self, "traj_points", np.atleast_1d(np.asarray(self.traj_points, float)))
        if not (np.all(np.isfinite(self.freq_points)) and np.all(np.isfinite(self.traj_points))):
            raise ValueError("state values must be finite")

    @property
    def n_f(self) -> int:
        return len(self.freq_points)

    @property
    def n_t(self) -> int:
        return len(self.traj_points)

    def to_vector(self) -> np.ndarray:
        """Flat vector, frequency points first, then trajectory points."""
        return np.concatenate([self.freq_points, self.traj_points])

    @classmethod
    def from_vector(cls, vec, n_f: int, n_t: int) -> "OptState":
        vec = np.asarray(vec, float)
        if len(vec) != n_f + n_t:
            raise ValueError(f"expected {n_f + n_t} entries, got {len(vec)}")
        return cls(freq_points=vec[:n_f], traj_points=vec[n_f:])


@dataclass(frozen=True)
class TrajectoryCurve:
    """Bezier coefficients s_0..s_N with the transport symmetry built in."""

    coefficients: np.ndarray

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1


def build_trajectory(traj_points) -> TrajectoryCurve:
    """Assemble the symmetric Bezier coefficient vector from control points.

    With n control points the polynomial order is N = 2n + 3.  The lower
    coefficients are s_0 = s_1 = 0 and s_{j+1} = b_j; the upper half follows
    from s_{N-j} = 1 - s_j.  An empty control set yields the minimal smooth
    ramp s(tau) = 3 tau^2 - 2 tau^3.
    """
    b = np.atleast_1d(np.asarray(traj_points, float))
    n_t = len(b)
    order = 2 * n_t + 3
    s = np.zeros(order + 1)
    s[2:2 + n_t] = b
    for j in range(order // 2 + 1):
        s[order - j] = 1.0 - s[j]
    return TrajectoryCurve(coefficients=s)


def bezier_eval(curve: TrajectoryCurve, tau) -> np.ndarray:
    """Evaluate the Bezier polynomial by De Casteljau's algorithm.

    Numerically stable for tau in [0, 1]; vectorized over tau.
    """
    tau = np.asarray(tau, float)
    scalar = tau.ndim == 0
    t = np.atleast_1d(tau)
    layers = np.repeat(curve.coefficients[:, None], len(t), axis=1)
    for _ in range(curve.order):
        layers = layers[:-1] * (1.0 - t) + layers[1:] * t
    out = layers[0]
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class FrequencyProfile:
    """Piecewise-linear axial frequency along the path, pinned at the ends."""

    knot_positions: np.ndarray   # m
    knot_values: np.ndarray      # MHz
    endpoint_frequency: float    # MHz

    def value_at(self, x) -> np.ndarray:
        """Axial frequency (MHz) at position(s) x, clamped to the path."""
        return np.interp(x, self.knot_positions, self.knot_values)


def frequency_profile(freq_points, f_base: float, x_a: float, x_b: float) -> FrequencyProfile:
    """Profile with interior knots at x_j = x_a + j (x_b - x_a)/(n_f + 1)."""
    if x_a == x_b:
        raise ValueError("path endpoints must differ")
    f = np.atleast_1d(np.asarray(freq_points, float))
    positions = np.linspace(x_a, x_b, len(f) + 2)
    values = np.concatenate([[f_base], f, [f_base]])
    return FrequencyProfile(knot_positions=positions, knot_values=values,
                            endpoint_frequency=float(f_base))


@dataclass(frozen=True)
class ConstraintPolicy:
    """Feasible region and the exponential penalty wall outside it."""

    freq_range: tuple = (1.5, 3.5)    # MHz
    voltage_budget: float = 10.0      # V, symmetric about zero
    penalty_scale: float = 10.0       # loss units
    freq_sharpness: float = 4.0       # 1/MHz
    voltage_sharpness: float = 2.0    # 1/V

    def __post_init__(self):
        if self.freq_range[0] >= self.freq_range[1]:
            raise ValueError("freq_range must be ordered")
        if self.voltage_budget <= 0:
            raise ValueError("voltage budget must be positive")


def state_penalty(state: OptState, policy: ConstraintPolicy = ConstraintPolicy()) -> float:
    """Penalty for frequency points outside the allowed range (0 inside).

    Each out-of-range point contributes scale * (exp(sharpness * excess) - 1)
    where excess is the distance to the nearer boundary, so the wall is
    continuous at the boundary.  Trajectory points are unconstrained.
    """
    lo, hi = policy.freq_range
    f = state.freq_points
    excess = np.maximum(f - hi, 0.0) + np.maximum(lo - f, 0.0)
    return float(np.sum(policy.penalty_scale * np.expm1(policy.freq_sharpness * excess)))


def scale_solution_for_frequency(sol: TrapSolution, f_target: float) -> TrapSolution:
    """Rescale a trapping solution to a new axial frequency.

    The well curvature is linear in the voltages, so scaling them by
    (f_target / f_base)^2 moves the frequency without moving the well.
    """
    if f_target <= 0:
        raise ValueError("target frequency must be positive")
    factor = (f_target / sol.axial_frequency) ** 2
    return replace(sol, voltages=sol.voltages * factor, axial_frequency=float(f_target))
