"""Classical axial motion of the ion through the delivered potential.

Velocity-Verlet integration of m x'' = -q sum_e V_e(t) phi_e'(x) with the
delivered voltages held constant across each waveform sample (the staircase
the electronics actually outputs).  The final motional state is reported as
a coherent displacement alpha in the frame of the final well; for a harmonic
well the quantum mean follows this classical trajectory exactly.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .constants import HBAR
from .control import ConstraintPolicy, OptState
from .trap import BaseSolutionSet, TrapModel, well_properties
from .waveform import (FilterChain, Waveform, append_hold, apply_filter_chain,
                       assemble_roundtrip, check_voltage_budget, decimate_zoh,
                       synthesize_forward)


class IonLost(Exception):
    """Ion left the electrode span during integration."""

    def __init__(self, position: float, time: float):
        self.position = position
        self.time = time
        super().__init__(f"ion left the trap at x = {position * 1e6:.1f} um, t = {time * 1e6:.3f} us")


@dataclass(frozen=True)
class IonState:
    position: float  # m
    velocity: float  # m/s


@dataclass(frozen=True)
class TransportResult:
    """Final motional excitation for one hold offset."""

    hold_offset: float            # s
    coherent_amplitude: complex   # alpha, final-well frame
    thermal_quanta: float
    final_frequency: float        # Hz
    final_well: float             # m

    @property
    def coherent_quanta(self) -> float:
        return abs(self.coherent_amplitude) ** 2

    @property
    def total_quanta(self) -> float:
        return self.coherent_quanta + self.thermal_quanta


def force_at(model: TrapModel, voltages, x):
    """Axial force (N) on the ion: F = -q sum_e V_e phi_e'(x)."""
    return -model.ion_charge * (model.basis_gradient(x) @ np.asarray(voltages))


@njit(cache=True)
def _force(x, volts, centers, half_width, height):
    f = 0.0
    for e in range(centers.shape[0]):
        u1 = x - centers[e] + half_width
        u2 = x - centers[e] - half_width
        f += volts[e] * (height / (height * height + u1 * u1)
                         - height / (height * height + u2 * u2))
    return f / np.pi


@njit(cache=True)
def _verlet_zoh(samples, centers, half_width, height, q_over_m, x0, v0,
                dt, substeps, xmin, xmax, rec_stride, rec_x, rec_v):
    """Velocity Verlet through a zero-order-hold voltage timeline.

    samples: (n_samples, n_electrodes), each row held for `substeps` steps of
    dt.  Records (x, v) every rec_stride substeps into rec_x/rec_v.  Returns
    (status, x, v, steps_done); status 0 = ok, 1 = ion out of bounds.
    """
    x = x0
    v = v0
    a = -q_over_m * _force(x, samples[0], centers, half_width, height)
    step = 0
    nrec = 0
    if rec_stride > 0:
        rec_x[0] = x
        rec_v[0] = v
        nrec = 1
    for k in range(samples.shape[0]):
        row = samples[k]
        for _ in range(substeps):
            x = x + v * dt + 0.5 * a * dt * dt
            a_new = -q_over_m * _force(x, row, centers, half_width, height)
            v = v + 0.5 * (a + a_new) * dt
            a = a_new
            step += 1
            if rec_stride > 0 and step % rec_stride == 0:
                rec_x[nrec] = x
                rec_v[nrec] = v
                nrec += 1
            if x < xmin or x > xmax:
                return 1, x, v, step
        if k + 1 < samples.shape[0]:
            # field switches at the sample boundary: refresh the acceleration
            a = -q_over_m * _force(x, samples[k + 1], centers, half_width, height)
    return 0, x, v, step


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    @property
    def final(self) -> IonState:
        return IonState(position=float(self.positions[-1]), velocity=float(self.velocities[-1]))


def integrate_motion(model: TrapModel, delivered: Waveform, init: IonState,
                     dt: float | None = None, substeps: int | None = None,
                     record_stride: int = 0) -> Trajectory:
    """Integrate the ion through a delivered waveform.

    Either `dt` (rounded to an integer divisor of the sample period) or
    `substeps` selects the step; default is 8 substeps per delivered sample.
    With record_stride = 0 only the endpoints are recorded.

    Raises IonLost if the ion exits the electrode span.
    """
    if substeps is None:
        substeps = 8 if dt is None else max(1, int(round(delivered.sample_period / dt)))
    step = delivered.sample_period / substeps
    xmin, xmax = model.geometry.span
    samples = np.ascontiguousarray(delivered.samples.T)
    n_total = samples.shape[0] * substeps

    stride = record_stride if record_stride > 0 else 0
    n_rec = (n_total // stride + 1) if stride else 1
    rec_x = np.empty(n_rec)
    rec_v = np.empty(n_rec)

    status, x, v, steps_done = _verlet_zoh(
        samples, model.geometry.electrode_centers, model.geometry.pitch / 2,
        model.geometry.ion_height, model.ion_charge / model.ion_mass,
        init.position, init.velocity, step, substeps, xmin, xmax,
        stride, rec_x, rec_v)
    if status != 0:
        raise IonLost(position=x, time=steps_done * step)

    if stride:
        n_filled = steps_done // stride + 1
        times = np.arange(n_filled) * (stride * step)
        return Trajectory(times=times, positions=rec_x[:n_filled], velocities=rec_v[:n_filled])
    times = np.array([0.0, steps_done * step])
    return Trajectory(times=times, positions=np.array([init.position, x]),
                      velocities=np.array([init.velocity, v]))


def final_excitation(model: TrapModel, final_state: IonState, final_voltages,
                     well_guess: float, thermal_quanta: float = 0.0,
                     hold_offset: float = 0.0) -> TransportResult:
    """Map the final classical state onto a coherent displacement.

    With u = x - x_well, w = v and omega the measured final well frequency,
    alpha = sqrt(m omega / 2 hbar) (u + i w / omega).
    """
    x_well, freq = well_properties(model, final_voltages, well_guess)
    omega = 2 * np.pi * freq
    u = final_state.position - x_well
    w = final_state.velocity
    alpha = np.sqrt(model.ion_mass * omega / (2 * HBAR)) * (u + 1j * w / omega)
    return TransportResult(hold_offset=hold_offset, coherent_amplitude=complex(alpha),
                           thermal_quanta=float(thermal_quanta), final_frequency=freq,
                           final_well=x_well)


def add_background_heating(result: TransportResult, rate: float, elapsed: float) -> TransportResult:
    """Add rate * elapsed thermal quanta (anomalous electric-field heating)."""
    if rate < 0 or elapsed < 0:
        raise ValueError("rate and elapsed must be nonnegative")
    return replace(result, thermal_quanta=result.thermal_quanta + rate * elapsed)
