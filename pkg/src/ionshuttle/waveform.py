"""Voltage waveform synthesis and the generating-electronics emulation.

A Waveform is a multi-channel voltage timeline at a fixed sample period
(30 ns for the full-rate generator).  The forward transport stage spans
round(t_f / T_s) DAC steps and carries steps + 1 samples so that both the
departure and arrival trapping solutions appear exactly; the round trip is
forward + hold (repeated arrival column) + time-reversed forward.

The electronics chain applied to the commanded samples is: optional
decimation with zero-order hold (slow-DAC emulation), a linear-phase FIR
on the digital side, then a zero-order-hold upsample into a discretized
sixth-order Butterworth low-pass standing in for the feedthrough filters.
"""

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.signal as signal

from .control import (ConstraintPolicy, OptState, bezier_eval, build_trajectory,
                      frequency_profile)
from .trap import BaseSolutionSet


class InfeasibleSpec(Exception):
    """Filter specification impossible at the waveform's sample rate."""


@dataclass(frozen=True)
class StageMarkers:
    """Sample indices of the last sample of each transport stage."""

    forward_end: int
    hold_end: int
    reverse_end: int

    def scaled(self, factor: int) -> "StageMarkers":
        return StageMarkers(self.forward_end * factor, self.hold_end * factor,
                            self.reverse_end * factor)


@dataclass(frozen=True)
class Waveform:
    sample_period: float          # s
    samples: np.ndarray           # (channels, n_samples) volts
    markers: StageMarkers | None = None
    filtered: bool = False
    decimated: bool = False

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        """Played-out length: one sample period per sample."""
        return self.n_samples * self.sample_period


@dataclass(frozen=True)
class FirSpec:
    pass_band: float = 12e6        # Hz
    stop_band: float = 15e6        # Hz
    attenuation_db: float = 100.0


@dataclass(frozen=True)
class AnalogSpec:
    order: int = 6
    cutoff: float = 1.3e6          # Hz, -3 dB
    upsample_factor: int = 8       # discretization rate / DAC rate


@dataclass(frozen=True)
class FilterChain:
    fir: FirSpec = FirSpec()
    analog: AnalogSpec = AnalogSpec()


def solution_voltages_at(state: OptState, base: BaseSolutionSet, tau) -> np.ndarray:
    """Commanded voltage vector(s) for trajectory phase(s) tau in [0, 1].

    The well position is x(tau) = x_a + (x_b - x_a) s(tau) with s the state's
    trajectory curve; voltages are linearly interpolated between the two
    bracketing base solutions and rescaled to the frequency profile's value
    at x(tau).  Positions are clamped to the base-solution span, so trajectory
    overshoot beyond the endpoints plays the endpoint solutions.
    """
    tau = np.atleast_1d(np.asarray(tau, float))
    pos = base.positions
    x_a, x_b = pos[0], pos[-1]
    curve = build_trajectory(state.traj_points)
    s = bezier_eval(curve, tau)
    x = x_a + (x_b - x_a) * np.clip(s, 0.0, 1.0)

    spacing = base.spacing
    idx = np.clip(((x - x_a) / spacing).astype(int), 0, len(base) - 2)
    frac = (x - pos[idx]) / spacing
    vmat = base.voltage_matrix
    volts = vmat[idx] * (1.0 - frac[:, None]) + vmat[idx + 1] * frac[:, None]

    f_base = base.base_frequency / 1e6  # profile works in MHz
    profile = frequency_profile(state.freq_points, f_base, x_a, x_b)
    scale = (profile.value_at(x) / f_base) ** 2
    return volts * scale[:, None]


def synthesize_forward(state: OptState, base: BaseSolutionSet, t_f: float,
                       sample_period: float = 30e-9) -> Waveform:
    """Forward transport waveform sampled at every DAC step.

    Emits round(t_f / sample_period) + 1 samples at tau = k / steps so the
    first and last columns are exactly the endpoint base solutions.
    """
    if t_f <= 0:
        raise ValueError("transport time must be positive")
    steps = int(round(t_f / sample_period))
    if steps < 1:
        raise ValueError("transport shorter than one DAC step")
    tau = np.arange(steps + 1) / steps
    volts = solution_voltages_at(state, base, tau)
    return Waveform(sample_period=sample_period, samples=volts.T)


def assemble_roundtrip(fwd: Waveform, hold: float, offset: float = 0.0) -> Waveform:
    """Forward stage, hold at the distal well, then the exact time reversal.

    The hold repeats the arrival column for round((hold + offset) / T_s)
    samples.  With zero hold the result is palindromic under sample reversal.
    """
    if hold < 0 or offset < 0:
        raise ValueError("hold and offset must be nonnegative")
    n_hold = int(round((hold + offset) / fwd.sample_period))
    f = fwd.samples
    hold_block = np.repeat(f[:, -1:], n_hold, axis=1)
    samples = np.concatenate([f, hold_block, f[:, ::-1]], axis=1)
    n_fwd = f.shape[1]
    markers = StageMarkers(forward_end=n_fwd - 1,
                           hold_end=n_fwd + n_hold - 1,
                           reverse_end=samples.shape[1] - 1)
    return Waveform(sample_period=fwd.sample_period, samples=samples, markers=markers)


def append_hold(w: Waveform, duration: float) -> Waveform:
    """Extend a waveform by repeating its final column (static settle pad)."""
    n = int(round(duration / w.sample_period))
    if n == 0:
        return w
    pad = np.repeat(w.samples[:, -1:], n, axis=1)
    return replace(w, samples=np.concatenate([w.samples, pad], axis=1))


def check_voltage_budget(w: Waveform, policy: ConstraintPolicy) -> tuple[bool, float]:
    """(ok, penalty): ok iff every sample is inside the symmetric budget."""
    peak = float(np.abs(w.samples).max()) if w.samples.size else 0.0
    excess = peak - policy.voltage_budget
    if excess <= 0:
        return True, 0.0
    return False, float(policy.penalty_scale * np.expm1(policy.voltage_sharpness * excess))


@lru_cache(maxsize=8)
def fir_taps(pass_band: float, stop_band: float, attenuation_db: float,
             sample_rate: float) -> np.ndarray:
    """Linear-phase windowed-sinc taps (Kaiser window) for the digital filter.

    Sized by the Kaiser formula for the requested stop-band attenuation with
    a small tap margin, odd length, unity DC gain.
    """
    nyquist = sample_rate / 2
    if stop_band >= nyquist:
        raise InfeasibleSpec(f"stop band {stop_band:g} Hz at or above Nyquist {nyquist:g} Hz")
    if pass_band >= stop_band:
        raise InfeasibleSpec("pass band must lie below the stop band")
    numtaps, beta = signal.kaiserord(attenuation_db, (stop_band - pass_band) / nyquist)
    numtaps += 8  # margin so the attenuation spec holds with slack
    if numtaps % 2 == 0:
        numtaps += 1
    cutoff = (pass_band + stop_band) / 2
    return signal.firwin(numtaps, cutoff, window=("kaiser", beta), fs=sample_rate)


def apply_digital_fir(w: Waveform, spec: FirSpec = FirSpec()) -> Waveform:
    """Convolve each channel with the FIR, compensating the group delay.

    The input is edge-padded by half the tap count and convolved in 'valid'
    mode, which trims the symmetric group delay: output length equals input
    length and stage markers stay aligned.  A constant input is reproduced
    exactly.
    """
    taps = fir_taps(spec.pass_band, spec.stop_band, spec.attenuation_db,
                    1.0 / w.sample_period)
    p = (len(taps) - 1) // 2
    s = w.samples
    padded = np.concatenate([np.repeat(s[:, :1], p, axis=1), s,
                             np.repeat(s[:, -1:], p, axis=1)], axis=1)
    out = np.empty_like(s)
    for c in range(w.channels):
        out[c] = np.convolve(padded[c], taps, mode="valid")
    return replace(w, samples=out, filtered=True)


@lru_cache(maxsize=8)
def analog_sos(order: int, cutoff: float, sample_rate: float) -> np.ndarray:
    """Butterworth low-pass discretized by the bilinear transform.

    scipy pre-warps the cutoff, so the discrete -3 dB point lands on the
    requested frequency.
    """
    return signal.butter(order, cutoff, output="sos", fs=sample_rate)


def apply_analog_chain(w: Waveform, spec: AnalogSpec = AnalogSpec()) -> Waveform:
    """DAC staircase into the feedthrough low-pass.

    The waveform is upsampled by zero-order hold to the discretization rate
    (modelling the DAC's staircase output) and run through the discretized
    Butterworth.  Filter state is initialized to steady state at the first
    sample, as if that voltage had been applied forever.  The output stays
    at the discretization rate.
    """
    if spec.upsample_factor < 4:
        raise ValueError("discretization rate must be at least 4x the DAC rate")
    rate = spec.upsample_factor / w.sample_period
    sos = analog_sos(spec.order, spec.cutoff, rate)
    zi0 = signal.sosfilt_zi(sos)
    up = np.repeat(w.samples, spec.upsample_factor, axis=1)
    out = np.empty_like(up)
    for c in range(w.channels):
        out[c], _ = signal.sosfilt(sos, up[c], zi=zi0 * up[c, 0])
    markers = w.markers.scaled(spec.upsample_factor) if w.markers else None
    return Waveform(sample_period=w.sample_period / spec.upsample_factor,
                    samples=out, markers=markers, filtered=True,
                    decimated=w.decimated)


def decimate_zoh(w: Waveform, factor: int) -> Waveform:
    """Slow-generator emulation: keep every factor-th sample, hold it flat.

    Output length equals input length; a trailing partial block repeats its
    kept sample for the remaining samples.  Idempotent for equal factors.
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return w
    kept = w.samples[:, ::factor]
    out = np.repeat(kept, factor, axis=1)[:, :w.n_samples]
    return replace(w, samples=out, decimated=True)


def apply_filter_chain(w: Waveform, chain: FilterChain = FilterChain()) -> Waveform:
    """Digital FIR followed by the analog stage; returns the delivered signal."""
    return apply_analog_chain(apply_digital_fir(w, chain.fir), chain.analog)


def save_waveform(w: Waveform, path) -> None:
    """Tabular dump: header with sample period, channels, markers; one row per sample."""
    with open(path, "w") as f:
        f.write(f"# sample_period_ns={w.sample_period * 1e9!r}\n")
        f.write(f"# channels={w.channels} filtered={w.filtered} decimated={w.decimated}\n")
        if w.markers:
            f.write(f"# markers forward_end={w.markers.forward_end}"
                    f" hold_end={w.markers.hold_end} reverse_end={w.markers.reverse_end}\n")
        f.write("\t".join(f"v{c}" for c in range(w.channels)) + "\n")
        np.savetxt(f, w.samples.T, fmt="%.9g", delimiter="\t")
