"""Microwave control plans: FSK modulation, triple-tone comb, frequency sweeps.

The FSK waveform is a two-level square wave at modulation frequency f_m:
50% duty cycle, high level first, phase-referenced to t = 0. ``depth`` is
peak-to-peak, i.e. the two FSK levels are center +/- depth/2.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .nvmodel import A_HYPERFINE

# Output range of the synthesizer chain, Hz.
CENTER_MIN = 2.5e9
CENTER_MAX = 3.0e9


@dataclass(frozen=True)
class MWConfig:
    """Microwave drive configuration.

    Parameters
    ----------
    center : float
        Carrier (un-modulated) frequency, Hz.
    f_m : float
        FSK modulation frequency, Hz.
    depth : float
        Peak-to-peak FSK deviation, Hz. Levels are center +/- depth/2.
    power : float
        Drive power, dBm.
    hs_on : bool
        Triple-tone hyperfine driving on/off.
    sideband_spacing : float
        Spacing of the two sidebands from the carrier when hs_on, Hz.
    """

    center: float = 2.87e9
    f_m: float = 1e3
    depth: float = 400e3
    power: float = 10.0
    hs_on: bool = False
    sideband_spacing: float = A_HYPERFINE

    def __post_init__(self):
        if self.f_m <= 0:
            raise InvalidArgument("f_m must be > 0")
        if self.depth <= 0:
            raise InvalidArgument("depth must be > 0")
        if not CENTER_MIN <= self.center <= CENTER_MAX:
            raise InvalidArgument(
                f"center {self.center:.4e} Hz outside the {CENTER_MIN:.1e}-"
                f"{CENTER_MAX:.1e} Hz output range"
            )


@dataclass(frozen=True)
class SweepPlan:
    """Uniform frequency sweep, endpoints inclusive."""

    start: float
    stop: float
    points: int
    dwell: float
    frequencies: np.ndarray

    def __post_init__(self):
        if self.points < 2:
            raise InvalidArgument("points must be >= 2")
        if self.dwell <= 0:
            raise InvalidArgument("dwell must be > 0")
        f = np.asarray(self.frequencies, dtype=float)
        if not np.all(np.diff(f) > 0):
            raise InvalidArgument("sweep frequencies must be strictly monotone")
        object.__setattr__(self, "frequencies", f)


def square_wave(cycles):
    """+/-1 square wave of the cycle fraction: +1 on [0, 0.5), -1 on [0.5, 1)."""
    frac = np.asarray(cycles, dtype=float) % 1.0
    return np.where(frac < 0.5, 1.0, -1.0)


def fsk_instantaneous_frequency(c: MWConfig, t):
    """Instantaneous MW frequency at time(s) t >= 0 seconds.

    Returns center + (depth/2) * sq(f_m * t), scalar in, scalar out.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise InvalidArgument("t must be >= 0")
    out = c.center + (c.depth / 2.0) * square_wave(t_arr * c.f_m)
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def probe_comb(c: MWConfig):
    """Probe tones as (frequency Hz, relative amplitude) pairs.

    hs_off: the single carrier. hs_on: carrier plus two sidebands at
    +/- sideband_spacing, all with equal amplitude.
    """
    if not c.hs_on:
        return [(c.center, 1.0)]
    a = c.sideband_spacing
    return [(c.center - a, 1.0), (c.center, 1.0), (c.center + a, 1.0)]


def make_sweep(start: float, stop: float, points: int, dwell: float) -> SweepPlan:
    """Uniform sweep plan over [start, stop] inclusive."""
    if stop <= start:
        raise InvalidArgument("stop must be > start")
    if points < 2:
        raise InvalidArgument("points must be >= 2")
    if dwell <= 0:
        raise InvalidArgument("dwell must be > 0")
    freqs = np.linspace(start, stop, points)
    return SweepPlan(start=start, stop=stop, points=points, dwell=dwell, frequencies=freqs)
