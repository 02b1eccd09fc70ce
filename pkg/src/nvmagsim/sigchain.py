"""Two-channel photodetection and ADC simulation.

Produces reproducible, quantized dual-channel sample streams from the spin
model and MW drive. Channel A sees the fluorescence (spectrum-dependent),
channel B the scattered green reference (MW-independent).

Noise model, each term independently switchable:

* common-mode laser intensity noise (relative, white + 1/f below a knee),
  identical on both channels;
* per-channel photon shot noise (Gaussian approximation, variance
  proportional to mean photocurrent and half the sample rate);
* per-channel additive white electronic noise;
* optional per-channel independent multiplicative noise (detector excess
  noise that balance detection cannot remove);
* mid-step uniform quantization of the ADC.

Randomness comes from the counter-based Philox generator. Substreams are
derived as SeedSequence((seed, STREAM_ID)); the stream-id table is below,
giving bit-identical output for a fixed (config, seed) regardless of which
sources are enabled.
"""

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import InvalidArgument
from .mwcontrol import MWConfig, square_wave
from .nvmodel import SpinSystemParams, spectrum_values, transition_frequencies

Q_ELECTRON = 1.602176634e-19  # C

# Substream ids for SeedSequence((seed, STREAM_*)).
STREAM_RIN_WHITE = 0
STREAM_RIN_PINK = 1
STREAM_SHOT_A = 2
STREAM_SHOT_B = 3
STREAM_ELEC_A = 4
STREAM_ELEC_B = 5
STREAM_INDEP_A = 6
STREAM_INDEP_B = 7

# Samples processed per chunk. Fixed: sequential draws from one generator are
# identical however they are chunked, but a fixed value documents the layout.
CHUNK = 1 << 20

# Default cap on sample_rate * duration per run.
MAX_SAMPLES = 120_000_000


@dataclass(frozen=True)
class DetectorParams:
    """Photodetector and transimpedance chain for both channels.

    responsivity in A/W, TIA gains in V/A, optical powers in W reaching each
    detector, single-pole detector bandwidth in Hz. The detector response
    attenuates the modulated fluorescence signal when f_m approaches the
    bandwidth; f_m below detector_bandwidth/10 is transparent.
    """

    responsivity: float = 0.52
    tia_gain_a: float = 200.0
    tia_gain_b: float = 2200.0
    fluor_power: float = 2.0e-3
    green_power: float = 1.955e-4
    detector_bandwidth: float = 100e3

    def __post_init__(self):
        for name in ("responsivity", "tia_gain_a", "tia_gain_b", "detector_bandwidth"):
            if getattr(self, name) <= 0:
                raise InvalidArgument(f"{name} must be > 0")
        for name in ("fluor_power", "green_power"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be >= 0")


@dataclass(frozen=True)
class NoiseParams:
    """Noise source densities; a zero density disables that source.

    electronic_density is per-channel additive, V/sqrt(Hz). laser_rin_density
    is the relative laser intensity noise, 1/sqrt(Hz), common to both
    channels, with a 1/f knee at pink_knee Hz. indep_rin_a/b are per-channel
    independent multiplicative densities, 1/sqrt(Hz). seed is a 64-bit
    integer; there is no wall-clock default.
    """

    shot_enabled: bool = True
    electronic_density: float = 6.0e-8
    pink_knee: float = 500.0
    laser_rin_density: float = 3.0e-6
    indep_rin_a: float = 6.0e-7
    indep_rin_b: float = 1.0e-7
    seed: int = 0

    def __post_init__(self):
        for name in (
            "electronic_density",
            "pink_knee",
            "laser_rin_density",
            "indep_rin_a",
            "indep_rin_b",
        ):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class AdcParams:
    """Uniform ADC: bits, full-scale range in volts, sample rate in Hz."""

    bits: int = 14
    full_scale: float = 0.5
    sample_rate: float = 1.0e6

    def __post_init__(self):
        if not 2 <= self.bits <= 24:
            raise InvalidArgument("bits must be in [2, 24]")
        if self.full_scale <= 0:
            raise InvalidArgument("full_scale must be > 0")
        if self.sample_rate <= 0:
            raise InvalidArgument("sample_rate must be > 0")

    @property
    def step(self) -> float:
        return self.full_scale / 2**self.bits

    @property
    def code_max(self) -> int:
        return 2**self.bits - 1


@dataclass(frozen=True)
class DualTimeSeries:
    """Synchronized ADC code streams of both channels with provenance."""

    sample_rate: float
    codes_a: np.ndarray
    codes_b: np.ndarray
    t0: float
    seed_used: int
    config_digest: str
    adc: AdcParams
    clamped_a: int = 0
    clamped_b: int = 0

    def __post_init__(self):
        if len(self.codes_a) != len(self.codes_b):
            raise InvalidArgument("channel code arrays must have equal length")

    def __len__(self):
        return len(self.codes_a)

    @property
    def saturated(self) -> bool:
        """True when any sample exceeded full scale and was clamped."""
        return self.clamped_a > 0 or self.clamped_b > 0

    @property
    def duration(self) -> float:
        return len(self.codes_a) / self.sample_rate

    def volts_a(self) -> np.ndarray:
        return dequantize(self.adc, self.codes_a)

    def volts_b(self) -> np.ndarray:
        return dequantize(self.adc, self.codes_b)

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.codes_a)) / self.sample_rate


def quantize(adc: AdcParams, volts):
    """Quantize voltages to ADC codes; clamping is the defined behavior.

    code = floor(v / q) clamped to [0, 2^bits - 1], q = full_scale / 2^bits.
    Returns (codes, clamped_count). Together with dequantize's (c + 0.5) * q
    reconstruction, in-range uniform inputs give the standard q/sqrt(12)
    quantization-error RMS.
    """
    v = np.asarray(volts, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidArgument("samples must be finite")
    raw = np.floor(v / adc.step)
    clamped = int(np.count_nonzero(raw < 0) + np.count_nonzero(raw > adc.code_max))
    codes = np.clip(raw, 0, adc.code_max).astype(np.uint32 if adc.bits > 16 else np.uint16)
    return codes, clamped


def dequantize(adc: AdcParams, codes) -> np.ndarray:
    """Map code c back to the center of its quantization bin, (c + 0.5) * q."""
    return (np.asarray(codes, dtype=float) + 0.5) * adc.step


def shot_noise_sigma(photon_rate: float, bandwidth: float) -> float:
    """Relative RMS intensity fluctuation of a Poisson stream in a bandwidth.

    sqrt(2 * bandwidth / photon_rate); photon_rate in 1/s, bandwidth in Hz.
    """
    if photon_rate <= 0:
        raise InvalidArgument("photon_rate must be > 0")
    if bandwidth < 0:
        raise InvalidArgument("bandwidth must be >= 0")
    return float(np.sqrt(2.0 * bandwidth / photon_rate))


def _substream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), stream_id))))


def pink_filter_sos(sample_rate: float, f_lo: float = 0.05, f_hi: float | None = None):
    """First-order pole/zero cascade approximating a 1/f power spectrum.

    Poles at decade steps from f_lo, zeros a half decade above each pole,
    capped below Nyquist. Returns an sos array for scipy.signal.sosfilt.
    """
    if f_hi is None:
        f_hi = sample_rate / 4.0
    sos = []
    f_p = f_lo
    while f_p < f_hi:
        f_z = min(f_p * np.sqrt(10.0), 0.45 * sample_rate)
        p = np.exp(-2.0 * np.pi * f_p / sample_rate)
        z = np.exp(-2.0 * np.pi * f_z / sample_rate)
        sos.append([1.0, -z, 0.0, 1.0, -p, 0.0])
        f_p *= 10.0
    return np.asarray(sos)


def _pink_gain(sos: np.ndarray, sample_rate: float, density: float, knee: float) -> float:
    """Scale so the cascade driven by unit normals has one-sided PSD
    density^2 * knee / f, calibrated at f = knee (clamped into the band)."""
    f_cal = min(max(knee, 0.1), sample_rate / 8.0)
    _, h = sps.sosfreqz(sos, worN=np.array([f_cal]), fs=sample_rate)
    mag = abs(h[0])
    if mag == 0:
        raise InvalidArgument("pink filter has zero response at the knee")
    return density * np.sqrt(knee * sample_rate / (2.0 * f_cal)) / mag


class _OnePole:
    """Streaming single-pole low-pass, exact pole mapping, settled start."""

    def __init__(self, cutoff: float, sample_rate: float):
        self.alpha = 1.0 - np.exp(-2.0 * np.pi * cutoff / sample_rate)
        self.b = np.array([self.alpha])
        self.a = np.array([1.0, self.alpha - 1.0])
        self.zi = None

    def process(self, x: np.ndarray) -> np.ndarray:
        if self.zi is None:
            # start settled at the first input value
            self.zi = np.array([(1.0 - self.alpha) * x[0]])
        y, self.zi = sps.lfilter(self.b, self.a, x, zi=self.zi)
        return y


def config_digest(*parts) -> str:
    """Deterministic short digest of the run configuration."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x00")
    return h.hexdigest()[:16]


def _fsk_high_mask(n0: int, n1: int, t0: float, f_m: float, sample_rate: float) -> np.ndarray:
    """True where the FSK square wave is on its high level, samples [n0, n1).

    Uses exact integer arithmetic when the half period is an integer number
    of samples and t0 sits on a half-period boundary; falls back to float
    phase otherwise.
    """
    half = sample_rate / (2.0 * f_m)
    t0_half = t0 * 2.0 * f_m
    n = np.arange(n0, n1, dtype=np.int64)
    if half == np.floor(half) and t0_half == np.floor(t0_half):
        k = (n // np.int64(half) + np.int64(t0_half)) % 2
        return k == 0
    phase = ((t0 + n / sample_rate) * f_m) % 1.0
    return phase < 0.5


def simulate(
    spin: SpinSystemParams,
    field,
    mw: MWConfig,
    det: DetectorParams,
    noise: NoiseParams,
    adc: AdcParams,
    duration: float,
    t0: float = 0.0,
    max_samples: int = MAX_SAMPLES,
) -> DualTimeSeries:
    """Simulate both detector channels through the ADC for ``duration`` seconds.

    Deterministic for a fixed (config, seed): bit-identical codes across runs.
    Saturation clamps codes and is reported in the output metadata, never
    raised.
    """
    if duration < 10.0 / mw.f_m:
        raise InvalidArgument(f"duration must be >= 10/f_m = {10.0 / mw.f_m:.3e} s")
    n_samples = int(round(duration * adc.sample_rate))
    if n_samples <= 0:
        raise InvalidArgument("duration too short for the sample rate")
    if n_samples > max_samples:
        raise InvalidArgument(
            f"sample_rate * duration = {n_samples} exceeds the memory cap {max_samples}"
        )
    if adc.sample_rate <= 20.0 * mw.f_m:
        raise InvalidArgument("sample_rate must exceed 20 * f_m")

    resonances = transition_frequencies(spin, field)
    # FSK toggles between exactly two probe frequencies, evaluate S once each.
    s_levels = spectrum_values(
        spin,
        resonances,
        np.array([mw.center + mw.depth / 2.0, mw.center - mw.depth / 2.0]),
        hs_on=mw.hs_on,
        mw_power=mw.power,
        comb_spacing=mw.sideband_spacing,
    )
    s_hi, s_lo = float(s_levels[0]), float(s_levels[1])

    v_scale_a = det.fluor_power * det.responsivity * det.tia_gain_a
    v_b_mean = det.green_power * det.responsivity * det.tia_gain_b

    seed = int(noise.seed)
    sr = adc.sample_rate
    per_sample = np.sqrt(sr / 2.0)  # white density (per sqrt(Hz)) -> per-sample sigma

    rng = {
        "rin_white": _substream(seed, STREAM_RIN_WHITE),
        "rin_pink": _substream(seed, STREAM_RIN_PINK),
        "shot_a": _substream(seed, STREAM_SHOT_A),
        "shot_b": _substream(seed, STREAM_SHOT_B),
        "elec_a": _substream(seed, STREAM_ELEC_A),
        "elec_b": _substream(seed, STREAM_ELEC_B),
        "indep_a": _substream(seed, STREAM_INDEP_A),
        "indep_b": _substream(seed, STREAM_INDEP_B),
    }

    use_rin = noise.laser_rin_density > 0
    use_pink = use_rin and noise.pink_knee > 0
    if use_pink:
        pink_sos = pink_filter_sos(sr)
        pink_gain = _pink_gain(pink_sos, sr, noise.laser_rin_density, noise.pink_knee)
        pink_zi = np.zeros((pink_sos.shape[0], 2))
    detector_lp = _OnePole(det.detector_bandwidth, sr)

    i_b_mean = det.green_power * det.responsivity
    shot_rel_b = (
        np.sqrt(sr * Q_ELECTRON / i_b_mean)
        if (noise.shot_enabled and i_b_mean > 0)
        else 0.0
    )

    codes_a = np.empty(n_samples, dtype=np.uint32 if adc.bits > 16 else np.uint16)
    codes_b = np.empty_like(codes_a)
    clamped_a = 0
    clamped_b = 0

    for start in range(0, n_samples, CHUNK):
        stop = min(start + CHUNK, n_samples)
        m = stop - start

        high = _fsk_high_mask(start, stop, t0, mw.f_m, sr)
        v_a_mean = v_scale_a * np.where(high, s_hi, s_lo)
        v_a_mean = detector_lp.process(v_a_mean)

        v_a = v_a_mean.copy()
        v_b = np.full(m, v_b_mean)

        if use_rin:
            rin = (noise.laser_rin_density * per_sample) * rng["rin_white"].standard_normal(m)
            if use_pink:
                pink, pink_zi = sps.sosfilt(
                    pink_sos, rng["rin_pink"].standard_normal(m), zi=pink_zi
                )
                rin += pink_gain * pink
            v_a += v_a_mean * rin
            v_b += v_b_mean * rin

        if noise.shot_enabled and det.fluor_power > 0:
            i_a_mean = v_a_mean / det.tia_gain_a
            v_a += v_a_mean * np.sqrt(sr * Q_ELECTRON / i_a_mean) * rng[
                "shot_a"
            ].standard_normal(m)
        if shot_rel_b:
            v_b += v_b_mean * shot_rel_b * rng["shot_b"].standard_normal(m)

        if noise.electronic_density > 0:
            sig_e = noise.electronic_density * per_sample
            v_a += sig_e * rng["elec_a"].standard_normal(m)
            v_b += sig_e * rng["elec_b"].standard_normal(m)

        if noise.indep_rin_a > 0:
            v_a += v_a_mean * (noise.indep_rin_a * per_sample) * rng[
                "indep_a"
            ].standard_normal(m)
        if noise.indep_rin_b > 0:
            v_b += v_b_mean * (noise.indep_rin_b * per_sample) * rng[
                "indep_b"
            ].standard_normal(m)

        codes_a[start:stop], na = quantize(adc, v_a)
        codes_b[start:stop], nb = quantize(adc, v_b)
        clamped_a += na
        clamped_b += nb

    digest = config_digest(spin, tuple(np.asarray(field, dtype=float)), mw, det, noise, adc, duration, t0)
    return DualTimeSeries(
        sample_rate=sr,
        codes_a=codes_a,
        codes_b=codes_b,
        t0=t0,
        seed_used=seed,
        config_digest=digest,
        adc=adc,
        clamped_a=clamped_a,
        clamped_b=clamped_b,
    )


# Binary time-series container: little-endian header
# (magic "NVTS", version u16, bits u8, sample_rate f64, length u64, seed u64)
# followed by codes_a then codes_b as u16 arrays.
_NVTS_MAGIC = b"NVTS"
_NVTS_VERSION = 1
_NVTS_HEADER = struct.Struct("<4sHBdQQ")


def save_nvts(ts: DualTimeSeries, path) -> None:
    """Write the binary NVTS layout. Codes are stored as u16; 14-bit default fits."""
    if ts.adc.bits > 16:
        raise InvalidArgument("NVTS format stores u16 codes; bits must be <= 16")
    header = _NVTS_HEADER.pack(
        _NVTS_MAGIC, _NVTS_VERSION, ts.adc.bits, ts.sample_rate, len(ts), ts.seed_used
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ts.codes_a, dtype="<u2").tobytes())
        fh.write(np.ascontiguousarray(ts.codes_b, dtype="<u2").tobytes())


def load_nvts(path, full_scale: float = 0.5, t0: float = 0.0) -> DualTimeSeries:
    """Read the binary NVTS layout.

    The header does not carry full_scale or t0; supply them if the defaults
    do not apply.
    """
    with open(path, "rb") as fh:
        raw = fh.read(_NVTS_HEADER.size)
        if len(raw) != _NVTS_HEADER.size:
            raise InvalidArgument("truncated NVTS header")
        magic, version, bits, sample_rate, length, seed = _NVTS_HEADER.unpack(raw)
        if magic != _NVTS_MAGIC:
            raise InvalidArgument("not an NVTS file")
        if version != _NVTS_VERSION:
            raise InvalidArgument(f"unsupported NVTS version {version}")
        body = fh.read(4 * length)
    if len(body) != 4 * length:
        raise InvalidArgument("truncated NVTS payload")
    codes = np.frombuffer(body, dtype="<u2")
    adc = AdcParams(bits=bits, full_scale=full_scale, sample_rate=sample_rate)
    return DualTimeSeries(
        sample_rate=sample_rate,
        codes_a=codes[:length].astype(np.uint16),
        codes_b=codes[length:].astype(np.uint16),
        t0=t0,
        seed_used=seed,
        config_digest="loaded:" + config_digest(bits, sample_rate, length, seed),
        adc=adc,
    )
