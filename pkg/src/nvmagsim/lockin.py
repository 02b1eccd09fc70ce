"""On-board digital processing: balance detection, lock-in demodulation, ODMR integration.

The demodulation reference is a +/-1 square wave at f_m, phase-locked to the
FSK waveform (both start high at t = 0). The low-pass is a single moving
average of ``window = round(sample_rate / (2 * enbw))`` samples, so the
equivalent noise bandwidth of a window of duration T is 1/(2T) by definition.
Samples before the stream are treated as zeros, so the first ``window``
samples of output are a settling ramp; assertions about steady state apply
one full window into the record.

``demodulate_fixed`` runs the identical pipeline in scaled-integer
arithmetic and reports its deviation from the float path.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateReferenceError,
    EnbwTooWideError,
    InvalidArgument,
    OverflowStageError,
)
from .mwcontrol import SweepPlan
from .nvmodel import OdmrCurve
from .sigchain import DualTimeSeries, dequantize

# Chunk size for streaming passes over long records.
_CHUNK = 1 << 20

# Fractional bits kept on fixed-point outputs (relative to one input LSB).
# Keeps final-rounding error well below the filtered input-quantization noise.
FRAC_OUT = 12


@dataclass(frozen=True)
class BalanceConfig:
    """Digital balance gains: output = k1 * v_a - k2 * v_b."""

    k1: float = 1000.0
    k2: float = 0.0

    def __post_init__(self):
        if self.k1 <= 0:
            raise InvalidArgument("k1 must be > 0")
        if self.k2 < 0:
            raise InvalidArgument("k2 must be >= 0 (0 disables balancing)")


@dataclass(frozen=True)
class LockinConfig:
    """Demodulation reference and output filter settings.

    phase_offset is in samples. output_rate must divide the sample rate.
    """

    f_m: float = 1e3
    phase_offset: int = 0
    enbw: float = 10.4
    output_rate: float = 200.0
    filter: str = "moving-average"

    def __post_init__(self):
        if self.f_m <= 0:
            raise InvalidArgument("f_m must be > 0")
        if not 0.5 <= self.enbw <= 1000.0:
            raise InvalidArgument("enbw must be within [0.5, 1000] Hz")
        if self.output_rate <= 0:
            raise InvalidArgument("output_rate must be > 0")
        if self.filter != "moving-average":
            raise InvalidArgument("only the moving-average filter exists in v1")

    def window(self, sample_rate: float) -> int:
        """Moving-average length in samples for this ENBW."""
        w = int(round(sample_rate / (2.0 * self.enbw)))
        if w < 4:
            raise EnbwTooWideError(
                f"enbw {self.enbw} Hz needs a window of {w} < 4 samples at "
                f"{sample_rate:.0f} Hz"
            )
        return w


@dataclass(frozen=True)
class FixedPointSpec:
    """Register widths and rounding for the fixed-point emulation."""

    input_bits: int = 14
    accumulator_bits: int = 40
    coefficient_bits: int = 16
    rounding: str = "round-half-even"

    def __post_init__(self):
        if self.input_bits < 2:
            raise InvalidArgument("input_bits must be >= 2")
        if self.coefficient_bits < 8:
            raise InvalidArgument("coefficient_bits must be >= 8")
        if self.accumulator_bits < self.input_bits:
            raise InvalidArgument("accumulator_bits must be >= input_bits")
        if self.rounding not in ("truncate", "round-half-even"):
            raise InvalidArgument("rounding must be 'truncate' or 'round-half-even'")


@dataclass(frozen=True)
class LockinOutput:
    """Demodulated in-phase/quadrature streams in volts."""

    rate: float
    x: np.ndarray
    y: np.ndarray
    enbw: float
    path: str  # "float" or "fixed"

    def __len__(self):
        return len(self.x)

    def times(self) -> np.ndarray:
        return (np.arange(len(self.x)) + 1) / self.rate


@dataclass(frozen=True)
class FixedPointReport:
    """Deviation of the fixed-point path from the float path on one input."""

    max_deviation: float  # volts
    rms_deviation: float  # volts
    equiv_noise_density: float  # volts/sqrt(Hz), rms/sqrt(enbw)
    input_lsb: float  # volts
    window: int
    coefficient: int
    shift: int


def balance(ts: DualTimeSeries, cfg: BalanceConfig) -> np.ndarray:
    """Balanced stream y[n] = k1 * v_a[n] - k2 * v_b[n] in volts."""
    out = cfg.k1 * ts.volts_a()
    if cfg.k2 != 0.0:
        out -= cfg.k2 * ts.volts_b()
    return out


def _balance_moments(ts: DualTimeSeries):
    va = ts.volts_a()
    vb = ts.volts_b()
    var_a = float(np.var(va))
    var_b = float(np.var(vb))
    cov = float(np.mean((va - va.mean()) * (vb - vb.mean())))
    return var_a, var_b, cov


def tune_balance(ts: DualTimeSeries, k1_fixed: float = 1000.0) -> BalanceConfig:
    """Find k2 minimizing the variance of the balanced stream.

    Golden-section search over the (exactly quadratic) variance
    var(k1 v_a - k2 v_b) using precomputed second moments, restricted to
    k2 >= 0. Cross-checked against the closed form
    k2* = k1 * cov(v_a, v_b) / var(v_b), which must agree within 1%.
    The record should be taken at an off-resonant MW frequency so channel A
    carries no signal.
    """
    if k1_fixed <= 0:
        raise InvalidArgument("k1_fixed must be > 0")
    var_a, var_b, cov = _balance_moments(ts)
    if var_b == 0.0:
        raise DegenerateReferenceError("channel B has zero variance")
    k2_closed = k1_fixed * cov / var_b

    def variance(k2: float) -> float:
        return k1_fixed**2 * var_a - 2.0 * k1_fixed * k2 * cov + k2**2 * var_b

    lo, hi = 0.0, max(2.0 * k2_closed, 1e-9 * k1_fixed)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = variance(c), variance(d)
    while hi - lo > 1e-12 * max(1.0, abs(k2_closed)):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = variance(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = variance(d)
    k2_golden = (lo + hi) / 2.0

    if k2_closed > 0 and abs(k2_golden - k2_closed) > 0.01 * k2_closed:
        raise RuntimeError(
            f"golden-section k2 {k2_golden:.6e} disagrees with closed form "
            f"{k2_closed:.6e} by more than 1%"
        )
    return BalanceConfig(k1=k1_fixed, k2=max(k2_golden, 0.0))


def _ref_signs(n0: int, n1: int, f_m: float, sample_rate: float, phase_offset: int,
               quadrature: bool) -> np.ndarray:
    """+/-1 reference over sample indices [n0, n1).

    In-phase reference is the FSK square wave; the quadrature one lags it by
    a quarter period. Exact integer arithmetic is used whenever the sample
    rate is an integer multiple of 2 * f_m.
    """
    n = np.arange(n0, n1, dtype=np.int64) - int(phase_offset)
    period = sample_rate / f_m
    if period == np.floor(period) and (period / 2.0) == np.floor(period / 2.0):
        per = np.int64(period)
        half = per // 2
        pos = n % per
        if not quadrature:
            high = pos < half
        else:
            high = (2 * pos >= half) & (2 * pos < 3 * half)
        return np.where(high, 1.0, -1.0)
    frac = (n * (f_m / sample_rate)) % 1.0
    if quadrature:
        frac = (frac - 0.25) % 1.0
    return np.where(frac < 0.5, 1.0, -1.0)


def _decimated_window_sums(stream, mix_fn, window: int, stride: int, n_out: int,
                           dtype=np.float64, track_extrema: bool = False):
    """Sliding-window sums of mix_fn(chunk) sampled every ``stride`` samples.

    Window k covers [e_k - window, e_k) with e_k = (k+1) * stride; samples
    before the stream count as zero. Single streaming pass, O(chunk) memory.
    When ``track_extrema`` the extreme sliding sum over every sample position
    is also returned (used for fixed-point accumulator checks).
    """
    n = len(stream)
    edges = (np.arange(1, n_out + 1, dtype=np.int64)) * stride
    starts = np.maximum(edges - window, 0)
    # prefix values needed, sorted with duplicates removed
    need = np.unique(np.concatenate([starts, edges]))
    got = np.zeros(len(need), dtype=dtype)
    carry = dtype(0)
    hist = np.zeros(window, dtype=dtype)  # prefix values for the last `window` positions
    extreme = 0
    pos = 0  # index into `need`
    # prefix[0] = 0 handled by initialization of `got` and `carry`
    while pos < len(need) and need[pos] == 0:
        pos += 1
    for a in range(0, n, _CHUNK):
        b = min(a + _CHUNK, n)
        mixed = mix_fn(a, b)
        cs = np.cumsum(mixed, dtype=dtype)
        prefix = carry + cs
        hi = pos
        while hi < len(need) and need[hi] <= b:
            hi += 1
        if hi > pos:
            got[pos:hi] = prefix[need[pos:hi] - a - 1]
            pos = hi
        if track_extrema:
            allp = np.concatenate([hist, prefix])
            sliding = allp[window:] - allp[: b - a]
            m = int(np.max(np.abs(sliding)))
            extreme = max(extreme, m)
            hist = allp[-window:]
        carry = prefix[-1]
    lookup = {int(p): got[i] for i, p in enumerate(need)}
    lookup[0] = dtype(0)
    sums = np.array([lookup[int(e)] - lookup[int(s)] for e, s in zip(edges, starts)])
    if track_extrema:
        return sums, extreme
    return sums


def _demod_layout(n: int, cfg: LockinConfig, sample_rate: float):
    window = cfg.window(sample_rate)
    if n < 2 * window:
        raise InvalidArgument(f"stream length {n} < 2 * window = {2 * window}")
    stride_f = sample_rate / cfg.output_rate
    if abs(stride_f - round(stride_f)) > 1e-9 or round(stride_f) < 1:
        raise InvalidArgument(
            f"output_rate {cfg.output_rate} Hz must divide the sample rate "
            f"{sample_rate:.0f} Hz"
        )
    stride = int(round(stride_f))
    n_out = n // stride
    if n_out < 1:
        raise InvalidArgument("stream shorter than one output sample")
    return window, stride, n_out


def demodulate(stream, cfg: LockinConfig, sample_rate: float) -> LockinOutput:
    """Square-wave lock-in demodulation of a voltage stream, float path.

    Returns in-phase (x) and quadrature (y) outputs decimated to
    cfg.output_rate. The CLI layer ensures sample_rate is an integer multiple
    of 2 * f_m so the reference is sample-aligned.
    """
    stream = np.asarray(stream, dtype=float)
    window, stride, n_out = _demod_layout(len(stream), cfg, sample_rate)

    def mix(quadrature):
        def fn(a, b):
            return stream[a:b] * _ref_signs(
                a, b, cfg.f_m, sample_rate, cfg.phase_offset, quadrature
            )

        return fn

    x = _decimated_window_sums(stream, mix(False), window, stride, n_out) / window
    y = _decimated_window_sums(stream, mix(True), window, stride, n_out) / window
    return LockinOutput(rate=cfg.output_rate, x=x, y=y, enbw=cfg.enbw, path="float")


def _coefficient_for_window(window: int, coefficient_bits: int):
    """Integer c and shift s with c = round(2^s / window), c using the full
    coefficient width: 2^(cb-1) <= c < 2^cb."""
    s = coefficient_bits - 1
    while int(round(2**s / window)) < 2 ** (coefficient_bits - 1):
        s += 1
    c = int(round(2**s / window))
    if c >= 2**coefficient_bits:
        c //= 2
        s -= 1
    return c, s


def _shift_round(values: np.ndarray, shift: int, mode: str) -> np.ndarray:
    """Arithmetic right shift with the configured rounding mode."""
    if shift <= 0:
        return values << (-shift)
    if mode == "truncate":
        return values >> shift
    half = np.int64(1) << (shift - 1)
    mask = (np.int64(1) << shift) - 1
    base = (values + half) >> shift
    ties = (values & mask) == half
    base = np.where(ties & ((base & 1) == 1), base - 1, base)
    return base


def demodulate_fixed(
    stream,
    cfg: LockinConfig,
    fx: FixedPointSpec,
    sample_rate: float,
    input_range: float,
):
    """Lock-in demodulation in scaled-integer arithmetic.

    The stream is quantized to signed ``input_bits`` integers with full range
    +/- input_range volts (LSB = input_range / 2^(input_bits-1)), mixed with
    the +/-1 reference, accumulated over the moving-average window, then
    scaled by an integer reciprocal coefficient of ``coefficient_bits`` and
    rounded per ``fx.rounding``. Outputs keep FRAC_OUT fractional bits.

    Returns (LockinOutput, FixedPointReport). Raises OverflowStageError if
    any intermediate exceeds the configured accumulator width; wraparound is
    never silent.
    """
    if input_range <= 0:
        raise InvalidArgument("input_range must be > 0")
    stream = np.asarray(stream, dtype=float)
    window, stride, n_out = _demod_layout(len(stream), cfg, sample_rate)

    lsb = input_range / 2 ** (fx.input_bits - 1)
    code_min = -(2 ** (fx.input_bits - 1))
    code_max = 2 ** (fx.input_bits - 1) - 1

    def mix(quadrature):
        def fn(a, b):
            codes = np.clip(np.rint(stream[a:b] / lsb), code_min, code_max).astype(np.int64)
            ref = _ref_signs(a, b, cfg.f_m, sample_rate, cfg.phase_offset, quadrature)
            return codes * ref.astype(np.int64)

        return fn

    acc_limit = 2 ** (fx.accumulator_bits - 1) - 1
    sums = {}
    for quad in (False, True):
        wsums, extreme = _decimated_window_sums(
            stream, mix(quad), window, stride, n_out, dtype=np.int64, track_extrema=True
        )
        if extreme > acc_limit:
            raise OverflowStageError(
                "accumulator",
                f"|sum| = {extreme} exceeds {fx.accumulator_bits}-bit accumulator "
                f"limit {acc_limit}",
            )
        sums[quad] = wsums

    coeff, s = _coefficient_for_window(window, fx.coefficient_bits)
    shift = s - FRAC_OUT
    out = {}
    for quad in (False, True):
        prod = sums[quad] * np.int64(coeff)
        # int64 emulation capacity for the product register
        if np.any(np.abs(sums[quad]) > (2**62) // coeff):
            raise OverflowStageError("scaling", "product exceeds 63-bit emulation range")
        out[quad] = _shift_round(prod, shift, fx.rounding).astype(float) * (
            lsb / 2**FRAC_OUT
        )

    fixed = LockinOutput(rate=cfg.output_rate, x=out[False], y=out[True], enbw=cfg.enbw,
                         path="fixed")
    ref = demodulate(stream, cfg, sample_rate)
    dev = np.concatenate([fixed.x - ref.x, fixed.y - ref.y])
    rms = float(np.sqrt(np.mean(dev**2)))
    report = FixedPointReport(
        max_deviation=float(np.max(np.abs(dev))),
        rms_deviation=rms,
        equiv_noise_density=rms / np.sqrt(cfg.enbw),
        input_lsb=lsb,
        window=window,
        coefficient=coeff,
        shift=shift,
    )
    return fixed, report


def odmr_integrate(
    sweeps,
    plan: SweepPlan,
    cfg: BalanceConfig | None = None,
) -> OdmrCurve:
    """Plain ODMR integrator: per-point mean of the balanced stream.

    ``sweeps`` is one DualTimeSeries per sweep point. The curve is normalized
    by the largest point mean (the off-resonant baseline), so values are <= 1.
    """
    if len(sweeps) != plan.points:
        raise InvalidArgument(
            f"{len(sweeps)} series supplied for a {plan.points}-point plan"
        )
    cfg = cfg or BalanceConfig(k1=1.0, k2=0.0)
    means = np.array([float(np.mean(balance(ts, cfg))) for ts in sweeps])
    baseline = means.max()
    if baseline <= 0:
        raise InvalidArgument("non-positive baseline; cannot normalize")
    return OdmrCurve(plan.frequencies, means / baseline)
