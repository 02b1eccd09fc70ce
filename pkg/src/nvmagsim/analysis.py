"""Extraction of physical quantities: line fits, slopes, sensitivity, field inversion."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy import signal as sps

from .errors import (
    FitFailedError,
    InvalidArgument,
    NoCrossingError,
    UnderdeterminedError,
)
from .lockin import LockinOutput
from .nvmodel import AXIS_LABELS, NV_AXES, FrequencyCurve, SpinSystemParams

# Residual above which a field reconstruction is flagged inconsistent, Hz.
RESIDUAL_WARN_HZ = 50e3

# Lorentzian-optimum prefactor of the CW shot-noise sensitivity formula.
SHOT_PREFACTOR = 4.0 / (3.0 * np.sqrt(3.0))


@dataclass(frozen=True)
class LineFit:
    """Fitted parameters of one Lorentzian dip."""

    center: float
    hwhm: float
    contrast: float


@dataclass(frozen=True)
class SlopeFit:
    """Linear fit around a dispersive zero crossing."""

    slope: float  # volts/Hz (or curve units/Hz)
    zero_crossing: float  # Hz
    window: float  # Hz, half width of the fitted span
    residual_rms: float


@dataclass(frozen=True)
class SensitivityReport:
    """Magnetic sensitivity and every factor that produced it.

    eta = noise_rms / (|slope| * gamma_used * sqrt(enbw)), tesla/sqrt(Hz).
    """

    eta: float
    noise_rms: float
    slope: float
    enbw: float
    gamma_used: float
    mode: str  # "unbalanced" | "balanced" | "electronic"

    def recompute(self) -> float:
        return self.noise_rms / (abs(self.slope) * self.gamma_used * np.sqrt(self.enbw))

    def to_text(self) -> str:
        lines = [
            f"mode: {self.mode}",
            f"eta_tesla_per_sqrthz: {self.eta:.9e}",
            f"noise_rms_volts: {self.noise_rms:.9e}",
            f"slope_volts_per_hz: {self.slope:.9e}",
            f"enbw_hz: {self.enbw:.9e}",
            f"gamma_hz_per_tesla: {self.gamma_used:.9e}",
        ]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ReconstructedField:
    """Least-squares field estimate from the four axis splittings."""

    b_xyz: np.ndarray
    residual_hz: float
    signs: tuple
    inconsistent: bool = False

    def to_text(self) -> str:
        bx, by, bz = self.b_xyz
        lines = [
            f"b_x_tesla: {bx:.9e}",
            f"b_y_tesla: {by:.9e}",
            f"b_z_tesla: {bz:.9e}",
            f"residual_hz: {self.residual_hz:.9e}",
            f"signs: {' '.join('%+d' % s for s in self.signs)}",
            f"inconsistent: {str(self.inconsistent).lower()}",
        ]
        return "\n".join(lines) + "\n"


def _multi_lorentzian(freqs, params):
    """Model b0 - sum_j c_j * w_j^2 / ((nu - nu0_j)^2 + w_j^2).

    params = [b0, nu0_1, w_1, c_1, nu0_2, ...], freqs already shifted so
    centers are small numbers.
    """
    trip = np.asarray(params[1:]).reshape(-1, 3)
    nu0 = trip[:, 0:1]
    w = trip[:, 1:2]
    c = trip[:, 2:3]
    dips = c * w * w / ((freqs[None, :] - nu0) ** 2 + w * w)
    return params[0] - dips.sum(axis=0)


def _fit_lines(curve: FrequencyCurve, inits):
    """Shared multi-Lorentzian least-squares core.

    ``inits`` is a list of LineFit initializers. The baseline is a free
    parameter (initialized at the curve maximum) so normalization residue
    does not bias the centers. Frequencies are fitted relative to the grid
    midpoint for conditioning. Converged when the relative parameter step
    drops below 1e-8 within a 200-iteration budget, else FitFailedError.
    """
    f = curve.freqs
    v = curve.values
    f0 = 0.5 * (f[0] + f[-1])
    fr = f - f0
    span = f[-1] - f[0]
    step = float(np.median(np.diff(f))) if len(f) > 1 else 1.0

    x0 = [float(np.max(v))]
    scale = [max(abs(x0[0]), 1e-3)]
    for ln in inits:
        x0.extend([ln.center - f0, ln.hwhm, ln.contrast])
        scale.extend([max(ln.hwhm, step), max(ln.hwhm, step), max(ln.contrast, 1e-4)])
    x0 = np.asarray(x0)

    n = len(inits)
    lo = np.concatenate([[0.0], np.tile([fr[0] - span, step / 4.0, 0.0], n)])
    hi = np.concatenate([[2.0], np.tile([fr[-1] + span, 2.0 * span, 1.0], n)])
    x0 = np.clip(x0, lo, hi)

    res = optimize.least_squares(
        lambda p: _multi_lorentzian(fr, p) - v,
        x0,
        bounds=(lo, hi),
        x_scale=np.asarray(scale),
        xtol=1e-8,
        ftol=1e-14,
        gtol=None,
        max_nfev=200 * (3 * n + 2),
    )
    if res.status == 0:
        raise FitFailedError(
            "fit did not converge within the iteration budget",
            last_params=res.x,
            residual=float(np.sqrt(np.mean(res.fun**2))),
        )
    fits = [
        LineFit(
            center=float(res.x[j] + f0),
            hwhm=float(res.x[j + 1]),
            contrast=float(res.x[j + 2]),
        )
        for j in range(1, 3 * n + 1, 3)
    ]
    return sorted(fits, key=lambda ln: ln.center)


def fit_lorentzian_centers(curve: FrequencyCurve, inits) -> list:
    """Multi-Lorentzian fit with caller-supplied line initializers."""
    if not inits:
        raise InvalidArgument("at least one line initializer required")
    return _fit_lines(curve, list(inits))


def fit_odmr(curve: FrequencyCurve, n_lines: int):
    """Multi-Lorentzian nonlinear least squares on an ODMR curve.

    Initialized from local-minima detection with a prominence threshold of a
    third of the deepest dip; raises FitFailedError (carrying the last
    iterate and residual when it exists) on non-convergence or when fewer
    than n_lines dips are found.

    Returns a list of LineFit sorted by center frequency.
    """
    if n_lines < 1:
        raise InvalidArgument("n_lines must be >= 1")
    f = curve.freqs
    v = curve.values
    depth = np.max(v) - v
    max_depth = float(np.max(depth))
    if max_depth <= 0:
        raise FitFailedError("flat curve: no local minimum to initialize from")
    peaks, props = sps.find_peaks(depth, prominence=max_depth / 3.0)
    if len(peaks) < n_lines:
        raise FitFailedError(
            f"found {len(peaks)} candidate dips, need {n_lines}",
        )
    order = np.argsort(props["prominences"])[::-1][:n_lines]
    peaks = np.sort(peaks[order])
    widths, _, _, _ = sps.peak_widths(depth, peaks, rel_height=0.5)
    step = float(np.median(np.diff(f)))
    inits = [
        LineFit(
            center=float(f[idx]),
            hwhm=max(float(width) * step / 2.0, step),
            contrast=float(depth[idx]),
        )
        for idx, width in zip(peaks, widths)
    ]
    return _fit_lines(curve, inits)


def fit_slope(curve: FrequencyCurve, around: float, half_window: float) -> SlopeFit:
    """Ordinary least squares around a dispersive zero crossing.

    The crossing nearest ``around`` is located by sign change (searching up
    to +/- 2*half_window, since line overlap can displace it from the nominal
    center), then a line is fitted to all points within +/- half_window of
    the crossing.
    """
    if half_window <= 0:
        raise InvalidArgument("half_window must be > 0")
    f = curve.freqs
    v = curve.values
    sel = np.abs(f - around) <= 2.0 * half_window
    if np.count_nonzero(sel) < 3:
        raise NoCrossingError("fewer than 3 points inside the fit window")
    fi = f[sel]
    vi = v[sel]
    sign_change = np.nonzero(vi[:-1] * vi[1:] <= 0)[0]
    sign_change = sign_change[(vi[sign_change] != 0) | (vi[sign_change + 1] != 0)]
    if len(sign_change) == 0:
        raise NoCrossingError(f"no sign change within {2 * half_window:.3e} Hz of {around:.6e} Hz")
    # crossing estimate by linear interpolation, nearest to `around`
    crossings = []
    for i in sign_change:
        f0, f1, v0, v1 = fi[i], fi[i + 1], vi[i], vi[i + 1]
        crossings.append(f0 if v1 == v0 else f0 - v0 * (f1 - f0) / (v1 - v0))
    x0 = min(crossings, key=lambda c: abs(c - around))

    sel2 = np.abs(f - x0) <= half_window
    fi = f[sel2]
    vi = v[sel2]
    a, b = np.polyfit(fi - x0, vi, 1)
    if a == 0:
        raise NoCrossingError("zero slope at the crossing")
    crossing = x0 - b / a
    resid = vi - (a * (fi - x0) + b)
    return SlopeFit(
        slope=float(a),
        zero_crossing=float(crossing),
        window=float(half_window),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )


def snr_enhancement(
    slope_on: SlopeFit, slope_off: SlopeFit, noise_on: float, noise_off: float
) -> float:
    """( |slope_on| / noise_on ) / ( |slope_off| / noise_off )."""
    if noise_on <= 0 or noise_off <= 0:
        raise InvalidArgument("noise RMS values must be > 0")
    return (abs(slope_on.slope) / noise_on) / (abs(slope_off.slope) / noise_off)


def estimate_sensitivity(
    out: LockinOutput,
    slope: SlopeFit,
    p: SpinSystemParams,
    mode: str = "balanced",
    estimator: str = "msd",
) -> SensitivityReport:
    """Sensitivity from a fixed-frequency demodulated record and a slope.

    ``estimator`` selects the noise statistic: "msd" is the mean-removed
    standard deviation of the in-phase output; "allan" is the two-sample
    (Allan) deviation sqrt(mean(diff(x)^2)/2), insensitive to slow drift.
    Output samples whose moving-average window is not yet full (the settling
    ramp, the first 1/(2*enbw) seconds) are excluded from the statistic.
    """
    if slope.slope == 0:
        raise InvalidArgument("slope must be nonzero")
    if estimator not in ("msd", "allan"):
        raise InvalidArgument("estimator must be 'msd' or 'allan'")
    n_required = 30.0 / out.enbw * out.rate
    if len(out.x) < n_required:
        raise InvalidArgument(
            f"record too short: {len(out.x)} samples < 30/enbw = {n_required:.0f}"
        )
    n_settle = int(np.ceil(out.rate / (2.0 * out.enbw))) + 1
    x = out.x[n_settle:]
    if estimator == "msd":
        noise_rms = float(np.std(x))
    else:
        noise_rms = float(np.sqrt(np.mean(np.diff(x) ** 2) / 2.0))
    eta = noise_rms / (abs(slope.slope) * p.gamma_e * np.sqrt(out.enbw))
    return SensitivityReport(
        eta=float(eta),
        noise_rms=noise_rms,
        slope=slope.slope,
        enbw=out.enbw,
        gamma_used=p.gamma_e,
        mode=mode,
    )


def shot_noise_limit(
    hwhm: float, contrast: float, photon_rate: float, gamma: float
) -> float:
    """Photon-shot-noise-limited CW sensitivity, tesla/sqrt(Hz).

    eta = (4 / (3*sqrt(3))) * (2 * hwhm) / (gamma * contrast * sqrt(photon_rate)),
    the Lorentzian-optimum formula with FWHM = 2 * hwhm.
    """
    for name, val in (
        ("hwhm", hwhm),
        ("contrast", contrast),
        ("photon_rate", photon_rate),
        ("gamma", gamma),
    ):
        if val <= 0:
            raise InvalidArgument(f"{name} must be > 0")
    return SHOT_PREFACTOR * (2.0 * hwhm) / (gamma * contrast * np.sqrt(photon_rate))


def reconstruct_field(splittings, signs, p: SpinSystemParams) -> ReconstructedField:
    """Least-squares inversion of the four axis splittings to a field vector.

    ``splittings`` maps axis label to the Zeeman branch separation
    2 * gamma_e * |B_i| in Hz; ``signs`` maps axis label to the projection
    sign (+1/-1), known from the bias-field orientation. Solves M b = s with
    M the 4x3 axis matrix and s_i = sign_i * splitting_i / (2 * gamma_e).
    """
    missing = [lb for lb in AXIS_LABELS if lb not in splittings]
    if missing:
        raise UnderdeterminedError(f"missing axis splittings: {', '.join(missing)}")
    if any(lb not in signs for lb in AXIS_LABELS):
        raise UnderdeterminedError("signs must be supplied for all four axes")
    sign_tuple = tuple(int(np.sign(signs[lb])) or 1 for lb in AXIS_LABELS)
    s = np.array(
        [sign_tuple[i] * float(splittings[lb]) / (2.0 * p.gamma_e) for i, lb in enumerate(AXIS_LABELS)]
    )
    if np.any(np.array([splittings[lb] for lb in AXIS_LABELS]) < 0):
        raise InvalidArgument("splittings must be >= 0")
    b, _, _, _ = np.linalg.lstsq(NV_AXES, s, rcond=None)
    residual_hz = float(
        np.sqrt(np.mean((NV_AXES @ b - s) ** 2)) * 2.0 * p.gamma_e
    )
    inconsistent = residual_hz > RESIDUAL_WARN_HZ
    if inconsistent:
        warnings.warn(
            f"axis splittings inconsistent: residual {residual_hz:.3e} Hz "
            f"> {RESIDUAL_WARN_HZ:.0e} Hz",
            stacklevel=2,
        )
    return ReconstructedField(
        b_xyz=b, residual_hz=residual_hz, signs=sign_tuple, inconsistent=inconsistent
    )
