"""NV ensemble spin-resonance model: transition frequencies and optical lineshapes.

Conventions: frequencies in Hz, magnetic fields in tesla, microwave power in
dBm. Photoluminescence is normalized so the off-resonant baseline is 1.0.
All functions here are pure and deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

# Electron gyromagnetic ratio of the NV ground state, Hz/T.
GAMMA_E = 28.024e9

# Hyperfine splitting from the 14N nuclear spin, Hz.
A_HYPERFINE = 2.158e6

# Zero-field splitting of the ground-state triplet, Hz.
D_ZFS = 2.87e9

AXIS_LABELS = ("alpha", "beta", "psi", "omega")

# The four [111] symmetry axes of the diamond lattice, unit rows.
NV_AXES = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]
) / np.sqrt(3.0)

# Linear Zeeman model only holds well below this field magnitude.
MAX_FIELD_T = 0.01


def magnetic_field(b_xyz) -> np.ndarray:
    """Validate and return a 3-vector magnetic field in tesla (crystal frame)."""
    b = np.asarray(b_xyz, dtype=float)
    if b.shape != (3,):
        raise InvalidArgument(f"field must be a 3-vector, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise InvalidArgument("field components must be finite")
    if np.linalg.norm(b) >= MAX_FIELD_T:
        raise InvalidArgument(
            f"|B| = {np.linalg.norm(b):.3e} T exceeds the linear-Zeeman regime "
            f"(< {MAX_FIELD_T} T)"
        )
    return b


@dataclass(frozen=True)
class SpinSystemParams:
    """Physical constants and lineshape parameters of the NV ensemble.

    Parameters
    ----------
    d_zfs : float
        Zero-field splitting, Hz.
    gamma_e : float
        Electron gyromagnetic ratio, Hz/T.
    a_hf : float
        Hyperfine splitting between m_I components, Hz.
    hwhm : float
        Half width at half maximum of a single hyperfine line, Hz
        (low-power limit, before saturation broadening).
    contrast : float
        Fractional fluorescence dip of a single fully saturated line.
    p_sat : float
        Microwave saturation power for the one-parameter power model, dBm.
    """

    d_zfs: float = D_ZFS
    gamma_e: float = GAMMA_E
    a_hf: float = A_HYPERFINE
    hwhm: float = 617e3
    contrast: float = 0.0153
    p_sat: float = 10.0

    def __post_init__(self):
        if not 2.8e9 <= self.d_zfs <= 2.94e9:
            raise InvalidArgument(f"d_zfs {self.d_zfs:.4e} outside [2.8e9, 2.94e9] Hz")
        if self.a_hf <= 0:
            raise InvalidArgument("a_hf must be > 0")
        if self.hwhm <= 0:
            raise InvalidArgument("hwhm must be > 0")
        if not 0 < self.contrast < 1:
            raise InvalidArgument("contrast must be in (0, 1)")


@dataclass(frozen=True)
class ResonanceLine:
    """One spin transition: axis label, Zeeman branch sign, m_I, center in Hz."""

    axis: str
    branch: int  # +1 or -1
    m_i: int  # -1, 0, +1
    center: float


@dataclass(frozen=True)
class ResonanceSet:
    """The 24 transition lines (4 axes x 2 branches x 3 hyperfine components)."""

    lines: tuple

    def __post_init__(self):
        if len(self.lines) != 24:
            raise InvalidArgument(f"expected 24 lines, got {len(self.lines)}")

    @property
    def centers(self) -> np.ndarray:
        return np.array([ln.center for ln in self.lines])

    def for_axis(self, axis: str):
        return [ln for ln in self.lines if ln.axis == axis]


@dataclass(frozen=True)
class FrequencyCurve:
    """Sampled curve over a strictly increasing frequency grid (Hz)."""

    freqs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.size == 0:
            raise InvalidArgument("empty frequency grid")
        if f.size != v.size:
            raise InvalidArgument("freqs and values must have equal length")
        if f.size > 1 and not np.all(np.diff(f) > 0):
            raise InvalidArgument("frequency grid must be strictly increasing")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "values", v)


class OdmrCurve(FrequencyCurve):
    """Normalized photoluminescence vs probe frequency (off-resonant baseline 1.0)."""


class DispersiveCurve(FrequencyCurve):
    """Lock-in (dispersive) signal vs center frequency, dimensionless."""


def project_field(b_xyz, axes: np.ndarray = NV_AXES) -> np.ndarray:
    """Project a field vector onto the four NV axes.

    Returns the four signed projections B_i = B . u_i in tesla. Consumers
    that need Zeeman splittings use |B_i|.
    """
    b = magnetic_field(b_xyz)
    return axes @ b


def transition_frequencies(p: SpinSystemParams, b_xyz) -> ResonanceSet:
    """All 24 transition-line centers for the given field.

    center(axis, branch, m_I) = d_zfs + branch * gamma_e * |B_i| + m_I * a_hf.
    Lines are sorted by center frequency with a stable tie-break by
    (axis index, branch, m_I).
    """
    proj = project_field(b_xyz)
    lines = []
    for i, label in enumerate(AXIS_LABELS):
        zeeman = p.gamma_e * abs(proj[i])
        for branch in (-1, +1):
            for m_i in (-1, 0, +1):
                center = p.d_zfs + branch * zeeman + m_i * p.a_hf
                lines.append((center, i, branch, m_i, label))
    lines.sort(key=lambda t: (t[0], t[1], t[2], t[3]))
    return ResonanceSet(
        tuple(ResonanceLine(axis=lb, branch=br, m_i=mi, center=c) for c, _, br, mi, lb in lines)
    )


def lorentzian(nu, nu0: float, w: float):
    """Unit-height Lorentzian w^2 / ((nu - nu0)^2 + w^2) with HWHM w."""
    d = np.asarray(nu, dtype=float) - nu0
    return w * w / (d * d + w * w)


def saturation_factors(p: SpinSystemParams, mw_power: float):
    """Effective per-line contrast and HWHM under the one-parameter power model.

    s = 10^((P - p_sat)/10); C_eff = contrast * s/(1+s); w_eff = hwhm * sqrt(1+s).
    """
    s = 10.0 ** ((mw_power - p.p_sat) / 10.0)
    c_eff = p.contrast * s / (1.0 + s)
    w_eff = p.hwhm * np.sqrt(1.0 + s)
    return c_eff, w_eff


def spectrum_values(
    p: SpinSystemParams,
    r: ResonanceSet,
    freqs,
    hs_on: bool = False,
    mw_power: float = 10.0,
    comb_spacing: float | None = None,
) -> np.ndarray:
    """Normalized PL at the given probe frequencies.

    With ``hs_on`` the probe is a three-tooth comb {nu - A, nu, nu + A}
    (A = ``comb_spacing``, default the hyperfine splitting), so each line is
    hit by every tooth. Values are clipped to (0, 1].
    """
    nu = np.asarray(freqs, dtype=float)
    if nu.size == 0:
        raise InvalidArgument("empty frequency grid")
    c_eff, w_eff = saturation_factors(p, mw_power)
    if hs_on:
        a = p.a_hf if comb_spacing is None else comb_spacing
        offsets = (-a, 0.0, a)
    else:
        offsets = (0.0,)
    dip = np.zeros_like(nu, dtype=float)
    for ln in r.lines:
        for off in offsets:
            dip += lorentzian(nu + off, ln.center, w_eff)
    return np.clip(1.0 - c_eff * dip, 1e-12, 1.0)


def odmr_spectrum(
    p: SpinSystemParams,
    r: ResonanceSet,
    grid,
    hs_on: bool = False,
    mw_power: float = 10.0,
    comb_spacing: float | None = None,
) -> OdmrCurve:
    """CW-ODMR spectrum over a strictly increasing frequency grid."""
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise InvalidArgument("empty frequency grid")
    if g.size > 1 and not np.all(np.diff(g) > 0):
        raise InvalidArgument("frequency grid must be strictly increasing")
    return OdmrCurve(g, spectrum_values(p, r, g, hs_on, mw_power, comb_spacing))


def lockin_lineshape(
    p: SpinSystemParams,
    r: ResonanceSet,
    grid,
    hs_on: bool = False,
    mw_power: float = 10.0,
    depth: float = 400e3,
    comb_spacing: float | None = None,
) -> DispersiveCurve:
    """First-harmonic lock-in lineshape for square-wave FSK of the given depth.

    L(nu) = [S(nu + depth/2) - S(nu - depth/2)] / 2. Dimensionless, odd about
    each isolated line center, zero-crossing at the center.
    """
    if depth <= 0:
        raise InvalidArgument("depth must be > 0")
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise InvalidArgument("empty frequency grid")
    if g.size > 1 and not np.all(np.diff(g) > 0):
        raise InvalidArgument("frequency grid must be strictly increasing")
    hi = spectrum_values(p, r, g + depth / 2.0, hs_on, mw_power, comb_spacing)
    lo = spectrum_values(p, r, g - depth / 2.0, hs_on, mw_power, comb_spacing)
    return DispersiveCurve(g, (hi - lo) / 2.0)
