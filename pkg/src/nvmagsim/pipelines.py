"""Scenario-level measurement procedures built from the core modules.

These functions implement the reproducible experiments the CLI exposes:
ODMR / lock-in sweeps, sensitivity estimation in the three detection modes,
parameter scans, and vector-field reconstruction. Every stochastic step
draws its seed from the scenario seed through ``derive_seed``, so scan
points and sweep points are independent and order-insensitive.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .analysis import (
    SlopeFit,
    estimate_sensitivity,
    fit_slope,
    reconstruct_field,
)
from .errors import ConfigError, FitFailedError, InvalidArgument
from .lockin import BalanceConfig, balance, demodulate, odmr_integrate, tune_balance
from .lockin import _ref_signs  # sample-aligned reference shared with the demodulator
from .mwcontrol import SweepPlan, make_sweep
from .nvmodel import (
    AXIS_LABELS,
    DispersiveCurve,
    OdmrCurve,
    lorentzian,
    project_field,
    saturation_factors,
)
from .scenario import (
    TAG_CW_HS_OFF,
    TAG_CW_HS_ON,
    TAG_NOISE_RUN,
    TAG_RECON,
    TAG_SCAN,
    TAG_SLOPE,
    TAG_SWEEP_HS_OFF,
    TAG_SWEEP_HS_ON,
    TAG_TUNE,
    Scenario,
    derive_seed,
)
from .sigchain import simulate


def operating_center(scenario: Scenario) -> float:
    """Frequency of the monitored line: m_I = 0, + branch of the axis with the
    smallest nonzero field projection (zero field: the bare zero-field line)."""
    proj = np.abs(project_field(scenario.field))
    nonzero = proj[proj > 1e-12]
    if nonzero.size == 0:
        return scenario.spin.d_zfs
    return scenario.spin.d_zfs + scenario.spin.gamma_e * float(nonzero.min())


# FSK deviation used for CW-style acquisitions (the plain ODMR integrator
# path): small enough to be indistinguishable from a single swept tone.
CW_DEPTH = 1.0


def simulate_point(
    scenario: Scenario,
    center: float,
    seed: int,
    duration: float | None = None,
    hs_on: bool | None = None,
    detector=None,
    depth: float | None = None,
):
    """One simulation run with the MW carrier moved to ``center``."""
    mw = replace(
        scenario.mw,
        center=center,
        hs_on=scenario.mw.hs_on if hs_on is None else hs_on,
        depth=scenario.mw.depth if depth is None else depth,
    )
    return simulate(
        scenario.spin,
        scenario.field,
        mw,
        detector if detector is not None else scenario.detector,
        scenario.noise_with_seed(seed),
        scenario.adc,
        duration if duration is not None else scenario.duration,
    )


def point_lockin_value(stream, f_m: float, sample_rate: float, phase_offset: int = 0):
    """Single-window demodulated (x, y) of one sweep-point record.

    Averages over the largest whole number of FSK periods that fits after
    skipping the first period, so the reference integrates to zero exactly.
    """
    period_f = sample_rate / f_m
    if period_f != np.floor(period_f):
        raise InvalidArgument("sample_rate must be an integer multiple of f_m")
    period = int(period_f)
    n = len(stream)
    win = ((n - period) // period) * period
    if win < period:
        win = (n // period) * period
    if win < period:
        raise InvalidArgument("record shorter than one FSK period")
    seg = np.asarray(stream[n - win :], dtype=float)
    rx = _ref_signs(n - win, n, f_m, sample_rate, phase_offset, False)
    ry = _ref_signs(n - win, n, f_m, sample_rate, phase_offset, True)
    return float(np.mean(seg * rx)), float(np.mean(seg * ry))


def resolve_balance(scenario: Scenario, mode: str = "balanced") -> BalanceConfig:
    """Balance gains for a run: pinned, disabled, or auto-tuned.

    Unbalanced mode forces k2 = 0. Otherwise a pinned k2 wins; with no pin
    and noise present, k2 is tuned on an off-resonant record with a derived
    seed. Noise-free scenarios fall back to k2 = 0 (a constant reference
    carries nothing to tune against).
    """
    if mode == "unbalanced":
        return BalanceConfig(k1=scenario.balance_k1, k2=0.0)
    pinned = scenario.balance_pinned()
    if pinned is not None:
        return pinned
    if scenario.noise_free():
        return BalanceConfig(k1=scenario.balance_k1, k2=0.0)
    dur = min(4.0, scenario.duration)
    dur = max(dur, 10.0 / scenario.mw.f_m)
    ts = simulate_point(
        scenario,
        scenario.off_resonant_center,
        derive_seed(scenario.seed, TAG_TUNE),
        duration=dur,
    )
    return tune_balance(ts, scenario.balance_k1)


def cw_sweep(scenario: Scenario, plan: SweepPlan, hs_on: bool, tag: int,
             bal: BalanceConfig) -> OdmrCurve:
    """Plain (un-modulated) ODMR sweep through the integrator path."""
    series = [
        simulate_point(
            scenario, float(freq), derive_seed(scenario.seed, tag, i),
            duration=plan.dwell, hs_on=hs_on, depth=CW_DEPTH,
        )
        for i, freq in enumerate(plan.frequencies)
    ]
    return odmr_integrate(series, plan, bal)


def lockin_sweep(scenario: Scenario, plan: SweepPlan, hs_on: bool, tag: int,
                 bal: BalanceConfig) -> DispersiveCurve:
    """FSK-modulated sweep: per-point single-window lock-in X in volts."""
    xs = np.empty(plan.points)
    for i, freq in enumerate(plan.frequencies):
        ts = simulate_point(
            scenario, float(freq), derive_seed(scenario.seed, tag, i),
            duration=plan.dwell, hs_on=hs_on,
        )
        stream = balance(ts, bal)
        xs[i], _ = point_lockin_value(
            stream, scenario.mw.f_m, scenario.adc.sample_rate,
            scenario.lockin.phase_offset,
        )
    return DispersiveCurve(plan.frequencies, xs)


def slope_from_sweep(
    scenario: Scenario,
    bal: BalanceConfig,
    hs_on: bool | None = None,
    points: int = 25,
) -> SlopeFit:
    """Measured lock-in slope at the operating line, volts per Hz.

    Runs a short sweep of ``points`` across +/- depth around the line and
    fits the zero crossing the way the hardware procedure does.
    """
    center = operating_center(scenario)
    depth = scenario.mw.depth
    plan = make_sweep(center - depth, center + depth, points, scenario.sweep.dwell)
    xs = np.empty(plan.points)
    for i, freq in enumerate(plan.frequencies):
        ts = simulate_point(
            scenario, float(freq), derive_seed(scenario.seed, TAG_SLOPE, i),
            duration=plan.dwell, hs_on=hs_on,
        )
        stream = balance(ts, bal)
        xs[i], _ = point_lockin_value(
            stream, scenario.mw.f_m, scenario.adc.sample_rate,
            scenario.lockin.phase_offset,
        )
    curve = DispersiveCurve(plan.frequencies, xs)
    return fit_slope(curve, around=center, half_window=depth / 2.0)


def sensitivity_run(scenario: Scenario, mode: str):
    """Full sensitivity estimate in one detection mode.

    mode "unbalanced": k2 = 0. "balanced": pinned or auto-tuned k2.
    "electronic": same gains as balanced but the laser off (both optical
    powers zero), leaving electronic and quantization noise only.

    Returns (SensitivityReport, LockinOutput, SlopeFit, BalanceConfig).
    """
    if mode not in ("unbalanced", "balanced", "electronic"):
        raise InvalidArgument(f"unknown sensitivity mode '{mode}'")
    bal = resolve_balance(scenario, "unbalanced" if mode == "unbalanced" else "balanced")
    slope = slope_from_sweep(scenario, bal)

    detector = scenario.detector
    if mode == "electronic":
        detector = replace(detector, fluor_power=0.0, green_power=0.0)
    ts = simulate_point(
        scenario,
        scenario.off_resonant_center,
        derive_seed(scenario.seed, TAG_NOISE_RUN),
        detector=detector,
    )
    stream = balance(ts, bal)
    out = demodulate(stream, scenario.lockin, scenario.adc.sample_rate)
    report = estimate_sensitivity(out, slope, scenario.spin, mode=mode)
    return report, out, slope, bal


def sweep_odmr_run(scenario: Scenario):
    """The four sweep curves (spectrum and lock-in, hs off/on) plus slope fits.

    The spectra come from CW acquisitions through the integrator path, the
    dispersive curves from FSK-modulated acquisitions, the way the hardware
    records them separately. Returns a dict with curves, SlopeFit for both
    hs modes, and their ratio.
    """
    plan = scenario.sweep.plan()
    bal = resolve_balance(scenario)
    # spectra are normalized PL displays: channel A only, so the baseline
    # stays positive whatever the sweep window covers
    bal_cw = BalanceConfig(k1=scenario.balance_k1, k2=0.0)
    spec_off = cw_sweep(scenario, plan, False, TAG_CW_HS_OFF, bal_cw)
    spec_on = cw_sweep(scenario, plan, True, TAG_CW_HS_ON, bal_cw)
    lock_off = lockin_sweep(scenario, plan, False, TAG_SWEEP_HS_OFF, bal)
    lock_on = lockin_sweep(scenario, plan, True, TAG_SWEEP_HS_ON, bal)
    center = operating_center(scenario)
    half = scenario.mw.depth / 2.0
    fit_off = fit_slope(lock_off, around=center, half_window=half)
    fit_on = fit_slope(lock_on, around=center, half_window=half)
    return {
        "plan": plan,
        "balance": bal,
        "spectrum_hs_off": spec_off,
        "spectrum_hs_on": spec_on,
        "lockin_hs_off": lock_off,
        "lockin_hs_on": lock_on,
        "slope_hs_off": fit_off,
        "slope_hs_on": fit_on,
        "slope_ratio": abs(fit_on.slope) / abs(fit_off.slope),
    }


_SCAN_AXES = ("f_m", "power", "depth", "enbw")


def _scan_scenario(scenario: Scenario, axis: str, value: float, index: int) -> Scenario:
    seed_i = derive_seed(scenario.seed, TAG_SCAN, index)
    if axis == "f_m":
        sr = scenario.adc.sample_rate
        ratio = sr / (2.0 * value)
        if abs(ratio - round(ratio)) > 1e-9 or sr <= 20.0 * value:
            raise ConfigError(
                "scan.f_m",
                f"grid point {value:g} Hz incompatible with sample rate {sr:.0f} Hz",
            )
        mw = replace(scenario.mw, f_m=value)
        lockin = replace(scenario.lockin, f_m=value)
        dwell = scenario.sweep.dwell
        periods = dwell * value
        if abs(periods - round(periods)) > 1e-9 or periods < 10:
            dwell = max(10.0, np.ceil(10.0 * value * dwell) / 10.0) / value  # whole periods
            dwell = np.ceil(dwell * value) / value
        sweep = replace(scenario.sweep, dwell=float(dwell))
        return replace(scenario, seed=seed_i, mw=mw, lockin=lockin, sweep=sweep)
    if axis == "power":
        return replace(scenario, seed=seed_i, mw=replace(scenario.mw, power=value))
    if axis == "depth":
        return replace(scenario, seed=seed_i, mw=replace(scenario.mw, depth=value))
    if axis == "enbw":
        return replace(scenario, seed=seed_i, lockin=replace(scenario.lockin, enbw=value))
    raise InvalidArgument(f"scan axis must be one of {_SCAN_AXES}")


def param_scan(scenario: Scenario, axis: str, grid, threads: int = 1):
    """Sensitivity (balanced mode) at every grid point of one parameter.

    Points are independent runs with per-point derived seeds; ``threads``
    only changes wall time, never results.
    """
    if axis not in _SCAN_AXES:
        raise InvalidArgument(f"scan axis must be one of {_SCAN_AXES}")
    grid = [float(v) for v in grid]
    if not grid:
        raise InvalidArgument("empty scan grid")
    scens = [_scan_scenario(scenario, axis, v, i) for i, v in enumerate(grid)]

    def one(s):
        report, _, _, _ = sensitivity_run(s, "balanced")
        return report

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, scens))
    else:
        reports = [one(s) for s in scens]
    return list(zip(grid, reports))


def _branch_groups(scenario: Scenario, tol: float):
    """Cluster the 8 (axis, branch) m_I=0 centers into coincidence groups.

    Returns (group_center_inits, membership) where membership maps each
    (axis, branch) pair to its group index.
    """
    proj = project_field(scenario.field)
    spin = scenario.spin
    pairs = []
    for i, label in enumerate(AXIS_LABELS):
        zeeman = spin.gamma_e * abs(proj[i])
        for branch in (-1, +1):
            pairs.append(((label, branch), spin.d_zfs + branch * zeeman))
    pairs.sort(key=lambda kv: kv[1])
    groups = [[pairs[0]]]
    for key, center in pairs[1:]:
        if center - groups[-1][-1][1] <= tol:
            groups[-1].append((key, center))
        else:
            groups.append([(key, center)])
    inits = [float(np.mean([c for _, c in g])) for g in groups]
    membership = {}
    for gi, g in enumerate(groups):
        for key, _ in g:
            membership[key] = gi
    multiplicity = [len(g) for g in groups]
    return inits, membership, multiplicity


def _fit_branch_centers(curve: OdmrCurve, spin, center_inits, multiplicity,
                        amp_unit_init, w_init):
    """Least squares of hyperfine-triplet groups with one shared linewidth.

    Model: b0 - amp * sum_g mult_g * sum_m L(nu; c_g + m*A, w). Every line
    carries the same physical contrast, so a single amplitude parameter
    (scaled by each group's line count) is exact for the simulated chain and
    keeps unresolved branch pairs from trading amplitude. Noiseless sweeps
    recover the branch centers to solver precision.
    """
    from scipy import optimize

    f = curve.freqs
    v = curve.values
    f0 = 0.5 * (f[0] + f[-1])
    fr = f - f0
    span = f[-1] - f[0]
    n_g = len(center_inits)
    a_hf = spin.a_hf
    m_off = np.array([-a_hf, 0.0, a_hf])
    mult = np.asarray(multiplicity, dtype=float)

    # balanced sweeps suppress the baseline, so normalized dip amplitudes can
    # exceed 1 by a large factor; cap by the curve's dynamic range
    amp_cap = max(4.0 * (np.max(v) - np.min(v)), 2.0)
    x0 = np.concatenate(
        [[float(np.max(v)), w_init, amp_unit_init], np.asarray(center_inits) - f0]
    )
    lo = np.concatenate([[-amp_cap, w_init / 20.0, 0.0], np.full(n_g, fr[0])])
    hi = np.concatenate([[amp_cap, span, amp_cap], np.full(n_g, fr[-1])])
    x0 = np.clip(x0, lo, hi)
    scale = np.concatenate(
        [[1.0, w_init, max(amp_unit_init, 1e-4)], np.full(n_g, w_init)]
    )

    def residuals(p):
        b0, w, amp = p[0], p[1], p[2]
        centers = p[3:]
        d = fr[None, None, :] - (centers[:, None] + m_off[None, :])[:, :, None]
        per_group = (w * w / (d * d + w * w)).sum(axis=1)  # (groups, freqs)
        return b0 - amp * (mult[:, None] * per_group).sum(axis=0) - v

    res = optimize.least_squares(
        residuals,
        x0,
        bounds=(lo, hi),
        x_scale=scale,
        xtol=1e-10,
        ftol=1e-14,
        gtol=None,
        max_nfev=400 * (n_g + 3),
    )
    if res.status == 0:
        raise FitFailedError(
            "branch-center fit did not converge",
            last_params=res.x,
            residual=float(np.sqrt(np.mean(res.fun**2))),
        )
    return res.x[3:] + f0


def reconstruct_run(scenario: Scenario):
    """Vector-field reconstruction through the full simulated chain.

    One wide CW ODMR sweep covers all 24 lines; a model fit with the
    hyperfine triplets tied to their branch centers (exactly coincident
    branches collapsed, one shared linewidth) recovers the centers; per-axis
    splittings feed the least-squares inversion. Projection signs come from
    the known bias-field orientation.
    """
    spin = scenario.spin
    bal = resolve_balance(scenario)
    det = scenario.detector
    baseline_pred = (
        bal.k1 * det.fluor_power * det.responsivity * det.tia_gain_a
        - bal.k2 * det.green_power * det.responsivity * det.tia_gain_b
    )
    if baseline_pred <= 0.02 * bal.k1 * det.fluor_power * det.responsivity * det.tia_gain_a:
        # balance would null (or invert) the off-resonant level; the
        # normalized integrator needs a positive baseline
        bal = BalanceConfig(k1=scenario.balance_k1, k2=0.0)
    _, w_eff = saturation_factors(spin, scenario.mw.power)
    inits, membership, multiplicity = _branch_groups(scenario, tol=spin.hwhm / 20.0)

    margin = max(6.0 * w_eff, 3.0e6) + spin.a_hf
    start = min(inits) - margin
    stop = max(inits) + margin
    step = spin.hwhm / 3.0
    points = int(np.clip(round((stop - start) / step) + 1, 61, 301))
    plan = make_sweep(float(start), float(stop), points, scenario.sweep.dwell)

    series = [
        simulate_point(
            scenario, float(f), derive_seed(scenario.seed, TAG_RECON, i),
            duration=plan.dwell, hs_on=False, depth=CW_DEPTH,
        )
        for i, f in enumerate(plan.frequencies)
    ]
    curve = odmr_integrate(series, plan, bal)
    # amplitude scale in normalized-balanced units: balanced sweeps suppress
    # the baseline, so the per-line amplitude is depth_range divided by the
    # deepest superposition of the unit-amplitude model
    depth_range = float(np.max(curve.values) - np.min(curve.values))
    if depth_range <= 0:
        raise FitFailedError("flat reconstruct sweep: no resonances visible")
    unit = np.zeros_like(curve.freqs)
    for c0, m in zip(inits, multiplicity):
        for m_i in (-1, 0, 1):
            unit += m * lorentzian(curve.freqs, c0 + m_i * spin.a_hf, w_eff)
    amp_unit = depth_range / float(np.max(unit))
    centers = _fit_branch_centers(curve, spin, inits, multiplicity, amp_unit, w_eff)
    # guard against group permutation inside the optimizer
    cost = np.abs(np.asarray(centers)[:, None] - np.asarray(inits)[None, :])
    rows, cols = linear_sum_assignment(cost)
    reordered = np.empty_like(centers)
    reordered[cols] = centers[rows]
    centers = reordered

    proj = project_field(scenario.field)
    splittings = {}
    signs = {}
    for i, label in enumerate(AXIS_LABELS):
        c_plus = centers[membership[(label, +1)]]
        c_minus = centers[membership[(label, -1)]]
        splittings[label] = max(float(c_plus - c_minus), 0.0)
        signs[label] = +1 if proj[i] >= 0 else -1

    rec = reconstruct_field(splittings, signs, spin)
    truth = np.asarray(scenario.field, dtype=float)
    return {
        "plan": plan,
        "balance": bal,
        "curve": curve,
        "branch_centers": centers,
        "splittings": splittings,
        "signs": signs,
        "reconstruction": rec,
        "truth": truth,
        "error_tesla": float(np.linalg.norm(rec.b_xyz - truth)),
    }
