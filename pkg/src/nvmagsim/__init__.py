"""nvmagsim: desk-scale NV diamond magnetometer signal-chain simulator.

Layers, importable directly from the package root:

* spin physics and lineshapes (``nvmodel``)
* microwave plans and FSK modulation (``mwcontrol``)
* noisy dual-channel photodetection and ADC (``sigchain``)
* digital balance, lock-in demodulation float/fixed (``lockin``)
* fits, sensitivity and field inversion (``analysis``)
* scenario configs and measurement pipelines (``scenario``, ``pipelines``)
"""

from .analysis import (
    LineFit,
    ReconstructedField,
    SensitivityReport,
    SlopeFit,
    estimate_sensitivity,
    fit_lorentzian_centers,
    fit_odmr,
    fit_slope,
    reconstruct_field,
    shot_noise_limit,
    snr_enhancement,
)
from .errors import (
    ConfigError,
    DegenerateReferenceError,
    EnbwTooWideError,
    FitFailedError,
    InvalidArgument,
    NoCrossingError,
    NvmagsimError,
    OverflowStageError,
    UnderdeterminedError,
)
from .lockin import (
    BalanceConfig,
    FixedPointReport,
    FixedPointSpec,
    LockinConfig,
    LockinOutput,
    balance,
    demodulate,
    demodulate_fixed,
    odmr_integrate,
    tune_balance,
)
from .mwcontrol import (
    MWConfig,
    SweepPlan,
    fsk_instantaneous_frequency,
    make_sweep,
    probe_comb,
    square_wave,
)
from .nvmodel import (
    A_HYPERFINE,
    AXIS_LABELS,
    D_ZFS,
    GAMMA_E,
    NV_AXES,
    DispersiveCurve,
    OdmrCurve,
    ResonanceLine,
    ResonanceSet,
    SpinSystemParams,
    lockin_lineshape,
    odmr_spectrum,
    project_field,
    saturation_factors,
    spectrum_values,
    transition_frequencies,
)
from .scenario import Scenario, derive_seed, load_scenario, scenario_from_dict
from .sigchain import (
    AdcParams,
    DetectorParams,
    DualTimeSeries,
    NoiseParams,
    dequantize,
    load_nvts,
    quantize,
    save_nvts,
    shot_noise_sigma,
    simulate,
)

__version__ = "0.1.0"
