"""Scenario configuration tree: one validated document that drives every command.

The file format is JSON. Every key has a default mirroring the standard
operating point (f_m 1 kHz, depth 400 kHz, ENBW 10.4 Hz, output rate 200 Hz,
k1 1000) except ``seed``, which is mandatory so no run ever depends on the
wall clock. Unknown keys are rejected. Validation errors carry the dotted
path of the offending key.

Per-point seeds for sweeps and scans are derived with the splittable scheme
``SeedSequence((seed, tag, index))`` so parallel execution order cannot
change any result.
"""

import dataclasses
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InvalidArgument
from .lockin import BalanceConfig, LockinConfig
from .mwcontrol import MWConfig, SweepPlan, make_sweep
from .nvmodel import SpinSystemParams
from .sigchain import AdcParams, DetectorParams, NoiseParams

# Seed-derivation tags (second entry of the SeedSequence key).
TAG_SWEEP_HS_OFF = 1
TAG_SWEEP_HS_ON = 2
TAG_NOISE_RUN = 3
TAG_SCAN = 4
TAG_SLOPE = 5
TAG_RECON = 6
TAG_TUNE = 7
TAG_CW_HS_OFF = 8
TAG_CW_HS_ON = 9


def derive_seed(seed: int, tag: int, index: int = 0) -> int:
    """Deterministic 64-bit child seed for (tag, index)."""
    ss = np.random.SeedSequence((int(seed), int(tag), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SweepSettings:
    """Sweep range used by sweep-odmr and reconstruct."""

    start: float = 2.864e9
    stop: float = 2.876e9
    points: int = 121
    dwell: float = 0.02

    def plan(self) -> SweepPlan:
        return make_sweep(self.start, self.stop, self.points, self.dwell)


@dataclass(frozen=True)
class Scenario:
    """Complete configuration of one simulated run."""

    seed: int
    duration: float = 60.0
    field: tuple = (0.0, 0.0, 5.0e-5)
    spin: SpinSystemParams = dataclasses.field(default_factory=SpinSystemParams)
    mw: MWConfig = dataclasses.field(default_factory=lambda: MWConfig(hs_on=True))
    detector: DetectorParams = dataclasses.field(default_factory=DetectorParams)
    noise: NoiseParams = dataclasses.field(default_factory=NoiseParams)
    adc: AdcParams = dataclasses.field(default_factory=AdcParams)
    lockin: LockinConfig = dataclasses.field(default_factory=LockinConfig)
    balance_k1: float = 1000.0
    balance_k2: float | None = None  # None: auto-tune when noise is present
    sweep: SweepSettings = dataclasses.field(default_factory=SweepSettings)
    off_resonant_center: float = 2.54e9

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must be a 64-bit unsigned integer")
        if self.duration <= 0:
            raise InvalidArgument("duration must be > 0")

    def noise_with_seed(self, seed: int) -> NoiseParams:
        return replace(self.noise, seed=seed)

    def balance_pinned(self) -> BalanceConfig | None:
        if self.balance_k2 is None:
            return None
        return BalanceConfig(k1=self.balance_k1, k2=self.balance_k2)

    def noise_free(self) -> bool:
        n = self.noise
        return (
            not n.shot_enabled
            and n.electronic_density == 0
            and n.laser_rin_density == 0
            and n.indep_rin_a == 0
            and n.indep_rin_b == 0
        )


_SCHEMA = {
    "seed": int,
    "duration": float,
    "field": list,
    "off_resonant_center": float,
    "spin": {
        "d_zfs": float,
        "gamma_e": float,
        "a_hf": float,
        "hwhm": float,
        "contrast": float,
        "p_sat": float,
    },
    "mw": {
        "center": float,
        "f_m": float,
        "depth": float,
        "power": float,
        "hs_on": bool,
        "sideband_spacing": float,
    },
    "detector": {
        "responsivity": float,
        "tia_gain_a": float,
        "tia_gain_b": float,
        "fluor_power": float,
        "green_power": float,
        "detector_bandwidth": float,
    },
    "noise": {
        "shot_enabled": bool,
        "electronic_density": float,
        "pink_knee": float,
        "laser_rin_density": float,
        "indep_rin_a": float,
        "indep_rin_b": float,
    },
    "adc": {"bits": int, "full_scale": float, "sample_rate": float},
    "lockin": {"phase_offset": int, "enbw": float, "output_rate": float, "filter": str},
    "balance": {"k1": float, "k2": (float, type(None))},
    "sweep": {"start": float, "stop": float, "points": int, "dwell": float},
}


def _check_type(path, value, expected):
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {type(value).__name__}")
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {type(value).__name__}")
        return value
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {type(value).__name__}")
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {type(value).__name__}")
        return value
    if expected is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {type(value).__name__}")
        return value
    if isinstance(expected, tuple):  # union
        if value is None and type(None) in expected:
            return None
        return _check_type(path, value, expected[0])
    raise AssertionError(f"unhandled schema type at {path}")


def _section(doc, name, schema, path_prefix=""):
    raw = doc.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(path_prefix + name, "expected an object")
    out = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"{path_prefix}{name}.{key}", "unknown key")
        out[key] = _check_type(f"{path_prefix}{name}.{key}", value, schema[key])
    return out


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a Scenario from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config document must be an object")
    for key in doc:
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown key")
    if "seed" not in doc:
        raise ConfigError("seed", "mandatory (no wall-clock default)")
    seed = _check_type("seed", doc["seed"], int)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")

    duration = _check_type("duration", doc.get("duration", 60.0), float)
    field_raw = _check_type("field", doc.get("field", [0.0, 0.0, 5.0e-5]), list)
    if len(field_raw) != 3:
        raise ConfigError("field", "must hold exactly 3 components (tesla)")
    field_t = tuple(_check_type(f"field[{i}]", v, float) for i, v in enumerate(field_raw))
    off_res = _check_type(
        "off_resonant_center", doc.get("off_resonant_center", 2.54e9), float
    )

    sections = {
        name: _section(doc, name, schema)
        for name, schema in _SCHEMA.items()
        if isinstance(schema, dict)
    }

    try:
        spin = SpinSystemParams(**sections["spin"])
        mw_kwargs = {"hs_on": True}
        mw_kwargs.update(sections["mw"])
        mw = MWConfig(**mw_kwargs)
        detector = DetectorParams(**sections["detector"])
        noise = NoiseParams(seed=seed, **sections["noise"])
        adc = AdcParams(**sections["adc"])
        lockin_kwargs = dict(sections["lockin"])
        lockin = LockinConfig(f_m=mw.f_m, **lockin_kwargs)
        balance_raw = sections["balance"]
        balance_k1 = balance_raw.get("k1", 1000.0)
        balance_k2 = balance_raw.get("k2", None)
        sweep = SweepSettings(**sections["sweep"])
        scenario = Scenario(
            seed=seed,
            duration=duration,
            field=field_t,
            spin=spin,
            mw=mw,
            detector=detector,
            noise=noise,
            adc=adc,
            lockin=lockin,
            balance_k1=balance_k1,
            balance_k2=balance_k2,
            sweep=sweep,
            off_resonant_center=off_res,
        )
    except InvalidArgument as exc:
        raise ConfigError("<validation>", str(exc)) from exc

    _cross_validate(scenario)
    return scenario


def _cross_validate(s: Scenario) -> None:
    """Consistency rules spanning sections; enforced here, not in the kernels."""
    sr = s.adc.sample_rate
    ratio = sr / (2.0 * s.mw.f_m)
    if abs(ratio - round(ratio)) > 1e-9:
        raise ConfigError(
            "adc.sample_rate", f"must be an integer multiple of 2*f_m = {2 * s.mw.f_m:.0f} Hz"
        )
    if sr <= 20.0 * s.mw.f_m:
        raise ConfigError("adc.sample_rate", f"must exceed 20*f_m = {20 * s.mw.f_m:.0f} Hz")
    stride = sr / s.lockin.output_rate
    if abs(stride - round(stride)) > 1e-9 or round(stride) < 1:
        raise ConfigError(
            "lockin.output_rate", f"must divide the sample rate {sr:.0f} Hz"
        )
    periods = s.sweep.dwell * s.mw.f_m
    if abs(periods - round(periods)) > 1e-9 or round(periods) < 10:
        raise ConfigError(
            "sweep.dwell",
            f"must be an integer number (>= 10) of FSK periods; got {periods:.3f}",
        )
    if s.duration < 10.0 / s.mw.f_m:
        raise ConfigError("duration", f"must be >= 10/f_m = {10.0 / s.mw.f_m:.3e} s")
    if s.balance_k1 <= 0:
        raise ConfigError("balance.k1", "must be > 0")
    if s.balance_k2 is not None and s.balance_k2 < 0:
        raise ConfigError("balance.k2", "must be >= 0 (or null for auto-tune)")
    try:
        s.lockin.window(sr)
    except InvalidArgument as exc:
        raise ConfigError("lockin.enbw", str(exc)) from exc


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    """Read a JSON scenario file, optionally overriding the seed."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    if seed_override is not None:
        doc["seed"] = seed_override
    return scenario_from_dict(doc)


def default_scenario_dict(seed: int = 1) -> dict:
    """A complete config document with every default spelled out."""
    return {
        "seed": seed,
        "duration": 60.0,
        "field": [0.0, 0.0, 5.0e-5],
        "off_resonant_center": 2.54e9,
        "spin": {
            "d_zfs": 2.87e9,
            "gamma_e": 28.024e9,
            "a_hf": 2.158e6,
            "hwhm": 617e3,
            "contrast": 0.0153,
            "p_sat": 10.0,
        },
        "mw": {
            "center": 2.87e9,
            "f_m": 1000.0,
            "depth": 400e3,
            "power": 10.0,
            "hs_on": True,
            "sideband_spacing": 2.158e6,
        },
        "detector": {
            "responsivity": 0.52,
            "tia_gain_a": 200.0,
            "tia_gain_b": 2200.0,
            "fluor_power": 2.0e-3,
            "green_power": 1.955e-4,
            "detector_bandwidth": 1.0e5,
        },
        "noise": {
            "shot_enabled": True,
            "electronic_density": 6.0e-8,
            "pink_knee": 500.0,
            "laser_rin_density": 3.0e-6,
            "indep_rin_a": 6.0e-7,
            "indep_rin_b": 1.0e-7,
        },
        "adc": {"bits": 14, "full_scale": 0.5, "sample_rate": 1.0e6},
        "lockin": {"phase_offset": 0, "enbw": 10.4, "output_rate": 200.0,
                   "filter": "moving-average"},
        "balance": {"k1": 1000.0, "k2": None},
        "sweep": {"start": 2.864e9, "stop": 2.876e9, "points": 121, "dwell": 0.02},
    }
