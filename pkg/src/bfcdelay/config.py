"""Experiment configuration and the built-in presets of the reference setups."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .core import BETA2_SMF28, BfcState, ChannelSettings, MixingCoefficients, mixing_coefficients
from .design import equalized_mixing
from .estimation import compensation_phase
from .noise import AcquisitionConfig, ScanKind


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScanSpec:
    kind: str = "delay"
    start: float = 0.0
    stop: float = 62.5
    step: float = 0.55

    def axis(self) -> np.ndarray:
        if not self.step > 0:
            raise ConfigError("scan step must be positive")
        if not self.stop >= self.start:
            raise ConfigError("scan stop must not precede start")
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(n)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved parameter set of one simulated measurement.

    Frequencies in GHz, times in ps (``acquisition_time`` in s), phases in rad,
    ``beta2L_*`` in ps^2 per arm, ``pair_flux`` in coincidences/s at the
    normalized trace peak.
    """

    preset: Optional[str] = None
    dimension: int = 9
    fsr: float = 32.0
    offset: float = 608.0
    filter_width: float = 15.0
    spectral_width: float = 302.0
    acquisition_time: float = 5.0
    histogram_window: float = 256.0
    m_S: float = 4.48
    m_I: float = 4.48
    beta2L_S: float = 0.0
    beta2L_I: float = 0.0
    delay_S: float = 0.0
    delay_I: float = 0.0
    rf_phase_S: float = 0.0
    rf_phase_I: float = 0.0
    linear_phase_S: float = 0.0
    linear_phase_I: float = 0.0
    equalize: bool = False
    compensate: bool = False
    pair_flux: float = 1000.0
    background: float = 0.0
    seed: Optional[int] = None
    scan: ScanSpec = field(default_factory=ScanSpec)

    def __post_init__(self):
        if self.dimension < 1 or self.dimension % 2 != 1:
            raise ConfigError("dimension must be a positive odd integer")
        if not self.fsr > 0:
            raise ConfigError("fsr must be positive")
        if not self.filter_width > 0:
            raise ConfigError("filter_width must be positive")
        if self.m_S < 0 or self.m_I < 0:
            raise ConfigError("modulation depths must be non-negative")
        try:
            ScanKind(self.scan.kind)
        except ValueError:
            raise ConfigError(f"unknown scan kind {self.scan.kind!r}") from None

    # -- derived objects -------------------------------------------------
    @property
    def half_dim(self) -> int:
        return (self.dimension - 1) // 2

    @property
    def beta2L_total(self) -> float:
        return self.beta2L_S + self.beta2L_I

    def state(self) -> BfcState:
        return BfcState.uniform(self.half_dim, self.fsr, self.offset)

    def mixing(self) -> MixingCoefficients:
        if self.equalize:
            if self.m_S != self.m_I:
                raise ConfigError("equalization needs equal modulation depths")
            return equalized_mixing(self.m_S, self.half_dim)
        return mixing_coefficients(self.m_S, self.m_I, self.half_dim)

    def channels(self) -> tuple[ChannelSettings, ChannelSettings]:
        bin_phase = None
        if self.compensate:
            bin_phase = compensation_phase(self.beta2L_total, self.state())
        S = ChannelSettings(self.delay_S, self.rf_phase_S, self.m_S, self.linear_phase_S,
                            self.beta2L_S, bin_phase)
        I = ChannelSettings(self.delay_I, self.rf_phase_I, self.m_I, self.linear_phase_I,
                            self.beta2L_I)
        return S, I

    def fit_beta2L(self) -> float:
        """Quadratic dispersion left on the trace after any compensation."""
        return 0.0 if self.compensate else self.beta2L_total

    def acquisition(self, seed: Optional[int] = None) -> AcquisitionConfig:
        seed = self.seed if seed is None else seed
        return AcquisitionConfig(self.pair_flux, self.acquisition_time, self.histogram_window,
                                 0 if seed is None else int(seed), self.background)

    # -- (de)serialization ----------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        scan = data.pop("scan", None)
        try:
            if isinstance(scan, dict):
                data["scan"] = ScanSpec(**scan)
            elif isinstance(scan, ScanSpec):
                data["scan"] = scan
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        d = self.to_dict()
        for key, value in overrides.items():
            if key.startswith("scan."):
                sub = key.split(".", 1)[1]
                if sub not in d["scan"]:
                    raise ConfigError(f"unknown scan field {sub!r}")
                d["scan"][sub] = value
            elif key in d:
                d[key] = value
            else:
                raise ConfigError(f"unknown config field {key!r}")
        return ExperimentConfig.from_dict(d)


_T32 = 31.25
_PHASE_STEP_32 = 2 * math.pi * 32.0 * 0.55 / 1000.0

PRESETS: dict[str, dict[str, Any]] = {
    # 32 GHz link, delay scanned over three periods
    "fig3a": dict(fsr=32.0, offset=608.0, filter_width=15.0, spectral_width=302.0,
                  acquisition_time=5.0, scan=dict(kind="delay", start=0.0, stop=3 * _T32,
                                                  step=0.55)),
    # RF phase series: set rf_phase_S per trace
    "fig3b": dict(fsr=32.0, offset=608.0, filter_width=15.0, spectral_width=302.0,
                  acquisition_time=5.0, scan=dict(kind="delay", start=0.0, stop=2 * _T32,
                                                  step=0.55)),
    # linear spectral phase scanned on the signal bins
    "fig3c": dict(fsr=32.0, offset=608.0, filter_width=15.0, spectral_width=302.0,
                  acquisition_time=5.0, scan=dict(kind="shaper_phase", start=-math.pi,
                                                  stop=math.pi, step=_PHASE_STEP_32)),
    # ~313 m spool in the signal arm plus ~15 m residual fiber per arm
    "fig3d": dict(fsr=32.0, offset=608.0, filter_width=15.0, spectral_width=302.0,
                  acquisition_time=10.0, beta2L_S=-7.076, beta2L_I=-0.324,
                  scan=dict(kind="delay", start=0.0, stop=2 * _T32, step=0.55)),
    # 20 GHz setup used with detection time tags
    "fig4": dict(fsr=20.0, offset=200.0, filter_width=11.0, spectral_width=190.0,
                 acquisition_time=5.0, scan=dict(kind="delay", start=-50.0, stop=50.0,
                                                 step=0.4)),
    # equalized mixing, 9 m residual fiber on each photon
    "fig5": dict(fsr=32.0, offset=608.0, filter_width=15.0, spectral_width=302.0,
                 acquisition_time=10.0, equalize=True, beta2L_S=9 * BETA2_SMF28,
                 beta2L_I=9 * BETA2_SMF28,
                 scan=dict(kind="shaper_phase", start=-math.pi, stop=math.pi,
                           step=_PHASE_STEP_32)),
}


def preset(name: str) -> ExperimentConfig:
    try:
        values = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return ExperimentConfig.from_dict({**json.loads(json.dumps(values)), "preset": name})


def load_config(path) -> ExperimentConfig:
    """Read a config JSON, or the ``config`` section of a run-metadata JSON.

    A ``preset`` key is resolved first and the remaining keys override it.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if isinstance(data, dict) and "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    name = data.get("preset")
    if name:
        base = preset(name)
        rest = {k: v for k, v in data.items() if k not in ("preset", "scan")}
        cfg = base.with_overrides(rest)
        if "scan" in data:
            cfg = cfg.with_overrides({f"scan.{k}": v for k, v in data["scan"].items()})
        return cfg
    return ExperimentConfig.from_dict(data)
