"""Counting statistics: Poisson-sampled interferograms and jittered time-tag histograms."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import (BfcState, ChannelSettings, MixingCoefficients, channel_weights,
                   comb_intensity)


class ScanKind(str, enum.Enum):
    DELAY = "delay"
    SHAPER_PHASE = "shaper_phase"
    RF_PHASE = "rf_phase"

    @property
    def unit(self) -> str:
        return "ps" if self is ScanKind.DELAY else "rad"


@dataclass(frozen=True)
class AcquisitionConfig:
    """Acquisition parameters.

    pair_flux : detected coincidences per second at unit (peak-normalized)
        probability.
    acquisition_time : integration time per scan point, s.
    histogram_window : coincidence window, ps (bookkeeping only).
    background : constant accidental rate, counts/s (0 disables).
    """

    pair_flux: float
    acquisition_time: float
    histogram_window: float = 256.0
    rng_seed: int = 0
    background: float = 0.0

    def __post_init__(self):
        if not self.pair_flux > 0:
            raise ValueError("pair_flux must be positive")
        if not self.acquisition_time > 0:
            raise ValueError("acquisition_time must be positive")
        if not self.histogram_window > 0:
            raise ValueError("histogram_window must be positive")
        if self.background < 0:
            raise ValueError("background must be non-negative")

    @property
    def mean_peak_counts(self) -> float:
        return self.pair_flux * self.acquisition_time


@dataclass(frozen=True, eq=False)
class Interferogram:
    axis: np.ndarray
    expected: np.ndarray
    scan_kind: ScanKind = ScanKind.DELAY
    counts: Optional[np.ndarray] = None
    config: Optional[AcquisitionConfig] = None

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        expected = np.asarray(self.expected, dtype=float)
        if axis.ndim != 1 or axis.shape != expected.shape:
            raise ValueError("axis and expected must be 1-D arrays of equal length")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "expected", expected)
        object.__setattr__(self, "scan_kind", ScanKind(self.scan_kind))
        if self.counts is not None:
            counts = np.asarray(self.counts)
            if counts.shape != axis.shape:
                raise ValueError("counts must match the axis length")
            if np.any(counts < 0):
                raise ValueError("counts must be non-negative")
            object.__setattr__(self, "counts", counts)

    def __len__(self):
        return len(self.axis)


@dataclass(frozen=True, eq=False)
class TimeTagHistogram:
    bin_width: float
    bin_centers: np.ndarray
    counts: np.ndarray
    jitter_sigma: float = float("nan")
    true_offset: float = float("nan")
    truncated: bool = False

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ValueError("bin_width must be positive")
        centers = np.asarray(self.bin_centers, dtype=float)
        counts = np.asarray(self.counts)
        if centers.shape != counts.shape:
            raise ValueError("bin_centers and counts must have equal length")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_centers", centers)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))


def _check_axis(axis: np.ndarray):
    if axis.ndim != 1 or axis.size == 0:
        raise ValueError("scan axis must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(axis)):
        raise ValueError("scan axis must be finite")
    if axis.size > 1:
        steps = np.diff(axis)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("scan axis must be strictly monotone")


def scan_expected(state: BfcState, mix: Optional[MixingCoefficients],
                  channels: tuple[ChannelSettings, ChannelSettings], axis: Sequence[float],
                  scan_kind: ScanKind | str = ScanKind.DELAY) -> Interferogram:
    """Peak-normalized model trace over a scan.

    The scanned quantity is added to the signal arm: its delay (ps), its
    pulse-shaper linear phase increment (rad/bin) or its RF phase (rad).
    All three enter the effective phase identically, so a delay ``x`` and a
    phase ``2*pi*fsr*x/1000`` give the same point.
    """
    kind = ScanKind(scan_kind)
    axis = np.asarray(axis, dtype=float)
    _check_axis(axis)
    settings_S, settings_I = channels
    weights = channel_weights(state, settings_S, settings_I, mix)
    phase = axis * state.omega if kind is ScanKind.DELAY else axis
    raw = comb_intensity(weights, state.orders, phase)
    peak = raw.max()
    if not peak > 0:
        raise ValueError("model trace vanishes over the scan")
    return Interferogram(axis, raw / peak, kind)


def sample_counts(interferogram: Interferogram, config: AcquisitionConfig) -> Interferogram:
    """Poisson counts with mean ``pair_flux * acquisition_time * expected``."""
    rng = np.random.default_rng(config.rng_seed)
    mean = (config.pair_flux * interferogram.expected + config.background) * config.acquisition_time
    counts = rng.poisson(mean).astype(np.int64)
    return replace(interferogram, counts=counts, config=config)


def simulate_histogram(true_offset: float, jitter_sigma: float, total_coincidences: int,
                       bin_width: float = 2.0, span: Optional[float] = None, rng_seed: int = 0,
                       center: Optional[float] = None) -> TimeTagHistogram:
    """Histogram of signal-minus-idler detection times.

    Arrival-time differences are drawn from ``Normal(true_offset, jitter_sigma)``
    and binned over ``span`` ps around ``center`` (defaults: 12 sigma around the
    bin-grid point nearest the true offset).  Samples outside the window are
    lost; ``truncated`` flags a window narrower than 6 sigma.
    """
    if total_coincidences < 0:
        raise ValueError("total_coincidences must be non-negative")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if not jitter_sigma > 0:
        raise ValueError("jitter_sigma must be positive")
    if span is None:
        span = 12.0 * jitter_sigma
    if center is None:
        center = round(true_offset / bin_width) * bin_width
    nbins = max(1, int(math.ceil(span / bin_width)))
    edges = center - 0.5 * nbins * bin_width + bin_width * np.arange(nbins + 1)
    rng = np.random.default_rng(rng_seed)
    samples = rng.normal(true_offset, jitter_sigma, int(total_coincidences))
    counts, _ = np.histogram(samples, bins=edges)
    return TimeTagHistogram(bin_width, 0.5 * (edges[:-1] + edges[1:]), counts.astype(np.int64),
                            jitter_sigma, true_offset, span < 6.0 * jitter_sigma)
