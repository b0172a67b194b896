"""Closed-form coincidence model for phase-modulated biphoton frequency combs.

Units used throughout: cyclic frequencies in GHz, delays in ps, phases in
radians, accumulated dispersion (beta2 * L) in ps^2.  Conversions to angular
frequency in rad/ps (``2*pi*f/1000``) happen inside the functions; stored
fields are never angular.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate, special

TWO_PI = 2.0 * math.pi

#: Group-velocity dispersion of SMF-28e at 1550 nm, ps^2/m.
BETA2_SMF28 = -2.16e-2

#: Optical carrier (half the pump frequency) of the source, GHz.
DEFAULT_CENTER_FREQUENCY = 192_700.0

_SERIES_LIMIT = 12.0
_NORM_TOL = 1e-9


def angular(f_ghz: float) -> float:
    """Cyclic frequency in GHz -> angular frequency in rad/ps."""
    return TWO_PI * f_ghz / 1000.0


def repetition_period(fsr: float) -> float:
    """Interferogram period in ps for a free spectral range in GHz."""
    return 1000.0 / fsr


# ---------------------------------------------------------------------------
# Bessel functions
# ---------------------------------------------------------------------------

@lru_cache(maxsize=65536)
def _bessel_series(n: int, x: float) -> float:
    # n >= 0; ascending series, terms built recursively
    half = 0.5 * x
    term = 1.0
    for j in range(1, n + 1):
        term *= half / j
    terms = [term]
    q = -half * half
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + n))
        terms.append(term)
        if k > half and abs(term) < 1e-17 * max(abs(terms[0]), 1e-300):
            break
        if term == 0.0:
            break
    return math.fsum(terms)


def bessel_j(order: int, x: float) -> float:
    """Bessel function of the first kind of integer order.

    Uses the ascending power series for ``|x| <= 12`` (the regime of any
    practical modulation depth) and falls back to ``scipy.special.jv`` above.
    """
    n = int(order)
    if n != order:
        raise ValueError(f"order must be an integer, got {order!r}")
    x = float(x)
    sign = 1.0
    if n < 0:
        n = -n
        sign = -1.0 if n % 2 else 1.0
    if x < 0:
        x = -x
        if n % 2:
            sign = -sign
    if x == 0.0:
        return sign * (1.0 if n == 0 else 0.0)
    if x <= _SERIES_LIMIT:
        return sign * _bessel_series(n, x)
    return sign * float(special.jv(n, x))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class BfcState:
    """Post-selected biphoton frequency comb of dimension ``2*half_dim + 1``.

    ``amplitudes[j]`` is the complex amplitude of bin pair ``k = j - half_dim``
    (signal bin ``k``, idler bin ``-k``).
    """

    half_dim: int
    fsr: float
    offset: float = 0.0
    amplitudes: Optional[Sequence[complex]] = None
    center_frequency: float = DEFAULT_CENTER_FREQUENCY

    def __post_init__(self):
        if int(self.half_dim) != self.half_dim or self.half_dim < 0:
            raise ValueError("half_dim must be a non-negative integer")
        if not (self.fsr > 0 and math.isfinite(self.fsr)):
            raise ValueError("fsr must be positive")
        if not (self.offset >= 0 and math.isfinite(self.offset)):
            raise ValueError("offset must be non-negative")
        d = 2 * self.half_dim + 1
        if self.amplitudes is None:
            amps = np.full(d, 1.0 / math.sqrt(d), dtype=complex)
        else:
            amps = np.asarray(self.amplitudes, dtype=complex)
            if amps.shape != (d,):
                raise ValueError(f"expected {d} amplitudes, got shape {amps.shape}")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"amplitudes not normalized: sum |alpha|^2 = {norm!r}")
        object.__setattr__(self, "half_dim", int(self.half_dim))
        object.__setattr__(self, "amplitudes", _frozen_array(amps, complex))

    @classmethod
    def uniform(cls, half_dim: int, fsr: float, offset: float = 0.0, **kw) -> "BfcState":
        return cls(half_dim, fsr, offset, None, **kw)

    @classmethod
    def from_unnormalized(cls, half_dim: int, fsr: float, amplitudes, offset: float = 0.0,
                          **kw) -> "BfcState":
        amps = np.asarray(amplitudes, dtype=complex)
        return cls(half_dim, fsr, offset, amps / np.linalg.norm(amps), **kw)

    @property
    def dim(self) -> int:
        return 2 * self.half_dim + 1

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.half_dim, self.half_dim + 1)

    @property
    def omega(self) -> float:
        """FSR as angular frequency, rad/ps."""
        return angular(self.fsr)

    @property
    def t_rep(self) -> float:
        return repetition_period(self.fsr)


@dataclass(frozen=True, eq=False)
class ChannelSettings:
    """Link parameters of one arm.

    ``bin_phase`` and ``bin_transmission`` are optional per-pair programs of a
    pulse shaper, indexed like :attr:`BfcState.amplitudes` (entry ``j`` acts
    on this arm's member of pair ``k = j - N``).
    """

    delay: float = 0.0
    rf_phase: float = 0.0
    mod_depth: float = 0.0
    linear_phase: float = 0.0
    beta2L: float = 0.0
    bin_phase: Optional[Sequence[float]] = None
    bin_transmission: Optional[Sequence[float]] = None

    def __post_init__(self):
        for name in ("delay", "rf_phase", "mod_depth", "linear_phase", "beta2L"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mod_depth < 0:
            raise ValueError("mod_depth must be non-negative")
        if self.bin_phase is not None:
            arr = _frozen_array(self.bin_phase, float)
            if not np.all(np.isfinite(arr)):
                raise ValueError("bin_phase must be finite")
            object.__setattr__(self, "bin_phase", arr)
        if self.bin_transmission is not None:
            arr = _frozen_array(self.bin_transmission, float)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError("bin_transmission must be finite and non-negative")
            object.__setattr__(self, "bin_transmission", arr)

    def replace(self, **changes) -> "ChannelSettings":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return ChannelSettings(**d)

    @classmethod
    def fiber(cls, length_m: float, beta2: float = BETA2_SMF28, **kw) -> "ChannelSettings":
        return cls(beta2L=beta2 * length_m, **kw)


@dataclass(frozen=True, eq=False)
class MixingCoefficients:
    values: np.ndarray
    depth_pair: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, complex))

    @property
    def half_dim(self) -> int:
        return (len(self.values) - 1) // 2


class DerivedPhase(NamedTuple):
    delta_phi: float
    tau_prime: float
    t_rep: float


class OracleResult(NamedTuple):
    value: float
    regime_warning: bool


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def mixing_coefficients(m_S: float, m_I: float, N: int) -> MixingCoefficients:
    """Sideband weights ``C_k = J_k(m_S) J_{-k}(m_I)`` for ``k = -N..N``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    vals = [bessel_j(k, m_S) * bessel_j(-k, m_I) for k in range(-N, N + 1)]
    return MixingCoefficients(np.asarray(vals, dtype=complex), (float(m_S), float(m_I)))


def unit_mixing(N: int) -> MixingCoefficients:
    """Equal-amplitude mixing (``C_k = 1``)."""
    return MixingCoefficients(np.ones(2 * N + 1, dtype=complex), None)


def effective_phase(settings_S: ChannelSettings, settings_I: ChannelSettings,
                    fsr: float) -> DerivedPhase:
    w = angular(fsr)
    tau = settings_S.delay - settings_I.delay
    dphi = (w * tau + (settings_S.rf_phase - settings_I.rf_phase)
            + (settings_S.linear_phase - settings_I.linear_phase))
    return DerivedPhase(dphi, (dphi + math.pi) / w, repetition_period(fsr))


def _check_dims(state: BfcState, mix: MixingCoefficients):
    if len(mix.values) != state.dim:
        raise ValueError(
            f"dimension mismatch: state has {state.dim} bins, mixing has {len(mix.values)}")


def comb_intensity(weights: np.ndarray, orders: np.ndarray, phase) -> np.ndarray:
    """``|sum_k weights[k] exp(i k phase)|^2`` evaluated for every ``phase``."""
    phase = np.asarray(phase, dtype=float)
    amp = np.exp(1j * np.multiply.outer(phase, orders)) @ weights
    return np.abs(amp) ** 2


def coincidence_probability(state: BfcState, mix: MixingCoefficients, delta_phi):
    """Un-normalized ``|sum_k alpha_k C_k exp(i k dphi)|^2``.

    Vectorized over ``delta_phi``; a scalar input returns a float.
    """
    _check_dims(state, mix)
    out = comb_intensity(state.amplitudes * mix.values, state.orders, delta_phi)
    return float(out) if out.ndim == 0 else out


def template_weights(state: BfcState, mix: MixingCoefficients, beta2L_total: float = 0.0):
    """Per-pair weights of the trace as a function of effective delay.

    ``P(tau_eff) = |sum_k w_k exp(i k w_fsr tau_eff)|^2``; the alternating sign
    of ``C_k`` is absorbed so that equal depths give ``w_k = alpha_k |C_k|``.
    """
    _check_dims(state, mix)
    k = state.orders
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    quad = 0.5 * beta2L_total * (k * state.omega) ** 2
    return state.amplitudes * mix.values * sign * np.exp(1j * quad)


def coincidence_probability_dispersive(state: BfcState, mix: MixingCoefficients,
                                       tau_eff, beta2L_total: float):
    """Trace including second-order dispersion accumulated by both photons."""
    w = template_weights(state, mix, beta2L_total)
    out = comb_intensity(w, state.orders, np.multiply(tau_eff, state.omega))
    return float(out) if out.ndim == 0 else out


def g2_correlation(state: BfcState, t_diff):
    """Second-order correlation ``|sum_k alpha_k exp(-i k w_fsr t)|^2``."""
    out = comb_intensity(state.amplitudes, state.orders, np.multiply(t_diff, -state.omega))
    return float(out) if out.ndim == 0 else out


def normalize_trace(values):
    arr = np.asarray(values, dtype=float)
    peak = arr.max()
    if not peak > 0:
        raise ValueError("trace has no positive values")
    return arr / peak


def _per_bin(values, dim, default):
    if values is None:
        return np.full(dim, default, dtype=float)
    arr = np.asarray(values, dtype=float)
    if arr.shape != (dim,):
        raise ValueError(f"per-bin program must have {dim} entries, got {arr.shape}")
    return arr


def channel_weights(state: BfcState, settings_S: ChannelSettings, settings_I: ChannelSettings,
                    mix: Optional[MixingCoefficients] = None) -> np.ndarray:
    """Complex per-pair contributions to the detected central bin pair.

    The coincidence probability is ``|sum(channel_weights(...))|^2``.  Adding
    an extra signal delay ``x`` multiplies entry ``k`` by ``exp(i k w_fsr x)``.
    When ``mix`` is omitted it is computed from the arms' modulation depths.
    """
    if mix is None:
        mix = mixing_coefficients(settings_S.mod_depth, settings_I.mod_depth, state.half_dim)
    _check_dims(state, mix)
    k = state.orders
    d = state.dim
    w = state.omega
    big_omega = angular(state.offset)
    dphi = effective_phase(settings_S, settings_I, state.fsr).delta_phi
    disp = 0.5 * (settings_S.beta2L + settings_I.beta2L) * (big_omega + k * w) ** 2
    extra = _per_bin(settings_S.bin_phase, d, 0.0) + _per_bin(settings_I.bin_phase, d, 0.0)
    trans = (_per_bin(settings_S.bin_transmission, d, 1.0)
             * _per_bin(settings_I.bin_transmission, d, 1.0))
    return state.amplitudes * mix.values * trans * np.exp(1j * (k * dphi + disp + extra))


def channel_probability(state: BfcState, settings_S: ChannelSettings,
                        settings_I: ChannelSettings,
                        mix: Optional[MixingCoefficients] = None) -> float:
    return float(abs(np.sum(channel_weights(state, settings_S, settings_I, mix))) ** 2)


def sideband_amplitudes(m: float, phase: float, orders: np.ndarray, samples: int = 512):
    """Fourier coefficients of ``exp(-i m sin(theta + phase))``.

    Returns ``a_p`` with ``exp(-i m sin(theta + phase)) = sum_p a_p exp(-i p theta)``,
    computed by sampling the modulation waveform (no Bessel evaluation).
    """
    theta = TWO_PI * np.arange(samples) / samples
    wave = np.exp(-1j * m * np.sin(theta + phase))
    # a_p = <wave * exp(+i p theta)>
    spec = np.fft.ifft(wave)  # spec[n] = mean(wave * exp(+2 pi i n j / M))
    return spec[np.mod(orders, samples)]


def oracle_filter_integral(state: BfcState, settings_S: ChannelSettings,
                           settings_I: ChannelSettings, filter_width: float,
                           grid_points: int = 201) -> OracleResult:
    """Coincidence probability by direct integration over the filter passband.

    Builds the output pair amplitude at every frequency inside ideal
    rectangular filters from the modulators' sideband spectra, with delays and
    dispersion evaluated at the true optical frequency, and the bin amplitudes
    piecewise constant over each FSR-wide slice.  The passband average of
    ``|amplitude|^2`` is returned, which is comparable to
    :func:`channel_probability` in the narrow-filter limit.
    """
    if not filter_width > 0:
        raise ValueError("filter_width must be positive")
    if grid_points < 101:
        raise ValueError("grid_points must be at least 101")
    width = angular(filter_width)
    spacing = width / (grid_points - 1)
    if width / spacing < 8:
        raise ValueError("quadrature grid too coarse for the filter width")
    regime_warning = filter_width > 0.5 * state.fsr
    if regime_warning:
        warnings.warn(f"filter width {filter_width} GHz is not narrow compared with the "
                      f"{state.fsr} GHz bin spacing", RuntimeWarning, stacklevel=2)

    N = state.half_dim
    w = state.omega
    big_omega = angular(state.offset)
    omega0 = angular(state.center_frequency)
    reach = N + int(math.ceil(filter_width / state.fsr)) + 1
    p = np.arange(-reach, reach + 1)
    side_S = sideband_amplitudes(settings_S.mod_depth, settings_S.rf_phase, p)
    side_I = sideband_amplitudes(settings_I.mod_depth, settings_I.rf_phase, -p)
    d = state.dim
    phase_S = _per_bin(settings_S.bin_phase, d, 0.0)
    phase_I = _per_bin(settings_I.bin_phase, d, 0.0)
    trans_S = _per_bin(settings_S.bin_transmission, d, 1.0)
    trans_I = _per_bin(settings_I.bin_transmission, d, 1.0)

    u = big_omega + np.linspace(-0.5 * width, 0.5 * width, grid_points)
    # signal input offset v = u - p*w ; idler input offset -v
    v = u[:, None] - p[None, :] * w
    j = np.rint((v - big_omega) / w).astype(int)
    inside = np.abs(j) <= N
    idx = np.clip(j + N, 0, d - 1)
    alpha = np.where(inside, state.amplitudes[idx], 0.0)
    shaper = (trans_S[idx] * trans_I[idx]
              * np.exp(1j * (j * settings_S.linear_phase + phase_S[idx]
                             - j * settings_I.linear_phase + phase_I[idx])))
    prop = np.exp(1j * ((omega0 + v) * settings_S.delay + (omega0 - v) * settings_I.delay
                        + 0.5 * (settings_S.beta2L + settings_I.beta2L) * v ** 2))
    amp = np.sum(side_S[None, :] * side_I[None, :] * alpha * shaper * prop, axis=1)
    integral = integrate.simpson(np.abs(amp) ** 2, x=u)
    return OracleResult(float(integral / width), bool(regime_warning))
