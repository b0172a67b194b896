"""Design-space metrics: trace width, slope sensitivity maps, mixing equalization."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .core import (BfcState, MixingCoefficients, bessel_j, comb_intensity, mixing_coefficients,
                   template_weights)


@dataclass(frozen=True, eq=False)
class SlopeMap:
    depths_S: np.ndarray
    depths_I: np.ndarray
    max_slope: np.ndarray  # [i, j] -> (depths_S[i], depths_I[j])
    optimum: tuple

    @property
    def optimum_slope(self) -> float:
        return float(self.max_slope.max())

    def slope_at(self, m_S: float, m_I: float) -> float:
        i = int(np.argmin(np.abs(self.depths_S - m_S)))
        j = int(np.argmin(np.abs(self.depths_I - m_I)))
        return float(self.max_slope[i, j])


def _trace_fn(state: BfcState, mix: MixingCoefficients, fsr: Optional[float],
              beta2L_total: float):
    if fsr is not None and fsr != state.fsr:
        state = BfcState(state.half_dim, fsr, state.offset, state.amplitudes,
                         state.center_frequency)
    w = template_weights(state, mix, beta2L_total)
    k = state.orders
    omega = state.omega

    def trace(tau):
        return comb_intensity(w, k, np.multiply(tau, omega))

    def slope(tau):
        tau = np.asarray(tau, dtype=float)
        E = np.exp(1j * np.multiply.outer(tau, k * omega))
        S = E @ w
        dS = E @ (w * 1j * k * omega)
        return 2.0 * np.real(np.conj(S) * dS)

    return state, trace, slope


def trace_fwhm(state: BfcState, mix: MixingCoefficients, fsr: Optional[float] = None,
               samples: int = 4096, beta2L_total: float = 0.0, xtol: float = 1e-4) -> float:
    """Full width at half maximum of the trace versus effective delay, ps.

    The trace is sampled over one period centred on its maximum; the width is
    the distance between the outermost half-maximum crossings, each refined
    by bisection.  For distorted traces this is the total width at the half
    maximum points.
    """
    if samples < 1000:
        raise ValueError("samples must be at least 1000")
    state, trace, _ = _trace_fn(state, mix, fsr, beta2L_total)
    t_rep = state.t_rep
    grid = np.linspace(0.0, t_rep, samples, endpoint=False)
    vals = trace(grid)
    peak_t = grid[int(np.argmax(vals))]
    res = minimize_scalar(lambda t: -float(trace(t)), bounds=(peak_t - t_rep / samples,
                                                              peak_t + t_rep / samples),
                          method="bounded", options={"xatol": 1e-10})
    peak_t, peak = float(res.x), -float(res.fun)
    half = 0.5 * peak
    tau = peak_t + np.linspace(-0.5 * t_rep, 0.5 * t_rep, samples + 1)
    above = trace(tau) >= half
    if above.all() or not above.any():
        raise ValueError("trace has no half-maximum crossing (flat trace)")
    lo, hi = int(np.argmax(above)), len(above) - 1 - int(np.argmax(above[::-1]))
    if lo == 0 or hi == len(above) - 1:
        raise ValueError("half-maximum crossings not separated within one period")
    f = lambda t: float(trace(t)) - half
    left = brentq(f, tau[lo - 1], tau[lo], xtol=xtol)
    right = brentq(f, tau[hi], tau[hi + 1], xtol=xtol)
    return right - left


def max_slope(state: BfcState, m_S: float, m_I: float, fsr: Optional[float] = None,
              samples: int = 2048) -> float:
    """Largest ``|dP/dtau|`` of the un-normalized trace over one period, 1/ps."""
    if samples < 1000:
        raise ValueError("samples must be at least 1000")
    mix = mixing_coefficients(m_S, m_I, state.half_dim)
    state, trace, slope = _trace_fn(state, mix, fsr, 0.0)
    t_rep = state.t_rep
    h = t_rep / samples
    grid = h * np.arange(samples)
    vals = trace(grid)
    diff = np.abs(np.roll(vals, -1) - np.roll(vals, 1)) / (2.0 * h)
    i = int(np.argmax(diff))
    if diff[i] == 0.0:
        return 0.0
    res = minimize_scalar(lambda t: -abs(float(slope(t))), bounds=(grid[i] - h, grid[i] + h),
                          method="bounded", options={"xatol": 1e-9 * t_rep})
    return max(-float(res.fun), float(diff[i]))


def slope_map(state: BfcState, depth_grid: Sequence[float] | tuple,
              fsr: Optional[float] = None, samples: int = 2048) -> SlopeMap:
    """:func:`max_slope` over a grid of signal/idler modulation depths.

    ``depth_grid`` is one 1-D grid used for both arms, or a pair of grids.
    Ties for the optimum go to the lowest signal depth, then the lowest idler
    depth.
    """
    if isinstance(depth_grid, tuple) and len(depth_grid) == 2 and np.ndim(depth_grid[0]) == 1:
        dS, dI = (np.asarray(g, dtype=float) for g in depth_grid)
    else:
        dS = dI = np.asarray(depth_grid, dtype=float)
    if dS.size == 0 or dI.size == 0:
        raise ValueError("depth grid must be non-empty")
    out = np.empty((dS.size, dI.size))
    for i, a in enumerate(dS):
        for j, b in enumerate(dI):
            out[i, j] = max_slope(state, a, b, fsr, samples)
    i, j = np.unravel_index(int(np.argmax(out)), out.shape)  # first max in row-major order
    return SlopeMap(dS, dI, out, (float(dS[i]), float(dI[j])))


def equalization_weights(m: float, N: int, zero_tol: float = 1e-10) -> np.ndarray:
    """Per-bin field transmissions ``w_k ∝ 1/|J_k(m)|`` with ``max(w) = 1``."""
    mags = np.array([abs(bessel_j(k, m)) for k in range(-N, N + 1)])
    bad = [k for k, v in zip(range(-N, N + 1), mags) if v < zero_tol]
    if bad:
        raise ValueError(f"J_k({m}) vanishes for k = {bad}; cannot equalize")
    return mags.min() / mags


def equalized_mixing(m: float, N: int, weights: Optional[np.ndarray] = None) -> MixingCoefficients:
    """Mixing coefficients after applying ``weights`` to both arms."""
    if weights is None:
        weights = equalization_weights(m, N)
    mix = mixing_coefficients(m, m, N)
    # signal bin k and idler bin -k are both scaled
    return MixingCoefficients(mix.values * weights * weights[::-1], mix.depth_pair)
