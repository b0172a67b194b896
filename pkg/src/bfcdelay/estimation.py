"""Parameter estimation: interferogram and histogram fits, RF phase, disambiguation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import BfcState, MixingCoefficients, TWO_PI, angular, template_weights
from .noise import Interferogram, ScanKind, TimeTagHistogram

Z95 = 1.959963984540054


class FitError(ValueError):
    """The fit problem is ill-posed (degenerate Jacobian, unusable data)."""


class AmbiguityError(ValueError):
    """Coarse delay is too far from an integer number of periods."""


@dataclass
class FitResult:
    params: dict
    ci95_half_widths: dict
    residual_norm: float
    converged: bool
    iterations: int
    covariance: Optional[np.ndarray] = field(default=None, repr=False)
    free_params: tuple = ()

    def to_dict(self) -> dict:
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "ci95": {k: float(v) for k, v in self.ci95_half_widths.items()},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "free_params": list(self.free_params),
        }


@dataclass(frozen=True)
class DisambiguationResult:
    k: int
    t_rep: float
    coarse_diff: float
    fine_diff: float
    total_delay: float
    ci95_half_width: float
    k_residual: float


# ---------------------------------------------------------------------------
# Damped Gauss-Newton
# ---------------------------------------------------------------------------

def _damped_gauss_newton(residual_jac: Callable, theta0: np.ndarray, max_iter: int = 200,
                         xtol: float = 1e-10, scale: Optional[np.ndarray] = None):
    """Minimize ``|r(theta)|^2`` given ``residual_jac(theta) -> (r, J)``.

    Damping is multiplied by 10 after a rejected step and divided by 10 after
    an accepted one.  Stops when every component of the accepted step is below
    ``xtol * (|theta| + scale)``.
    """
    theta = np.array(theta0, dtype=float)
    if scale is None:
        scale = np.ones_like(theta)
    r, J = residual_jac(theta)
    A = J.T @ J
    if not np.all(np.isfinite(A)) or np.linalg.matrix_rank(A) < theta.size:
        raise FitError("degenerate Jacobian at the starting point")
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1e-300
        accepted = False
        while lam < 1e16:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + step
            if np.all(np.abs(step) <= xtol * (np.abs(theta) + scale)):
                # the step is below tolerance: accept without probing damping
                r_t, J_t = residual_jac(trial)
                cost_t = float(r_t @ r_t)
                accepted = np.isfinite(cost_t) and cost_t <= cost * (1.0 + 1e-12)
                if not accepted:
                    r_t, J_t, cost_t, trial = r, J, cost, theta
                accepted = True
                break
            r_t, J_t = residual_jac(trial)
            cost_t = float(r_t @ r_t)
            if np.isfinite(cost_t) and cost_t <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent possible: at a minimum to working precision
            converged = bool(np.all(np.abs(g) <= 1e-8 * (1.0 + cost) * np.sqrt(diag + 1e-300)))
            break
        small = np.all(np.abs(step) <= xtol * (np.abs(theta) + scale))
        theta, r, J, cost = trial, r_t, J_t, cost_t
        lam = max(lam / 10.0, 1e-12)
        if small:
            converged = True
            break
    return theta, r, J, cost, converged, it


def _covariance(J: np.ndarray, cost: float, reduced: bool = True) -> np.ndarray:
    n, p = J.shape
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular normal matrix at the optimum") from exc
    if reduced and n > p:
        cov = cov * (cost / (n - p))
    return cov


# ---------------------------------------------------------------------------
# Interferogram fit
# ---------------------------------------------------------------------------

INTERFEROGRAM_PARAMS = ("delay_offset", "amplitude", "beta2L", "background")


def wrap_centered(x, period):
    """Map ``x`` into ``(-period/2, period/2]``."""
    y = np.mod(np.asarray(x, dtype=float) + 0.5 * period, period) - 0.5 * period
    y = np.where(y == -0.5 * period, 0.5 * period, y)
    return float(y) if y.ndim == 0 else y


def _template(state, base, omega, k, u, beta):
    """Trace value and derivatives w.r.t. u (ps) and beta at positions u."""
    quad = 0.5 * (k * omega) ** 2
    a = base * np.exp(1j * quad * beta)
    E = np.exp(1j * np.multiply.outer(u, k * omega))
    S = E @ a
    dS_du = E @ (a * 1j * k * omega)
    dS_db = E @ (a * 1j * quad)
    P = np.abs(S) ** 2
    dP_du = 2.0 * np.real(np.conj(S) * dS_du)
    dP_db = 2.0 * np.real(np.conj(S) * dS_db)
    return P, dP_du, dP_db


def fit_interferogram(data: Interferogram, state: BfcState, mix: MixingCoefficients,
                      free_params: Sequence[str] = ("delay_offset", "amplitude"),
                      beta2L_total: float = 0.0, background: float = 0.0,
                      max_iter: int = 200, scale_by_chi2: bool = True,
                      weighting: str = "counts", model_floor: float = 0.1) -> FitResult:
    """Weighted least-squares fit of the coincidence model to counts.

    Model: ``counts ~ amplitude * P(x - delay_offset; beta2L) / P_ref + background``
    where ``x`` is the scan position in ps (phase scans are converted with
    ``x = phase / w_fsr``), ``P`` is the dispersive trace in effective delay,
    and ``P_ref`` is the peak of the dispersion-free trace, so ``amplitude`` is
    the peak count a dispersion-free link would give.  Weights are
    ``1 / max(counts, 1)``.  With ``weighting="model"`` the fit is repeated
    with weights ``1 / max(model, model_floor)`` from the previous solution
    until the weights settle; the fixed point is the Poisson maximum
    likelihood estimate, which stays unbiased and efficient at low counts.

    ``delay_offset`` is reported modulo the repetition period, centered in
    ``(-t_rep/2, t_rep/2]``; ``phase_offset`` is the same quantity in radians.
    The sign of ``beta2L`` cannot be identified from one symmetric trace; when
    it is free the search keeps the sign of ``beta2L_total`` (negative if 0).
    """
    free = tuple(free_params)
    unknown = set(free) - set(INTERFEROGRAM_PARAMS)
    if unknown:
        raise ValueError(f"unknown free parameters: {sorted(unknown)}")
    if weighting not in ("counts", "model"):
        raise ValueError(f"unknown weighting {weighting!r}")
    for required in ("delay_offset", "amplitude"):
        if required not in free:
            raise ValueError(f"{required} must be free")
    if data.counts is None:
        raise ValueError("interferogram has no counts to fit")
    y = np.asarray(data.counts, dtype=float)
    n = y.size
    if n < 2 * len(free):
        raise FitError(f"need at least {2 * len(free)} points for {len(free)} parameters")

    omega = state.omega
    t_rep = state.t_rep
    k = state.orders.astype(float)
    base = template_weights(state, mix, 0.0)
    x = data.axis if data.scan_kind is ScanKind.DELAY else data.axis / omega
    u_ref = np.linspace(0.0, t_rep, 2048, endpoint=False)
    p_ref = _template(state, base, omega, k, u_ref, 0.0)[0].max()
    if not p_ref > 0:
        raise FitError("model trace vanishes")
    sw = 1.0 / np.sqrt(np.maximum(y, 1.0))

    fixed = {"beta2L": float(beta2L_total), "background": float(background)}
    theta0 = _seed_interferogram(x, y, sw, state, base, omega, k, p_ref, free, fixed)
    index = {name: i for i, name in enumerate(free)}

    def unpack(theta):
        vals = dict(fixed)
        for name, i in index.items():
            vals[name] = theta[i]
        return vals

    def model_jac(theta):
        v = unpack(theta)
        P, dP_du, dP_db = _template(state, base, omega, k, x - v["delay_offset"], v["beta2L"])
        model = v["amplitude"] * P / p_ref + v["background"]
        J = np.empty((n, len(free)))
        for name, i in index.items():
            if name == "delay_offset":
                J[:, i] = -v["amplitude"] * dP_du / p_ref
            elif name == "amplitude":
                J[:, i] = P / p_ref
            elif name == "beta2L":
                J[:, i] = v["amplitude"] * dP_db / p_ref
            else:
                J[:, i] = 1.0
        return model, J

    def residual_jac(theta):
        model, J = model_jac(theta)
        return sw * (model - y), sw[:, None] * J

    scale = np.array([{"delay_offset": t_rep, "amplitude": max(y.max(), 1.0),
                       "beta2L": 1.0, "background": 1.0}[name] for name in free])
    if weighting == "model":
        sw = 1.0 / np.sqrt(np.maximum(model_jac(theta0)[0], model_floor))
    theta, r, J, cost, converged, iters = _damped_gauss_newton(
        residual_jac, theta0, max_iter=max_iter, scale=scale)
    if weighting == "model":
        for _ in range(20):
            prev = theta
            sw = 1.0 / np.sqrt(np.maximum(model_jac(theta)[0], model_floor))
            theta, r, J, cost, converged, it = _damped_gauss_newton(
                residual_jac, theta, max_iter=max_iter, xtol=1e-8, scale=scale)
            iters += it
            if np.all(np.abs(theta - prev) <= 1e-7 * (np.abs(prev) + scale)):
                break
        else:
            converged = False
    cov = _covariance(J, cost, reduced=scale_by_chi2)
    half = Z95 * np.sqrt(np.maximum(np.diag(cov), 0.0))

    vals = unpack(theta)
    vals["delay_offset"] = wrap_centered(vals["delay_offset"], t_rep)
    vals["phase_offset"] = vals["delay_offset"] * omega
    ci = {name: float(half[i]) for name, i in index.items()}
    ci["phase_offset"] = ci["delay_offset"] * omega
    return FitResult({k_: float(v_) for k_, v_ in vals.items()}, ci, math.sqrt(cost),
                     converged, iters, cov, free)


def _seed_interferogram(x, y, sw, state, base, omega, k, p_ref, free, fixed):
    """Grid search over one period of offsets (and dispersion, when free).

    Amplitude and background are solved linearly for every candidate.
    """
    t_rep = state.t_rep
    with_bg = "background" in free
    x_peak = x[int(np.argmax(y))]
    offsets = x_peak + t_rep * (np.arange(256) / 256.0 - 0.5)
    if "beta2L" in free:
        sign = -1.0 if fixed["beta2L"] <= 0 else 1.0
        betas = sign * np.linspace(0.25, 20.0, 80)
        if fixed["beta2L"] != 0:
            betas = np.append(betas, fixed["beta2L"])
    else:
        betas = np.array([fixed["beta2L"]])
    w = sw * sw
    Ex = np.exp(1j * np.multiply.outer(x, k * omega))
    shift = np.exp(-1j * np.multiply.outer(k * omega, offsets))
    quad = 0.5 * (k * omega) ** 2
    best = (math.inf, None)
    for beta in betas:
        a = base * np.exp(1j * quad * beta)
        P = np.abs(Ex @ (a[:, None] * shift)) ** 2 / p_ref  # (n, offsets)
        spp = w @ (P * P)
        spy = w @ (P * y[:, None])
        syy = float(w @ (y * y))
        if with_bg:
            sp = w @ P
            s1 = float(w.sum())
            sy = float(w @ y)
            det = spp * s1 - sp * sp
            det = np.where(det > 0, det, np.inf)
            amp = (spy * s1 - sp * sy) / det
            bg = (spp * sy - sp * spy) / det
            cost = syy - amp * spy - bg * sy
        else:
            amp = spy / np.where(spp > 0, spp, np.inf)
            bg = np.zeros_like(amp)
            cost = syy - amp * spy
        cost = np.where(amp > 0, cost, np.inf)
        i = int(np.argmin(cost))
        if cost[i] < best[0]:
            best = (float(cost[i]), (offsets[i], beta, amp[i], bg[i]))
    if best[1] is None:
        raise FitError("could not find a starting point with positive amplitude")
    off, beta, amp, bg = best[1]
    start = {"delay_offset": off, "amplitude": amp, "beta2L": beta,
             "background": bg if with_bg else fixed["background"]}
    return np.array([start[name] for name in free], dtype=float)


# ---------------------------------------------------------------------------
# Histogram fit
# ---------------------------------------------------------------------------

def fit_gaussian_histogram(hist: TimeTagHistogram, max_iter: int = 200) -> FitResult:
    """Least-squares fit of ``C * exp(-((x - A) / B)**2)`` to a histogram.

    ``A`` (ps) estimates the mean detection-time difference, ``B`` (ps) is
    ``sqrt(2)`` times the Gaussian standard deviation, ``C`` is the peak count
    per bin.
    """
    x = hist.bin_centers
    y = np.asarray(hist.counts, dtype=float)
    if not np.any(y > 0):
        raise FitError("histogram is empty")
    if np.count_nonzero(y) < 5:
        raise FitError("need at least 5 non-empty bins")
    total = y.sum()
    mean = float(np.sum(x * y) / total)
    std = float(np.sqrt(np.sum(y * (x - mean) ** 2) / total))
    theta0 = np.array([mean, max(math.sqrt(2.0) * std, hist.bin_width), y.max()])

    def residual_jac(theta):
        A, B, C = theta
        z = (x - A) / B
        g = np.exp(-z * z)
        J = np.column_stack([C * g * 2.0 * z / B, C * g * 2.0 * z * z / B, g])
        return C * g - y, J

    scale = np.array([hist.bin_width, hist.bin_width, max(y.max(), 1.0)])
    theta, r, J, cost, converged, iters = _damped_gauss_newton(
        residual_jac, theta0, max_iter=max_iter, scale=scale)
    theta[1] = abs(theta[1])
    if theta[1] < hist.bin_width:
        raise FitError(f"fitted width {theta[1]:.3g} ps collapsed below the bin width")
    cov = _covariance(J, cost)
    half = Z95 * np.sqrt(np.maximum(np.diag(cov), 0.0))
    names = ("A", "B", "C")
    return FitResult(dict(zip(names, map(float, theta))), dict(zip(names, map(float, half))),
                     math.sqrt(cost), converged, iters, cov, names)


# ---------------------------------------------------------------------------
# Derived quantities
# ---------------------------------------------------------------------------

def disambiguate(tau_h_with: float, tau_h_without: float, fine_with: float,
                 fine_without: float, t_rep: float, fine_ci_with: float = 0.0,
                 fine_ci_without: float = 0.0,
                 standard_errors: Sequence[float] = ()) -> DisambiguationResult:
    """Absolute delay inserted in the idler arm from coarse and fine data.

    ``tau_h_*`` are histogram means (signal minus idler detection time) and
    ``fine_*`` the signal-arm delay settings at an interferogram peak, with
    and without the inserted delay.  Extra idler delay lowers the detection
    time difference, so the coarse estimate is ``tau_h_without - tau_h_with``.
    Its nearest multiple of ``t_rep`` fixes the period count; a residual above
    ``t_rep / 4`` raises :class:`AmbiguityError`.
    """
    if not t_rep > 0:
        raise ValueError("t_rep must be positive")
    coarse = tau_h_without - tau_h_with
    fine = fine_with - fine_without
    k = int(round(coarse / t_rep))
    resid = abs(coarse - k * t_rep)
    if resid > 0.25 * t_rep:
        raise AmbiguityError(
            f"coarse difference {coarse:.3f} ps is {resid:.3f} ps from {k} periods "
            f"(limit {0.25 * t_rep:.3f} ps)")
    ci = combine_ci([fine_ci_with, fine_ci_without], standard_errors)
    return DisambiguationResult(k, t_rep, coarse, fine, k * t_rep + fine, ci, resid)


def estimate_rf_phase(peak_delay_1: float, peak_delay_2: float, fsr: float) -> float:
    """Relative RF phase of trace 1 w.r.t. trace 2 from their peak delays, in [0, 2pi)."""
    if not fsr > 0:
        raise ValueError("fsr must be positive")
    phase = math.fmod(-angular(fsr) * (peak_delay_1 - peak_delay_2), TWO_PI)
    if phase < 0:
        phase += TWO_PI
    if phase >= TWO_PI:
        phase = 0.0
    return phase


def combine_ci(half_widths: Iterable[float], standard_errors: Iterable[float] = (),
               se_factor: float = 2 * Z95) -> float:
    """Root-sum-square of independent 95% interval widths.

    Standard errors are first converted to the same footing by ``se_factor``
    (default 3.92, i.e. the full width of a 95% normal interval in units of
    the standard error).
    """
    hw = [float(h) for h in half_widths]
    se = [float(s) for s in standard_errors]
    if any(v < 0 for v in hw + se):
        raise ValueError("interval widths and standard errors must be non-negative")
    return math.sqrt(sum(h * h for h in hw) + sum((se_factor * s) ** 2 for s in se))


def compensation_phase(beta2L_total: float, state: BfcState) -> np.ndarray:
    """Per-pair quadratic phase cancelling the total accumulated dispersion.

    Program it on either arm (``ChannelSettings.bin_phase``) or split it
    between both; only the sum matters.
    """
    return -0.5 * beta2L_total * (state.orders * state.omega) ** 2
