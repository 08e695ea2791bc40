"""Simulated versions of the two bench measurements.

Impulse spectroscopy: drive both ports with one short rectangular pulse,
Fourier transform the port-A current, fit a rational function of degree 4/4
and read the resonances off the denominator.

Phase measurement: drive both ports with decaying sinusoids at the EP
frequency, fit a decaying sinusoid of the same frequency and decay to each
port current and record the phase difference.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics
from .dynamics import (
    ResonanceSet,
    SystemMatrix,
    TimeSeries,
    check_resolution,
    resonance_set,
    resonances,
    simulate,
    zoh_matrices,
)
from .errors import FitDegenerateError, InsufficientDataError, PreconditionError

logger = logging.getLogger(__name__)

OMEGA_REF = 1e5
DEFAULT_DT = 1e-6
DEFAULT_SAMPLES = 8192


def _wrap(phi):
    """Wrap to (-pi, pi]."""
    out = np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


# impulse spectroscopy -------------------------------------------------------


def short_pulse_limit(m: SystemMatrix) -> float:
    """Largest pulse width still counted as short: ``0.1 / max|omega_i|``."""
    return 0.1 / float(np.max(np.abs(resonances(m).omega)))


def impulse_experiment(
    m: SystemMatrix,
    t_p: float,
    dt: float = DEFAULT_DT,
    n: int = DEFAULT_SAMPLES,
    ports: tuple[float, float] = (1.0, 1.0),
    amplitude: float = 1.0,
) -> TimeSeries:
    """Response to a rectangular pulse of width ``t_p`` on both ports.

    The pulse edge need not fall on the sample grid: the step containing it
    is split and propagated exactly.  Voltage and feedthrough samples use
    the mean drive over each step.  ``meta["long_pulse"]`` flags pulses
    longer than :func:`short_pulse_limit`.
    """
    if not t_p > 0:
        raise PreconditionError("pulse width must be positive")
    check_resolution(m, dt)
    drive = amplitude * np.asarray(ports, dtype=float)
    k_full = int(math.floor(t_p / dt + 1e-9))
    frac = t_p - k_full * dt
    if frac <= 1e-9 * dt:
        frac = 0.0
    E, G = zoh_matrices(m, dt)
    split = None
    if frac > 0:
        E1, G1 = zoh_matrices(m, frac)
        E2, _ = zoh_matrices(m, dt - frac)
        split = (E2 @ E1, E2 @ G1 @ drive)
    # recorded drive is the interval mean, so a partial last step keeps the pulse area
    u = np.zeros((n, 2))
    u[: min(n, k_full)] = drive
    if frac > 0 and k_full < n:
        u[k_full] = drive * (frac / dt)
    xs = np.empty((n, 4))
    x = np.zeros(4)
    g_on = G @ drive
    for k in range(n):
        xs[k] = x
        if k < k_full:
            x = E @ x + g_on
        elif k == k_full and split is not None:
            x = split[0] @ x + split[1]
        else:
            x = E @ x
    ys = xs @ m.c.T + u @ m.d.T
    labels = ("v_A", "v_B") + tuple(m.output_labels)
    ts = TimeSeries(dt, 0.0, labels, np.hstack([u, ys]))
    limit = short_pulse_limit(m)
    ts.meta.update(t_p=t_p, ports=tuple(ports), amplitude=amplitude, long_pulse=t_p > limit)
    if t_p > limit:
        logger.warning("pulse width %.3g s exceeds the short-pulse limit %.3g s", t_p, limit)
    return ts


@dataclass(frozen=True)
class SpectrumSamples:
    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.omega) != len(self.values):
            raise ValueError("grid and values differ in length")
        if np.any(np.diff(self.omega) <= 0):
            raise ValueError("frequency grid must be strictly increasing")

    def __truediv__(self, other: "SpectrumSamples") -> "SpectrumSamples":
        return SpectrumSamples(self.omega, self.values / other.values)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write("omega_rad_s,re,im\n")
        for w, v in zip(self.omega, self.values):
            buf.write(f"{w:.17g},{v.real:.17g},{v.imag:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def padded_length(n: int) -> int:
    return 4 * (1 << max(0, (n - 1).bit_length()))


def dft(ts: TimeSeries, channel: str | int = "i_A", pad: bool = True) -> SpectrumSamples:
    """One-sided ``X(omega_k) = dt * sum_n x_n exp(-i omega_k t_n)``.

    With ``pad`` the record is zero-padded to four times the next power of
    two, which interpolates the spectrum on a finer grid.
    """
    x = ts.data[:, channel] if isinstance(channel, int) else ts.channel(channel)
    if len(x) == 0:
        raise InsufficientDataError("empty time series")
    nfft = padded_length(len(x)) if pad else len(x)
    X = np.fft.rfft(x, nfft) * ts.dt
    omega = 2 * np.pi * np.fft.rfftfreq(nfft, ts.dt)
    if ts.t0:
        X = X * np.exp(-1j * omega * ts.t0)
    return SpectrumSamples(omega, X)


def ideal_pulse_spectrum(omega, t_p: float, amplitude: float = 1.0) -> SpectrumSamples:
    """Spectrum of a delta of equal area: flat at ``amplitude * t_p``."""
    omega = np.asarray(omega, dtype=float)
    return SpectrumSamples(omega, np.full(omega.shape, amplitude * t_p, dtype=complex))


def rect_pulse_spectrum(omega, t_p: float, amplitude: float = 1.0) -> SpectrumSamples:
    omega = np.asarray(omega, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = amplitude * (1 - np.exp(-1j * omega * t_p)) / (1j * omega)
    v = np.where(omega == 0, amplitude * t_p, v)
    return SpectrumSamples(omega, v)


@dataclass(frozen=True)
class RationalFit:
    """``F = sum a_i x^i / sum b_i x^i`` in ``x = i omega / omega_ref``.

    ``x`` is the scaled Laplace variable, so both coefficient vectors are
    real and the denominator roots are scaled state-matrix eigenvalues.
    """

    a: np.ndarray
    b: np.ndarray
    omega_ref: float = OMEGA_REF
    iterations: int = 0

    @property
    def monic(self) -> bool:
        return self.b[-1] == 1.0

    def __call__(self, omega):
        x = 1j * np.asarray(omega, dtype=float) / self.omega_ref
        return numerics.polyval(self.a, x) / numerics.polyval(self.b, x)

    def to_json(self) -> dict:
        return {
            "a": [float(v) for v in self.a],
            "b": [float(v) for v in self.b],
            "omega_ref": self.omega_ref,
            "iterations": self.iterations,
        }


def fit_rational(
    sp: SpectrumSamples,
    v_spectrum: SpectrumSamples | None = None,
    omega_max: float | None = None,
    omega_ref: float = OMEGA_REF,
    max_iter: int = 10,
    rtol: float = 1e-10,
    order: int = 4,
) -> RationalFit:
    """Levy linearization refined by Sanathanan-Koerner reweighting.

    Minimizes ``|N(x) - F D(x)| / |D_prev(x)|`` over real coefficients with
    ``D(0) = 1`` during the solve; the result is rescaled to a monic
    denominator whenever its leading coefficient is significant.  Without
    ``omega_max`` the band is three times the frequency of the response
    peak.
    """
    F = sp.values if v_spectrum is None else sp.values / v_spectrum.values
    omega = sp.omega
    if omega_max is None:
        finite = np.isfinite(F)
        peak = omega[finite][np.argmax(np.abs(F[finite]))] if np.any(finite) else 0.0
        omega_max = 3.0 * peak if peak > 0 else float(omega[-1])
    band = (omega <= omega_max) & np.isfinite(F)
    if np.count_nonzero(band) < 32:
        raise InsufficientDataError(f"only {np.count_nonzero(band)} samples in the fit band (need 32)")
    w = omega[band]
    F = F[band]
    if not np.any(F != 0):
        raise FitDegenerateError("response is identically zero")
    x = 1j * w / omega_ref
    V = np.vander(x, order + 1, increasing=True)
    cols = np.hstack([V, -F[:, None] * V[:, 1:]])  # a_0..a_n, b_1..b_n
    weight = np.ones(len(x))
    coef = None
    it = 0
    for it in range(max_iter + 1):
        A = cols * weight[:, None]
        rhs = F * weight
        Ar = np.vstack([A.real, A.imag])
        br = np.concatenate([rhs.real, rhs.imag])
        sol, _, rank, _ = np.linalg.lstsq(Ar, br, rcond=1e-12)
        if rank < order + 1:
            raise FitDegenerateError(f"normal equations have rank {rank}")
        done = coef is not None and np.max(np.abs(sol - coef)) <= rtol * max(np.max(np.abs(sol)), 1e-300)
        coef = sol
        if done:
            break
        den = numerics.polyval(np.concatenate([[1.0], coef[order + 1 :]]), x)
        weight = 1.0 / np.abs(den)
    a = coef[: order + 1]
    b = np.concatenate([[1.0], coef[order + 1 :]])
    if abs(b[-1]) > 1e-10 * np.max(np.abs(b)):
        a, b = a / b[-1], b / b[-1]
        b[-1] = 1.0
    return RationalFit(a, b, omega_ref, it)


def fitted_eigenvalues(fit: RationalFit) -> ResonanceSet:
    return resonance_set(numerics.poly_roots(fit.b) * fit.omega_ref)


@dataclass(frozen=True)
class ImpulseMeasurement:
    record: TimeSeries
    spectrum: SpectrumSamples
    fit: RationalFit
    resonances: ResonanceSet


def impulse_pipeline(
    m: SystemMatrix,
    t_p: float = 1e-6,
    dt: float = DEFAULT_DT,
    n: int = DEFAULT_SAMPLES,
    ports: tuple[float, float] = (1.0, 1.0),
    channel: str = "i_A",
    deconvolve: bool = False,
) -> ImpulseMeasurement:
    """Pulse, transform, fit, extract resonances.

    By default the current spectrum is normalized by the pulse area, i.e.
    the pulse is treated as an ideal impulse; this is what makes long pulses
    distort the result.  ``deconvolve`` divides by the exact sampled pulse
    spectrum instead.
    """
    rec = impulse_experiment(m, t_p, dt, n, ports)
    sp = dft(rec, channel)
    if deconvolve:
        vch = "v_A" if channel == "i_A" else "v_B"
        v = dft(rec, vch)
    else:
        v = ideal_pulse_spectrum(sp.omega, t_p, rec.meta["amplitude"] * max(abs(p) for p in ports))
    F = sp / v
    fit = fit_rational(F)
    return ImpulseMeasurement(rec, F, fit, fitted_eigenvalues(fit))


def eigenvalue_error(measured: ResonanceSet, reference: ResonanceSet) -> float:
    """Worst relative distance from each reference value to the nearest measured one."""
    return max(float(np.min(np.abs(measured.omega - w)) / abs(w)) for w in reference.omega)


# phase measurement ----------------------------------------------------------


@dataclass(frozen=True)
class ExcitationSpec:
    """``v(t) = C sin(omega0 (t - t0) + phi_v) exp(-gamma0 (t - t0))`` for ``t >= t0``."""

    C: float
    omega0: float
    gamma0: float
    phi_v: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise PreconditionError("gamma0 must be positive")
        if not self.C > 0:
            raise PreconditionError("amplitude must be positive")

    def waveform(self, t) -> np.ndarray:
        tt = np.asarray(t, dtype=float) - self.t0
        v = self.C * np.sin(self.omega0 * tt + self.phi_v) * np.exp(-self.gamma0 * tt)
        return np.where(tt >= 0, v, 0.0)


@dataclass(frozen=True)
class SinusoidFit:
    C: float
    phi: float
    alpha: float
    beta: float
    residual: float


def fit_decaying_sinusoid(t, y, omega0: float, gamma0: float) -> SinusoidFit:
    """Least squares for ``exp(-gamma0 t) (alpha sin omega0 t + beta cos omega0 t)``.

    ``C = hypot(alpha, beta)`` and ``phi = atan2(beta, alpha)`` so that the
    model equals ``C sin(omega0 t + phi) exp(-gamma0 t)``.  ``residual`` is
    the relative RMS misfit.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 4 or t[-1] - t[0] < 4 * 2 * np.pi / omega0 * (1 - 1e-9):
        raise InsufficientDataError("fit window shorter than four periods")
    # shift the decay reference to the window start to keep columns O(1)
    tr = t[0]
    env = np.exp(-gamma0 * (t - tr))
    X = np.column_stack([env * np.sin(omega0 * t), env * np.cos(omega0 * t)])
    (ap, bp), *_ = np.linalg.lstsq(X, y, rcond=None)
    model = X @ np.array([ap, bp])
    norm = np.linalg.norm(y)
    resid = float(np.linalg.norm(y - model) / norm) if norm > 0 else 0.0
    growth = math.exp(gamma0 * tr)
    alpha, beta = ap * growth, bp * growth
    return SinusoidFit(float(math.hypot(alpha, beta)), float(math.atan2(bp, ap)), alpha, beta, resid)


@dataclass(frozen=True)
class PhaseExperimentResult:
    dphi_v: np.ndarray
    dphi_i: np.ndarray
    residual: np.ndarray
    phi_iA_vB: np.ndarray
    phi_iB_vB: np.ndarray
    t_settle: float
    window: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.dphi_i))

    @property
    def std(self) -> float:
        return float(np.std(self.dphi_i))

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write("dphi_v_rad,dphi_i_rad,residual,dphi_iA_vB_rad,dphi_iB_vB_rad\n")
        for row in zip(self.dphi_v, self.dphi_i, self.residual, self.phi_iA_vB, self.phi_iB_vB):
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


SETTLE_FACTOR = 30.0
WINDOW_PERIODS = 6.0


def phase_experiment(
    m: SystemMatrix,
    ep,
    n_phases: int = 16,
    dt: float = DEFAULT_DT,
    amplitude: float = 1.0,
    settle_factor: float = SETTLE_FACTOR,
    window_periods: float = WINDOW_PERIODS,
) -> PhaseExperimentResult:
    """Steady-state phase difference of the port currents versus drive phase.

    ``ep`` is an EP result or the complex frequency ``S1`` itself.  Port A
    is driven with phase ``dphi_v``, port B with phase 0, both at
    ``omega0 = |Re S1|`` and ``gamma0 = -Im S1``.  The fit window starts at
    ``settle_factor / gamma_slowest`` and spans ``window_periods`` periods.
    """
    if n_phases < 8:
        raise PreconditionError("need at least 8 excitation phases")
    s1 = complex(getattr(ep, "omega_ep", ep))
    omega0, gamma0 = abs(s1.real), -s1.imag
    gamma_slowest = float(np.min(np.abs(resonances(m).omega.imag)))
    if gamma_slowest <= 0:
        raise PreconditionError("system has an undamped mode; no steady state to settle into")
    t_settle = settle_factor / gamma_slowest
    window = window_periods * 2 * np.pi / omega0
    n = int(math.ceil((t_settle + window) / dt)) + 2
    t = dt * np.arange(n)
    tm = t + 0.5 * dt  # hold each sample over its step: sample at mid-step
    sel = (t >= t_settle) & (t <= t_settle + window)

    grid = 2 * np.pi * np.arange(n_phases) / n_phases
    dphi_i = np.empty(n_phases)
    resid = np.empty(n_phases)
    phi_a = np.empty(n_phases)
    phi_b = np.empty(n_phases)
    vb = ExcitationSpec(amplitude, omega0, gamma0, 0.0)
    for k, dv in enumerate(grid):
        va = ExcitationSpec(amplitude, omega0, gamma0, float(dv))
        u = np.column_stack([va.waveform(tm), vb.waveform(tm)])
        ts = simulate(m, u, dt, n)
        fa = fit_decaying_sinusoid(t[sel], ts.channel(m.output_labels[0])[sel], omega0, gamma0)
        fb = fit_decaying_sinusoid(t[sel], ts.channel(m.output_labels[1])[sel], omega0, gamma0)
        dphi_i[k] = _wrap(fa.phi - fb.phi)
        resid[k] = max(fa.residual, fb.residual)
        phi_a[k] = _wrap(fa.phi - vb.phi_v)
        phi_b[k] = _wrap(fb.phi - vb.phi_v)
    return PhaseExperimentResult(grid, dphi_i, resid, phi_a, phi_b, t_settle, window)
