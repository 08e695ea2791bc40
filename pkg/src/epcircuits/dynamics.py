"""State matrices, resonances, driven response and time-domain simulation.

Frequency convention
--------------------
A state-matrix eigenvalue ``s = sigma + i Omega`` is reported as the complex
frequency ``omega = i * conj(s) = Omega + i sigma``.  Decaying modes therefore
sit in the lower half plane, and the pair ``s, conj(s)`` shows up as the
mirror pair ``omega, -conj(omega)``.  Phasors follow ``x(t) = Re(X e^{s t})``
with ``s = i conj(omega)``, so a positive ``Re(omega)`` is a positive
oscillation frequency.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics
from .errors import (
    InvalidCouplingError,
    NearSingularError,
    NumericalError,
    ResolutionError,
    ResonanceSingularityError,
)
from .model import CircuitParams, OscillatorParams

#: Sign of the mutual-inductance term for the chosen port-current reference
#: directions.  The two loops are wound so their fluxes oppose; this fixes the
#: chirality sign (port A leading) and leaves every eigenvalue unchanged.
WINDING_SENSE = -1.0

OMEGA_REF_CIRCUIT = 1e5


@dataclass(frozen=True)
class SystemMatrix:
    """Linear state-space model ``x' = a x + b u``, ``y = c x + d u``.

    ``u`` holds the two port drives and ``y`` the two port responses (loop
    currents for the circuit, coordinates ``q1, q2`` for the mechanical form).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    form: str
    omega_ref: float = 1.0
    state_labels: tuple[str, ...] = ("x1", "x2", "x3", "x4")
    output_labels: tuple[str, str] = ("i_A", "i_B")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.a, 2))


@dataclass(frozen=True)
class ResonanceSet:
    """Four complex frequencies in the reporting convention.

    ``mirror[i]`` is the index of ``-conj(omega[i])``; purely imaginary
    (overdamped) entries are their own mirror.
    """

    omega: np.ndarray
    mirror: np.ndarray

    def internal(self) -> np.ndarray:
        """State-matrix eigenvalues ``s = i conj(omega)``."""
        return 1j * np.conj(self.omega)

    def right_half(self) -> np.ndarray:
        return self.omega[self.omega.real > 0]

    def __len__(self):
        return len(self.omega)

    def __iter__(self):
        return iter(self.omega)


@dataclass(frozen=True)
class DriveSpec:
    """Complex phasor amplitudes for the two ports at a common frequency."""

    amplitudes: tuple[complex, complex]

    def vector(self) -> np.ndarray:
        v = np.asarray(self.amplitudes, dtype=complex)
        if not np.all(np.isfinite(v)):
            raise ValueError("drive amplitudes must be finite")
        return v


@dataclass(frozen=True)
class TimeSeries:
    dt: float
    t0: float
    labels: tuple[str, ...]
    data: np.ndarray  # (n_samples, n_channels)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.data.ndim != 2 or self.data.shape[1] != len(self.labels):
            raise ValueError("data must be (n_samples, n_channels) matching labels")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.data))

    def __len__(self):
        return len(self.data)

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, self.labels.index(name)]

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write(",".join(("t",) + tuple(self.labels)) + "\n")
        for t, row in zip(self.times, self.data):
            buf.write(",".join(format(v, ".17g") for v in (t, *row)) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def mechanical_matrix(p: OscillatorParams, omega_ref: float | None = None) -> SystemMatrix:
    """State ordering ``(p1, p2, q1, q2)``; drives enter the momentum rows.

    ``omega_ref`` defaults to the power of ten nearest the larger undamped
    frequency, which keeps the scaled quartic coefficients O(1).
    """
    p.validate()
    if omega_ref is None:
        omega_ref = 10.0 ** round(math.log10(max(p.omega1, p.omega2)))
    g, f = p.g, p.f
    a = np.array(
        [
            [-2 * g - 2 * p.k1, 2 * g, -f - p.omega1**2, f],
            [2 * g, -2 * g - 2 * p.k2, f, -f - p.omega2**2],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ]
    )
    b = np.zeros((4, 2))
    b[0, 0] = b[1, 1] = 1.0
    c = np.zeros((2, 4))
    c[0, 2] = c[1, 3] = 1.0
    return SystemMatrix(
        a, b, c, np.zeros((2, 2)), "mechanical", omega_ref,
        ("p1", "p2", "q1", "q2"), ("q1", "q2"),
    )


def circuit_matrix(c: CircuitParams, winding: float = WINDING_SENSE) -> SystemMatrix:
    """Kirchhoff state equations for the two coupled series loops.

    State ``(vC1, vC2, iL1, iL2)``.  In loop ``j`` with series resistance
    ``R``, inductor shunt ``P`` and capacitor ``C``, the loop current is
    ``i = (v_port - vC + P iL) / (R + P)`` and the inductor-pair voltage is
    ``vL = P (v_port - vC - R iL) / (R + P)``; then ``C vC' = i`` and
    ``Lmat iL' = vL`` with ``Lmat = [[Lp, w M], [w M, Ls]]``.
    """
    c.validate()
    lmat = np.array([[c.Lp, winding * c.Mmut], [winding * c.Mmut, c.Ls]])
    if np.linalg.det(lmat) <= 0 or c.Lp <= 0:
        raise InvalidCouplingError("inductance matrix is not positive definite")
    linv = np.linalg.inv(lmat)
    series = (c.R1, c.R2)
    shunt = (c.Rp, c.Rs)
    caps = (c.Cp, c.Cs)

    a = np.zeros((4, 4))
    b = np.zeros((4, 2))
    out = np.zeros((2, 4))
    d = np.zeros((2, 2))
    for j in range(2):
        R, P, C = series[j], shunt[j], caps[j]
        gj = 1.0 / (R + P)
        # loop current
        out[j, j] = -gj
        out[j, 2 + j] = P * gj
        d[j, j] = gj
        a[j, :] = out[j, :] / C
        b[j, j] = gj / C
        # inductor voltage vL_j = P gj (v_port - vC_j - R iL_j)
        for k in range(2):
            a[2 + k, j] -= linv[k, j] * P * gj
            a[2 + k, 2 + j] -= linv[k, j] * P * gj * R
            b[2 + k, j] += linv[k, j] * P * gj
    return SystemMatrix(
        a, b, out, d, "circuit", OMEGA_REF_CIRCUIT,
        ("vC1", "vC2", "iL1", "iL2"), ("i_A", "i_B"),
    )


def system_matrix(params, **kw) -> SystemMatrix:
    if isinstance(params, CircuitParams):
        return circuit_matrix(params, **kw)
    if isinstance(params, OscillatorParams):
        return mechanical_matrix(params, **kw)
    raise TypeError(f"cannot build a system from {type(params).__name__}")


def eigenvalues(m: SystemMatrix) -> np.ndarray:
    """State-matrix eigenvalues via the scaled characteristic quartic."""
    return numerics.poly_roots(numerics.char_poly(m.a, m.omega_ref)) * m.omega_ref


def _pair_conjugates(s: np.ndarray, tol: float = 1e-9):
    """Split roots into conjugate pairs (upper member returned) and real roots."""
    scale = max(np.max(np.abs(s)), 1e-300)
    real_mask = np.abs(s.imag) <= tol * scale
    reals = list(s[real_mask].real)
    upper = list(s[(~real_mask) & (s.imag > 0)])
    lower = list(s[(~real_mask) & (s.imag < 0)])
    pairs = []
    if len(upper) != len(lower):
        raise NumericalError("eigenvalues are not closed under conjugation")
    for z in sorted(upper, key=lambda v: (v.imag, v.real)):
        k = int(np.argmin([abs(z - np.conj(w)) for w in lower]))
        w = lower.pop(k)
        pairs.append(0.5 * (z + np.conj(w)))
    return pairs, reals


def resonances(m: SystemMatrix) -> ResonanceSet:
    return resonance_set(eigenvalues(m))


def resonance_set(s) -> ResonanceSet:
    """Reporting-convention set from the eigenvalues of a real matrix."""
    pairs, reals = _pair_conjugates(np.asarray(s, dtype=complex))
    # s = sigma + i Omega  ->  omega = Omega + i sigma and mirror -Omega + i sigma
    right = sorted((complex(z.imag, z.real) for z in pairs), key=lambda w: (w.real, w.imag))
    imag_only = [complex(0.0, r) for r in sorted(reals)]
    omega = right + [-np.conj(w) for w in right] + imag_only
    n_pair = len(right)
    mirror = list(range(n_pair, 2 * n_pair)) + list(range(n_pair)) + list(
        range(2 * n_pair, 2 * n_pair + len(imag_only))
    )
    return ResonanceSet(np.array(omega, dtype=complex), np.array(mirror, dtype=int))


def omega_to_internal(omega: complex) -> complex:
    return 1j * np.conj(omega)


def internal_to_omega(s: complex) -> complex:
    return 1j * np.conj(s)


@dataclass(frozen=True)
class StationaryResponse:
    state: np.ndarray
    outputs: np.ndarray
    s: complex

    def signal(self, t) -> np.ndarray:
        """Real output waveforms ``Re(y e^{s t})``, shape ``(len(t), 2)``."""
        t = np.asarray(t, dtype=float)
        return np.real(self.outputs[None, :] * np.exp(self.s * t)[:, None])


def stationary_response(m: SystemMatrix, d: DriveSpec, omega: complex) -> StationaryResponse:
    """Particular solution ``x = (s I - M)^{-1} B c`` at ``s = i conj(omega)``."""
    s = omega_to_internal(complex(omega))
    ev = eigenvalues(m)
    k = int(np.argmin(np.abs(ev - s)))
    if abs(ev[k] - s) <= 1e-12 * max(m.norm, 1.0):
        raise ResonanceSingularityError(
            f"drive frequency {omega} coincides with a resonance", internal_to_omega(ev[k])
        )
    u = d.vector()
    try:
        x = numerics.solve_complex(s * np.eye(4) - m.a, m.b @ u)
    except NearSingularError as exc:
        raise ResonanceSingularityError(str(exc), internal_to_omega(ev[k])) from None
    return StationaryResponse(x, m.c @ x + m.d @ u, s)


def max_resonance_frequency(m: SystemMatrix) -> float:
    return float(np.max(np.abs(resonances(m).omega.real)))


def check_resolution(m: SystemMatrix, dt: float, samples_per_period: float = 20.0) -> None:
    if not dt > 0:
        raise ResolutionError("dt must be positive")
    wmax = max_resonance_frequency(m)
    if wmax > 0 and dt > 2 * math.pi / (samples_per_period * wmax):
        raise ResolutionError(
            f"dt={dt:.3g} s resolves fewer than {samples_per_period:g} samples per period"
        )


def zoh_matrices(m: SystemMatrix, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """``E = exp(M dt)`` and ``G = int_0^dt exp(M t) dt B`` via one block exponential."""
    aug = np.zeros((6, 6))
    aug[:4, :4] = m.a
    aug[:4, 4:] = m.b
    ex = numerics.matrix_exp(aug, dt)
    return ex[:4, :4], ex[:4, 4:]


def _as_inputs(u, n_steps):
    if u is None:
        return np.zeros((n_steps, 2))
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[1] != 2:
        raise ValueError("inputs must have shape (n_steps, 2)")
    return u


def _pack(m, dt, t0, xs, u):
    ys = xs @ m.c.T + u @ m.d.T
    labels = tuple(m.state_labels) + tuple(m.output_labels)
    return TimeSeries(dt, t0, labels, np.hstack([xs, ys]))


def simulate(
    m: SystemMatrix,
    u=None,
    dt: float = 1e-6,
    n_steps: int | None = None,
    x0: Sequence[float] | None = None,
    t0: float = 0.0,
    check: bool = True,
) -> TimeSeries:
    """Exact zero-order-hold stepping ``x[k+1] = E x[k] + G u[k]``.

    ``u`` has shape ``(n_steps, 2)`` and is held constant over each step.
    Output channels are the states followed by the two port responses.
    """
    if n_steps is None:
        if u is None:
            raise ValueError("either u or n_steps is required")
        n_steps = len(u)
    u = _as_inputs(u, n_steps)[:n_steps]
    if len(u) < n_steps:
        u = np.vstack([u, np.zeros((n_steps - len(u), 2))])
    if check:
        check_resolution(m, dt)
    E, G = zoh_matrices(m, dt)
    x = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float).copy()
    xs = np.empty((n_steps, 4))
    bu = u @ G.T
    for k in range(n_steps):
        xs[k] = x
        x = E @ x + bu[k]
    return _pack(m, dt, t0, xs, u)


def simulate_rk4(m, u=None, dt=1e-6, n_steps=None, x0=None, substeps: int = 4) -> TimeSeries:
    """Classical Runge-Kutta with ``substeps`` steps per sample; inputs held per sample."""
    if n_steps is None:
        n_steps = len(u)
    u = _as_inputs(u, n_steps)
    h = dt / substeps
    a = m.a
    x = np.zeros(4) if x0 is None else np.asarray(x0, dtype=float).copy()
    xs = np.empty((n_steps, 4))
    for k in range(n_steps):
        xs[k] = x
        f = m.b @ u[k]
        for _ in range(substeps):
            k1 = a @ x + f
            k2 = a @ (x + 0.5 * h * k1) + f
            k3 = a @ (x + 0.5 * h * k2) + f
            k4 = a @ (x + h * k3) + f
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return _pack(m, dt, 0.0, xs, u)
