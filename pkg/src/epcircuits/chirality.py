"""The coalescing eigenvector at an EP and its polarization.

At a generic EP, ``s I - M`` has rank three, so every nonzero column of its
adjugate spans the null space.  A rank drop to two (diabolic degeneracy)
makes the adjugate vanish, which doubles as the Jordan-rank test.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from . import numerics
from .dynamics import SystemMatrix, eigenvalues, omega_to_internal
from .errors import DegenerateRankError, DiabolicCaseError, NormalizationError, PreconditionError

RANK_TOL = 1e-8


def omega_internal(omega: complex) -> complex:
    """State-matrix eigenvalue belonging to a reported frequency."""
    return omega_to_internal(omega)


def _scaled(m: SystemMatrix, s: complex) -> np.ndarray:
    return (s * np.eye(4) - m.a) / m.omega_ref


def ep_eigenvector(m: SystemMatrix, s_ep: complex) -> np.ndarray:
    """Null vector of ``s_ep I - M`` from the dominant adjugate column.

    Normalized so the fourth component is 1 (or, if that component
    vanishes, the largest component is 1).
    """
    a = _scaled(m, s_ep)
    adj = numerics.adjugate(a)
    scale = max(np.linalg.norm(a), 1.0) ** 3
    if np.linalg.norm(adj) <= RANK_TOL * scale:
        raise DegenerateRankError(
            f"adjugate norm {np.linalg.norm(adj):.3e} is numerically zero: null space is at least two dimensional"
        )
    u = adj[:, int(np.argmax(np.linalg.norm(adj, axis=0)))]
    if abs(u[3]) > 1e-12 * np.linalg.norm(u):
        return u / u[3]
    return u / u[int(np.argmax(np.abs(u)))]


def _require_double(m: SystemMatrix, s: complex, rel: float = 1e-5) -> None:
    ev = eigenvalues(m)
    close = np.abs(ev - s) <= rel * max(abs(s), m.omega_ref)
    if np.count_nonzero(close) < 2:
        raise PreconditionError(f"{s} is not a double eigenvalue of the state matrix")


@dataclass(frozen=True)
class JordanPair:
    u: np.ndarray
    v: np.ndarray
    s_ep: complex
    rank_defect_residual: float


def jordan_chain(m: SystemMatrix, s_ep: complex) -> JordanPair:
    """Eigenvector ``u`` and generalized vector ``v`` with ``(M - s I) v = u``, ``v`` orthogonal to ``u``."""
    _require_double(m, s_ep)
    u = ep_eigenvector(m, s_ep)
    shifted = (m.a - s_ep * np.eye(4)) / m.omega_ref
    lhs = np.vstack([shifted, u.conj()[None, :]])
    rhs = np.concatenate([u / m.omega_ref, [0.0]])
    v, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    sv = np.linalg.svd(shifted, compute_uv=False)
    return JordanPair(u, v, s_ep, float(sv[-1] / sv[0]))


@dataclass(frozen=True)
class ChiralityReport:
    ratio: complex

    @property
    def modulus(self) -> float:
        return abs(self.ratio)

    @property
    def arg(self) -> float:
        return cmath.phase(self.ratio)

    def to_json(self) -> dict:
        return {
            "ratio_re": self.ratio.real,
            "ratio_im": self.ratio.imag,
            "modulus": self.modulus,
            "arg_rad": self.arg,
        }


def component_ratio(u, m: SystemMatrix | None = None) -> ChiralityReport:
    """Ratio of the two coordinate components of ``u``.

    Without ``m`` the coordinates are the 3rd and 4th state components
    (``q1, q2`` of the mechanical form).  With ``m`` they are the port
    readout ``m.c @ u``: the loop currents for the circuit, which is what
    the phase experiment measures.
    """
    u = np.asarray(u, dtype=complex)
    y = m.c @ u if m is not None else u[2:4]
    if abs(y[1]) <= 1e-14 * max(np.max(np.abs(y)), 1e-300):
        raise NormalizationError("second coordinate component vanishes")
    return ChiralityReport(complex(y[0] / y[1]))


def chirality_at(m: SystemMatrix, omega_ep: complex) -> ChiralityReport:
    return component_ratio(ep_eigenvector(m, omega_internal(omega_ep)), m)


def symmetric2x2_ep(e1: complex, e2: complex) -> tuple[complex, complex]:
    """EP of ``[[e1, d], [d, e2]]``: coupling ``d`` and eigenvector ratio ``x1/x2``.

    Of the two branches ``d = +/- i (e1 - e2)/2`` the one with non-positive
    imaginary part is returned (positive real part on a tie).
    """
    e1, e2 = complex(e1), complex(e2)
    if e1 == e2:
        raise DiabolicCaseError("e1 == e2: the degeneracy at zero coupling is diabolic")
    half = 0.5 * (e1 - e2)
    d = 1j * half
    if d.imag > 0 or (d.imag == 0 and d.real < 0):
        d = -d
    lam = 0.5 * (e1 + e2)
    # first row of (H - lam I) x = 0
    ratio = -d / (e1 - lam)
    return d, ratio
