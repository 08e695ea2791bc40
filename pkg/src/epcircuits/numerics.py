"""Dense kernels specialized to 4x4 matrices and quartic polynomials.

Determinants and adjugates use exact cofactor expansion; the characteristic
polynomial comes from principal-minor sums, so it is real for real input by
construction.  Polynomials are stored with ascending coefficients.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePolynomialError, IterationLimitError, NearSingularError

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class PolyCoeffs:
    """Ascending coefficients ``c[0] + c[1] x + ...`` in ``x = s / scale``."""

    c: np.ndarray
    scale: float = 1.0
    variable: str = "s"

    @property
    def degree(self) -> int:
        return len(self.c) - 1

    def __call__(self, x):
        return polyval(self.c, x)

    def derivative(self) -> "PolyCoeffs":
        return PolyCoeffs(polyder(self.c), self.scale, self.variable)


def polyval(c, x):
    """Horner evaluation, ascending coefficients; broadcasts over ``x``."""
    x = np.asarray(x)
    out = np.zeros_like(x, dtype=np.result_type(x, np.asarray(c), float))
    for ci in c[::-1]:
        out = out * x + ci
    return out


def polyder(c) -> np.ndarray:
    c = np.asarray(c)
    if len(c) <= 1:
        return np.zeros(1, dtype=c.dtype)
    return c[1:] * np.arange(1, len(c))


def _as_array(m) -> np.ndarray:
    return np.asarray(getattr(m, "a", m))


def det3(a) -> complex:
    return (
        a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
        - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
        + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
    )


def _minor(a, i, j):
    rows = [r for r in range(4) if r != i]
    cols = [k for k in range(4) if k != j]
    return a[np.ix_(rows, cols)]


def det4(a):
    a = np.asarray(a)
    return sum((-1) ** j * a[0, j] * det3(_minor(a, 0, j)) for j in range(4))


def adjugate(a) -> np.ndarray:
    """Classical adjugate by cofactors; ``adj(a) @ a == det(a) * I``."""
    a = np.asarray(a)
    adj = np.empty((4, 4), dtype=np.result_type(a, float))
    for i in range(4):
        for j in range(4):
            adj[j, i] = (-1) ** (i + j) * det3(_minor(a, i, j))
    return adj


def char_poly(m, scale: float = 1.0) -> PolyCoeffs:
    """Monic ``det(x I - M / scale)`` from sums of principal minors."""
    a = np.asarray(_as_array(m), dtype=float) / scale
    if a.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got shape {a.shape}")
    e = [1.0]
    for k in (1, 2, 3):
        total = 0.0
        for idx in itertools.combinations(range(4), k):
            sub = a[np.ix_(idx, idx)]
            if k == 1:
                total += sub[0, 0]
            elif k == 2:
                total += sub[0, 0] * sub[1, 1] - sub[0, 1] * sub[1, 0]
            else:
                total += det3(sub)
        e.append(total)
    e.append(det4(a))
    # det(xI - A) = x^4 - e1 x^3 + e2 x^2 - e3 x + e4
    c = np.array([e[4], -e[3], e[2], -e[1], 1.0], dtype=float)
    return PolyCoeffs(c, scale)


def quartic_discriminant(c) -> float:
    """Discriminant of ``c4 x^4 + c3 x^3 + c2 x^2 + c1 x + c0``."""
    e, d, cc, b, a = (float(v) for v in c)
    return (
        256 * a**3 * e**3
        - 192 * a**2 * b * d * e**2
        - 128 * a**2 * cc**2 * e**2
        + 144 * a**2 * cc * d**2 * e
        - 27 * a**2 * d**4
        + 144 * a * b**2 * cc * e**2
        - 6 * a * b**2 * d**2 * e
        - 80 * a * b * cc**2 * d * e
        + 18 * a * b * cc * d**3
        + 16 * a * cc**4 * e
        - 4 * a * cc**3 * d**2
        - 27 * b**4 * e**2
        + 18 * b**3 * cc * d * e
        - 4 * b**3 * d**3
        - 4 * b**2 * cc**3 * e
        + b**2 * cc**2 * d**2
    )


def _backward_error_ok(c, z, tol):
    n = len(c) - 1
    bound = tol * np.max(np.abs(c)) * np.maximum(1.0, np.abs(z)) ** n
    return np.abs(polyval(c, z)) <= bound


def poly_roots(p, max_iter: int = 200, tol: float = 1e-10) -> np.ndarray:
    """All roots by Aberth-Ehrlich simultaneous iteration.

    Exact zero roots (vanishing trailing coefficients) are split off first,
    since simultaneous methods converge only linearly on them.  Repeated
    roots come back as tight clusters.
    """
    c = np.asarray(getattr(p, "c", p))
    c = c.astype(np.result_type(c, float))
    cmax = np.max(np.abs(c)) if len(c) else 0.0
    if cmax == 0.0:
        raise DegeneratePolynomialError("zero polynomial")
    n = len(c) - 1
    while n > 0 and abs(c[n]) <= 1e-14 * cmax:
        n -= 1
    c = c[: n + 1]
    if n < 1:
        raise DegeneratePolynomialError("polynomial has no roots after degree reduction")

    nzero = 0
    while nzero < n and c[nzero] == 0:
        nzero += 1
    c_red = c[nzero:]
    m = n - nzero
    roots = [0j] * nzero
    if m == 0:
        return np.sort_complex(np.array(roots, dtype=complex))
    if m == 1:
        return np.sort_complex(np.array(roots + [-c_red[0] / c_red[1]], dtype=complex))

    monic = c_red / c_red[m]
    dc = polyder(monic)
    center = -monic[m - 1] / m
    radius = 2.0 * max(abs(monic[m - k]) ** (1.0 / k) for k in range(1, m + 1))
    radius = max(radius, 1e-300)
    z = center + radius * np.exp(1j * (2 * np.pi * np.arange(m) / m + 0.4))

    abs_c = np.abs(monic)
    for _ in range(max_iter):
        pz = polyval(monic, z)
        dpz = polyval(dc, z)
        # Horner rounding level: stop once every residual is at it.
        noise = 8 * EPS * polyval(abs_c, np.abs(z))
        done = np.abs(pz) <= noise
        if np.all(done):
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = pz / dpz
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            s = np.sum(1.0 / diff, axis=1)
            w = ratio / (1.0 - ratio * s)
        w = np.where(done | ~np.isfinite(w), 0.0, w)
        z = z - w
        if np.all(np.abs(w) <= 4 * EPS * np.abs(z)):
            break
    if not np.all(_backward_error_ok(monic, z, tol)):
        raise IterationLimitError("Aberth iteration did not meet the backward-error bound")
    return np.sort_complex(np.concatenate([np.array(roots, dtype=complex), z]))


def solve_complex(a, b, rel_pivot: float = 1e-13) -> np.ndarray:
    """Gaussian elimination with row partial pivoting."""
    a = np.array(a, dtype=complex)
    x = np.array(b, dtype=complex).reshape(-1)
    n = a.shape[0]
    scale = np.max(np.abs(a)) if a.size else 0.0
    thresh = rel_pivot * scale
    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[piv, k]) <= thresh or scale == 0.0:
            raise NearSingularError(f"pivot {abs(a[piv, k]):.3e} below {thresh:.3e} at column {k}")
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            x[[k, piv]] = x[[piv, k]]
        f = a[k + 1 :, k] / a[k, k]
        a[k + 1 :, k:] -= np.outer(f, a[k, k:])
        x[k + 1 :] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1 :] @ x[k + 1 :]) / a[k, k]
    return x


def matrix_exp(m, dt: float = 1.0) -> np.ndarray:
    """exp(M dt) by scaling and squaring with a degree-18 Taylor core."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    a = np.asarray(_as_array(m), dtype=float) * dt
    n = a.shape[0]
    norm = np.max(np.sum(np.abs(a), axis=0)) if a.size else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    a = a / 2.0**squarings
    term = np.eye(n)
    out = np.eye(n)
    for k in range(1, 19):
        term = term @ a / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out
