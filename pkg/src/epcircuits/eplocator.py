"""Locating exceptional points.

An EP is a complex frequency where the characteristic quartic and its
frequency derivative vanish together.  With two real system parameters free,
that is four real equations in four real unknowns, solved here by damped
Newton iteration seeded from a locus sweep.

Residuals are normalized: the quartic is evaluated in the scaled variable
``z = omega / omega_ref`` so that ``D`` carries a factor ``omega_ref**-4`` and
``D'`` a factor ``omega_ref**-3``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from . import numerics
from .dynamics import SystemMatrix, ResonanceSet, resonances, system_matrix
from .errors import (
    DegenerateRankError,
    DiabolicPointError,
    DomainError,
    EPCircuitError,
    IterationLimitError,
    SeedFailureError,
)
from .model import SweepSpec

logger = logging.getLogger(__name__)


def _matrix(params) -> SystemMatrix:
    return params if isinstance(params, SystemMatrix) else system_matrix(params)


def _scaled_poly(m: SystemMatrix) -> np.ndarray:
    return numerics.char_poly(m.a, m.omega_ref).c


def _residual_pair(c: np.ndarray, z: complex) -> tuple[complex, complex, complex]:
    """``D(z) = p(-i z)`` with its first two z-derivatives."""
    x = -1j * z
    d1 = numerics.polyder(c)
    d2 = numerics.polyder(d1)
    return (
        complex(numerics.polyval(c, x)),
        complex(-1j * numerics.polyval(d1, x)),
        complex(-numerics.polyval(d2, x)),
    )


def ep_residual(omega: complex, params) -> tuple[complex, complex]:
    """Normalized secular determinant and its analytic omega-derivative."""
    m = _matrix(params)
    D, Dp, _ = _residual_pair(_scaled_poly(m), complex(omega) / m.omega_ref)
    return D, Dp


def discriminant(params) -> float:
    """Discriminant of the scaled characteristic quartic (zero at any repeated root)."""
    return numerics.quartic_discriminant(_scaled_poly(_matrix(params)))


@dataclass(frozen=True)
class LocusPoint:
    values: tuple[float, float]
    index: tuple[int, int]
    resonances: ResonanceSet
    distance: float


def _right_pair(rs: ResonanceSet) -> np.ndarray:
    right = rs.right_half()
    return right[np.argsort(right.real)] if len(right) else right


def locus_point(params, index=(0, 0), values=(0.0, 0.0)) -> LocusPoint:
    rs = resonances(_matrix(params))
    right = _right_pair(rs)
    if len(right) >= 2:
        dist = float(np.min([abs(a - b) for i, a in enumerate(right) for b in right[i + 1 :]]))
    else:
        dist = math.inf
    return LocusPoint(values, index, rs, dist)


def sweep_loci(spec: SweepSpec) -> list[LocusPoint]:
    out = []
    for i, j, p in spec.points():
        vals = (getattr(p, spec.names[0]), getattr(p, spec.names[1]))
        try:
            out.append(locus_point(p, (i, j), vals))
        except EPCircuitError as exc:  # point outside the valid domain
            logger.debug("sweep point %s skipped: %s", (i, j), exc)
    return out


@dataclass(frozen=True)
class Seed:
    omega: complex
    values: dict[str, float]
    point: LocusPoint


def seed_from_sweep(spec: SweepSpec, loci: Sequence[LocusPoint] | None = None) -> Seed:
    """Grid point of closest approach of the right-half-plane pair.

    Ties go to the lowest grid index (row-major over the two axes).
    """
    loci = sweep_loci(spec) if loci is None else loci
    best = None
    for lp in loci:
        if math.isfinite(lp.distance) and (best is None or lp.distance < best.distance):
            best = lp
    if best is None:
        raise SeedFailureError("sweep produced no pair of finite resonances")
    right = _right_pair(best.resonances)
    pair = min(
        ((a, b) for i, a in enumerate(right) for b in right[i + 1 :]), key=lambda ab: abs(ab[0] - ab[1])
    )
    return Seed(complex(0.5 * (pair[0] + pair[1])), dict(zip(spec.names, best.values)), best)


@dataclass
class EPResult:
    omega_ep: complex
    param_values: dict[str, float]
    residual_det: float
    residual_ddet: float
    newton_iterations: int
    eigvec_ratio: complex | None = None
    params: object = None
    history: list[float] = field(default_factory=list)

    def matrix(self) -> SystemMatrix:
        return system_matrix(self.params)

    def to_json(self) -> dict:
        return {
            "omega_ep_re": float(self.omega_ep.real),
            "omega_ep_im": float(self.omega_ep.imag),
            "params": {k: float(v) for k, v in self.param_values.items()},
            "residual_det": float(self.residual_det),
            "residual_ddet": float(self.residual_ddet),
            "iterations": int(self.newton_iterations),
        }


def _with(base, names, values):
    return replace(base, **{n: float(v) for n, v in zip(names, values)})


def _valid(base, names, values):
    try:
        p = _with(base, names, values)
        p.validate()
        return p
    except EPCircuitError:
        return None


def find_ep(
    omega_guess: complex,
    param_guess: Mapping[str, float],
    base,
    tol: float = 1e-9,
    max_iter: int = 100,
    fd_step: float = 1e-6,
    check_rank: bool = True,
) -> EPResult:
    """Damped Newton on ``Re D = Im D = Re D' = Im D' = 0``.

    Unknowns are ``omega / omega_ref`` and the free parameters in units of
    their initial guess.  The omega columns of the Jacobian are analytic;
    parameter columns use central differences with relative step ``fd_step``.
    A converged point that turns out to be a diabolic degeneracy raises
    :class:`DiabolicPointError`.
    """
    names = tuple(param_guess)
    if len(names) != 2:
        raise DomainError("exactly two free parameters are required")
    known = {f_.name for f_ in fields(base)}
    for n in names:
        if n not in known:
            raise DomainError(f"unknown parameter {n!r}")
    ref = np.array([abs(param_guess[n]) or 1.0 for n in names])
    p0 = _valid(base, names, [param_guess[n] for n in names])
    if p0 is None:
        raise DomainError("initial parameter guess is outside the valid domain")
    omega_ref = _matrix(p0).omega_ref
    y = np.array(
        [omega_guess.real / omega_ref, omega_guess.imag / omega_ref]
        + [param_guess[n] / r for n, r in zip(names, ref)],
        dtype=float,
    )
    if not np.all(np.isfinite(y)):
        raise DomainError("non-finite initial guess")

    def evaluate(yv):
        p = _valid(base, names, yv[2:] * ref)
        if p is None:
            return None
        c = _scaled_poly(_matrix(p))
        return (c, *_residual_pair(c, complex(yv[0], yv[1])))

    def vec(D, Dp):
        return np.array([D.real, D.imag, Dp.real, Dp.imag])

    state = evaluate(y)
    F = vec(state[1], state[2])
    history = [float(np.max(np.abs(F)))]
    converged_at = None
    it = 0
    for it in range(1, max_iter + 1):
        _, D, Dp, Dpp = state
        J = np.zeros((4, 4))
        J[:, 0] = [Dp.real, Dp.imag, Dpp.real, Dpp.imag]
        J[:, 1] = [-Dp.imag, Dp.real, -Dpp.imag, Dpp.real]
        for k in (2, 3):
            h = fd_step * max(abs(y[k]), 1e-3)
            yp, ym = y.copy(), y.copy()
            yp[k] += h
            ym[k] -= h
            sp, sm = evaluate(yp), evaluate(ym)
            if sp is None or sm is None:
                raise DomainError("finite-difference stencil leaves the valid parameter domain")
            J[:, k] = (vec(sp[1], sp[2]) - vec(sm[1], sm[2])) / (2 * h)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        lam = 1.0
        fnorm = np.linalg.norm(F)
        accepted = None
        for _ in range(9):
            trial = evaluate(y + lam * step)
            if trial is not None and np.linalg.norm(vec(trial[1], trial[2])) < fnorm:
                accepted = trial
                break
            lam *= 0.5
        if accepted is None:
            if converged_at is not None:
                break  # rounding floor reached after convergence
            if trial is None:
                raise DomainError("Newton step leaves the valid parameter domain")
            lam *= 2.0
            accepted = trial
        trial = accepted
        y = y + lam * step
        state = trial
        F = vec(state[1], state[2])
        history.append(float(np.max(np.abs(F))))
        ok = abs(state[1]) <= tol and abs(state[2]) <= tol
        if ok and converged_at is None:
            converged_at = it
        if converged_at is not None and (it - converged_at >= 2 or np.max(np.abs(lam * step)) < 1e-15):
            break
    if converged_at is None:
        raise IterationLimitError(
            f"EP search did not converge in {max_iter} iterations",
            (abs(state[1]), abs(state[2])),
        )

    omega = complex(y[0], y[1]) * omega_ref
    if omega.real < 0:  # report the right-half-plane member of the mirror pair
        omega = -omega.conjugate()
    params = _with(base, names, y[2:] * ref)
    result = EPResult(
        omega_ep=omega,
        param_values=dict(zip(names, (float(v) for v in y[2:] * ref))),
        residual_det=abs(state[1]),
        residual_ddet=abs(state[2]),
        newton_iterations=it,
        params=params,
        history=history,
    )
    if check_rank:
        from . import chirality

        m = _matrix(params)
        try:
            u = chirality.ep_eigenvector(m, chirality.omega_internal(omega))
        except DegenerateRankError as exc:
            raise DiabolicPointError(f"degeneracy at {omega} is diabolic: {exc}") from None
        result.eigvec_ratio = chirality.component_ratio(u, m).ratio
    return result


def locate_ep(spec: SweepSpec, **kw) -> tuple[EPResult, Seed]:
    """Seed from ``spec`` and refine with :func:`find_ep` over the swept names."""
    seed = seed_from_sweep(spec)
    return find_ep(seed.omega, seed.values, spec.base, **kw), seed


def coalescing_pair(result: EPResult) -> np.ndarray:
    rs = resonances(result.matrix())
    idx = np.argsort(np.abs(rs.omega - result.omega_ep))[:2]
    return rs.omega[idx]


def coalescence_gap(result: EPResult) -> float:
    a, b = coalescing_pair(result)
    return float(abs(a - b) / abs(result.omega_ep))


def encircle(result: EPResult, rel_radius: float = 1e-3, n_steps: int = 200):
    """Track the coalescing pair around a parameter-space circle.

    Returns ``(start, end)`` pairs; a swapped order at the end is the branch
    point signature.
    """
    names = tuple(result.param_values)
    center = np.array([result.param_values[n] for n in names])
    tracked = None
    start = None
    for k in range(n_steps + 1):
        theta = 2 * math.pi * k / n_steps
        vals = center * (1 + rel_radius * np.array([math.cos(theta), math.sin(theta)]))
        rs = resonances(system_matrix(_with(result.params, names, vals)))
        cand = rs.omega
        if tracked is None:
            idx = np.argsort(np.abs(cand - result.omega_ep))[:2]
            tracked = cand[idx].copy()
            start = tracked.copy()
            continue
        new = []
        for prev in tracked:
            new.append(cand[int(np.argmin(np.abs(cand - prev)))])
        if abs(new[0] - new[1]) == 0:
            raise DegenerateRankError("tracked resonances merged; refine the loop")
        tracked = np.array(new)
    return start, tracked


def monodromy_swaps(result: EPResult, rel_radius: float = 1e-3, n_steps: int = 200) -> bool:
    start, end = encircle(result, rel_radius, n_steps)
    return abs(end[0] - start[1]) < abs(end[0] - start[0]) and abs(end[1] - start[0]) < abs(end[1] - start[1])
