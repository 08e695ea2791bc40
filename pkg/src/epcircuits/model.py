"""Parameter sets for the coupled-oscillator system.

Two parameterizations are kept side by side: the mechanical analog
(``OscillatorParams``) and the electronic circuit (``CircuitParams``).  The
circuit is the ground truth for everything downstream; the mechanical
parameters obtained from :func:`circuit_to_oscillator` are a first-order
approximation.

Circuit topology
----------------
Each port drives a series loop::

    v_port --- R_series --- (L || R_parallel) --- C --- ground

The loop current is the port current ``i_A`` (``i_B``), the capacitor charge
plays the role of the oscillator coordinate, and the two inductors share the
mutual inductance ``Mmut``.
"""

from __future__ import annotations

import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError, InvalidCouplingError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


@dataclass(frozen=True)
class OscillatorParams:
    """Mechanical analog: two damped oscillators with spring and damper coupling.

    ``omega1``, ``omega2`` are undamped angular frequencies (rad/s), ``k1``,
    ``k2`` individual damping rates (1/s), ``f`` the coupling stiffness
    (rad^2/s^2), ``g`` the coupling damping rate (1/s).  ``c1``, ``c2`` are the
    complex drive amplitudes per oscillator.
    """

    omega1: float
    omega2: float
    k1: float = 0.0
    k2: float = 0.0
    f: float = 0.0
    g: float = 0.0
    c1: complex = 1.0
    c2: complex = 0.0

    def validate(self) -> "OscillatorParams":
        for name in ("omega1", "omega2", "k1", "k2", "f", "g"):
            v = getattr(self, name)
            if isinstance(v, complex) or not math.isfinite(v):
                raise DomainError(f"{name} must be a finite real number, got {v!r}")
        if self.omega1 <= 0 or self.omega2 <= 0:
            raise DomainError("undamped frequencies must be positive")
        if min(self.k1, self.k2, self.g) < 0:
            raise DomainError("damping rates k1, k2, g must be non-negative")
        return self


@dataclass(frozen=True)
class CircuitParams:
    """Component values in SI units (F, H, Ohm)."""

    Cp: float
    Cs: float
    Lp: float
    Ls: float
    R1: float
    R2: float
    Rp: float
    Rs: float
    Mmut: float

    @property
    def coupling(self) -> float:
        return self.Mmut / math.sqrt(self.Lp * self.Ls)

    def validate(self) -> "CircuitParams":
        for f_ in fields(self):
            v = getattr(self, f_.name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{f_.name} must be finite and positive, got {v!r}")
        if not 0.0 < self.coupling < 1.0:
            raise InvalidCouplingError(
                f"coupling coefficient {self.coupling:.6g} outside (0, 1)"
            )
        return self

    def with_values(self, **changes: float) -> "CircuitParams":
        return replace(self, **changes)


def default_table1() -> CircuitParams:
    """Component values of the reference build."""
    return CircuitParams(
        Cp=65e-9,
        Cs=47e-9,
        Lp=1.80e-3,
        Ls=2.55e-3,
        R1=3.0,
        R2=3.0,
        Rp=520.0,
        Rs=10.0e3,
        Mmut=0.3e-3,
    )


def circuit_to_oscillator(c: CircuitParams) -> OscillatorParams:
    """Map component values to the mechanical analog.

    ``k_j`` adds the series-loss and parallel-loss damping of each loop.  The
    coupling uses ``kappa = Mmut / sqrt(Lp Ls)`` with ``f = kappa omega1 omega2``
    and ``g = kappa (k1 + k2) / 2``; this is only accurate to first order in
    ``kappa`` and is not used by the circuit pipeline.
    """
    c.validate()
    omega1 = 1.0 / math.sqrt(c.Lp * c.Cp)
    omega2 = 1.0 / math.sqrt(c.Ls * c.Cs)
    k1 = c.R1 / (2.0 * c.Lp) + 1.0 / (2.0 * c.Rp * c.Cp)
    k2 = c.R2 / (2.0 * c.Ls) + 1.0 / (2.0 * c.Rs * c.Cs)
    kappa = c.coupling
    return OscillatorParams(
        omega1=omega1,
        omega2=omega2,
        k1=k1,
        k2=k2,
        f=kappa * omega1 * omega2,
        g=kappa * (k1 + k2) / 2.0,
    ).validate()


@dataclass(frozen=True)
class SweepSpec:
    """Rectangular grid over two parameters of a base parameter set.

    ``names`` index into the base dataclass; each axis runs from ``start`` to
    ``stop`` inclusive in increments of ``step``.
    """

    names: tuple[str, str]
    start: tuple[float, float]
    stop: tuple[float, float]
    step: tuple[float, float]
    base: CircuitParams | OscillatorParams = field(default_factory=default_table1)

    def __post_init__(self):
        if self.names[0] == self.names[1]:
            raise DomainError("swept parameters must be distinct")
        known = {f_.name for f_ in fields(self.base)}
        for n in self.names:
            if n not in known:
                raise DomainError(f"unknown parameter {n!r}")
        for a, b, s in zip(self.start, self.stop, self.step):
            if not s > 0:
                raise DomainError("sweep steps must be positive")
            if b < a:
                raise DomainError("sweep range is empty")

    def axis(self, i: int) -> np.ndarray:
        a, b, s = self.start[i], self.stop[i], self.step[i]
        n = int(math.floor((b - a) / s + 1e-9)) + 1
        return a + s * np.arange(n)

    def points(self):
        """Yield ``(i, j, params)`` over the grid, first axis outermost."""
        for i, u in enumerate(self.axis(0)):
            for j, w in enumerate(self.axis(1)):
                yield i, j, replace(self.base, **{self.names[0]: float(u), self.names[1]: float(w)})


def fig2_sweep(base: CircuitParams | None = None) -> SweepSpec:
    """Rp in {430, 470, 510} Ohm, Cp from 57.0 nF to 72.0 nF in 0.22 nF steps."""
    return SweepSpec(
        names=("Rp", "Cp"),
        start=(430.0, 57.0e-9),
        stop=(510.0, 72.0e-9),
        step=(40.0, 0.22e-9),
        base=base or default_table1(),
    )


# config file i/o ----------------------------------------------------------

CONFIG_KEYS: dict[str, str] = {
    "cp_f": "Cp",
    "cs_f": "Cs",
    "lp_h": "Lp",
    "ls_h": "Ls",
    "r1_ohm": "R1",
    "r2_ohm": "R2",
    "rp_ohm": "Rp",
    "rs_ohm": "Rs",
    "mmut_h": "Mmut",
}


def params_from_mapping(values: Mapping[str, object], base: CircuitParams | None = None) -> CircuitParams:
    """Overlay config-style keys on ``base`` (the default set when omitted)."""
    base = base or default_table1()
    changes = {}
    for key, raw in values.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(raw, bool):
            raise ConfigError(f"{key}: expected a number, got {raw!r}")
        try:
            changes[CONFIG_KEYS[key]] = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return replace(base, **changes)


def parse_config(text: str) -> CircuitParams:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"config must be flat; section {key!r} not allowed")
    return params_from_mapping(data)


def load_config(path: str | Path) -> CircuitParams:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(c: CircuitParams) -> str:
    d = asdict(c)
    lines = [f"{key} = {d[name]!r}" for key, name in CONFIG_KEYS.items()]
    return "\n".join(lines) + "\n"


def save_config(c: CircuitParams, path: str | Path) -> None:
    Path(path).write_text(dump_config(c), encoding="utf-8")
