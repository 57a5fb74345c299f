"""Annealing schedules f(s) on [0, 1] and the decay laws Gamma(t), T(t).

Every :class:`Schedule` carries analytic derivatives through order
:data:`MAX_ORDER`; compositions propagate them with Faa di Bruno's formula.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

MAX_ORDER = 4

DerivFn = Callable[[np.ndarray], np.ndarray]


class Schedule:
    """A scalar schedule with derivatives of order 0..4.

    ``derivs(s)`` returns an array of shape ``(5,) + shape(s)`` whose k-th
    row is the k-th derivative evaluated at ``s``.
    """

    def __init__(self, name: str, derivs: DerivFn, anneal_path: bool = True):
        self.name = name
        self._derivs = derivs
        self.anneal_path = anneal_path

    def derivs(self, s) -> np.ndarray:
        return self._derivs(np.asarray(s, dtype=np.float64))

    def __call__(self, s):
        out = self.derivs(s)[0]
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, s, order: int = 1):
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"derivative order must be in [0, {MAX_ORDER}], got {order}")
        out = self.derivs(s)[order]
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"Schedule({self.name!r})"


def _polynomial_schedule(name: str, coeffs) -> Schedule:
    polys = [Polynomial(coeffs)]
    for _ in range(MAX_ORDER):
        polys.append(polys[-1].deriv())

    def derivs(s):
        return np.stack([p(s) for p in polys])

    return Schedule(name, derivs)


# Coefficients in increasing powers of s.
_POLY_COEFFS = {
    1: [0, 1],
    2: [0, 0, 3, -2],
    3: [0, 0, 0, 10, -15, 6],
    4: [0, 0, 0, 0, 35, -84, 70, -20],
}


def poly_family(m: int) -> Schedule:
    """f_m(s): derivatives of order 1..m-1 vanish at both endpoints."""
    if m not in _POLY_COEFFS:
        raise ValueError(f"polynomial family order must be 1..4, got {m}")
    return _polynomial_schedule(f"f{m}", _POLY_COEFFS[m])


def sq_family(which: str) -> Schedule:
    """sq1: s**2 (flat start); sq2: s*(2-s) (flat end)."""
    if which == "sq1":
        return _polynomial_schedule("sq1", [0, 0, 1])
    if which == "sq2":
        return _polynomial_schedule("sq2", [0, 2, -1])
    raise ValueError(f"unknown square schedule {which!r}; expected 'sq1' or 'sq2'")


def identity() -> Schedule:
    return _polynomial_schedule("identity", [0, 1])


def grover_optimal(n_items: int) -> Schedule:
    """Local-adiabatic schedule for search among ``n_items`` items.

    With u = 2s-1 and D = N - (N-1)u**2, f = 1/2 + u D**-0.5 / 2 and the
    u-derivatives reduce to closed forms in D.
    """
    if n_items < 2:
        raise ValueError("grover_optimal needs at least 2 items")
    a = float(n_items)
    b = float(n_items - 1)

    def derivs(s):
        u = 2.0 * s - 1.0
        d = a - b * u * u
        g0 = 0.5 + 0.5 * u / np.sqrt(d)
        g1 = 0.5 * a * d ** -1.5
        g2 = 1.5 * a * b * u * d ** -2.5
        g3 = 1.5 * a * b * d ** -3.5 * (a + 4.0 * b * u * u)
        g4 = 1.5 * a * b * b * u * d ** -4.5 * (15.0 * a + 20.0 * b * u * u)
        return np.stack([g0, 2 * g1, 4 * g2, 8 * g3, 16 * g4])

    return Schedule(f"grover_opt:{n_items}", derivs)


def compose(outer: Schedule, inner: Schedule, name: str | None = None) -> Schedule:
    """outer(inner(s)) with derivatives from Faa di Bruno's formula."""

    def derivs(s):
        g = inner.derivs(s)
        f = outer.derivs(g[0])
        g1, g2, g3, g4 = g[1], g[2], g[3], g[4]
        return np.stack([
            f[0],
            f[1] * g1,
            f[2] * g1**2 + f[1] * g2,
            f[3] * g1**3 + 3 * f[2] * g1 * g2 + f[1] * g3,
            f[4] * g1**4 + 6 * f[3] * g1**2 * g2 + f[2] * (3 * g2**2 + 4 * g1 * g3) + f[1] * g4,
        ])

    return Schedule(name or f"{outer.name}({inner.name})", derivs,
                    anneal_path=outer.anneal_path and inner.anneal_path)


def grover_optimal_m(n_items: int, m: int) -> Schedule:
    return compose(grover_optimal(n_items), poly_family(m), name=f"grover_opt_m:{n_items}:{m}")


def cos_sq() -> Schedule:
    """(1 - cos(pi s**2))/2: f'(0)=f'(1)=f''(0)=0 but f''(1) = -2 pi**2."""

    def outer(v):
        c, sn = np.cos(np.pi * v), np.sin(np.pi * v)
        p = np.pi
        return np.stack([(1 - c) / 2, p * sn / 2, p**2 * c / 2, -p**3 * sn / 2, -p**4 * c / 2])

    return compose(Schedule("half_cosine", outer), _polynomial_schedule("sq", [0, 0, 1]), name="cos_sq")


def from_name(name: str) -> Schedule:
    """Resolve a registry name such as ``f3``, ``sq1`` or ``grover_opt_m:64:2``."""
    parts = name.split(":")
    head = parts[0]
    try:
        if head in ("f1", "f2", "f3", "f4") and len(parts) == 1:
            return poly_family(int(head[1]))
        if head in ("sq1", "sq2") and len(parts) == 1:
            return sq_family(head)
        if head == "cos_sq" and len(parts) == 1:
            return cos_sq()
        if head == "grover_opt" and len(parts) == 2:
            return grover_optimal(int(parts[1]))
        if head == "grover_opt_m" and len(parts) == 3:
            return grover_optimal_m(int(parts[1]), int(parts[2]))
    except ValueError as exc:
        raise ValueError(f"bad schedule {name!r}: {exc}") from None
    raise ValueError(f"unknown schedule {name!r}")


SCHEDULE_NAMES = ("f1", "f2", "f3", "f4", "sq1", "sq2", "grover_opt:N", "grover_opt_m:N:m", "cos_sq")


# --------------------------------------------------------------------------
# Decay laws for the control parameter as a function of (Monte Carlo) time.

class DomainError(ValueError):
    pass


class DecayLaw:
    """Positive, non-increasing Gamma(t) or T(t) for t >= 0."""

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0):
            raise DomainError("decay laws are defined for t >= 0")
        out = self._value(t)
        return float(out) if np.ndim(out) == 0 else out

    def _value(self, t):  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class PowerGamma(DecayLaw):
    """a (delta t + c)**-exponent.

    exponent = 1/(2N-1) for the transverse field; 1/(N-1) for the extra
    transverse interaction, whose prefactor has no closed form and is user
    supplied through ``a``.
    """

    a: float
    c: float
    exponent: float
    delta: float = 1.0

    @classmethod
    def transverse_field(cls, n_sites: int, a: float, c: float, delta: float) -> "PowerGamma":
        return cls(a, c, 1.0 / (2 * n_sites - 1), delta)

    @classmethod
    def transverse_interaction(cls, n_sites: int, a: float, c: float, delta: float = 1.0) -> "PowerGamma":
        if n_sites < 2:
            raise ValueError("transverse-interaction law needs N >= 2")
        return cls(a, c, 1.0 / (n_sites - 1), delta)

    def _value(self, t):
        return self.a * (self.delta * t + self.c) ** (-self.exponent)


@dataclass(frozen=True)
class MTILaw(DecayLaw):
    """2**(N-2) / (delta (t + t0)); t0 > 0 keeps the law finite at t = 0."""

    n_sites: int
    delta: float
    t0: float = 1.0

    def _value(self, t):
        return 2.0 ** (self.n_sites - 2) / (self.delta * (t + self.t0))


@dataclass(frozen=True)
class LogTemperature(DecayLaw):
    """T(t) = p N / log(alpha t + 1); infinite at t = 0."""

    p: float
    n_sites: int
    alpha: float

    def _value(self, t):
        with np.errstate(divide="ignore"):
            return self.p * self.n_sites / np.log(self.alpha * t + 1.0)


@dataclass(frozen=True)
class PIMCLog(DecayLaw):
    """T_1(t) = R L_1 / log(t + 2)."""

    r: float
    l1: float

    def _value(self, t):
        return self.r * self.l1 / np.log(t + 2.0)


@dataclass(frozen=True)
class PIMCGamma(DecayLaw):
    """Gamma(t) = (M/beta) artanh((t + 2)**(-2/(R L_1))), the field form of PIMCLog."""

    trotter: int
    beta: float
    r: float
    l1: float

    def _value(self, t):
        return (self.trotter / self.beta) * np.arctanh((t + 2.0) ** (-2.0 / (self.r * self.l1)))

    def asymptotic(self, t):
        return (self.trotter / self.beta) * (np.asarray(t, dtype=np.float64) + 2.0) ** (-2.0 / (self.r * self.l1))


@dataclass(frozen=True)
class GFMCPower(DecayLaw):
    """Gamma(t) = b / (t + 1)**c."""

    b: float
    c: float

    def _value(self, t):
        return self.b / (t + 1.0) ** self.c


@dataclass(frozen=True)
class GFMCExpSplit(DecayLaw):
    """Gamma(t) = -log(1 - 2b (t+1)**(-1/N)) / (2 dt), for the exponential Green's function."""

    b: float
    n_sites: int
    dt: float

    def min_valid_t(self) -> float:
        return (2.0 * self.b) ** self.n_sites - 1.0

    def _value(self, t):
        arg = 2.0 * self.b * (t + 1.0) ** (-1.0 / self.n_sites)
        if np.any(arg >= 1.0):
            raise DomainError(
                f"log argument non-positive; law valid only for t > {self.min_valid_t():.6g}"
            )
        return -np.log1p(-arg) / (2.0 * self.dt)

    def asymptotic(self, t):
        return self.b / (self.dt * (np.asarray(t, dtype=np.float64) + 1.0) ** (1.0 / self.n_sites))


def decay_value(law: DecayLaw, t) -> float:
    return law(t)


def gamma_to_coupling(gamma, beta: float, trotter: int):
    """Inter-slice coupling (1/2) log coth(beta Gamma / M)."""
    x = beta * np.asarray(gamma, dtype=np.float64) / trotter
    with np.errstate(divide="ignore"):
        return 0.5 * np.log(1.0 / np.tanh(x))

