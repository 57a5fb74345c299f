"""Enumerable Ising configuration space, cost functions and instance generators.

Encoding convention used everywhere in the package: a configuration of N
spins is an integer ``x`` in ``[0, 2**N)``; bit ``i`` of ``x`` belongs to
site ``i`` and the bit value ``b`` maps to the sigma^z eigenvalue
``s = 1 - 2*b`` (bit 0 is spin up, +1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_ENUMERATION_SITES = 20
MAX_DENSE_SITES = 12


class CapacityError(RuntimeError):
    """Raised when a request exceeds an enumeration or dense-storage cap."""


def encode(spins: Sequence[int]) -> int:
    """Pack a sequence of +1/-1 spins into the integer configuration."""
    x = 0
    for i, s in enumerate(spins):
        if s not in (1, -1):
            raise ValueError(f"spin at site {i} must be +1 or -1, got {s!r}")
        if s == -1:
            x |= 1 << i
    return x


def decode(x: int, n_sites: int) -> np.ndarray:
    """Unpack configuration ``x`` into an array of +1/-1 spins."""
    if not 0 <= x < (1 << n_sites):
        raise ValueError(f"configuration {x} out of range for {n_sites} sites")
    bits = (x >> np.arange(n_sites)) & 1
    return (1 - 2 * bits).astype(np.int8)


def spin_table(n_sites: int) -> np.ndarray:
    """Return the (2**N, N) table of spins for every configuration."""
    xs = np.arange(1 << n_sites)[:, None]
    return (1 - 2 * ((xs >> np.arange(n_sites)) & 1)).astype(np.int8)


@dataclass(frozen=True)
class IsingProblem:
    """Diagonal cost -sum J_i s_i - sum J_ij s_i s_j - sum J_S prod_{k in S} s_k.

    ``higher_terms`` hold k-body couplings with k >= 3.
    """

    n_sites: int
    field_terms: tuple[tuple[int, float], ...] = ()
    pair_terms: tuple[tuple[int, int, float], ...] = ()
    higher_terms: tuple[tuple[tuple[int, ...], float], ...] = ()
    _energies: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_sites
        if n < 1:
            raise ValueError("n_sites must be positive")
        object.__setattr__(self, "field_terms", tuple((int(i), float(c)) for i, c in self.field_terms))
        object.__setattr__(self, "pair_terms", tuple((int(i), int(j), float(c)) for i, j, c in self.pair_terms))
        object.__setattr__(
            self, "higher_terms", tuple((tuple(int(k) for k in s), float(c)) for s, c in self.higher_terms)
        )
        for i, _ in self.field_terms:
            if not 0 <= i < n:
                raise ValueError(f"field term site {i} out of range [0, {n})")
        for i, j, _ in self.pair_terms:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"pair term ({i}, {j}) out of range [0, {n})")
            if i == j:
                raise ValueError(f"pair term ({i}, {j}) couples a site to itself")
        for sites, _ in self.higher_terms:
            if len(sites) < 3 or len(set(sites)) != len(sites):
                raise ValueError(f"higher-order term {sites} needs >= 3 distinct sites")
            if any(not 0 <= k < n for k in sites):
                raise ValueError(f"higher-order term {sites} out of range [0, {n})")

    @classmethod
    def zero(cls, n_sites: int) -> "IsingProblem":
        return cls(n_sites)

    def terms(self) -> Iterable[tuple[tuple[int, ...], float]]:
        """Iterate over every term as (site tuple, coefficient)."""
        for i, c in self.field_terms:
            yield (i,), c
        for i, j, c in self.pair_terms:
            yield (i, j), c
        yield from self.higher_terms

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    def energies(self) -> np.ndarray:
        """Energy of every configuration as a read-only length-2**N table."""
        if self._energies is None:
            if self.n_sites > MAX_ENUMERATION_SITES:
                raise CapacityError(
                    f"{self.n_sites} sites exceeds the enumeration cap of {MAX_ENUMERATION_SITES}"
                )
            spins = spin_table(self.n_sites).astype(np.float64)
            e = np.zeros(self.dim)
            for sites, c in self.terms():
                e -= c * np.prod(spins[:, list(sites)], axis=1)
            e.setflags(write=False)
            object.__setattr__(self, "_energies", e)
        return self._energies

    def local_energies(self, site: int) -> np.ndarray:
        """Sum of all terms touching ``site``, for every configuration."""
        spins = spin_table(self.n_sites).astype(np.float64)
        e = np.zeros(self.dim)
        for sites, c in self.terms():
            if site in sites:
                e -= c * np.prod(spins[:, list(sites)], axis=1)
        return e

    def max_abs_coupling(self) -> float:
        return max((abs(c) for _, c in self.terms()), default=0.0)


def energy(problem: IsingProblem, x: int) -> float:
    """Cost of configuration ``x`` evaluated term by term."""
    s = decode(x, problem.n_sites)
    total = 0.0
    for sites, c in problem.terms():
        prod = 1
        for k in sites:
            prod *= int(s[k])
        total -= c * prod
    return total


@dataclass(frozen=True)
class Extremes:
    e_min: float
    argmin: tuple[int, ...]
    e_max: float


def enumerate_extremes(problem: IsingProblem, tol: float = 1e-12) -> Extremes:
    """Exact minimum (with every minimizer) and maximum by exhaustive scan."""
    if problem.n_sites > MAX_ENUMERATION_SITES:
        raise CapacityError(f"{problem.n_sites} sites exceeds the enumeration cap of {MAX_ENUMERATION_SITES}")
    e = problem.energies()
    e_min = float(e.min())
    argmin = tuple(int(x) for x in np.flatnonzero(e <= e_min + tol))
    return Extremes(e_min, argmin, float(e.max()))


@dataclass(frozen=True)
class SpinGlassSpec:
    """Open-boundary square-lattice spin glass with couplings uniform in [-1, 1]."""

    width: int
    height: int
    field: float = 0.0
    seed: int = 0


def lattice_bonds(width: int, height: int) -> list[tuple[int, int]]:
    """Nearest-neighbour bonds of an open ``width x height`` lattice, row-major sites."""
    bonds = []
    for r in range(height):
        for c in range(width):
            i = r * width + c
            if c + 1 < width:
                bonds.append((i, i + 1))
            if r + 1 < height:
                bonds.append((i, i + width))
    return bonds


def generate_spin_glass(spec: SpinGlassSpec) -> IsingProblem:
    n = spec.width * spec.height
    if n < 1:
        raise ValueError("lattice must have at least one site")
    rng = np.random.default_rng(spec.seed)
    bonds = lattice_bonds(spec.width, spec.height)
    couplings = rng.uniform(-1.0, 1.0, size=len(bonds))
    pairs = tuple((i, j, float(J)) for (i, j), J in zip(bonds, couplings))
    fields = tuple((i, float(spec.field)) for i in range(n)) if spec.field != 0.0 else ()
    return IsingProblem(n, fields, pairs)


def ferromagnet(width: int, height: int, coupling: float = 1.0, field: float = 0.0) -> IsingProblem:
    n = width * height
    pairs = tuple((i, j, coupling) for i, j in lattice_bonds(width, height))
    fields = tuple((i, field) for i in range(n)) if field else ()
    return IsingProblem(n, fields, pairs)


def random_problem(n_sites: int, rng: np.random.Generator, density: float = 1.0,
                   with_fields: bool = True) -> IsingProblem:
    """Dense random instance used by property tests (all pairs with prob. ``density``)."""
    fields = tuple((i, float(rng.uniform(-1, 1))) for i in range(n_sites)) if with_fields else ()
    pairs = tuple(
        (i, j, float(rng.uniform(-1, 1)))
        for i in range(n_sites)
        for j in range(i + 1, n_sites)
        if rng.random() < density
    )
    return IsingProblem(n_sites, fields, pairs)


# Serialization: "N" header line, then "F i J", "P i j J", "K k i1..ik J" records.

def dumps(problem: IsingProblem) -> str:
    lines = [str(problem.n_sites)]
    lines += [f"F {i} {c!r}" for i, c in problem.field_terms]
    lines += [f"P {i} {j} {c!r}" for i, j, c in problem.pair_terms]
    for sites, c in problem.higher_terms:
        lines.append(f"K {len(sites)} {' '.join(map(str, sites))} {c!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> IsingProblem:
    records = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not records or len(records[0]) != 1:
        raise ValueError("problem text must start with a line holding N")
    n = int(records[0][0])
    fields, pairs, higher = [], [], []
    for lineno, rec in enumerate(records[1:], start=2):
        tag = rec[0]
        if tag == "F" and len(rec) == 3:
            fields.append((int(rec[1]), float(rec[2])))
        elif tag == "P" and len(rec) == 4:
            pairs.append((int(rec[1]), int(rec[2]), float(rec[3])))
        elif tag == "K" and len(rec) >= 2 and len(rec) == int(rec[1]) + 3:
            k = int(rec[1])
            higher.append((tuple(int(v) for v in rec[2:2 + k]), float(rec[-1])))
        else:
            raise ValueError(f"malformed record on line {lineno}: {' '.join(rec)}")
    return IsingProblem(n, tuple(fields), tuple(pairs), tuple(higher))
