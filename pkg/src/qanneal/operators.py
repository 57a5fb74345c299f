"""Instantaneous annealing Hamiltonians applied without dense matrices.

Every term is a :class:`StructuredOperator`: a diagonal table plus
bit-flip couplings (``x -> x ^ mask``) and an optional uniform all-to-all
coupling. A time-dependent Hamiltonian is ``a(s) * potential + b(s) * driver``
where ``(a, b) = (f, 1 - f)`` in the interpolating form and ``(1, Gamma(s))``
in the transverse-field form.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schedules import MAX_ORDER, Schedule, identity
from .spinspace import MAX_DENSE_SITES, CapacityError, IsingProblem

MAX_DENSE_DIM = 4096
DEGENERACY_RTOL = 1e-10


class SingularityError(ArithmeticError):
    """A gap closes where the adiabatic quantities need it open."""


class ScheduleMismatchError(ValueError):
    """A schedule does not have the endpoint smoothness a bound assumes."""


@dataclass(frozen=True, eq=False)
class StructuredOperator:
    """H v = diag * v - sum_k coeffs[k] * v[x ^ masks[k]] - uniform * sum(v)."""

    diag: np.ndarray
    masks: np.ndarray
    coeffs: np.ndarray
    uniform: float = 0.0

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=np.float64)
        masks = np.asarray(self.masks, dtype=np.int64).reshape(-1)
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        if masks.shape != coeffs.shape:
            raise ValueError("masks and coeffs must have equal length")
        dim = diag.shape[0]
        if np.any(masks <= 0) or np.any(masks >= dim):
            raise ValueError("flip masks must be non-zero and inside the state space")
        for arr in (diag, masks, coeffs):
            arr.setflags(write=False)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "uniform", float(self.uniform))
        perms = np.arange(dim)[None, :] ^ masks[:, None]
        perms.setflags(write=False)
        object.__setattr__(self, "perms", perms)

    @property
    def dim(self) -> int:
        return self.diag.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        for c, perm in zip(self.coeffs, self.perms):
            out -= c * v[perm]
        if self.uniform:
            out -= self.uniform * v.sum()
        return out

    def dense(self) -> np.ndarray:
        d = self.dim
        m = np.diag(self.diag).astype(np.float64)
        rows = np.arange(d)
        for c, perm in zip(self.coeffs, self.perms):
            m[rows, perm] -= c
        if self.uniform:
            m -= self.uniform
        return m

    def norm_bound(self) -> float:
        """Row-sum bound on the infinity norm."""
        return float(np.abs(self.diag).max() + np.abs(self.coeffs).sum() + abs(self.uniform) * self.dim)

    @classmethod
    def diagonal(cls, diag) -> "StructuredOperator":
        return cls(np.asarray(diag, dtype=np.float64), np.zeros(0, np.int64), np.zeros(0))


def ising_operator(problem: IsingProblem) -> StructuredOperator:
    return StructuredOperator.diagonal(problem.energies())


DRIVER_KINDS = ("transverse_field", "transverse_ising", "many_body", "database")


@dataclass(frozen=True)
class DriverOperator:
    """Kinetic term with unit strength.

    transverse_field: -sum_i sigma^x_i
    transverse_ising: -(sum_i sigma^x_i + sum_<ij> sigma^x_i sigma^x_j) over ``pairs``
    many_body: -prod_i (1 + sigma^x_i), every z-basis element equal to -1
    database: 1 - (1/N) sum_ij |i><j| on an N-item space (``n_sites`` is N)
    """

    kind: str
    n_sites: int
    pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.kind not in DRIVER_KINDS:
            raise ValueError(f"unknown driver kind {self.kind!r}; expected one of {DRIVER_KINDS}")
        if self.kind == "transverse_ising" and not self.pairs:
            raise ValueError("transverse_ising driver needs a pair list")

    @classmethod
    def transverse_ising_for(cls, problem: IsingProblem) -> "DriverOperator":
        """Pairs default to the problem's own coupling graph."""
        return cls("transverse_ising", problem.n_sites, tuple((i, j) for i, j, _ in problem.pair_terms))

    @property
    def dim(self) -> int:
        return self.n_sites if self.kind == "database" else 1 << self.n_sites

    def operator(self) -> StructuredOperator:
        n = self.n_sites
        if self.kind == "transverse_field":
            masks = [1 << i for i in range(n)]
            return StructuredOperator(np.zeros(1 << n), masks, np.ones(n))
        if self.kind == "transverse_ising":
            masks = [1 << i for i in range(n)] + [(1 << i) | (1 << j) for i, j in self.pairs]
            return StructuredOperator(np.zeros(1 << n), masks, np.ones(len(masks)))
        if self.kind == "many_body":
            return StructuredOperator(np.zeros(1 << n), np.zeros(0, np.int64), np.zeros(0), uniform=1.0)
        return StructuredOperator(np.ones(n), np.zeros(0, np.int64), np.zeros(0), uniform=1.0 / n)


def _check_dense(dim: int):
    if dim > MAX_DENSE_DIM:
        raise CapacityError(
            f"dimension {dim} exceeds the dense eigensolver cap {MAX_DENSE_DIM}; "
            "use a gap-only iterative path instead"
        )


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None

    @property
    def gaps(self) -> np.ndarray:
        return self.eigenvalues - self.eigenvalues[0]


def _fix_phases(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1
    return vecs * signs


class AnnealHamiltonian:
    """H(s) = a(s) * potential + b(s) * driver for s in [0, 1].

    ``form='f'``: a = f(s), b = 1 - f(s), so H(0) is the driver and H(1) the
    potential. ``form='gamma'``: a = 1, b = Gamma(s) with ``control`` the
    field profile as a function of s.
    """

    def __init__(self, potential: StructuredOperator, driver: StructuredOperator,
                 control: Schedule, form: str = "f", name: str = "", metadata: dict | None = None):
        if potential.dim != driver.dim:
            raise ValueError(f"potential dim {potential.dim} != driver dim {driver.dim}")
        if form not in ("f", "gamma"):
            raise ValueError("form must be 'f' or 'gamma'")
        self.potential = potential
        self.driver = driver
        self.control = control
        self.form = form
        self.name = name
        self.metadata = dict(metadata or {})

    @property
    def dim(self) -> int:
        return self.potential.dim

    @property
    def schedule(self) -> Schedule:
        return self.control

    def coefficient_derivs(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Rows k = 0..4 of d^k a/ds^k and d^k b/ds^k."""
        f = self.control.derivs(s)
        if self.form == "f":
            b = -f
            b[0] = 1.0 - f[0]
            return f, b
        a = np.zeros_like(f)
        a[0] = 1.0
        return a, f

    def coefficients(self, s) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.coefficient_derivs(s)
        return a[0], b[0]

    def with_control(self, control: Schedule) -> "AnnealHamiltonian":
        return AnnealHamiltonian(self.potential, self.driver, control, self.form, self.name, self.metadata)

    def apply(self, s: float, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.dim,):
            raise ValueError(f"state has shape {v.shape}, expected ({self.dim},)")
        a, b = self.coefficients(s)
        return a * self.potential.apply(v) + b * self.driver.apply(v)

    def dense(self, s: float) -> np.ndarray:
        _check_dense(self.dim)
        a, b = self.coefficients(s)
        return a * self.potential.dense() + b * self.driver.dense()

    def dense_derivative(self, s: float, order: int) -> np.ndarray:
        if not 1 <= order <= MAX_ORDER:
            raise ValueError(f"derivative order must be 1..{MAX_ORDER}")
        a, b = self.coefficient_derivs(s)
        return a[order] * self.potential.dense() + b[order] * self.driver.dense()

    def norm_bound(self, samples: int = 1001) -> float:
        """max_s of the row-sum bound |a(s)| |P| + |b(s)| |K| on a grid."""
        a, b = self.coefficients(np.linspace(0.0, 1.0, samples))
        return float(np.max(np.abs(a) * self.potential.norm_bound() + np.abs(b) * self.driver.norm_bound()))


def apply(h: AnnealHamiltonian, s: float, v: np.ndarray) -> np.ndarray:
    return h.apply(s, v)


def instantaneous_spectrum(h: AnnealHamiltonian, s: float, vectors: bool = True) -> Spectrum:
    m = h.dense(s)
    if vectors:
        w, v = np.linalg.eigh(m)
        return Spectrum(w, _fix_phases(v))
    return Spectrum(np.linalg.eigvalsh(m), None)


def _checked_gap(spec: Spectrum, j: int, scale: float, s: float) -> float:
    gap = spec.eigenvalues[j] - spec.eigenvalues[0]
    if gap <= DEGENERACY_RTOL * max(scale, 1.0):
        raise SingularityError(f"gap Delta_{j} = {gap:.3e} is degenerate at s = {s}")
    return gap


def adiabatic_functional(h: AnnealHamiltonian, s: float, j: int, m: int = 1) -> float:
    """<j(s)| d^m H/ds^m |0(s)> / Delta_j(s)**(m+1) with phase-fixed eigenvectors."""
    if j < 1:
        raise ValueError("excited index j must be >= 1")
    spec = instantaneous_spectrum(h, s)
    gap = _checked_gap(spec, j, float(np.abs(spec.eigenvalues).max()), s)
    dh = h.dense_derivative(s, m)
    vec = spec.eigenvectors
    return float(vec[:, j] @ dh @ vec[:, 0]) / gap ** (m + 1)


def endpoint_smoothness(h: AnnealHamiltonian, m: int, atol: float = 1e-9) -> None:
    """Raise unless d^k H/ds^k vanishes at s = 0 and 1 for k = 1..m-1."""
    for s in (0.0, 1.0):
        a, b = h.coefficient_derivs(s)
        for k in range(1, m):
            if abs(a[k]) > atol or abs(b[k]) > atol:
                raise ScheduleMismatchError(
                    f"schedule {h.control.name!r}: derivative of order {k} does not vanish at s = {s:g}"
                )


def excitation_bound(h: AnnealHamiltonian, j: int, m: int, imaginary_time: bool = False) -> float:
    """tau-independent coefficient C with P_j <~ C / tau**(2m).

    Real time: (|A_j^(m)(0)| + |A_j^(m)(1)|)**2. Imaginary time drops the
    s = 0 contribution.
    """
    endpoint_smoothness(h, m)
    end = abs(adiabatic_functional(h, 1.0, j, m))
    if imaginary_time:
        return end**2
    return (abs(adiabatic_functional(h, 0.0, j, m)) + end) ** 2


# --------------------------------------------------------------------------
# Model builders

def transverse_field_anneal(problem: IsingProblem, schedule: Schedule, gamma: float = 1.0) -> AnnealHamiltonian:
    """f H_Ising + (1 - f) (-gamma sum sigma^x)."""
    if problem.n_sites > MAX_DENSE_SITES:
        raise CapacityError(f"{problem.n_sites} sites exceeds the dense-dynamics cap of {MAX_DENSE_SITES}")
    drv = DriverOperator("transverse_field", problem.n_sites).operator()
    drv = StructuredOperator(drv.diag, drv.masks, gamma * drv.coeffs)
    return AnnealHamiltonian(ising_operator(problem), drv, schedule, "f", name="transverse_field",
                             metadata={"gamma": gamma})


def gamma_form(problem: IsingProblem, driver: DriverOperator, gamma_profile: Schedule) -> AnnealHamiltonian:
    """H_Ising + Gamma(s) * driver, Gamma(s) given by ``gamma_profile``."""
    if driver.n_sites != problem.n_sites or driver.kind == "database":
        raise ValueError("driver must act on the problem's spin space")
    meta = {"driver": driver.kind}
    if driver.kind == "transverse_ising":
        meta["pairs"] = "problem coupling graph" if set(driver.pairs) == {
            (i, j) for i, j, _ in problem.pair_terms} else "custom"
    return AnnealHamiltonian(ising_operator(problem), driver.operator(), gamma_profile, "gamma",
                             name=driver.kind, metadata=meta)


def constant_gamma(value: float) -> Schedule:
    def derivs(s):
        out = np.zeros((MAX_ORDER + 1,) + np.shape(s))
        out[0] = value
        return out

    return Schedule(f"const:{value:g}", derivs, anneal_path=False)


def database_search(n_items: int, schedule: Schedule, marked: int = 0) -> AnnealHamiltonian:
    """f (1 - |m><m|) + (1 - f)(1 - (1/N) sum_ij |i><j|) on the item space."""
    if not 0 <= marked < n_items:
        raise ValueError("marked item out of range")
    pot = np.ones(n_items)
    pot[marked] = 0.0
    return AnnealHamiltonian(StructuredOperator.diagonal(pot), DriverOperator("database", n_items).operator(),
                             schedule, "f", name="database", metadata={"n_items": n_items, "marked": marked})


def landau_zener(h_field: float, alpha: float, schedule: Schedule) -> AnnealHamiltonian:
    """-(1/2 - f) h sigma^z - alpha sigma^x as an f-interpolation.

    H(0) = -(h/2) sigma^z - alpha sigma^x, H(1) = (h/2) sigma^z - alpha sigma^x.
    """
    sz = np.array([1.0, -1.0])
    pot = StructuredOperator(0.5 * h_field * sz, [1], [alpha])
    kin = StructuredOperator(-0.5 * h_field * sz, [1], [alpha])
    return AnnealHamiltonian(pot, kin, schedule, "f", name="landau_zener",
                             metadata={"h": h_field, "alpha": alpha})


def trivial_anneal(problem: IsingProblem, schedule: Schedule | None = None) -> AnnealHamiltonian:
    """Potential equal to the driver: H(s) constant in s."""
    op = ising_operator(problem)
    return AnnealHamiltonian(op, op, schedule or identity(), "f", name="trivial")


def write_spectrum_csv(h: AnnealHamiltonian, s_grid, path, n_levels: int | None = None) -> Path:
    """Rows ``s, eps_0, ..., eps_k, gap_1`` for gap-trajectory plots."""
    path = Path(path)
    rows = []
    for s in s_grid:
        eps = instantaneous_spectrum(h, float(s), vectors=False).eigenvalues
        k = len(eps) if n_levels is None else min(n_levels, len(eps))
        rows.append([float(s), *eps[:k], eps[1] - eps[0]])
    k = len(rows[0]) - 2
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", *[f"eps_{i}" for i in range(k)], "gap_1"])
        for r in rows:
            w.writerow([repr(float(x)) for x in r])
    return path
