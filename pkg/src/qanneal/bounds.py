"""Hopf's inequality, spectral-gap lower bounds and the SA-to-quantum map.

Perron-Frobenius facts used throughout: a strictly positive matrix has a
real simple dominant eigenvalue lambda0 with a positive eigenvector, and
every other eigenvalue obeys |lambda| <= (kappa - 1)/(kappa + 1) lambda0
where kappa = max_{i,j,k} M_ik / M_jk.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .operators import DriverOperator, StructuredOperator, ising_operator
from .schedules import LogTemperature
from .spinspace import CapacityError, IsingProblem, enumerate_extremes

MAX_SA_SITES = 10


@dataclass(frozen=True)
class PositiveMatrix:
    matrix: np.ndarray
    kappa: float = field(init=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got shape {m.shape}")
        bad = np.argwhere(~(m > 0))
        if bad.size:
            i, j = bad[0]
            raise ValueError(f"entry ({i}, {j}) = {m[i, j]!r} is not strictly positive")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        # Column-wise ratio max/min maximises M_ik / M_jk over i, j for fixed k.
        object.__setattr__(self, "kappa", float(np.max(m.max(axis=0) / m.min(axis=0))))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def power_iteration(m: np.ndarray, tol: float = 1e-15, max_iter: int = 100_000,
                    start: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a positive matrix; the vector is positive and 1-normalised."""
    v = np.full(m.shape[0], 1.0 / m.shape[0]) if start is None else np.asarray(start, float) / np.sum(start)
    lam = 0.0
    for _ in range(max_iter):
        w = m @ v
        lam_new = float(np.sum(w))
        w /= lam_new
        if np.max(np.abs(w - v)) <= tol:
            return lam_new, w
        v, lam = w, lam_new
    return lam, v


@dataclass(frozen=True)
class HopfResult:
    kappa: float
    lambda0: float
    bound: float


def hopf_bound(m: PositiveMatrix) -> HopfResult:
    lam0, _ = power_iteration(m.matrix)
    k = m.kappa
    return HopfResult(k, lam0, (k - 1.0) / (k + 1.0) * lam0)


def subdominant_moduli(m: PositiveMatrix) -> np.ndarray:
    """|lambda| of every eigenvalue except the dominant one, from a full eigensolve."""
    ev = np.linalg.eigvals(m.matrix)
    order = np.argsort(-ev.real)
    return np.abs(ev[order[1:]])


def oscillation(v, p) -> float:
    """osc(v/p) = max_i v_i/p_i - min_i v_i/p_i."""
    r = np.asarray(v, float) / np.asarray(p, float)
    return float(r.max() - r.min())


def oscillation_contraction(m: PositiveMatrix, v, p) -> tuple[float, float]:
    """(osc(Mv/Mp), ((kappa-1)/(kappa+1)) osc(v/p)); the first never exceeds the second."""
    k = m.kappa
    return oscillation(m.matrix @ v, m.matrix @ p), (k - 1.0) / (k + 1.0) * oscillation(v, p)


# --------------------------------------------------------------------------
# Gap lower bounds

def default_e_plus(problem: IsingProblem, gamma0: float) -> float:
    return enumerate_extremes(problem).e_max + gamma0 + 1.0


def tfim_ground_energy(problem: IsingProblem, gamma: float) -> float:
    """epsilon_0 of H_Ising - gamma sum_i sigma^x_i by dense diagonalization."""
    drv = DriverOperator("transverse_field", problem.n_sites).operator()
    h = ising_operator(problem).dense() + gamma * drv.dense()
    return float(np.linalg.eigvalsh(h)[0])


def tfim_gap_lower_bound(problem: IsingProblem, gamma: float, gamma0: float,
                         e_plus: float | None = None, eps0: float | None = None) -> float:
    """2 (E+ - eps0) N! gamma**N / (N (E+ - E_min + N gamma0)**N).

    ``eps0`` defaults to the exact ground energy at ``gamma``; pass an upper
    estimate (such as its maximum over the run) for the schedule-level bound.
    """
    ext = enumerate_extremes(problem)
    if e_plus is None:
        e_plus = ext.e_max + gamma0 + 1.0
    if not 0 < gamma <= gamma0:
        raise ValueError(f"need 0 < gamma <= gamma0, got gamma={gamma}, gamma0={gamma0}")
    if not e_plus > ext.e_max + gamma0:
        raise ValueError(f"E_plus={e_plus} must exceed E_max + gamma0 = {ext.e_max + gamma0}")
    if eps0 is None:
        eps0 = tfim_ground_energy(problem, gamma)
    n = problem.n_sites
    return 2.0 * (e_plus - eps0) * math.factorial(n) * gamma**n / (n * (e_plus - ext.e_min + n * gamma0) ** n)


def tfim_coefficient_stirling(problem: IsingProblem, gamma0: float, e_plus: float, eps0_max: float) -> float:
    """Stirling approximation of the coefficient A; asymptotic cross-check only."""
    e_min = enumerate_extremes(problem).e_min
    n = problem.n_sites
    return (2.0 * math.sqrt(2 * math.pi * n) * (e_plus - eps0_max) / (n * math.e**n)
            * (n / (e_plus - e_min + n * gamma0)) ** n)


def mti_ground_energy(problem: IsingProblem, gamma: float) -> float:
    h = ising_operator(problem).dense() + gamma * DriverOperator("many_body", problem.n_sites).operator().dense()
    return float(np.linalg.eigvalsh(h)[0])


def mti_gap_lower_bound(problem: IsingProblem, gamma: float, e_plus: float | None = None,
                        eps0_max: float | None = None) -> float:
    """2 gamma (E+ - eps0_max) / (E+ - E_min) for the many-body transverse driver.

    ``eps0_max`` defaults to E_min, the supremum of the ground energy over
    fields in (0, gamma] (it decreases with the field and tends to E_min).
    """
    ext = enumerate_extremes(problem)
    if e_plus is None:
        e_plus = ext.e_max + gamma + 1.0
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not e_plus > ext.e_max + gamma:
        raise ValueError(f"E_plus={e_plus} must exceed E_max + gamma = {ext.e_max + gamma}")
    if eps0_max is None:
        eps0_max = ext.e_min
    return 2.0 * gamma * (e_plus - eps0_max) / (e_plus - ext.e_min)


# --------------------------------------------------------------------------
# Classical-quantum map for simulated annealing

@dataclass(frozen=True)
class SaQuantumMap:
    """H_q(T) = -chi sum_j (sigma^x_j - exp(beta H_j)), chi = exp(-beta p).

    H_j holds every term touching site j in full, so sum_j H_j over-counts
    multi-site terms; only H_j and H are used separately.
    """

    problem: IsingProblem
    temperature: float
    local: np.ndarray = field(repr=False)   # (N, 2**N) table of H_j
    p: float

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature

    @property
    def chi(self) -> float:
        return math.exp(-self.beta * self.p)

    def operator(self) -> StructuredOperator:
        n = self.problem.n_sites
        diag = self.chi * np.exp(self.beta * self.local).sum(axis=0)
        return StructuredOperator(diag, [1 << j for j in range(n)], [self.chi] * n)

    def dense(self) -> np.ndarray:
        return self.operator().dense()

    def ground_vector(self) -> np.ndarray:
        """psi(T) = exp(-beta H / 2) applied to the uniform sum, unnormalised."""
        return np.exp(-0.5 * self.beta * self.problem.energies())

    def verify_ground_state(self) -> float:
        psi = self.ground_vector()
        return float(np.linalg.norm(self.operator().apply(psi)) / np.linalg.norm(psi))

    def quantum_expectation(self, observable) -> float:
        psi = self.ground_vector()
        return float(np.sum(psi**2 * np.asarray(observable)) / np.sum(psi**2))

    def spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.dense())

    def gap(self) -> float:
        w = np.linalg.eigvalsh(self.dense())
        return float(w[1] - w[0])


def build_sa_map(problem: IsingProblem, temperature: float) -> SaQuantumMap:
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if problem.n_sites > MAX_SA_SITES:
        raise CapacityError(f"{problem.n_sites} sites exceeds the SA-map cap of {MAX_SA_SITES}")
    local = np.stack([problem.local_energies(j) for j in range(problem.n_sites)])
    return SaQuantumMap(problem, float(temperature), local, float(np.abs(local).max()))


def thermal_average(problem: IsingProblem, temperature: float, observable) -> float:
    e = problem.energies()
    w = np.exp(-(e - e.min()) / temperature)
    return float(np.sum(w * np.asarray(observable)) / np.sum(w))


def matrix_element_check(problem: IsingProblem, temperature: float, dT: float = 1e-5) -> tuple[float, float]:
    """(<psi1| dH_q/dT |psi>, -Delta <psi1|H|psi> / (2 T**2)) with dH_q/dT by central difference."""
    sa = build_sa_map(problem, temperature)
    w, v = sa.spectrum()
    psi, psi1 = v[:, 0], v[:, 1]
    dh = (build_sa_map(problem, temperature + dT).dense() - build_sa_map(problem, temperature - dT).dense()) / (2 * dT)
    lhs = float(psi1 @ dh @ psi)
    rhs = float(-(w[1] - w[0]) * (psi1 @ (problem.energies() * psi)) / (2 * temperature**2))
    return lhs, rhs


@dataclass(frozen=True)
class SaGapReport:
    temperature: float
    gap: float
    p: float
    exponent: float       # beta p N, the rate in the exp(-(beta p + c) N) gap law
    law: LogTemperature


def sa_gap_and_schedule(problem: IsingProblem, temperature: float, alpha: float = 1.0) -> SaGapReport:
    """Measured gap of H_q(T) and the log-temperature law T(t) = p N / log(alpha t + 1).

    alpha has no closed form; it is user supplied.
    """
    sa = build_sa_map(problem, temperature)
    n = problem.n_sites
    return SaGapReport(temperature, sa.gap(), sa.p, sa.beta * sa.p * n, LogTemperature(sa.p, n, alpha))


# --------------------------------------------------------------------------
# Reports

def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return path


def hopf_report(m: PositiveMatrix) -> dict:
    res = hopf_bound(m)
    sub = subdominant_moduli(m)
    return {**asdict(res), "max_subdominant": float(sub.max()) if sub.size else 0.0, "size": m.size}
