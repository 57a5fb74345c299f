"""Inhomogeneous Markov chains on enumerable spaces and path-integral Monte Carlo.

Orientation: a kernel is column-stochastic, ``G[y, x]`` is the probability
of the move x -> y, and distributions are column vectors, p' = G p.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numba
import numpy as np

from .schedules import PIMCLog, gamma_to_coupling
from .spinspace import MAX_ENUMERATION_SITES, CapacityError, IsingProblem

COLUMN_SUM_TOL = 1e-12
ALPHA_AGREEMENT_TOL = 1e-12


class FrozenScheduleError(ValueError):
    """The control parameter reached its terminal value (Gamma = 0, T1 = 0)."""


@dataclass(frozen=True)
class TransitionKernel:
    matrix: np.ndarray

    def __post_init__(self):
        g = np.array(self.matrix, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"kernel must be square, got shape {g.shape}")
        if np.any(g < -COLUMN_SUM_TOL) or np.any(g > 1 + COLUMN_SUM_TOL):
            raise ValueError("kernel entries must lie in [0, 1]")
        sums = g.sum(axis=0)
        bad = np.flatnonzero(np.abs(sums - 1.0) > COLUMN_SUM_TOL)
        if bad.size:
            raise ValueError(f"column {bad[0]} sums to {sums[bad[0]]!r}, not 1")
        g.setflags(write=False)
        object.__setattr__(self, "matrix", g)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, other: "TransitionKernel") -> "TransitionKernel":
        return TransitionKernel(self.matrix @ other.matrix)


def random_kernel(size: int, rng: np.random.Generator, sparsity: float = 0.0) -> TransitionKernel:
    g = rng.random((size, size))
    if sparsity:
        g[rng.random((size, size)) < sparsity] = 0.0
        g[rng.integers(size, size=size), np.arange(size)] += 1e-3
    return TransitionKernel(g / g.sum(axis=0))


def matrix_norm(a) -> float:
    """max_x sum_z |A(z, x)|, the norm used with column-stochastic kernels."""
    return float(np.abs(np.asarray(a)).sum(axis=0).max())


def _alpha_overlap(g: np.ndarray) -> float:
    n = g.shape[0]
    best = math.inf
    for x in range(n):
        best = min(best, float(np.minimum(g[:, [x]], g).sum(axis=0).min()))
    return 1.0 - best if n > 1 else 0.0


def _alpha_half_l1(g: np.ndarray) -> float:
    n = g.shape[0]
    best = 0.0
    for x in range(n):
        best = max(best, float(0.5 * np.abs(g[:, [x]] - g).sum(axis=0).max()))
    return best


def ergodicity_coefficient(kernel: TransitionKernel | np.ndarray) -> float:
    """alpha(G) = 1 - min_{x,y} sum_z min(G(z,x), G(z,y)); cross-checked against the half-L1 form."""
    g = kernel.matrix if isinstance(kernel, TransitionKernel) else np.asarray(kernel, float)
    a1 = _alpha_overlap(g)
    a2 = _alpha_half_l1(g)
    if abs(a1 - a2) > ALPHA_AGREEMENT_TOL:
        raise ArithmeticError(f"ergodicity-coefficient forms disagree: {a1!r} vs {a2!r}")
    return a1


# --------------------------------------------------------------------------
# Generation rules

@dataclass(frozen=True)
class GenerationRule:
    """Proposal P(y, x) as a padded neighbour table.

    ``neighbors[x, k]`` is the k-th neighbour of x (or -1) and ``probs[x, k]``
    the matching P(y, x).
    """

    neighbors: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        nb = np.asarray(self.neighbors, dtype=np.int64)
        pr = np.asarray(self.probs, dtype=np.float64)
        if nb.shape != pr.shape:
            raise ValueError("neighbors and probs must have the same shape")
        object.__setattr__(self, "neighbors", nb)
        object.__setattr__(self, "probs", pr)
        dense = self.dense()
        if np.any(np.diag(dense) != 0):
            raise ValueError("generation rule proposes self-moves")
        if not np.allclose(dense, dense.T, atol=1e-15):
            raise ValueError("generation rule is not symmetric")
        sums = dense.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > COLUMN_SUM_TOL):
            raise ValueError("generation probabilities do not sum to 1")
        if np.any(distances_from(self, 0) < 0):
            raise ValueError("generation rule is not irreducible")

    @property
    def size(self) -> int:
        return self.neighbors.shape[0]

    def dense(self) -> np.ndarray:
        n = self.size
        p = np.zeros((n, n))
        for x in range(n):
            for y, w in zip(self.neighbors[x], self.probs[x]):
                if y >= 0:
                    p[y, x] += w
        return p

    @property
    def min_probability(self) -> float:
        return float(self.probs[self.neighbors >= 0].min())


def single_flip_rule(n_bits: int) -> GenerationRule:
    """Uniform single-bit flips: P(y, x) = 1/n_bits for Hamming neighbours."""
    if n_bits > MAX_ENUMERATION_SITES:
        raise CapacityError(f"{n_bits} bits exceeds the enumeration cap of {MAX_ENUMERATION_SITES}")
    xs = np.arange(1 << n_bits)[:, None]
    nb = xs ^ (1 << np.arange(n_bits))[None, :]
    return GenerationRule(nb, np.full(nb.shape, 1.0 / n_bits))


def distances_from(rule: GenerationRule, x: int) -> np.ndarray:
    """BFS step counts d(y, x) for every y; -1 where unreachable."""
    dist = np.full(rule.size, -1, dtype=np.int64)
    dist[x] = 0
    queue = deque([x])
    while queue:
        u = queue.popleft()
        for v in rule.neighbors[u]:
            if v >= 0 and dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


# --------------------------------------------------------------------------
# Acceptance

def heat_bath(u):
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(np.isinf(u), 1.0, u / (1.0 + u))
    return float(out) if out.ndim == 0 else out


def metropolis(u):
    out = np.minimum(1.0, np.asarray(u, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


ACCEPTANCE = {"heat_bath": heat_bath, "metropolis": metropolis}


def tsallis_u(d_f0, d_f1, t0: float, t1: float, q: float):
    """exp(-dF0/T0) [1 + (q-1) dF1/T1]**(1/(1-q)); a non-positive bracket gives 0."""
    if not q > 1:
        raise ValueError(f"Tsallis acceptance needs q > 1, got {q}")
    d_f0 = np.asarray(d_f0, dtype=np.float64)
    bracket = 1.0 + (q - 1.0) * np.asarray(d_f1, dtype=np.float64) / t1
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u = np.where(bracket > 0, np.exp(-d_f0 / t0) * np.abs(bracket) ** (1.0 / (1.0 - q)), 0.0)
    return float(u) if u.ndim == 0 else u


def boltzmann_u(d_f0, d_f1, t0: float, t1: float):
    with np.errstate(over="ignore"):
        return np.exp(-np.asarray(d_f0, float) / t0 - np.asarray(d_f1, float) / t1)


# --------------------------------------------------------------------------
# Path-integral (Suzuki-Trotter) composite system

@dataclass(frozen=True)
class PimcSystem:
    """M replicas of an N-spin problem with periodic slice coupling.

    Composite state bits k*N + i hold spin i of slice k. The Boltzmann
    weight exp(-F0/T0 - F1/T1) equals the Trotter summand
    exp((beta/M) sum_k (-E(sigma^k)) + gamma sum_k sum_i sigma_i^k sigma_i^(k+1))
    with F0 = (1/M) sum_k E(sigma^k), T0 = 1/beta, F1 = -sum_k sum_i
    sigma_i^k sigma_i^(k+1) and T1 = 1/gamma.
    """

    problem: IsingProblem
    trotter: int
    beta: float
    t1_law: Callable[[float], float] = field(repr=False)
    f0: np.ndarray = field(init=False, repr=False)
    f1: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n, m = self.problem.n_sites, self.trotter
        if m < 1:
            raise ValueError("Trotter number must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if n * m > MAX_ENUMERATION_SITES:
            raise CapacityError(f"composite space of {n * m} bits exceeds the cap of {MAX_ENUMERATION_SITES}")
        xs = np.arange(1 << (n * m))
        e = self.problem.energies()
        slices = [(xs >> (k * n)) & ((1 << n) - 1) for k in range(m)]
        f0 = sum(e[s] for s in slices) / m
        f1 = np.zeros(xs.size)
        for k in range(m):
            a, b = slices[k], slices[(k + 1) % m]
            # sigma_i^k sigma_i^(k+1) = 1 - 2 [bits differ]
            diff = a ^ b
            f1 -= n - 2 * np.array([bin(int(d)).count("1") for d in diff])
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "f1", f1)

    @property
    def n_bits(self) -> int:
        return self.problem.n_sites * self.trotter

    @property
    def size(self) -> int:
        return 1 << self.n_bits

    @property
    def t0(self) -> float:
        return 1.0 / self.beta

    def t1(self, t: float) -> float:
        val = float(self.t1_law(t))
        if not val > 0:
            raise FrozenScheduleError(f"T1({t}) = {val}: slices are locked (terminal point)")
        return val

    def weights(self, t: float) -> np.ndarray:
        """Stationary q(x; t) of the frozen-t chain."""
        logw = -self.f0 / self.t0 - self.f1 / self.t1(t)
        w = np.exp(logw - logw.max())
        return w / w.sum()

    def aligned_mask(self) -> np.ndarray:
        return self.f1 == self.f1.min()

    def target_distribution(self) -> np.ndarray:
        """exp(-F0/T0)/B on the F1-minimal (slice-aligned) states, zero elsewhere."""
        mask = self.aligned_mask()
        logw = np.where(mask, -self.f0 / self.t0, -np.inf)
        w = np.exp(logw - logw[mask].max())
        return w / w.sum()

    def slice_coupling_weight(self, beta_gamma_over_m: float) -> float:
        """Prefactor (1/2 sinh(2 beta Gamma / M))**(N M / 2) of the Trotter formula."""
        return (0.5 * math.sinh(2.0 * beta_gamma_over_m)) ** (self.n_bits / 2.0)


def build_trotter_system(problem: IsingProblem, trotter: int, beta: float,
                         gamma_law: Callable[[float], float]) -> PimcSystem:
    """PIMC system whose T1(t) = 1/gamma(t), gamma = (1/2) log coth(beta Gamma(t)/M)."""

    def t1_law(t):
        g = float(gamma_law(t))
        if g <= 0:
            return 0.0
        return 1.0 / float(gamma_to_coupling(g, beta, trotter))

    return PimcSystem(problem, trotter, beta, t1_law)


def trotter_partition_function(problem: IsingProblem, trotter: int, beta: float, gamma: float) -> float:
    """Trotter approximation of Tr exp(-beta (H_Ising - gamma sum sigma^x)), prefactor included."""
    sys_ = PimcSystem(problem, trotter, beta, lambda t: 1.0)
    coupling = float(gamma_to_coupling(gamma, beta, trotter))
    logw = -sys_.f0 * beta - sys_.f1 * coupling
    x = beta * gamma / trotter
    return float(sys_.slice_coupling_weight(x) * np.exp(logw).sum())


# --------------------------------------------------------------------------
# Kernels

ACCEPTANCE_CODES = {"heat_bath": 0, "metropolis": 1}


@numba.njit(cache=True)
def _accept(code, u):
    if code == 0:
        if math.isinf(u):
            return 1.0
        return u / (1.0 + u)
    return min(1.0, u)


@numba.njit(cache=True)
def _move_probs(nbr, prob, f0, f1, t0, t1, code, tsallis_q, out):
    """out[x, k] = P(y, x) A(y, x) for y = nbr[x, k]."""
    n, deg = nbr.shape
    for x in range(n):
        for k in range(deg):
            y = nbr[x, k]
            if y < 0:
                out[x, k] = 0.0
                continue
            d0 = f0[y] - f0[x]
            d1 = f1[y] - f1[x]
            if tsallis_q > 1.0:
                br = 1.0 + (tsallis_q - 1.0) * d1 / t1
                u = math.exp(-d0 / t0) * br ** (1.0 / (1.0 - tsallis_q)) if br > 0 else 0.0
            else:
                u = math.exp(-d0 / t0 - d1 / t1)
            out[x, k] = prob[x, k] * _accept(code, u)


@numba.njit(cache=True)
def _apply_moves(nbr, moves, p, out):
    n, deg = nbr.shape
    for x in range(n):
        out[x] = p[x]
    for x in range(n):
        for k in range(deg):
            y = nbr[x, k]
            if y >= 0:
                flow = moves[x, k] * p[x]
                out[y] += flow
                out[x] -= flow


@numba.njit(cache=True)
def _evolve_dense(nbr, prob, f0, f1, t0, t1_values, code, tsallis_q, steps_per_unit, p, record_at):
    """Evolve columns of p through len(t1_values) time units; snapshot at record_at."""
    n, deg = nbr.shape
    moves = np.empty((n, deg))
    tmp = np.empty(n)
    snaps = np.empty((record_at.shape[0], p.shape[0], p.shape[1]))
    r = 0
    for t in range(t1_values.shape[0]):
        _move_probs(nbr, prob, f0, f1, t0, t1_values[t], code, tsallis_q, moves)
        for c in range(p.shape[1]):
            col = p[:, c].copy()
            for _ in range(steps_per_unit):
                _apply_moves(nbr, moves, col, tmp)
                col[:] = tmp
            p[:, c] = col
        while r < record_at.shape[0] and record_at[r] == t + 1:
            snaps[r] = p
            r += 1
    return snaps


@numba.njit(cache=True)
def _sample_walk(seed, x0, nbr, prob, f0, f1, t0, t1_values, code, tsallis_q, steps_per_unit, window):
    """Single-walker chain; returns visit counts over the last ``window`` units."""
    np.random.seed(seed)
    n, deg = nbr.shape
    counts = np.zeros(n, np.int64)
    x = x0
    horizon = t1_values.shape[0]
    for t in range(horizon):
        t1 = t1_values[t]
        for _ in range(steps_per_unit):
            r = np.random.random()
            acc = 0.0
            y = -1
            for k in range(deg):
                acc += prob[x, k]
                if r < acc:
                    y = nbr[x, k]
                    break
            if y >= 0:
                d0 = f0[y] - f0[x]
                d1 = f1[y] - f1[x]
                if tsallis_q > 1.0:
                    br = 1.0 + (tsallis_q - 1.0) * d1 / t1
                    u = math.exp(-d0 / t0) * br ** (1.0 / (1.0 - tsallis_q)) if br > 0 else 0.0
                else:
                    u = math.exp(-d0 / t0 - d1 / t1)
                if np.random.random() < _accept(code, u):
                    x = y
        if t >= horizon - window:
            counts[x] += 1
    return counts


@dataclass(frozen=True)
class ChainSpec:
    """Acceptance choice for a PIMC chain: g in {heat_bath, metropolis}; tsallis_q > 1 switches u."""

    acceptance: str = "heat_bath"
    tsallis_q: float | None = None

    def __post_init__(self):
        if self.acceptance not in ACCEPTANCE:
            raise ValueError(f"unknown acceptance {self.acceptance!r}")
        if self.tsallis_q is not None and not self.tsallis_q > 1:
            raise ValueError(f"Tsallis acceptance needs q > 1, got {self.tsallis_q}")

    @property
    def g(self):
        return ACCEPTANCE[self.acceptance]

    @property
    def flavor(self) -> str:
        return "boltzmann" if self.tsallis_q is None else f"tsallis:{self.tsallis_q:g}"


def acceptance_probability(system: PimcSystem, x: int, y: int, t: float, chain: ChainSpec = ChainSpec()) -> float:
    d0 = system.f0[y] - system.f0[x]
    d1 = system.f1[y] - system.f1[x]
    t1 = system.t1(t)
    if chain.tsallis_q is None:
        u = float(boltzmann_u(d0, d1, system.t0, t1))
    else:
        u = tsallis_u(d0, d1, system.t0, t1, chain.tsallis_q)
    return chain.g(u)


def kernel_at(system: PimcSystem, rule: GenerationRule, t: float, chain: ChainSpec = ChainSpec()) -> TransitionKernel:
    """Single-proposal kernel G(y, x; t) = P(y, x) A(y, x; t), rejected mass on the diagonal."""
    moves = np.empty(rule.neighbors.shape)
    _move_probs(rule.neighbors, rule.probs, system.f0, system.f1, system.t0, system.t1(t),
                ACCEPTANCE_CODES[chain.acceptance], chain.tsallis_q or 0.0, moves)
    n = system.size
    g = np.zeros((n, n))
    for x in range(n):
        for y, mv in zip(rule.neighbors[x], moves[x]):
            if y >= 0:
                g[y, x] += mv
        g[x, x] += 1.0 - moves[x].sum()
    return TransitionKernel(g)


@dataclass(frozen=True)
class ErgodicityConstants:
    r: int
    l0: float
    l1: float
    w: float
    local_maxima: tuple[int, ...]


def ergodicity_constants(system: PimcSystem, rule: GenerationRule) -> ErgodicityConstants:
    nb = rule.neighbors
    valid = nb >= 0
    safe = np.where(valid, nb, 0)
    f1_nb = np.where(valid, system.f1[safe], -np.inf)
    maxima = np.flatnonzero(np.all(f1_nb <= system.f1[:, None], axis=1))
    ecc = [int(distances_from(rule, x).max()) for x in range(rule.size) if x not in set(maxima.tolist())]
    if not ecc:
        raise ValueError("every state is a local maximum of F1; R is undefined")
    l0 = float(np.max(np.where(valid, np.abs(system.f0[safe] - system.f0[:, None]), 0.0)))
    l1 = float(np.max(np.where(valid, np.abs(system.f1[safe] - system.f1[:, None]), 0.0)))
    return ErgodicityConstants(min(ecc), l0, l1, rule.min_probability, tuple(int(m) for m in maxima))


def pimc_schedule(constants: ErgodicityConstants) -> PIMCLog:
    """The slowest-allowed law T1(t) = R L1 / log(t + 2)."""
    return PIMCLog(constants.r, constants.l1)


@dataclass
class ChainTrajectory:
    times: np.ndarray
    distributions: np.ndarray    # (len(times), |S|, n_initial)

    def final(self, column: int = 0) -> np.ndarray:
        return self.distributions[-1, :, column]


def _t1_values(system: PimcSystem, horizon: int) -> np.ndarray:
    ts = np.arange(horizon, dtype=np.float64)
    try:
        vals = np.broadcast_to(np.asarray(system.t1_law(ts), dtype=np.float64), ts.shape).copy()
    except (TypeError, ValueError):
        vals = np.array([float(system.t1_law(t)) for t in ts])
    if not np.all(vals > 0):
        raise FrozenScheduleError("T1 reaches 0 within the horizon: slices are locked (terminal point)")
    return vals


def run_inhomogeneous_chain(system: PimcSystem, rule: GenerationRule, p0, horizon: int,
                            record_at=None, chain: ChainSpec = ChainSpec(),
                            steps_per_unit: int | None = None) -> ChainTrajectory:
    """Exact p(t) = G(t-1) ... G(0) p0, one time unit = one sweep of N*M proposals.

    ``p0`` may hold several initial distributions as columns.
    """
    p = np.array(p0, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] != system.size:
        raise ValueError(f"initial distribution has {p.shape[0]} entries, expected {system.size}")
    record = np.unique(np.asarray([horizon] if record_at is None else list(record_at) + [horizon], dtype=np.int64))
    if record.min() < 1 or record.max() > horizon:
        raise ValueError("record times must lie in [1, horizon]")
    spu = system.n_bits if steps_per_unit is None else steps_per_unit
    snaps = _evolve_dense(rule.neighbors, rule.probs, system.f0, system.f1, system.t0,
                          _t1_values(system, horizon), ACCEPTANCE_CODES[chain.acceptance],
                          chain.tsallis_q or 0.0, spu, np.ascontiguousarray(p), record)
    return ChainTrajectory(record, snaps)


def sample_chain(system: PimcSystem, rule: GenerationRule, x0: int, horizon: int, window: int,
                 seed: int, chain: ChainSpec = ChainSpec(), steps_per_unit: int | None = None) -> np.ndarray:
    """Visit histogram (normalised) over the final ``window`` units of one walker."""
    spu = system.n_bits if steps_per_unit is None else steps_per_unit
    counts = _sample_walk(seed, x0, rule.neighbors, rule.probs, system.f0, system.f1, system.t0,
                          _t1_values(system, horizon), ACCEPTANCE_CODES[chain.acceptance],
                          chain.tsallis_q or 0.0, spu, window)
    return counts / counts.sum()


@dataclass
class LowerBoundReport:
    t: float
    bound: float
    min_offdiag: float
    min_diag_outside_maxima: float
    lb1_holds: bool
    lb2_holds: bool
    tightness: float
    counterexample: tuple[int, int] | None = None


def check_lower_bound_lemma(system: PimcSystem, rule: GenerationRule, t: float,
                            chain: ChainSpec = ChainSpec()) -> LowerBoundReport:
    """Compare single-proposal G(y, x; t) against w g(1) exp(-L0/T0 - L1/T1(t))."""
    c = ergodicity_constants(system, rule)
    bound = c.w * chain.g(1.0) * math.exp(-c.l0 / system.t0 - c.l1 / system.t1(t))
    g = kernel_at(system, rule, t, chain).matrix
    p = rule.dense()
    off = np.where(p > 0, g, np.inf)
    ys, xs = np.unravel_index(np.argmin(off), off.shape)
    maxima = set(c.local_maxima)
    outside = [x for x in range(system.size) if x not in maxima]
    diag = float(min(g[x, x] for x in outside))
    lb1 = bool(off[ys, xs] >= bound)
    return LowerBoundReport(t, bound, float(off[ys, xs]), diag, lb1, diag >= bound,
                            float(off[ys, xs] / bound), None if lb1 else (int(ys), int(xs)))


def lemma_onset(system: PimcSystem, rule: GenerationRule, t_grid, chain: ChainSpec = ChainSpec()) -> float | None:
    """Smallest grid time t1 beyond which the diagonal bound holds at every later grid point."""
    ok = [check_lower_bound_lemma(system, rule, t, chain).lb2_holds for t in t_grid]
    onset = None
    for t, good in zip(t_grid, ok):
        if good and onset is None:
            onset = t
        elif not good:
            onset = None
    return onset


def write_kernel_csv(kernel: TransitionKernel, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "x", "G"])
        for y, x in zip(*np.nonzero(kernel.matrix)):
            w.writerow([int(y), int(x), repr(float(kernel.matrix[y, x]))])
    return path


def write_trajectory_csv(traj: ChainTrajectory, target: np.ndarray, path) -> Path:
    """Rows t, ||p - target||_1, ||p - p'||_1 (second column of initial conditions, if any)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "dist_target", "dist_pair"])
        for t, d in zip(traj.times, traj.distributions):
            pair = float(np.abs(d[:, 0] - d[:, 1]).sum()) if d.shape[1] > 1 else float("nan")
            w.writerow([int(t), float(np.abs(d[:, 0] - target).sum()), pair])
    return path
