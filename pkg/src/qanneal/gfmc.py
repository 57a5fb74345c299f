"""Green's-function Monte Carlo for the transverse-field Ising model.

Two Green's functions propagate psi_{k+1} = G_hat(t_k) psi_k:

* linear, G1_hat = 1 - dt (H(t) - E_T): diagonal 1 - dt (E0(x) - E_T),
  dt Gamma on single flips;
* exponential split, G2_hat = exp(dt Gamma sum sigma^x) exp(-dt H_Ising):
  cosh(dt Gamma)**N tanh(dt Gamma)**delta exp(-dt E0(x)) with delta the
  Hamming distance.

Each column is split into a normalised move probability and a weight,
G_hat(y, x) = G(y, x) w(x). The G2 move is the same as flipping every
spin independently with probability (1 - exp(-2 dt Gamma))/2, because
cosh(a) e^{-a} = (1 + e^{-2a})/2 and tanh(a) = (1 - e^{-2a})/(1 + e^{-2a}).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numba
import numpy as np

from .operators import DriverOperator, ising_operator
from .spinspace import MAX_DENSE_SITES, CapacityError, IsingProblem, enumerate_extremes

VARIANTS = ("G1", "G2")


class PositivityError(ValueError):
    """The linear Green's function has a negative diagonal element."""


def default_dt(problem: IsingProblem, gamma0: float) -> float:
    """0.1 / (E_max - E_min + N Gamma(0)): positivity of G1 with a 0.9 margin."""
    ext = enumerate_extremes(problem)
    return 0.1 / (ext.e_max - ext.e_min + problem.n_sites * gamma0)


def _check_positive(problem: IsingProblem, dt: float, e_t: float):
    worst = 1.0 - dt * (problem.energies().max() - e_t)
    if worst < 0:
        raise PositivityError(
            f"1 - dt (E0 - E_T) = {worst:.3g} < 0 for dt={dt}, E_T={e_t}; reduce dt or raise E_T"
        )


def g1_weights(problem: IsingProblem, gamma: float, dt: float, e_t: float) -> np.ndarray:
    """w(x; t) = 1 - dt (E0(x) - E_T) + N dt Gamma for every x."""
    return 1.0 - dt * (problem.energies() - e_t) + problem.n_sites * dt * gamma


def g2_weights(problem: IsingProblem, gamma: float, dt: float) -> np.ndarray:
    """w2(x; t) = exp(dt N Gamma) exp(-dt E0(x))."""
    return np.exp(dt * problem.n_sites * gamma - dt * problem.energies())


def g2_flip_probability(gamma: float, dt: float) -> float:
    return -0.5 * math.expm1(-2.0 * dt * gamma)


def g1_split(problem: IsingProblem, x: int, gamma: float, dt: float, e_t: float) -> tuple[dict[int, float], float]:
    """Move distribution {y: G1(y, x)} (stay plus single flips) and weight w(x)."""
    _check_positive(problem, dt, e_t)
    w = float(g1_weights(problem, gamma, dt, e_t)[x])
    flip = dt * gamma / w
    dist = {x: 1.0 - problem.n_sites * flip}
    for i in range(problem.n_sites):
        dist[x ^ (1 << i)] = flip
    return dist, w


def g2_split(problem: IsingProblem, x: int, gamma: float, dt: float) -> tuple[np.ndarray, float]:
    """Full destination distribution G2(., x) over all 2**N states and weight w2(x)."""
    if not gamma > 0:
        raise ValueError("G2 needs gamma > 0")
    n = problem.n_sites
    delta = np.array([bin(x ^ y).count("1") for y in range(1 << n)])
    a = dt * gamma
    probs = (math.cosh(a) * math.exp(-a)) ** n * math.tanh(a) ** delta
    return probs, float(g2_weights(problem, gamma, dt)[x])


def _dense_guard(problem: IsingProblem):
    if problem.n_sites > MAX_DENSE_SITES:
        raise CapacityError(f"{problem.n_sites} sites exceeds the dense cap of {MAX_DENSE_SITES}")


def g_hat_dense(problem: IsingProblem, gamma: float, dt: float, e_t: float = 0.0, variant: str = "G1") -> np.ndarray:
    _dense_guard(problem)
    n = problem.n_sites
    if variant == "G1":
        _check_positive(problem, dt, e_t)
        drv = DriverOperator("transverse_field", n).operator().dense()   # -sum sigma^x
        h = ising_operator(problem).dense() + gamma * drv
        return np.eye(1 << n) - dt * (h - e_t * np.eye(1 << n))
    if variant == "G2":
        xs = np.arange(1 << n)
        delta = np.array([[bin(int(v)).count("1") for v in row] for row in xs[:, None] ^ xs[None, :]])
        a = dt * gamma
        return math.cosh(a) ** n * math.tanh(a) ** delta * np.exp(-dt * problem.energies())[None, :]
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def weights(problem: IsingProblem, gamma: float, dt: float, e_t: float = 0.0, variant: str = "G1") -> np.ndarray:
    return g1_weights(problem, gamma, dt, e_t) if variant == "G1" else g2_weights(problem, gamma, dt)


def kernel_dense(problem: IsingProblem, gamma: float, dt: float, e_t: float = 0.0, variant: str = "G1") -> np.ndarray:
    """Column-stochastic move matrix G(y, x) = G_hat(y, x) / w(x)."""
    return g_hat_dense(problem, gamma, dt, e_t, variant) / weights(problem, gamma, dt, e_t, variant)[None, :]


def g1_stationary(problem: IsingProblem, gamma: float, dt: float, e_t: float) -> np.ndarray:
    """q(x; t) = w(x; t) / sum_x w(x; t)."""
    w = g1_weights(problem, gamma, dt, e_t)
    return w / w.sum()


def g1_stationary_closed_form(problem: IsingProblem, gamma: float, dt: float, e_t: float) -> np.ndarray:
    """2**-N - dt E0(x) / (2**N (1 + dt E_T + N dt Gamma)); needs a traceless cost."""
    e = problem.energies()
    if abs(e.sum()) > 1e-9 * max(1.0, np.abs(e).sum()):
        raise ValueError("closed form assumes sum_x E0(x) = 0 (no constant term)")
    n = problem.n_sites
    return 2.0**-n - dt * e / (2.0**n * (1.0 + dt * e_t + n * dt * gamma))


def g1_lemma_bound(problem: IsingProblem, gamma: float, dt: float, e_t: float) -> float:
    """dt Gamma / (1 - dt (E_min - E_T) + N dt Gamma)."""
    e_min = float(problem.energies().min())
    return dt * gamma / (1.0 - dt * (e_min - e_t) + problem.n_sites * dt * gamma)


# --------------------------------------------------------------------------
# Exact dense recursions (verification path)

def exact_recursion(problem: IsingProblem, gamma_law: Callable[[float], float], n_steps: int, dt: float,
                    e_t: float = 0.0, variant: str = "G1", psi0=None) -> np.ndarray:
    """psi_n = G_hat(t_{n-1}) ... G_hat(t_0) psi_0 with t_k = k, by dense products."""
    psi = np.full(problem.dim, 1.0) if psi0 is None else np.asarray(psi0, dtype=np.float64).copy()
    for k in range(n_steps):
        psi = g_hat_dense(problem, float(gamma_law(k)), dt, e_t, variant) @ psi
    return psi


def weighted_walker_recursion(problem: IsingProblem, gamma_law: Callable[[float], float], n_steps: int,
                              dt: float, e_t: float = 0.0, variant: str = "G1", psi0=None) -> np.ndarray:
    """Expected weighted walker histogram: phi_{k+1}(y) = sum_x G(y, x) w(x) phi_k(x)."""
    phi = np.full(problem.dim, 1.0) if psi0 is None else np.asarray(psi0, dtype=np.float64).copy()
    for k in range(n_steps):
        g = float(gamma_law(k))
        phi = kernel_dense(problem, g, dt, e_t, variant) @ (weights(problem, g, dt, e_t, variant) * phi)
    return phi


def evolve_distributions(problem: IsingProblem, gamma_law: Callable[[float], float], horizon: int, dt: float,
                         e_t: float, p0, variant: str = "G1") -> np.ndarray:
    """Walker position distributions (columns of p0) after ``horizon`` steps of G(t), weights ignored."""
    p = np.array(p0, dtype=np.float64)
    for k in range(horizon):
        p = kernel_dense(problem, float(gamma_law(k)), dt, e_t, variant) @ p
    return p


def exact_ground_state(problem: IsingProblem, gamma: float) -> tuple[float, np.ndarray]:
    """(epsilon_0, positive ground vector) of H_Ising - gamma sum sigma^x."""
    _dense_guard(problem)
    drv = DriverOperator("transverse_field", problem.n_sites).operator().dense()
    w, v = np.linalg.eigh(ising_operator(problem).dense() + gamma * drv)
    g = v[:, 0]
    return float(w[0]), g * np.sign(g.sum())


# --------------------------------------------------------------------------
# Sampling

@numba.njit(cache=True)
def _step_g1(pos, logw, energies, n_sites, gamma, dt, e_t, u_move, u_site):
    for i in range(pos.shape[0]):
        x = pos[i]
        w = 1.0 - dt * (energies[x] - e_t) + n_sites * dt * gamma
        logw[i] += math.log(w)
        if u_move[i] < n_sites * dt * gamma / w:
            site = min(int(u_site[i] * n_sites), n_sites - 1)
            pos[i] = x ^ (1 << site)


@numba.njit(cache=True)
def _step_g2(pos, logw, energies, n_sites, gamma, dt, p_flip, u_bits):
    for i in range(pos.shape[0]):
        x = pos[i]
        logw[i] += dt * n_sites * gamma - dt * energies[x]
        for s in range(n_sites):
            if u_bits[i, s] < p_flip:
                x ^= 1 << s
        pos[i] = x


@dataclass
class WalkerEnsemble:
    positions: np.ndarray
    log_weights: np.ndarray
    generation: int = 0
    log_offset: float = 0.0

    def normalized_weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.sum()

    def rescale(self):
        """Subtract the common maximum log-weight; normalised estimates are unchanged."""
        m = float(self.log_weights.max())
        self.log_weights -= m
        self.log_offset += m

    def resample(self, rng: np.random.Generator) -> None:
        """Systematic resampling to equal weights; the total weight is preserved."""
        w = self.normalized_weights()
        m = self.positions.size
        idx = np.searchsorted(np.cumsum(w), (rng.random() + np.arange(m)) / m)
        top = float(self.log_weights.max())
        log_mean = top + math.log(float(np.exp(self.log_weights - top).sum()) / m)
        self.positions = self.positions[np.minimum(idx, m - 1)].copy()
        self.log_weights = np.full(m, log_mean)

    def histogram(self, dim: int) -> np.ndarray:
        return np.bincount(self.positions, weights=self.normalized_weights(), minlength=dim)

    def ess(self) -> float:
        w = self.normalized_weights()
        return float(1.0 / np.sum(w**2))

    def weight_variance(self) -> float:
        """Variance of weights relative to their mean."""
        w = self.normalized_weights() * self.positions.size
        return float(np.var(w))


@dataclass
class GFMCResult:
    rows: list[dict]
    psi: np.ndarray                 # pooled weighted histogram, 1-normalised
    overlap: float
    overlap_stderr: float
    batch_overlaps: np.ndarray = field(repr=False)
    mixed_energy: float
    exact_energy: float
    params: dict


def overlap_with(psi_estimate, exact) -> float:
    """<exact|psi>/||psi||_2 for a non-negative histogram estimate and a unit exact vector."""
    psi = np.asarray(psi_estimate, dtype=np.float64)
    return float(np.dot(exact, psi) / np.linalg.norm(psi))


def run_gfmc(problem: IsingProblem, gamma_law: Callable[[float], float], n_steps: int, n_walkers: int,
             dt: float | None = None, e_t: float | str | None = None, variant: str = "G1", seed: int = 0,
             batches: int = 10, record_every: int | None = None, resample_below: float = 0.5) -> GFMCResult:
    """Weighted-walker GFMC with uniform initial walkers and t_k = k.

    ``e_t`` is a number, ``"tracked"`` (current mixed estimate) or None for
    E_min. Walkers are split into ``batches`` independent RNG streams; the
    spread of per-batch overlaps gives the error bar. A batch whose effective
    sample size falls below ``resample_below`` times its walker count is
    resampled (population control); 0 keeps pure weighted walkers.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    n = problem.n_sites
    energies = np.ascontiguousarray(problem.energies())
    e_min = float(energies.min())
    dt = default_dt(problem, float(gamma_law(0))) if dt is None else dt
    tracked = e_t == "tracked"
    e_ref = e_min if (e_t is None or tracked) else float(e_t)
    if variant == "G1":
        _check_positive(problem, dt, e_ref)
    if n_walkers % batches:
        raise ValueError("n_walkers must be a multiple of batches")
    per = n_walkers // batches
    streams = [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(batches)]
    ens = [WalkerEnsemble(g.integers(0, problem.dim, size=per).astype(np.int64), np.zeros(per)) for g in streams]
    record_every = record_every or max(1, n_steps // 100)
    exact = None
    if n <= 10:
        exact = exact_ground_state(problem, float(gamma_law(n_steps)))
    rows = []
    for k in range(n_steps):
        gamma = float(gamma_law(k))
        for e, g in zip(ens, streams):
            if variant == "G1":
                if tracked:
                    e_ref = _mixed(e, energies, n, gamma)
                    _check_positive(problem, dt, e_ref)
                _step_g1(e.positions, e.log_weights, energies, n, gamma, dt, e_ref,
                         g.random(per), g.random(per))
            else:
                _step_g2(e.positions, e.log_weights, energies, n, gamma, dt,
                         g2_flip_probability(gamma, dt), g.random((per, n)))
            e.generation += 1
            if resample_below > 0 and e.ess() < resample_below * per:
                e.resample(g)
            if e.log_weights.max() - e.log_weights.min() > 500 or abs(e.log_weights.max()) > 500:
                e.rescale()
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            rows.append(_snapshot(k + 1, gamma_law, ens, energies, problem.dim, n, exact))
    pooled = _pooled_histogram(ens, problem.dim)
    batch_ov = np.array([overlap_with(e.histogram(problem.dim), exact[1]) for e in ens]) if exact else np.array([])
    ov = overlap_with(pooled, exact[1]) if exact else float("nan")
    err = _jackknife_overlap_error(ens, problem.dim, exact[1]) if batches > 1 and exact else float("nan")
    final_gamma = float(gamma_law(n_steps))
    return GFMCResult(rows, pooled, ov, err, batch_ov, _mixed_pooled(ens, energies, n, final_gamma),
                      exact[0] if exact else float("nan"),
                      {"variant": variant, "dt": dt, "E_T": "tracked" if tracked else e_ref, "n_steps": n_steps,
                       "n_walkers": n_walkers, "batches": batches, "seed": seed,
                       "resample_below": resample_below})


def _jackknife_overlap_error(ens, dim, exact) -> float:
    """Delete-one-batch jackknife standard error of the pooled overlap."""
    ws = _pooled_weights(ens)
    hists = np.array([np.bincount(e.positions, weights=w, minlength=dim) for e, w in zip(ens, ws)])
    total = hists.sum(axis=0)
    loo = np.array([overlap_with(total - h, exact) for h in hists])
    b = len(ens)
    return float(math.sqrt((b - 1) / b * np.sum((loo - loo.mean()) ** 2)))


def _pooled_weights(ens):
    top = max(float(e.log_weights.max() + e.log_offset) for e in ens)
    return [np.exp(e.log_weights + e.log_offset - top) for e in ens]


def _pooled_histogram(ens, dim):
    ws = _pooled_weights(ens)
    h = sum(np.bincount(e.positions, weights=w, minlength=dim) for e, w in zip(ens, ws))
    return h / h.sum()


def _mixed(e: WalkerEnsemble, energies, n, gamma) -> float:
    w = e.normalized_weights()
    return float(np.sum(w * energies[e.positions])) - n * gamma


def _mixed_pooled(ens, energies, n, gamma) -> float:
    """Mixed estimator with the uniform trial state: sum W (E0(x) - N Gamma) / sum W."""
    ws = _pooled_weights(ens)
    num = sum(np.sum(w * energies[e.positions]) for e, w in zip(ens, ws))
    return float(num / sum(w.sum() for w in ws)) - n * gamma


def _snapshot(step, gamma_law, ens, energies, dim, n, exact) -> dict:
    gamma = float(gamma_law(step))
    ws = np.concatenate(_pooled_weights(ens))
    ws /= ws.sum()
    return {
        "step": step,
        "t": step,
        "Gamma": gamma,
        "mixed_energy": _mixed_pooled(ens, energies, n, gamma),
        "overlap_exact": overlap_with(_pooled_histogram(ens, dim), exact[1]) if exact else float("nan"),
        "weight_variance": float(np.var(ws * ws.size)),
        "ess": float(1.0 / np.sum(ws**2)),
    }


def write_gfmc_csv(result: GFMCResult, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["step", "t", "Gamma", "mixed_energy", "overlap_exact",
                                           "weight_variance", "ess"])
        w.writeheader()
        w.writerows(result.rows)
    return path


# --------------------------------------------------------------------------
# Theorem checks

@dataclass
class GFMCTheoremReport:
    variant: str
    offdiag_bound_holds: bool
    diag_onset: float | None
    counterexample: tuple[int, int, float] | None
    pair_distance: float
    stationarity_residual: float
    column_sum_residual: float
    details: dict = field(default_factory=dict)


def verify_gfmc_theorems(problem: IsingProblem, gamma_law: Callable[[float], float], variant: str = "G1",
                         dt: float | None = None, e_t: float | None = None, horizon: int = 2000,
                         t_grid=None) -> GFMCTheoremReport:
    """Lemma bounds (G1), fixed-point identities and a two-start weak-ergodicity witness."""
    dt = default_dt(problem, float(gamma_law(0))) if dt is None else dt
    e_t = float(problem.energies().min()) if e_t is None else e_t
    t_grid = list(t_grid) if t_grid is not None else [0, 1, 10, 100, 1000, 10_000, 100_000]
    n = problem.n_sites
    counter = None
    offdiag_ok = True
    onset = None
    stat_res = 0.0
    col_res = 0.0
    flips = [[x ^ (1 << i) for i in range(n)] for x in range(problem.dim)]
    for t in t_grid:
        gamma = float(gamma_law(t))
        g = kernel_dense(problem, gamma, dt, e_t, variant)
        if variant == "G1":
            bound = g1_lemma_bound(problem, gamma, dt, e_t)
            for x in range(problem.dim):
                for y in flips[x]:
                    if g[y, x] < bound * (1 - 1e-12) and counter is None:
                        offdiag_ok = False
                        counter = (y, x, float(t))
            diag_ok = bool(np.all(np.diag(g) >= bound))
            onset = (t if onset is None else onset) if diag_ok else None
            q = g1_stationary(problem, gamma, dt, e_t)
        else:
            q = np.full(problem.dim, 1.0 / problem.dim)
            col_res = max(col_res, float(np.max(np.abs(
                g_hat_dense(problem, gamma, dt, e_t, variant).sum(axis=0) - g2_weights(problem, gamma, dt)))))
        stat_res = max(stat_res, float(np.max(np.abs(g @ q - q))))
    p0 = np.zeros((problem.dim, 2))
    p0[0, 0] = 1.0
    p0[-1, 1] = 1.0
    p = evolve_distributions(problem, gamma_law, horizon, dt, e_t, p0, variant)
    return GFMCTheoremReport(variant, offdiag_ok, onset, counter, float(np.abs(p[:, 0] - p[:, 1]).sum()),
                             stat_res, col_res, {"dt": dt, "E_T": e_t, "horizon": horizon})
