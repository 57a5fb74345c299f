"""Real- and imaginary-time Schroedinger evolution of annealing Hamiltonians.

Both integrators are fixed-step classical RK4 in physical time t = s * tau,
with dt = dt_control / bound where ``bound`` is the row-sum bound of H(s)
maximised over s. The imaginary-time variant integrates the nonlinear
norm-conserving equation -d psi/dt = (H - <H>) psi.
"""
from __future__ import annotations

import csv
import math
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy.optimize import brentq

from .operators import AnnealHamiltonian, instantaneous_spectrum
from .schedules import Schedule

DEFAULT_DT_CONTROL = 0.05
DEFAULT_MAX_STEPS = 50_000_000


class ResourceError(RuntimeError):
    """The requested evolution would exceed the step budget."""


@dataclass
class EvolutionReport:
    tau: float
    schedule: str
    mode: str
    final_state: np.ndarray = field(repr=False)
    populations: np.ndarray = field(repr=False)
    residual_energy: float
    residual_energy_direct: float
    steps: int
    norm_drift: float
    gaps: np.ndarray = field(repr=False)

    def excitation(self, j: int) -> float:
        """Population |<j(1)|psi(1)>|**2 of instantaneous level j at s = 1."""
        return float(self.populations[j])

    @property
    def excitation_probability(self) -> float:
        return float(1.0 - self.populations[0])


@numba.njit(cache=True)
def _hv(a, b, pd, pm, pc, pu, kd, km, kc, ku, v, out):
    n = v.shape[0]
    total = 0j
    uni = a * pu + b * ku
    if uni != 0.0:
        for x in range(n):
            total += v[x]
    for x in range(n):
        acc = (a * pd[x] + b * kd[x]) * v[x] - uni * total
        for k in range(pm.shape[0]):
            acc -= a * pc[k] * v[x ^ pm[k]]
        for k in range(km.shape[0]):
            acc -= b * kc[k] * v[x ^ km[k]]
        out[x] = acc


@numba.njit(cache=True)
def _rhs(imag, a, b, pd, pm, pc, pu, kd, km, kc, ku, v, out):
    _hv(a, b, pd, pm, pc, pu, kd, km, kc, ku, v, out)
    n = v.shape[0]
    if imag:
        num = 0.0
        den = 0.0
        for x in range(n):
            num += (v[x].conjugate() * out[x]).real
            den += (v[x].conjugate() * v[x]).real
        mean = num / den
        for x in range(n):
            out[x] = -(out[x] - mean * v[x])
    else:
        for x in range(n):
            out[x] = -1j * out[x]


@numba.njit(cache=True)
def _rk4(imag, psi, dt, acoef, bcoef, pd, pm, pc, pu, kd, km, kc, ku):
    """Integrate in place; acoef/bcoef hold coefficients on the half-step grid."""
    n = psi.shape[0]
    steps = (acoef.shape[0] - 1) // 2
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    max_drift = 0.0
    for i in range(steps):
        a0 = acoef[2 * i]
        b0 = bcoef[2 * i]
        ah = acoef[2 * i + 1]
        bh = bcoef[2 * i + 1]
        a1 = acoef[2 * i + 2]
        b1 = bcoef[2 * i + 2]
        _rhs(imag, a0, b0, pd, pm, pc, pu, kd, km, kc, ku, psi, k1)
        for x in range(n):
            tmp[x] = psi[x] + 0.5 * dt * k1[x]
        _rhs(imag, ah, bh, pd, pm, pc, pu, kd, km, kc, ku, tmp, k2)
        for x in range(n):
            tmp[x] = psi[x] + 0.5 * dt * k2[x]
        _rhs(imag, ah, bh, pd, pm, pc, pu, kd, km, kc, ku, tmp, k3)
        for x in range(n):
            tmp[x] = psi[x] + dt * k3[x]
        _rhs(imag, a1, b1, pd, pm, pc, pu, kd, km, kc, ku, tmp, k4)
        norm2 = 0.0
        for x in range(n):
            psi[x] += dt / 6.0 * (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x])
            norm2 += (psi[x].conjugate() * psi[x]).real
        norm = math.sqrt(norm2)
        drift = abs(norm - 1.0)
        if drift > max_drift:
            max_drift = drift
        for x in range(n):
            psi[x] /= norm
    return max_drift


def _operator_args(h: AnnealHamiltonian):
    p, k = h.potential, h.driver
    return (p.diag, p.masks, p.coeffs, p.uniform, k.diag, k.masks, k.coeffs, k.uniform)


def initial_state(h: AnnealHamiltonian) -> np.ndarray:
    """Ground state of H(0), phase fixed to be positive where largest."""
    spec = instantaneous_spectrum(h, 0.0)
    return spec.eigenvectors[:, 0].astype(np.complex128)


def step_size(h: AnnealHamiltonian, tau: float, dt_control: float = DEFAULT_DT_CONTROL) -> tuple[int, float]:
    dt_max = dt_control / h.norm_bound()
    steps = max(1, math.ceil(tau / dt_max))
    return steps, tau / steps


def _evolve(h: AnnealHamiltonian, tau: float, dt_control: float, imaginary: bool,
            max_steps: int, psi0: np.ndarray | None) -> EvolutionReport:
    if tau <= 0:
        raise ValueError("tau must be positive")
    steps, dt = step_size(h, tau, dt_control)
    if steps > max_steps:
        raise ResourceError(
            f"tau={tau:g} needs {steps} RK4 steps (> budget {max_steps}); "
            f"estimated cost ~{4 * steps * h.dim:.3g} operator-element updates"
        )
    s_grid = np.linspace(0.0, 1.0, 2 * steps + 1)
    acoef, bcoef = h.coefficients(s_grid)
    acoef = np.ascontiguousarray(np.broadcast_to(acoef, s_grid.shape), dtype=np.float64)
    bcoef = np.ascontiguousarray(np.broadcast_to(bcoef, s_grid.shape), dtype=np.float64)
    psi = (initial_state(h) if psi0 is None else np.asarray(psi0, dtype=np.complex128)).copy()
    psi /= np.linalg.norm(psi)
    drift = _rk4(imaginary, psi, dt, acoef, bcoef, *_operator_args(h))
    return _report(h, tau, psi, steps, drift, "IT" if imaginary else "RT")


def _report(h, tau, psi, steps, drift, mode) -> EvolutionReport:
    spec = instantaneous_spectrum(h, 1.0)
    amps = spec.eigenvectors.T @ psi
    pops = np.abs(amps) ** 2
    gaps = spec.gaps
    e_res = float(np.sum(gaps[1:] * pops[1:]))
    direct = float(np.real(np.vdot(psi, h.apply(1.0, psi)))) - float(spec.eigenvalues[0])
    return EvolutionReport(tau, h.control.name, mode, psi, pops, e_res, direct, steps, float(drift), gaps)


def evolve_rt(h: AnnealHamiltonian, tau: float, dt_control: float = DEFAULT_DT_CONTROL,
              max_steps: int = DEFAULT_MAX_STEPS, psi0: np.ndarray | None = None) -> EvolutionReport:
    """Integrate i d psi/ds = tau H(s) psi from the ground state of H(0)."""
    return _evolve(h, tau, dt_control, False, max_steps, psi0)


def evolve_it(h: AnnealHamiltonian, tau: float, dt_control: float = DEFAULT_DT_CONTROL,
              max_steps: int = DEFAULT_MAX_STEPS, psi0: np.ndarray | None = None) -> EvolutionReport:
    """Integrate -d psi/ds = tau (H(s) - <H(s)>) psi from the ground state of H(0)."""
    return _evolve(h, tau, dt_control, True, max_steps, psi0)


def crossing_point(schedule: Schedule) -> float:
    """Unique s* in [0, 1] with f(s*) = 1/2."""
    grid = np.linspace(0.0, 1.0, 2001)
    vals = schedule(grid)
    if np.any(np.diff(vals) < -1e-12) or not (vals[0] < 0.5 < vals[-1]):
        raise ValueError(f"schedule {schedule.name!r} has no unique crossing f(s*) = 1/2")
    return brentq(lambda s: schedule(s) - 0.5, 0.0, 1.0, xtol=1e-15)


def lz_closed_forms(h_field: float, alpha: float, schedule: Schedule, tau: float, m: int) -> tuple[float, float]:
    """(Landau-Zener transition probability, adiabatic tau**(-2m) bound)."""
    s_star = crossing_point(schedule)
    slope = schedule.derivative(s_star, 1)
    p_lz = math.exp(-math.pi * alpha**2 * tau / (slope * h_field))
    ends = abs(schedule.derivative(0.0, m)) + abs(schedule.derivative(1.0, m))
    bound = 4 * h_field**2 * alpha**2 / (tau ** (2 * m) * (h_field**2 + 4 * alpha**2) ** (m + 2)) * ends**2
    return p_lz, bound


_WORKER_H: AnnealHamiltonian | None = None


def _init_worker(h: AnnealHamiltonian):
    global _WORKER_H
    _WORKER_H = h


def _sweep_one(args):
    h, tau, mode, dt_control = args
    fn = evolve_it if mode == "IT" else evolve_rt
    return fn(_WORKER_H if h is None else h, tau, dt_control)


def default_workers() -> int:
    env = os.environ.get("QANNEAL_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def residual_energy_sweep(h: AnnealHamiltonian, tau_list, mode: str = "RT",
                          dt_control: float = DEFAULT_DT_CONTROL, workers: int = 1) -> list[EvolutionReport]:
    """One evolution per tau, returned in tau order regardless of completion order."""
    taus = [float(t) for t in tau_list]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_list must be strictly ascending")
    if mode not in ("RT", "IT"):
        raise ValueError("mode must be 'RT' or 'IT'")
    if workers > 1 and len(taus) > 1 and "fork" in mp.get_all_start_methods():
        # Schedules hold closures, so the Hamiltonian reaches workers by fork inheritance, not pickling.
        with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("fork"),
                                 initializer=_init_worker, initargs=(h,)) as pool:
            return list(pool.map(_sweep_one, [(None, t, mode, dt_control) for t in taus]))
    return [_sweep_one((h, t, mode, dt_control)) for t in taus]


def sweep_rows(reports: list[EvolutionReport], n_levels: int = 1) -> list[dict]:
    rows = []
    for r in reports:
        row = {"tau": r.tau, "schedule": r.schedule, "mode": r.mode, "E_res": r.residual_energy}
        for j in range(1, n_levels + 1):
            row[f"P_ex_{j}"] = float(r.populations[j])
        row["steps"] = r.steps
        row["norm_drift"] = r.norm_drift
        rows.append(row)
    return rows


def write_sweep_csv(reports: list[EvolutionReport], path, n_levels: int = 1) -> Path:
    path = Path(path)
    rows = sweep_rows(reports, n_levels)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path
