"""Experiment registry: each entry maps an :class:`ExperimentSpec` to result files and a summary."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__
from .. import bounds as B
from .. import dynamics as D
from .. import gfmc as GF
from .. import markov as MK
from .. import operators as O
from .. import schedules as S
from .. import spinspace as SP
from .config import SCHEMA_VERSION, ExperimentSpec, SpecError
from .fitting import InsufficientPointsError, fit_slope, parse_window

DEFAULT_WINDOW = "1e-10:1e-2"


@dataclass
class ExperimentResult:
    experiment: str
    summary: dict
    files: list[Path] = field(default_factory=list)


def _resolve_schedules(names: list[str], where: str) -> list[S.Schedule]:
    out = []
    for name in names:
        try:
            out.append(S.from_name(name))
        except ValueError as exc:
            raise SpecError(f"{where}: {exc}") from None
    return out


def _outdir(spec: ExperimentSpec) -> Path:
    path = Path(spec.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_rows(path: Path, rows: list[dict]) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path


def _fit_or_none(x, y, window):
    try:
        f = fit_slope(x, y, window)
        return {"slope": f.slope, "stderr": f.stderr, "n_points": f.n_points}
    except InsufficientPointsError as exc:
        return {"slope": None, "error": str(exc)}


def spin_glass_problem(spec: ExperimentSpec) -> SP.IsingProblem:
    source = spec.get("problem", "source", "spin_glass")
    if source == "spin_glass":
        return SP.generate_spin_glass(SP.SpinGlassSpec(
            spec.get_int("problem", "width", 3), spec.get_int("problem", "height", 3),
            spec.get_float("problem", "field", 0.1), spec.get_int("problem", "seed", spec.seed)))
    if source == "ferromagnet":
        return SP.ferromagnet(spec.get_int("problem", "width", 2), spec.get_int("problem", "height", 2),
                              spec.get_float("problem", "coupling", 1.0), spec.get_float("problem", "field", 0.0))
    if source.startswith("file:"):
        return SP.loads(Path(source[5:]).read_text())
    raise SpecError(f"problem.source: unknown source {source!r}")


# --------------------------------------------------------------------------
# Landau-Zener

def lz_envelope(h: O.AnnealHamiltonian, centers, span: float, samples: int, dt_control: float) -> list[tuple[float, float]]:
    """(center, max P_ex over [center, center + span]) pairs; the max tracks the oscillation envelope."""
    out = []
    for c in centers:
        ps = [D.evolve_rt(h, float(t), dt_control=dt_control).excitation(1)
              for t in np.linspace(c, c + span, samples)]
        out.append((float(c), float(max(ps))))
    return out


def run_lz_sweep(spec: ExperimentSpec) -> ExperimentResult:
    """Small-tau comparison with the Landau-Zener formula plus large-tau envelope slopes."""
    hf = spec.get_float("model", "h", 2.0)
    alpha = spec.get_float("model", "alpha", 0.2)
    names = spec.get_list("run", "schedules", "f1,f2,f3,f4")
    dtc = spec.get_float("run", "dt_control", D.DEFAULT_DT_CONTROL)
    small = spec.get_grid("run", "tau_small", "1:200:40")
    span = spec.get_float("run", "envelope_span", 12.0)
    samples = spec.get_int("run", "envelope_samples", 25)
    rows, summary = [], {}
    for sched in _resolve_schedules(names, "run.schedules"):
        m = int(sched.name[1]) if sched.name in ("f1", "f2", "f3", "f4") else 1
        h = O.landau_zener(hf, alpha, sched)
        rel_errs = []
        for tau in small:
            p = D.evolve_rt(h, float(tau), dt_control=dtc).excitation(1)
            p_lz, bound = D.lz_closed_forms(hf, alpha, sched, float(tau), m)
            rows.append({"tau": float(tau), "schedule": sched.name, "regime": "small", "P_ex": p,
                         "p_lz": p_lz, "bound": bound})
            if p > 0.1:
                rel_errs.append(abs(p - p_lz) / p_lz)
        centers = spec.get_grid("run", f"tau_large.{sched.name}", "300:3000:6")
        env = lz_envelope(h, centers, span, samples, dtc)
        ratios = []
        for c, pmax in env:
            bound = D.lz_closed_forms(hf, alpha, sched, c, m)[1]
            ratios.append(pmax / bound)
            rows.append({"tau": c, "schedule": sched.name, "regime": "envelope", "P_ex": pmax,
                         "p_lz": D.lz_closed_forms(hf, alpha, sched, c, m)[0], "bound": bound})
        fit = fit_slope([c for c, _ in env], [p for _, p in env])
        summary[sched.name] = {
            "m": m,
            "small_tau_max_rel_err": max(rel_errs) if rel_errs else None,
            "small_tau_points": len(rel_errs),
            "envelope_slope": fit.slope,
            "envelope_slope_stderr": fit.stderr,
            "expected_slope": -2 * m,
            "max_ratio_to_bound": max(ratios),
        }
    out = _outdir(spec)
    return ExperimentResult("lz_sweep", summary, [_write_rows(out / "lz_sweep.csv", rows)])


# --------------------------------------------------------------------------
# Residual-energy sweeps

def _sweep(h, taus, mode, dtc, workers):
    return D.residual_energy_sweep(h, taus, mode=mode, dt_control=dtc, workers=workers)


def run_sg_res_energy(spec: ExperimentSpec) -> ExperimentResult:
    problem = spin_glass_problem(spec)
    gamma = spec.get_float("model", "gamma", 1.0)
    dtc = spec.get_float("run", "dt_control", D.DEFAULT_DT_CONTROL)
    modes = spec.get_list("run", "modes", "RT")
    window = parse_window(spec.get("run", "window", DEFAULT_WINDOW))
    workers = spec.get_int("run", "workers", D.default_workers())
    names = spec.get_list("run", "schedules", "f1,f2,f3,f4")
    reports, summary = [], {}
    for sched in _resolve_schedules(names, "run.schedules"):
        taus = spec.get_grid("run", f"tau.{sched.name}", spec.get("run", "tau", "10:1000:12"))
        h = O.transverse_field_anneal(problem, sched, gamma)
        for mode in modes:
            res = _sweep(h, taus, mode, dtc, workers)
            reports += res
            fit = _fit_or_none([r.tau for r in res], [r.residual_energy for r in res], window)
            summary[f"{sched.name}:{mode}"] = {**fit, "tau": [r.tau for r in res],
                                               "E_res": [r.residual_energy for r in res],
                                               "max_norm_drift": max(r.norm_drift for r in res)}
    out = _outdir(spec)
    path = D.write_sweep_csv(reports, out / f"{spec.experiment}.csv", n_levels=1)
    summary["_meta"] = {"n_sites": problem.n_sites, "e_min": SP.enumerate_extremes(problem).e_min,
                        "window": list(window), "dt_control": dtc}
    return ExperimentResult(spec.experiment, summary, [path])


def run_it_vs_rt(spec: ExperimentSpec) -> ExperimentResult:
    spec = spec if "modes" in spec.sections.get("run", {}) else spec.with_values("run", modes="RT,IT")
    if "schedules" not in spec.sections.get("run", {}):
        spec = spec.with_values("run", schedules="sq1,sq2")
    res = run_sg_res_energy(spec)
    res.experiment = "it_vs_rt"
    window = parse_window(spec.get("run", "window", DEFAULT_WINDOW))
    for name in spec.get_list("run", "schedules"):
        rt, it = res.summary.get(f"{name}:RT"), res.summary.get(f"{name}:IT")
        if rt and it:
            ratios = [i / r for t, i, r in zip(rt["tau"], it["E_res"], rt["E_res"])
                      if window[0] <= r <= window[1] and window[0] <= i <= window[1]]
            res.summary[f"{name}:IT/RT"] = {"max_ratio": max(ratios) if ratios else None, "n_common": len(ratios)}
    return res


def db_adiabaticity_residual(n_items: int, samples: int = 2001) -> float:
    """max_s |sqrt(N-1) f'(s) / (N Delta_1(s)**3) / sqrt(N-1) - 1| for f_opt, with tau delta = sqrt(N-1)."""
    f = S.grover_optimal(n_items)
    s = np.linspace(0.0, 1.0, samples)
    fs, d1 = f(s), f.derivative(s, 1)
    gap = np.sqrt(1.0 - 4.0 * (n_items - 1) / n_items * fs * (1.0 - fs))
    return float(np.max(np.abs(d1 / (n_items * gap**3) - 1.0)))


def database_min_gap(n_items: int, samples: int = 401) -> tuple[float, float]:
    """(min over s of the numerically diagonalised Delta_1, f at the minimum) along f_opt."""
    h = O.database_search(n_items, S.grover_optimal(n_items))
    best = (math.inf, 0.0)
    for s in np.linspace(0.0, 1.0, samples):
        g = O.instantaneous_spectrum(h, float(s), vectors=False).gaps[1]
        if g < best[0]:
            best = (float(g), float(h.control(float(s))))
    return best


def run_grover_res_energy(spec: ExperimentSpec) -> ExperimentResult:
    n_items = spec.get_int("model", "n_items", 64)
    dtc = spec.get_float("run", "dt_control", D.DEFAULT_DT_CONTROL)
    window = parse_window(spec.get("run", "window", DEFAULT_WINDOW))
    workers = spec.get_int("run", "workers", D.default_workers())
    names = spec.get_list("run", "schedules", ",".join(f"grover_opt_m:{n_items}:{m}" for m in (1, 2, 3)))
    reports, summary = [], {}
    for sched in _resolve_schedules(names, "run.schedules"):
        key = sched.name.split(":")[-1] if sched.name.startswith("grover_opt_m") else sched.name
        taus = spec.get_grid("run", f"tau.{key}", spec.get("run", "tau", "10:1000:12"))
        h = O.database_search(n_items, sched)
        span = spec.get_float("run", "envelope_span", 0.0)
        if span > 0:
            # E_res oscillates in tau; fit the upper envelope, the max over [c, c + span].
            samples = spec.get_int("run", "envelope_samples", 31)
            env = []
            for c in taus:
                res = _sweep(h, np.linspace(c, c + span, samples, endpoint=False), "RT", dtc, workers)
                reports += res
                env.append(max(r.residual_energy for r in res))
            env = np.array(env)
        else:
            res = _sweep(h, taus, "RT", dtc, workers)
            reports += res
            env = np.array([r.residual_energy for r in res])
        summary[sched.name] = {**_fit_or_none(taus, env, window), "tau": list(map(float, taus)),
                               "E_res": env.tolist()}
    gmin, f_at = database_min_gap(n_items)
    summary["_checks"] = {"db_adia_residual": db_adiabaticity_residual(n_items), "min_gap": gmin,
                          "f_at_min_gap": f_at, "expected_min_gap": 1.0 / math.sqrt(n_items)}
    out = _outdir(spec)
    return ExperimentResult("grover_res_energy", summary, [D.write_sweep_csv(reports, out / "grover_res_energy.csv")])


# --------------------------------------------------------------------------
# Stochastic methods

def pimc_reference_problem(spec: ExperimentSpec) -> SP.IsingProblem:
    return SP.IsingProblem(2, ((0, spec.get_float("problem", "J1", 1.0)), (1, spec.get_float("problem", "J2", 0.5))),
                           ((0, 1, spec.get_float("problem", "J12", 0.25)),))


def run_pimc_convergence(spec: ExperimentSpec) -> ExperimentResult:
    problem = pimc_reference_problem(spec)
    trotter = spec.get_int("run", "trotter", 2)
    beta = spec.get_float("run", "beta", 2.0)
    horizon = spec.get_int("run", "horizon", 1_000_000)
    chain = MK.ChainSpec(spec.get("run", "acceptance", "heat_bath"))
    rule = MK.single_flip_rule(problem.n_sites * trotter)
    consts = MK.ergodicity_constants(MK.PimcSystem(problem, trotter, beta, lambda t: 1.0), rule)
    law = MK.pimc_schedule(consts)
    system = MK.PimcSystem(problem, trotter, beta, law)
    p0 = np.zeros((system.size, 2))
    p0[0, 0] = 1.0
    p0[system.size - 1, 1] = 1.0
    record = sorted({int(v) for v in np.unique(np.geomspace(1, horizon, 61).astype(np.int64))})
    traj = MK.run_inhomogeneous_chain(system, rule, p0, horizon, record_at=record, chain=chain)
    target = system.target_distribution()
    final = traj.distributions[-1]
    t_frozen = float(horizon)
    g = MK.kernel_at(system, rule, t_frozen, chain).matrix
    q = system.weights(t_frozen)
    out = _outdir(spec)
    files = [MK.write_trajectory_csv(traj, target, out / "pimc_trajectory.csv"),
             MK.write_kernel_csv(MK.TransitionKernel(g), out / "pimc_kernel_final.csv")]
    lemma = MK.check_lower_bound_lemma(system, rule, t_frozen, chain)
    summary = {
        "R": consts.r, "L0": consts.l0, "L1": consts.l1, "w": consts.w,
        "fixed_point_residual": float(np.abs(g @ q - q).sum()),
        "pair_distance": float(np.abs(final[:, 0] - final[:, 1]).sum()),
        "tv_to_target": float(0.5 * np.abs(final[:, 0] - target).sum()),
        "lb1_holds": lemma.lb1_holds, "lb2_holds_at_horizon": lemma.lb2_holds,
        "T1_final": system.t1(horizon), "acceptance": chain.acceptance,
        "time_unit": f"one sweep = {system.n_bits} proposals",
    }
    return ExperimentResult("pimc_convergence", summary, files)


def run_gfmc_convergence(spec: ExperimentSpec) -> ExperimentResult:
    problem = spin_glass_problem(spec.with_values("problem", source=spec.get("problem", "source", "ferromagnet")))
    b = spec.get_float("run", "b", 0.5)
    c = spec.get_float("run", "c", 1.0 / problem.n_sites)
    law = S.GFMCPower(b, c)
    res = GF.run_gfmc(problem, law, spec.get_int("run", "steps", 300), spec.get_int("run", "walkers", 10_000),
                      seed=spec.seed, batches=spec.get_int("run", "batches", 20),
                      variant=spec.get("run", "variant", "G1"),
                      resample_below=spec.get_float("run", "resample_below", 0.5))
    out = _outdir(spec)
    summary = {"overlap": res.overlap, "overlap_stderr": res.overlap_stderr, "mixed_energy": res.mixed_energy,
               "exact_energy": res.exact_energy, "final_ess": res.rows[-1]["ess"], **res.params}
    return ExperimentResult("gfmc_convergence", summary, [GF.write_gfmc_csv(res, out / "gfmc.csv")])


# --------------------------------------------------------------------------
# Property suites (also reachable through ``anneal verify``)

def suite_hopf(seed: int = 0, count: int = 100) -> dict:
    rng = np.random.default_rng(seed)
    worst, osc_worst, lam_err = -math.inf, -math.inf, 0.0
    for _ in range(count):
        n = int(rng.integers(2, 9))
        m = B.PositiveMatrix(rng.uniform(0.01, 1.0, (n, n)))
        res = B.hopf_bound(m)
        worst = max(worst, float(B.subdominant_moduli(m).max() - res.bound))
        lam_err = max(lam_err, abs(res.lambda0 - float(np.max(np.linalg.eigvals(m.matrix).real))) / res.lambda0)
        v, p = rng.normal(size=n), rng.uniform(0.1, 1.0, n)
        lhs, rhs = B.oscillation_contraction(m, v, p)
        osc_worst = max(osc_worst, lhs - rhs)
    tight = B.hopf_bound(B.PositiveMatrix([[3.0, 1.0], [1.0, 3.0]]))
    sub = float(B.subdominant_moduli(B.PositiveMatrix([[3.0, 1.0], [1.0, 3.0]]))[0])
    return {"max_excess": worst, "max_oscillation_excess": osc_worst, "lambda0_rel_err": lam_err,
            "tight_case_gap": abs(sub - tight.bound), "count": count,
            "passed": worst <= 1e-10 and osc_worst <= 1e-12 and abs(sub - tight.bound) <= 1e-12}


def suite_gap_bounds(seed: int = 0, count: int = 20, gammas=None) -> dict:
    rng = np.random.default_rng(seed)
    gammas = np.linspace(0.05, 1.0, 20) if gammas is None else gammas
    viol_tf = viol_mti = 0
    min_ratio = [math.inf, math.inf]
    for _ in range(count):
        n = int(rng.choice([2, 3, 4]))
        p = SP.random_problem(n, rng)
        pot = O.ising_operator(p).dense()
        tf = O.DriverOperator("transverse_field", n).operator().dense()
        mb = O.DriverOperator("many_body", n).operator().dense()
        g0 = float(max(gammas))
        for g in gammas:
            w = np.linalg.eigvalsh(pot + g * tf)
            b = B.tfim_gap_lower_bound(p, float(g), g0)
            viol_tf += int(w[1] - w[0] < b)
            min_ratio[0] = min(min_ratio[0], (w[1] - w[0]) / b)
            w = np.linalg.eigvalsh(pot + g * mb)
            b = B.mti_gap_lower_bound(p, float(g))
            viol_mti += int(w[1] - w[0] < b)
            min_ratio[1] = min(min_ratio[1], (w[1] - w[0]) / b)
    return {"tfim_violations": viol_tf, "mti_violations": viol_mti, "tfim_min_ratio": min_ratio[0],
            "mti_min_ratio": min_ratio[1], "count": count, "passed": viol_tf == 0 and viol_mti == 0}


def suite_sa_map(seed: int = 0, count: int = 10, temperatures=(0.5, 1.0, 2.0)) -> dict:
    rng = np.random.default_rng(seed)
    res_max = obs_max = lemma_max = 0.0
    for _ in range(count):
        n = int(rng.integers(2, 9))
        p = SP.random_problem(n, rng)
        for t in temperatures:
            sa = B.build_sa_map(p, t)
            res_max = max(res_max, sa.verify_ground_state())
            for _ in range(3):
                q = rng.normal(size=p.dim)
                obs_max = max(obs_max, abs(sa.quantum_expectation(q) - B.thermal_average(p, t, q)))
            lhs, rhs = B.matrix_element_check(p, t)
            scale = max(abs(rhs), 1e-8)
            lemma_max = max(lemma_max, abs(lhs - rhs) / scale)
    return {"max_residual": res_max, "max_observable_diff": obs_max, "max_lemma_rel_err": lemma_max,
            "passed": res_max <= 1e-10 and obs_max <= 1e-10 and lemma_max <= 1e-4}


def suite_ergodicity(seed: int = 0, count: int = 200, slack: float = 1e-12) -> dict:
    rng = np.random.default_rng(seed)
    v1 = v2 = v3 = 0
    for _ in range(count):
        n = int(rng.integers(2, 9))
        sp_g, sp_h = rng.choice([0.0, 0.5]), rng.choice([0.0, 0.5])
        g, h = MK.random_kernel(n, rng, sp_g), MK.random_kernel(n, rng, sp_h)
        ag, ah, agh = (MK.ergodicity_coefficient(k) for k in (g, h, g @ h))
        v1 += int(not (-slack <= ag <= 1 + slack and -slack <= agh <= 1 + slack))
        v2 += int(agh > ag * ah + slack)
        z = rng.normal(size=(n, n))
        z -= z.mean(axis=0)
        v3 += int(MK.matrix_norm(g.matrix @ z) > ag * MK.matrix_norm(z) + slack)
    return {"B1_violations": v1, "B2_violations": v2, "B3_violations": v3, "count": count,
            "passed": v1 == v2 == v3 == 0}


def suite_gfmc_stationarity(seed: int = 0, max_sites: int = 6) -> dict:
    rng = np.random.default_rng(seed)
    g1_res = g2_col = g2_stat = closed = 0.0
    for n in range(1, max_sites + 1):
        p = SP.random_problem(n, rng, with_fields=False)
        gamma = float(rng.uniform(0.1, 2.0))
        dt = GF.default_dt(p, gamma)
        e_t = float(p.energies().min())
        q = GF.g1_stationary(p, gamma, dt, e_t)
        g1_res = max(g1_res, float(np.max(np.abs(GF.kernel_dense(p, gamma, dt, e_t) @ q - q))))
        closed = max(closed, float(np.max(np.abs(q - GF.g1_stationary_closed_form(p, gamma, dt, e_t)))))
        gh = GF.g_hat_dense(p, gamma, dt, variant="G2")
        g2_col = max(g2_col, float(np.max(np.abs(gh.sum(axis=0) - GF.g2_weights(p, gamma, dt)))))
        u = np.full(p.dim, 1.0 / p.dim)
        g2_stat = max(g2_stat, float(np.max(np.abs(GF.kernel_dense(p, gamma, dt, variant="G2") @ u - u))))
    return {"g1_fixed_point": g1_res, "g1_closed_form": closed, "g2_column_sum": g2_col,
            "g2_uniform_stationarity": g2_stat,
            "passed": max(g1_res, closed, g2_stat) <= 1e-12 and g2_col <= 1e-12}


SUITES: dict[str, Callable[..., dict]] = {
    "hopf": suite_hopf,
    "ergodicity": suite_ergodicity,
    "gfmc-stationarity": suite_gfmc_stationarity,
    "sa-map": suite_sa_map,
    "gap-bounds": suite_gap_bounds,
}


def run_bounds_suite(spec: ExperimentSpec) -> ExperimentResult:
    names = spec.get_list("run", "suites", ",".join(SUITES))
    summary = {}
    for name in names:
        if name not in SUITES:
            raise SpecError(f"run.suites: unknown suite {name!r}; expected one of {sorted(SUITES)}")
        summary[name] = SUITES[name](seed=spec.seed)
    out = _outdir(spec)
    return ExperimentResult("bounds_suite", summary, [B.write_report(summary, out / "bounds_suite.json")])


EXPERIMENTS: dict[str, Callable[[ExperimentSpec], ExperimentResult]] = {
    "lz_sweep": run_lz_sweep,
    "sg_res_energy": run_sg_res_energy,
    "grover_res_energy": run_grover_res_energy,
    "it_vs_rt": run_it_vs_rt,
    "pimc_convergence": run_pimc_convergence,
    "gfmc_convergence": run_gfmc_convergence,
    "bounds_suite": run_bounds_suite,
}

DESCRIPTIONS = {
    "lz_sweep": "two-level excitation probability vs tau for f1..f4",
    "sg_res_energy": "3x3 spin-glass residual energy vs tau (real time)",
    "grover_res_energy": "database-search residual energy with the local-adiabatic schedules",
    "it_vs_rt": "imaginary- vs real-time residual energy with sq1/sq2",
    "pimc_convergence": "exact inhomogeneous PIMC chain under the log schedule",
    "gfmc_convergence": "weighted-walker GFMC on a small ferromagnet",
    "bounds_suite": "Hopf, gap-bound, SA-map, ergodicity and GFMC identity suites",
}

GNUPLOT_STUB = """# gnuplot stub for {name}
set datafile separator ','
set logscale xy
set key autotitle columnhead
plot '{csv}' using 1:{col} with linespoints
"""


RESULT_FIELDS = ["schema", "experiment", "parameters", "metric", "value", "error", "seed", "version"]


def result_rows(spec: ExperimentSpec, summary: dict) -> list[dict]:
    """Flatten a summary into scalar metric rows; ``<key>_stderr`` or ``stderr`` siblings become error bars."""
    params = ";".join(f"{sec}.{k}={v}" for sec in sorted(spec.sections) for k, v in sorted(spec.sections[sec].items()))
    rows = []

    def walk(prefix: str, node):
        if isinstance(node, dict):
            for key in sorted(node):
                if key.endswith("stderr"):
                    continue
                walk(f"{prefix}.{key}" if prefix else str(key), node[key])
            return
        if isinstance(node, (bool, int, float, np.floating, np.integer)) and not isinstance(node, str):
            parent, _, leaf = prefix.rpartition(".")
            siblings = lookup.get(parent, {})
            err = siblings.get(f"{leaf}_stderr", siblings.get("stderr") if leaf == "slope" else None)
            rows.append({"schema": SCHEMA_VERSION, "experiment": spec.experiment, "parameters": params,
                         "metric": prefix, "value": repr(float(node)) if not isinstance(node, bool) else str(node),
                         "error": "" if err is None else repr(float(err)), "seed": spec.seed,
                         "version": __version__})

    lookup: dict[str, dict] = {}

    def index(prefix: str, node):
        if isinstance(node, dict):
            lookup[prefix] = node
            for key, val in node.items():
                index(f"{prefix}.{key}" if prefix else str(key), val)

    index("", summary)
    walk("", summary)
    return rows


def append_results(path: Path, rows: list[dict]) -> Path:
    """Append rows to a results file, writing the header only when the file is new."""
    new = not path.exists()
    with path.open("a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        if new:
            w.writeheader()
        w.writerows(rows)
    return path


def run(spec: ExperimentSpec) -> ExperimentResult:
    """Validate, execute and persist an experiment; writes summary JSON and gnuplot stubs."""
    if spec.experiment not in EXPERIMENTS:
        raise SpecError(f"experiment.id: unknown experiment {spec.experiment!r}; expected one of {sorted(EXPERIMENTS)}")
    for key in ("schedules",):
        if key in spec.sections.get("run", {}) and spec.experiment != "bounds_suite":
            _resolve_schedules(spec.get_list("run", key), f"run.{key}")
    start = time.time()
    res = EXPERIMENTS[spec.experiment](spec)
    out = _outdir(spec)
    for f in list(res.files):
        if f.suffix == ".csv":
            stub = out / (f.stem + ".gp")
            stub.write_text(GNUPLOT_STUB.format(name=f.stem, csv=f.name, col=4))
            res.files.append(stub)
    meta = {"experiment": spec.experiment, "seed": spec.seed, "version": __version__,
            "elapsed_s": round(time.time() - start, 3)}
    summary_path = out / f"{spec.experiment}_summary.json"
    summary_path.write_text(json.dumps(B._jsonable({"meta": meta, "summary": res.summary}), indent=2,
                                       sort_keys=True) + "\n")
    res.files.append(summary_path)
    res.files.append(append_results(out / "results.csv", result_rows(spec, res.summary)))
    return res
