"""Scenario execution: wiring configs to solvers, writing artifacts.

Artifacts per run directory:

* ``ledger.csv``        energy/dissipation ledger, fixed column order
* ``summary.json``      final norms, steady time, COM-ODE comparison errors
* ``snapshots/``        one file per field per output time (when enabled)
* ``steady_<method>.field`` + ``.txt`` sidecar for steady solves
* ``sweep_report.json`` + ``sweep_table.txt`` for sweeps
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, initial_state
from .convolution import ConvolutionPlan
from .dynamics import Trajectory, run
from .energy import spacetime_norm
from .fields import Grid, first_moment, total_mass, write_field
from .potentials import check_hypotheses
from .steady import SteadyProblem, com_trajectory, solve_fixed_point, solve_gradient_flow

__all__ = ["run_scenario", "sweep", "SWEEPABLE"]

SWEEPABLE = ("eps", "delta", "N", "dt_safety")


def _dump_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _momentum(state) -> np.ndarray:
    g = state.grid
    return state.mom.values.reshape(g.d, -1).sum(axis=1) * g.cell_volume


def _com_case(config: RunConfig) -> str | None:
    p = config.params
    conf = p.confinement
    if p.damping == "linear" and conf.kind == "quadratic" and conf.amplitude == 1.0:
        return "quadratic-confinement"
    if p.damping == "linear" and conf.is_zero:
        return "no-confinement-symmetric"
    if p.damping == "alignment" and conf.is_zero:
        return "alignment-no-confinement"
    return None


def _com_errors(config: RunConfig, traj: Trajectory) -> dict:
    case = _com_case(config)
    if case is None or len(traj.states) < 2:
        return {"com_case": None}
    t = np.array([s.t for s in traj.states])
    X = np.stack([first_moment(s) for s in traj.states])
    P = np.stack([_momentum(s) for s in traj.states])
    X_ref, P_ref = com_trajectory(case, X[0], P[0], total_mass(traj.states[0]), t[:, None])
    return {
        "com_case": case,
        "com_sup_error_x": float(np.abs(X - X_ref).max()),
        "com_sup_error_p": float(np.abs(P - P_ref).max()),
    }


def _write_snapshots(out: Path, traj: Trajectory, every: float) -> int:
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    written = 0
    next_t = traj.states[0].t
    for s in traj.states:
        if s.t + 1e-12 >= next_t or s is traj.states[-1]:
            write_field(snap_dir / f"rho_{written:05d}.field", s.rho, s.t)
            write_field(snap_dir / f"mom_{written:05d}.field", s.mom, s.t)
            written += 1
            next_t = s.t + every
    return written


def _simulate(config: RunConfig, out: Path) -> dict:
    s0 = initial_state(config)
    plan = ConvolutionPlan.build(config.grid, config.params.kernel, config.params.psi)
    traj = run(
        s0,
        config.params,
        config.t_end,
        plan=plan,
        opts=config.opts,
        dt_override=config.dt_override,
    )
    traj.ledger.write_csv(out / "ledger.csv")
    n_snaps = 0
    if config.output.get("snapshots") and config.output["snapshots"].lower() in ("1", "true", "yes", "on"):
        every = (
            float(config.output["snapshot_every"])
            if config.output.get("snapshot_every")
            else config.opts.output_every
        )
        n_snaps = _write_snapshots(out, traj, every)
    else:
        write_field(out / "final_rho.field", traj.final.rho, traj.final.t)
        write_field(out / "final_mom.field", traj.final.mom, traj.final.t)
    rows = traj.ledger.rows
    mass0 = rows[0].mass
    drift = max(abs(r.mass - mass0) for r in rows) / mass0 if mass0 else 0.0
    residuals = [r.inequality_residual for r in rows[1:]]
    summary = {
        "scenario": config.name,
        "subcommand": "simulate",
        "status": traj.status,
        "t_final": traj.final.t,
        "steady_time": traj.steady_time,
        "n_steps": traj.n_steps,
        "mass_initial": mass0,
        "mass_final": rows[-1].mass,
        "mass_drift_rel": drift,
        "final_gradu_l2": rows[-1].grad_u_l2,
        "final_rho_u_sq": rows[-1].rho_u_sq,
        "final_energy": rows[-1].total,
        "initial_energy": rows[0].total,
        "max_inequality_residual": max(residuals) if residuals else 0.0,
        "max_abs_inequality_residual": max(abs(r) for r in residuals) if residuals else 0.0,
        "max_boundary_flux": max(
            (r.report.boundary_flux for r in rows if r.report is not None), default=0.0
        ),
        "snapshots_written": n_snaps,
    }
    summary.update(_com_errors(config, traj))
    _dump_json(out / "summary.json", summary)
    return summary, traj


def _steady_problem(config: RunConfig) -> SteadyProblem:
    center = config.steady.get("center", "0.0")
    vals = tuple(float(tok) for tok in center.replace(",", " ").split())
    if len(vals) == 1:
        vals = vals * config.grid.d
    return SteadyProblem(
        kernel=config.params.kernel,
        confinement=config.params.confinement,
        a=config.params.a,
        m=config.params.m,
        mass=float(config.initial["mass"]),
        center=vals,
        grid=config.grid,
    )


def _sidecar(path: Path, sol) -> None:
    lines = [
        f"method {sol.method}",
        f"C {sol.C!r}",
        f"mass {sol.mass!r}",
        f"peak_density {float(sol.rho_s.values.max())!r}",
        f"residual_l1 {sol.residual_l1!r}",
        f"level_residual_on {sol.level_residual_on!r}",
        f"level_residual_off {sol.level_residual_off!r}",
        f"support_cells {int(sol.support.sum())}",
        f"components {sol.n_components}",
        f"converged {sol.converged}",
        f"iterations {sol.iterations}",
        f"free_energy {sol.free_energy!r}",
    ]
    for note in sol.notes:
        lines.append(f"note {note}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _steady(config: RunConfig, out: Path) -> dict:
    prob = _steady_problem(config)
    method = config.steady.get("method", "both")
    if method not in ("both", "fixed-point", "gradient-flow"):
        raise ConfigError(f"[steady] unknown method {method!r}")
    plan = ConvolutionPlan.build(config.grid, config.params.kernel)
    sols = {}
    if method in ("both", "fixed-point"):
        sols["fixed-point"] = solve_fixed_point(
            prob,
            omega=float(config.steady["omega"]),
            tol=float(config.steady["tol_fp"]),
            max_iter=int(config.steady["max_iter"]),
            plan=plan,
        )
    if method in ("both", "gradient-flow"):
        sols["gradient-flow"] = solve_gradient_flow(
            prob, tol=float(config.steady["tol_gf"]), plan=plan
        )
    summary = {"scenario": config.name, "subcommand": "steady", "methods": sorted(sols)}
    for name, sol in sols.items():
        write_field(out / f"steady_{name}.field", sol.rho_s)
        _sidecar(out / f"steady_{name}.txt", sol)
        summary[name] = {
            "C": sol.C,
            "peak_density": float(sol.rho_s.values.max()),
            "mass": sol.mass,
            "residual_l1": sol.residual_l1,
            "level_residual_on": sol.level_residual_on,
            "level_residual_off": sol.level_residual_off,
            "support_cells": int(sol.support.sum()),
            "components": sol.n_components,
            "converged": sol.converged,
            "iterations": sol.iterations,
            "free_energy": sol.free_energy,
        }
    if len(sols) == 2:
        a = sols["fixed-point"].rho_s.values
        b = sols["gradient-flow"].rho_s.values
        summary["cross_method_l1"] = float(
            np.abs(a - b).sum() * config.grid.cell_volume
        )
    _dump_json(out / "summary.json", summary)
    return summary


def _verify(config: RunConfig, out: Path) -> dict:
    r_o = float(config.verify["r_o"]) if config.verify.get("r_o") else None
    report = check_hypotheses(
        config.params.kernel,
        config.params.confinement,
        config.params.m,
        config.grid,
        r_o=r_o,
        q_samples=int(config.verify.get("q_samples", "3")),
    )
    summary = {
        "scenario": config.name,
        "subcommand": "verify",
        "theta": report.theta,
        "q_window_K_lower": float(report.q_window_K.lower),
        "q_window_gradK_lower": float(report.q_window_gradK.lower),
        "q_window_K_empty": report.q_window_K.empty,
        "q_window_gradK_empty": report.q_window_gradK.empty,
        "kernel_norms": {repr(q): v for q, v in sorted(report.kernel_norms.items())},
        "grad_norms": {repr(q): v for q, v in sorted(report.grad_norms.items())},
        "kernel_norms_finite": report.kernel_norms_finite,
        "grad_norms_finite": report.grad_norms_finite,
        "hc_ratio_max": None if math.isnan(report.hc_ratio_max) else report.hc_ratio_max,
        "hc_growth_ok": report.hc_growth_ok,
        "indeterminate": report.indeterminate,
        "notes": list(report.notes),
    }
    _dump_json(out / "summary.json", summary)
    return summary


def run_scenario(config: RunConfig, out_dir, subcommand: str = "simulate") -> dict:
    """Execute one subcommand; returns (and writes) the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if subcommand == "simulate":
        summary, _ = _simulate(config, out)
        return summary
    if subcommand == "steady":
        return _steady(config, out)
    if subcommand == "verify":
        return _verify(config, out)
    raise ConfigError(f"unknown subcommand {subcommand!r}")


# --- sweeps ------------------------------------------------------------------


def _with_value(config: RunConfig, parameter: str, value: float) -> RunConfig:
    if parameter == "eps":
        return replace(config, params=replace(config.params, eps=value))
    if parameter == "delta":
        return replace(config, params=replace(config.params, delta=value))
    if parameter == "dt_safety":
        return replace(config, opts=replace(config.opts, cfl_safety=value))
    if parameter == "N":
        n = int(round(value))
        grid = Grid(
            config.grid.d,
            (n,) * config.grid.d,
            config.grid.extent,
            config.grid.domain_kind,
            config.grid.ball_radius,
        )
        return replace(config, grid=grid)
    raise ConfigError(f"sweep parameter must be one of {SWEEPABLE}, got {parameter!r}")


def _sweep_member(args):
    config, parameter, value, out_dir = args
    member = _with_value(config, parameter, value)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary, traj = _simulate(member, out)
    st_norm = spacetime_norm(traj)
    final = traj.final
    return {
        "value": value,
        "summary": summary,
        "spacetime_norm": st_norm,
        "final_rho": final.rho.values,
        "grid_n": member.grid.n,
        "cell_volume": member.grid.cell_volume,
    }


def _common_l1(a: np.ndarray, b: np.ndarray, vol_a: float, vol_b: float) -> float:
    """L1 distance of two final densities, prolonging the coarser field
    piecewise-constantly when resolutions differ by an integer factor."""
    if a.shape == b.shape:
        return float(np.abs(a - b).sum()) * vol_a
    fine, coarse = (a, b) if a.size > b.size else (b, a)
    vol_fine = min(vol_a, vol_b)
    for axis in range(coarse.ndim):
        fac, rem = divmod(fine.shape[axis], coarse.shape[axis])
        if rem:
            raise ConfigError(
                "sweep over N needs nested resolutions (integer refinement factors)"
            )
        coarse = np.repeat(coarse, fac, axis=axis)
    return float(np.abs(fine - coarse).sum()) * vol_fine


def sweep(config: RunConfig, out_dir, parameter: str | None = None,
          values: list[float] | None = None, workers: int = 1) -> dict:
    """Run the scenario once per parameter value; report pairwise L1 gaps
    between final densities plus per-run ledger summaries.

    A failing member aborts the sweep; completed members' artifacts remain
    on disk.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    parameter = parameter or config.sweep.get("parameter", "")
    if not parameter:
        raise ConfigError("sweep needs a parameter (config [sweep] or --param)")
    if values is None:
        text = config.sweep.get("values", "")
        if not text:
            raise ConfigError("sweep needs values (config [sweep] or --values)")
        values = [float(tok) for tok in text.replace(",", " ").split()]
    jobs = [
        (config, parameter, v, str(out / f"{parameter}_{i:02d}"))
        for i, v in enumerate(values)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_member, jobs))
    else:
        results = [_sweep_member(job) for job in jobs]

    pair_gaps = []
    for i in range(len(results) - 1):
        a, b = results[i], results[i + 1]
        gap = _common_l1(
            a["final_rho"], b["final_rho"], a["cell_volume"], b["cell_volume"]
        )
        pair_gaps.append(gap)
    report = {
        "scenario": config.name,
        "subcommand": "sweep",
        "parameter": parameter,
        "values": list(values),
        "pairwise_l1": pair_gaps,
        "spacetime_norms": [r["spacetime_norm"] for r in results],
        "summaries": [r["summary"] for r in results],
    }
    _dump_json(out / "sweep_report.json", report)
    lines = [f"sweep over {parameter}", f"{'value':>12}  {'spacetime_norm':>16}"]
    for r in results:
        lines.append(f"{r['value']:>12.6g}  {r['spacetime_norm']:>16.9g}")
    lines.append("")
    lines.append("consecutive pairwise L1 gaps:")
    for (v1, v2), gap in zip(zip(values[:-1], values[1:]), pair_gaps):
        lines.append(f"  {v1:g} -> {v2:g}: {gap:.6e}")
    (out / "sweep_table.txt").write_text("\n".join(lines) + "\n", encoding="ascii")
    return report
