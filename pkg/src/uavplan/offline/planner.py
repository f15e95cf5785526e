"""Alternating outer loop of the offline planner.

Each round solves, in order: the association LP (with rounding repair and
a monotone safeguard), the trajectory restriction by SCA, and the power
restriction by SCA, each around the incumbent solution.  The outer loop
stops when the round-over-round gain of the true average-channel worst
rate falls below the stopping threshold (relative, default 1e-4).

The rounding step can lower the objective, which the convergence argument
of the alternating scheme does not cover; a rounded association is
therefore accepted only if the objective at the hover-projected
trajectory does not drop, otherwise the previous association is kept.
With that safeguard every recorded outer value is nondecreasing up to
the solver's duality gap.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..baselines import default_circles, exhaustive_power, nearest_association
from ..channel import average_gain_table
from ..energy import HarvestProfile
from ..rate import worst_total
from ..scenario import Plan, Scenario
from . import association as assoc_mod
from . import power as power_mod
from . import trajectory as traj_mod


@dataclass(frozen=True)
class PlannerConfig:
    eps_outer: float = 1e-4          # relative round-over-round gain
    max_outer: int = 30
    inner_tol: float = 1e-3          # relative inner SCA gain
    max_inner: int = 30
    gap_tol: float = 1e-8            # barrier duality gap
    u_floor_frac: float = 0.25       # trust floor of the offset chain


@dataclass
class SolveOutcome:
    plan: Plan
    objective_trace: list            # bits/s, one value per outer round end
    inner_traces: dict               # {"trajectory": [...], "power": [...]}
    status: str                      # converged | iteration-cap | infeasible
    outer_iterations: int
    seconds: float

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def to_json(self, path) -> None:
        doc = {
            "status": self.status,
            "outer_iterations": self.outer_iterations,
            "objective_bps": repr(float(self.objective)),
            "objective_trace_bps": [repr(float(v))
                                    for v in self.objective_trace],
            "inner_traces_bps": {
                key: [[repr(float(v)) for v in trace] for trace in traces]
                for key, traces in self.inner_traces.items()},
            "seconds": self.seconds,
        }
        Path(path).write_text(json.dumps(doc, indent=2))

    def plan_to_csv(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        w = self.plan.waypoints
        with open(out / "waypoints.csv", "w", newline="") as fh:
            cw = csv.writer(fh)
            cw.writerow(["uav", "slot", "x", "y"])
            for mi in range(w.shape[0]):
                for ni in range(w.shape[1]):
                    cw.writerow([mi, ni, repr(float(w[mi, ni, 0])),
                                 repr(float(w[mi, ni, 1]))])
        with open(out / "association.csv", "w", newline="") as fh:
            cw = csv.writer(fh)
            cw.writerow(["slot", "uav", "node"])
            for mi, ki, ni in np.argwhere(self.plan.association):
                cw.writerow([int(ni), int(mi), int(ki)])
        with open(out / "power.csv", "w", newline="") as fh:
            cw = csv.writer(fh)
            cw.writerow(["node", "slot", "power_w"])
            p = self.plan.power
            for ki in range(p.shape[0]):
                for ni in range(p.shape[1]):
                    cw.writerow([ki, ni, repr(float(p[ki, ni]))])


def default_initial(scenario: Scenario, profile: HarvestProfile):
    """Feasible starting triple: cadenced circles, nearest association on
    hover slots, battery-draining power."""
    q0 = default_circles(scenario)
    a0 = nearest_association(q0, scenario)
    p0 = exhaustive_power(profile, a0, scenario)
    return a0, q0, p0


def _objective_norm(a, q, p, scenario) -> float:
    return worst_total(a, p, average_gain_table(q, scenario), scenario,
                       bandwidth=1.0)


def _probe_power(profile: HarvestProfile, scenario: Scenario) -> np.ndarray:
    """Nominal per-slot power a node could sustain, for LP scoring of
    nodes whose frozen power is zero."""
    mean_e = profile.energy_per_slot.mean(axis=1, keepdims=True)
    probe = np.maximum(mean_e / scenario.slot_seconds, 1e-6)
    return np.broadcast_to(probe, profile.energy_per_slot.shape)


def optimize_plan(scenario: Scenario, profile: HarvestProfile,
                  config: PlannerConfig | None = None,
                  init=None) -> SolveOutcome:
    """Run the alternating optimizer from a feasible initial triple."""
    cfg = config or PlannerConfig()
    t_start = time.perf_counter()
    if init is None:
        a_cur, q_cur, p_cur = default_initial(scenario, profile)
    else:
        a_cur, q_cur, p_cur = init
        a_cur = np.asarray(a_cur)
        q_cur = np.asarray(q_cur, dtype=float)
        p_cur = np.asarray(p_cur, dtype=float)
    scale_w = scenario.bandwidth
    probe = _probe_power(profile, scenario)

    f_cur = _objective_norm(a_cur, q_cur, p_cur, scenario)
    trace = [f_cur * scale_w]
    inner_traces = {"trajectory": [], "power": []}
    status = "iteration-cap"
    outer = 0
    try:
        for outer in range(1, cfg.max_outer + 1):
            # association LP + rounding repair + monotone safeguard
            gains = average_gain_table(q_cur, scenario)
            coeffs = assoc_mod.rate_coefficients(gains, p_cur, scenario,
                                                 probe_power=probe)
            relaxed, _ = assoc_mod.solve_relaxed(coeffs, scenario,
                                                 gap_tol=cfg.gap_tol)
            a_cand = assoc_mod.round_and_repair(relaxed)
            if not np.array_equal(a_cand, a_cur):
                q_cand = traj_mod.project_hover(q_cur, a_cand, scenario)
                p_cand = p_cur * (a_cand.sum(axis=0) > 0)
                f_cand = _objective_norm(a_cand, q_cand, p_cand, scenario)
                if f_cand >= f_cur:
                    a_cur, q_cur, p_cur, f_cur = a_cand, q_cand, p_cand, f_cand

            # trajectory SCA
            q_cur, t_trace = traj_mod.solve_trajectory_sca(
                a_cur, p_cur, q_cur, scenario, tol=cfg.inner_tol,
                max_iters=cfg.max_inner, gap_tol=cfg.gap_tol,
                u_floor_frac=cfg.u_floor_frac)
            inner_traces["trajectory"].append(
                [v * scale_w for v in t_trace])

            # power SCA
            p_cur, p_trace = power_mod.solve_power_sca(
                a_cur, q_cur, p_cur, scenario, profile, tol=cfg.inner_tol,
                max_iters=cfg.max_inner, gap_tol=cfg.gap_tol)
            inner_traces["power"].append([v * scale_w for v in p_trace])

            f_new = _objective_norm(a_cur, q_cur, p_cur, scenario)
            trace.append(f_new * scale_w)
            gain = f_new - f_cur
            f_cur = f_new
            if gain < cfg.eps_outer * max(1.0, abs(f_new)):
                status = "converged"
                break
    except (traj_mod.LinearizationInfeasible,) as exc:
        status = f"infeasible: {exc}"

    plan = Plan(q_cur, a_cur, p_cur)
    return SolveOutcome(plan=plan, objective_trace=trace,
                        inner_traces=inner_traces, status=status,
                        outer_iterations=outer,
                        seconds=time.perf_counter() - t_start)
