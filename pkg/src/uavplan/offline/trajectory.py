"""Trajectory subproblem: concave rate restriction over the waypoints.

With association and powers frozen, the worst-rate epigraph problem is
restricted to a convex program around a reference trajectory using the
surrogate builders.  Three structural reductions keep the problem small
and exactly equivalent:

* endpoint constraints pin the first and last waypoints, and the
  hover-while-serving equalities merge runs of waypoints into single
  free variables (the equalities are linear once association is fixed);
* the auxiliary variables of the interference bound (offset, elevation,
  sigmoid-denominator) are substituted at their tight values, which is
  lossless because the bounded interference is monotone in each of them;
  what remains of their constraints is an affine floor on the linearized
  squared offset per interferer;
* the anti-collision constraint is the standard linearization of the
  squared pairwise distance, a global lower bound, so feasibility for
  the restriction implies true separation.

The SCA loop re-expands at each solution; by tangency of every surrogate
the true objective is nondecreasing across iterations up to the barrier
gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import average_gain_table
from ..rate import worst_total
from ..scenario import GEOM_TOL, Scenario
from . import solver
from .surrogates import (SurrogatePoint, build_interference_surrogate,
                         build_signal_surrogate)


class LinearizationInfeasible(solver.Infeasible):
    """The reference violates a hard constraint, so the linearized
    restriction is empty by construction."""


@dataclass(frozen=True)
class HoverStructure:
    """Mapping between full waypoints (M, N+1, 2) and the free variables
    that remain after endpoint pinning and hover merging."""

    group_of: np.ndarray        # (M, N+1) group ids
    var_of_group: np.ndarray    # (G,) free-variable index or -1 if fixed
    fixed_value: np.ndarray     # (G, 2) value for fixed groups (else nan)
    num_free: int
    num_m: int
    num_wp: int

    @staticmethod
    def build(scenario: Scenario, association) -> "HoverStructure":
        a = np.asarray(association)
        m, n = scenario.num_m, scenario.num_slots
        serving = a.any(axis=1)                       # (M, N)
        group_of = np.zeros((m, n + 1), dtype=int)
        gid = 0
        groups = []
        for mi in range(m):
            start = 0
            for ni in range(n + 1):
                group_of[mi, ni] = gid
                last_of_run = ni == n or not serving[mi, ni]
                if last_of_run:
                    groups.append((mi, start, ni))
                    gid += 1
                    start = ni + 1
        var_of_group = np.full(gid, -1, dtype=int)
        fixed_value = np.full((gid, 2), np.nan)
        nf = 0
        for g, (mi, lo, hi) in enumerate(groups):
            if lo == 0 or hi == n:
                fixed_value[g] = scenario.uav_initials[mi]
            else:
                var_of_group[g] = nf
                nf += 1
        return HoverStructure(group_of, var_of_group, fixed_value,
                              nf, m, n + 1)

    def var_slice(self, mi: int, ni: int):
        """Flat z-indices (2,) of the waypoint's free variable, or None."""
        v = self.var_of_group[self.group_of[mi, ni]]
        if v < 0:
            return None
        return np.array([1 + 2 * v, 2 + 2 * v])

    def expand(self, z) -> np.ndarray:
        """Full waypoint array from a solver vector (z[0] is the epigraph
        variable)."""
        out = np.empty((self.num_m, self.num_wp, 2))
        for mi in range(self.num_m):
            for ni in range(self.num_wp):
                g = self.group_of[mi, ni]
                v = self.var_of_group[g]
                out[mi, ni] = (self.fixed_value[g] if v < 0
                               else z[1 + 2 * v: 3 + 2 * v])
        return out

    def reduce(self, waypoints, how: str = "first") -> np.ndarray:
        """Free-variable coordinates from a full waypoint array."""
        w = np.asarray(waypoints, dtype=float)
        coords = np.zeros(2 * self.num_free)
        for g in range(self.var_of_group.size):
            v = self.var_of_group[g]
            if v < 0:
                continue
            members = np.argwhere(self.group_of == g)
            vals = w[members[:, 0], members[:, 1]]
            pick = vals[0] if how == "first" else vals.mean(axis=0)
            coords[2 * v: 2 * v + 2] = pick
        return coords

    @property
    def n_vars(self) -> int:
        return 1 + 2 * self.num_free


def _slot_term_value(sig, interf, q) -> float:
    v = sig.value(q)
    if interf is not None:
        v = v + interf.value(q)
    return float(v)


class RateEpigraphBlock(solver.Block):
    """f_k = (zeta - sum of slot surrogates of node k) / scale_k <= 0."""

    name = "rate_epigraph"

    def __init__(self, terms_by_k, scales, structure: HoverStructure):
        # terms_by_k: list over k of [(m, n, SignalSurrogate,
        # InterferenceSurrogate or None)]
        self.terms_by_k = terms_by_k
        self.scales = np.asarray(scales, dtype=float)
        self.structure = structure

    def count(self):
        return len(self.terms_by_k)

    def rate_values(self, z):
        w = self.structure.expand(z)
        out = np.empty(len(self.terms_by_k))
        for ki, terms in enumerate(self.terms_by_k):
            out[ki] = sum(_slot_term_value(sig, interf, w[mi, ni])
                          for mi, ni, sig, interf in terms)
        return out

    def value(self, z):
        return (z[0] - self.rate_values(z)) / self.scales

    def jac(self, z):
        w = self.structure.expand(z)
        j = np.zeros((len(self.terms_by_k), z.size))
        j[:, 0] = 1.0 / self.scales
        for ki, terms in enumerate(self.terms_by_k):
            for mi, ni, sig, interf in terms:
                cols = self.structure.var_slice(mi, ni)
                if cols is None:
                    continue
                g, _ = sig.grad_hess(w[mi, ni])
                if interf is not None:
                    gi, _ = interf.grad_hess(w[mi, ni])
                    g = g + gi
                j[ki, cols] -= g / self.scales[ki]
        return j

    def hess(self, z, weights):
        w = self.structure.expand(z)
        h = np.zeros((z.size, z.size))
        for ki, terms in enumerate(self.terms_by_k):
            wk = weights[ki] / self.scales[ki]
            if wk == 0.0:
                continue
            for mi, ni, sig, interf in terms:
                cols = self.structure.var_slice(mi, ni)
                if cols is None:
                    continue
                _, hh = sig.grad_hess(w[mi, ni])
                if interf is not None:
                    _, hi = interf.grad_hess(w[mi, ni])
                    hh = hh + hi
                h[np.ix_(cols, cols)] -= wk * hh
        return h


def _speed_block(structure: HoverStructure, scenario: Scenario):
    entries = []
    cap = scenario.max_step ** 2
    for mi in range(structure.num_m):
        for ni in range(structure.num_wp - 1):
            ga = structure.group_of[mi, ni]
            gb = structure.group_of[mi, ni + 1]
            if ga == gb:
                continue
            cols, coeffs = [], []
            offset = np.zeros(2)
            for g, sign in ((ga, 1.0), (gb, -1.0)):
                v = structure.var_of_group[g]
                if v < 0:
                    offset += sign * structure.fixed_value[g]
                else:
                    cols.extend([1 + 2 * v, 2 + 2 * v])
                    coeffs.extend([np.array([sign, 0.0]),
                                   np.array([0.0, sign])])
            if not cols:
                if offset @ offset > cap + GEOM_TOL:
                    raise LinearizationInfeasible(
                        "pinned waypoints exceed the speed limit")
                continue
            entries.append((np.asarray(cols), coeffs, offset, cap))
    if not entries:
        return None
    return solver.SquaredNormBlock(structure.n_vars, entries, name="speed")


def _separation_rows(structure: HoverStructure, point: SurrogatePoint,
                     scenario: Scenario):
    m, n = scenario.num_m, scenario.num_slots
    if m < 2:
        return None
    rows, rhs = [], []
    d2 = scenario.d_min ** 2
    q_r = point.q_ref
    for mi in range(m):
        for mj in range(mi + 1, m):
            for ni in range(1, n):
                dr = q_r[mi, ni] - q_r[mj, ni]
                base = float(dr @ dr)
                if base < (scenario.d_min - GEOM_TOL) ** 2:
                    raise LinearizationInfeasible(
                        f"reference UAVs {mi},{mj} are {np.sqrt(base):.2f} m "
                        f"apart at slot {ni}, below the safety distance")
                # d2 <= base + 2 dr.(q_i - q_i^r) - 2 dr.(q_j - q_j^r)
                row = np.zeros(structure.n_vars)
                const = base
                for midx, sign in ((mi, 1.0), (mj, -1.0)):
                    cols = structure.var_slice(midx, ni)
                    if cols is None:
                        const += 2.0 * sign * float(
                            dr @ (structure.fixed_value[
                                structure.group_of[midx, ni]] - q_r[midx, ni]))
                    else:
                        row[cols] -= 2.0 * sign * dr / d2
                        const -= 2.0 * sign * float(dr @ q_r[midx, ni])
                if not row.any():
                    if d2 - const > 0:
                        raise LinearizationInfeasible(
                            "pinned waypoints violate the linearized "
                            "separation constraint")
                    continue
                rows.append(row)
                rhs.append((const - d2) / d2)
    if not rows:
        return None
    return solver.AffineBlock(np.vstack(rows), np.asarray(rhs),
                              name="separation")


def _offset_floor_rows(structure: HoverStructure, terms_by_k,
                       scenario: Scenario):
    """Affine floors keeping each interferer's linearized squared offset
    in the surrogate's domain."""
    rows, rhs = [], []
    for terms in terms_by_k:
        for mi, ni, _sig, interf in terms:
            if interf is None:
                continue
            cols = structure.var_slice(mi, ni)
            active = interf.p_interf > 0.0
            for d_vec, u_ref, u_floor in zip(interf.d_vec[active],
                                             interf.u_ref[active],
                                             interf.u_floor[active]):
                scale = max(u_ref, 1.0)
                if cols is None:
                    continue        # fixed waypoint: floor holds at u_ref
                row = np.zeros(structure.n_vars)
                row[cols] = -2.0 * d_vec / scale
                const = u_ref - 2.0 * float(d_vec @ interf.q_ref)
                rhs.append((const - u_floor) / scale)
                rows.append(row)
    if not rows:
        return None
    return solver.AffineBlock(np.vstack(rows), np.asarray(rhs),
                              name="offset_floor")


def build_restriction(point: SurrogatePoint, scenario: Scenario,
                      structure: HoverStructure, u_floor_frac: float = 0.25):
    """Assemble blocks and a start point for the trajectory restriction."""
    a = point.a_ref
    terms_by_k = [[] for _ in range(scenario.num_k)]
    for mi in range(scenario.num_m):
        for ni in range(scenario.num_slots):
            served = np.nonzero(a[mi, :, ni])[0]
            if served.size == 0:
                continue
            ki = int(served[0])
            sig = build_signal_surrogate(point, scenario, mi, ni)
            interf = (build_interference_surrogate(
                point, scenario, mi, ki, ni, u_floor_frac)
                if scenario.num_k > 1 else None)
            terms_by_k[ki].append((mi, ni, sig, interf))

    rate_ref = np.array([
        sum(_slot_term_value(sig, interf, point.q_eff[mi, ni])
            for mi, ni, sig, interf in terms)
        for terms in terms_by_k])
    scales = np.maximum(np.abs(rate_ref), 1.0)
    rate_block = RateEpigraphBlock(terms_by_k, scales, structure)

    blocks = [rate_block]
    for blk in (_speed_block(structure, scenario),
                _separation_rows(structure, point, scenario),
                _offset_floor_rows(structure, terms_by_k, scenario)):
        if blk is not None:
            blocks.append(blk)

    z0 = np.empty(structure.n_vars)
    z0[0] = float(rate_ref.min()) - 1.0
    z0[1:] = structure.reduce(point.q_ref)
    return blocks, z0, rate_block


def solve_trajectory_step(point: SurrogatePoint, scenario: Scenario,
                          structure: HoverStructure, gap_tol=1e-8,
                          u_floor_frac: float = 0.25):
    """One convex restriction solve; returns (waypoints, solver result)."""
    if structure.num_free == 0:
        return structure.expand(np.zeros(1)), None
    blocks, z0, _ = build_restriction(point, scenario, structure, u_floor_frac)
    obj = solver.LinearObjective(-np.eye(structure.n_vars)[0])
    res = solver.solve(obj, blocks, z0, gap_tol=gap_tol, name="trajectory")
    return structure.expand(res.z), res


def solve_trajectory_sca(a_fixed, p_fixed, q_init, scenario: Scenario,
                         tol: float = 1e-3, max_iters: int = 30,
                         gap_tol: float = 1e-8,
                         u_floor_frac: float = 0.25):
    """SCA on the trajectory restriction.

    Returns (waypoints, trace) where trace[i] is the true average-channel
    worst rate (normalized units) after i inner solves; trace[0] is the
    value at ``q_init``.
    """
    structure = HoverStructure.build(scenario, a_fixed)
    q_ref = np.asarray(q_init, dtype=float)

    def objective(q):
        return worst_total(a_fixed, p_fixed,
                           average_gain_table(q, scenario), scenario,
                           bandwidth=1.0)

    trace = [objective(q_ref)]
    for _ in range(max_iters):
        point = SurrogatePoint.at(q_ref, p_fixed, a_fixed, scenario)
        try:
            q_new, _res = solve_trajectory_step(point, scenario, structure,
                                                gap_tol, u_floor_frac)
        except solver.SolverError:
            break                      # keep the incumbent; cannot improve
        f_new = objective(q_new)
        gain = f_new - trace[-1]
        if gain < 0.0:
            break                      # numerical stall; incumbent stands
        trace.append(f_new)
        q_ref = q_new
        if structure.num_free == 0 or gain < tol * max(1.0, abs(f_new)):
            break
    return q_ref, trace


def project_hover(q_target, a_fixed, scenario: Scenario) -> np.ndarray:
    """Nearest trajectory (least squares) satisfying endpoints, hover
    equalities for ``a_fixed``, the speed limit and the separation
    constraint linearized at ``q_target``."""
    structure = HoverStructure.build(scenario, a_fixed)
    q_t = np.asarray(q_target, dtype=float)
    if structure.num_free == 0:
        w = structure.expand(np.zeros(1))
        return w
    nv = structure.n_vars
    quad = np.zeros((nv, nv))
    lin = np.zeros(nv)
    for g in range(structure.var_of_group.size):
        v = structure.var_of_group[g]
        if v < 0:
            continue
        members = np.argwhere(structure.group_of == g)
        cols = [1 + 2 * v, 2 + 2 * v]
        quad[cols[0], cols[0]] = quad[cols[1], cols[1]] = 2.0 * len(members)
        target_sum = q_t[members[:, 0], members[:, 1]].sum(axis=0)
        lin[cols] = -2.0 * target_sum
    # harmless curvature on the unused epigraph slot keeps the Hessian PD
    quad[0, 0] = 1.0

    point = SurrogatePoint.at(q_t, np.zeros((scenario.num_k,
                                             scenario.num_slots)),
                              a_fixed, scenario)
    blocks = []
    for blk in (_speed_block(structure, scenario),
                _separation_rows(structure, point, scenario)):
        if blk is not None:
            blocks.append(blk)
    z0 = np.zeros(nv)
    z0[1:] = structure.reduce(q_t, how="mean")
    if not blocks:
        return structure.expand(z0)
    res = solver.solve(solver.QuadraticObjective(quad, lin), blocks, z0,
                       gap_tol=1e-8, name="hover_projection")
    return structure.expand(res.z)
