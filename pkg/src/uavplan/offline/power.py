"""Power-control subproblem: concave rate restriction over uplink powers.

With association and waypoints frozen, the signal log term is concave in
the powers as written, and the interference term is convex, so only the
latter is linearized at the reference.  The energy causality and battery
capacity constraints are affine prefix sums.  Powers of unassociated
(node, slot) pairs are identically zero and removed from the variable
set, which also encodes the rule that non-served nodes must not transmit.
"""

from __future__ import annotations

import numpy as np

from ..channel import average_gain_table
from ..energy import HarvestProfile
from ..rate import worst_total
from ..scenario import Scenario
from . import solver

LN2 = float(np.log(2.0))


class PowerRateBlock(solver.Block):
    """f_k = (zeta - F_k(p)) / scale_k <= 0 with
    F_k = sum over served slots of [log2(total received + noise)
          - log2(reference interference + noise) - linear correction].

    Terms are packed into padded index/gain matrices so every evaluation
    is a handful of vectorized operations (the solver line search calls
    ``value`` thousands of times per solve).
    """

    name = "power_rate"

    def __init__(self, slot_terms_by_k, scales, n_vars):
        # slot term: (cols, gains, noise, const, lin_cols, lin_coefs)
        self.scales = np.asarray(scales, dtype=float)
        self.n_vars = n_vars
        terms = [(ki,) + t for ki, ts in enumerate(slot_terms_by_k)
                 for t in ts]
        self.n_terms = len(terms)
        n_k = len(slot_terms_by_k)
        width = max((t[1].size for t in terms), default=1)
        # padding points at z[0] with zero gain, which contributes nothing
        self.cols = np.zeros((self.n_terms, width), dtype=int)
        self.gains = np.zeros((self.n_terms, width))
        self.noise = np.zeros(self.n_terms)
        self.k_of = np.zeros(self.n_terms, dtype=int)
        const_k = np.zeros(n_k)
        self.jac_affine = np.zeros((n_k, n_vars))
        self.jac_affine[:, 0] = 1.0 / self.scales
        for t_idx, (ki, cols, gains, noise, const, lin_cols,
                    lin_coefs) in enumerate(terms):
            self.cols[t_idx, :cols.size] = cols
            self.gains[t_idx, :cols.size] = gains
            self.noise[t_idx] = noise
            self.k_of[t_idx] = ki
            const_k[ki] += const
            np.add.at(self.jac_affine[ki], lin_cols,
                      -lin_coefs / self.scales[ki])
        self.const_k = const_k
        self.lin_part = self.jac_affine.copy()
        self.lin_part[:, 0] = 0.0
        self.row_cols = np.repeat(self.k_of, width)
        self.flat_cols = self.cols.reshape(-1)

    def count(self):
        return self.scales.size

    def _totals(self, z):
        return np.einsum("tw,tw->t", self.gains, z[self.cols]) + self.noise

    def rate_values(self, z):
        # transiently negative powers appear during Phase-I line searches;
        # a nan/-inf value is simply rejected as infeasible by the solver
        with np.errstate(invalid="ignore", divide="ignore"):
            logs = np.log2(self._totals(z))
        out = self.const_k.copy()
        np.add.at(out, self.k_of, logs)
        # lin_part rows already divided by scale; undo for raw rates
        return out - (self.lin_part @ z) * self.scales

    def value(self, z):
        with np.errstate(invalid="ignore", divide="ignore"):
            logs = np.log2(self._totals(z))
        acc = self.const_k.copy()
        np.add.at(acc, self.k_of, logs)
        return (z[0] - acc) / self.scales + self.lin_part @ z

    def jac(self, z):
        j = self.jac_affine.copy()
        tot = self._totals(z)
        contrib = -self.gains / (tot * LN2 * self.scales[self.k_of])[:, None]
        np.add.at(j, (self.row_cols, self.flat_cols), contrib.reshape(-1))
        return j

    def hess(self, z, weights):
        # padded entries have zero gain, so their scattered products vanish
        h = np.zeros((self.n_vars, self.n_vars))
        tot = self._totals(z)
        wk = np.asarray(weights)[self.k_of] / (self.scales[self.k_of] * LN2)
        g = self.gains / tot[:, None] * np.sqrt(wk)[:, None]
        width = self.cols.shape[1]
        ii = np.repeat(self.cols, width, axis=1).reshape(-1)
        jj = np.tile(self.cols, (1, width)).reshape(-1)
        vv = (g[:, :, None] * g[:, None, :]).reshape(-1)
        np.add.at(h, (ii, jj), vv)
        return h


def _active_index(association, scenario: Scenario):
    a = np.asarray(association)
    served = a.sum(axis=0) > 0                     # (K, N)
    var_of = np.full(served.shape, -1, dtype=int)
    pairs = np.argwhere(served)
    for idx, (ki, ni) in enumerate(pairs):
        var_of[ki, ni] = 1 + idx                   # z[0] is the epigraph var
    return var_of, pairs


def build_power_restriction(p_ref, association, gains_avg,
                            profile: HarvestProfile, scenario: Scenario):
    """Blocks + start vector for the power restriction at reference p_ref."""
    a = np.asarray(association)
    g = np.asarray(gains_avg, dtype=float)
    p_r = np.asarray(p_ref, dtype=float)
    k, n = scenario.num_k, scenario.num_slots
    var_of, pairs = _active_index(association, scenario)
    nv = 1 + len(pairs)
    noise = scenario.noise_power
    delta = scenario.slot_seconds

    slot_terms_by_k = [[] for _ in range(k)]
    for mi in range(scenario.num_m):
        for ni in range(n):
            served = np.nonzero(a[mi, :, ni])[0]
            if served.size == 0:
                continue
            ki = int(served[0])
            active = np.nonzero(var_of[:, ni] > 0)[0]
            cols = var_of[active, ni]
            gains = g[mi, active, ni]
            interferers = active[active != ki]
            i_ref = float(g[mi, interferers, ni] @ p_r[interferers, ni]
                          + noise)
            lin_cols = var_of[interferers, ni]
            lin_coefs = -g[mi, interferers, ni] / (LN2 * i_ref)
            const = -np.log2(i_ref) - float(lin_coefs @ p_r[interferers, ni])
            slot_terms_by_k[ki].append(
                (cols, gains, noise, const, lin_cols, lin_coefs))

    z_ref = np.zeros(nv)
    if len(pairs):
        z_ref[1:] = p_r[pairs[:, 0], pairs[:, 1]]
    probe = PowerRateBlock(slot_terms_by_k, np.ones(k), nv)
    rate_ref = probe.rate_values(z_ref)
    scales = np.maximum(np.abs(rate_ref), 1.0)
    rate_block = PowerRateBlock(slot_terms_by_k, scales, nv)

    blocks = [rate_block]
    rows, rhs = [], []
    e = profile.energy_per_slot
    bmax = scenario.battery_capacity
    for ki in range(k):
        cum_e = np.cumsum(e[ki])
        for ni in range(n):
            # causality: delta * sum_{l<=n} p <= sum_{l<=n} E
            cols = var_of[ki, :ni + 1]
            cols = cols[cols > 0]
            if cols.size:
                scale = max(cum_e[ni], 1.0)
                row = np.zeros(nv)
                row[cols] = delta / scale
                rows.append(row)
                rhs.append(cum_e[ni] / scale)
            # capacity: sum_{l<=n+1} E - delta * sum_{l<=n} p <= Bmax
            if ni < n - 1:
                lhs_const = cum_e[ni + 1] - bmax
                if cols.size == 0:
                    if lhs_const > 0:
                        raise solver.Infeasible(
                            f"harvest alone overflows the battery of node "
                            f"{ki} by {lhs_const:.3g} J at slot {ni + 1} "
                            "with no served slot to drain it")
                    continue
                row = np.zeros(nv)
                row[cols] = -delta / bmax
                rows.append(row)
                rhs.append(-lhs_const / bmax)
    if rows:
        blocks.append(solver.AffineBlock(np.vstack(rows), np.asarray(rhs),
                                         name="energy"))
    if nv > 1:
        blocks.append(solver.BoxBlock(nv, np.arange(1, nv), lo=0.0,
                                      name="power_nonneg"))

    z0 = z_ref.copy()
    z0[0] = float(rate_ref.min()) - 1.0
    return blocks, z0, rate_block, var_of, pairs


def solve_power_step(p_ref, association, gains_avg, profile, scenario,
                     gap_tol=1e-8):
    """One convex restriction solve; returns ((K, N) powers, result)."""
    blocks, z0, _rate_block, _var_of, pairs = build_power_restriction(
        p_ref, association, gains_avg, profile, scenario)
    if len(pairs) == 0:
        return np.zeros((scenario.num_k, scenario.num_slots)), None
    obj = solver.LinearObjective(-np.eye(z0.size)[0])
    res = solver.solve(obj, blocks, z0, gap_tol=gap_tol, name="power")
    p = np.zeros((scenario.num_k, scenario.num_slots))
    p[pairs[:, 0], pairs[:, 1]] = res.z[1:]
    return p, res


def solve_power_sca(a_fixed, q_fixed, p_init, scenario: Scenario,
                    profile: HarvestProfile, tol: float = 1e-3,
                    max_iters: int = 30, gap_tol: float = 1e-8):
    """SCA on the power restriction; returns (powers, trace) with the true
    normalized worst rate per inner solve (trace[0] at ``p_init``)."""
    gains = average_gain_table(q_fixed, scenario)
    mask = np.asarray(a_fixed).sum(axis=0) > 0

    def objective(p):
        return worst_total(a_fixed, p, gains, scenario, bandwidth=1.0)

    p_ref = np.asarray(p_init, dtype=float) * mask
    trace = [objective(p_ref)]
    for _ in range(max_iters):
        try:
            p_new, _res = solve_power_step(p_ref, a_fixed, gains, profile,
                                           scenario, gap_tol)
        except solver.SolverError:
            break                      # keep the incumbent; cannot improve
        f_new = objective(p_new)
        gain = f_new - trace[-1]
        if gain < 0.0:
            break                      # numerical stall; incumbent stands
        trace.append(f_new)
        p_ref = p_new
        if gain < tol * max(1.0, abs(f_new)):
            break
    return p_ref, trace
