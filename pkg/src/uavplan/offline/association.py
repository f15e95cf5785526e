"""UAV-node association subproblem: relaxed LP plus integral repair.

With waypoints and powers frozen, the per-pair rate coefficients are
constants, so maximizing the worst total rate over relaxed binary
association variables is a plain LP in epigraph form.  The relaxed
optimum is quantized at 0.5 and repaired into a valid one-to-one
matching per slot by a deterministic greedy pass over the relaxed
values (rounding alone can leave a node claimed by two UAVs, or a UAV
split between two half-served nodes).
"""

from __future__ import annotations

import numpy as np

from ..channel import average_gain_table
from ..scenario import Scenario
from . import solver


def rate_coefficients(gains_avg, powers, scenario: Scenario,
                      probe_power=None) -> np.ndarray:
    """(M, K, N) per-pair rate coefficients log2(1 + SINR) in bandwidth-
    normalized units.

    ``probe_power`` substitutes the served node's own power when its
    frozen power is zero (a node that never transmitted yet would
    otherwise score zero everywhere and could never be selected);
    interference always uses the frozen powers.
    """
    g = np.asarray(gains_avg, dtype=float)
    p = np.asarray(powers, dtype=float)
    recv = np.einsum("kn,mkn->mn", p, g)
    interference = recv[:, None, :] - p[None, :, :] * g
    own = p
    if probe_power is not None:
        own = np.where(p > 0.0, p, np.asarray(probe_power, dtype=float))
    snr = (own[None, :, :] * g) / (interference + scenario.noise_power)
    return np.log1p(snr) / np.log(2.0)


def solve_relaxed(coeffs, scenario: Scenario, eligible=None,
                  gap_tol=1e-8) -> tuple[np.ndarray, float]:
    """Solve the epigraph LP; returns the relaxed (M, K, N) association in
    [0, 1] and the relaxed objective (normalized units)."""
    c = np.asarray(coeffs, dtype=float)
    m, k, n = c.shape
    if eligible is None:
        eligible = np.ones((m, n), dtype=bool)
    mask = np.repeat(np.asarray(eligible, dtype=bool)[:, None, :], k, axis=1)
    nv = m * k * n + 1                      # [zeta, a...]
    a_idx = lambda mi, ki, ni: 1 + (mi * k + ki) * n + ni

    rows, rhs = [], []
    # per-UAV at most one node per slot
    for mi in range(m):
        for ni in range(n):
            row = np.zeros(nv)
            for ki in range(k):
                row[a_idx(mi, ki, ni)] = 1.0
            rows.append(row)
            rhs.append(1.0)
    # per-node at most one UAV per slot
    for ki in range(k):
        for ni in range(n):
            row = np.zeros(nv)
            for mi in range(m):
                row[a_idx(mi, ki, ni)] = 1.0
            rows.append(row)
            rhs.append(1.0)
    # epigraph: zeta <= sum of selected coefficients, per node
    scales = np.maximum(c.sum(axis=(0, 2)), 1.0)
    for ki in range(k):
        row = np.zeros(nv)
        row[0] = 1.0 / scales[ki]
        for mi in range(m):
            for ni in range(n):
                row[a_idx(mi, ki, ni)] = -c[mi, ki, ni] / scales[ki]
        rows.append(row)
        rhs.append(0.0)
    a_ub = np.vstack(rows)
    b_ub = np.asarray(rhs)

    flat_idx = np.arange(1, nv)
    blocks = [
        solver.AffineBlock(a_ub, b_ub, name="assoc"),
        solver.BoxBlock(nv, flat_idx, lo=0.0, hi=1.0, name="assoc_box"),
    ]
    # forced-zero pairs (non-hover slots of a frozen trajectory)
    forced = np.nonzero(~mask.reshape(-1))[0]
    if forced.size:
        blocks.append(solver.BoxBlock(nv, forced + 1, hi=1e-9,
                                      name="assoc_forced"))

    z0 = np.full(nv, 0.45 / max(m, k))
    z0[1:][~mask.reshape(-1)] = 1e-10
    per_k0 = np.einsum("mkn,mkn->k", c, z0[1:].reshape(m, k, n))
    z0[0] = min(float(per_k0.min()) - 1.0, -1.0)

    obj = solver.LinearObjective(-np.eye(nv)[0])          # maximize zeta
    res = solver.solve(obj, blocks, z0, gap_tol=gap_tol, name="association")
    relaxed = np.clip(res.z[1:].reshape(m, k, n), 0.0, 1.0)
    per_k = np.einsum("mkn,mkn->k", c, relaxed)
    return relaxed, float(per_k.min())


def round_and_repair(relaxed) -> np.ndarray:
    """Quantize at 0.5, then repair to a per-slot matching.

    Pairs with relaxed value >= 0.5 compete in order of (value desc, UAV
    index asc, node index asc); a pair is kept only while its UAV and its
    node are both unclaimed in that slot.
    """
    rel = np.asarray(relaxed, dtype=float)
    m, k, n = rel.shape
    a = np.zeros((m, k, n), dtype=np.int8)
    for ni in range(n):
        cand = [(-rel[mi, ki, ni], mi, ki)
                for mi in range(m) for ki in range(k)
                if rel[mi, ki, ni] >= 0.5]
        cand.sort()
        used_m, used_k = set(), set()
        for _, mi, ki in cand:
            if mi in used_m or ki in used_k:
                continue
            a[mi, ki, ni] = 1
            used_m.add(mi)
            used_k.add(ki)
    return a


def solve_association(waypoints, powers, scenario: Scenario,
                      eligible=None, probe_power=None) -> np.ndarray:
    """Full pipeline: coefficients -> relaxed LP -> rounding repair."""
    gains = average_gain_table(waypoints, scenario)
    coeffs = rate_coefficients(gains, powers, scenario, probe_power)
    relaxed, _ = solve_relaxed(coeffs, scenario, eligible=eligible)
    return round_and_repair(relaxed)
