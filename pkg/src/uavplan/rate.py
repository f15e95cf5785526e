"""SINR, per-slot rates and the max-min objective.

Rates follow the literal accounting of the model: the per-slot rate of a
node is W*log2(1+SINR) summed over the (at most one) serving UAV, totals
are plain sums of per-slot rates over the horizon (bits/s summed across
slots), and the objective is the worst total across nodes.  Interference
sums over every other node regardless of association; unassociated nodes
carry zero power in any feasible plan, so the literal sum is consistent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import Plan, Scenario


@dataclass(frozen=True)
class RateReport:
    """per_slot (K, N) in bits/s, totals (K) summed over slots, worst = min."""

    per_slot: np.ndarray
    totals: np.ndarray
    worst: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "slot", "rate_bps"])
            k, n = self.per_slot.shape
            for ki in range(k):
                for ni in range(n):
                    w.writerow([ki, ni, repr(float(self.per_slot[ki, ni]))])

    def summary(self) -> dict:
        return {
            "totals_bps": [float(x) for x in self.totals],
            "worst_bps": float(self.worst),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2))


def sinr(powers, gains_to_uav, served_k: int, noise: float) -> float:
    """SINR of node ``served_k`` at one UAV given all uplink powers."""
    p = np.asarray(powers, dtype=float)
    g = np.asarray(gains_to_uav, dtype=float)
    if np.any(g <= 0):
        raise ValueError("gains must be positive")
    signal = p[served_k] * g[served_k]
    interference = float(p @ g) - signal
    return signal / (interference + noise)


def slot_rate(association_slice, powers, gains, scenario: Scenario) -> np.ndarray:
    """Per-node rates (bits/s) for one slot.

    ``association_slice`` is (M, K) binary satisfying the one-node-per-UAV
    and one-UAV-per-node sums, ``powers`` is (K,), ``gains`` (M, K).
    """
    a = np.asarray(association_slice)
    if a.ndim != 2:
        raise ValueError("association slice must be (M, K)")
    if np.any(a.sum(axis=1) > 1) or np.any(a.sum(axis=0) > 1):
        raise ValueError("association slice violates the row/column sums")
    p = np.asarray(powers, dtype=float)
    g = np.asarray(gains, dtype=float)
    rates = np.zeros(scenario.num_k)
    for mi, ki in zip(*np.nonzero(a)):
        rates[ki] += scenario.bandwidth * np.log1p(
            sinr(p, g[mi], int(ki), scenario.noise_power)) / np.log(2.0)
    return rates


def evaluate_plan(plan: Plan, gains, scenario: Scenario) -> RateReport:
    """Rate report of a plan under (M, K, N) gains.

    ``gains`` may be instantaneous (a ChannelRealization's array) or the
    average-gain table; the accounting is identical.
    """
    g = np.asarray(gains, dtype=float)
    m, k, n = scenario.num_m, scenario.num_k, scenario.num_slots
    if g.shape != (m, k, n):
        raise ValueError(f"gains shape {g.shape}, expected {(m, k, n)}")
    per_slot = np.zeros((k, n))
    for ni in range(n):
        per_slot[:, ni] = slot_rate(plan.association[:, :, ni],
                                    plan.power[:, ni], g[:, :, ni], scenario)
    totals = per_slot.sum(axis=1)
    return RateReport(per_slot, totals, float(totals.min()))


def worst_total(association, power, gains, scenario: Scenario,
                bandwidth: float | None = None) -> float:
    """min_k of the summed rates without building a report; used by the
    offline optimizer's trace bookkeeping (same formula, lighter path)."""
    a = np.asarray(association, dtype=float)
    p = np.asarray(power, dtype=float)
    g = np.asarray(gains, dtype=float)
    w = scenario.bandwidth if bandwidth is None else bandwidth
    recv = np.einsum("kn,mkn->mn", p, g)                 # total received power
    interf = recv[:, None, :] - p[None, :, :] * g        # (M, K, N)
    with np.errstate(divide="ignore"):
        snr = (p[None, :, :] * g) / (interf + scenario.noise_power)
    rates = w * np.log1p(snr) / np.log(2.0)
    totals = np.einsum("mkn,mkn->k", a, rates)
    return float(totals.min())
