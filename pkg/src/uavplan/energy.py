"""Harvested-energy profiles and battery accounting for the ground nodes.

Nodes start the mission with an empty battery; the slot-n harvest arrives
at instant n and can be spent from that slot on (energy causality), and
the stored energy can never exceed the battery capacity.  The feasibility
checks implement the two prefix-sum constraints verbatim:

    causality:  delta * sum_{l<=n} P[l]   <=  sum_{l<=n} E[l]
    capacity:   sum_{l<=n+1} E[l] - delta * sum_{l<=n} P[l]  <=  B_max

The capacity form charges the (n+1)-th harvest before the (n+1)-th spend,
so spending is what creates headroom.  ``capacity="saturating"`` swaps in
the physical alternative where surplus harvest is wasted at the brim
instead of counted as a violation; online policies and heuristics are
audited under that mode (a saturated battery is not a planning error).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import ENERGY_TOL, Scenario, Violation


@dataclass(frozen=True)
class HarvestProfile:
    """Per-node, per-slot harvested energy in joules, (K, N)."""

    energy_per_slot: np.ndarray
    label: str = "synthetic"

    def __post_init__(self):
        e = np.asarray(self.energy_per_slot, dtype=float)
        if e.ndim != 2:
            raise ValueError("energy_per_slot must be (K, N)")
        if not np.all(np.isfinite(e)) or np.any(e < 0):
            raise ValueError("harvested energy must be finite and nonnegative")
        e.setflags(write=False)
        object.__setattr__(self, "energy_per_slot", e)

    @property
    def num_k(self) -> int:
        return self.energy_per_slot.shape[0]

    @property
    def num_slots(self) -> int:
        return self.energy_per_slot.shape[1]

    def mean_profile(self) -> "HarvestProfile":
        """Node-wise copy is already deterministic; averaging is a no-op
        hook kept for symmetry with measured data."""
        return self


@dataclass(frozen=True)
class BatteryLedger:
    """Battery trace B (K, N+1) and spend (K, N) in joules.

    B[:, n] is the residual energy after the slot-n harvest and spend;
    B[:, N] repeats the final level (no harvest or spend at instant N).
    """

    battery: np.ndarray
    spend: np.ndarray


def synth_profile(kind: str, peak_wm2: float, scenario: Scenario,
                  panel_area: float = 0.01, efficiency: float = 0.2,
                  label: str | None = None) -> HarvestProfile:
    """Deterministic closed-form irradiance trace converted to joules.

    kinds: ``constant`` (flat at peak), ``ramp`` (linear 0 -> peak),
    ``bell`` (cosine bump peaking mid-horizon).
    """
    n = scenario.num_slots
    t = (np.arange(n) + 0.5) / n
    if kind == "constant":
        irr = np.full(n, peak_wm2)
    elif kind == "ramp":
        irr = peak_wm2 * (np.arange(1, n + 1) / n)
    elif kind == "bell":
        irr = peak_wm2 * 0.5 * (1.0 - np.cos(2.0 * np.pi * t))
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    joules = irr * panel_area * efficiency * scenario.slot_seconds
    e = np.repeat(joules[None, :], scenario.num_k, axis=0)
    return HarvestProfile(e, label or kind)


def load_irradiance_csv(path, scenario: Scenario, panel_area: float = 0.01,
                        efficiency: float = 0.2,
                        label: str | None = None) -> HarvestProfile:
    """Read a ``timestamp,irradiance_wm2`` CSV and resample to the slot grid.

    Timestamps are integer/float seconds or ISO-8601; samples are averaged
    per slot (interval mean).  Gaps (slots with no samples) and negative
    irradiance raise.
    """
    if isinstance(path, (str, Path)):
        text = Path(path).read_text()
        name = str(path)
    else:
        text = path.read()
        name = "<stream>"
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if rows and rows[0] and rows[0][0].strip().lower() == "timestamp":
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{name}: no irradiance samples")
    times, values = [], []
    for r in rows:
        if len(r) < 2:
            raise ValueError(f"{name}: malformed row {r!r}")
        times.append(_parse_time(r[0]))
        values.append(float(r[1]))
    times = np.asarray(times) - min(times)
    values = np.asarray(values)
    if np.any(values < 0):
        raise ValueError(f"{name}: negative irradiance values")

    slot = scenario.slot_seconds
    idx = np.minimum((times / slot).astype(int), scenario.num_slots - 1)
    sums = np.zeros(scenario.num_slots)
    counts = np.zeros(scenario.num_slots)
    np.add.at(sums, idx, values)
    np.add.at(counts, idx, 1.0)
    missing = np.nonzero(counts == 0)[0]
    if missing.size:
        spans = [f"[{i * slot:.0f}s, {(i + 1) * slot:.0f}s)" for i in missing[:8]]
        more = "" if missing.size <= 8 else f" (+{missing.size - 8} more)"
        raise ValueError(f"{name}: no samples in slots {', '.join(spans)}{more}")
    irr_mean = sums / counts
    joules = irr_mean * panel_area * efficiency * slot
    e = np.repeat(joules[None, :], scenario.num_k, axis=0)
    return HarvestProfile(e, label or Path(name).stem)


def _parse_time(token: str) -> float:
    token = token.strip()
    try:
        return float(token)
    except ValueError:
        from datetime import datetime
        return datetime.fromisoformat(token).timestamp()


def check_energy_feasible(power, profile: HarvestProfile, scenario: Scenario,
                          tol: float = ENERGY_TOL,
                          capacity: str = "strict") -> list:
    """Return indexed violations of causality/capacity with their slack.

    ``capacity="strict"`` enforces the prefix-sum capacity constraint as
    written; ``"saturating"`` simulates a battery that wastes surplus at
    the brim and only flags spends exceeding what is physically stored.
    """
    p = np.asarray(power, dtype=float)
    e = profile.energy_per_slot
    if p.shape != e.shape:
        raise ValueError(f"power shape {p.shape} != profile shape {e.shape}")
    if p.shape[0] != scenario.num_k or p.shape[1] != scenario.num_slots:
        raise ValueError("power/profile shapes do not match the scenario")
    delta = scenario.slot_seconds
    spend = delta * np.cumsum(p, axis=1)
    harvest = np.cumsum(e, axis=1)
    out = []
    if capacity == "strict":
        gap = spend - harvest                       # causality slack
        for ki, ni in zip(*np.nonzero(gap > tol)):
            out.append(Violation("energy_causality", (int(ki), int(ni)),
                                 float(gap[ki, ni])))
        over = harvest[:, 1:] - spend[:, :-1] - scenario.battery_capacity
        for ki, ni in zip(*np.nonzero(over > tol)):
            out.append(Violation("battery_capacity", (int(ki), int(ni)),
                                 float(over[ki, ni])))
    elif capacity == "saturating":
        level = np.zeros(profile.num_k)
        for ni in range(scenario.num_slots):
            level = np.minimum(level + e[:, ni], scenario.battery_capacity)
            level = level - delta * p[:, ni]
            for ki in np.nonzero(level < -tol)[0]:
                out.append(Violation("energy_causality", (int(ki), int(ni)),
                                     float(-level[ki])))
            level = np.maximum(level, 0.0)
    else:
        raise ValueError(f"unknown capacity mode {capacity!r}")
    return out


def evolve_battery(power, profile: HarvestProfile, scenario: Scenario,
                   tol: float = ENERGY_TOL) -> BatteryLedger:
    """Battery trace for a feasible schedule; raises on the first violation
    rather than clamping silently."""
    bad = check_energy_feasible(power, profile, scenario, tol=tol)
    if bad:
        raise ValueError(f"infeasible power schedule: {bad[0]}")
    p = np.asarray(power, dtype=float)
    e = profile.energy_per_slot
    delta = scenario.slot_seconds
    level = np.cumsum(e, axis=1) - delta * np.cumsum(p, axis=1)
    assert np.all(level >= -tol) and np.all(
        level <= scenario.battery_capacity + tol)
    battery = np.concatenate([level, level[:, -1:]], axis=1)
    return BatteryLedger(battery, delta * p)
