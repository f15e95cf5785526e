"""Problem instances and joint solutions for multi-UAV uplink data collection.

A :class:`Scenario` holds the immutable geometry, radio constants and time
discretization shared by every other module.  A :class:`Plan` is a candidate
joint solution (waypoints, UAV-node association, uplink power schedule);
``validate_plan`` audits it against every hard constraint of the model.
All quantities are SI internally (meters, seconds, watts, joules, Hz);
dB/dBm appear only at the config boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GEOM_TOL = 1e-6       # meters, for speed/separation/hover audits
ENERGY_TOL = 1e-9     # joules, for causality/capacity audits


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError("watts must be positive for dBm conversion")
    return 10.0 * np.log10(watts * 1e3)


@dataclass(frozen=True)
class ChannelParams:
    """Environment constants of the LOS/NLOS air-to-ground channel."""

    a_coef: float = 9.61          # sigmoid offset of the LOS probability
    b_coef: float = 0.1592        # sigmoid slope of the LOS probability
    eta_los_db: float = 1.0       # excess loss in LOS, dB
    eta_nlos_db: float = 20.0     # excess loss in NLOS, dB
    shadowing_db: float = 0.0     # deterministic shadowing term, dB
    seed: int = 0                 # small-scale fading stream

    def __post_init__(self):
        if self.a_coef <= 0 or self.b_coef <= 0:
            raise ValueError("LOS sigmoid coefficients must be positive")
        if self.eta_los_db < 0 or self.eta_nlos_db <= self.eta_los_db:
            raise ValueError("need eta_nlos_db > eta_los_db >= 0")


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance.

    ``node_positions`` is (K, 2) and ``uav_initials`` (M, 2), both in meters.
    ``num_slots`` splits ``horizon_seconds`` into N equal slots; waypoint n
    is the position at slot boundary n, so trajectories carry N+1 points.
    """

    node_positions: np.ndarray
    uav_initials: np.ndarray
    altitude: float = 150.0
    horizon_seconds: float = 6000.0
    num_slots: int = 100
    v_max: float = 1.0
    d_min: float = 100.0
    bandwidth: float = 5e6
    carrier_hz: float = 2.4e9
    light_speed: float = 3.0e8
    noise_power: float = dbm_to_watts(-80.0)
    battery_capacity: float = 1500.0
    channel: ChannelParams = field(default_factory=ChannelParams)

    def __post_init__(self):
        nodes = np.asarray(self.node_positions, dtype=float).reshape(-1, 2)
        uavs = np.asarray(self.uav_initials, dtype=float).reshape(-1, 2)
        nodes.setflags(write=False)
        uavs.setflags(write=False)
        object.__setattr__(self, "node_positions", nodes)
        object.__setattr__(self, "uav_initials", uavs)
        if self.num_k < 1 or self.num_m < 1:
            raise ValueError("need at least one node and one UAV")
        if self.num_slots < 1:
            raise ValueError("num_slots must be >= 1")
        for name in ("altitude", "horizon_seconds", "v_max", "d_min",
                     "bandwidth", "carrier_hz", "light_speed",
                     "noise_power", "battery_capacity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.num_m > 1:
            dists = np.linalg.norm(uavs[:, None, :] - uavs[None, :, :], axis=-1)
            iu = np.triu_indices(self.num_m, k=1)
            if np.any(dists[iu] == 0.0):
                raise ValueError("uav_initials must be pairwise distinct")
        extent = self._workspace_extent()
        if self.num_m > 1 and self.d_min >= extent:
            raise ValueError("d_min must be smaller than the workspace extent")

    def _workspace_extent(self) -> float:
        pts = np.vstack([self.node_positions, self.uav_initials])
        span = pts.max(axis=0) - pts.min(axis=0)
        return float(np.hypot(*span)) if np.any(span > 0) else float("inf")

    @property
    def num_k(self) -> int:
        return self.node_positions.shape[0]

    @property
    def num_m(self) -> int:
        return self.uav_initials.shape[0]

    @property
    def slot_seconds(self) -> float:
        return self.horizon_seconds / self.num_slots

    @property
    def max_step(self) -> float:
        """Largest admissible per-slot displacement, meters."""
        return self.v_max * self.slot_seconds

    def replace(self, **kwargs) -> "Scenario":
        from dataclasses import replace
        return replace(self, **kwargs)


@dataclass(frozen=True)
class Plan:
    """Joint solution: waypoints (M, N+1, 2), association (M, K, N) in {0,1},
    uplink power (K, N) in watts."""

    waypoints: np.ndarray
    association: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float)
        a = np.asarray(self.association)
        p = np.asarray(self.power, dtype=float)
        for arr in (w, a, p):
            arr.setflags(write=False)
        object.__setattr__(self, "waypoints", w)
        object.__setattr__(self, "association", a.astype(np.int8))
        object.__setattr__(self, "power", p)

    @staticmethod
    def idle(scenario: Scenario) -> "Plan":
        """All UAVs parked at their initials, nothing transmitted."""
        m, k, n = scenario.num_m, scenario.num_k, scenario.num_slots
        w = np.repeat(scenario.uav_initials[:, None, :], n + 1, axis=1)
        return Plan(w, np.zeros((m, k, n), dtype=np.int8), np.zeros((k, n)))


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: tuple
    magnitude: float

    def __str__(self):
        return f"{self.constraint}{self.index}: {self.magnitude:.6g}"


class DimensionError(ValueError):
    """Plan arrays do not match the scenario; distinct from soft violations."""


def _check_shapes(scenario: Scenario, plan: Plan) -> None:
    m, k, n = scenario.num_m, scenario.num_k, scenario.num_slots
    if plan.waypoints.shape != (m, n + 1, 2):
        raise DimensionError(
            f"waypoints shape {plan.waypoints.shape}, expected {(m, n + 1, 2)}")
    if plan.association.shape != (m, k, n):
        raise DimensionError(
            f"association shape {plan.association.shape}, expected {(m, k, n)}")
    if plan.power.shape != (k, n):
        raise DimensionError(
            f"power shape {plan.power.shape}, expected {(k, n)}")


def validate_plan(scenario: Scenario, plan: Plan, tol: float = GEOM_TOL,
                  profile=None, tol_energy: float = ENERGY_TOL) -> list:
    """Audit a plan; returns a list of :class:`Violation` (empty iff feasible).

    Checks endpoints, speed, pairwise separation, association structure,
    hover-while-serving coupling and power sign/support.  If ``profile`` (a
    HarvestProfile) is given, energy causality and battery-capacity checks
    are delegated to :mod:`uavplan.energy` and appended.
    """
    _check_shapes(scenario, plan)
    out = []
    w, a, p = plan.waypoints, plan.association, plan.power
    m, n = scenario.num_m, scenario.num_slots

    end_err = np.linalg.norm(w[:, [0, n], :]
                             - scenario.uav_initials[:, None, :], axis=-1)
    for mi in range(m):
        for j, which in ((0, 0), (1, n)):
            if end_err[mi, j] > tol:
                out.append(Violation("endpoint", (mi, which), float(end_err[mi, j])))

    steps = np.linalg.norm(np.diff(w, axis=1), axis=-1)
    speed = steps / scenario.slot_seconds
    for mi, ni in zip(*np.nonzero(speed > scenario.v_max + tol)):
        out.append(Violation("speed", (int(mi), int(ni)),
                             float(speed[mi, ni] - scenario.v_max)))

    # separation applies at interior instants only (endpoints are pinned)
    for mi in range(m):
        for mj in range(mi + 1, m):
            d = np.linalg.norm(w[mi, 1:n] - w[mj, 1:n], axis=-1)
            for ni in np.nonzero(d < scenario.d_min - tol)[0]:
                out.append(Violation("separation", (mi, mj, int(ni) + 1),
                                     float(scenario.d_min - d[ni])))

    if not np.isin(a, (0, 1)).all():
        bad = np.argwhere(~np.isin(a, (0, 1)))[0]
        out.append(Violation("association_binary", tuple(int(x) for x in bad), 1.0))
    row = a.sum(axis=1)           # (M, N), at most one node per UAV
    for mi, ni in zip(*np.nonzero(row > 1)):
        out.append(Violation("uav_row_sum", (int(mi), int(ni)), float(row[mi, ni] - 1)))
    col = a.sum(axis=0)           # (K, N), at most one UAV per node
    for ki, ni in zip(*np.nonzero(col > 1)):
        out.append(Violation("node_col_sum", (int(ki), int(ni)), float(col[ki, ni] - 1)))

    serving = a.any(axis=1)       # (M, N)
    hover_err = serving * steps
    for mi, ni in zip(*np.nonzero(hover_err > tol)):
        out.append(Violation("hover_while_serving", (int(mi), int(ni)),
                             float(hover_err[mi, ni])))

    for ki, ni in zip(*np.nonzero(p < -tol)):
        out.append(Violation("power_negative", (int(ki), int(ni)), float(-p[ki, ni])))
    unassoc = ~a.any(axis=0)      # (K, N)
    ghost = unassoc & (p > tol)
    for ki, ni in zip(*np.nonzero(ghost)):
        out.append(Violation("power_without_association", (int(ki), int(ni)),
                             float(p[ki, ni])))

    if profile is not None:
        from . import energy
        out.extend(energy.check_energy_feasible(p, profile, scenario,
                                                tol=tol_energy))
    return out


# Repo default node layouts.  The K=6 layout follows the published
# experiment geometry; other K are repository choices documented in the
# README and overridable via config.
DEFAULT_NODE_LAYOUTS = {
    2: [[200.0, 300.0], [400.0, 300.0]],
    3: [[200.0, 200.0], [400.0, 300.0], [300.0, 450.0]],
    4: [[200.0, 200.0], [200.0, 400.0], [400.0, 200.0], [400.0, 400.0]],
    5: [[200.0, 200.0], [200.0, 400.0], [400.0, 200.0], [400.0, 400.0],
        [300.0, 300.0]],
    6: [[200.0, 200.0], [200.0, 400.0], [400.0, 200.0], [400.0, 400.0],
        [200.0, 300.0], [300.0, 300.0]],
}

DEFAULT_UAV_INITIALS = [[0.0, 300.0], [600.0, 300.0]]


def load_scenario(source=None, num_nodes: int = 3) -> Scenario:
    """Build a Scenario from a JSON document (path, JSON text, or dict).

    Missing fields take the default settings: a 600 m x 600 m area, two
    UAVs starting on opposite edges, H = 150 m, a 100-minute horizon in
    100 slots, f_c = 2.4 GHz, W = 5 MHz, V_max = 1 m/s, D_min = 100 m,
    noise -80 dBm and a 1500 J node battery.  ``num_nodes`` selects a
    default node layout when the config does not supply positions.
    """
    cfg = {}
    if source is None:
        pass
    elif isinstance(source, dict):
        cfg = dict(source)
    else:
        text = str(source)
        path = Path(text)
        if path.suffix == ".json" or path.exists():
            text = path.read_text()
        try:
            cfg = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ValueError(f"could not parse scenario config: {exc}") from exc

    k = int(cfg.get("num_nodes", num_nodes))
    if "node_positions" in cfg:
        nodes = cfg["node_positions"]
    elif k in DEFAULT_NODE_LAYOUTS:
        nodes = DEFAULT_NODE_LAYOUTS[k]
    else:
        raise ValueError(f"no default node layout for K={k}; "
                         "supply node_positions in the config")

    ch_cfg = cfg.get("channel", {})
    channel = ChannelParams(
        a_coef=ch_cfg.get("a_coef", 9.61),
        b_coef=ch_cfg.get("b_coef", 0.1592),
        eta_los_db=ch_cfg.get("eta_los_db", 1.0),
        eta_nlos_db=ch_cfg.get("eta_nlos_db", 20.0),
        shadowing_db=ch_cfg.get("shadowing_db", 0.0),
        seed=ch_cfg.get("seed", 0),
    )
    noise_w = (dbm_to_watts(float(cfg["noise_dbm"])) if "noise_dbm" in cfg
               else float(cfg.get("noise_power_w", dbm_to_watts(-80.0))))
    try:
        return Scenario(
            node_positions=np.asarray(nodes, dtype=float),
            uav_initials=np.asarray(
                cfg.get("uav_initials", DEFAULT_UAV_INITIALS), dtype=float),
            altitude=float(cfg.get("altitude", 150.0)),
            horizon_seconds=float(cfg.get("horizon_seconds", 6000.0)),
            num_slots=int(cfg.get("num_slots", 100)),
            v_max=float(cfg.get("v_max", 1.0)),
            d_min=float(cfg.get("d_min", 100.0)),
            bandwidth=float(cfg.get("bandwidth", 5e6)),
            carrier_hz=float(cfg.get("carrier_hz", 2.4e9)),
            light_speed=float(cfg.get("light_speed", 3.0e8)),
            noise_power=noise_w,
            battery_capacity=float(cfg.get("battery_capacity", 1500.0)),
            channel=channel,
        )
    except ValueError as exc:
        raise ValueError(f"invalid scenario config: {exc}") from exc
