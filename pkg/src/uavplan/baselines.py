"""Heuristic comparison policies: fixed flight plans, nearest-node
association, and battery-draining power control.

The model only lets a UAV transmit while hovering, so the fixed flight
plans interleave movement and hover slots (move on even slots, pause on
odd ones); association is granted only on the pauses.  Without the
cadence a closed constant-speed curve could never serve anyone.
Curve radii and centers are derived from the scenario geometry and can
be overridden; the defaults inscribe the published 600 m x 600 m layout.
"""

from __future__ import annotations

import numpy as np

from .energy import HarvestProfile
from .scenario import GEOM_TOL, Scenario

HEURISTIC_KINDS = ("UC", "CC", "SLC")
SPEED_MARGIN = 0.98          # fraction of the speed limit used by chords


class GeometryError(ValueError):
    pass


def _resample_closed_path(segments, n_points: int) -> np.ndarray:
    """Equally spaced samples along a closed polyline given as (V, 2)
    vertices (last implicitly connects to first)."""
    pts = np.asarray(segments, dtype=float)
    closed = np.vstack([pts, pts[:1]])
    seg = np.diff(closed, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    total = cum[-1]
    s = np.linspace(0.0, total, n_points, endpoint=False)
    idx = np.searchsorted(cum, s, side="right") - 1
    idx = np.clip(idx, 0, len(lengths) - 1)
    frac = (s - cum[idx]) / np.where(lengths[idx] > 0, lengths[idx], 1.0)
    return closed[idx] + frac[:, None] * seg[idx]


def _cadence_waypoints(vertices, scenario: Scenario) -> np.ndarray:
    """(N+1, 2) waypoints visiting ``vertices`` on even (move) slots and
    hovering on odd slots; starts and ends at vertices[0]."""
    n = scenario.num_slots
    n_moves = (n + 1) // 2
    path = _resample_closed_path(vertices, n_moves)
    step_cap = SPEED_MARGIN * scenario.max_step
    hops = np.linalg.norm(np.diff(np.vstack([path, path[:1]]), axis=0), axis=1)
    if np.any(hops > step_cap + 1e-12):
        total = hops.sum()
        need = int(np.ceil(total / step_cap))
        raise GeometryError(
            f"path needs {need} move slots but only {n_moves} available; "
            f"increase num_slots to at least {2 * need}")
    out = np.empty((n + 1, 2))
    out[0] = path[0]
    vi = 0
    for ni in range(n):
        if ni % 2 == 0 and vi + 1 <= n_moves:
            vi += 1
            out[ni + 1] = path[vi % n_moves]
        else:
            out[ni + 1] = out[ni]
    out[n] = path[0]
    # closing the loop exactly may need the final hop; re-check speed
    if np.linalg.norm(out[n] - out[n - 1]) > scenario.max_step + 1e-12:
        raise GeometryError("cannot close the loop within the speed limit; "
                            "increase num_slots")
    return out


def _circle_vertices(center, radius, start_angle, n_vertices, direction=1.0):
    ang = start_angle + direction * 2.0 * np.pi * np.arange(n_vertices) / n_vertices
    return np.asarray(center) + radius * np.stack(
        [np.cos(ang), np.sin(ang)], axis=1)


def _axis_frame(scenario: Scenario):
    """Unit vector from UAV 1 to UAV 2 and the separation distance."""
    d = scenario.uav_initials[1] - scenario.uav_initials[0]
    dist = float(np.linalg.norm(d))
    return d / dist, dist


def heuristic_trajectory(kind: str, scenario: Scenario,
                         radius: float | None = None) -> np.ndarray:
    """Fixed two-UAV flight plan of the given kind, (2, N+1, 2).

    UC: two disjoint circles.  CC: two interlocking circles kept apart by
    an antiphase offset.  SLC: a straight ingress, a small circle, and the
    egress back, mirrored for the second UAV.
    """
    if kind not in HEURISTIC_KINDS:
        raise ValueError(f"unknown heuristic kind {kind!r}")
    if scenario.num_m != 2:
        raise GeometryError("heuristic flight plans are drawn for exactly "
                            f"two UAVs (scenario has {scenario.num_m})")
    u, dist = _axis_frame(scenario)
    n_moves = (scenario.num_slots + 1) // 2
    ini = scenario.uav_initials

    if kind == "UC":
        r = radius if radius is not None else 0.2 * dist
        if dist - 4.0 * r < scenario.d_min:
            raise GeometryError("UC circles cannot keep the safety distance; "
                                "reduce the radius")
        v1 = _circle_vertices(ini[0] + r * u, r, _angle_of(-u), n_moves)
        v2 = _circle_vertices(ini[1] - r * u, r, _angle_of(u), n_moves)
    elif kind == "CC":
        r = radius if radius is not None else 0.3 * dist
        if abs(4.0 * r - dist) < scenario.d_min:
            raise GeometryError("CC circles cannot keep the safety distance; "
                                "adjust the radius")
        # same angular rate with antiphase starting points: the pairwise
        # distance stays within [|4r - dist|, dist] over the revolution
        v1 = _circle_vertices(ini[0] + r * u, r, _angle_of(-u), n_moves)
        v2 = _circle_vertices(ini[1] - r * u, r, _angle_of(u), n_moves)
    else:  # SLC
        r = radius if radius is not None else dist / 12.0
        reach = 0.25 * dist
        gate1 = ini[0] + (reach - r) * u
        c1 = ini[0] + reach * u
        gate2 = ini[1] - (reach - r) * u
        c2 = ini[1] - reach * u
        if dist - 2.0 * (reach + r) < scenario.d_min:
            raise GeometryError("SLC legs cannot keep the safety distance")
        circ = max(8, n_moves - 2)
        v1 = np.vstack([ini[0], gate1,
                        _circle_vertices(c1, r, _angle_of(-u), circ)[1:]])
        v2 = np.vstack([ini[1], gate2,
                        _circle_vertices(c2, r, _angle_of(u), circ)[1:]])

    w = np.stack([_cadence_waypoints(v1, scenario),
                  _cadence_waypoints(v2, scenario)])
    _check_separation(w, scenario)
    return w


def _angle_of(v) -> float:
    return float(np.arctan2(v[1], v[0]))


def _check_separation(waypoints, scenario: Scenario) -> None:
    n = scenario.num_slots
    for mi in range(waypoints.shape[0]):
        for mj in range(mi + 1, waypoints.shape[0]):
            d = np.linalg.norm(waypoints[mi, 1:n] - waypoints[mj, 1:n], axis=1)
            if np.any(d < scenario.d_min - GEOM_TOL):
                raise GeometryError(
                    f"constructed plan breaks the safety distance "
                    f"(min {d.min():.1f} m between UAVs {mi} and {mj})")


def default_circles(scenario: Scenario) -> np.ndarray:
    """Feasible closed trajectories for any M; equals UC when M = 2.

    Used to seed the offline optimizer; each UAV gets a circle pulled
    toward the node centroid with the same move/hover cadence.
    """
    if scenario.num_m == 2:
        return heuristic_trajectory("UC", scenario)
    n_moves = (scenario.num_slots + 1) // 2
    centroid = scenario.node_positions.mean(axis=0)
    out = []
    for mi in range(scenario.num_m):
        ini = scenario.uav_initials[mi]
        to_c = centroid - ini
        reach = float(np.linalg.norm(to_c))
        u = to_c / reach if reach > 1e-9 else np.array([1.0, 0.0])
        r = min(0.25 * reach if reach > 1e-9 else 50.0,
                0.45 * SPEED_MARGIN * scenario.max_step * n_moves / np.pi)
        r = max(r, 1.0)
        verts = _circle_vertices(ini + r * u, r, _angle_of(-u), n_moves)
        out.append(_cadence_waypoints(verts, scenario))
    w = np.stack(out)
    _check_separation(w, scenario)
    return w


def nearest_association(waypoints, scenario: Scenario) -> np.ndarray:
    """Greedy nearest-node association, granted only on hover slots.

    Conflicts go to the closer UAV (ties to the lower UAV index); the
    loser takes its next-nearest unclaimed node.  Output satisfies the
    one-node-per-UAV / one-UAV-per-node sums and the hover coupling.
    """
    w = np.asarray(waypoints, dtype=float)
    m, k, n = w.shape[0], scenario.num_k, scenario.num_slots
    a = np.zeros((m, k, n), dtype=np.int8)
    steps = np.linalg.norm(np.diff(w, axis=1), axis=-1)
    for ni in range(n):
        hovering = [mi for mi in range(m) if steps[mi, ni] <= GEOM_TOL]
        dists = {mi: np.linalg.norm(scenario.node_positions - w[mi, ni], axis=1)
                 for mi in hovering}
        taken: set[int] = set()
        unassigned = list(hovering)
        while unassigned:
            # each UAV proposes its nearest unclaimed node; best proposal wins
            proposals = []
            for mi in unassigned:
                order = np.argsort(dists[mi], kind="stable")
                cand = next((ki for ki in order if ki not in taken), None)
                if cand is not None:
                    proposals.append((float(dists[mi][cand]), mi, int(cand)))
            if not proposals:
                break
            proposals.sort()
            _, mi, ki = proposals[0]
            a[mi, ki, ni] = 1
            taken.add(ki)
            unassigned.remove(mi)
    return a


def exhaustive_power(profile: HarvestProfile, association,
                     scenario: Scenario) -> np.ndarray:
    """Drain the full (saturating) battery whenever the node is served.

    Unassociated nodes transmit nothing; their batteries sit at the brim
    and the surplus harvest is wasted, which is physical saturation, not
    a schedule violation.
    """
    a = np.asarray(association)
    k, n = scenario.num_k, scenario.num_slots
    served = a.sum(axis=0) > 0                     # (K, N)
    p = np.zeros((k, n))
    level = np.zeros(k)
    for ni in range(n):
        level = np.minimum(level + profile.energy_per_slot[:, ni],
                           scenario.battery_capacity)
        drain = served[:, ni]
        p[drain, ni] = level[drain] / scenario.slot_seconds
        level[drain] = 0.0
    return p
