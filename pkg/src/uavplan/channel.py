"""Air-to-ground channel: composite LOS/NLOS large-scale model with
elevation-dependent mixing and Rayleigh small-scale fading.

The large-scale loss in dB is ``20*log10(4*pi*f_c*d/c) + eta + S`` where
``eta`` depends on the LOS/NLOS draw; the LOS probability follows the
standard sigmoid in the elevation angle.  ``average_gain`` marginalizes the
LOS draw and the unit-mean fading, which factors into three positive
constants times simple functions of the squared distance and the sigmoid
denominator.  That closed form is what the offline optimizer builds its
surrogates on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelParams, Scenario


def distance(uav_xy, node_xy, altitude: float):
    """Slant range between a UAV at fixed altitude and a ground node."""
    if altitude <= 0:
        raise ValueError("altitude must be positive")
    uav_xy = np.asarray(uav_xy, dtype=float)
    node_xy = np.asarray(node_xy, dtype=float)
    horiz = np.linalg.norm(uav_xy - node_xy, axis=-1)
    return np.sqrt(horiz ** 2 + altitude ** 2)


def elevation_deg(horizontal_dist, altitude: float):
    """Elevation angle in degrees; defined as 90 at zero horizontal offset."""
    horizontal_dist = np.asarray(horizontal_dist, dtype=float)
    with np.errstate(divide="ignore"):
        ang = np.degrees(np.arctan2(altitude, horizontal_dist))
    return ang


def path_loss_db(dist, scenario: Scenario, params: ChannelParams,
                 is_los) -> np.ndarray:
    """Large-scale loss in dB for given slant ranges and LOS flags."""
    dist = np.asarray(dist, dtype=float)
    if np.any(dist <= 0):
        raise ValueError("distance must be positive")
    eta = np.where(np.asarray(is_los, dtype=bool),
                   params.eta_los_db, params.eta_nlos_db)
    fspl = 20.0 * np.log10(4.0 * np.pi * scenario.carrier_hz * dist
                           / scenario.light_speed)
    return fspl + eta + params.shadowing_db


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(linear):
    return 10.0 * np.log10(np.asarray(linear, dtype=float))


def los_probability(horizontal_dist, altitude: float,
                    params: ChannelParams) -> np.ndarray:
    """Probability of the LOS regime as a function of geometry, in (0, 1]."""
    if altitude <= 0:
        raise ValueError("altitude must be positive")
    theta = elevation_deg(horizontal_dist, altitude)
    return 1.0 / (1.0 + params.a_coef
                  * np.exp(-params.b_coef * (theta - params.a_coef)))


@dataclass(frozen=True)
class GainConstants:
    """The three positive constants of the closed-form average gain:
    avg = c1*c2 / (X*Y) + c3 / X with X = squared slant range and
    Y = the LOS-probability sigmoid denominator."""

    c1: float
    c2: float
    c3: float

    @staticmethod
    def from_scenario(scenario: Scenario,
                      params: ChannelParams | None = None) -> "GainConstants":
        p = params or scenario.channel
        base = (scenario.light_speed / (4.0 * np.pi * scenario.carrier_hz)) ** 2
        shade = 10.0 ** (-p.shadowing_db / 10.0)
        c1 = base * shade
        c2 = 10.0 ** (-p.eta_los_db / 10.0) - 10.0 ** (-p.eta_nlos_db / 10.0)
        c3 = base * shade * 10.0 ** (-p.eta_nlos_db / 10.0)
        if not (c1 > 0 and c2 > 0 and c3 > 0):
            raise ValueError("gain constants must be positive "
                             "(requires eta_nlos_db > eta_los_db)")
        return GainConstants(c1, c2, c3)


def sigmoid_denominator(horizontal_sq, altitude: float,
                        params: ChannelParams) -> np.ndarray:
    """Y = 1 + A*exp(-B*(theta_deg - A)) evaluated from squared offsets."""
    horiz = np.sqrt(np.asarray(horizontal_sq, dtype=float))
    theta = elevation_deg(horiz, altitude)
    return 1.0 + params.a_coef * np.exp(-params.b_coef * (theta - params.a_coef))


def average_gain(uav_xy, node_xy, scenario: Scenario,
                 params: ChannelParams | None = None) -> np.ndarray:
    """Expected linear power gain over LOS draws and unit-mean fading.

    Accepts broadcastable (..., 2) position arrays and returns (...).
    """
    p = params or scenario.channel
    consts = GainConstants.from_scenario(scenario, p)
    diff = np.asarray(uav_xy, dtype=float) - np.asarray(node_xy, dtype=float)
    u = np.sum(diff ** 2, axis=-1)
    x = u + scenario.altitude ** 2
    y = sigmoid_denominator(u, scenario.altitude, p)
    return consts.c1 * consts.c2 / (x * y) + consts.c3 / x


def average_gain_mixture(uav_xy, node_xy, scenario: Scenario,
                         params: ChannelParams | None = None) -> np.ndarray:
    """Same expectation written as rho_los*L_los + rho_nlos*L_nlos.

    Kept as a second algebraic route; tests pin the two forms together.
    """
    p = params or scenario.channel
    diff = np.asarray(uav_xy, dtype=float) - np.asarray(node_xy, dtype=float)
    horiz = np.linalg.norm(diff, axis=-1)
    dist = np.sqrt(horiz ** 2 + scenario.altitude ** 2)
    rho = los_probability(horiz, scenario.altitude, p)
    g_los = db_to_linear(-path_loss_db(dist, scenario, p, True))
    g_nlos = db_to_linear(-path_loss_db(dist, scenario, p, False))
    return rho * g_los + (1.0 - rho) * g_nlos


def average_gain_table(waypoints, scenario: Scenario,
                       params: ChannelParams | None = None) -> np.ndarray:
    """(M, K, N) average gains at the slot-start positions of a trajectory.

    ``waypoints`` is (M, N+1, 2); slot n uses waypoint n, matching how the
    per-slot rate is accrued while a serving UAV hovers at waypoint n.
    """
    w = np.asarray(waypoints, dtype=float)
    n = w.shape[1] - 1
    pos = w[:, :n, None, :]                       # (M, N, 1, 2)
    nodes = scenario.node_positions[None, None, :, :]
    return average_gain(pos, nodes, scenario, params).transpose(0, 2, 1)


@dataclass(frozen=True)
class FadingDraws:
    """Position-independent randomness of one channel realization.

    ``los_uniform`` decides the LOS regime against the local LOS
    probability; ``fading`` is the exponential(1) small-scale power.  Both
    are (M, K, N).  Keeping the primitives rather than materialized gains
    lets online policies evaluate the same random world at whatever
    positions they visit.
    """

    los_uniform: np.ndarray
    fading: np.ndarray

    @staticmethod
    def sample(num_m: int, num_k: int, num_slots: int, rng) -> "FadingDraws":
        shape = (num_m, num_k, num_slots)
        return FadingDraws(rng.random(shape), rng.exponential(1.0, shape))

    def gains_at(self, positions, slot: int, scenario: Scenario,
                 params: ChannelParams | None = None):
        """(M, K) instantaneous gains with UAVs at ``positions`` in ``slot``,
        plus the realized LOS flags."""
        p = params or scenario.channel
        pos = np.asarray(positions, dtype=float)[:, None, :]
        nodes = scenario.node_positions[None, :, :]
        horiz = np.linalg.norm(pos - nodes, axis=-1)
        dist = np.sqrt(horiz ** 2 + scenario.altitude ** 2)
        los = self.los_uniform[:, :, slot] < los_probability(
            horiz, scenario.altitude, p)
        loss = path_loss_db(dist, scenario, p, los)
        return db_to_linear(-loss) * self.fading[:, :, slot], los


@dataclass(frozen=True)
class ChannelRealization:
    """Instantaneous gains (M, K, N) and realized LOS flags for fixed
    waypoints."""

    gains: np.ndarray
    los_flags: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains <= 0):
            raise ValueError("gains must be strictly positive and finite")


def sample_realization(waypoints, scenario: Scenario,
                       params: ChannelParams | None = None,
                       rng=None, draws: FadingDraws | None = None
                       ) -> ChannelRealization:
    """Draw per-pair/slot instantaneous gains along fixed waypoints.

    Either pass an ``rng`` (fresh primitives are sampled) or pre-sampled
    ``draws`` for common-random-number comparisons across methods.
    """
    w = np.asarray(waypoints, dtype=float)
    m = w.shape[0]
    n = w.shape[1] - 1
    k = scenario.num_k
    if draws is None:
        if rng is None:
            rng = np.random.default_rng((params or scenario.channel).seed)
        draws = FadingDraws.sample(m, k, n, rng)
    gains = np.empty((m, k, n))
    flags = np.empty((m, k, n), dtype=bool)
    for slot in range(n):
        g, los = draws.gains_at(w[:, slot, :], slot, scenario, params)
        gains[:, :, slot] = g
        flags[:, :, slot] = los
    return ChannelRealization(gains, flags)
