"""First-order surrogates of the average-channel rate around a reference.

The average rate of a served node splits into a "signal" log term
log2(total received power + noise) and an "interference" term
-log2(interference power + noise).  Both are non-concave in the UAV
positions; this module builds the concave lower bounds used by the
trajectory restriction:

* the signal term is convex in (X, Y) = (squared slant range, LOS sigmoid
  denominator), so its first-order expansion in those variables is a
  global lower bound; the Y that remains is replaced by a convex upper
  bound built from the elevation-angle expansion, which keeps the
  composite concave because the Y-coefficients are nonpositive;
* the interference term is concave in auxiliary variables bounded by
  linearizations of the geometry, and substituting the bounds tightly
  yields a concave function of position alone.

Every builder also exposes plain evaluators so the test-suite can check
tangency at the reference and the bound direction on random geometry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import GainConstants, average_gain, sigmoid_denominator
from ..scenario import Scenario

LN2 = float(np.log(2.0))
DEG = 180.0 / np.pi
MIN_REF_OFFSET = 1e-3     # meters; references closer to a node are nudged


@dataclass(frozen=True)
class SurrogatePoint:
    """Reference solution plus the derived per-(UAV, node, slot) tables.

    ``u_ref``/``x_ref``/``y_ref``/``theta_ref`` are (M, K, N): squared
    horizontal offset, squared slant range, LOS sigmoid denominator and
    elevation in degrees, all at the (possibly nudged) reference
    waypoints.  ``q_eff`` is the nudged copy of the reference trajectory
    actually expanded around.
    """

    q_ref: np.ndarray
    p_ref: np.ndarray
    a_ref: np.ndarray
    q_eff: np.ndarray
    u_ref: np.ndarray
    x_ref: np.ndarray
    y_ref: np.ndarray
    theta_ref: np.ndarray

    @staticmethod
    def at(q_ref, p_ref, a_ref, scenario: Scenario) -> "SurrogatePoint":
        q_ref = np.asarray(q_ref, dtype=float)
        p_ref = np.asarray(p_ref, dtype=float)
        a_ref = np.asarray(a_ref)
        q_eff = q_ref.copy()
        nodes = scenario.node_positions
        n = scenario.num_slots
        # expansions are singular at zero horizontal offset; nudge those
        # reference waypoints east by a millimeter-scale step
        for mi in range(q_eff.shape[0]):
            for ni in range(n):
                off = np.linalg.norm(q_eff[mi, ni] - nodes, axis=-1)
                while np.any(off < MIN_REF_OFFSET):
                    q_eff[mi, ni, 0] += MIN_REF_OFFSET
                    off = np.linalg.norm(q_eff[mi, ni] - nodes, axis=-1)
        diff = q_eff[:, :n, None, :] - nodes[None, None, :, :]
        u = np.sum(diff ** 2, axis=-1).transpose(0, 2, 1)     # (M, K, N)
        x = u + scenario.altitude ** 2
        theta = DEG * np.arctan2(scenario.altitude, np.sqrt(u))
        y = sigmoid_denominator(u.reshape(-1), scenario.altitude,
                                scenario.channel).reshape(u.shape)
        for arr in (q_eff, u, x, y, theta):
            arr.setflags(write=False)
        return SurrogatePoint(q_ref, p_ref, a_ref, q_eff, u, x, y, theta)


# ---------------------------------------------------------------------------
# signal term: log2(sum_i P_i * avg_gain_i + noise)


def signal_term_true(q_points, p_slot, scenario: Scenario) -> np.ndarray:
    """log2(sum_i P_i * average_gain_i(q) + noise), vectorized over q."""
    q = np.asarray(q_points, dtype=float)
    gains = average_gain(q[..., None, :], scenario.node_positions, scenario)
    total = gains @ np.asarray(p_slot, dtype=float) + scenario.noise_power
    return np.log2(total)


def taylor_tables(point: SurrogatePoint, scenario: Scenario):
    """Coefficient tables of the signal-term expansion.

    Returns (o_coef, g_coef, const_log) with shapes (M, K, N), (M, K, N)
    and (M, N).  ``o_coef``/``g_coef`` are the partial derivatives of the
    signal term with respect to the squared slant range and the sigmoid
    denominator at the reference; both are nonpositive.
    """
    consts = GainConstants.from_scenario(scenario)
    p = point.p_ref[None, :, :]                                # (1, K, N)
    gain_ref = consts.c1 * consts.c2 / (point.x_ref * point.y_ref) \
        + consts.c3 / point.x_ref
    denom = np.sum(p * gain_ref, axis=1) + scenario.noise_power  # (M, N)
    o_coef = -p * (consts.c1 * consts.c2 + consts.c3 * point.y_ref) \
        / (point.x_ref ** 2 * point.y_ref * LN2 * denom[:, None, :])
    g_coef = -p * consts.c1 * consts.c2 \
        / (point.x_ref * point.y_ref ** 2 * LN2 * denom[:, None, :])
    return o_coef, g_coef, np.log2(denom)


def sigmoid_upper_coeffs(point: SurrogatePoint, scenario: Scenario):
    """Per-(m, i, n) pieces of the convex upper bound on the sigmoid
    denominator: Y_up(u) = 1 + A*exp(-B*(alpha - beta*(u - u_ref) - A)).

    Returns (alpha_deg, beta) where beta > 0 is the degree-per-square-meter
    slope of the elevation expansion at the reference offset.
    """
    h = scenario.altitude
    beta = DEG * h / (2.0 * np.sqrt(point.u_ref) * (h ** 2 + point.u_ref))
    return point.theta_ref, beta


def sigmoid_upper_value(u, u_ref, alpha_deg, beta, params) -> np.ndarray:
    """Evaluate Y_up at squared offsets ``u`` (overflow-safe: far outside
    the trust region the bound explodes to +inf, which is still an upper
    bound)."""
    expo = -params.b_coef * (alpha_deg - beta * (u - u_ref) - params.a_coef)
    with np.errstate(over="ignore"):
        return 1.0 + params.a_coef * np.exp(expo)


@dataclass(frozen=True)
class SignalSurrogate:
    """Concave lower bound of the signal term for one (UAV, slot) pair,
    as a function of that UAV's waypoint."""

    const: float
    o_coef: np.ndarray          # (K,)
    g_coef: np.ndarray          # (K,)
    u_ref: np.ndarray           # (K,)
    y_ref: np.ndarray           # (K,)
    alpha_deg: np.ndarray       # (K,)
    beta: np.ndarray            # (K,)
    nodes: np.ndarray           # (K, 2)
    b_coef: float
    a_coef: float

    def value(self, q_points) -> np.ndarray:
        q = np.asarray(q_points, dtype=float)
        u = np.sum((q[..., None, :] - self.nodes) ** 2, axis=-1)
        expo = -self.b_coef * (self.alpha_deg - self.beta * (u - self.u_ref)
                               - self.a_coef)
        with np.errstate(over="ignore"):
            w = self.a_coef * np.exp(expo)
        y_up = 1.0 + w
        terms = self.o_coef * (u - self.u_ref) + self.g_coef * (y_up - self.y_ref)
        # g_coef of a zero-power interferer is exactly 0; make 0 * inf = 0
        terms = np.where(np.isnan(terms), 0.0, terms)
        return self.const + np.sum(terms, axis=-1)

    def grad_hess(self, q):
        """Gradient (2,) and Hessian (2, 2) at a single waypoint."""
        q = np.asarray(q, dtype=float)
        diff = q - self.nodes                                  # (K, 2)
        u = np.sum(diff ** 2, axis=-1)
        w = self.a_coef * np.exp(
            -self.b_coef * (self.alpha_deg - self.beta * (u - self.u_ref)
                            - self.a_coef))
        lin = self.o_coef + self.g_coef * w * self.b_coef * self.beta
        grad = 2.0 * (lin @ diff)
        hess = 2.0 * lin.sum() * np.eye(2)
        curv = 4.0 * self.g_coef * w * (self.b_coef * self.beta) ** 2
        hess += (diff.T * curv) @ diff
        return grad, hess


def build_signal_surrogate(point: SurrogatePoint, scenario: Scenario,
                           m: int, n: int) -> SignalSurrogate:
    o_coef, g_coef, const_log = taylor_tables(point, scenario)
    alpha, beta = sigmoid_upper_coeffs(point, scenario)
    p = scenario.channel
    return SignalSurrogate(
        const=float(const_log[m, n]),
        o_coef=o_coef[m, :, n].copy(), g_coef=g_coef[m, :, n].copy(),
        u_ref=point.u_ref[m, :, n].copy(), y_ref=point.y_ref[m, :, n].copy(),
        alpha_deg=alpha[m, :, n].copy(), beta=beta[m, :, n].copy(),
        nodes=scenario.node_positions, b_coef=p.b_coef, a_coef=p.a_coef)


# ---------------------------------------------------------------------------
# interference term: -log2(sum_{i != k} P_i * avg_gain_i + noise)


def interference_term_true(q_points, p_slot, served_k: int,
                           scenario: Scenario) -> np.ndarray:
    q = np.asarray(q_points, dtype=float)
    gains = average_gain(q[..., None, :], scenario.node_positions, scenario)
    p = np.asarray(p_slot, dtype=float).copy()
    p[served_k] = 0.0
    return -np.log2(gains @ p + scenario.noise_power)


def interference_term_xy(x_tilde, y_tilde, p_slot, served_k: int,
                         scenario: Scenario) -> np.ndarray:
    """The raw auxiliary-variable form: -log2(sum P_i * (c1 c2/(X Y) +
    c3/X) + noise).  Concave and nondecreasing in each auxiliary."""
    consts = GainConstants.from_scenario(scenario)
    x = np.asarray(x_tilde, dtype=float)
    y = np.asarray(y_tilde, dtype=float)
    p = np.asarray(p_slot, dtype=float).copy()
    p[served_k] = 0.0
    gain_up = consts.c1 * consts.c2 / (x * y) + consts.c3 / x
    return -np.log2(gain_up @ p + scenario.noise_power)


@dataclass(frozen=True)
class InterferenceSurrogate:
    """Concave lower bound of the interference term for one
    (UAV, served-node, slot), as a function of the UAV waypoint with the
    auxiliary variables substituted at their tight values.

    The substitution chain per interferer i:
        u_tilde = u_ref + 2 d_i . (q - q_ref)      (affine)
        theta   = atan-elevation(u_tilde)           (convex, decreasing)
        y_tilde = y_ref - slope * (theta - alpha)   (affine in theta)
    and the bound requires u_tilde >= u_floor, where u_floor combines the
    positivity margin with the y_tilde >= 1 solver bound.
    """

    q_ref: np.ndarray           # (2,)
    d_vec: np.ndarray           # (I, 2), reference minus node
    u_ref: np.ndarray           # (I,)
    y_ref: np.ndarray           # (I,)
    alpha_deg: np.ndarray       # (I,)
    slope: np.ndarray           # (I,) positive coefficient of (theta-alpha)
    p_interf: np.ndarray        # (I,) interferer powers
    u_floor: np.ndarray         # (I,)
    altitude: float
    noise: float
    c1c2: float
    c3: float

    def u_affine(self, q_points) -> np.ndarray:
        q = np.asarray(q_points, dtype=float)
        return self.u_ref + 2.0 * np.tensordot(q - self.q_ref, self.d_vec.T,
                                               axes=1)

    def _xy(self, u):
        x = u + self.altitude ** 2
        theta = DEG * np.arctan2(self.altitude, np.sqrt(np.maximum(u, 0.0)))
        y = self.y_ref - self.slope * (theta - self.alpha_deg)
        return x, y

    def value(self, q_points) -> np.ndarray:
        """-log2 of the bounded interference; nan outside the domain
        u_affine > 0 (callers keep iterates inside via u_floor)."""
        u = self.u_affine(q_points)
        with np.errstate(invalid="ignore", divide="ignore"):
            x, y = self._xy(u)
            gain_up = self.c1c2 / (x * y) + self.c3 / x
            total = gain_up @ self.p_interf + self.noise
            return -np.log2(total)

    def chain_derivs(self, u):
        """Per-interferer (h, h', h'') of the bounded gain wrt u_tilde."""
        h_alt = self.altitude
        x = u + h_alt ** 2
        root = np.sqrt(u)
        theta = DEG * np.arctan2(h_alt, root)
        tp = -DEG * h_alt / (2.0 * root * (h_alt ** 2 + u))
        tpp = DEG * h_alt * (3.0 * u + h_alt ** 2) \
            / (4.0 * u ** 1.5 * (h_alt ** 2 + u) ** 2)
        y = self.y_ref - self.slope * (theta - self.alpha_deg)
        yp = -self.slope * tp
        ypp = -self.slope * tpp
        n1 = self.c1c2 + self.c3 * y
        h_val = n1 / (x * y)
        r = self.c3 * yp / n1 - 1.0 / x - yp / y
        rp = (self.c3 * ypp / n1 - (self.c3 * yp / n1) ** 2
              + 1.0 / x ** 2 - ypp / y + (yp / y) ** 2)
        return h_val, h_val * r, h_val * (r ** 2 + rp)

    def grad_hess(self, q):
        u = self.u_affine(np.asarray(q, dtype=float))
        h_val, h_p, h_pp = self.chain_derivs(u)
        total = h_val @ self.p_interf + self.noise
        grad_d = 2.0 * (self.d_vec.T * (self.p_interf * h_p)).T   # per-i (2,)
        g_total = grad_d.sum(axis=0)
        grad = -g_total / (total * LN2)
        hess_d = 4.0 * (self.d_vec.T * (self.p_interf * h_pp)) @ self.d_vec
        hess = (np.outer(g_total, g_total) / total ** 2
                - hess_d / total) / LN2
        return grad, hess


def build_interference_surrogate(point: SurrogatePoint, scenario: Scenario,
                                 m: int, k: int, n: int,
                                 u_floor_frac: float = 0.25
                                 ) -> InterferenceSurrogate:
    consts = GainConstants.from_scenario(scenario)
    p = scenario.channel
    others = [i for i in range(scenario.num_k) if i != k]
    d_vec = point.q_eff[m, n][None, :] - scenario.node_positions[others]
    alpha = point.theta_ref[m, others, n]
    slope = p.a_coef * p.b_coef * np.exp(p.b_coef * (p.a_coef - alpha))
    # y_tilde >= 1 is equivalent to theta <= alpha + 1/B, an affine floor
    # on u_tilde; combine with the positivity margin
    theta_cap = alpha + 1.0 / p.b_coef
    with np.errstate(divide="ignore"):
        y_floor = np.where(
            theta_cap < 90.0,
            (scenario.altitude / np.tan(np.radians(theta_cap))) ** 2,
            0.0)
    u_floor = np.maximum(u_floor_frac * point.u_ref[m, others, n],
                         y_floor + 0.0)
    u_floor = np.maximum(u_floor, 1e-9)
    return InterferenceSurrogate(
        q_ref=point.q_eff[m, n].copy(), d_vec=d_vec,
        u_ref=point.u_ref[m, others, n].copy(),
        y_ref=point.y_ref[m, others, n].copy(),
        alpha_deg=alpha.copy(), slope=slope,
        p_interf=point.p_ref[others, n].copy(), u_floor=u_floor,
        altitude=scenario.altitude, noise=scenario.noise_power,
        c1c2=consts.c1 * consts.c2, c3=consts.c3)


# ---------------------------------------------------------------------------
# geometry linearizations (testable closed forms)


def separation_linear_bound(q_ref_m, q_ref_j, q_m, q_j) -> np.ndarray:
    """Linearized squared pairwise distance: a global lower bound of
    ||q_m - q_j||^2, tight at the reference pair."""
    dr = np.asarray(q_ref_m, dtype=float) - np.asarray(q_ref_j, dtype=float)
    base = float(dr @ dr)
    return (base
            + 2.0 * np.tensordot(np.asarray(q_m) - q_ref_m, dr, axes=1)
            - 2.0 * np.tensordot(np.asarray(q_j) - q_ref_j, dr, axes=1))


def offset_sq_linear_bound(q_ref, node, q_points) -> np.ndarray:
    """Linearized squared horizontal offset ||q - g||^2 around q_ref:
    global lower bound, tight at the reference."""
    d = np.asarray(q_ref, dtype=float) - np.asarray(node, dtype=float)
    u_ref = float(d @ d)
    return u_ref + 2.0 * np.tensordot(np.asarray(q_points) - q_ref, d, axes=1)


def elevation_floor_deg(u_tilde, altitude: float) -> np.ndarray:
    """Convex lower bound on the elevation variable given the offset
    auxiliary: theta >= atan(H / sqrt(u_tilde)) in degrees."""
    u = np.asarray(u_tilde, dtype=float)
    return DEG * np.arctan2(altitude, np.sqrt(u))


def sigmoid_affine_in_theta(theta, theta_ref, params) -> np.ndarray:
    """Affine-in-theta cap on the sigmoid denominator auxiliary, from the
    tangent of the convex exponential at theta_ref."""
    a, b = params.a_coef, params.b_coef
    base = a * np.exp(-b * (np.asarray(theta_ref, dtype=float) - a))
    return 1.0 + base - b * base * (np.asarray(theta, dtype=float) - theta_ref)
