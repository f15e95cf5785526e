"""Dense log-barrier interior-point solver for the planner's subproblems.

The three restrictions the planner emits are small (a few hundred
variables) and share one shape: minimize a smooth convex objective over
smooth convex inequality constraints, every constraint grouped into
vectorized blocks that expose values, Jacobians and weighted Hessians.
A classic path-following barrier handles all of them; LPs are the special
case of affine blocks.  A standard Phase I (minimize the worst violation)
produces a strictly feasible start or an infeasibility certificate.

Solutions are deterministic functions of the inputs, and every solve
returns the barrier multipliers plus KKT residuals so callers can assert
optimality instead of trusting the iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Infeasible(Exception):
    """Phase I certified an empty (or numerically empty) interior."""

    def __init__(self, message, worst_violation=None):
        super().__init__(message)
        self.worst_violation = worst_violation


class SolverError(RuntimeError):
    pass


class Block:
    """Vectorized group of convex inequality constraints f(z) <= 0."""

    name = "block"

    def count(self) -> int:
        raise NotImplementedError

    def value(self, z) -> np.ndarray:
        raise NotImplementedError

    def jac(self, z) -> np.ndarray:
        raise NotImplementedError

    def hess(self, z, weights) -> np.ndarray | None:
        """sum_i weights[i] * hess(f_i) at z; None means identically zero."""
        return None


class AffineBlock(Block):
    """f = A z - b <= 0."""

    def __init__(self, a, b, name="affine"):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.name = name
        if self.a.shape[0] != self.b.shape[0]:
            raise ValueError("A/b row mismatch")

    def count(self):
        return self.a.shape[0]

    def value(self, z):
        return self.a @ z - self.b

    def jac(self, z):
        return self.a


class BoxBlock(Block):
    """lo <= z[idx] <= hi, encoded as two one-sided rows per variable.

    Either bound may be omitted (None entries are dropped).
    """

    def __init__(self, n_vars, idx, lo=None, hi=None, name="box"):
        idx = np.asarray(idx, dtype=int)
        rows, rhs = [], []
        if lo is not None:
            lo = np.broadcast_to(np.asarray(lo, dtype=float), idx.shape)
            for j, l in zip(idx, lo):
                rows.append((j, -1.0))
                rhs.append(-l)
        if hi is not None:
            hi = np.broadcast_to(np.asarray(hi, dtype=float), idx.shape)
            for j, h in zip(idx, hi):
                rows.append((j, 1.0))
                rhs.append(h)
        a = np.zeros((len(rows), n_vars))
        for r, (j, s) in enumerate(rows):
            a[r, j] = s
        self._affine = AffineBlock(a, np.asarray(rhs), name)
        self.name = name

    def count(self):
        return self._affine.count()

    def value(self, z):
        return self._affine.value(z)

    def jac(self, z):
        return self._affine.jac(z)


class SquaredNormBlock(Block):
    """||S_i z + t_i||^2 / scale_i - 1 <= 0 for a list of selector rows.

    Each entry i selects a few coordinates of z through a sparse pair
    (cols_i, signs_i) plus offset t_i; used for speed limits.
    """

    def __init__(self, n_vars, entries, name="sqnorm"):
        # entries: list of (cols (p,), coeffs (p, 2), offset (2,), scale)
        self.n_vars = n_vars
        self.entries = entries
        self.name = name

    def count(self):
        return len(self.entries)

    def _vec(self, z, entry):
        cols, coeffs, offset, _ = entry
        v = offset.copy()
        for c, w in zip(cols, coeffs):
            v += w * z[c]
        return v

    def value(self, z):
        out = np.empty(len(self.entries))
        for i, e in enumerate(self.entries):
            out[i] = (self._vec(z, e) ** 2).sum() / e[3] - 1.0
        return out

    def jac(self, z):
        j = np.zeros((len(self.entries), self.n_vars))
        for i, e in enumerate(self.entries):
            cols, coeffs, _, scale = e
            v = self._vec(z, e)
            for c, w in zip(cols, coeffs):
                j[i, c] += 2.0 * (w @ v) / scale
        return j

    def hess(self, z, weights):
        h = np.zeros((self.n_vars, self.n_vars))
        for wgt, e in zip(weights, self.entries):
            if wgt == 0.0:
                continue
            cols, coeffs, _, scale = e
            for ci, wi in zip(cols, coeffs):
                for cj, wj in zip(cols, coeffs):
                    h[ci, cj] += wgt * 2.0 * (wi @ wj) / scale
        return h


class LinearObjective:
    """minimize c @ z."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def value(self, z):
        return float(self.c @ z)

    def grad(self, z):
        return self.c

    def hess(self, z):
        return None


class QuadraticObjective:
    """minimize 0.5 z'Qz + c'z with Q PSD."""

    def __init__(self, q, c):
        self.q = np.asarray(q, dtype=float)
        self.c = np.asarray(c, dtype=float)

    def value(self, z):
        return float(0.5 * z @ self.q @ z + self.c @ z)

    def grad(self, z):
        return self.q @ z + self.c

    def hess(self, z):
        return self.q


@dataclass
class KKTReport:
    stationarity: float
    max_violation: float
    duality_gap: float
    complementarity: float


@dataclass
class SolveResult:
    z: np.ndarray
    objective: float
    multipliers: list = field(default_factory=list)
    kkt: KKTReport | None = None
    newton_steps: int = 0
    phase1_used: bool = False


def _eval_all(blocks, z):
    vals = [np.atleast_1d(b.value(z)) for b in blocks]
    return vals


def _strictly_feasible(vals, margin=0.0):
    return all(np.all(np.isfinite(v)) and np.all(v < -margin) for v in vals)


def _newton_solve(hess, grad):
    """Newton direction via Jacobi-scaled Cholesky with one refinement
    step; the barrier Hessian spans ~1/slack^2 magnitudes near the
    boundary and needs the equilibration to stay factorizable."""
    n = hess.shape[0]
    d = np.sqrt(np.maximum(np.abs(np.diag(hess)), 1e-300))
    hs = hess / d[:, None] / d[None, :]
    ridge = 0.0
    for attempt in range(10):
        try:
            l_fac = np.linalg.cholesky(
                hs + ridge * np.eye(n) if ridge else hs)
            break
        except np.linalg.LinAlgError:
            ridge = 10.0 ** (attempt - 12)
    else:
        raise SolverError("barrier Hessian not factorizable")

    def solve_scaled(rhs):
        y = np.linalg.solve(l_fac, rhs / d)
        return np.linalg.solve(l_fac.T, y) / d

    step = -solve_scaled(grad)
    resid = grad + hess @ step
    step -= solve_scaled(resid)
    return step


def _newton_minimize(objective, blocks, z0, t, *, tol, max_iter, name):
    """Damped Newton on t*f0(z) - sum log(-f_i(z)); z0 strictly feasible.

    Returns (z, steps, converged); stalls are reported, not raised, so the
    path-following loop can fall back to the last centered point.
    """
    z = z0.copy()
    n = z.size
    steps = 0
    for _ in range(max_iter):
        vals = _eval_all(blocks, z)
        if not _strictly_feasible(vals):
            raise SolverError(f"{name}: iterate left the interior")
        grad = t * objective.grad(z).astype(float).copy()
        hess = np.zeros((n, n))
        oh = objective.hess(z)
        if oh is not None:
            hess += t * oh
        for b, v in zip(blocks, vals):
            d = 1.0 / (-v)
            j = b.jac(z)
            grad += j.T @ d
            hess += (j * (d ** 2)[:, None]).T @ j
            bh = b.hess(z, d)
            if bh is not None:
                hess += bh
        step = _newton_solve(hess, grad)
        lam_sq = float(-grad @ step)
        if lam_sq < 0:
            return z, steps, False
        steps += 1
        if lam_sq / 2.0 <= tol:
            return z, steps, True
        # backtrack: first into the interior, then Armijo on phi_t
        phi0 = t * objective.value(z) - sum(np.log(-v).sum() for v in vals)
        alpha = 1.0
        moved = False
        for _ in range(60):
            z_try = z + alpha * step
            with np.errstate(over="ignore", invalid="ignore"):
                vals_try = _eval_all(blocks, z_try)
            if _strictly_feasible(vals_try):
                phi_try = (t * objective.value(z_try)
                           - sum(np.log(-v).sum() for v in vals_try))
                if phi_try <= phi0 + 0.25 * alpha * (-lam_sq):
                    moved = True
                    break
            alpha *= 0.5
        if not moved:
            return z, steps, False       # stalled at numerical precision
        z = z + alpha * step
    return z, steps, False


def minimize_barrier(objective, blocks, z0, *, t0=1.0, mu=20.0,
                     gap_tol=1e-8, newton_tol=1e-10, max_newton=200,
                     name="problem") -> SolveResult:
    """Path-following barrier; ``z0`` must be strictly feasible.

    If Newton stops converging at some t (float64 runs out near very
    degenerate boundaries), the last well-centered iterate is returned
    with its achieved duality gap rather than a garbage point.
    """
    z = np.asarray(z0, dtype=float).copy()
    vals = _eval_all(blocks, z)
    if not _strictly_feasible(vals):
        raise SolverError(f"{name}: start point is not strictly feasible")
    m_total = sum(b.count() for b in blocks)
    if m_total == 0:
        raise SolverError(f"{name}: unconstrained problems are not supported")
    grad_scale = max(1.0, float(np.max(np.abs(objective.grad(z)))))

    def stationarity_at(zc, tc):
        g = objective.grad(zc).astype(float).copy()
        for b, v in zip(blocks, _eval_all(blocks, zc)):
            g += b.jac(zc).T @ (1.0 / (tc * (-v)))
        return float(np.max(np.abs(g)))

    t = float(t0)
    total_steps = 0
    best = None                  # deepest (z, t) that is truly centered
    while True:
        z_new, steps, ok = _newton_minimize(objective, blocks, z, t,
                                            tol=newton_tol,
                                            max_iter=max_newton, name=name)
        total_steps += steps
        if not ok:
            break                # float64 ran out; use the best stage
        z = z_new
        if stationarity_at(z, t) <= 1e-6 * grad_scale:
            best = (z.copy(), t)
        if m_total / t <= gap_tol:
            break
        t *= mu if t < 1e4 else max(4.0, mu / 4.0)
    if best is not None:
        z, t = best

    vals = _eval_all(blocks, z)
    multipliers = [1.0 / (t * (-v)) for v in vals]
    grad = objective.grad(z).astype(float).copy()
    for b, lam in zip(blocks, multipliers):
        grad += b.jac(z).T @ lam
    comp = max((float(np.max(np.abs(lam * (-v) - 1.0 / t)))
                for lam, v in zip(multipliers, vals)), default=0.0)
    kkt = KKTReport(
        stationarity=float(np.max(np.abs(grad))),
        max_violation=float(max(np.max(v) for v in vals)),
        duality_gap=m_total / t,
        complementarity=comp,
    )
    return SolveResult(z=z, objective=objective.value(z),
                       multipliers=multipliers, kkt=kkt,
                       newton_steps=total_steps)


class _ShiftedBlock(Block):
    """Wraps a block as f(z) - s <= 0 over the extended variable (z, s)."""

    def __init__(self, inner, n_vars):
        self.inner = inner
        self.n_vars = n_vars
        self.name = f"phase1:{inner.name}"

    def count(self):
        return self.inner.count()

    def value(self, zs):
        return self.inner.value(zs[:-1]) - zs[-1]

    def jac(self, zs):
        j = self.inner.jac(zs[:-1])
        out = np.zeros((j.shape[0], self.n_vars + 1))
        out[:, :-1] = j
        out[:, -1] = -1.0
        return out

    def hess(self, zs, weights):
        h = self.inner.hess(zs[:-1], weights)
        if h is None:
            return None
        out = np.zeros((self.n_vars + 1, self.n_vars + 1))
        out[:-1, :-1] = h
        return out


def phase1(blocks, z0, *, target_margin=1e-8, name="problem",
           max_rounds=60, prox=1e-4) -> np.ndarray:
    """Return a strictly feasible point near z0, or raise :class:`Infeasible`.

    Minimizes the worst constraint value s over (z, s) with a small
    proximal pull toward z0.  The pull keeps the auxiliary problem bounded
    (free directions such as epigraph variables would otherwise run away,
    since widening every slack lowers the barrier) and lands the feasible
    point next to the warm start.  Stops the moment an iterate clears
    max_i f_i(z) <= -target_margin.
    """
    z0 = np.asarray(z0, dtype=float)
    vals = _eval_all(blocks, z0)
    worst = max(np.max(v) for v in vals)
    if worst < -target_margin:
        return z0.copy()
    n = z0.size
    shifted = [_ShiftedBlock(b, n) for b in blocks]
    q = prox * np.eye(n + 1)
    q[n, n] = 0.0
    c = np.append(-prox * z0, 1.0)
    objective = QuadraticObjective(q, c)        # s + prox/2 ||z - z0||^2
    zs = np.append(z0, worst + max(1.0, abs(worst)))
    t = 1.0
    m_total = sum(b.count() for b in blocks)
    for _ in range(max_rounds):
        zs, _, ok = _newton_minimize(objective, shifted, zs, t,
                                     tol=1e-10, max_iter=120,
                                     name=f"{name}/ph1")
        cur = max(np.max(v) for v in _eval_all(blocks, zs[:-1]))
        if cur <= -target_margin:
            return zs[:-1].copy()
        if not ok or m_total / t <= 1e-12:
            break
        t *= 20.0
    cur = max(np.max(v) for v in _eval_all(blocks, zs[:-1]))
    raise Infeasible(f"{name}: no strictly feasible point found "
                     f"(best margin {cur:.3e})", worst_violation=float(cur))


def solve(objective, blocks, z0, *, gap_tol=1e-9, name="problem",
          feas_margin=1e-12, kkt_tol=1e-5) -> SolveResult:
    """Phase I (if needed) followed by the barrier solve.

    Raises :class:`SolverError` when the returned point fails the KKT
    stationarity check instead of handing back an unconverged iterate.
    """
    z0 = np.asarray(z0, dtype=float)
    vals = _eval_all(blocks, z0)
    used_phase1 = False
    if not _strictly_feasible(vals, margin=feas_margin):
        z0 = phase1(blocks, z0, name=name)
        used_phase1 = True
    res = minimize_barrier(objective, blocks, z0, gap_tol=gap_tol, name=name)
    res.phase1_used = used_phase1
    grad_scale = max(1.0, float(np.max(np.abs(objective.grad(res.z)))))
    if res.kkt.stationarity > kkt_tol * grad_scale:
        raise SolverError(
            f"{name}: barrier did not converge "
            f"(stationarity {res.kkt.stationarity:.3e})")
    return res


def solve_lp(c, a_ub, b_ub, *, maximize=False, z0=None, gap_tol=1e-8,
             name="lp") -> SolveResult:
    """Dense LP front-end: optimize c @ z subject to a_ub @ z <= b_ub."""
    c = np.asarray(c, dtype=float)
    obj = LinearObjective(-c if maximize else c)
    block = AffineBlock(a_ub, b_ub, name="ub")
    if z0 is None:
        z0 = np.zeros(c.size)
    res = solve(obj, [block], z0, gap_tol=gap_tol, name=name)
    if maximize:
        res.objective = -res.objective
    return res
