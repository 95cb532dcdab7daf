"""Slacked safety-filter subproblems and their solution.

Every subproblem has the form::

    minimize    1/2 |u - u_ref|^2 + sum_j p_j s_j        (or p_j s_j^2)
    subject to  a_u . u + a_s . s >= rhs                 (one per row)
                s >= 0,  u in U                          (norm ball or box)

``solve`` runs an operator-splitting (ADMM) iteration with the ball/box
handled by exact projection. ``brute_force_solve`` is an independent grid
search used as a test oracle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from .barrier import ClfSpec, ScalarField
from .dynamics import InputSet

STATUS = {0: "optimal", 1: "max_iter", 2: "infeasible_diagnostic"}
ELASTIC_WEIGHT = 1e6
RHO_MIN, RHO_MAX = 1e-6, 1e6


@dataclass
class ConvexSubproblem:
    m: int
    A_u: np.ndarray  # (rows, m)
    A_s: np.ndarray  # (rows, n_slack)
    rhs: np.ndarray  # (rows,)
    penalties: np.ndarray  # (n_slack,)
    input_set: InputSet
    u_ref: np.ndarray | None = None
    slack_cost: str = "linear"
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.A_u = np.asarray(self.A_u, dtype=float).reshape(-1, self.m)
        rows = self.A_u.shape[0]
        self.penalties = np.atleast_1d(np.asarray(self.penalties, dtype=float))
        self.A_s = np.asarray(self.A_s, dtype=float).reshape(rows, self.penalties.size)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(rows)
        self.u_ref = np.zeros(self.m) if self.u_ref is None else np.asarray(self.u_ref, dtype=float).reshape(self.m)
        if self.slack_cost not in ("linear", "quadratic"):
            raise ValueError("slack_cost must be 'linear' or 'quadratic'")
        if np.any(self.penalties <= 0):
            raise ValueError("slack penalties must be positive")
        for arr in (self.A_u, self.A_s, self.rhs, self.u_ref):
            if not np.all(np.isfinite(arr)):
                raise ValueError("subproblem data must be finite")
        if np.any(np.count_nonzero(self.A_s, axis=0) > 1) or np.any(np.count_nonzero(self.A_s, axis=1) > 1):
            raise ValueError("each slack must appear in exactly one row and each row carry at most one slack")

    @property
    def n_rows(self) -> int:
        return self.A_u.shape[0]

    @property
    def n_slack(self) -> int:
        return self.penalties.size

    @property
    def rows(self) -> list[tuple[np.ndarray, np.ndarray, float]]:
        return [(self.A_u[i], self.A_s[i], float(self.rhs[i])) for i in range(self.n_rows)]

    def objective(self, u, s) -> float:
        du = np.asarray(u) - self.u_ref
        s = np.asarray(s, dtype=float)
        cost = s if self.slack_cost == "linear" else s * s
        return float(0.5 * du @ du + self.penalties @ cost)

    def row_residuals(self, u, s) -> np.ndarray:
        """a_u.u + a_s.s - rhs per row (nonnegative when satisfied)."""
        return self.A_u @ np.asarray(u) + self.A_s @ np.asarray(s) - self.rhs

    def scaled(self, c: float) -> "ConvexSubproblem":
        """Every row multiplied by c > 0; the argmin in u is unchanged.

        The slack coefficients scale with their rows, so each slack keeps its
        meaning and its penalty stays fixed.
        """
        return ConvexSubproblem(self.m, c * self.A_u, c * self.A_s, c * self.rhs, self.penalties,
                                self.input_set, self.u_ref, self.slack_cost)


@dataclass
class Solution:
    u: np.ndarray
    slacks: np.ndarray
    status: str
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    solve_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


# --------------------------------------------------------------------------
# ADMM kernel
#
# Each slack appears in exactly one row, so it can be minimized out in closed
# form: for a row a.u + c s >= b with c > 0 the cheapest slack is
# max(0, (b - a.u)/c) and the row contributes the hinge w*max(0, b - a.u)
# (or w*max(0, b - a.u)^2 for quadratic slack costs). Rows without a usable
# slack (c <= 0 or none) are hard. The splitting then runs on u alone with
# z = [A u; u]: the row blocks take the hinge prox, the u block the exact
# ball/box projection.

HARD, HINGE, HINGE_SQ = 0, 1, 2


@numba.njit(cache=True)
def _prox(v, rho, n_rows, m, kind, b, w, ball, box):
    out = v.copy()
    for i in range(n_rows):
        if out[i] >= b[i]:
            continue
        if kind[i] == HARD:
            out[i] = b[i]
        elif kind[i] == HINGE:
            out[i] = min(out[i] + w[i] / rho, b[i])
        else:
            t = 2.0 * w[i] / rho
            out[i] = (out[i] + t * b[i]) / (1.0 + t)
    if ball:
        nrm = 0.0
        for i in range(m):
            nrm += out[n_rows + i] ** 2
        nrm = math.sqrt(nrm)
        if nrm > 1.0:
            for i in range(m):
                out[n_rows + i] /= nrm
    else:
        for i in range(m):
            bi = box[i]
            if out[n_rows + i] > bi:
                out[n_rows + i] = bi
            elif out[n_rows + i] < -bi:
                out[n_rows + i] = -bi
    return out


@numba.njit(cache=True)
def _certificate(dy, n_rows, m, kind, b, ball, box, tol):
    # support of the hard-row/U constraint set at dy; +inf unless dy is a valid ray
    s = 0.0
    for i in range(n_rows):
        if kind[i] == HARD:
            if dy[i] > tol:
                return np.inf
            s += b[i] * dy[i]
        elif abs(dy[i]) > tol:
            # hinge rows have bounded multipliers and cannot carry a ray
            return np.inf
    if ball:
        nrm = 0.0
        for i in range(m):
            nrm += dy[n_rows + i] ** 2
        s += math.sqrt(nrm)
    else:
        for i in range(m):
            s += box[i] * abs(dy[n_rows + i])
    return s


@numba.njit(cache=True)
def _admm(Pd, q, C, n_rows, m, kind, b, w, ball, box, eps_abs, eps_rel, max_iter):
    nc = C.shape[0]
    sigma = 1e-6
    alpha = 1.6
    rho = 0.1
    x = np.zeros(m)
    z = _prox(C @ x, rho, n_rows, m, kind, b, w, ball, box)
    y = np.zeros(nc)
    CtC = C.T @ C
    K = CtC * rho
    for i in range(m):
        K[i, i] += Pd[i] + sigma
    Kinv = np.linalg.inv(K)
    status = 1
    rp = np.inf
    rd = np.inf
    it = 0
    y_prev = y.copy()
    next_adapt = 50
    for it in range(1, max_iter + 1):
        rhs = sigma * x - q + C.T @ (rho * z - y)
        xt = Kinv @ rhs
        zt = C @ xt
        x = alpha * xt + (1.0 - alpha) * x
        zh = alpha * zt + (1.0 - alpha) * z
        znew = _prox(zh + y / rho, rho, n_rows, m, kind, b, w, ball, box)
        y = y + rho * (zh - znew)
        z = znew
        if it % 10 == 0 or it == max_iter:
            Cx = C @ x
            Px = Pd * x
            Cty = C.T @ y
            rp = np.max(np.abs(Cx - z))
            rd = np.max(np.abs(Px + q + Cty))
            sp = max(np.max(np.abs(Cx)), np.max(np.abs(z)))
            sd = max(max(np.max(np.abs(Px)), np.max(np.abs(Cty))), np.max(np.abs(q)))
            if rp <= eps_abs + eps_rel * sp and rd <= eps_abs + eps_rel * sd:
                status = 0
                break
            if it % 50 == 0:
                dy = y - y_prev
                ndy = np.max(np.abs(dy))
                if ndy > 1e-12:
                    if np.max(np.abs(C.T @ dy)) <= 1e-9 * ndy and \
                            _certificate(dy, n_rows, m, kind, b, ball, box, 1e-9 * ndy) < -1e-9 * ndy:
                        status = 2
                        break
                y_prev = y.copy()
            if it == next_adapt:
                # rebalance rho from the residual ratio. Damped and geometrically spaced:
                # free adaptation can lock into a two-value cycle, a frozen rho cannot
                floor = 0.1 * eps_rel
                ratio = math.sqrt(max(rp / (sp + 1e-30), floor) / max(rd / (sd + 1e-30), floor))
                ratio = min(max(ratio, 0.1), 10.0)
                new_rho = min(max(rho * ratio, RHO_MIN), RHO_MAX)
                if new_rho > 5.0 * rho or new_rho < 0.2 * rho:
                    rho = new_rho
                    K = CtC * rho
                    for i in range(m):
                        K[i, i] += Pd[i] + sigma
                    Kinv = np.linalg.inv(K)
                next_adapt *= 2
    return x, z, y, it, status, rp, rd


def _slack_owner(p: ConvexSubproblem):
    """Per row: (slack index or -1, slack coefficient)."""
    idx = np.full(p.n_rows, -1, dtype=np.int64)
    coef = np.zeros(p.n_rows)
    for i in range(p.n_rows):
        nz = np.flatnonzero(p.A_s[i])
        if nz.size == 1:
            idx[i], coef[i] = nz[0], p.A_s[i, nz[0]]
    return idx, coef


def _scaled_data(p: ConvexSubproblem, elastic: bool):
    """Hinge form with u = s_u * u_bar, unit rows and unit-scale cost."""
    m, r = p.m, p.n_rows
    bounds = p.input_set.bound_vector(m)
    s_u = float(np.max(bounds))
    idx, coef = _slack_owner(p)
    kind = np.full(r, HARD, dtype=np.int64)
    w = np.zeros(r)
    quadratic = p.slack_cost == "quadratic"
    for i in range(r):
        if idx[i] >= 0 and coef[i] > 0:
            kind[i] = HINGE_SQ if quadratic else HINGE
            pen = p.penalties[idx[i]]
            w[i] = pen / coef[i] ** 2 if quadratic else pen / coef[i]
    if elastic:
        # hard rows become heavily penalized hinges
        weight = ELASTIC_WEIGHT * max(1.0, float(np.max(p.penalties, initial=1.0)))
        for i in range(r):
            if kind[i] == HARD:
                kind[i] = HINGE_SQ if quadratic else HINGE
                w[i] = weight
    A = p.A_u * s_u
    norms = np.sqrt(np.sum(A**2, axis=1)) if r else np.zeros(0)
    norms[norms == 0] = 1.0
    A = A / norms[:, None] if r else np.zeros((0, m))
    b = p.rhs / norms if r else np.zeros(0)
    w = np.where(kind == HINGE_SQ, w * norms**2, w * norms)
    Pd = np.full(m, s_u**2)
    q = -s_u * p.u_ref
    scale = 1.0 / max(1.0, s_u**2, float(np.max(np.abs(q), initial=0.0)), float(np.max(w, initial=0.0)))
    C = np.vstack([A, np.eye(m)])
    return dict(Pd=Pd * scale, q=q * scale, C=C, kind=kind, b=b, w=w * scale, ball=p.input_set.kind == "norm_ball",
                box=bounds / s_u, s_u=s_u, n_rows=r, idx=idx, coef=coef)


def _run(p: ConvexSubproblem, tol: float, max_iter: int, elastic: bool):
    d = _scaled_data(p, elastic)
    x, z, y, it, status, rp, rd = _admm(d["Pd"], d["q"], d["C"], d["n_rows"], p.m, d["kind"], d["b"], d["w"],
                                        d["ball"], d["box"], tol, tol, max_iter)
    r = d["n_rows"]
    u = d["s_u"] * z[r:]
    return u, int(it), int(status), float(rp), float(rd)


def minimal_slacks(p: ConvexSubproblem, u) -> np.ndarray:
    """Cheapest nonnegative slacks for a fixed u (each slack sits in one row)."""
    idx, coef = _slack_owner(p)
    s = np.zeros(p.n_slack)
    lhs = p.A_u @ np.asarray(u, dtype=float)
    for i in range(p.n_rows):
        if idx[i] >= 0 and coef[i] > 0:
            s[idx[i]] = max(0.0, (p.rhs[i] - lhs[i]) / coef[i])
    return s


def solve(p: ConvexSubproblem, tol: float = 1e-8, max_iter: int = 20000) -> Solution:
    """Solve the subproblem; never returns a silently wrong answer.

    status ``max_iter`` carries the last iterate; ``infeasible_diagnostic``
    carries the least-violating control (hard rows made elastic with a large
    penalty) when the unrelaxed rows admit no solution.
    """
    t0 = time.perf_counter()
    u, it, status, rp, rd = _run(p, tol, max_iter, elastic=False)
    if status == 2:
        u, it2, _, rp, rd = _run(p, tol, max_iter, elastic=True)
        it += it2
    u = p.input_set.project(u)
    s = minimal_slacks(p, u)
    return Solution(u=u, slacks=s, status=STATUS[status], objective=p.objective(u, s), iterations=it,
                    primal_residual=rp, dual_residual=rd, solve_time=time.perf_counter() - t0)


def solve_polyhedral(p: ConvexSubproblem, sides: int = 32, tol: float = 1e-8, max_iter: int = 20000) -> Solution:
    """Cross-check path for 2-D balls: replace the ball with an inscribed regular polygon."""
    if p.input_set.kind != "norm_ball" or p.m != 2:
        raise ValueError("polyhedral approximation is only defined for 2-D norm balls")
    R = p.input_set.u_max
    ang = (np.arange(sides) + 0.5) * 2 * np.pi / sides
    normals = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # facet i: normals_i . u <= R cos(pi/sides)
    A_u = np.vstack([p.A_u, -normals])
    A_s = np.vstack([p.A_s, np.zeros((sides, p.n_slack))])
    rhs = np.concatenate([p.rhs, -np.full(sides, R * math.cos(math.pi / sides))])
    poly = ConvexSubproblem(2, A_u, A_s, rhs, p.penalties, InputSet.box(R, R), p.u_ref, p.slack_cost)
    return solve(poly, tol, max_iter)


# --------------------------------------------------------------------------
# brute-force oracle
#
# Each row carries at most one slack and each slack at most one row, so the
# objective with minimal slacks is 1/2|u - u_ref|^2 + sum_i phi_i(a_i . u) with
#   phi_i(s) = p max(0, (b - s)/c)      (or its square)  for slack coefficient c > 0
#   phi_i(s) = hard: s >= b required                     otherwise


@numba.njit(cache=True)
def _row_cost(s, b, c, pen, quadratic, big):
    # returns (cost, violation) of one row at activity s
    gap = b - s
    if gap <= 0.0:
        return 0.0, 0.0
    if c > 0.0:
        need = gap / c
        return pen * (need * need if quadratic else need), 0.0
    return big * gap, gap


@numba.njit(cache=True)
def _grid3(axes, A_u, rhs, row_c, row_pen, quadratic, u_ref, ball, radius):
    # exhaustive search over a padded 3-axis grid with per-axis row products
    # precomputed; only feasible points count
    G = axes.shape[1]
    m = A_u.shape[1]
    rows = rhs.size
    P = np.zeros((3, G, rows))
    Q = np.zeros((3, G))
    S = np.zeros((3, G))
    for a in range(m):
        for g in range(G):
            t = axes[a, g]
            Q[a, g] = 0.5 * (t - u_ref[a]) ** 2
            S[a, g] = t * t
            for i in range(rows):
                P[a, g, i] = A_u[i, a] * t
    n1 = G if m > 1 else 1
    n2 = G if m > 2 else 1
    best = np.inf
    bi = np.zeros(3, dtype=np.int64)
    r2 = radius * radius
    for g0 in range(G):
        for g1 in range(n1):
            s01 = S[0, g0] + S[1, g1]
            if ball and s01 > r2:
                continue
            for g2 in range(n2):
                if ball and s01 + S[2, g2] > r2:
                    continue
                obj = Q[0, g0] + Q[1, g1] + Q[2, g2]
                ok = True
                for i in range(rows):
                    gap = rhs[i] - (P[0, g0, i] + P[1, g1, i] + P[2, g2, i])
                    if gap > 0.0:
                        c = row_c[i]
                        if c > 0.0:
                            need = gap / c
                            obj += row_pen[i] * (need * need if quadratic else need)
                        else:
                            ok = False
                            break
                if ok and obj < best:
                    best = obj
                    bi[0], bi[1], bi[2] = g0, g1, g2
    best_u = np.full(m, np.nan)
    if best < np.inf:
        for a in range(m):
            best_u[a] = axes[a, bi[a]]
    return best, best_u


@numba.njit(cache=True)
def _penalized(u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big):
    obj = 0.0
    for a in range(u.size):
        obj += 0.5 * (u[a] - u_ref[a]) ** 2
    viol = 0.0
    for i in range(rhs.size):
        s = 0.0
        for a in range(u.size):
            s += A_u[i, a] * u[a]
        cost, v = _row_cost(s, rhs[i], row_c[i], row_pen[i], quadratic, big)
        obj += cost
        viol += v
    return obj, viol


@numba.njit(cache=True)
def _level_bounds(level, u, bounds, ball, radius):
    if ball:
        rem = radius * radius
        for a in range(level):
            rem -= u[a] * u[a]
        r = math.sqrt(rem) if rem > 0.0 else 0.0
        return -r, r
    return -bounds[level], bounds[level]


@numba.njit(cache=True)
def _exact_last(u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big, bounds, ball, radius):
    """Exact minimizer over the last coordinate (others fixed) of the convex piecewise quadratic.

    Candidates are the interval ends, each row's kink and the stationary point
    of every piece between consecutive kinks.
    """
    m = u.size
    k = m - 1
    lo, hi = _level_bounds(k, u, bounds, ball, radius)
    rows = rhs.size
    base = np.zeros(rows)
    for i in range(rows):
        for a in range(k):
            base[i] += A_u[i, a] * u[a]
    knots = np.empty(rows + 2)
    nk = 0
    knots[nk] = lo
    nk += 1
    knots[nk] = hi
    nk += 1
    for i in range(rows):
        a = A_u[i, k]
        if a != 0.0:
            t = (rhs[i] - base[i]) / a
            if lo < t < hi:
                knots[nk] = t
                nk += 1
    ks = np.sort(knots[:nk])
    best = np.inf
    best_t = lo
    for j in range(2 * nk - 1):
        if j % 2 == 0:
            t = ks[j // 2]
        else:
            t0 = ks[j // 2]
            t1 = ks[j // 2 + 1]
            mid = 0.5 * (t0 + t1)
            # derivative on this piece is K t + L
            K = 1.0
            L = -u_ref[k]
            for i in range(rows):
                a = A_u[i, k]
                gap = rhs[i] - base[i] - a * mid
                if gap <= 0.0 or a == 0.0:
                    continue
                c = row_c[i]
                if c > 0.0:
                    if quadratic:
                        w = 2.0 * row_pen[i] / (c * c)
                        K += w * a * a
                        L -= w * a * (rhs[i] - base[i])
                    else:
                        L -= row_pen[i] * a / c
                else:
                    L -= big * a
            t = min(max(-L / K, t0), t1)
        u[k] = t
        f = _penalized(u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big)[0]
        if f < best:
            best = f
            best_t = t
    u[k] = best_t
    return best, best_t


_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


@numba.njit(cache=True)
def _nested_min(level, u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big, bounds, ball, radius, iters):
    """Minimum over coordinates ``level:`` with ``u[:level]`` fixed; returns (value, argmin of u[level]).

    Minimizing a jointly convex function over trailing coordinates keeps it
    convex in the leading ones, so golden-section search is exact up to its
    bracket width; the last coordinate is solved in closed form.
    """
    m = u.size
    if level == m - 1:
        return _exact_last(u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big, bounds, ball, radius)
    a, b = _level_bounds(level, u, bounds, ball, radius)
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    u[level] = c
    fc = _nested_min(level + 1, u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big, bounds, ball, radius, iters)[0]
    u[level] = d
    fd = _nested_min(level + 1, u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big, bounds, ball, radius, iters)[0]
    for _ in range(iters):
        if b - a <= 1e-13 * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            u[level] = c
            fc = _nested_min(level + 1, u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big, bounds, ball, radius,
                             iters)[0]
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            u[level] = d
            fd = _nested_min(level + 1, u, A_u, rhs, row_c, row_pen, quadratic, u_ref, big, bounds, ball, radius,
                             iters)[0]
    if fc <= fd:
        return fc, c
    return fd, d


def _row_slack_structure(p: ConvexSubproblem):
    row_c = np.zeros(p.n_rows)
    row_pen = np.zeros(p.n_rows)
    owner = np.full(p.n_slack, -1)
    for i in range(p.n_rows):
        nz = np.flatnonzero(p.A_s[i])
        if nz.size > 1:
            raise ValueError("brute_force_solve needs at most one slack per row")
        if nz.size == 1:
            j = nz[0]
            if owner[j] >= 0:
                raise ValueError("brute_force_solve needs each slack in at most one row")
            owner[j] = i
            row_c[i], row_pen[i] = p.A_s[i, j], p.penalties[j]
    return row_c, row_pen, owner


def _minimal_slacks(p: ConvexSubproblem, u, row_c, owner) -> np.ndarray:
    s = np.zeros(p.n_slack)
    lhs = p.A_u @ u
    for j, i in enumerate(owner):
        if i >= 0 and row_c[i] > 0:
            s[j] = max(0.0, (p.rhs[i] - lhs[i]) / row_c[i])
    return s


def brute_force_solve(p: ConvexSubproblem, grid_per_axis: int = 201) -> Solution:
    """Independent oracle: exhaustive grid over U, then an exact nested line search.

    Slacks take their row-wise minimal feasible values. The grid alone is only
    accurate to (grid spacing) x (slack penalty), so the problem is also solved
    by nested golden-section search on the partially minimized objective (hard
    rows enter through a large exact penalty); the better feasible point wins.
    """
    if grid_per_axis < 201:
        raise ValueError("grid_per_axis must be at least 201")
    if p.m > 3:
        raise ValueError("brute_force_solve supports m <= 3")
    t0 = time.perf_counter()
    row_c, row_pen, owner = _row_slack_structure(p)
    bounds = p.input_set.bound_vector(p.m)
    ball = p.input_set.kind == "norm_ball"
    radius = p.input_set.u_max if ball else 0.0
    quadratic = p.slack_cost == "quadratic"
    axes = np.stack([np.linspace(-b, b, grid_per_axis) for b in bounds])
    best, best_u = _grid3(axes, p.A_u, p.rhs, row_c, row_pen, quadratic, p.u_ref, ball, radius)

    big = 1e6 * (1.0 + float(np.max(row_pen, initial=0.0)) + float(np.sum(bounds**2)))
    cand = np.zeros(p.m)
    for level in range(p.m):
        _, t = _nested_min(level, cand, p.A_u, p.rhs, row_c, row_pen, quadratic, p.u_ref, big, bounds, ball,
                           radius, 90)
        cand[level] = t
    obj, viol = _penalized(cand, p.A_u, p.rhs, row_c, row_pen, quadratic, p.u_ref, 0.0)
    if viol <= 1e-9 * (1.0 + float(np.max(np.abs(p.rhs), initial=0.0))) and obj < best:
        best, best_u = obj, cand
    elapsed = time.perf_counter() - t0
    if not np.isfinite(best):
        return Solution(np.full(p.m, np.nan), np.zeros(p.n_slack), "infeasible_diagnostic", np.inf, 0,
                        np.inf, np.nan, elapsed)
    s = _minimal_slacks(p, best_u, row_c, owner)
    return Solution(best_u, s, "optimal", p.objective(best_u, s), 0, 0.0, 0.0, elapsed)


# --------------------------------------------------------------------------
# assembly of the safety-filter subproblems


def _lie(field: ScalarField, model, x):
    return field.lie_fn(model)(x)


def cbf_row(h: float, lf: float, lg: np.ndarray, alpha: float) -> tuple[np.ndarray, float, float]:
    """Lf h + Lg h u >= -(alpha + gamma) h  ->  (a_u, slack coefficient, rhs)."""
    return np.asarray(lg, dtype=float), float(h), float(-lf - alpha * h)


def stage1_from_lie(h, lf_h, lg_h, v, lf_v, lg_v, alpha, beta, p1, p2, input_set,
                    slack_cost: str = "linear") -> ConvexSubproblem:
    a_cbf, c_cbf, r_cbf = cbf_row(h, lf_h, lg_h, alpha)
    m = a_cbf.size
    A_u = np.vstack([a_cbf, -np.asarray(lg_v, dtype=float)])
    # slack order: (delta for the CLF row, gamma for the CBF row)
    A_s = np.array([[0.0, c_cbf], [1.0, 0.0]])
    rhs = np.array([r_cbf, lf_v + beta * v])
    p = ConvexSubproblem(m, A_u, A_s, rhs, [p1, p2], input_set, slack_cost=slack_cost)
    if h < 0:
        p.notes.append("cbf_slack_tightens")
    elif h == 0:
        p.notes.append("cbf_slack_inactive")
    return p


def assemble_stage1_qp(h: ScalarField, clf: ClfSpec, alpha_rl: float, beta_rl: float, x, p1: float, p2: float,
                       input_set: InputSet, model, slack_cost: str = "linear") -> ConvexSubproblem:
    hv, _, lf_h, lg_h = _lie(h, model, x)
    vv, _, lf_v, lg_v = _lie(clf.field, model, x)
    return stage1_from_lie(hv, lf_h, lg_h, vv, lf_v, lg_v, alpha_rl, beta_rl, p1, p2, input_set, slack_cost)


def assemble_stage2_qp(h_learned: ScalarField, clf: ClfSpec, alpha_rl: float, beta_rl: float, x, p1: float,
                       p2: float, input_set: InputSet, model, slack_cost: str = "linear") -> ConvexSubproblem:
    """Same structure as stage 1 with the composite learned barrier."""
    return assemble_stage1_qp(h_learned, clf, alpha_rl, beta_rl, x, p1, p2, input_set, model, slack_cost)


def inspection1_from_lie(lies, alphas, penalties, input_set, u_ref=None) -> ConvexSubproblem:
    m = np.asarray(lies[0][2]).size
    k = len(lies)
    A_u = np.zeros((k, m))
    A_s = np.zeros((k, k))
    rhs = np.zeros(k)
    notes = []
    for i, ((h, lf, lg), a) in enumerate(zip(lies, alphas)):
        A_u[i], A_s[i, i], rhs[i] = cbf_row(h, lf, lg, a)
        if h < 0:
            notes.append(f"cbf{i}_slack_tightens")
    p = ConvexSubproblem(m, A_u, A_s, rhs, penalties, input_set, u_ref=u_ref)
    p.notes.extend(notes)
    return p


def assemble_inspection_stage1_qp(h_koz2: ScalarField, h_kiz2: ScalarField, alpha1: float, alpha2: float, x,
                                  p2: float, p3: float, input_set: InputSet, model,
                                  u_ref=None) -> ConvexSubproblem:
    """Two CBF rows with independent slacks; ``u_ref`` is the learned inspection thrust."""
    lies = []
    for f in (h_koz2, h_kiz2):
        hv, _, lf, lg = _lie(f, model, x)
        lies.append((hv, lf, lg))
    return inspection1_from_lie(lies, (alpha1, alpha2), [p2, p3], input_set, u_ref)


def assemble_inspection_stage2_qp(h: ScalarField, alpha_rl: float, x, p: float, input_set: InputSet, model,
                                  u_ref=None) -> ConvexSubproblem:
    hv, _, lf, lg = _lie(h, model, x)
    return inspection1_from_lie([(hv, lf, lg)], (alpha_rl,), [p], input_set, u_ref)
