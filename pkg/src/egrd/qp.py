"""Monotonicity constraints and the coefficient-space quadratic program.

The estimation problem is

    minimize    1/2 ||A c - r||^2
    subject to  -D H c <= D f0

where A holds basis rows at the sampled cells, r the sample residuals against
the mean, and D stacks forward differences along bitrate (every resolution)
and along resolution (largest bitrate only). Optional range rows keep the
lowest-bitrate cells above 0 and the top cell below 100. It is stored in the standard
form ``1/2 c'Pc + q'c + constant`` and solved with an ADMM operator-splitting
scheme followed by an active-set polish.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import EigenBasis
from .errors import AxisMismatchError, DomainError, StructureError
from .grid import AxisSpec, SampleSet

QUALITY_RANGE = (0.0, 100.0)


@dataclass(frozen=True, eq=False)
class DifferenceOperators:
    axes: AxisSpec
    d_x: sp.csr_matrix
    d_y: sp.csr_matrix

    @property
    def stacked(self) -> sp.csr_matrix:
        return sp.vstack([self.d_x, self.d_y]).tocsr()


def build_difference_operators(axes: AxisSpec) -> DifferenceOperators:
    """Forward-difference operators consistent with bitrate-major flattening.

    A single-resolution lattice yields an empty ``d_y``.
    """
    nb, nr = axes.shape
    if nb < 2:
        raise StructureError("need at least 2 bitrates for difference operators")
    rows, cols, vals = [], [], []
    r = 0
    for i in range(nb - 1):
        for j in range(nr):
            rows += [r, r]
            cols += [axes.flat_index(i + 1, j), axes.flat_index(i, j)]
            vals += [1.0, -1.0]
            r += 1
    d_x = sp.csr_matrix((vals, (rows, cols)), shape=(r, axes.size))
    rows, cols, vals = [], [], []
    for j in range(nr - 1):
        rows += [j, j]
        cols += [axes.flat_index(nb - 1, j + 1), axes.flat_index(nb - 1, j)]
        vals += [1.0, -1.0]
    d_y = sp.csr_matrix((vals, (rows, cols)), shape=(nr - 1, axes.size))
    return DifferenceOperators(axes, d_x, d_y)


@dataclass(frozen=True, eq=False)
class QpProblem:
    """``minimize 1/2 c'Pc + q'c + constant  s.t.  G c <= h``.

    ``constant`` is half the squared sample residual at ``c = 0``, so
    :meth:`objective` equals half the sum of squared sample errors.
    """

    hessian: np.ndarray
    linear: np.ndarray
    ineq_matrix: np.ndarray
    ineq_bound: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.hessian, dtype=np.float64))
        q = np.asarray(self.linear, dtype=np.float64).reshape(-1)
        n = q.size
        G = np.asarray(self.ineq_matrix, dtype=np.float64).reshape(-1, n)
        h = np.asarray(self.ineq_bound, dtype=np.float64).reshape(-1)
        if P.shape != (n, n) or G.shape[0] != h.size:
            raise StructureError("inconsistent QP dimensions")
        if not np.allclose(P, P.T, atol=1e-10, rtol=0):
            raise StructureError("hessian is not symmetric")
        for name, val in (("hessian", P), ("linear", q), ("ineq_matrix", G), ("ineq_bound", h)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.linear.size

    @property
    def m(self) -> int:
        return self.ineq_bound.size

    def objective(self, c) -> float:
        c = np.asarray(c, dtype=np.float64)
        return float(0.5 * c @ self.hessian @ c + self.linear @ c + self.constant)

    def max_violation(self, c) -> float:
        if self.m == 0:
            return 0.0
        return float(np.max(self.ineq_matrix @ np.asarray(c) - self.ineq_bound))


def assemble_design(
    basis: EigenBasis,
    weights,
    targets,
    n: int,
    ops: DifferenceOperators | None = None,
    constrained: bool = True,
    bounds: tuple[float, float] | None = QUALITY_RANGE,
) -> QpProblem:
    """QP for samples that are linear functionals ``weights @ f`` of the grid.

    Row i of ``weights`` (S x K, dense or sparse) maps a grid vector to the
    model's prediction of sample i; for on-grid samples each row is one-hot.
    When constrained, ``bounds`` appends range rows: the lowest bitrate of
    every resolution stays above ``bounds[0]`` and the top cell below
    ``bounds[1]``. With monotonicity this keeps the whole grid in range.
    """
    H = basis.truncate(n)
    W = sp.csr_matrix(weights) if sp.issparse(weights) else np.asarray(weights, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if W.shape != (targets.size, basis.axes.size):
        raise StructureError("weights must be S x K with one target per row")
    A = np.asarray(W @ H)
    r = targets - np.asarray(W @ basis.mean).reshape(-1)
    P = A.T @ A
    P = 0.5 * (P + P.T)
    if constrained:
        if ops is None:
            ops = build_difference_operators(basis.axes)
        elif ops.axes != basis.axes:
            raise AxisMismatchError("difference operators built for other axes")
        D = ops.stacked
        G = -np.asarray(D @ H)
        h = np.asarray(D @ basis.mean).reshape(-1)
        if bounds is not None:
            axes = basis.axes
            low = [axes.flat_index(0, j) for j in range(len(axes.resolutions))]
            top = axes.size - 1
            G = np.vstack([G, -H[low], H[[top]]])
            h = np.concatenate([h, basis.mean[low] - bounds[0], [bounds[1] - basis.mean[top]]])
    else:
        G, h = np.zeros((0, n)), np.zeros(0)
    return QpProblem(P, -A.T @ r, G, h, 0.5 * float(r @ r))


def assemble_qp(
    basis: EigenBasis,
    samples: SampleSet,
    n: int,
    ops: DifferenceOperators | None = None,
    constrained: bool = True,
    bounds: tuple[float, float] | None = QUALITY_RANGE,
) -> QpProblem:
    if samples.axes != basis.axes:
        raise AxisMismatchError("samples and basis do not share axes")
    if len(samples) == 0:
        raise DomainError("no samples")
    idx = samples.flat_indices
    W = sp.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, basis.axes.size))
    return assemble_design(basis, W, samples.qualities, n, ops, constrained, bounds)


class QpStatus(str, enum.Enum):
    SOLVED = "solved"
    MAX_ITERATIONS = "max_iterations"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpSettings:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_iter: int = 20000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = False
    polish: bool = True
    hessian_reg: float = 1e-10
    check_every: int = 10
    polish_every: int = 50
    infeasible_tol: float = 1e-7
    feasibility_tol: float = 1e-6


@dataclass(frozen=True)
class QpSolution:
    coefficients: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    status: QpStatus
    iterations: int = 0
    polished: bool = False
    duals: np.ndarray = field(default=None, repr=False)

    @property
    def solved(self) -> bool:
        return self.status is QpStatus.SOLVED


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def _kkt_residuals(P, q, G, h, x, y) -> tuple[float, float]:
    prim = max(0.0, float(np.max(G @ x - h))) if h.size else 0.0
    dual = _inf_norm(P @ x + q + G.T @ y)
    return prim, dual


def _polish(P, q, G, h, x, y, settings: QpSettings, z=None, max_refine: int = 25):
    """Recover an exact KKT point from an approximate ADMM iterate.

    Each starting guess of the active set (positive duals, ``z`` on its
    bound, constraints nearly tight at ``x``) is refined primal-dual
    active-set style: solve the equality KKT system, keep constraints with
    positive multipliers, add violated ones, repeat until the set is stable.
    Returns ``(x, y)`` for the first verified KKT point, else None.
    """
    n = q.size
    scale = max(1.0, _inf_norm(y))
    tight = np.abs(h) * 1e-7 + 1e-7
    guesses = [y > 1e-9 * scale, G @ x - h > -tight]
    if z is not None:
        guesses.insert(1, z >= h - tight * 1e-2)
    eps_p = settings.abs_tol + settings.rel_tol * _inf_norm(h)
    seen = set()
    budget = max_refine
    for mask in guesses:
        while budget > 0:
            key = mask.tobytes()
            if key in seen:
                break
            seen.add(key)
            budget -= 1
            active = np.nonzero(mask)[0]
            k = n + active.size
            kkt = np.zeros((k, k))
            kkt[:n, :n] = P
            kkt[n:, :n] = G[active]
            kkt[:n, n:] = G[active].T
            rhs = np.concatenate([-q, h[active]])
            sol = sla.lstsq(kkt, rhs, lapack_driver="gelsy", check_finite=False)[0]
            xp = sol[:n]
            y_full = np.zeros(h.size)
            y_full[active] = sol[n:]
            ymin_tol = settings.abs_tol * max(1.0, float(np.max(np.abs(y_full))))
            viol = G @ xp - h
            if y_full.min() >= -ymin_tol:
                y_full = np.maximum(y_full, 0.0)
                prim, dual = _kkt_residuals(P, q, G, h, xp, y_full)
                eps_pp = eps_p + settings.rel_tol * _inf_norm(G @ xp)
                eps_d = settings.abs_tol + settings.rel_tol * max(
                    _inf_norm(P @ xp), _inf_norm(G.T @ y_full), _inf_norm(q)
                )
                if prim <= eps_pp and dual <= eps_d:
                    return xp, y_full
            mask = (y_full > ymin_tol) | (viol > eps_p)
    return None


def _kkt_ok(P, q, G, h, x, y, settings: QpSettings) -> bool:
    prim, dual = _kkt_residuals(P, q, G, h, x, y)
    eps_p = settings.abs_tol + settings.rel_tol * max(_inf_norm(h), _inf_norm(G @ x))
    eps_d = settings.abs_tol + settings.rel_tol * max(_inf_norm(P @ x), _inf_norm(G.T @ y), _inf_norm(q))
    return prim <= eps_p and dual <= eps_d


def _active_set(P, q, G, h, x, settings: QpSettings, max_steps: int | None = None):
    """Primal active-set method from a feasible ``x``.

    Slower to start than the polish but does not depend on the quality of the
    ADMM iterate. Returns ``(x, y)`` or None when the step budget runs out.
    """
    n, m = q.size, h.size
    max_steps = max_steps or 3 * n + 50
    tol = settings.abs_tol * max(1.0, _inf_norm(h))
    work: list[int] = []
    x = x.copy()
    for _ in range(max_steps):
        g = P @ x + q
        k = len(work)
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = P
        if k:
            kkt[n:, :n] = G[work]
            kkt[:n, n:] = G[work].T
        sol = sla.lstsq(kkt, np.concatenate([-g, np.zeros(k)]), lapack_driver="gelsy", check_finite=False)[0]
        p, lam = sol[:n], sol[n:]
        if _inf_norm(p) <= 1e-12 * max(1.0, _inf_norm(x)):
            y = np.zeros(m)
            y[work] = lam
            if k == 0 or lam.min() >= -tol:
                y = np.maximum(y, 0.0)
                return (x, y) if _kkt_ok(P, q, G, h, x, y, settings) else None
            work.pop(int(np.argmin(lam)))
            continue
        Gp = G @ p
        slack = h - G @ x
        step, block = 1.0, -1
        mask = Gp > 1e-14 * max(1.0, _inf_norm(p))
        mask[work] = False
        if np.any(mask):
            ratios = np.full(m, np.inf)
            ratios[mask] = np.maximum(slack[mask], 0.0) / Gp[mask]
            i = int(np.argmin(ratios))
            if ratios[i] < 1.0:
                step, block = float(ratios[i]), i
        x = x + step * p
        if block >= 0:
            work.append(block)
    return None


def _equilibrate(P, q, G, iterations: int = 10):
    """Ruiz scaling of the KKT matrix: returns (D, E, cost_scale)."""
    n, m = q.size, G.shape[0]
    D, E = np.ones(n), np.ones(m)
    Ps, Gs, qs = P.copy(), G.copy(), q.copy()
    c = 1.0
    for _ in range(iterations):
        col = np.maximum(np.abs(Ps).max(axis=0), np.abs(Gs).max(axis=0) if m else 0.0)
        row = np.abs(Gs).max(axis=1) if m else np.zeros(0)
        d = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
        e = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
        Ps = d[:, None] * Ps * d[None, :]
        Gs = e[:, None] * Gs * d[None, :]
        qs = d * qs
        D, E = D * d, E * e
        gamma = 1.0 / np.clip(max(np.abs(Ps).max(axis=0).mean(), _inf_norm(qs)), 1e-4, 1e4)
        Ps, qs, c = gamma * Ps, gamma * qs, c * gamma
    return D, E, c


def solve_qp(problem: QpProblem, settings: QpSettings | None = None) -> QpSolution:
    """ADMM (OSQP-style splitting) with periodic active-set polishing.

    ADMM iterates on the hessian plus ``hessian_reg * I`` so its linear
    system stays definite when S < N; polishing and the reported residuals use
    the hessian as given, so the regularization does not bias exact fits.
    Deterministic: no randomization, fixed iteration order.
    """
    s = settings or QpSettings()
    P0 = problem.hessian
    P = P0 + s.hessian_reg * np.eye(problem.n)
    q, G, h = problem.linear, problem.ineq_matrix, problem.ineq_bound
    n, m = problem.n, problem.m

    def finish(x, y, status, it, polished):
        prim, dual = _kkt_residuals(P0, q, G, h, x, y)
        return QpSolution(x, problem.objective(x), prim, dual, status, it, polished, y)

    if m == 0:
        x = sla.lstsq(P0, -q)[0]
        return finish(x, np.zeros(0), QpStatus.SOLVED, 0, False)

    # Run ADMM on the equilibrated problem; test termination in original units.
    D, E, cost = _equilibrate(P, q, G)
    Ps = cost * D[:, None] * P * D[None, :]
    qs = cost * D * q
    Gs = E[:, None] * G * D[None, :]
    hs = E * h

    def unscale(xs, ys):
        return D * xs, E * ys / cost

    def try_polish(xs, ys, zs):
        if not s.polish:
            return None
        xu, yu = unscale(xs, ys)
        out = _polish(P0, q, G, h, xu, yu, s, zs / E)
        if out is None:
            start = next((c for c in (xu, np.zeros(n)) if problem.max_violation(c) <= 0.0), None)
            if start is not None:
                out = _active_set(P0, q, G, h, start, s)
        return out

    rho = s.rho
    factor = sla.cho_factor(Ps + s.sigma * np.eye(n) + rho * Gs.T @ Gs)
    x, z, y = np.zeros(n), np.minimum(np.zeros(m), hs), np.zeros(m)
    y_check = y.copy()
    it = 0
    for it in range(1, s.max_iter + 1):
        x_tilde = sla.cho_solve(factor, s.sigma * x - qs + Gs.T @ (rho * z - y))
        z_tilde = Gs @ x_tilde
        x = s.alpha * x_tilde + (1 - s.alpha) * x
        z_relax = s.alpha * z_tilde + (1 - s.alpha) * z
        z_new = np.minimum(z_relax + y / rho, hs)
        y = y + rho * (z_relax - z_new)
        z = z_new

        if it % s.check_every == 0 or it == s.max_iter:
            xu, yu = unscale(x, y)
            zu = z / E
            Gx = G @ xu
            r_prim = _inf_norm(Gx - zu)
            r_dual = _inf_norm(P @ xu + q + G.T @ yu)
            eps_p = s.abs_tol + s.rel_tol * max(_inf_norm(Gx), _inf_norm(zu))
            eps_d = s.abs_tol + s.rel_tol * max(_inf_norm(P @ xu), _inf_norm(G.T @ yu), _inf_norm(q))
            if r_prim <= eps_p and r_dual <= eps_d:
                polished = try_polish(x, y, z)
                if polished is not None:
                    return finish(*polished, QpStatus.SOLVED, it, True)
                if problem.max_violation(xu) <= s.feasibility_tol:
                    return finish(xu, yu, QpStatus.SOLVED, it, False)
            dy = y - y_check
            y_check = y.copy()
            ndy = _inf_norm(dy)
            if ndy > s.infeasible_tol and np.all(dy >= -s.infeasible_tol * ndy):
                if _inf_norm(Gs.T @ dy) <= s.infeasible_tol * ndy and hs @ np.maximum(dy, 0) < -s.infeasible_tol * ndy:
                    return finish(xu, yu, QpStatus.INFEASIBLE, it, False)
            if s.adaptive_rho and r_dual > 0 and r_prim > 0:
                ratio = np.sqrt((r_prim / max(eps_p, 1e-300)) / (r_dual / max(eps_d, 1e-300)))
                if ratio > 5 or ratio < 0.2:
                    rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                    factor = sla.cho_factor(Ps + s.sigma * np.eye(n) + rho * Gs.T @ Gs)
        if it % s.polish_every == 0:
            polished = try_polish(x, y, z)
            if polished is not None:
                return finish(*polished, QpStatus.SOLVED, it, True)
    polished = try_polish(x, y, z)
    if polished is not None:
        return finish(*polished, QpStatus.SOLVED, it, True)
    x, y = unscale(x, y)
    return finish(x, y, QpStatus.MAX_ITERATIONS, it, False)
