"""Linear programs: a dense revised simplex solver and problem builders.

Problems are stated as

    minimize    c @ x
    subject to  A[i] @ x  (<=, =, >=)  b[i]
                lb <= x <= ub          (entries may be infinite)

and solved either by the built-in two-phase revised simplex (``method="simplex"``)
or by HiGHS through :func:`scipy.optimize.linprog` (``method="highs"``).  The
default ``"auto"`` picks the simplex for small dense problems and HiGHS for the
large ones that show up in the species and fine-grid instances.

Whatever the backend, the reported duality gap and residuals are recomputed
here from the returned primal and dual vectors, so the certificate never takes
the solver's word for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, sparse

__all__ = [
    "LpProblem",
    "LpSolution",
    "SolverFailure",
    "solve",
    "reduce_linf_objective",
    "write_mps",
]

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8
OPT_TOL = 1e-12
REFACTOR_EVERY = 50
AUTO_DENSE_LIMIT = 40_000   # above this the dense simplex is 10-50x slower than HiGHS
POLISH_LIMIT = 2_000_000
HIGHS_TIME_LIMIT = 10.0

LE, EQ, GE = "<=", "=", ">="


class SolverFailure(RuntimeError):
    """Raised by callers that need an optimal solution and did not get one."""

    def __init__(self, status: str, message: str = ""):
        super().__init__(f"LP solver returned status {status!r}" + (f": {message}" if message else ""))
        self.status = status


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    b: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    names: Sequence[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if not sparse.issparse(self.A):
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        m, n = self.A.shape
        if self.c.shape != (n,):
            raise ValueError(f"cost vector has length {self.c.size}, expected {n}")
        if self.b.shape != (m,):
            raise ValueError(f"rhs has length {self.b.size}, expected {m}")
        self.senses = list(self.senses)
        if len(self.senses) != m or any(s not in (LE, EQ, GE) for s in self.senses):
            raise ValueError("need one sense in {'<=', '=', '>='} per row")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("bounds do not match the number of variables")
        if np.any(self.lb > self.ub) or np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise ValueError("inconsistent variable bounds")
        dense_vals = self.A.data if sparse.issparse(self.A) else self.A
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(dense_vals)) and np.all(np.isfinite(self.b))):
            raise ValueError("LP coefficients must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def dense_A(self) -> np.ndarray:
        return self.A.toarray() if sparse.issparse(self.A) else self.A

    def scaled(self, alpha: float) -> "LpProblem":
        return LpProblem(alpha * self.c, self.A, self.senses, self.b, self.lb, self.ub, self.names)


@dataclass
class LpSolution:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    dual_objective: float = math.nan
    gap: float = math.nan
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    complementarity: float = math.nan
    iterations: int = 0
    backend: str = ""
    message: str = ""
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def require_optimal(self) -> "LpSolution":
        if not self.optimal:
            raise SolverFailure(self.status, self.message)
        return self


def solve(problem: LpProblem, method: str = "auto") -> LpSolution:
    """Solve ``problem``; ``method`` is ``"auto"``, ``"simplex"`` or ``"highs"``."""
    m, n = problem.shape
    if method not in ("simplex", "highs", "auto"):
        raise ValueError(f"unknown LP method {method!r}")
    if method == "auto":
        method = "simplex" if (m * n <= AUTO_DENSE_LIMIT and not sparse.issparse(problem.A)) else "highs"
        fallback = method == "simplex"
    else:
        fallback = False
    sol = _RevisedSimplex(problem).run() if method == "simplex" else _solve_highs(problem)
    if sol.optimal:
        _certify(problem, sol)
        if method == "simplex" and not _certified(problem, sol):
            sol = LpSolution(status="failed", backend="simplex", iterations=sol.iterations,
                             message=f"certificate check failed (primal residual {sol.primal_residual:.3g}, "
                                     f"dual residual {sol.dual_residual:.3g})")
    if fallback and sol.status != "optimal":
        # an ill-conditioned basis defeated the dense solver (its infeasible/unbounded verdicts
        # carry no certificate either); HiGHS factors with pivoting and scaling
        retry = _solve_highs(problem)
        if retry.optimal:
            _certify(problem, retry)
            retry.stats["fallback_from"] = "simplex"
        return retry
    return sol


def _certified(problem: LpProblem, sol: LpSolution) -> bool:
    scale_b = 1.0 + np.abs(problem.b).max(initial=0.0)
    scale_c = 1.0 + abs(sol.objective)
    return (sol.primal_residual <= FEAS_TOL * scale_b and sol.dual_residual <= FEAS_TOL * (1.0 + np.abs(problem.c).max())
            and sol.gap <= 1e-7 * scale_c)


# --------------------------------------------------------------------------
# certification shared by both backends


def _certify(problem: LpProblem, sol: LpSolution) -> None:
    A = problem.A
    x, y = sol.x, sol.y
    Ax = A @ x
    viol = np.zeros(len(Ax))
    for i, s in enumerate(problem.senses):
        r = Ax[i] - problem.b[i]
        viol[i] = max(r, 0.0) if s == LE else (max(-r, 0.0) if s == GE else abs(r))
    bound_viol = np.maximum(problem.lb - x, 0.0).max(initial=0.0) + np.maximum(x - problem.ub, 0.0).max(initial=0.0)
    sol.primal_residual = float(max(viol.max(initial=0.0), bound_viol))

    rc = problem.c - A.T @ y
    sol.reduced_costs = np.asarray(rc)
    senses = np.asarray(problem.senses)
    sign_viol = np.concatenate([np.maximum(y[senses == LE], 0.0), np.maximum(-y[senses == GE], 0.0)])
    free_lo, free_hi = ~np.isfinite(problem.lb), ~np.isfinite(problem.ub)
    rc_viol = np.concatenate([np.maximum(rc[free_lo], 0.0), np.maximum(-rc[free_hi], 0.0)])
    sol.dual_residual = float(max(sign_viol.max(initial=0.0), rc_viol.max(initial=0.0)))
    dual = float(problem.b @ y)
    comp = float(np.abs(y * (Ax - problem.b)).sum())
    for j in range(len(x)):
        r = rc[j]
        if r > 0:
            if np.isfinite(problem.lb[j]):
                dual += r * problem.lb[j]
                comp += abs(r * (x[j] - problem.lb[j]))
            elif r > FEAS_TOL:
                dual = -math.inf
        elif r < 0:
            if np.isfinite(problem.ub[j]):
                dual += r * problem.ub[j]
                comp += abs(r * (problem.ub[j] - x[j]))
            elif r < -FEAS_TOL:
                dual = -math.inf
    sol.dual_objective = dual
    sol.gap = abs(sol.objective - dual)
    sol.complementarity = comp


# --------------------------------------------------------------------------
# HiGHS backend


def _solve_highs(problem: LpProblem) -> LpSolution:
    A = sparse.csr_matrix(problem.A)
    senses = np.array(problem.senses)
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    ineq_rows = np.flatnonzero(le | ge)
    sign = np.where(ge[ineq_rows], -1.0, 1.0)
    A_ub = sparse.diags(sign) @ A[ineq_rows] if ineq_rows.size else None
    b_ub = sign * problem.b[ineq_rows] if ineq_rows.size else None
    eq_rows = np.flatnonzero(eq)
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = problem.b[eq_rows] if eq_rows.size else None
    bounds = np.column_stack([
        np.where(np.isfinite(problem.lb), problem.lb, -np.inf),
        np.where(np.isfinite(problem.ub), problem.ub, np.inf),
    ])
    tight = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10,
             "time_limit": HIGHS_TIME_LIMIT}
    attempts = (("highs-ds", tight), ("highs-ipm", {}), ("highs-ds", {"presolve": False}), ("highs", {}))
    for meth, opts in attempts:
        # dual simplex either finishes quickly or stalls/reports numerical trouble on
        # badly scaled Poisson kernels; the interior point method is the steady fallback
        res = optimize.linprog(problem.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                               method=meth, options=opts)
        if res.status in (0, 2, 3):
            break
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "failed")
    sol = LpSolution(status=status, backend="highs", message=str(res.message),
                     iterations=int(getattr(res, "nit", 0) or 0))
    if status != "optimal":
        return sol
    y = np.zeros(problem.shape[0])
    if ineq_rows.size:
        y[ineq_rows] = sign * res.ineqlin.marginals
    if eq_rows.size:
        y[eq_rows] = res.eqlin.marginals
    sol.x, sol.y = _polish(problem, np.asarray(res.x, dtype=float), y)
    sol.objective = float(problem.c @ sol.x)
    return sol


def _violation(problem: LpProblem, x) -> float:
    r = problem.A @ x - problem.b
    senses = np.asarray(problem.senses)
    v = np.where(senses == LE, np.maximum(r, 0.0), np.where(senses == GE, np.maximum(-r, 0.0), np.abs(r)))
    return float(max(v.max(initial=0.0), np.maximum(problem.lb - x, 0.0).max(initial=0.0),
                     np.maximum(x - problem.ub, 0.0).max(initial=0.0)))


def _dual_violation(problem: LpProblem, y) -> float:
    """Largest violation of dual sign constraints and of stationarity on unbounded directions."""
    senses = np.asarray(problem.senses)
    rc = problem.c - problem.A.T @ y
    v = [np.maximum(y[senses == LE], 0.0), np.maximum(-y[senses == GE], 0.0),
         np.maximum(rc[~np.isfinite(problem.lb)], 0.0), np.maximum(-rc[~np.isfinite(problem.ub)], 0.0)]
    return float(max(a.max(initial=0.0) for a in v))


def _polish(problem: LpProblem, x, y, tol: float = 1e-7):
    """Re-solve the active set of an interior-tolerance solution exactly.

    HiGHS works to scaled tolerances, which on badly scaled kernels leaves
    residuals around 1e-9.  Fixing the active constraints and bounds and
    solving the resulting square-ish system by least squares recovers the
    vertex to machine precision; the result is kept only if it is better.
    """
    m, n = problem.shape
    if m * n > POLISH_LIMIT:
        return x, y
    A = problem.dense_A()
    scale = 1.0 + np.abs(problem.b).max(initial=0.0)
    act = np.abs(A @ x - problem.b) <= tol * scale
    act |= np.asarray(problem.senses) == EQ
    at_lo = np.isfinite(problem.lb) & (np.abs(x - problem.lb) <= tol * scale)
    at_hi = np.isfinite(problem.ub) & (np.abs(x - problem.ub) <= tol * scale) & ~at_lo
    fixed = at_lo | at_hi
    xs = x.copy()
    xs[at_lo], xs[at_hi] = problem.lb[at_lo], problem.ub[at_hi]
    free = ~fixed
    if act.any() and free.any():
        rhs = problem.b[act] - A[np.ix_(act, fixed)] @ xs[fixed]
        xs[free] = np.linalg.lstsq(A[np.ix_(act, free)], rhs, rcond=None)[0]
    if _violation(problem, xs) <= _violation(problem, x) and problem.c @ xs <= problem.c @ x + tol * (1 + abs(problem.c @ x)):
        x = xs
    # duals: supported on active rows, reduced costs vanish on free columns
    ys = np.zeros_like(y)
    if act.any() and free.any():
        ys[act] = np.linalg.lstsq(A[np.ix_(act, free)].T, problem.c[free], rcond=None)[0]
        if _dual_violation(problem, ys) < _dual_violation(problem, y):
            y = ys
    return x, y


# --------------------------------------------------------------------------
# dense revised simplex


class _RevisedSimplex:
    """Two-phase revised primal simplex on an explicit basis inverse.

    The user problem is brought to ``min c z, M z = r, z >= 0, r >= 0``:
    lower bounds are shifted out, free variables split, finite upper bounds
    become rows, inequalities get slacks, and rows with negative rhs are
    negated.  Slack columns with coefficient +1 seed the basis; the remaining
    rows get artificial variables for phase I.
    """

    def __init__(self, problem: LpProblem):
        self.p = problem
        self.iterations = 0

    def _standard_form(self):
        p = self.p
        A = p.dense_A()
        m, n = A.shape
        cols, costs = [], []
        recover = []  # per original var: list of (std col, coef), offset
        offset_b = np.zeros(m)
        extra_rows = []  # (std col, ub - lb)
        const = 0.0
        for j in range(n):
            lo, hi = p.lb[j], p.ub[j]
            a = A[:, j]
            if np.isfinite(lo):
                k = len(cols)
                cols.append(a)
                costs.append(p.c[j])
                offset_b -= a * lo
                const += p.c[j] * lo
                recover.append(([(k, 1.0)], lo))
                if np.isfinite(hi):
                    extra_rows.append((k, hi - lo))
            elif np.isfinite(hi):
                k = len(cols)
                cols.append(-a)
                costs.append(-p.c[j])
                offset_b -= a * hi
                const += p.c[j] * hi
                recover.append(([(k, -1.0)], hi))
            else:
                k = len(cols)
                cols.extend([a, -a])
                costs.extend([p.c[j], -p.c[j]])
                recover.append(([(k, 1.0), (k + 1, -1.0)], 0.0))
        nstruct = len(cols)
        M = np.column_stack(cols) if cols else np.zeros((m, 0))
        rhs = p.b + offset_b
        row_sense = list(p.senses)
        if extra_rows:
            E = np.zeros((len(extra_rows), nstruct))
            for i, (k, u) in enumerate(extra_rows):
                E[i, k] = 1.0
            M = np.vstack([M, E])
            rhs = np.concatenate([rhs, [u for _, u in extra_rows]])
            row_sense += [LE] * len(extra_rows)
        mm = M.shape[0]
        slack_cols = []
        for i, s in enumerate(row_sense):
            if s != EQ:
                col = np.zeros(mm)
                col[i] = 1.0 if s == LE else -1.0
                slack_cols.append(col)
        if slack_cols:
            M = np.hstack([M, np.column_stack(slack_cols)])
        costs = np.concatenate([np.asarray(costs, dtype=float), np.zeros(len(slack_cols))])
        flip = np.where(rhs < 0, -1.0, 1.0)
        M = M * flip[:, None]
        rhs = rhs * flip
        self.M, self.rhs, self.cost, self.flip = M, rhs, costs, flip
        self.recover, self.const, self.m_orig = recover, const, m
        self.nstd = M.shape[1]

    def run(self) -> LpSolution:
        self._standard_form()
        M, rhs = self.M, self.rhs
        mm, nn = M.shape
        if mm == 0:
            return self._no_rows()
        # initial basis: unit columns where available, artificials elsewhere
        basis = -np.ones(mm, dtype=int)
        unit = np.flatnonzero((np.abs(M) > 0).sum(axis=0) == 1)
        for j in unit:
            i = int(np.flatnonzero(M[:, j])[0])
            if basis[i] < 0 and M[i, j] == 1.0:
                basis[i] = j
        art_rows = np.flatnonzero(basis < 0)
        nart = art_rows.size
        if nart:
            Art = np.zeros((mm, nart))
            Art[art_rows, np.arange(nart)] = 1.0
            M = np.hstack([M, Art])
            basis[art_rows] = nn + np.arange(nart)
        self.Mfull = M
        self.is_art = np.zeros(M.shape[1], dtype=bool)
        self.is_art[nn:] = True
        self.basis = basis
        self._refactor()

        if nart:
            c1 = np.where(self.is_art, 1.0, 0.0)
            status = self._iterate(c1, allow_art=True)
            if status != "optimal":
                return self._fail(status if status == "failed" else "failed")
            if float(c1[self.basis] @ self.xB) > FEAS_TOL * (1.0 + np.abs(rhs).max(initial=0.0)):
                return LpSolution(status="infeasible", backend="simplex", iterations=self.iterations)
            self._drive_out_artificials()
        c2 = np.concatenate([self.cost, np.zeros(nart)])
        status = self._iterate(c2, allow_art=False)
        if status != "optimal":
            return LpSolution(status=status, backend="simplex", iterations=self.iterations)
        return self._extract(c2)

    def _no_rows(self) -> LpSolution:
        if np.any(self.cost < -FEAS_TOL):
            return LpSolution(status="unbounded", backend="simplex")
        x = self._recover_x(np.zeros(self.nstd))
        return LpSolution(status="optimal", objective=float(self.p.c @ x), x=x,
                          y=np.zeros(self.m_orig), backend="simplex")

    def _fail(self, status):
        return LpSolution(status=status, backend="simplex", iterations=self.iterations,
                          message="singular basis or iteration limit")

    def _refactor(self):
        B = self.Mfull[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            self.Binv = None
            return False
        self.xB = self.Binv @ self.rhs
        self.xB[np.abs(self.xB) < 1e-13] = 0.0
        self.since_refactor = 0
        return True

    def _iterate(self, c, allow_art: bool) -> str:
        M = self.Mfull
        mm, ntot = M.shape
        max_iter = 50 * (mm + ntot) + 1000
        degenerate_run = 0
        bland = False
        blocked = self.is_art if not allow_art else np.zeros(ntot, dtype=bool)
        while self.iterations < max_iter:
            if self.Binv is None:
                return "failed"
            y = c[self.basis] @ self.Binv
            d = c - y @ M
            d[self.basis] = 0.0
            d[blocked] = 0.0
            cand = np.flatnonzero(d < -OPT_TOL * (1.0 + np.abs(c).max(initial=0.0)))
            if cand.size == 0:
                return "optimal"
            q = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            u = self.Binv @ M[:, q]
            r = self._ratio_test(u, bland)
            if r is None:
                return "unbounded"
            step = self.xB[r] / u[r]
            if step <= 1e-14:
                degenerate_run += 1
                if degenerate_run > 3 * (mm + ntot):
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            self._pivot(r, q, u)
            self.iterations += 1
        return "failed"

    def _ratio_test(self, u, bland):
        """Harris two-pass ratio test; Bland mode takes the lowest basic index among ties."""
        xB = np.maximum(self.xB, 0.0)
        art0 = self.is_art[self.basis] & (xB <= FEAS_TOL) & (np.abs(u) > PIVOT_TOL)
        if art0.any():
            # an artificial sitting at zero must leave before anything moves
            rows = np.flatnonzero(art0)
            return int(rows[np.argmax(np.abs(u[rows]))])
        rows = np.flatnonzero(u > PIVOT_TOL)
        if rows.size == 0:
            return None
        ratios = xB[rows] / u[rows]
        if bland:
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12]
            return int(ties[np.argmin(self.basis[ties])])
        relaxed = ((xB[rows] + FEAS_TOL) / u[rows]).min()
        ok = rows[ratios <= relaxed]
        return int(ok[np.argmax(u[ok])])

    def _pivot(self, r, q, u):
        piv = u[r]
        step = max(self.xB[r], 0.0) / piv
        self.xB -= step * u
        self.xB[r] = step
        row = self.Binv[r] / piv
        self.Binv -= np.outer(u, row)
        self.Binv[r] = row
        self.basis[r] = q
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self._refactor()
            if self.Binv is not None and self.xB.min(initial=0.0) < -1e3 * FEAS_TOL * (1.0 + np.abs(self.rhs).max()):
                # fresh factorization disagrees with the updated iterate: the basis is too ill-conditioned
                self.Binv = None
        else:
            self.xB[np.abs(self.xB) < 1e-13] = 0.0

    def _drive_out_artificials(self):
        M = self.Mfull
        for r in range(len(self.basis)):
            if not self.is_art[self.basis[r]]:
                continue
            row = self.Binv[r] @ M
            row[self.is_art] = 0.0
            row[self.basis] = 0.0
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size:
                q = int(cand[np.argmax(np.abs(row[cand]))])
                self._pivot(r, q, self.Binv @ M[:, q])
            # else: redundant row, the artificial stays basic at zero

    def _recover_x(self, z):
        x = np.empty(len(self.recover))
        for j, (terms, off) in enumerate(self.recover):
            x[j] = off + sum(coef * z[k] for k, coef in terms)
        return x

    def _extract(self, c2) -> LpSolution:
        self._refactor()
        z = np.zeros(self.Mfull.shape[1])
        z[self.basis] = np.maximum(self.xB, 0.0)
        x = self._recover_x(z[: self.nstd])
        y_std = c2[self.basis] @ self.Binv
        y = (y_std * self.flip)[: self.m_orig]
        return LpSolution(status="optimal", objective=float(self.p.c @ x), x=x, y=y,
                          iterations=self.iterations, backend="simplex")


# --------------------------------------------------------------------------
# builders


def reduce_linf_objective(A, h, t: float, extra_cols=None, extra_costs=None) -> LpProblem:
    """LP for ``min_g ||A g - h||_inf + t ||g||_inf``.

    Variables are ``[g (free), u >= 0, v >= 0]`` with ``u >= |A g - h|`` and
    ``v >= |g|`` componentwise; the objective is ``u + t v``.  Optional
    ``extra_cols`` (one column per moment function, length ``len(h)``) are free
    variables ``a_k`` entering the residual as ``A g + sum a_k col_k - h`` and
    paying ``extra_costs[k] * |a_k|`` (encoded through split variables).
    A sparse ``A`` yields a sparse problem.
    """
    is_sparse = sparse.issparse(A)
    A = sparse.csr_matrix(A) if is_sparse else np.atleast_2d(np.asarray(A, dtype=float))
    h = np.asarray(h, dtype=float)
    m, k = A.shape
    if h.shape != (m,):
        raise ValueError("h must have one entry per row of A")
    if t < 0:
        raise ValueError("t must be nonnegative")
    C = np.zeros((m, 0)) if extra_cols is None else np.atleast_2d(np.asarray(extra_cols, dtype=float)).reshape(-1, m).T
    q = C.shape[1]
    costs = np.zeros(q) if extra_costs is None else np.asarray(extra_costs, dtype=float)
    # columns: g (k), u, v, a+ (q), a- (q)
    nv = k + 2 + 2 * q
    stack_h = sparse.hstack if is_sparse else np.hstack
    stack_v = sparse.vstack if is_sparse else np.vstack
    one_m, one_k = np.ones((m, 1)), np.ones((k, 1))
    eye_k = sparse.identity(k, format="csr") if is_sparse else np.eye(k)
    top = stack_h([A, -one_m, np.zeros((m, 1)), C, -C])
    bot = stack_h([-A, -one_m, np.zeros((m, 1)), -C, C])
    gpos = stack_h([eye_k, np.zeros((k, 1)), -one_k, np.zeros((k, 2 * q))])
    gneg = stack_h([-eye_k, np.zeros((k, 1)), -one_k, np.zeros((k, 2 * q))])
    Amat = stack_v([top, bot, gpos, gneg])
    if is_sparse:
        Amat = sparse.csr_matrix(Amat)
    b = np.concatenate([h, -h, np.zeros(2 * k)])
    c = np.zeros(nv)
    c[k], c[k + 1] = 1.0, t
    c[k + 2:k + 2 + q] = costs
    c[k + 2 + q:] = costs
    lb = np.concatenate([np.full(k, -np.inf), np.zeros(2 + 2 * q)])
    names = [f"g{j}" for j in range(k)] + ["u", "v"] + [f"ap{j}" for j in range(q)] + [f"an{j}" for j in range(q)]
    return LpProblem(c, Amat, [LE] * Amat.shape[0], b, lb, None, names)


def write_mps(problem: LpProblem, path, name: str = "UNSEENLP") -> None:
    """Dump ``problem`` in fixed-format MPS.

    Field columns follow the classic layout: type code at column 2, names at
    columns 5 and 15, values at columns 25 and 50.  Rows are ``R<i>`` and
    columns ``C<j>`` unless the problem carries variable names.
    """
    A = problem.dense_A()
    m, n = A.shape
    cname = [(problem.names[j] if problem.names else f"C{j}")[:8] for j in range(n)]
    rcode = {LE: "L", EQ: "E", GE: "G"}
    lines = [f"NAME          {name[:8]}", "ROWS", " N  COST"]
    lines += [f" {rcode[s]}  R{i}" for i, s in enumerate(problem.senses)]
    lines.append("COLUMNS")
    for j in range(n):
        if problem.c[j] != 0:
            lines.append(f"    {cname[j]:<8}  {'COST':<8}  {problem.c[j]:>12.6g}")
        for i in np.flatnonzero(A[:, j]):
            lines.append(f"    {cname[j]:<8}  {'R' + str(i):<8}  {A[i, j]:>12.6g}")
    lines.append("RHS")
    for i in np.flatnonzero(problem.b):
        lines.append(f"    {'RHS':<8}  {'R' + str(i):<8}  {problem.b[i]:>12.6g}")
    lines.append("BOUNDS")
    for j in range(n):
        lo, hi = problem.lb[j], problem.ub[j]
        if lo == -np.inf and hi == np.inf:
            lines.append(f" FR BND       {cname[j]:<8}")
            continue
        if lo == -np.inf:
            lines.append(f" MI BND       {cname[j]:<8}")
        elif lo != 0:
            lines.append(f" LO BND       {cname[j]:<8}  {lo:>12.6g}")
        if hi != np.inf:
            lines.append(f" UP BND       {cname[j]:<8}  {hi:>12.6g}")
    lines.append("ENDATA")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
