"""Moduli of continuity of linear functionals of mixing distributions.

For a kernel P and functional T(pi) = <h, pi> the moduli compare the largest
change T(pi') - T(pi) against how far apart the mixtures pi P and pi' P are:

* ``bias_variance_lp``  min_g ||P g - h||_inf + t ||g||_inf (the estimator side)
* ``tv_dual_lp``        its exact signed-measure dual
* ``divergence_modulus`` the chi^2 / Hellinger / TV moduli over pairs of priors
* ``delta_st``          the exponential-functional program used for species

Budgets: chi^2 <= t^2, H^2 <= t^2 and TV <= t.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import optimize

from . import lp as lpmod
from .probspace import (
    DiscreteDistribution,
    Kernel,
    SignedMeasure,
    SupportGrid,
    make_poisson_kernel,
)

__all__ = [
    "ModulusQuery",
    "ModulusResult",
    "bias_variance_lp",
    "tv_dual_lp",
    "divergence_modulus",
    "delta_bv_exact_small",
    "delta_st",
    "default_st_grid",
    "FW_MAX_ITER",
]

FW_MAX_ITER = 2000
FW_GAP_TOL = 1e-4
OUT = -1e300   # line-search derivative outside the domain
MAX_FW_GRID = 200
MAX_BV_GRID = 12


@dataclass(frozen=True, eq=False)
class ModulusQuery:
    kernel: Kernel
    h: np.ndarray
    kind: str = "tv"
    t: float = 0.0
    constraints: tuple = ()

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.shape != (len(self.kernel.theta_grid),) or not np.all(np.isfinite(h)):
            raise ValueError("h must be finite with one value per parameter point")
        if self.kind not in ("tv", "chi2", "hellinger"):
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise ValueError("budget t must be finite and nonnegative")
        cons = []
        for c, b in self.constraints:
            c = np.asarray(c, dtype=float)
            if c.shape != h.shape or not math.isfinite(b):
                raise ValueError("moment constraint must be (vector on theta grid, finite bound)")
            cons.append((c, float(b)))
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "constraints", tuple(cons))

    def with_t(self, t: float, kind: str | None = None) -> "ModulusQuery":
        return ModulusQuery(self.kernel, self.h, kind or self.kind, t, self.constraints)


@dataclass
class ModulusResult:
    value: float
    witness: dict
    certificate: dict = field(default_factory=dict)
    solver_stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "witness": _jsonable(self.witness),
                "certificate": _jsonable(self.certificate), "solver_stats": _jsonable(self.solver_stats)}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (DiscreteDistribution, SignedMeasure)):
        return obj.to_dict()
    return obj


def _stats(sol: lpmod.LpSolution) -> dict:
    return {"backend": sol.backend, "status": sol.status, "iterations": sol.iterations,
            "primal_residual": sol.primal_residual, "dual_residual": sol.dual_residual,
            "gap": sol.gap}


# --------------------------------------------------------------------------
# TV: primal bias-variance LP and its dual


def bias_variance_lp(query: ModulusQuery, method: str = "auto") -> ModulusResult:
    """min over g (and moment multipliers a) of ||P g + sum a_k c_k - h||_inf + t||g||_inf + sum b_k |a_k|.

    Without moment constraints this is the plain bias-variance LP.  The
    observation grid includes the truncation overflow cell when the kernel has
    one, so the value equals :func:`tv_dual_lp` exactly.
    """
    P = query.kernel.augmented_rows()
    cols = [c for c, _ in query.constraints] or None
    costs = [abs(b) for _, b in query.constraints] or None
    prob = lpmod.reduce_linf_objective(P, query.h, query.t, cols, costs)
    sol = lpmod.solve(prob, method).require_optimal()
    k = P.shape[1]
    g = sol.x[:k]
    q = len(query.constraints)
    a = sol.x[k + 2:k + 2 + q] - sol.x[k + 2 + q:]
    resid = P @ g + sum(ak * c for ak, (c, _) in zip(a, query.constraints)) - query.h
    bias = float(np.abs(resid).max())
    gnorm = float(np.abs(g).max())
    value = float(sol.objective)
    return ModulusResult(
        value=value,
        witness={"g": g, "moment_multipliers": a},
        certificate={"bias_sup": bias, "g_sup": gnorm, "t": query.t,
                     "recomputed_value": bias + query.t * gnorm + float(np.dot(np.abs(a), costs or [])),
                     "duality_gap": sol.gap, "has_overflow_cell": query.kernel.has_tail},
        solver_stats=_stats(sol),
    )


def forced_zero_rows(P: np.ndarray) -> np.ndarray:
    """Rows i with Delta_i = 0 for every Delta satisfying Delta P = 0 exactly.

    Peeling: a column with a single nonzero among the remaining rows forces
    that row to zero, which may leave other columns with a single nonzero.
    Structural, so it is immune to the tiny entries that make (say) a
    binomial kernel numerically singular while it is exactly invertible.
    """
    nz = np.asarray(P) != 0
    alive = np.ones(nz.shape[0], dtype=bool)
    changed = True
    while changed:
        changed = False
        counts = nz[alive].sum(axis=0)
        for j in np.flatnonzero(counts == 1):
            i = np.flatnonzero(nz[:, j] & alive)
            if i.size == 1 and alive[i[0]]:
                alive[i[0]] = False
                changed = True
    return ~alive


def tv_dual_lp(query: ModulusQuery, method: str = "auto") -> ModulusResult:
    """max <Delta, h> s.t. ||Delta P||_1 <= t, ||Delta||_1 <= 1, |<Delta, c_k>| <= b_k.

    With moment constraints this is the standard relaxation (||Delta||_1 <= 2,
    budget doubled, moments doubled, value halved) written after rescaling by
    one half, which keeps strong duality with :func:`bias_variance_lp` exact.
    """
    P = query.kernel.augmented_rows()
    m, k = P.shape
    h = query.h
    q = len(query.constraints)
    # variables: Delta (m, free), a (m) >= |Delta|, z (k) >= |P^T Delta|
    nv = 2 * m + k
    rows, rhs = [], []
    I = np.eye(m)
    for sgn in (1.0, -1.0):
        rows.append(np.hstack([sgn * P.T, np.zeros((k, m)), -np.eye(k)]))
        rhs.append(np.zeros(k))
    for sgn in (1.0, -1.0):
        rows.append(np.hstack([sgn * I, -I, np.zeros((m, k))]))
        rhs.append(np.zeros(m))
    rows.append(np.concatenate([np.zeros(2 * m), np.ones(k)])[None, :])
    rhs.append([query.t])
    rows.append(np.concatenate([np.zeros(m), np.ones(m), np.zeros(k)])[None, :])
    rhs.append([1.0])
    for c, b in query.constraints:
        for sgn in (1.0, -1.0):
            rows.append(np.concatenate([sgn * c, np.zeros(m + k)])[None, :])
            rhs.append([abs(b)])
    A = np.vstack(rows)
    b = np.concatenate([np.atleast_1d(r) for r in rhs])
    cost = np.concatenate([-h, np.zeros(m + k)])
    lb = np.concatenate([np.full(m, -np.inf), np.zeros(m + k)])
    ub = np.full(nv, np.inf)
    if query.t == 0:
        fz = forced_zero_rows(P)
        lb[:m][fz] = 0.0
        ub[:m][fz] = 0.0
    sol = lpmod.solve(lpmod.LpProblem(cost, A, ["<="] * A.shape[0], b, lb, ub), method).require_optimal()
    delta = sol.x[:m]
    value = max(float(-sol.objective), 0.0) + 0.0  # no negative zero
    return ModulusResult(
        value=value,
        witness={"delta": SignedMeasure(query.kernel.theta_grid, delta)},
        certificate={"delta_l1": float(np.abs(delta).sum()), "delta_P_l1": float(np.abs(delta @ P).sum()),
                     "moments": [float(delta @ c) for c, _ in query.constraints],
                     "relaxed_moments": q > 0, "t": query.t, "duality_gap": sol.gap},
        solver_stats=_stats(sol),
    )


# --------------------------------------------------------------------------
# exact TV modulus and the t = 0 program over prior pairs


def _pair_lp(query: ModulusQuery, tv_budget: float | None, method: str = "auto") -> ModulusResult:
    """max <h, pi' - pi> over pi, pi' in Pi with TV(pi'P, pi P) <= tv_budget (None: equal mixtures)."""
    P = query.kernel.augmented_rows()
    m, k = P.shape
    h = query.h
    nz = 0 if tv_budget is None else k
    nv = 2 * m + nz
    rows, senses, rhs = [], [], []

    def row(v, s, r):
        rows.append(v)
        senses.append(s)
        rhs.append(r)

    for blk in range(2):
        v = np.zeros(nv)
        v[blk * m:(blk + 1) * m] = 1.0
        row(v, "=", 1.0)
        for c, b in query.constraints:
            v = np.zeros(nv)
            v[blk * m:(blk + 1) * m] = c
            row(v, "<=", b)
    D = np.hstack([-P.T, P.T])  # (pi' - pi) P as a function of [pi, pi']
    if tv_budget is None:
        for j in range(k):
            row(D[j], "=", 0.0)
        for i in np.flatnonzero(forced_zero_rows(P)):
            v = np.zeros(nv)
            v[i], v[m + i] = -1.0, 1.0
            row(v, "=", 0.0)
    else:
        for sgn in (1.0, -1.0):
            for j in range(k):
                v = np.zeros(nv)
                v[:2 * m] = sgn * D[j]
                v[2 * m + j] = -1.0
                row(v, "<=", 0.0)
        v = np.zeros(nv)
        v[2 * m:] = 1.0
        row(v, "<=", 2.0 * tv_budget)
    cost = np.concatenate([h, -h, np.zeros(nz)])
    sol = lpmod.solve(lpmod.LpProblem(cost, np.array(rows), senses, np.array(rhs)), method)
    if sol.status == "infeasible":
        raise ValueError("constraint set Pi is empty")
    sol.require_optimal()
    pi = DiscreteDistribution.normalized(query.kernel.theta_grid, sol.x[:m])
    pip = DiscreteDistribution.normalized(query.kernel.theta_grid, sol.x[m:2 * m])
    a, b = pip.weights @ P, pi.weights @ P
    return ModulusResult(
        value=max(float(h @ (pip.weights - pi.weights)), 0.0) + 0.0,
        witness={"pi": pi, "pi_prime": pip},
        certificate={"tv": 0.5 * float(np.abs(a - b).sum()), "t": query.t, "duality_gap": sol.gap,
                     "moments_pi": [float(c @ pi.weights) for c, _ in query.constraints],
                     "moments_pi_prime": [float(c @ pip.weights) for c, _ in query.constraints]},
        solver_stats=_stats(sol),
    )


# --------------------------------------------------------------------------
# chi^2 / Hellinger moduli by Frank-Wolfe on the Lagrangian


def _vertices(query: ModulusQuery) -> np.ndarray:
    """Vertices of Pi = simplex intersected with the moment constraints.

    A vertex of the simplex cut by k half-spaces has at most k + 1 atoms, so we
    enumerate supports of that size and keep the feasible basic solutions.
    """
    m = len(query.h)
    if not query.constraints:
        return np.eye(m)
    C = np.array([c for c, _ in query.constraints])
    bnd = np.array([b for _, b in query.constraints])
    kk = len(bnd)
    out = []
    for size in range(1, kk + 2):
        if math.comb(m, size) > 200_000:
            raise ValueError("too many moment constraints for vertex enumeration")
        for supp in combinations(range(m), size):
            supp = list(supp)
            # choose which constraints are tight: size - 1 of them
            for tight in combinations(range(kk), size - 1):
                M = np.vstack([np.ones(size)] + [C[j, supp] for j in tight])
                r = np.concatenate([[1.0], bnd[list(tight)]])
                try:
                    w = np.linalg.solve(M, r)
                except np.linalg.LinAlgError:
                    continue
                if np.any(w < -1e-12):
                    continue
                v = np.zeros(m)
                v[supp] = np.maximum(w, 0.0)
                if np.all(C @ v <= bnd + 1e-10):
                    out.append(v)
    if not out:
        raise ValueError("constraint set Pi is empty")
    V = np.unique(np.round(np.array(out), 14), axis=0)
    return V


def _div(kind, a, b):
    if kind == "chi2":
        with np.errstate(divide="ignore", invalid="ignore"):
            if np.any((b <= 0) & (a > 0)):
                return math.inf
            pos = b > 0
            return float(((a[pos] - b[pos]) ** 2 / b[pos]).sum())
    return float(((np.sqrt(a) - np.sqrt(b)) ** 2).sum())


def _div_grad(kind, a, b):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind == "chi2":
            r = np.where((a == 0) & (b == 0), 1.0, a / b)
            ga, gb = 2.0 * r - 2.0, 1.0 - r ** 2
        else:
            sa, sb = np.sqrt(a), np.sqrt(b)
            ga = np.where((a == 0) & (b == 0), 0.0, 1.0 - sb / sa)
            gb = np.where((a == 0) & (b == 0), 0.0, 1.0 - sa / sb)
    return np.nan_to_num(ga, posinf=1e300, neginf=-1e300), np.nan_to_num(gb, posinf=1e300, neginf=-1e300)


class _LagrangianFW:
    """Pairwise Frank-Wolfe for max <h, pi' - pi> - lam * D(pi' P, pi P) over Pi x Pi.

    Iterates are kept as convex combinations of the vertices of Pi so that the
    pairwise (mass-transfer) steps are available; every weight of the starting
    barycentre stays positive unless a pairwise step removes it, which keeps
    the mixtures strictly positive in practice.
    """

    def __init__(self, kind, V, P, h):
        self.kind, self.V, self.P, self.h = kind, V, P, h
        self.VP = V @ P
        self.Vh = V @ h
        nv = V.shape[0]
        self.w = np.full(nv, 1.0 / nv)   # weights for pi
        self.wp = np.full(nv, 1.0 / nv)  # weights for pi'

    def mixtures(self, w=None, wp=None):
        w = self.w if w is None else w
        wp = self.wp if wp is None else wp
        return wp @ self.VP, w @ self.VP

    def objective(self, lam, w=None, wp=None):
        w = self.w if w is None else w
        wp = self.wp if wp is None else wp
        a, b = self.mixtures(w, wp)
        return float(self.Vh @ (wp - w)) - lam * _div(self.kind, a, b)

    def run(self, lam, max_iter=FW_MAX_ITER, tol=FW_GAP_TOL):
        gap = math.inf
        it = 0
        for it in range(1, max_iter + 1):
            a, b = self.mixtures()
            ga, gb = _div_grad(self.kind, a, b)
            # gradients with respect to the vertex weights
            gwp = self.Vh - lam * (self.VP @ ga)
            gw = -self.Vh - lam * (self.VP @ gb)
            s, sp = int(np.argmax(gw)), int(np.argmax(gwp))
            gap = float(gw[s] - gw @ self.w + gwp[sp] - gwp @ self.wp)
            if gap <= tol:
                break
            act, actp = np.flatnonzero(self.w > 0), np.flatnonzero(self.wp > 0)
            v = act[np.argmin(gw[act])]
            vp = actp[np.argmin(gwp[actp])]
            dw = np.zeros_like(self.w)
            dwp = np.zeros_like(self.wp)
            pair = gw[s] - gw[v] + gwp[sp] - gwp[vp]
            if pair >= 0.5 * gap:
                dw[s] += 1.0
                dw[v] -= 1.0
                dwp[sp] += 1.0
                dwp[vp] -= 1.0
                gmax = min(self.w[v], self.wp[vp])
            else:
                dw = -self.w.copy()
                dw[s] += 1.0
                dwp = -self.wp.copy()
                dwp[sp] += 1.0
                gmax = 1.0
            step = self._line_search(lam, dw, dwp, gmax)
            if step <= 0:
                break
            self.w = np.maximum(self.w + step * dw, 0.0)
            self.wp = np.maximum(self.wp + step * dwp, 0.0)
            self.w /= self.w.sum()
            self.wp /= self.wp.sum()
        return gap, it

    def _line_search(self, lam, dw, dwp, gmax):
        a0, b0 = self.mixtures()
        da, db = dwp @ self.VP, dw @ self.VP
        lin = float(self.Vh @ (dwp - dw))
        chi2 = self.kind == "chi2"
        live = (a0 > 0) | (b0 > 0) | (da != 0) | (db != 0)
        a0, b0, da, db = a0[live], b0[live], da[live], db[live]

        def dphi(g):
            # derivative of the concave line objective; OUT marks leaving the domain
            a, b = a0 + g * da, b0 + g * db
            if a.min() < 0 or b.min() <= 0:
                return OUT
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                if chi2:
                    r = a / b
                    d = float((2.0 * r - 2.0) @ da + (1.0 - r * r) @ db)
                else:
                    sa, sb = np.sqrt(a), np.sqrt(b)
                    d = float((1.0 - sb / sa) @ da + (1.0 - sa / sb) @ db)
            return lin - lam * d if math.isfinite(d) else OUT

        hi = gmax
        if dphi(0.0) <= 0:
            return 0.0
        end = dphi(hi)
        # keep strictly inside the domain when a full step would empty a cell
        if end >= 0:
            return hi if hi < 1.0 else hi * (1 - 1e-9)
        g = optimize.brentq(dphi, 0.0, hi, xtol=1e-15)
        while g > 0 and dphi(g) == OUT:
            g *= 1 - 1e-9
        return g


def divergence_modulus(query: ModulusQuery, method: str = "auto",
                       max_iter: int = FW_MAX_ITER, lam_steps: int = 40) -> ModulusResult:
    """sup { T(pi') - T(pi) : pi, pi' in Pi, D(pi' P, pi P) <= budget }.

    ``kind="tv"`` is an exact LP.  For ``chi2`` and ``hellinger`` the value is
    a feasible lower bound from Frank-Wolfe on the Lagrangian, bisected in the
    multiplier until the divergence sits on the budget; the certificate carries
    a Lagrangian upper bound and the TV-modulus upper bound.
    """
    kind = query.kind
    if len(query.h) > MAX_FW_GRID and kind != "tv":
        raise ValueError(f"parameter grid larger than {MAX_FW_GRID} points")
    if query.t == 0:
        res = _pair_lp(query, None, method)
        res.certificate.update(kind=kind, divergence=0.0, upper_bound=res.value, converged=True)
        return res
    if kind == "tv":
        res = _pair_lp(query, query.t, method)
        res.certificate.update(kind="tv", upper_bound=res.value, converged=True)
        return res

    budget = query.t ** 2
    P = query.kernel.augmented_rows()
    keep = P.sum(axis=0) > 0
    P = P[:, keep]
    P = P / P.sum(axis=1, keepdims=True)
    V = _vertices(query)
    h = query.h
    Vh = V @ h
    VP = V @ P
    grid = query.kernel.theta_grid

    # budget large enough for the unconstrained extremes
    i_max, i_min = int(np.argmax(Vh)), int(np.argmin(Vh))
    delta_max = float(Vh[i_max] - Vh[i_min])
    d_ext = _div(kind, VP[i_max], VP[i_min])
    tv_upper = _pair_lp(query, min(query.t, 1.0), method).value
    if d_ext <= budget:
        return ModulusResult(
            value=delta_max,
            witness={"pi": DiscreteDistribution.normalized(grid, V[i_min]),
                     "pi_prime": DiscreteDistribution.normalized(grid, V[i_max])},
            certificate={"kind": kind, "divergence": d_ext, "budget": budget, "upper_bound": delta_max,
                         "tv_upper_bound": tv_upper, "converged": True, "saturated": True},
        )

    fw = _LagrangianFW(kind, V, P, h)
    best_feas = None   # (value, w, wp)
    best_infeas = None
    upper = min(delta_max, tv_upper)
    total_iter, converged = 0, True

    def attempt(lam):
        nonlocal best_feas, best_infeas, upper, total_iter, converged
        gap, it = fw.run(lam, max_iter)
        total_iter += it
        if gap > FW_GAP_TOL:
            converged = False
        a, b = fw.mixtures()
        d = _div(kind, a, b)
        val = float(Vh @ (fw.wp - fw.w))
        upper = min(upper, fw.objective(lam) + max(gap, 0.0) + lam * budget)
        rec = (val, fw.w.copy(), fw.wp.copy(), d)
        if d <= budget:
            if best_feas is None or val > best_feas[0]:
                best_feas = rec
        elif best_infeas is None or d < best_infeas[3]:
            best_infeas = rec
        return d

    lam = 1.0
    d = attempt(lam)
    lo, hi = (None, lam) if d <= budget else (lam, None)
    for _ in range(60):
        if lo is not None and hi is not None:
            break
        if hi is None:
            lam *= 10.0
            if attempt(lam) <= budget:
                hi = lam
            else:
                lo = lam
        else:
            lam /= 10.0
            if attempt(lam) <= budget:
                hi = lam
            else:
                lo = lam
                break
        if lam < 1e-12:
            break
    if lo is not None and hi is not None:
        for _ in range(lam_steps):
            mid = math.sqrt(lo * hi)
            if attempt(mid) <= budget:
                hi = mid
            else:
                lo = mid
            if hi / lo < 1 + 1e-6:
                break

    if best_feas is None:
        # fall back to the trivial feasible pair
        w0 = np.full(V.shape[0], 1.0 / V.shape[0])
        best_feas = (0.0, w0, w0, 0.0)
    val, w, wp, d = best_feas
    if best_infeas is not None and best_infeas[0] > val:
        # D is convex along the segment, so the budget is crossed once
        _, wi, wpi, _ = best_infeas
        lo_s, hi_s = 0.0, 1.0
        for _ in range(80):
            mid = 0.5 * (lo_s + hi_s)
            a, b = ((1 - mid) * wp + mid * wpi) @ VP, ((1 - mid) * w + mid * wi) @ VP
            if _div(kind, a, b) <= budget:
                lo_s = mid
            else:
                hi_s = mid
        w, wp = (1 - lo_s) * w + lo_s * wi, (1 - lo_s) * wp + lo_s * wpi
        val = float(Vh @ (wp - w))
    pi_w, pip_w = w @ V, wp @ V
    a, b = pip_w @ P, pi_w @ P
    return ModulusResult(
        value=max(val, 0.0),
        witness={"pi": DiscreteDistribution.normalized(grid, pi_w),
                 "pi_prime": DiscreteDistribution.normalized(grid, pip_w)},
        certificate={"kind": kind, "divergence": _div(kind, a, b), "budget": budget,
                     "upper_bound": max(upper, val), "tv_upper_bound": tv_upper,
                     "converged": converged, "saturated": False},
        solver_stats={"fw_iterations": total_iter},
    )


# --------------------------------------------------------------------------
# delta_bv by brute force on toys


def _inner_sup(P, h, g, t, V):
    """max over pi in Pi of t * sqrt(Var_{pi P} g) + |<pi, h - P g>|, via both signs."""
    Pg, Pg2 = P @ g, P @ (g * g)
    Vh_res = V @ (h - Pg)
    VPg, VPg2 = V @ Pg, V @ Pg2
    nv = V.shape[0]
    best = 0.0
    for sgn in (1.0, -1.0):
        def neg(z):
            w = _softmax(z)
            var = max(w @ VPg2 - (w @ VPg) ** 2, 0.0)
            return -(sgn * (w @ Vh_res) + t * math.sqrt(var))
        starts = [np.zeros(nv)] + [np.eye(nv)[i] * 8.0 for i in range(nv)]
        for z0 in starts:
            r = optimize.minimize(neg, z0, method="Nelder-Mead",
                                  options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
            best = max(best, -r.fun)
    # vertices of Pi are worth checking exactly: the optimum is often there
    for i in range(nv):
        var = max(VPg2[i] - VPg[i] ** 2, 0.0)
        best = max(best, abs(Vh_res[i]) + t * math.sqrt(var))
    return best


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def delta_bv_exact_small(query: ModulusQuery, g0=None) -> float:
    """inf_g sup_pi  t sqrt(Var_{pi P} g) + |T(pi) - pi P g|, by direct search.

    Only meant as a test oracle: the outer problem is convex in g and solved by
    Powell's method from the bias-variance LP solution, the inner one by
    multistart search over Pi.  Both grids must have at most 12 points.
    """
    P = query.kernel.augmented_rows()
    if P.shape[0] > MAX_BV_GRID or P.shape[1] > MAX_BV_GRID:
        raise ValueError(f"delta_bv_exact_small needs grids of at most {MAX_BV_GRID} points")
    V = _vertices(query)
    h, t = query.h, query.t
    if g0 is None:
        g0 = bias_variance_lp(query).witness["g"]
    f = lambda g: _inner_sup(P, h, np.asarray(g), t, V)
    best_g, best = np.asarray(g0, dtype=float), f(g0)
    for _ in range(3):
        r = optimize.minimize(f, best_g, method="Powell",
                              options={"xtol": 1e-8, "ftol": 1e-10, "maxiter": 20000})
        if r.fun < best - 1e-12:
            best_g, best = r.x, float(r.fun)
        else:
            break
    return float(best)


# --------------------------------------------------------------------------
# delta(s, t)


def default_st_grid(s: float, t: float, num: int = 400) -> SupportGrid:
    theta_max = max(10.0, 4.0 / s * math.log(1.0 / t)) if 0 < t < 1 else 10.0
    return SupportGrid.linspace(0.0, theta_max, num)


def delta_st(s: float, t: float, theta_grid: SupportGrid | None = None,
             x_max: int | None = None, method: str = "auto") -> ModulusResult:
    """max <Delta, exp(-s theta)> s.t. ||Delta P||_1 <= t, ||Delta||_1 <= 1, P Poisson."""
    if s <= 0:
        raise ValueError("s must be positive")
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    grid = theta_grid if theta_grid is not None else default_st_grid(s, t if t > 0 else 0.5)
    kernel = make_poisson_kernel(grid, x_max)
    q = ModulusQuery(kernel, np.exp(-s * grid.points), "tv", t)
    if t == 0:
        return ModulusResult(0.0, {"delta": SignedMeasure(grid, np.zeros(len(grid)))},
                             {"s": s, "t": 0.0, "bound": 0.0})
    res = tv_dual_lp(q, method)
    # shrink the LP solution onto the constraint set (plus a few ulps) so the
    # reported value is attained by an exactly feasible Delta
    delta = res.witness["delta"].weights
    P = kernel.augmented_rows()
    scale = max(1.0, float(np.abs(delta).sum()), float(np.abs(delta @ P).sum()) / t) * (1.0 + 8 * np.finfo(float).eps)
    delta = delta / scale
    value = max(float(delta @ q.h), 0.0)
    lp_value = res.value
    res = ModulusResult(value, {"delta": SignedMeasure(grid, delta)}, res.certificate, res.solver_stats)
    res.certificate.update(s=s, bound=t ** min(1.0, 2.0 / s), x_max=kernel.x_grid.points[-1],
                           theta_max=float(grid.points[-1]), lp_value=lp_value,
                           witness_scale=scale)
    return res
