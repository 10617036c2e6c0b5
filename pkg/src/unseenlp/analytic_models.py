"""Moduli outside the finite-LP setting.

Product-exponential example
    X has d independent exponential coordinates with means mu_i, and the
    target is <h, mu> over M0 = {mu >= 0 : sum mu_i^p <= 1}.  Two moduli are
    provided: omega_d with the local metric sum Delta_i^2 / mu_2i^2 and
    omega_H with the exact Hellinger distance of the products.

Interval censoring, case 1
    One observes (A, 1{S <= A}) with A ~ g1 independent of S ~ pi, so
    chi^2 between two censored laws is an integral of
    g1 (F1 - F2)^2 / (F2 (1 - F2)).  Two probes build explicit CDF pairs
    for the mean and for the CDF at s0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

__all__ = [
    "ExpFamilySpec",
    "ModulusValue",
    "exp_affinity",
    "omega_d_exp",
    "omega_h_exp",
    "CensoringSpec",
    "chi2_censoring_case1",
    "tent_pair",
    "ic_modulus_mean_probe",
    "ic_modulus_cdf_probe",
    "sweep_csv",
]

DEFAULT_CENSOR_GRID = 4096
FEAS_TOL = 1e-10


@dataclass(frozen=True)
class ExpFamilySpec:
    d: int
    p_norm: float = 2.0
    h: tuple | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if not self.p_norm >= 1:
            raise ValueError("p_norm must be >= 1 (math.inf allowed)")
        if self.h is not None and len(self.h) != self.d:
            raise ValueError("h must have length d")

    @property
    def hvec(self) -> np.ndarray:
        return np.ones(self.d) if self.h is None else np.asarray(self.h, dtype=float)

    def norm(self, mu) -> float:
        mu = np.asarray(mu, dtype=float)
        if math.isinf(self.p_norm):
            return float(mu.max(initial=0.0))
        return float((mu ** self.p_norm).sum() ** (1.0 / self.p_norm))

    def corner(self, k: int) -> float:
        """Largest common value of k nonzero coordinates inside M0."""
        return 1.0 if math.isinf(self.p_norm) else k ** (-1.0 / self.p_norm)


@dataclass(frozen=True)
class ModulusValue:
    value: float
    family: str
    mu1: np.ndarray
    mu2: np.ndarray

    def __float__(self) -> float:
        return self.value


def exp_affinity(mu1, mu2) -> float:
    """Bhattacharyya affinity of two product-exponential laws, prod 2 sqrt(ab) / (a + b).

    A coordinate with both means zero is a common point mass and contributes 1.
    """
    a, b = np.asarray(mu1, dtype=float), np.asarray(mu2, dtype=float)
    both = (a == 0) & (b == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(both, 1.0, 2.0 * np.sqrt(a * b) / (a + b))
    return float(np.prod(r))


def _hell(mu1, mu2) -> float:
    return 2.0 - 2.0 * exp_affinity(mu1, mu2)


def _local(mu1, mu2) -> float:
    a, b = np.asarray(mu1, dtype=float), np.asarray(mu2, dtype=float)
    diff = a - b
    if np.any((b == 0) & (diff != 0)):
        return math.inf
    m = b > 0
    return float((diff[m] ** 2 / b[m] ** 2).sum())


def _ratio_for_local(per_coord: float) -> float:
    # (1 - r)^2 / r^2 <= per_coord, r = mu2/mu1 in (0, 1]
    return 1.0 / (1.0 + math.sqrt(per_coord))


def _ratio_for_affinity(rho: float) -> float:
    # 2 sqrt(r) / (1 + r) >= rho, smallest r
    if rho <= 0:
        return 0.0
    if rho >= 1:
        return 1.0
    s = (1.0 - math.sqrt(1.0 - rho * rho)) / rho
    return s * s


def _candidates(t: float, spec: ExpFamilySpec, kind: str):
    h = spec.hvec
    out = []
    # one coordinate at the boundary of M0, the other law shrunk along the same axis
    i = int(np.argmax(h))
    if kind == "d":
        r = _ratio_for_local(t * t)
    else:
        r = _ratio_for_affinity(1.0 - t * t / 2.0)
    mu1 = np.zeros(spec.d)
    mu1[i] = 1.0
    out.append(("sparse", mu1, r * mu1))
    # all coordinates equal, on the boundary of M0
    c = spec.corner(spec.d)
    if kind == "d":
        r = _ratio_for_local(t * t / spec.d)
    else:
        r = _ratio_for_affinity((1.0 - t * t / 2.0) ** (1.0 / spec.d) if t * t < 2.0 else 0.0)
    mu1 = np.full(spec.d, c)
    out.append(("constant", mu1, r * mu1))
    return out


def _refine(t, spec, div, start):
    h, d, p = spec.hvec, spec.d, spec.p_norm
    x0 = np.concatenate(start)
    upper = 1.0 if math.isinf(p) else None
    bounds = [(1e-12, upper)] * (2 * d)
    cons = [{"type": "ineq", "fun": lambda x: t * t - div(x[:d], x[d:])}]
    if not math.isinf(p):
        cons += [{"type": "ineq", "fun": lambda x: 1.0 - (x[:d] ** p).sum()},
                 {"type": "ineq", "fun": lambda x: 1.0 - (x[d:] ** p).sum()}]
    x0 = np.maximum(x0, 1e-12)
    with warnings.catch_warnings():
        # SLSQP probes slightly outside the box before clipping; harmless here
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(lambda x: -h @ (x[:d] - x[d:]), x0, method="SLSQP", bounds=bounds,
                                constraints=cons, options={"maxiter": 500, "ftol": 1e-14})
    x = res.x
    return x[:d], x[d:]


def _feasible(mu1, mu2, t, spec, div) -> bool:
    return (min(mu1.min(), mu2.min()) >= -FEAS_TOL and spec.norm(mu1) <= 1 + FEAS_TOL
            and spec.norm(mu2) <= 1 + FEAS_TOL and div(mu1, mu2) <= t * t * (1 + 1e-9) + FEAS_TOL)


def _omega(t, spec, kind, refine) -> ModulusValue:
    if t < 0:
        raise ValueError("t must be nonnegative")
    z = np.zeros(spec.d)
    if t == 0:
        return ModulusValue(0.0, "zero", z, z)
    h = spec.hvec
    div = _local if kind == "d" else _hell
    best = ModulusValue(0.0, "zero", z, z)
    for tag, mu1, mu2 in _candidates(t, spec, kind):
        v = float(h @ (mu1 - mu2))
        if _feasible(mu1, mu2, t, spec, div) and v > best.value:
            best = ModulusValue(v, tag, mu1, mu2)
    if refine and spec.d > 1 and not (kind == "h" and t * t >= 2.0):
        mu1, mu2 = _refine(t, spec, div, (best.mu1, best.mu2))
        v = float(h @ (mu1 - mu2))
        if _feasible(mu1, mu2, t, spec, div) and v > best.value * (1 + 1e-9):
            best = ModulusValue(v, "refined", mu1, mu2)
    return best


def omega_d_exp(t: float, spec: ExpFamilySpec, refine: bool = True) -> ModulusValue:
    """sup <Delta, h> over mu1, mu2 in M0 with sum Delta_i^2 / mu2_i^2 <= t^2, Delta = mu1 - mu2."""
    return _omega(t, spec, "d", refine)


def omega_h_exp(t: float, spec: ExpFamilySpec, refine: bool = True) -> ModulusValue:
    """Same search under H^2 = 2 - 2 prod_i 2 sqrt(mu_i mu'_i) / (mu_i + mu'_i) <= t^2."""
    return _omega(t, spec, "h", refine)


# ---------------------------------------------------------------------------
# interval censoring


@dataclass(frozen=True, eq=False)
class CensoringSpec:
    """Two CDFs and the design density sampled on a common grid of [0, 1]."""

    grid: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    g1: np.ndarray
    s0: float = 0.5
    gamma_lip: float = 2.0
    eps_win: float = 0.24

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.grid, self.F1, self.F2, self.g1)]
        for name, a in zip(("grid", "F1", "F2", "g1"), arrs):
            object.__setattr__(self, name, a)
        s = self.grid
        if s.ndim != 1 or s.size < 2 or np.any(np.diff(s) <= 0) or s[0] != 0.0 or s[-1] != 1.0:
            raise ValueError("grid must increase strictly from 0 to 1")
        for name in ("F1", "F2", "g1"):
            if getattr(self, name).shape != s.shape:
                raise ValueError(f"{name} does not match the grid")
        for name in ("F1", "F2"):
            F = getattr(self, name)
            if np.any(np.diff(F) < -1e-15) or F.min() < 0 or abs(F[-1] - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a CDF on [0, 1]")
        if self.g1.min() < 0 or abs(np.trapezoid(self.g1, s) - 1.0) > 1e-6:
            raise ValueError("g1 must be a density on [0, 1]")

    @classmethod
    def uniform_design(cls, F1, F2, grid, **kw) -> "CensoringSpec":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, F1, F2, np.ones_like(grid), **kw)


def chi2_censoring_case1(spec: CensoringSpec) -> float:
    """chi^2(pi1 P || pi2 P) = int g1 (F1 - F2)^2 / (F2 (1 - F2)).

    F1, F2 and g1 are piecewise linear on the grid, so each cell is
    integrated by Simpson's rule with linearly interpolated midpoints
    (composite trapezoid refined once, with Richardson weights).
    """
    mid = lambda a: 0.5 * (a[1:] + a[:-1])
    nodes = _chi2_integrand(spec.F1, spec.F2, spec.g1)
    mids = _chi2_integrand(mid(spec.F1), mid(spec.F2), mid(spec.g1))
    if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(mids))):
        return math.inf
    w = np.diff(spec.grid)
    return float(np.sum(w * (nodes[:-1] + 4.0 * mids + nodes[1:])) / 6.0)


def _chi2_integrand(F1, F2, g1) -> np.ndarray:
    diff = F1 - F2
    den = F2 * (1.0 - F2)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(diff == 0, 0.0, g1 * diff ** 2 / den)
    return np.where((den <= 0) & (diff != 0), math.inf, f)


def _grid_with(points: int, extra) -> np.ndarray:
    g = np.linspace(0.0, 1.0, points)
    return np.union1d(g, np.clip(np.asarray(extra, dtype=float), 0.0, 1.0))


def tent_pair(tau: float, s0: float = 0.5, gamma_lip: float = 2.0, eps_win: float = 0.24,
              points: int = DEFAULT_CENSOR_GRID) -> CensoringSpec:
    """CDF pair from the tent construction.

    F2 is piecewise linear with F2(s0) = 1/2 and slope gamma / 2 on the
    window |s - s0| < eps_win (uniform when gamma = 2 and s0 = 1/2), and
    F1 = F2 - gamma tau / 2 + (gamma / 2)|s - s0| on |s - s0| < tau.  F1 then
    has slopes 0 and gamma on the tent, so both CDFs are gamma-Lipschitz on the
    window.  The kinks are grid nodes, making the piecewise-linear
    representation exact.
    """
    if not 0 <= tau <= eps_win:
        raise ValueError("tau must lie in [0, eps_win]")
    lo, hi = 0.5 - gamma_lip * eps_win / 2, 0.5 + gamma_lip * eps_win / 2
    if not (0 < s0 - eps_win and s0 + eps_win < 1 and 0.25 < lo and hi < 0.75):
        raise ValueError("window must sit inside (0, 1) with F2 inside (1/4, 3/4)")
    s = _grid_with(points, [s0 - eps_win, s0 - tau, s0, s0 + tau, s0 + eps_win])
    F2 = np.interp(s, [0.0, s0 - eps_win, s0 + eps_win, 1.0], [0.0, lo, hi, 1.0])
    tent = np.where(np.abs(s - s0) < tau, -gamma_lip * tau / 2 + gamma_lip / 2 * np.abs(s - s0), 0.0)
    return CensoringSpec.uniform_design(F2 + tent, F2, s, s0=s0, gamma_lip=gamma_lip, eps_win=eps_win)


def ic_modulus_cdf_probe(t: float, gamma_lip: float = 2.0, eps_win: float = 0.24, s0: float = 0.5,
                         points: int = DEFAULT_CENSOR_GRID) -> tuple[float, float]:
    """Tent probe for T_c(pi) = F(s0): return (|F1(s0) - F2(s0)|, chi^2).

    The half-width is chosen so that chi^2 = t, which is the budget under
    which the tent's chi^2 ~ tau^3 gives separation ~ t^{1/3}.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0, 0.0

    def chi(tau):
        return chi2_censoring_case1(tent_pair(tau, s0, gamma_lip, eps_win, points))

    hi = eps_win
    if chi(hi) < t:
        spec = tent_pair(hi, s0, gamma_lip, eps_win, points)
        return gamma_lip * hi / 2, chi2_censoring_case1(spec)
    tau = optimize.brentq(lambda x: chi(x) - t, 0.0, hi, xtol=1e-14, rtol=1e-12)
    return gamma_lip * tau / 2, chi(tau)


def ic_modulus_mean_probe(t: float, g1=None, points: int = DEFAULT_CENSOR_GRID) -> tuple[float, float]:
    """Mean probe: F2 uniform, F1 = F2 + c F2 (1 - F2), with chi^2 = t^2.

    Returns (|int (F1 - F2)|, chi^2).  ``g1`` is a callable density on [0, 1]
    (uniform by default); the Jensen bound gives
    separation <= sqrt(chi^2) / (2 sqrt(min g1)).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    s = np.linspace(0.0, 1.0, points)
    dens = np.ones_like(s) if g1 is None else np.asarray(g1(s), dtype=float)
    base = s * (1.0 - s)
    unit = float(np.trapezoid(dens * base, s))
    c = t / math.sqrt(unit)
    if c > 1.0:
        raise ValueError("t too large: F1 would not be monotone")
    spec = CensoringSpec(s, s + c * base, s, dens)
    return abs(float(np.trapezoid(spec.F1 - spec.F2, s))), chi2_censoring_case1(spec)


def sweep_csv(rows) -> str:
    """CSV text for (t, value, witness_tag) rows."""
    lines = ["t,value,witness_tag"]
    lines += [f"{t!r},{v!r},{tag}" for t, v, tag in rows]
    return "\n".join(lines) + "\n"
