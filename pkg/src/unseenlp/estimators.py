"""Linear estimators built from the bias-variance LP, and their application.

A linear estimator is ``sum_x g(N_x)``: it only sees the profile of the
sample.  Three families live here:

* the generic LP estimator (distinct elements, population recovery),
* the species extrapolation estimator with sample splitting and truncation,
* the Good-Toulmin baseline and the median-of-estimates aggregator.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from . import lp as lpmod
from .modulus import ModulusQuery, bias_variance_lp
from .probspace import Histogram, Kernel

__all__ = [
    "EstimatorSpec",
    "SpeciesEstimator",
    "ClampWarning",
    "build_linear_estimator",
    "apply_estimator",
    "good_toulmin",
    "build_species_estimator",
    "species_estimate",
    "species_lp_value_bound",
    "median_trick",
    "DEFAULT_C0",
]

DEFAULT_C0 = 4.0
DEFAULT_SPECIES_GRID = 2000


class ClampWarning(UserWarning):
    """A count fell outside the coefficient grid and was clamped."""


@dataclass
class EstimatorSpec:
    g: np.ndarray
    normalization: str = "sum"
    zero_at_origin: bool = False
    certificate: dict = field(default_factory=dict)

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if self.g.ndim != 1 or self.g.size == 0 or not np.all(np.isfinite(self.g)):
            raise ValueError("coefficients must be a finite nonempty vector")
        if self.normalization not in ("sum", "mean"):
            raise ValueError("normalization must be 'sum' or 'mean'")
        if self.zero_at_origin and self.g[0] != 0.0:
            raise ValueError("zero_at_origin requires g(0) == 0")

    def to_dict(self) -> dict:
        return {"grid": list(range(self.g.size)), "g": self.g.tolist(),
                "normalization": self.normalization, "zero_at_origin": self.zero_at_origin,
                "certificate": self.certificate}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorSpec":
        return cls(np.asarray(d["g"], dtype=float), d.get("normalization", "sum"),
                   bool(d.get("zero_at_origin", False)), d.get("certificate", {}))

    @classmethod
    def from_json(cls, s: str) -> "EstimatorSpec":
        return cls.from_dict(json.loads(s))


def build_linear_estimator(kernel: Kernel, h, t: float, enforce_zero: bool = False,
                           normalization: str = "sum", method: str = "auto") -> EstimatorSpec:
    """Coefficients g solving min ||P g - h||_inf + t ||g||_inf.

    With ``enforce_zero`` the coefficient at count 0 is set to zero afterwards
    so the estimator ignores unseen symbols; the certificate reports the bias
    before and after.  Setting g(0) to zero moves P g by at most |g(0)|, and
    |g(0)| is at most twice the LP value, so the value can grow by a factor 3
    at worst (within the factor 4 of the theory).
    """
    res = bias_variance_lp(ModulusQuery(kernel, h, "tv", t), method)
    g = np.array(res.witness["g"], dtype=float)
    P = kernel.augmented_rows()
    h = np.asarray(h, dtype=float)
    cert = {"lp_value": res.value, "bias_sup": res.certificate["bias_sup"], "g_sup": res.certificate["g_sup"],
            "t": t, "duality_gap": res.certificate["duality_gap"], "backend": res.solver_stats["backend"]}
    if enforce_zero:
        g0 = float(g[0])
        g[0] = 0.0
        bias = float(np.abs(P @ g - h).max())
        cert.update(g0_before_zeroing=g0, g0_bound=2.0 * res.value,
                    g0_within_bound=abs(g0) <= 2.0 * res.value + 1e-12,
                    bias_sup_zeroed=bias, value_zeroed=bias + t * float(np.abs(g).max()))
    if kernel.has_tail:
        g = g[: len(kernel.x_grid)]
    return EstimatorSpec(g, normalization, enforce_zero, cert)


def _clamped_profile_sum(g: np.ndarray, counts: np.ndarray) -> tuple[float, bool]:
    if counts.size == 0:
        return 0.0, False
    top = g.size - 1
    clamped = bool(counts.max() > top)
    prof = np.bincount(np.minimum(counts, top), minlength=g.size)
    return float(np.dot(prof, g)), clamped


def apply_estimator(spec: EstimatorSpec, hist: Histogram, n: int | None = None) -> float:
    """sum_x g(N_x), divided by n under mean normalization.

    Counts beyond the coefficient grid use the last coefficient and raise a
    :class:`ClampWarning`.
    """
    counts = hist.counts
    if spec.zero_at_origin:
        counts = counts[counts > 0]
    total, clamped = _clamped_profile_sum(spec.g, counts)
    if clamped:
        warnings.warn(f"counts above {spec.g.size - 1} clamped to the last coefficient", ClampWarning,
                      stacklevel=2)
    if spec.normalization == "mean":
        if not n:
            raise ValueError("mean normalization needs n")
        total /= n
    return total


def good_toulmin(profile, r: float) -> float:
    """Good-Toulmin estimate sum_{j>=1} -(-r)^j Phi_j of the new-symbol count."""
    prof = np.asarray(profile, dtype=float)
    if prof.size <= 1:
        return 0.0
    j = np.arange(1, prof.size)
    nz = prof[1:] != 0
    if not nz.any():
        return 0.0
    j, phi = j[nz], prof[1:][nz]
    terms = -np.power(-float(r), j) * phi
    return float(math.fsum(terms))


def median_trick(estimates) -> float:
    """Lower median of the estimates."""
    x = np.sort(np.asarray(estimates, dtype=float))
    if x.size == 0:
        raise ValueError("no estimates")
    return float(x[(x.size - 1) // 2])


# --------------------------------------------------------------------------
# species extrapolation


@dataclass
class SpeciesEstimator:
    g_star: np.ndarray
    L: int
    b_prime: int
    split_fraction: float
    gamma: float
    n: int
    r: float
    C0: float
    grid_spec: dict
    certificate: dict = field(default_factory=dict)

    @property
    def n_holdout(self) -> float:
        return self.n / math.log(self.n)

    @property
    def n_total(self) -> float:
        return self.n * (1.0 + 1.0 / math.log(self.n))

    def f_sup(self) -> float:
        """||f||_inf for f(k) = k g*(k - 1), k = 1..L-1 (the coefficients actually used)."""
        k = np.arange(1, self.L)
        return float(np.abs(k * self.g_star[k - 1]).max()) if k.size else 0.0

    def variance_bound(self) -> float:
        return self.n_total * (self.f_sup() ** 2 + self.gamma)

    def to_dict(self) -> dict:
        return {"g_star": self.g_star.tolist(), "L": self.L, "b_prime": self.b_prime,
                "split_fraction": self.split_fraction, "gamma": self.gamma, "n": self.n, "r": self.r,
                "C0": self.C0, "grid_spec": self.grid_spec, "certificate": self.certificate}

    @classmethod
    def from_dict(cls, d: dict) -> "SpeciesEstimator":
        return cls(np.asarray(d["g_star"], dtype=float), int(d["L"]), int(d["b_prime"]),
                   float(d["split_fraction"]), float(d["gamma"]), int(d["n"]), float(d["r"]),
                   float(d["C0"]), d["grid_spec"], d.get("certificate", {}))


def species_S(lam, gamma: float) -> np.ndarray:
    """(e^-lam - e^-(gamma+1) lam) / lam, equal to gamma at lam = 0."""
    lam = np.asarray(lam, dtype=float)
    out = np.empty_like(lam)
    small = lam < 1e-8
    ls = lam[~small]
    out[~small] = np.exp(-ls) * -np.expm1(-gamma * ls) / ls
    out[small] = gamma - 0.5 * ((gamma + 1) ** 2 - 1) * lam[small]
    return out


def species_lp_value_bound(n: int, r: float, C0: float = DEFAULT_C0,
                           grid_points: int = DEFAULT_SPECIES_GRID) -> tuple[float, float]:
    """Return (gamma t^{min(1, 2 / (1 + gamma))} at t = n^-1/2, L_S * grid spacing).

    The exponent is the one delivered by the Poisson modulus delta(s, t) with
    s = gamma + 1; for gamma < 1 it saturates at 1 because the penalty term
    alone already costs t ||g||_inf with ||g||_inf >= g(0) ~ gamma.

    S(lam) is the integral of e^{-u lam} over u in [1, gamma + 1], so
    |S'| <= ((gamma + 1)^2 - 1) / 2 =: L_S.  Moving lam by at most one grid
    spacing changes S by at most L_S * spacing; the matching term for P g,
    2 ||g||_inf * spacing, depends on the solution and is added by the builder.
    """
    gamma = _gamma(n, r)
    lam0 = 2.0 * C0 * math.ceil(math.log(n)) ** 2
    eps = lam0 / grid_points
    main = gamma * n ** (-0.5 * min(1.0, 2.0 / (1.0 + gamma)))
    return main, 0.5 * ((gamma + 1.0) ** 2 - 1.0) * eps


def _gamma(n: int, r: float) -> float:
    return (1.0 + r) * (1.0 + 1.0 / math.log(n)) - 1.0


def _poisson_matrix(lam, L: int):
    k = np.arange(L + 1)
    logp = k[None, :] * np.log(lam[:, None]) - lam[:, None] - gammaln(k + 1.0)[None, :]
    P = np.exp(logp)
    P[P < 1e-17] = 0.0
    return P


SMALL_LAMBDA_POINTS = 200


def build_species_estimator(n: int, r: float, C0: float = DEFAULT_C0,
                            grid_points: int = DEFAULT_SPECIES_GRID, faithful_grid: bool = False,
                            method: str = "highs") -> SpeciesEstimator:
    """Solve the discretized bias-variance LP for the species problem.

    min_g  max_{lam in grid} |S(lam) - E g(Poi(lam))| + n^{-1/2} ||g||_inf

    over g on {0..L}; the Poisson rows are restricted to counts <= L without
    renormalization.  ``faithful_grid`` uses spacing 1/n^2 instead of
    the compressed grid (only practical for small n).  The compressed grid
    is ``grid_points`` equispaced points on (0, lam0] plus ``SMALL_LAMBDA_POINTS``
    log-spaced points on [1/n^2, first spacing], since the fit near zero is the
    hard part of the extrapolation and a coarse equispaced grid never sees it.
    """
    if n < 10 or r <= 0:
        raise ValueError("need n >= 10 and r > 0")
    logn = math.log(n)
    lc = math.ceil(logn)
    L = int(4 * C0 * lc ** 2)
    b_prime = int(math.ceil(C0 * lc))
    lam0 = 2.0 * C0 * lc ** 2
    gamma = _gamma(n, r)
    n0 = n / logn
    split = n0 / (n + n0)
    if faithful_grid:
        grid_points = int(math.ceil(lam0 * n * n))
    lam = lam0 * np.arange(1, grid_points + 1) / grid_points
    if not faithful_grid:
        lam = np.union1d(np.geomspace(1.0 / n ** 2, lam[0], SMALL_LAMBDA_POINTS), lam)
    P = _poisson_matrix(lam, L)
    S = species_S(lam, gamma)
    t = n ** -0.5
    prob = lpmod.reduce_linf_objective(sparse.csr_matrix(P), S, t)
    sol = lpmod.solve(prob, method).require_optimal()
    g = sol.x[: L + 1]
    bias = float(np.abs(P @ g - S).max())
    gsup = float(np.abs(g).max())
    main, grid_slack = species_lp_value_bound(n, r, C0, grid_points)
    cert = {"lp_value": float(sol.objective), "bias_sup_grid": bias, "g_sup": gsup, "t": t,
            "rate_bound": main, "grid_slack": grid_slack + 2.0 * gsup * lam0 / grid_points,
            "g_sup_bound": main * n ** 0.5,
            "duality_gap": sol.gap, "backend": sol.backend}
    return SpeciesEstimator(g, L, b_prime, split, gamma, n, r, C0,
                            {"lambda_max": lam0, "points": grid_points, "spacing": lam0 / grid_points,
                             "faithful": faithful_grid}, cert)


def species_estimate(est: SpeciesEstimator, hist: Histogram, seed=None, rng=None) -> float:
    """Split the sample and evaluate the truncated linear estimate of U.

    Each observation of the n(1 + 1/log n) sample goes to the holdout with
    probability ``split_fraction``.  Returns
    sum_x N_x g*(N_x - 1) 1{N_x < L} 1{N'_x < b'} - #{x: N_x = 0, N'_x > 0}
    with N and N' the primary and holdout counts.
    """
    counts = hist.counts
    counts = counts[counts > 0]
    if counts.size == 0:
        return 0.0
    rng = np.random.default_rng(seed) if rng is None else rng
    hold = rng.binomial(counts, est.split_fraction)
    prim = counts - hold
    use = (prim >= 1) & (prim < est.L) & (hold < est.b_prime)
    k = prim[use]
    main = float(np.dot(k, est.g_star[k - 1])) if k.size else 0.0
    corr = int(np.count_nonzero((prim == 0) & (hold > 0)))
    return main - corr
