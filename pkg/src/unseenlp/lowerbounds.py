"""Lower-bound certificates.

Three constructions live here:

* :func:`two_point_bound`, the two-point bound
  (T(pi) - T(pi'))^2 / (1 + sqrt(1 + chi2_n))^2 for n iid observations;
* :func:`det_lower_bound`, the fuzzy-prior bound for the deterministic
  setting with bounded conditional variance;
* :func:`de_prior_pair`, the explicit distinct-elements prior pair whose
  perturbation is read off the Taylor coefficients of
  g(z) = beta^{(1 + z)/(1 - z)}.

Every :class:`PriorPairCertificate` re-derives its divergences on
construction with arithmetic that does not go through :mod:`probspace`, so
a bug in the builder cannot certify itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.special import gammaln

from .probspace import (
    DiscreteDistribution,
    Kernel,
    SupportGrid,
    chi2_divergence,
    chi2_tensorize,
    hellinger_sq,
    make_binomial_kernel,
    mix,
    tv_distance,
)

__all__ = [
    "CertificateError",
    "PriorPairCertificate",
    "DePriorParams",
    "two_point_bound",
    "det_lower_bound",
    "de_taylor_coeffs",
    "cauchy_coeffs",
    "de_prior_pair",
    "de_pipeline_bound",
]

VERIFY_RTOL = 1e-8
TAIL_RTOL = 1e-10
CAUCHY_RADIUS = 0.5
CAUCHY_CHECK_K = 40
CAUCHY_RTOL = 1e-8
DEFAULT_K = 512


class CertificateError(RuntimeError):
    """A certificate clause failed; ``clause`` names it."""

    def __init__(self, clause: str, detail: str):
        super().__init__(f"certificate clause {clause!r} failed: {detail}")
        self.clause = clause


# ---------------------------------------------------------------------------
# independent recomputation (no probspace code on this path)


def _mixture(rows: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = np.zeros(rows.shape[1])
    for i in np.flatnonzero(w):
        out += w[i] * rows[i]
    return out


def _independent_divergences(rows, w, w_prime, h, points=None) -> dict:
    a, b = _mixture(rows, w), _mixture(rows, w_prime)
    bc = math.fsum(np.sqrt(a * b))
    if np.any((a == 0) & (b > 0)):
        chi2 = math.inf
    else:
        m = a > 0
        chi2 = math.fsum((b[m] - a[m]) ** 2 / a[m])
    ks = np.arange(len(w), dtype=float) if points is None else np.asarray(points, dtype=float)
    return {
        "separation": abs(math.fsum(w * h) - math.fsum(w_prime * h)),
        "hellinger_sq": max(2.0 - 2.0 * bc, 0.0),
        "chi2": chi2,
        "tv": 0.5 * math.fsum(np.abs(a - b)),
        "mean_pi": math.fsum(ks * w),
        "mean_pi_prime": math.fsum(ks * w_prime),
    }


def _close(x: float, y: float, rtol: float = VERIFY_RTOL, atol: float = 1e-13) -> bool:
    if math.isinf(x) or math.isinf(y):
        return x == y
    return abs(x - y) <= atol + rtol * max(abs(x), abs(y))


@dataclass(frozen=True, eq=False)
class PriorPairCertificate:
    """Two priors, their separation under h and the divergences of their mixtures.

    ``chi2`` is chi^2(pi' P || pi P).  ``clauses`` maps clause names to
    {"value", "bound", "ok"} records supplied by the construction that
    produced the pair.  Means are taken with respect to the grid points.
    """

    pi: DiscreteDistribution
    pi_prime: DiscreteDistribution
    kernel: Kernel
    h: np.ndarray
    separation: float
    hellinger_sq: float
    chi2: float
    tv: float
    mean_pi: float
    mean_pi_prime: float
    clauses: dict = field(default_factory=dict)

    def __post_init__(self):
        for d in (self.pi, self.pi_prime):
            if d.grid != self.kernel.theta_grid:
                raise CertificateError("grid", "priors must live on the kernel's parameter grid")
        if self.separation < 0:
            raise CertificateError("separation", "negative separation")
        self.verify()

    @classmethod
    def from_pair(cls, pi, pi_prime, kernel: Kernel, h, clauses=None) -> "PriorPairCertificate":
        h = np.asarray(h, dtype=float)
        P, Q = mix(kernel, pi), mix(kernel, pi_prime)
        pts = pi.grid.points
        return cls(pi, pi_prime, kernel, h,
                   separation=abs(pi.expect(h) - pi_prime.expect(h)),
                   hellinger_sq=hellinger_sq(P, Q), chi2=chi2_divergence(Q, P), tv=tv_distance(P, Q),
                   mean_pi=float(pi.weights @ pts), mean_pi_prime=float(pi_prime.weights @ pts),
                   clauses=dict(clauses or {}))

    def verify(self) -> None:
        """Recompute every numeric field independently; raise on disagreement."""
        ref = _independent_divergences(self.kernel.rows, self.pi.weights, self.pi_prime.weights, self.h,
                                       self.pi.grid.points)
        # the Bhattacharyya route loses absolute accuracy ~1e-16 relative to 2
        tol = {"hellinger_sq": 1e-12}
        for name, val in ref.items():
            if not _close(getattr(self, name), val, atol=tol.get(name, 1e-13)):
                raise CertificateError(name, f"stored {getattr(self, name)!r}, recomputed {val!r}")
        for name, c in self.clauses.items():
            if not c.get("ok", False):
                raise CertificateError(name, f"value {c.get('value')!r} vs bound {c.get('bound')!r}")

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None else (float(x) if math.isfinite(x) else str(x))

        return {
            "pi": self.pi.to_dict(), "pi_prime": self.pi_prime.to_dict(), "kernel": self.kernel.to_dict(),
            "h": self.h.tolist(), "separation": num(self.separation), "hellinger_sq": num(self.hellinger_sq),
            "chi2": num(self.chi2), "tv": num(self.tv), "mean_pi": num(self.mean_pi),
            "mean_pi_prime": num(self.mean_pi_prime),
            "clauses": {k: {kk: (num(vv) if isinstance(vv, float) else vv) for kk, vv in v.items()}
                        for k, v in self.clauses.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "PriorPairCertificate":
        def num(x):
            return float(x)

        return cls(DiscreteDistribution.from_dict(d["pi"]), DiscreteDistribution.from_dict(d["pi_prime"]),
                   Kernel.from_dict(d["kernel"]), np.asarray(d["h"], dtype=float),
                   num(d["separation"]), num(d["hellinger_sq"]), num(d["chi2"]), num(d["tv"]),
                   num(d["mean_pi"]), num(d["mean_pi_prime"]), d.get("clauses", {}))

    @classmethod
    def from_json(cls, s: str) -> "PriorPairCertificate":
        return cls.from_dict(json.loads(s))


# ---------------------------------------------------------------------------
# generic bounds


def two_point_bound(pi: DiscreteDistribution, pi_prime: DiscreteDistribution, kernel: Kernel,
                    n: float, h) -> float:
    """Squared-loss lower bound sep^2 / (1 + sqrt(1 + chi2_n))^2.

    chi2_n is the chi^2 divergence between the n-fold products of pi'P and pi P.
    Returns 0 when chi^2 is infinite.
    """
    h = np.asarray(h, dtype=float)
    sep = abs(pi.expect(h) - pi_prime.expect(h))
    chi = chi2_divergence(mix(kernel, pi_prime), mix(kernel, pi))
    chin = chi2_tensorize(chi, n)
    if math.isinf(chin):
        return 0.0
    return sep ** 2 / (1.0 + math.sqrt(1.0 + chin)) ** 2


def _det_value(gamma: float, delta: float, K_V: float, n: float) -> float:
    t0 = 2.0 * gamma + 18.0 * K_V / (n * gamma ** 2 * delta ** 2) + 0.5 * math.sqrt(math.expm1(gamma))
    return max(0.25 * (gamma * delta / 3.0) ** 2 * (1.0 - t0), 0.0)


def det_lower_bound(delta: float, K_V: float, n: float, mix_weight: float | str = "auto") -> float:
    """Fuzzy-prior lower bound 1/4 (gamma delta / 3)^2 (1 - t0), clamped at 0.

    t0 = 2 gamma + 18 K_V / (n gamma^2 delta^2) + sqrt(e^gamma - 1) / 2.
    With ``mix_weight="auto"`` gamma is chosen on a 1e-4 grid of (0, 1).
    """
    if delta <= 0 or n <= 0 or not math.isfinite(K_V):
        return 0.0
    if mix_weight == "auto":
        gammas = np.arange(1, 10000) * 1e-4
        t0 = 2.0 * gammas + 18.0 * K_V / (n * gammas ** 2 * delta ** 2) + 0.5 * np.sqrt(np.expm1(gammas))
        vals = 0.25 * (gammas * delta / 3.0) ** 2 * (1.0 - t0)
        return max(float(vals.max()), 0.0)
    g = float(mix_weight)
    if not 0.0 < g < 1.0:
        raise ValueError("mix_weight must lie in (0, 1)")
    return _det_value(g, delta, K_V, n)


# ---------------------------------------------------------------------------
# distinct-elements prior pair


@dataclass(frozen=True)
class DePriorParams:
    """Sampling rate p, target separation delta and series length K."""

    p: float
    delta: float
    K: int = DEFAULT_K

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.delta1 >= math.exp(-1.0):
            raise ValueError(f"need delta < p/e = {self.p / math.e:.6g}, got {self.delta}")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha = {self.alpha} outside (0, 1)")

    @classmethod
    def with_auto_K(cls, p: float, delta: float, K_min: int = DEFAULT_K) -> "DePriorParams":
        """Pick K large enough for the tail test.

        Uses ||Delta||_1 >= Delta_0 >= delta / 2, so alpha^{K+1} <= 5e-11 delta
        guarantees the truncation clause.
        """
        probe = cls(p, delta, K_min)
        need = math.ceil(math.log(0.5 * TAIL_RTOL * delta) / math.log(probe.alpha))
        return cls(p, delta, max(K_min, need))

    @property
    def delta1(self) -> float:
        return self.delta / self.p

    @property
    def alpha(self) -> float:
        return 1.0 - self.p / math.log(1.0 / self.delta1)

    @property
    def beta(self) -> float:
        return self.delta1 * math.log(1.0 / self.delta1)

    @property
    def eta(self) -> float:
        return (1.0 - self.alpha) / (self.p + 1.0)

    def to_dict(self) -> dict:
        return {"p": self.p, "delta": self.delta, "K": self.K, "delta1": self.delta1,
                "alpha": self.alpha, "beta": self.beta, "eta": self.eta}


def _g_series(beta: float, K: int) -> np.ndarray:
    """[z^k] beta^{(1+z)/(1-z)} = beta [z^k] exp(2c z / (1 - z)), c = log beta.

    Exponential recurrence k E_k = sum_j j a_j E_{k-j} with a_j = 2c for all
    j >= 1, accumulated with compensated summation.
    """
    c = math.log(beta)
    E = np.zeros(K + 1)
    E[0] = 1.0
    j = np.arange(1, K + 1, dtype=float)
    for k in range(1, K + 1):
        E[k] = 2.0 * c / k * math.fsum(j[:k] * E[k - 1::-1][:k])
    return beta * E


def cauchy_coeffs(beta: float, kmax: int, radius: float = CAUCHY_RADIUS, points: int = 256,
                  dps: int = 50) -> list[float]:
    """Taylor coefficients of beta^{(1+z)/(1-z)} by the trapezoid rule on |z| = radius.

    Runs in mpmath at ``dps`` digits so dividing by radius^k loses nothing.
    """
    with mpmath.workdps(dps):
        b = mpmath.mpf(beta)
        r = mpmath.mpf(radius)
        zs = [r * mpmath.expjpi(mpmath.mpf(2 * m) / points) for m in range(points)]
        vals = [mpmath.power(b, (1 + z) / (1 - z)) for z in zs]
        out = []
        for k in range(kmax + 1):
            s = mpmath.fsum(v * mpmath.expjpi(mpmath.mpf(-2 * m * k) / points) for m, v in enumerate(vals))
            out.append(float(mpmath.re(s / points / r ** k)))
    return out


def de_taylor_coeffs(params: DePriorParams, check: bool = True) -> np.ndarray:
    """Delta_k, k = 0..K, for the distinct-elements perturbation.

    Delta_k = (1 - alpha) alpha^k [z^k] g for k >= 1 and
    Delta_0 = (1 - alpha)(g(0) - g(alpha)).  With ``check`` the first 41
    coefficients of g (or all of them when K < 40) are compared with a contour-integral evaluation.
    """
    a, beta, K = params.alpha, params.beta, params.K
    gk = _g_series(beta, K)
    if check:
        ref = cauchy_coeffs(beta, min(K, CAUCHY_CHECK_K))
        scale = max(abs(x) for x in ref)
        for k, x in enumerate(ref):
            if abs(gk[k] - x) > CAUCHY_RTOL * max(abs(x), scale * 1e-6):
                raise CertificateError("taylor", f"series and contour coefficients disagree at k={k}: "
                                       f"{gk[k]!r} vs {x!r}")
    ak = a ** np.arange(K + 1)
    delta = (1.0 - a) * ak * gk
    delta[0] = (1.0 - a) * (beta - beta ** ((1.0 + a) / (1.0 - a)))
    # |[z^k] g| <= sup_{|z|<1} |g| = beta^0 = 1, so the tail is at most (1-a) sum_{k>K} a^k
    tail = a ** (K + 1)
    if tail > TAIL_RTOL * float(np.abs(delta).sum()):
        raise CertificateError("truncation", f"tail bound {tail:.3g} too large for K={K}; increase K")
    return delta


def _log_binom_rows(K: int, p: float) -> np.ndarray:
    k = np.arange(K + 1, dtype=float)
    th, x = k[:, None], k[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        lp = (gammaln(th + 1) - gammaln(x + 1) - gammaln(np.maximum(th - x, 0) + 1)
              + x * math.log(p) + (th - x) * math.log1p(-p))
    return np.where(x <= th, np.exp(lp), 0.0)


def de_prior_pair(params: DePriorParams) -> PriorPairCertificate:
    """Build (pi~, pi~') for distinct elements under Binomial(theta, p) sampling.

    pi = mu + Delta, pi' = mu - Delta with mu_k = (1 - alpha) alpha^k, then
    both are mixed with a point mass at 0 using weight eta on pi.  The
    geometric tail beyond K (below 1e-10 relative) is folded into atom K.
    Clauses: separation, means, nonnegativity and the Hellinger bound.
    """
    p, a, eta, K = params.p, params.alpha, params.eta, params.K
    d1 = params.delta1
    delta = de_taylor_coeffs(params)
    mu = (1.0 - a) * a ** np.arange(K + 1)
    mu[K] += a ** (K + 1)
    pi, pip = mu + delta, mu - delta
    # fold the truncated part of sum Delta_k = f(1) = 0 into the last atom
    pi[K] -= math.fsum(pi) - 1.0
    pip[K] -= math.fsum(pip) - 1.0
    e0 = np.zeros(K + 1)
    e0[0] = 1.0
    wt, wtp = (1.0 - eta) * e0 + eta * pi, (1.0 - eta) * e0 + eta * pip
    neg = float(min(wt.min(), wtp.min()))
    if neg < -1e-15:
        raise CertificateError("nonnegative", f"smallest prior entry {neg!r}")
    wt, wtp = np.maximum(wt, 0.0), np.maximum(wtp, 0.0)
    wt /= math.fsum(wt)
    wtp /= math.fsum(wtp)
    grid = SupportGrid.integers(K)
    kernel = make_binomial_kernel(K, p)
    h = np.ones(K + 1)
    h[0] = 0.0
    prior, prior_p = DiscreteDistribution(grid, wt), DiscreteDistribution(grid, wtp)
    mixed_pi, mixed_pip = mix(kernel, prior), mix(kernel, prior_p)
    H2 = hellinger_sq(mixed_pi, mixed_pip)
    ks = np.arange(K + 1)
    means = (float(ks @ wt), float(ks @ wtp))
    sep = float(wt[0] - wtp[0])
    h2_bound = 0.5 * 4.0 * (math.e ** 2 * d1 * math.log(1.0 / d1)) ** (2.0 * (1.0 - p) / p)
    clauses = {
        "separation": {"value": sep, "bound": eta * params.delta, "ok": sep >= eta * params.delta},
        "means": {"value": max(means), "bound": 1.0, "ok": max(means) <= 1.0},
        "nonnegative": {"value": max(neg, 0.0) if neg >= 0 else neg, "bound": 0.0, "ok": neg >= -1e-15},
        "hellinger": {"value": H2, "bound": h2_bound, "ok": H2 <= h2_bound},
    }
    for name, c in clauses.items():
        if not c["ok"]:
            raise CertificateError(name, f"value {c['value']!r} vs bound {c['bound']!r}")
    cert = PriorPairCertificate.from_pair(prior, prior_p, kernel, h, clauses)
    # second, independent look at the mixtures through a separately built kernel
    ref = _independent_divergences(_log_binom_rows(K, p), wt, wtp, h)
    if not _close(ref["hellinger_sq"], H2, rtol=1e-6, atol=1e-12):
        raise CertificateError("hellinger", f"kernel cross-check {ref['hellinger_sq']!r} vs {H2!r}")
    return cert


def de_pipeline_bound(params: DePriorParams) -> dict:
    """Feed the prior pair into the two-point bound at the largest n with chi2_n <= e - 1."""
    cert = de_prior_pair(params)
    if cert.chi2 <= 0 or math.isinf(cert.chi2):
        raise CertificateError("chi2", f"unusable chi^2 {cert.chi2!r}")
    n = max(int(math.floor(1.0 / math.log1p(cert.chi2))), 1)
    bound = two_point_bound(cert.pi, cert.pi_prime, cert.kernel, n, cert.h)
    return {"n": n, "chi2": cert.chi2, "chi2_n": chi2_tensorize(cert.chi2, n),
            "separation": cert.separation, "bound": bound, "certificate": cert}
