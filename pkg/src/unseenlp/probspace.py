"""Finite-support distributions, kernels, histograms and f-divergences.

Everything downstream works on finite grids: a parameter grid for the latent
values and an observation grid for what is actually seen.  A :class:`Kernel`
maps one to the other; :func:`mix` and :func:`push` are its two actions.

Two total-variation conventions appear in this package and they are kept
apart on purpose:

* ``tv_distance(P, Q)`` is the half-l1 distance between probability vectors.
* Signed measures entering linear programs are measured in full l1 mass,
  ``SignedMeasure.l1_norm``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

__all__ = [
    "SupportGrid",
    "DiscreteDistribution",
    "SignedMeasure",
    "Kernel",
    "Histogram",
    "GridMismatchError",
    "tv_distance",
    "hellinger_sq",
    "chi2_divergence",
    "chi2_tensorize",
    "mix",
    "push",
    "identity_kernel",
    "make_binomial_kernel",
    "make_poisson_kernel",
    "default_poisson_xmax",
]

SUM_TOL = 1e-12
MAX_TAIL = 1e-9


class GridMismatchError(ValueError):
    """Two objects that must share a support grid do not."""


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SupportGrid:
    """Strictly increasing, nonempty grid of nonnegative support points."""

    points: np.ndarray
    kind: str = "real"

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("support grid must be a nonempty 1-d array")
        if not np.all(np.isfinite(pts)) or np.any(pts < 0):
            raise ValueError("support points must be finite and nonnegative")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("support points must be strictly increasing")
        if self.kind not in ("integer", "real"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.kind == "integer" and np.any(pts != np.round(pts)):
            raise ValueError("integer grid with non-integer points")
        object.__setattr__(self, "points", pts)

    @classmethod
    def integers(cls, upper: int, lower: int = 0) -> "SupportGrid":
        return cls(np.arange(lower, upper + 1, dtype=float), "integer")

    @classmethod
    def linspace(cls, lo: float, hi: float, num: int) -> "SupportGrid":
        return cls(np.linspace(lo, hi, num), "real")

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, SupportGrid):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.kind, self.points.tobytes()))

    def index_of(self, value: float) -> int:
        idx = np.flatnonzero(self.points == value)
        if idx.size == 0:
            raise KeyError(value)
        return int(idx[0])

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "SupportGrid":
        return cls(np.asarray(d["points"], dtype=float), d.get("kind", "real"))


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability vector on a :class:`SupportGrid`."""

    grid: SupportGrid
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.shape != (len(self.grid),):
            raise ValueError("weights do not match the grid")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        if abs(math.fsum(w) - 1.0) > SUM_TOL:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, grid: SupportGrid, weights) -> "DiscreteDistribution":
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        return cls(grid, w / math.fsum(w))

    @classmethod
    def point_mass(cls, grid: SupportGrid, value: float) -> "DiscreteDistribution":
        w = np.zeros(len(grid))
        w[grid.index_of(value)] = 1.0
        return cls(grid, w)

    @classmethod
    def uniform(cls, grid: SupportGrid) -> "DiscreteDistribution":
        return cls(grid, np.full(len(grid), 1.0 / len(grid)))

    def expect(self, f) -> float:
        """E_pi[f] for f given as values on the grid or as a callable."""
        vals = f(self.grid.points) if callable(f) else np.asarray(f, dtype=float)
        return float(self.weights @ vals)

    def mean(self) -> float:
        return self.expect(self.grid.points)

    def to_dict(self) -> dict:
        return {"grid": self.grid.points.tolist(), "kind": self.grid.kind,
                "weights": self.weights.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteDistribution":
        return cls(SupportGrid(d["grid"], d.get("kind", "real")), d["weights"])

    @classmethod
    def from_json(cls, s: str) -> "DiscreteDistribution":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Finite signed weights on a grid (perturbations between priors)."""

    grid: SupportGrid
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.shape != (len(self.grid),):
            raise ValueError("weights do not match the grid")
        if not np.all(np.isfinite(w)):
            raise ValueError("signed measure must be finite")
        object.__setattr__(self, "weights", w)

    @classmethod
    def difference(cls, a: DiscreteDistribution, b: DiscreteDistribution) -> "SignedMeasure":
        _check_same_grid(a.grid, b.grid)
        return cls(a.grid, a.weights - b.weights)

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.weights).sum())

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def pair(self, f) -> float:
        return float(self.weights @ np.asarray(f, dtype=float))

    def to_dict(self) -> dict:
        return {"grid": self.grid.points.tolist(), "kind": self.grid.kind,
                "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class Kernel:
    """Row-stochastic matrix P(x | theta), rows indexed by the parameter grid.

    Rows may be truncated (Poisson); the missing probability of each row is
    kept in ``tail_mass`` rather than silently dropped.
    """

    theta_grid: SupportGrid
    x_grid: SupportGrid
    rows: np.ndarray
    tail_mass: np.ndarray = field(default=None)

    def __post_init__(self):
        rows = _frozen(self.rows)
        if rows.shape != (len(self.theta_grid), len(self.x_grid)):
            raise ValueError(f"kernel shape {rows.shape} does not match grids")
        if not np.all(np.isfinite(rows)) or np.any(rows < 0):
            raise ValueError("kernel entries must be finite and nonnegative")
        tail = np.zeros(rows.shape[0]) if self.tail_mass is None else self.tail_mass
        tail = _frozen(tail)
        if tail.shape != (rows.shape[0],) or np.any(tail < 0) or np.any(tail > MAX_TAIL):
            raise ValueError("tail mass must lie in [0, 1e-9] per row")
        resid = np.abs(rows.sum(axis=1) + tail - 1.0)
        if np.any(resid > 1e-10):
            raise ValueError(f"kernel rows do not sum to 1 - tail (max residual {resid.max():.3g})")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "tail_mass", tail)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    @property
    def has_tail(self) -> bool:
        return bool(np.any(self.tail_mass > 0))

    def augmented_rows(self) -> np.ndarray:
        """Rows with the tail mass appended as an overflow column (if any)."""
        if not self.has_tail:
            return np.asarray(self.rows)
        return np.hstack([self.rows, self.tail_mass[:, None]])

    def to_dict(self) -> dict:
        return {"theta_grid": self.theta_grid.to_dict(), "x_grid": self.x_grid.to_dict(),
                "rows": self.rows.tolist(), "tail_mass": self.tail_mass.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Kernel":
        return cls(SupportGrid.from_dict(d["theta_grid"]), SupportGrid.from_dict(d["x_grid"]),
                   np.asarray(d["rows"], dtype=float), d.get("tail_mass"))


@dataclass(frozen=True, eq=False)
class Histogram:
    """Per-symbol counts N_x and the derived profile Phi_j = #{x: N_x = j}."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if c.size and (np.any(c < 0) or np.any(c != np.round(c))):
            raise ValueError("counts must be nonnegative integers")
        object.__setattr__(self, "counts", _frozen(c, dtype=np.int64))

    @classmethod
    def from_profile(cls, profile: Sequence[int]) -> "Histogram":
        prof = np.asarray(profile, dtype=np.int64)
        return cls(np.repeat(np.arange(prof.size), prof))

    @property
    def profile(self) -> np.ndarray:
        if self.counts.size == 0:
            return np.zeros(1, dtype=np.int64)
        return np.bincount(self.counts)

    @property
    def n_symbols(self) -> int:
        return int(self.counts.size)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def distinct(self) -> int:
        return int(np.count_nonzero(self.counts))

    def padded(self, extra_unseen: int) -> "Histogram":
        return Histogram(np.concatenate([self.counts, np.zeros(extra_unseen, dtype=np.int64)]))


def _check_same_grid(a: SupportGrid, b: SupportGrid) -> None:
    if a != b:
        raise GridMismatchError("distributions live on different grids")


def _pq(P, Q):
    if isinstance(P, DiscreteDistribution) or isinstance(Q, DiscreteDistribution):
        _check_same_grid(P.grid, Q.grid)
        return P.weights, Q.weights
    p, q = np.asarray(P, dtype=float), np.asarray(Q, dtype=float)
    if p.shape != q.shape:
        raise GridMismatchError("probability vectors of different length")
    return p, q


def tv_distance(P, Q) -> float:
    """Half-l1 distance; accepts distributions or raw probability vectors."""
    p, q = _pq(P, Q)
    return 0.5 * float(np.abs(p - q).sum())


def hellinger_sq(P, Q) -> float:
    """Squared Hellinger distance sum (sqrt p - sqrt q)^2, in [0, 2]."""
    p, q = _pq(P, Q)
    return float(((np.sqrt(p) - np.sqrt(q)) ** 2).sum())


def chi2_divergence(P, Q) -> float:
    """chi^2(P || Q); ``math.inf`` when P is not absolutely continuous wrt Q."""
    p, q = _pq(P, Q)
    pos = q > 0
    if np.any(p[~pos] > 0):
        return math.inf
    with np.errstate(over="ignore"):
        return float(((p[pos] - q[pos]) ** 2 / q[pos]).sum())


def chi2_tensorize(chi2: float, n: float) -> float:
    """chi^2 between n-fold products: (1 + chi2)^n - 1."""
    if chi2 < 0 or n < 0:
        raise ValueError("chi2 and n must be nonnegative")
    if math.isinf(chi2):
        return math.inf
    return math.expm1(n * math.log1p(chi2))


def mix(kernel: Kernel, pi: DiscreteDistribution) -> DiscreteDistribution:
    """Mixture distribution pi P on the observation grid."""
    _check_same_grid(kernel.theta_grid, pi.grid)
    w = pi.weights @ kernel.rows
    return DiscreteDistribution(kernel.x_grid, w / math.fsum(w))


def push(kernel: Kernel, g) -> np.ndarray:
    """(P g)(theta) = sum_x P(x|theta) g(x), the adjoint of :func:`mix`."""
    g = np.asarray(g, dtype=float)
    if g.shape != (len(kernel.x_grid),):
        raise GridMismatchError("function does not live on the observation grid")
    return kernel.rows @ g


def identity_kernel(grid: SupportGrid) -> Kernel:
    return Kernel(grid, grid, np.eye(len(grid)))


def make_binomial_kernel(d: int, p: float) -> Kernel:
    """Binomial(theta, p) rows for theta, x in {0, ..., d}."""
    if d < 0 or not 0.0 <= p <= 1.0:
        raise ValueError("need d >= 0 and p in [0, 1]")
    grid = SupportGrid.integers(d)
    k = np.arange(d + 1)
    rows = stats.binom.pmf(k[None, :], k[:, None], p)
    rows = np.where(k[None, :] <= k[:, None], rows, 0.0)
    rows /= rows.sum(axis=1, keepdims=True)
    return Kernel(grid, grid, rows)


def default_poisson_xmax(theta_max: float) -> int:
    return int(math.ceil(theta_max + 12.0 * math.sqrt(theta_max) + 30.0))


def poisson_pmf_matrix(lams, x_max: int) -> np.ndarray:
    """Poisson pmf rows, computed in log space so large means do not overflow."""
    lams = np.asarray(lams, dtype=float)
    k = np.arange(x_max + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = k[None, :] * np.log(lams[:, None]) - lams[:, None] - _log_factorial(k)[None, :]
    out = np.exp(logp)
    out[lams == 0, :] = 0.0
    out[lams == 0, 0] = 1.0
    return out


def _log_factorial(k):
    from scipy.special import gammaln
    return gammaln(np.asarray(k, dtype=float) + 1.0)


def make_poisson_kernel(theta_grid: SupportGrid, x_max: int | None = None) -> Kernel:
    """Poisson(theta) rows truncated at ``x_max`` with the tail recorded."""
    if x_max is None:
        x_max = default_poisson_xmax(float(theta_grid.points[-1]))
    rows = poisson_pmf_matrix(theta_grid.points, x_max)
    tail = stats.poisson.sf(x_max, theta_grid.points)
    tail = np.where(theta_grid.points == 0, 0.0, tail)
    return Kernel(theta_grid, SupportGrid.integers(x_max), rows, tail)
