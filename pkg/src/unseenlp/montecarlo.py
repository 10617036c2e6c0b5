"""Sampling models, Monte Carlo risk estimation and rate fitting.

Seeds follow one counter scheme everywhere: replication ``rep`` of source
``s`` at sweep point ``i`` draws from

    numpy.random.SeedSequence(seed, spawn_key=(i, s, rep))

and deterministic source construction (e.g. drawing a fixed urn from a prior)
uses ``spawn_key=(i, s, SOURCE_KEY)``.  Replications are processed in fixed
chunks whose partial sums are merged in chunk order, so results are identical
for any number of worker processes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .estimators import (
    EstimatorSpec,
    SpeciesEstimator,
    build_linear_estimator,
    build_species_estimator,
    good_toulmin,
    species_estimate,
)
from .probspace import Histogram, make_binomial_kernel

__all__ = [
    "SimConfig",
    "RiskReport",
    "sample_bernoulli_subsample",
    "sample_poissonized_species",
    "estimate_risk",
    "fit_rate_exponent",
    "de_estimator",
    "poprec_estimator",
    "species_probabilities",
    "de_theta",
    "CSV_SCHEMA",
]

CHUNK = 64
SOURCE_KEY = 2 ** 31 - 1
CSV_SCHEMA = "# schema: unseenlp-risk/1 columns=problem,n,param,source,replications,mse,stderr[,slope,slope_stderr]"
DE_GRID_MAX = 100

PROBLEMS = ("distinct_elements", "species", "population_recovery")


@dataclass(frozen=True)
class SimConfig:
    """One simulation study.

    ``sources`` are strings ``name[:arg]``:

    * distinct elements: ``uniform_urn:k`` (n/k colours with k balls each),
      ``geometric_urn:a`` (colour multiplicities with frequencies
      proportional to a^k), ``prior_pair`` (multiplicities drawn from the
      lower-bound prior), ``file:path`` (one multiplicity per line)
    * species: ``uniform:lam`` (n/lam equiprobable symbols, so each has
      Poisson mean lam), ``logsq:c`` (uniform with lam = c*ceil(log n)^2, the
      scale where the truncated estimator's variance peaks),
      ``twolevel:lam1:lam2`` (half the mass at each rate)
    * population recovery: ``binomial:q`` (weights Binomial(d, q)),
      ``uniform`` (weights uniform on 0..d)
    """

    problem: str
    n_values: tuple
    param: float
    sources: tuple = ()
    replications: int = 200
    seed: int = 0
    estimator: str = "lp"
    d: int = 20
    C0: float = 4.0
    fixed_size: bool = False

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        ns = tuple(int(n) for n in self.n_values)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("n sweep must be nonempty and increasing")
        if self.replications < 2:
            raise ValueError("need at least two replications")
        object.__setattr__(self, "n_values", ns)
        srcs = tuple(self.sources) or _default_sources(self.problem)
        object.__setattr__(self, "sources", srcs)
        if self.estimator not in ("lp", "good_toulmin", "zero", "oracle"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.estimator == "good_toulmin" and self.problem != "species":
            raise ValueError("Good-Toulmin applies to the species problem only")

    def to_dict(self) -> dict:
        return {"problem": self.problem, "n_values": list(self.n_values), "param": self.param,
                "sources": list(self.sources), "replications": self.replications, "seed": self.seed,
                "estimator": self.estimator, "d": self.d, "C0": self.C0, "fixed_size": self.fixed_size}


def _default_sources(problem):
    return {
        "distinct_elements": ("uniform_urn:1", "uniform_urn:2", "uniform_urn:4", "geometric_urn:0.7"),
        "species": ("uniform:0.5", "uniform:5", "logsq:1", "logsq:2"),
        "population_recovery": ("binomial:0.5", "uniform"),
    }[problem]


@dataclass
class RiskReport:
    problem: str
    param: float
    rows: list = field(default_factory=list)    # dicts: n, source, replications, mse, stderr
    slopes: dict = field(default_factory=dict)  # source -> (slope, stderr)

    def mse(self, n: int, source: str = "worst") -> float:
        for r in self.rows:
            if r["n"] == n and r["source"] == source:
                return r["mse"]
        raise KeyError((n, source))

    def points(self, source: str = "worst"):
        return [(r["n"], r["mse"]) for r in self.rows if r["source"] == source]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_SCHEMA + "\n")
        w = csv.writer(buf, lineterminator="\n")
        sweep = bool(self.slopes)
        head = ["problem", "n", "param", "source", "replications", "mse", "stderr"]
        w.writerow(head + (["slope", "slope_stderr"] if sweep else []))
        for r in self.rows:
            row = [self.problem, r["n"], repr(self.param), r["source"], r["replications"],
                   repr(r["mse"]), repr(r["stderr"])]
            w.writerow(row + (["", ""] if sweep else []))
        for src, (sl, se) in self.slopes.items():
            w.writerow([self.problem, "sweep", repr(self.param), src, "", "", "", repr(sl), repr(se)])
        return buf.getvalue()


# --------------------------------------------------------------------------
# samplers


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_bernoulli_subsample(theta, p: float, seed=None) -> Histogram:
    """Each of the theta_i balls of colour i is seen independently with probability p."""
    theta = np.asarray(theta, dtype=np.int64)
    return Histogram(_rng(seed).binomial(theta, p))


def sample_poissonized_species(p_vector, n: float, r: float, seed=None, fixed_size: bool = False):
    """Return (histogram of the n-sample, U = #{x: unseen now, seen in the r n future sample})."""
    p = np.asarray(p_vector, dtype=float)
    rng = _rng(seed)
    if fixed_size:
        N = rng.multinomial(int(round(n)), p) if n > 0 else np.zeros(p.size, dtype=np.int64)
        Nf = rng.multinomial(int(round(r * n)), p) if r > 0 else np.zeros(p.size, dtype=np.int64)
    else:
        N = rng.poisson(n * p)
        Nf = rng.poisson(r * n * p)
    U = int(np.count_nonzero((N == 0) & (Nf > 0)))
    return Histogram(N), U


# --------------------------------------------------------------------------
# problem set-ups


def _source_rng(cfg, i, s):
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(i, s, SOURCE_KEY)))


def de_theta(source: str, n: int, p: float, rng) -> np.ndarray:
    """Colour multiplicities (total close to n balls) for a distinct-elements source."""
    name, _, arg = source.partition(":")
    if name == "uniform_urn":
        k = int(arg or 1)
        return np.full(max(n // k, 1), k, dtype=np.int64)
    if name == "geometric_urn":
        a = float(arg or 0.7)
        kmax = DE_GRID_MAX
        k = np.arange(1, kmax + 1)
        w = a ** k
        w /= w.sum()
        colours = n / float(w @ k)
        counts = np.floor(colours * w).astype(np.int64)
        # distribute the remaining balls one colour at a time, smallest multiplicity first
        theta = np.repeat(k, counts)
        short = n - int(theta.sum())
        if short > 0:
            theta = np.concatenate([theta, np.ones(short, dtype=np.int64)])
        return theta
    if name == "prior_pair":
        from .lowerbounds import DePriorParams, de_prior_pair
        cert = de_prior_pair(DePriorParams(p=p, delta=p * math.exp(-3.0)))
        prior = cert.pi.weights
        m = int(n / max(cert.pi.mean(), 1e-12))
        theta = rng.choice(prior.size, size=m, p=prior)
        theta = theta[theta > 0]
        return theta.astype(np.int64)
    if name == "file":
        vals = np.loadtxt(arg, dtype=np.int64, ndmin=1)
        return vals[vals > 0]
    raise ValueError(f"unknown distinct-elements source {source!r}")


def species_probabilities(source: str, n: int) -> np.ndarray:
    name, _, arg = source.partition(":")
    if name == "uniform":
        lam = float(arg or 1.0)
        k = max(int(round(n / lam)), 1)
        return np.full(k, 1.0 / k)
    if name == "logsq":
        return species_probabilities(f"uniform:{float(arg or 1.0) * math.ceil(math.log(n)) ** 2}", n)
    if name == "twolevel":
        a, b = (float(v) for v in arg.split(":"))
        ka, kb = max(int(round(n / (2 * a))), 1), max(int(round(n / (2 * b))), 1)
        return np.concatenate([np.full(ka, 0.5 / ka), np.full(kb, 0.5 / kb)])
    raise ValueError(f"unknown species source {source!r}")


def poprec_prior(source: str, d: int) -> np.ndarray:
    name, _, arg = source.partition(":")
    if name == "binomial":
        return stats.binom.pmf(np.arange(d + 1), d, float(arg or 0.5))
    if name == "uniform":
        return np.full(d + 1, 1.0 / (d + 1))
    raise ValueError(f"unknown population-recovery source {source!r}")


def de_estimator(n: int, p: float, D: int | None = None) -> EstimatorSpec:
    """LP estimator of the number of distinct colours, normalized by n, for an urn of n balls."""
    D = min(n, DE_GRID_MAX) if D is None else D
    h = np.r_[0.0, np.ones(D)]
    return build_linear_estimator(make_binomial_kernel(D, p), h, n ** -0.5, enforce_zero=True,
                                  normalization="mean", method="highs")


def poprec_estimator(n: int, eps: float, d: int) -> EstimatorSpec:
    """Estimator of pi(0) from n erased d-bit samples (weights seen through Binomial(theta, 1 - eps))."""
    h = np.zeros(d + 1)
    h[0] = 1.0
    return build_linear_estimator(make_binomial_kernel(d, 1.0 - eps), h, n ** -0.5,
                                  normalization="mean", method="auto")


# --------------------------------------------------------------------------
# risk estimation


class _Task:
    """Everything one chunk of replications needs, picklable for worker processes."""

    def __init__(self, cfg: SimConfig, i: int, s: int, n: int, source: str, est, setup):
        self.cfg, self.i, self.s, self.n, self.source, self.est, self.setup = cfg, i, s, n, source, est, setup

    def losses(self, reps: range) -> np.ndarray:
        out = np.empty(len(reps))
        for j, rep in enumerate(reps):
            rng = np.random.default_rng(np.random.SeedSequence(self.cfg.seed, spawn_key=(self.i, self.s, rep)))
            out[j] = self._one(rng)
        return out

    def _one(self, rng) -> float:
        cfg, est = self.cfg, self.est
        if cfg.problem == "distinct_elements":
            theta, truth = self.setup
            hist = sample_bernoulli_subsample(theta, cfg.param, rng)
            if cfg.estimator == "zero":
                val = 0.0
            elif cfg.estimator == "oracle":
                val = truth
            else:
                counts = hist.counts[hist.counts > 0]
                g = est.g
                val = float(g[np.minimum(counts, g.size - 1)].sum()) / self.n
            return (val - truth) ** 2
        if cfg.problem == "species":
            p, n1, m = self.setup
            hist, U = sample_poissonized_species(p, n1, cfg.param, rng, cfg.fixed_size)
            if cfg.estimator == "good_toulmin":
                val = good_toulmin(hist.profile, cfg.param)
            elif cfg.estimator == "zero":
                val = 0.0
            elif cfg.estimator == "oracle":
                val = U
            else:
                val = species_estimate(est, hist, rng=rng)
            return ((val - U) / m) ** 2
        prior, truth = self.setup
        thetas = rng.choice(prior.size, size=self.n, p=prior)
        x = rng.binomial(thetas, 1.0 - cfg.param)
        if cfg.estimator == "zero":
            val = 0.0
        elif cfg.estimator == "oracle":
            val = truth
        else:
            val = float(est.g[x].sum()) / self.n
        return (val - truth) ** 2


def _run_chunk(args):
    task, lo, hi = args
    return task.losses(range(lo, hi))


def _build_estimator(cfg: SimConfig, n: int, cache: dict):
    if cfg.estimator in ("zero", "oracle", "good_toulmin"):
        return None
    if n not in cache:
        if cfg.problem == "distinct_elements":
            cache[n] = de_estimator(n, cfg.param)
        elif cfg.problem == "species":
            cache[n] = build_species_estimator(n, cfg.param, cfg.C0)
        else:
            cache[n] = poprec_estimator(n, cfg.param, cfg.d)
    return cache[n]


def _setup(cfg: SimConfig, i: int, s: int, n: int, source: str):
    if cfg.problem == "distinct_elements":
        theta = de_theta(source, n, cfg.param, _source_rng(cfg, i, s))
        return theta, np.count_nonzero(theta) / n
    if cfg.problem == "species":
        n1 = n * (1.0 + 1.0 / math.log(n))
        p = species_probabilities(source, n)
        return p, n1, cfg.param * n1
    prior = poprec_prior(source, cfg.d)
    return prior, float(prior[0])


def estimate_risk(cfg: SimConfig, estimators: dict | Callable | None = None, jobs: int = 1) -> RiskReport:
    """Mean squared (normalized) error per sweep point and source, plus the worst case.

    ``estimators`` maps n to a prebuilt estimator (or is a callable n -> estimator);
    when omitted the problem's default estimator is built for each n.
    """
    cache: dict = {}
    report = RiskReport(cfg.problem, cfg.param)
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        for i, n in enumerate(cfg.n_values):
            if estimators is None:
                est = _build_estimator(cfg, n, cache)
            else:
                est = estimators(n) if callable(estimators) else estimators[n]
            _check_estimator(cfg, est)
            worst = None
            for s, source in enumerate(cfg.sources):
                task = _Task(cfg, i, s, n, source, est, _setup(cfg, i, s, n, source))
                chunks = [(task, lo, min(lo + CHUNK, cfg.replications)) for lo in range(0, cfg.replications, CHUNK)]
                results = pool.map(_run_chunk, chunks) if pool else map(_run_chunk, chunks)
                mean, m2, count = 0.0, 0.0, 0
                for losses in results:
                    mean, m2, count = _merge(mean, m2, count, losses)
                var = m2 / (count - 1)
                row = {"n": n, "source": source, "replications": count, "mse": mean,
                       "stderr": math.sqrt(var / count)}
                report.rows.append(row)
                if worst is None or row["mse"] > worst["mse"]:
                    worst = row
            report.rows.append({**worst, "source": "worst"})
    finally:
        if pool:
            pool.shutdown()
    if len(cfg.n_values) >= 3:
        for source in list(cfg.sources) + ["worst"]:
            pts = report.points(source)
            if all(v > 0 for _, v in pts):
                report.slopes[source] = fit_rate_exponent(pts)
    return report


def _check_estimator(cfg, est):
    if cfg.estimator != "lp":
        return
    want = SpeciesEstimator if cfg.problem == "species" else EstimatorSpec
    if not isinstance(est, want):
        raise TypeError(f"{cfg.problem} needs a {want.__name__}, got {type(est).__name__}")


def _merge(mean, m2, count, losses):
    """Chan et al. parallel update of (mean, sum of squared deviations, count)."""
    nb = losses.size
    if nb == 0:
        return mean, m2, count
    mb = float(losses.mean())
    with np.errstate(over="ignore"):
        # exploding estimators (Good-Toulmin with r > 1) give an infinite spread; report it as such
        m2b = float(((losses - mb) ** 2).sum())
    tot = count + nb
    delta = mb - mean
    mean = mean + delta * nb / tot
    m2 = m2 + m2b + delta * delta * count * nb / tot
    return mean, m2, tot


def fit_rate_exponent(points: Sequence) -> tuple[float, float]:
    """Least-squares slope of log(risk) against log(n), with its standard error."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    x = np.log([a for a, _ in pts])
    y = np.log([b for _, b in pts])
    if len(pts) == 2:
        return float((y[1] - y[0]) / (x[1] - x[0])), 0.0
    res = stats.linregress(x, y)
    return float(res.slope), float(res.stderr)
