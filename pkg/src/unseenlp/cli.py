"""Command-line interface.

    unseenlp modulus     --model de --p 0.3 --t 0.01 --t 0.001 --out runs/mod
    unseenlp estimator   build --model de --n 1000 --p 0.5 --out de.json
    unseenlp estimator   apply --spec de.json --histogram hist.txt
    unseenlp simulate    --problem species --param 2 --sweep-n 1000,10000 --out risk.csv
    unseenlp lower-bound --kind de-prior --p 0.3 --out cert.json
    unseenlp replay      runs/mod/manifest.json

Every command that writes files also writes a manifest (command line,
configuration, seed, version, wall-clock time and SHA-256 digests of the
outputs).  ``replay`` reruns a manifest into a scratch directory and
compares digests byte for byte.

Randomness enters only through ``simulate --seed``: replication r of source
s at sweep point i uses SeedSequence(seed, spawn_key=(i, s, r)).

Exit codes: 0 success, 2 usage, 3 solver failure, 4 certificate failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import ClampWarning, EstimatorSpec, apply_estimator
from .lowerbounds import (
    CertificateError,
    DePriorParams,
    PriorPairCertificate,
    de_pipeline_bound,
    det_lower_bound,
    two_point_bound,
)
from .lp import SolverFailure
from .modulus import MAX_FW_GRID, ModulusQuery, delta_st, divergence_modulus
from .montecarlo import PROBLEMS, SimConfig, de_estimator, estimate_risk, fit_rate_exponent, poprec_estimator
from .probspace import (
    DiscreteDistribution,
    Histogram,
    Kernel,
    SupportGrid,
    make_binomial_kernel,
    make_poisson_kernel,
)

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_CERT = 0, 2, 3, 4
MODULUS_SCHEMA = "# schema: unseenlp-modulus/1 columns=t,value,witness_tag"
MANIFEST_NAME = "manifest.json"
PROBLEM_ALIASES = {"de": "distinct_elements", "poprec": "population_recovery"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# file helpers


def atomic_write(path: Path, data: bytes) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _dump(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def parse_histogram(text: str) -> Histogram:
    """Histogram from one count per line or ``symbol,count`` CSV (header optional).

    Blank lines and lines starting with ``#`` are ignored.  The format is
    fixed by the first data line: a comma means CSV.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        return Histogram(np.zeros(0, dtype=int))
    counts = []
    if "," in lines[0]:
        rows = list(csv.reader(lines))
        first = rows[0]
        if len(first) >= 2 and not first[-1].strip().lstrip("-").isdigit():
            rows = rows[1:]
        for r in rows:
            if len(r) != 2:
                raise UsageError(f"histogram CSV rows need symbol,count: {r!r}")
            counts.append(_count(r[1]))
    else:
        counts = [_count(ln) for ln in lines]
    return Histogram(np.asarray(counts, dtype=int))


def _count(s: str) -> int:
    try:
        v = int(s.strip())
    except ValueError as exc:
        raise UsageError(f"not an integer count: {s!r}") from exc
    if v < 0:
        raise UsageError(f"negative count {v}")
    return v


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _read_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return obj


# ---------------------------------------------------------------------------
# modulus


def _model_query(args, kind: str, t: float):
    if args.model == "de":
        if args.p is None or not 0 < args.p < 1:
            raise UsageError("--model de needs --p in (0, 1)")
        D = args.grid or 100
        kernel = make_binomial_kernel(D, args.p)
        theta = np.arange(D + 1, dtype=float)
        h = (theta >= 1).astype(float)
        return ModulusQuery(kernel, h, kind, t, ((theta, 1.0),))
    if args.model == "poprec":
        if args.eps is None or not 0 < args.eps < 1:
            raise UsageError("--model poprec needs --eps in (0, 1)")
        d = args.d or 20
        h = np.zeros(d + 1)
        h[0] = 1.0
        return ModulusQuery(make_binomial_kernel(d, 1.0 - args.eps), h, kind, t)
    if args.model == "poisson-exp":
        grid = SupportGrid.linspace(0.0, args.theta_max, args.grid or 60)
        return ModulusQuery(make_poisson_kernel(grid), np.exp(-args.s * grid.points), kind, t)
    if args.model == "custom":
        if not args.custom:
            raise UsageError("--model custom needs --custom FILE")
        d = _read_json(args.custom)
        try:
            kernel = Kernel.from_dict(d["kernel"])
            cons = tuple((np.asarray(c, dtype=float), float(b)) for c, b in d.get("constraints", []))
            return ModulusQuery(kernel, np.asarray(d["h"], dtype=float), kind, t, cons)
        except (KeyError, TypeError) as exc:
            raise UsageError(f"{args.custom}: expected keys kernel, h[, constraints]") from exc
    raise UsageError(f"unknown model {args.model!r}")


def cmd_modulus(args):
    if not args.t:
        raise UsageError("at least one --t is required")
    if any(t < 0 for t in args.t):
        raise UsageError("--t must be nonnegative")
    if args.model == "poisson-exp" and args.s <= 0:
        raise UsageError("--s must be positive")
    files, rows = {}, []
    for i, t in enumerate(args.t):
        if args.model == "poisson-exp" and args.divergence == "tv":
            if t > 1:
                raise UsageError("poisson-exp needs t <= 1")
            grid = SupportGrid.linspace(0.0, args.theta_max, args.grid) if args.grid else None
            res = delta_st(args.s, t, grid, method=args.method)
            tag = "dual"
        else:
            q = _model_query(args, args.divergence, t)
            if args.divergence != "tv" and len(q.h) > MAX_FW_GRID:
                raise UsageError(f"{args.divergence} moduli need a grid of at most {MAX_FW_GRID} points")
            res = divergence_modulus(q, method=args.method)
            tag = "saturated" if res.certificate.get("saturated") else "pair"
        out = {"model": args.model, "divergence": args.divergence, "t": t, **res.to_dict()}
        if args.divergence == "tv" and args.model != "poisson-exp":
            # TV budgets are 1/2 ||.||_1; the rate bounds for these models are stated with ||.||_1 <= t
            out["value_l1_budget"] = divergence_modulus(q.with_t(t / 2), method=args.method).value
        files[f"modulus_{i:03d}.json"] = _dump(_jsonable(out))
        rows.append((t, res.value, tag))
    buf = io.StringIO()
    buf.write(MODULUS_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "value", "witness_tag"])
    for t, v, tag in rows:
        w.writerow([repr(t), repr(v), tag])
    pts = [(t, v) for t, v, _ in rows if t > 0 and v > 0]
    if len({t for t, _ in pts}) >= 2:
        slope, se = fit_rate_exponent(pts)
        w.writerow(["slope", repr(slope), repr(se)])
    files["sweep.csv"] = buf.getvalue().encode()
    summary = "\n".join(f"t={t!r} value={v!r} ({tag})" for t, v, tag in rows) + "\n"
    return files, summary


# ---------------------------------------------------------------------------
# estimators


def cmd_estimator_build(args):
    if args.n is None or args.n < 1:
        raise UsageError("--n must be a positive integer")
    if args.model == "de":
        if args.p is None or not 0 < args.p < 1:
            raise UsageError("--model de needs --p in (0, 1)")
        spec = de_estimator(args.n, args.p, args.grid)
    elif args.model == "poprec":
        if args.eps is None or not 0 < args.eps < 1:
            raise UsageError("--model poprec needs --eps in (0, 1)")
        spec = poprec_estimator(args.n, args.eps, args.d or 20)
    else:
        raise UsageError(f"unknown model {args.model!r}")
    spec.certificate.update(model=args.model, n=args.n)
    data = _dump(_jsonable(spec.to_dict()))
    return {"": data}, f"built {args.model} estimator with {spec.g.size} coefficients\n"


def cmd_estimator_apply(args):
    spec = EstimatorSpec.from_dict(_read_json(args.spec))
    hist = parse_histogram(_read(args.histogram))
    n = args.n or spec.certificate.get("n")
    if spec.normalization == "mean" and not n:
        raise UsageError("mean-normalized estimator needs --n")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ClampWarning)
        est = apply_estimator(spec, hist, n)
    clamped = any(issubclass(c.category, ClampWarning) for c in caught)
    out = {"estimate": est, "n": n, "symbols": hist.n_symbols, "clamped": clamped}
    return {"": _dump(out)}, f"{est!r}\n"


# ---------------------------------------------------------------------------
# simulation and lower bounds


def _int_list(s: str) -> tuple:
    try:
        vals = tuple(int(float(v)) for v in s.split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"bad integer list {s!r}") from exc
    if not vals:
        raise UsageError("empty n list")
    return vals


def cmd_simulate(args):
    problem = PROBLEM_ALIASES.get(args.problem, args.problem)
    if problem not in PROBLEMS:
        raise UsageError(f"unknown problem {args.problem!r}")
    if (args.sweep_n is None) == (args.n is None):
        raise UsageError("give exactly one of --sweep-n and --n")
    ns = _int_list(args.sweep_n) if args.sweep_n else (args.n,)
    sources = tuple(s for s in (args.sources or "").split(",") if s)
    try:
        cfg = SimConfig(problem, ns, args.param, sources, args.replications, args.seed, args.estimator,
                        args.d, args.C0, args.fixed_size)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rep = estimate_risk(cfg, jobs=args.jobs)
    lines = [f"n={r['n']} source={r['source']} mse={r['mse']:.6g}" for r in rep.rows if r["source"] == "worst"]
    lines += [f"slope[{k}]={v[0]:.4f} +- {v[1]:.4f}" for k, v in rep.slopes.items() if k == "worst"]
    return {"": rep.to_csv().encode()}, "\n".join(lines) + "\n"


def cmd_lower_bound(args):
    if args.kind == "de-prior":
        if args.p is None:
            raise UsageError("--kind de-prior needs --p")
        delta = args.delta if args.delta is not None else args.p * math.exp(-3.0)
        try:
            if args.K == "auto":
                params = DePriorParams.with_auto_K(args.p, delta)
            else:
                params = DePriorParams(args.p, delta, int(args.K))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        pipe = de_pipeline_bound(params)
        cert = pipe.pop("certificate")
        out = {"kind": "de-prior", "params": params.to_dict(), "certificate": cert.to_dict(),
               "pipeline": pipe}
        text = "".join(f"{k}: {'pass' if v['ok'] else 'FAIL'}\n" for k, v in cert.clauses.items())
        text += f"two-point bound at n={pipe['n']}: {pipe['bound']!r}\n"
    elif args.kind == "det":
        if args.delta is None or args.kv is None or args.n is None:
            raise UsageError("--kind det needs --delta, --kv and --n")
        mw = "auto" if args.mix_weight is None else args.mix_weight
        val = det_lower_bound(args.delta, args.kv, args.n, mw)
        out = {"kind": "det", "delta": args.delta, "K_V": args.kv, "n": args.n, "mix_weight": mw, "bound": val}
        text = f"{val!r}\n"
    elif args.kind == "two-point":
        if not args.pair or args.n is None:
            raise UsageError("--kind two-point needs --pair FILE and --n")
        d = _read_json(args.pair)
        try:
            kernel = Kernel.from_dict(d["kernel"])
            pi = DiscreteDistribution(kernel.theta_grid, d["pi"])
            pip = DiscreteDistribution(kernel.theta_grid, d["pi_prime"])
            h = np.asarray(d["h"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise UsageError(f"{args.pair}: expected keys kernel, pi, pi_prime, h") from exc
        cert = PriorPairCertificate.from_pair(pi, pip, kernel, h)
        val = two_point_bound(pi, pip, kernel, args.n, h)
        out = {"kind": "two-point", "n": args.n, "bound": val, "certificate": cert.to_dict()}
        text = f"{val!r}\n"
    else:
        raise UsageError(f"unknown kind {args.kind!r}")
    return {"": _dump(_jsonable(out))}, text


# ---------------------------------------------------------------------------
# manifests and replay


def _out_paths(args, files: dict) -> dict:
    """Map output keys to paths; key "" is the single-file output."""
    if "" in files:
        return {"": Path(args.out)}
    return {k: Path(args.out) / k for k in files}


def _manifest_path(args, files: dict) -> Path:
    if "" in files:
        return Path(str(args.out) + ".manifest.json")
    return Path(args.out) / MANIFEST_NAME


def _config(args) -> dict:
    skip = {"func", "out"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _run(args, argv):
    t0 = time.perf_counter()
    files, text = args.func(args)
    if args.out is None:
        if "" in files and getattr(args, "print_json", False):
            text = files[""].decode()
        return text, None
    paths = _out_paths(args, files)
    for k, p in paths.items():
        atomic_write(p, files[k])
    mpath = _manifest_path(args, files)
    base = mpath.parent
    manifest = {
        "tool": "unseenlp",
        "version": __version__,
        "command": argv[0] if argv else "",
        "argv": list(argv),
        "cwd": os.getcwd(),
        "config": _config(args),
        "seed": getattr(args, "seed", None),
        "layout": "file" if "" in files else "dir",
        "outputs": {os.path.relpath(p, base): _sha(files[k]) for k, p in paths.items()},
        "stdout_sha256": _sha(text.encode()),
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    atomic_write(mpath, _dump(manifest))
    return text, mpath


def _rewrite_out(argv: list, new_out: str) -> list:
    out = list(argv)
    for i, a in enumerate(out):
        if a == "--out" and i + 1 < len(out):
            out[i + 1] = new_out
            return out
        if a.startswith("--out="):
            out[i] = "--out=" + new_out
            return out
    raise UsageError("manifest argv has no --out")


def cmd_replay(args):
    mpath = Path(args.manifest)
    man = _read_json(str(mpath))
    if man.get("tool") != "unseenlp" or "argv" not in man:
        raise UsageError(f"{mpath} is not an unseenlp manifest")
    single = man.get("layout") == "file"
    mismatches = []
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(tmp) / ("out" if single else "outdir")
        argv = _rewrite_out(man["argv"], str(target))
        cwd = os.getcwd()
        os.chdir(man.get("cwd", cwd))
        try:
            sub = build_parser().parse_args(argv)
            _, new_m = _run(sub, argv)
        finally:
            os.chdir(cwd)
        new = _read_json(str(new_m))
        if single:
            pairs = list(zip(man["outputs"].items(), new["outputs"].values()))
            mismatches += [name for (name, old), got in pairs if old != got]
        else:
            mismatches += [name for name, old in man["outputs"].items() if new["outputs"].get(name) != old]
            mismatches += [name for name in new["outputs"] if name not in man["outputs"]]
        if new["stdout_sha256"] != man.get("stdout_sha256"):
            mismatches.append("<stdout>")
    if mismatches:
        raise CertificateError("replay", "outputs differ: " + ", ".join(mismatches))
    return None, f"replay ok: {len(man['outputs'])} output(s) identical\n"


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unseenlp", description="Moduli, linear estimators and lower bounds "
                                "for estimating unseen quantities.")
    p.add_argument("--version", action="version", version=f"unseenlp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("modulus", help="compute moduli of continuity")
    m.add_argument("--model", choices=["de", "poprec", "poisson-exp", "custom"], required=True)
    m.add_argument("--divergence", choices=["tv", "chi2", "hellinger"], default="tv")
    m.add_argument("--t", type=float, action="append", help="budget (repeat for a sweep)")
    m.add_argument("--p", type=float, help="sampling rate (de)")
    m.add_argument("--eps", type=float, help="erasure probability (poprec)")
    m.add_argument("--d", type=int, help="string length (poprec)")
    m.add_argument("--s", type=float, default=4.0, help="exponent of h = exp(-s theta) (poisson-exp)")
    m.add_argument("--theta-max", type=float, default=10.0, help="parameter range (poisson-exp)")
    m.add_argument("--grid", type=int, help="parameter grid size")
    m.add_argument("--custom", help="JSON with kernel, h and optional constraints")
    m.add_argument("--method", choices=["auto", "simplex", "highs"], default="auto")
    m.add_argument("--out", help="output directory")
    m.set_defaults(func=cmd_modulus)

    e = sub.add_parser("estimator", help="build or apply linear estimators")
    esub = e.add_subparsers(dest="action", required=True)
    b = esub.add_parser("build")
    b.add_argument("--model", choices=["de", "poprec"], required=True)
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--p", type=float)
    b.add_argument("--eps", type=float)
    b.add_argument("--d", type=int)
    b.add_argument("--grid", type=int, help="coefficient grid size (de; default min(n, 100))")
    b.add_argument("--out", help="estimator JSON path")
    b.set_defaults(func=cmd_estimator_build, print_json=True)
    a = esub.add_parser("apply")
    a.add_argument("--spec", required=True)
    a.add_argument("--histogram", required=True)
    a.add_argument("--n", type=int)
    a.add_argument("--out", help="result JSON path")
    a.set_defaults(func=cmd_estimator_apply)

    s = sub.add_parser("simulate", help="Monte Carlo risk sweeps")
    s.add_argument("--problem", required=True, help="distinct_elements|species|population_recovery (or de, poprec)")
    s.add_argument("--param", type=float, required=True, help="p, r or eps")
    s.add_argument("--sweep-n", help="comma-separated n values")
    s.add_argument("--n", type=int)
    s.add_argument("--sources", help="comma-separated source specs")
    s.add_argument("--replications", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--estimator", default="lp", choices=["lp", "good_toulmin", "zero", "oracle"])
    s.add_argument("--d", type=int, default=20)
    s.add_argument("--C0", type=float, default=4.0)
    s.add_argument("--fixed-size", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="CSV path")
    s.set_defaults(func=cmd_simulate)

    lb = sub.add_parser("lower-bound", help="lower-bound certificates")
    lb.add_argument("--kind", choices=["de-prior", "det", "two-point"], required=True)
    lb.add_argument("--p", type=float)
    lb.add_argument("--delta", type=float)
    lb.add_argument("--K", default="512", help="series length or 'auto'")
    lb.add_argument("--kv", type=float)
    lb.add_argument("--n", type=float)
    lb.add_argument("--mix-weight", type=float)
    lb.add_argument("--pair", help="JSON with kernel, pi, pi_prime, h")
    lb.add_argument("--out", help="certificate JSON path")
    lb.set_defaults(func=cmd_lower_bound, print_json=True)

    r = sub.add_parser("replay", help="rerun a manifest and compare outputs")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay, out=None)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    try:
        if args.func is cmd_replay:
            _, text = cmd_replay(args)
        else:
            text, _ = _run(args, argv)
        sys.stdout.write(text)
        return EXIT_OK
    except UsageError as exc:
        print(f"unseenlp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"unseenlp: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CertificateError as exc:
        print(f"unseenlp: certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERT
    except (ValueError, OSError) as exc:
        print(f"unseenlp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
