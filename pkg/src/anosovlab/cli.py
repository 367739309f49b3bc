"""Command-line front end.

Every command reads a group file (a path, or the name of a bundled
example) and writes machine-readable output: JSONL for ``ball``, a JSON
run report for everything else, CSV for point clouds.

Exit codes: 0 success, 1 verification failure, 2 invalid input,
3 numerical or budget failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from anosovlab import __version__
from anosovlab.convexcore import (
    ConvexDomain,
    cocompactness_radius,
    geodesic_orbit_sequence,
    hyperboloid_orbit,
    shadow_lemma_diagnostic,
)
from anosovlab.dynamics import (
    hyperconvex_check,
    hyperconvex_direct_k1,
    limit_set_sample,
    stratified_triples,
    transversality_audit,
)
from anosovlab.entropy import (
    ahlfors_diagnostic,
    box_dimension,
    critical_exponent,
    ps_atoms,
    subspace_embedding,
)
from anosovlab.errors import (
    AnosovLabError,
    ComputationError,
    InvalidInput,
    RankAmbiguous,
)
from anosovlab.flags import bloch, theta_k
from anosovlab.groups import load_group
from anosovlab.matgrp import alpha
from anosovlab.suites import SUITES, run_suite, sample_elements
from anosovlab.wordball import anosov_diagnostic, enumerate_ball, format_word

EXPERIMENTS = ("anosov", "limit-set", "exponent", "boxdim", "ahlfors", "shadow", "hyperconvex")
REPORT_SCHEMA = 1
AHLFORS_BAND = 0.2


# ---------------------------------------------------------------- output


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _encode(obj, indent: int | None, level: int = 0) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become null."""
    nl = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = ", " if indent is None else ","
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return format(obj + 0.0, ".17g") if math.isfinite(obj) else "null"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{nl}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + sep.join(items) + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, None) for v in obj) + "]"
        items = [f"{nl}{_encode(v, indent, level + 1)}" for v in obj]
        return "[" + sep.join(items) + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int | None = 1) -> str:
    return _encode(_plain(obj), indent)


def _write(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _points_csv(bases, k: int) -> str:
    """Rows "re,im" of z = v_1 / v_0 for lines in C^2 ("inf,inf" at v_0 = 0); otherwise the
    normalized Pluecker (for lines: homogeneous) coordinates as re/im pairs."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    d = bases.shape[1]
    if d == 2 and k == 1:
        w.writerow(["re", "im"])
        v = bases[:, :, 0]
        for a, b in v:
            if a == 0:
                # the point at infinity of the chart
                w.writerow(["inf", "inf"])
                continue
            c = b / a
            w.writerow([format(float(np.real(c)) + 0.0, ".17g"), format(float(np.imag(c)) + 0.0, ".17g")])
        return buf.getvalue()
    from anosovlab.flags import plucker_vector

    coords = np.array([plucker_vector(b[:, :k]) for b in bases]) if k > 1 else bases[:, :, 0]
    # fix the phase by the largest coordinate of the first row, then normalize
    coords = coords / np.linalg.norm(coords, axis=1, keepdims=True)
    j = int(np.argmax(np.abs(coords[0])))
    ph = coords[:, j] / np.where(np.abs(coords[:, j]) > 0, np.abs(coords[:, j]), 1.0)
    coords = coords * np.conj(ph)[:, None]
    w.writerow([f"c{i}_{part}" for i in range(coords.shape[1]) for part in ("re", "im")])
    for row in coords:
        w.writerow([format(float(x) + 0.0, ".17g") for c in row for x in (c.real, c.imag)])
    return buf.getvalue()


# ---------------------------------------------------------------- context


class Context:
    """Shared state of one run: the group, parameters and cached results."""

    def __init__(self, gens, metadata, args):
        self.gens = gens
        self.metadata = metadata
        self.args = args
        self.k = args.k
        self.theta = tuple(args.theta) if args.theta else (args.k,)
        self.radius = args.radius
        self.seed = args.seed
        self.threads = args.threads
        self.tol = args.tol
        self._ball = None
        self._delta = None
        self._sample = None
        self.points = None

    @property
    def ball(self):
        if self._ball is None:
            self._ball = enumerate_ball(self.gens, self.radius, threads=self.threads)
        return self._ball

    @property
    def phi(self):
        return alpha(self.k)

    def delta(self) -> float:
        if self._delta is None:
            est = critical_exponent(self.ball, self.phi)
            self._delta = est["poincare_bisection"].value
        return self._delta

    def sample(self):
        if self._sample is None:
            n_min = max(1, self.radius // 2)
            self._sample = limit_set_sample(self.ball, self.theta, n_min=n_min)
        return self._sample


def exp_anosov(ctx: Context) -> dict:
    return {str(k): anosov_diagnostic(ctx.ball, k) for k in ctx.theta}


def exp_limit_set(ctx: Context) -> dict:
    s = ctx.sample()
    kw = {} if ctx.tol is None else {"trans_tol": ctx.tol}
    audit = transversality_audit(s, seed=ctx.seed, **kw)
    ctx.points = (s.bases, min(ctx.theta))
    return {"theta": list(s.theta), "annulus": list(s.annulus), "size": len(s),
            "skipped_degenerate": s.skipped, "transversality": audit}


def exp_exponent(ctx: Context) -> dict:
    est = critical_exponent(ctx.ball, ctx.phi)
    ctx._delta = est["poincare_bisection"].value
    return {"phi": str(ctx.phi), "delta": ctx._delta,
            **{name: {"value": e.value, "diagnostics": e.diagnostics} for name, e in est.items()}}


def exp_boxdim(ctx: Context) -> dict:
    k = min(ctx.theta)
    sphere = limit_set_sample(ctx.ball, (k,), n_min=ctx.radius)
    pts = subspace_embedding(sphere.bases, k)
    if ctx.points is None:
        ctx.points = (sphere.bases, k)
    out = box_dimension(pts)
    out["points"] = len(pts)
    out["sphere"] = ctx.radius
    return out


def exp_ahlfors(ctx: Context) -> dict:
    delta = ctx.delta()
    k = min(ctx.theta)
    mu = ps_atoms(ctx.ball, ctx.phi, delta, theta=(k,), shell=(max(1, ctx.radius - 1), ctx.radius))
    out = ahlfors_diagnostic(mu, delta=delta, n_sample=50, seed=ctx.seed)
    slopes = np.array(out["slopes"])
    ok = np.isfinite(slopes)
    out["atoms"] = len(mu)
    out["fraction_within_band"] = float(np.mean(np.abs(slopes[ok] - delta) <= AHLFORS_BAND)) if ok.any() else 0.0
    out["band_halfwidth"] = AHLFORS_BAND
    return out


def exp_shadow(ctx: Context, max_length: int = 8, rays: int = 8) -> dict:
    if ctx.gens.dim != 2 or ctx.gens.field != "C":
        raise InvalidInput("shadow requires Kleinian input")
    ball = ctx.ball
    delta = ctx.delta()
    n = ctx.radius
    mu = ps_atoms(ball, alpha(1), delta, shell=(max(1, n - 1), n))
    atoms = bloch(mu.bases[:, :, 0])
    dom = ConvexDomain.klein_ball()
    X = hyperboloid_orbit(ball.entries)
    alph = ball.values(alpha(1))
    rng = np.random.default_rng(ctx.seed)
    dirs = atoms[rng.choice(len(atoms), size=min(30, len(atoms)), replace=False)]
    outer = ball.sphere(n)
    depth = 0.6 * 2 * float(alph[outer].min())
    r0 = cocompactness_radius(dom, X, dirs, depth=depth)
    r = 2 * r0
    upto = ball.annulus(0, min(max_length, n))
    band = shadow_lemma_diagnostic(dom, X[upto], alph[upto], atoms, mu.weights, delta, r, r0)
    R = 1.1 * r0
    chains = []
    for a in dirs[:rays]:
        seq = geodesic_orbit_sequence(dom, X, a, R)
        chains.append({"length": len(seq["indices"]), "max_step": seq["max_step"],
                       "reached_depth": seq["reached_depth"],
                       "steps_below_2R": bool(seq["max_step"] < 2 * R)})
    return {"delta": delta, "cocompactness_radius": r0, "r": r, "max_length": min(max_length, n),
            "band": band, "R": R, "chains": chains,
            "chains_ok": all(c["steps_below_2R"] for c in chains)}


def exp_hyperconvex(ctx: Context, n_triples: int | None = None) -> dict:
    n_triples = getattr(ctx.args, "triples", 500) if n_triples is None else n_triples
    k = ctx.k
    d = ctx.gens.dim
    ball = ctx.ball
    sample = limit_set_sample(ball, theta_k(k, d), n_min=max(1, ctx.radius // 2))
    triples = stratified_triples(sample, n_triples, seed=ctx.seed)
    kw = {} if ctx.tol is None else {"rank_tol": ctx.tol}
    passed = failed = ambiguous = 0
    other: dict[str, int] = {}
    agree = disagree = 0
    failures = []
    for i, j, l in triples:
        x, y, z = sample.flag(i), sample.flag(j), sample.flag(l)
        try:
            res = hyperconvex_check(x, y, z, k, **kw)
        except RankAmbiguous:
            ambiguous += 1
            continue
        except AnosovLabError as exc:
            other[type(exc).__name__] = other.get(type(exc).__name__, 0) + 1
            continue
        if res["pass"]:
            passed += 1
        else:
            failed += 1
            if len(failures) < 20:
                failures.append([format_word(sample.words[t]) for t in (i, j, l)])
        if k == 1:
            try:
                direct = hyperconvex_direct_k1(x, y, z, **kw)
            except RankAmbiguous:
                continue
            if direct == res["pass"]:
                agree += 1
            else:
                disagree += 1
    out = {"k": k, "theta": list(theta_k(k, d)), "sample": len(sample), "triples": len(triples),
           "passed": passed, "failed": failed, "rank_ambiguous": ambiguous, "other_errors": other,
           "failures": failures, "pass": failed == 0 and ambiguous == 0 and not other}
    if k == 1:
        out["direct_k1"] = {"agree": agree, "disagree": disagree}
    return out


RUNNERS = {
    "anosov": exp_anosov,
    "limit-set": exp_limit_set,
    "exponent": exp_exponent,
    "boxdim": exp_boxdim,
    "ahlfors": exp_ahlfors,
    "shadow": exp_shadow,
    "hyperconvex": exp_hyperconvex,
}


def report(command: str, ctx: Context | None, args, results: dict, warnings: list[str]) -> dict:
    params = {key: val for key, val in sorted(vars(args).items())
              if key not in ("func", "command", "out", "emit_points", "seed", "threads")}
    return {"schema": REPORT_SCHEMA, "command": command, "parameters": params,
            "seed": args.seed, "version": __version__, "results": results, "warnings": warnings}


# ---------------------------------------------------------------- commands


def _load(args):
    gens, meta = load_group(args.group)
    return gens, meta


def cmd_ball(args) -> int:
    gens, _ = _load(args)
    ball = enumerate_ball(gens, args.radius, threads=args.threads)
    d = gens.dim
    words = ball.words()
    lines = []
    for i in range(len(ball)):
        A = ball.kappa[i]
        rec = {"word": format_word(words[i]), "length": int(ball.lengths[i]),
               "kappa": A, "alpha": {str(j): float(A[j - 1] - A[j]) for j in range(1, d)}}
        lines.append(dumps(rec, indent=None))
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_verify(args) -> int:
    gens, _ = _load(args)
    if args.suite == "all":
        # sym applies to 2x2 sources only; asked for explicitly it is an input error
        suites = tuple(s for s in SUITES if s != "sym" or gens.dim == 2)
    else:
        suites = (args.suite,)
    mats = sample_elements(gens, seed=args.seed)
    rows = []
    for name in suites:
        for row in run_suite(name, mats, seed=args.seed, scaled=True):
            if args.tol is not None:
                row["tol"] = args.tol
                row["pass"] = bool(row["worst"] < args.tol)
            rows.append({"suite": name, **row})
    ok = all(r["pass"] for r in rows)
    if args.out:
        rep = report("verify", None, args, {"rows": rows, "pass": ok}, [])
        _write(dumps(rep) + "\n", args.out)
    width = max(len(r["check"]) for r in rows)
    for r in rows:
        status = "PASS" if r["pass"] else "FAIL"
        print(f"{status}  {r['suite']:<8} {r['check']:<{width}}  worst={r['worst']:.3e}  tol={r['tol']:.1e}")
    if not ok:
        worst = max((r for r in rows if not r["pass"]),
                    key=lambda r: r["worst"] / r["tol"] if r["tol"] > 0 else np.inf)
        print(f"verification failed: worst residual {worst['worst']:.6e} in {worst['check']}",
              file=sys.stderr)
        return 1
    return 0


def _run_experiments(command: str, args, names) -> int:
    gens, meta = _load(args)
    ctx = Context(gens, meta, args)
    results, warnings = {}, []
    failures = 0
    codes = []
    for name in EXPERIMENTS:
        if name not in names:
            continue
        try:
            results[name] = RUNNERS[name](ctx)
            for w in results[name].get("warnings", []) if isinstance(results[name], dict) else []:
                warnings.append(f"{name}: {w}")
        except AnosovLabError as exc:
            failures += 1
            codes.append(2 if isinstance(exc, InvalidInput) else 3)
            results[name] = None
            warnings.append(f"{name}: {exc}")
            if command != "pipeline":
                raise
    rep = report(command, ctx, args, results, warnings)
    _write(dumps(rep) + "\n", args.out)
    if args.emit_points and ctx.points is not None:
        bases, k = ctx.points
        Path(args.emit_points).write_text(_points_csv(bases, k))
    if failures and failures == len([n for n in EXPERIMENTS if n in names]):
        return max(codes)
    return 0


def cmd_pipeline(args) -> int:
    names = [n.strip() for n in args.experiments.split(",") if n.strip()]
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        raise InvalidInput(f"unknown experiments {unknown}; choose from {list(EXPERIMENTS)}")
    return _run_experiments("pipeline", args, names)


def _single(name):
    def run(args) -> int:
        return _run_experiments(name, args, [name])
    return run


# ---------------------------------------------------------------- parser


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anosovlab", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"anosovlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("group", help="group file (JSON) or name of a bundled example")
    shared.add_argument("--k", type=int, default=1, help="root index k (default 1)")
    shared.add_argument("--theta", type=_int_list, default=None,
                        help="flag type as comma-separated indices (default: {k})")
    shared.add_argument("--radius", type=int, default=8, help="word-ball radius (default 8)")
    shared.add_argument("--tol", type=float, default=None, help="override the default tolerance")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--threads", type=int, default=1)
    shared.add_argument("--out", default=None, help="output path (default stdout)")
    shared.add_argument("--emit-points", default=None, metavar="CSV",
                        help="write the limit-set sample as CSV")

    b = sub.add_parser("ball", parents=[shared], help="enumerate the word ball as JSONL")
    b.set_defaults(func=cmd_ball)

    v = sub.add_parser("verify", parents=[shared], help="run an invariant suite")
    v.add_argument("--suite", choices=SUITES + ("all",), default="all")
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("pipeline", parents=[shared], help="run several experiments")
    pl.add_argument("--experiments", default=",".join(EXPERIMENTS),
                    help="comma-separated subset of " + ",".join(EXPERIMENTS))
    pl.add_argument("--triples", type=int, default=500)
    pl.set_defaults(func=cmd_pipeline)

    for name in ("limit-set", "exponent", "hyperconvex", "ahlfors", "boxdim", "shadow"):
        sp = sub.add_parser(name, parents=[shared], help=f"run the {name} experiment")
        if name == "hyperconvex":
            sp.add_argument("--triples", type=int, default=500)
        sp.set_defaults(func=_single(name))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except ComputationError as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
