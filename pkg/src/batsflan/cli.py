"""Command-line front end: ``bats-flan <command> [options]``.

Every command that writes ``--out PATH`` also writes ``PATH.manifest.json``
recording the command, inputs, seed, version, raised flags and wall time.
Vector outputs are CSV files whose first line is ``# schema: bats-flan/<kind>/v1``.

Exit codes: 0 success, 2 invalid input, 3 numerical degeneracy flagged,
4 cross-check or comparison outside tolerance.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bp import DEGENERATE, stopping_time
from .degree_opt import OptConfig, design_metrics, optimize_asymptotic, optimize_heuristic
from .inactivation import expected_inactivations_fixed, expected_inactivations_poisson
from .karp import karp_stopping_time
from .model import BatsModel, ModelError
from .poisson import DEFAULT_TOL, poisson_stopping_time
from .simulator import monte_carlo

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE, EXIT_TOLERANCE = 0, 2, 3, 4
SCHEMA = "bats-flan/{}/v1"
CROSSCHECK_TOL = 1e-8


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def write_csv(path, kind: str, header: list, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA.format(kind)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    """Returns (schema, header, rows as lists of strings)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# schema: "):
        raise ValueError(f"{path}: missing schema header")
    schema = lines[0][len("# schema: "):]
    reader = list(csv.reader(lines[1:]))
    return schema, reader[0], reader[1:]


def write_json(path, doc) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cdf_rows(pmf: np.ndarray):
    cdf = np.cumsum(pmf)
    return [(t, float(p), float(c)) for t, (p, c) in enumerate(zip(pmf, cdf))]


def _params(args) -> dict:
    skip = {"func", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_manifest(out, args, flags, wall: float) -> None:
    doc = {
        "command": args.command,
        "model": getattr(args, "model", None),
        "parameters": _params(args),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "flags": list(flags),
        "wall_time_s": round(wall, 6),
    }
    write_json(str(out) + ".manifest.json", doc)


def _load_model(args) -> BatsModel:
    if not args.model:
        raise CommandError("--model is required for this command")
    try:
        return BatsModel.load(args.model, renormalize=args.renormalize)
    except FileNotFoundError as exc:
        raise CommandError(f"model file not found: {args.model}") from exc


def _emit(doc: dict) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _status(flags) -> int:
    return EXIT_DEGENERATE if any(f.startswith(DEGENERATE) for f in flags) else EXIT_OK


# ---------------------------------------------------------------------------
# commands; each returns (exit code, flags)
# ---------------------------------------------------------------------------


def cmd_solvability(args):
    model = _load_model(args)
    s = model.solvability
    doc = {
        "hbar": s.hbar.tolist(), "hbar_prime": s.hbar_prime.tolist(),
        "capacity": model.capacity(), "flags": list(model.flags),
    }
    _emit(doc)
    if args.out:
        write_csv(args.out, "solvability", ["s", "hbar", "hbar_prime"],
                  [(i, float(a), float(b)) for i, (a, b) in enumerate(zip(s.hbar, s.hbar_prime))])
    return EXIT_OK, doc["flags"]


def _kprime(args, model):
    k = args.kprime if args.kprime is not None else model.K
    if not 1 <= k <= model.K:
        raise CommandError(f"--kprime must lie in 1..K={model.K}")
    return k


def cmd_bp(args):
    model = _load_model(args)
    if args.n is None or args.n < 0:
        raise CommandError("--n must be a non-negative integer")
    dist = stopping_time(model, args.n)
    k = _kprime(args, model)
    doc = {"p_error": dist.error_probability(k), "kprime": k, "mean_stop": dist.mean(), "flags": dist.flags}
    _emit(doc)
    if args.out:
        write_csv(args.out, "cdf", ["t", "pmf", "cdf"], cdf_rows(dist.pmf))
    return _status(dist.flags), dist.flags


def cmd_poisson(args):
    model = _load_model(args)
    if args.nbar is None or args.nbar < 0:
        raise CommandError("--nbar must be non-negative")
    dist = poisson_stopping_time(model, args.nbar, args.tol or DEFAULT_TOL)
    k = _kprime(args, model)
    doc = {"p_error": dist.error_probability(k), "kprime": k, "mean_stop": dist.mean(), "flags": dist.flags}
    _emit(doc)
    if args.out:
        write_csv(args.out, "cdf", ["t", "pmf", "cdf"], cdf_rows(dist.pmf))
    return _status(dist.flags), dist.flags


def cmd_inact(args):
    model = _load_model(args)
    if (args.n is None) == (args.nbar is None):
        raise CommandError("give exactly one of --n and --nbar")
    if args.n is not None:
        if args.n < 0:
            raise CommandError("--n must be non-negative")
        res = expected_inactivations_fixed(model, args.n)
    else:
        if args.nbar < 0:
            raise CommandError("--nbar must be non-negative")
        res = expected_inactivations_poisson(model, args.nbar, args.tol or DEFAULT_TOL)
    doc = {
        "expected_inactivations": res.expected,
        "per_step_inact_prob": res.per_step.tolist(),
        "flags": res.flags,
    }
    _emit(doc)
    if args.out:
        write_json(args.out, doc)
    return _status(res.flags), res.flags


def cmd_optimize(args):
    model = _load_model(args)
    try:
        cfg = OptConfig(eta=args.eta, grid_points=args.grid, c_heur=args.c or 0.0,
                        cp_heur=args.cprime or 0.0, D=args.D)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    if cfg.c_heur > 0:
        res = optimize_heuristic(model, cfg, args.K or model.K)
    else:
        res = optimize_asymptotic(model, cfg)
    doc = res.to_dict()
    doc["expected_rank"] = float(np.dot(np.arange(model.M + 1), model.hbar))
    doc["design_ratio"] = (1 - cfg.eta) * res.theta_hat / doc["expected_rank"]
    if args.out:
        write_json(args.out, doc)
    summary = {k: v for k, v in doc.items() if k != "psi"}
    summary["support"] = [int(d) + 1 for d in np.flatnonzero(res.psi.psi)]
    _emit(summary)
    flags = [] if res.feasible else ["optimizer result infeasible on the verification grid"]
    return (EXIT_OK if res.feasible else EXIT_TOLERANCE), flags


def _simulate(model, args, inactivation=True):
    if args.trials is None or args.trials < 1:
        raise CommandError("--trials must be at least 1")
    nbar = args.nbar
    n = args.n
    if getattr(args, "poisson", False):
        if n is None:
            raise CommandError("--poisson needs --n as the mean batch count")
        nbar, n = float(n), None
    if (n is None) == (nbar is None):
        raise CommandError("give exactly one of --n and --nbar")
    return monte_carlo(model, args.trials, seed=args.seed, n=n, nbar=nbar,
                       inactivation=inactivation, workers=args.threads)


def _mc_summary(mc) -> dict:
    lo, hi = mc.stop_cdf_band()
    doc = {
        "trials": mc.trials, "seed": mc.seed, "n": mc.n, "nbar": mc.nbar,
        "mean_stop": mc.mean_stop, "stop_cdf": mc.stop_cdf.tolist(),
        "stop_cdf_band": [lo.tolist(), hi.tolist()],
    }
    if mc.inact_hist is not None:
        se = mc.sem_inactivations
        doc.update({
            "mean_inactivations": mc.mean_inactivations,
            "sem_inactivations": se,
            "mean_inactivations_band": [mc.mean_inactivations - 3 * se, mc.mean_inactivations + 3 * se],
        })
    return doc


def cmd_simulate(args):
    model = _load_model(args)
    mc = _simulate(model, args, inactivation=args.inactivation)
    doc = _mc_summary(mc)
    _emit({k: v for k, v in doc.items() if k not in ("stop_cdf", "stop_cdf_band")})
    if args.out:
        inact = mc.inact_hist if mc.inact_hist is not None else np.zeros_like(mc.stop_hist)
        write_csv(args.out, "histogram", ["value", "stop_count", "inact_count"],
                  [(v, int(a), int(b)) for v, (a, b) in enumerate(zip(mc.stop_hist, inact))])
        write_json(str(args.out) + ".summary.json", doc)
    return EXIT_OK, []


def cmd_crosscheck(args):
    model = _load_model(args)
    if args.n is None:
        raise CommandError("--n is required")
    tol = args.tol or CROSSCHECK_TOL
    try:
        other = karp_stopping_time(model, args.n)
    except ValueError as exc:
        raise CommandError(str(exc)) from exc
    main = stopping_time(model, args.n)
    gap = float(np.max(np.abs(main.pmf - other.pmf)))
    doc = {"max_discrepancy": gap, "tol": tol, "pass": gap <= tol, "flags": main.flags}
    _emit(doc)
    if args.out:
        write_csv(args.out, "crosscheck", ["t", "pmf_ripple", "pmf_degree"],
                  [(t, float(a), float(b)) for t, (a, b) in enumerate(zip(main.pmf, other.pmf))])
    return (EXIT_OK if gap <= tol else EXIT_TOLERANCE), main.flags


def compare(model, n=None, nbar=None, trials=10_000, seed=0, tol=DEFAULT_TOL, workers=1, z=3.0) -> dict:
    """Analytic stopping CDF and expected inactivations against Monte Carlo."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if n is not None:
        dist = stopping_time(model, n)
        inact = expected_inactivations_fixed(model, n)
    else:
        dist = poisson_stopping_time(model, nbar, tol)
        inact = expected_inactivations_poisson(model, nbar, tol)
    mc = monte_carlo(model, trials, seed=seed, n=n, nbar=nbar, workers=workers)
    lo, hi = mc.stop_cdf_band(z)
    cdf = dist.cdf
    inside = (cdf >= lo - 1e-12) & (cdf <= hi + 1e-12)
    se = mc.sem_inactivations
    inact_ok = abs(inact.expected - mc.mean_inactivations) <= z * se + 1e-12
    return {
        "cdf": cdf, "empirical": mc.stop_cdf, "lower": lo, "upper": hi, "inside": inside,
        "cdf_pass": bool(inside.all()),
        "expected_inactivations": inact.expected,
        "mean_inactivations": mc.mean_inactivations, "sem_inactivations": se,
        "inact_pass": bool(inact_ok),
        "flags": list(dist.flags) + [f for f in inact.flags if f not in dist.flags],
    }


def cmd_compare(args):
    model = _load_model(args)
    if args.trials is None or args.trials < 1:
        raise CommandError("--trials must be at least 1")
    if (args.n is None) == (args.nbar is None):
        raise CommandError("give exactly one of --n and --nbar")
    rep = compare(model, n=args.n, nbar=args.nbar, trials=args.trials, seed=args.seed,
                  tol=args.tol or DEFAULT_TOL, workers=args.threads)
    ok = rep["cdf_pass"] and rep["inact_pass"]
    doc = {
        "pass": ok, "cdf_pass": rep["cdf_pass"], "inact_pass": rep["inact_pass"],
        "points_outside_band": [int(t) for t in np.flatnonzero(~rep["inside"])],
        "expected_inactivations": rep["expected_inactivations"],
        "mean_inactivations": rep["mean_inactivations"],
        "sem_inactivations": rep["sem_inactivations"],
        "trials": args.trials, "seed": args.seed, "flags": rep["flags"],
    }
    _emit(doc)
    if args.out:
        rows = [
            (t, float(a), float(e), float(l), float(u), int(i))
            for t, (a, e, l, u, i) in enumerate(zip(rep["cdf"], rep["empirical"], rep["lower"], rep["upper"], rep["inside"]))
        ]
        write_csv(args.out, "compare", ["t", "analytic_cdf", "empirical_cdf", "lower", "upper", "inside"], rows)
        write_json(str(args.out) + ".summary.json", doc)
    if not ok:
        return EXIT_TOLERANCE, rep["flags"]
    return _status(rep["flags"]), rep["flags"]


def _load_psi(spec, base: Path):
    if isinstance(spec, str):
        doc = json.loads((base / spec).read_text())
        return doc["psi"] if isinstance(doc, dict) else doc
    return spec


def run_tables(config: dict, out_dir, base: Path = Path("."), tol: float = DEFAULT_TOL) -> list:
    """Table-shaped CSVs for a model, a list of (K, n) cells and degree candidates.

    Config keys: ``model`` (path or inline document), ``eta``, optional
    ``capacity`` override, ``rows`` = [{"K": int, "n": [int, ...]}],
    optional ``candidates`` = {name: psi list or path to an optimize output},
    optional ``poisson`` = true to add the fixed-versus-Poisson comparison.
    Returns the list of written files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mdoc = config["model"]
    if isinstance(mdoc, str):
        base_model = BatsModel.load(base / mdoc, renormalize=True)
    else:
        base_model = BatsModel.from_dict(mdoc, renormalize=True)
    eta = float(config["eta"])
    cap = config.get("capacity")
    written = []
    rows = []
    for cell in config["rows"]:
        for n in cell["n"]:
            m = design_metrics(base_model, cell["K"], n, eta, capacity=cap)
            rows.append((cell["K"], n, m.rate, m.capacity, m.overhead))
    path = out_dir / "overhead.csv"
    write_csv(path, "overhead", ["K", "n", "rate", "capacity", "overhead"], rows)
    written.append(path)

    candidates = config.get("candidates", {})
    perf = []
    for name, spec in candidates.items():
        psi = _load_psi(spec, base)
        for cell in config["rows"]:
            K = cell["K"]
            model = base_model.with_degree(psi, K=K)
            kprime = math.ceil((1 - eta) * K)
            for n in cell["n"]:
                dist = stopping_time(model, n)
                inact = expected_inactivations_fixed(model, n)
                perf.append((name, K, n, "fixed", dist.error_probability(kprime), dist.error_probability(K), inact.expected))
                cdf_path = out_dir / f"cdf_{name}_K{K}_n{n}.csv"
                write_csv(cdf_path, "cdf", ["t", "pmf", "cdf"], cdf_rows(dist.pmf))
                written.append(cdf_path)
                if config.get("poisson"):
                    pd = poisson_stopping_time(model, float(n), tol)
                    pi = expected_inactivations_poisson(model, float(n), tol)
                    perf.append((name, K, n, "poisson", pd.error_probability(kprime), pd.error_probability(K), pi.expected))
                    cdf_path = out_dir / f"cdf_{name}_K{K}_nbar{n}.csv"
                    write_csv(cdf_path, "cdf", ["t", "pmf", "cdf"], cdf_rows(pd.pmf))
                    written.append(cdf_path)
    if perf:
        path = out_dir / "performance.csv"
        write_csv(path, "performance",
                  ["candidate", "K", "n", "batches", "p_error_kprime", "p_error_full", "expected_inactivations"], perf)
        written.append(path)
    return written


def cmd_tables(args):
    if not args.config:
        raise CommandError("--config is required")
    if not args.out:
        raise CommandError("--out (a directory) is required")
    cfg_path = Path(args.config)
    try:
        config = json.loads(cfg_path.read_text())
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise CommandError(f"cannot read config: {exc}") from exc
    for key in ("model", "eta", "rows"):
        if key not in config:
            raise CommandError(f"config: missing {key}")
    written = run_tables(config, args.out, cfg_path.parent, args.tol or DEFAULT_TOL)
    _emit({"written": [str(p) for p in written]})
    return EXIT_OK, []


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="model JSON document")
    common.add_argument("--out", help="output path")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=None, help="numerical tolerance (command specific default)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for Monte Carlo")
    common.add_argument("--renormalize", action="store_true", help="renormalize probability vectors on load")

    p = argparse.ArgumentParser(prog="bats-flan", description="Finite-length analysis of BATS codes.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solvability", parents=[common], help="solvability vectors and capacity")
    s.set_defaults(func=cmd_solvability)

    s = sub.add_parser("bp", parents=[common], help="BP stopping time, fixed batch count")
    s.add_argument("--n", type=int)
    s.add_argument("--kprime", type=int)
    s.set_defaults(func=cmd_bp)

    s = sub.add_parser("poisson", parents=[common], help="BP stopping time, Poisson batch count")
    s.add_argument("--nbar", type=float)
    s.add_argument("--kprime", type=int)
    s.set_defaults(func=cmd_poisson)

    s = sub.add_parser("inact", parents=[common], help="expected number of inactivations")
    s.add_argument("--n", type=int)
    s.add_argument("--nbar", type=float)
    s.set_defaults(func=cmd_inact)

    s = sub.add_parser("optimize", parents=[common], help="degree distribution LP")
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--c", type=float)
    s.add_argument("--cprime", type=float)
    s.add_argument("--K", type=int)
    s.add_argument("--D", type=int)
    s.add_argument("--grid", type=int, default=512)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo encoder and decoders")
    s.add_argument("--n", type=int)
    s.add_argument("--nbar", type=float)
    s.add_argument("--trials", type=int, default=10_000)
    s.add_argument("--inactivation", action="store_true")
    s.add_argument("--poisson", action="store_true", help="treat --n as the Poisson mean")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("crosscheck", parents=[common], help="degree-tracking recursion versus the main one")
    s.add_argument("--n", type=int)
    s.set_defaults(func=cmd_crosscheck)

    s = sub.add_parser("compare", parents=[common], help="analysis versus Monte Carlo")
    s.add_argument("--n", type=int)
    s.add_argument("--nbar", type=float)
    s.add_argument("--trials", type=int, default=10_000)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("tables", parents=[common], help="table-shaped CSV bundle")
    s.add_argument("--config", help="tables config JSON")
    s.set_defaults(func=cmd_tables)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    start = time.perf_counter()
    try:
        code, flags = args.func(args)
    except ModelError as exc:
        print(json.dumps({"error": exc.message, "path": exc.path}), file=sys.stderr)
        return EXIT_INVALID
    except CommandError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return exc.code
    if args.out:
        write_manifest(args.out, args, flags, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
