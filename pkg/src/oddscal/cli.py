"""Command-line front end.

Exit codes: 0 success, 2 input errors, 3 estimation errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import secrets
import sys
import warnings
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .bspline import BSplineBasis, KnotVector, basis_matrix, make_basis
from .calibration import Strategy
from .design import SRSWOR
from .errors import OddsCalError
from .oddsratio import asymptotic_variance_comparison
from .pipeline import AnalysisConfig, SurveyDataset, run
from .simulate import builtin_spec, run_spec

EXIT_INPUT = 2
EXIT_ESTIMATION = 3


class InputError(Exception):
    """Malformed or inconsistent input files and flags."""


def load_schema(name: str) -> dict:
    text = resources.files("oddscal").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


# --------------------------------------------------------------------------
# input parsing


def read_table(path, required=(), optional=()) -> dict[str, np.ndarray]:
    """Read a comma-separated file with a header row into float columns.

    Only the ``required`` and ``optional`` columns are kept; missing required
    columns, empty cells and non-numeric values raise :class:`InputError`
    naming the offending line.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: line 1: missing required column(s) {', '.join(missing)}")
        wanted = [c for c in dict.fromkeys((*required, *optional)) if c in header]
        pos = {c: header.index(c) for c in wanted}
        cols: dict[str, list[float]] = {c: [] for c in wanted}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            for c in wanted:
                cell = row[pos[c]].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(f"{path}: line {lineno}: column {c!r}: {cell!r} is not a number") from None
                if not math.isfinite(v):
                    raise InputError(f"{path}: line {lineno}: column {c!r}: non-finite value")
                cols[c].append(v)
    out = {c: np.array(v) for c, v in cols.items()}
    if not out or next(iter(out.values())).size == 0:
        raise InputError(f"{path}: no data rows")
    return out


def read_totals(path) -> tuple[np.ndarray, int]:
    """Two-line totals file: basis totals on line 1, population size on line 2."""
    try:
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    if len(lines) != 2:
        raise InputError(f"{path}: expected 2 non-empty lines (basis totals, N), got {len(lines)}")
    try:
        t_b = np.array([float(v) for v in lines[0].split(",")])
    except ValueError:
        raise InputError(f"{path}: line 1: basis totals must be comma-separated numbers") from None
    try:
        N = int(float(lines[1]))
    except ValueError:
        raise InputError(f"{path}: line 2: {lines[1]!r} is not a population size") from None
    return t_b, N


def parse_int_list(text: str) -> list[int]:
    """``"15"``, ``"5,10,15"`` or an inclusive range ``"5..50"``."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer list {text!r}") from None


def parse_knot_vector(text: str, m: int) -> KnotVector:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise InputError(f"--knot-vector: {text!r} is not a comma-separated list") from None
    if len(vals) < 2:
        raise InputError("--knot-vector needs at least the two boundary knots")
    try:
        return KnotVector(tuple(vals[1:-1]), vals[0], vals[-1], m)
    except ValueError as exc:
        raise InputError(f"--knot-vector: {exc}") from None


# --------------------------------------------------------------------------
# output


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def emit(payload: dict, output: str | None):
    text = json.dumps(_clean(payload), indent=2, allow_nan=False)
    if output:
        Path(output).write_text(text + "\n")
    else:
        print(text)


def dump_basis(basis: BSplineBasis, path: str, points: int = 201):
    kv = basis.knots
    grid = np.linspace(kv.boundary_low, kv.boundary_high, points)
    B = basis_matrix(basis, grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z", *[f"B{j + 1}" for j in range(basis.q)]])
        for zi, row in zip(grid, B):
            w.writerow([repr(float(zi)), *(repr(float(v)) for v in row)])


# --------------------------------------------------------------------------
# subcommands


def cmd_estimate(args) -> int:
    strategies = tuple(args.strategy) if args.strategy else (Strategy.HT, Strategy.GREG, Strategy.BSPLINE)
    needs_z = any(s is not Strategy.HT for s in strategies)
    data = read_table(args.data, required=("y", "x", *(("z",) if needs_z else ())), optional=("z", "pi"))
    if not np.all((data["y"] == 0) | (data["y"] == 1)):
        bad = int(np.argmax((data["y"] != 0) & (data["y"] != 1))) + 2
        raise InputError(f"{args.data}: line {bad}: y must be 0 or 1")
    n = data["y"].size

    frame_z = knots = t_b = None
    N = args.pop_size
    if args.frame:
        frame_z = read_table(args.frame, required=("z",))["z"]
        if N is not None and N != frame_z.size:
            raise InputError(f"--pop-size {N} disagrees with {frame_z.size} frame rows")
        N = frame_z.size
    elif args.totals:
        t_b, N_tot = read_totals(args.totals)
        if N is not None and N != N_tot:
            raise InputError(f"--pop-size {N} disagrees with N={N_tot} in {args.totals}")
        N = N_tot
        if args.knot_vector is None:
            raise InputError("--totals needs --knot-vector (low,k1,...,kK,high) matching the totals")
        knots = parse_knot_vector(args.knot_vector, args.degree)
        if knots.q != t_b.size:
            raise InputError(f"{args.totals}: {t_b.size} totals for a basis of size {knots.q}")
    pi = data.get("pi")
    if N is None and pi is not None:
        N = int(round(n / pi[0]))
    if N is None:
        raise InputError("population size unknown: give --frame, --totals, --pop-size or a pi column")
    if N < n:
        raise InputError(f"population size {N} is smaller than the sample size {n}")
    design = SRSWOR(N, n)
    if pi is not None and not np.allclose(pi, design.pi, rtol=1e-9, atol=0):
        raise InputError(f"{args.data}: pi column is inconsistent with SRSWOR n/N = {design.pi:.6g}")
    if needs_z and frame_z is None and t_b is None:
        raise InputError("calibrated strategies need --frame or --totals")

    config = AnalysisConfig(K=args.knots, m=args.degree, alpha=args.alpha, strategies=strategies)
    dataset = SurveyDataset(
        y=data["y"], x=data["x"], z=data.get("z"), pi=pi, frame_z=frame_z, N=N,
        knots=knots, basis_totals=t_b,
    )
    report = run(dataset, design, config)
    payload = report.to_dict()
    payload["design"] = {"kind": design.kind, "N": design.N, "n": design.n}
    emit(payload, args.output)
    if args.dump_basis and report.basis is not None:
        dump_basis(report.basis, args.dump_basis)
    if report.failed:
        for r in report.failed:
            print(f"error: {r.strategy.value} failed at {r.error}", file=sys.stderr)
        return EXIT_ESTIMATION
    return 0


def load_sim_spec(args) -> dict:
    if args.builtin and args.spec:
        raise InputError("give either a spec file or --builtin, not both")
    if args.builtin:
        try:
            spec = builtin_spec(args.builtin)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    elif args.spec:
        try:
            spec = json.loads(Path(args.spec).read_text())
        except OSError as exc:
            raise InputError(f"{args.spec}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.spec}: line {exc.lineno}: {exc.msg}") from None
    else:
        raise InputError("simulate needs a spec file or --builtin NAME")
    if args.R is not None:
        spec["R"] = args.R
    if args.seed is not None:
        spec["seed"] = args.seed
    try:
        jsonschema.validate(spec, load_schema("simulate_spec"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"spec: {where}: {exc.message}") from None
    if spec["n"] > spec["N"]:
        raise InputError("spec: n exceeds N")
    return spec


def cmd_simulate(args) -> int:
    spec = load_sim_spec(args)
    if "seed" not in spec:
        spec["seed"] = secrets.randbelow(2**31)
        print(f"seed: {spec['seed']}", file=sys.stderr)
    try:
        result = run_spec(spec)
    except ValueError as exc:
        raise InputError(f"spec: {exc}") from None
    payload = {"spec": spec.get("name", "custom"), "N": spec["N"], "n": spec["n"],
               "K": spec.get("K", 15), "m": spec.get("m", 3), **result.to_dict()}
    emit(payload, args.output)
    return 0


def cmd_compare(args) -> int:
    pop = read_table(args.population, required=("y", "x", "z"))
    y, x, z = pop["y"], pop["x"], pop["z"]
    if not np.all((y == 0) | (y == 1)):
        raise InputError(f"{args.population}: y must be 0 or 1")
    N = y.size
    if args.shuffle_z:
        seed = args.seed if args.seed is not None else secrets.randbelow(2**31)
        if args.seed is None:
            print(f"seed: {seed}", file=sys.stderr)
        z = np.random.default_rng(seed).permutation(z)
    n = args.sample_size or max(2, N // 20)
    if not 2 <= n <= N:
        raise InputError(f"--sample-size must lie in [2, {N}]")
    design = SRSWOR(N, n)
    rows = []
    for K in args.knots:
        for m in args.degree:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                table = asymptotic_variance_comparison(y, x, z, design, K, m)
            row = table.to_dict()
            row["K_requested"] = K
            rows.append(row)
    gains = [r["gain"]["BSpline"] for r in rows]
    payload = {
        "N": N,
        "n": n,
        "rows": rows,
        "bspline_gain_range": [min(gains), max(gains)],
    }
    emit(payload, args.output)
    if args.dump_basis:
        dump_basis(make_basis(z, args.knots[0], args.degree[0]), args.dump_basis)
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oddscal", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", help="estimate the odds ratio from a survey sample")
    e.add_argument("data", help="sample CSV with columns y, x, z and optionally pi")
    aux = e.add_mutually_exclusive_group()
    aux.add_argument("--frame", help="population CSV with a z column")
    aux.add_argument("--totals", help="two-line file: basis totals, then N")
    e.add_argument("--knot-vector", help="low,k1,...,kK,high matching --totals")
    e.add_argument("--knots", type=int, default=15, help="interior knots K (default 15)")
    e.add_argument("--degree", type=int, default=3, help="spline order m (default 3)")
    e.add_argument("--alpha", type=float, default=0.05, help="1 - confidence level (default 0.05)")
    e.add_argument("--strategy", action="append", type=Strategy.parse,
                   help="HT, LinearGREG or BSpline; repeatable (default all)")
    e.add_argument("--design", choices=["srswor"], default="srswor")
    e.add_argument("--pop-size", type=int, help="population size N")
    e.add_argument("--output", help="write JSON here instead of stdout")
    e.add_argument("--dump-basis", metavar="CSV", help="write basis values on a grid for plotting")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("simulate", help="Monte Carlo check of the estimators")
    s.add_argument("spec", nargs="?", help="JSON simulation spec")
    s.add_argument("--builtin", help="built-in spec name: labor-like or chis-like")
    s.add_argument("--R", type=int, help="override the replicate count")
    s.add_argument("--seed", type=int, help="override the seed")
    s.add_argument("--output")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="asymptotic variance gains on a full population")
    c.add_argument("population", help="population CSV with columns y, x, z")
    c.add_argument("--knots", type=parse_int_list, default=[15], help="K, list a,b,c or range a..b")
    c.add_argument("--degree", type=parse_int_list, default=[3], help="m, list or range")
    c.add_argument("--sample-size", type=int, help="SRSWOR sample size (default N/20)")
    c.add_argument("--design", choices=["srswor"], default="srswor")
    c.add_argument("--shuffle-z", action="store_true", help="permute z to break its link with (x, y)")
    c.add_argument("--seed", type=int)
    c.add_argument("--output")
    c.add_argument("--dump-basis", metavar="CSV")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "alpha", 0.5) is not None and not 0 < getattr(args, "alpha", 0.5) < 1:
        parser.error("--alpha must lie in (0, 1)")
    for flag in ("knots", "degree"):
        v = getattr(args, flag, None)
        vals = v if isinstance(v, list) else [v] if v is not None else []
        if any(k < (1 if flag == "degree" else 0) for k in vals):
            parser.error(f"--{flag} out of range")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OddsCalError as exc:
        print(f"estimation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
