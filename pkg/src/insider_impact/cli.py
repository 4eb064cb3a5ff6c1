"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 verification failure.
Any option can also be set through an environment variable named
INSIDER_IMPACT_<OPTION>, e.g. INSIDER_IMPACT_SEED=7; explicit flags win.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import equilibria as eqm
from . import mc_lab
from . import multiasset as ma
from . import welfare
from .equilibria import EquilibriumKind
from .model_core import MarketParams, ParameterError, SolverError

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
ENV_PREFIX = "INSIDER_IMPACT_"
PARAM_FLAGS = ("alpha_i", "alpha_u", "p_i", "p_n", "pi", "kappa", "lam")

FIG2 = {"alpha_I": 0.3, "alpha_U": 0.3, "p_N": 1.0, "Pi": 0.0, "mu_X": 0.5, "prec_X": 1.0}
FIG3_ALPHA_I = (0.2, 0.1, 0.05)


class UsageError(Exception):
    pass


class VerificationFailed(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def grid(lo: float, hi: float, count: int, scale: str = "linear") -> np.ndarray:
    if count < 2:
        raise ParameterError("count", f"must be >= 2, got {count}")
    if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
        raise ParameterError("grid", f"need finite min < max, got [{lo}, {hi}]")
    if scale == "log":
        if lo <= 0.0:
            raise ParameterError("grid", "log grid needs min > 0")
        return np.geomspace(lo, hi, count)
    if scale != "linear":
        raise ParameterError("scale", f"expected linear or log, got {scale!r}")
    return np.linspace(lo, hi, count)


# ---------------------------------------------------------------- inputs


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParameterError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParameterError("config", f"invalid JSON in {path}: {exc.msg}") from None


_CONFIG_KEYS = {"alpha_I": "alpha_I", "alpha_U": "alpha_U", "p_I": "p_I", "p_N": "p_N", "Pi": "Pi"}


def _inline_given(args) -> bool:
    return any(getattr(args, f, None) is not None for f in PARAM_FLAGS)


def load_model(args, need_p_I: bool = True):
    """MarketParams from inline flags, or MarketParams/AssetModel from --config."""
    if getattr(args, "config", None):
        if _inline_given(args):
            raise UsageError("give parameters either inline or through --config, not both")
        doc = _load_config(args.config)
        if "prec_X" in doc:
            return ma.AssetModel.from_dict(doc)
        missing = [k for k in _CONFIG_KEYS if k not in doc and k != "Pi"]
        if missing:
            raise ParameterError(missing[0], "missing from config")
        return MarketParams(doc["alpha_I"], doc["alpha_U"], doc["p_I"], doc["p_N"], doc.get("Pi", 0.0))
    if args.kappa is not None or args.lam is not None:
        if args.kappa is None or args.lam is None:
            raise UsageError("--kappa and --lambda go together")
        if any(getattr(args, f) is not None for f in ("alpha_i", "alpha_u", "p_n")):
            raise UsageError("--kappa/--lambda replace --alpha-i, --alpha-u and --p-n")
        if not 0.0 < args.lam < 1.0:
            raise ParameterError("lambda", f"must lie in (0, 1), got {args.lam}")
        # unit insider tolerance reproduces any (kappa, lambda)
        a_U = (1.0 - args.lam) / args.lam
        p_I = 1.0 if args.p_i is None else args.p_i
        return MarketParams(1.0, a_U, p_I, args.kappa, args.pi or 0.0)
    for flag in ("alpha_i", "alpha_u", "p_n") + (("p_i",) if need_p_I else ()):
        if getattr(args, flag) is None:
            raise UsageError(f"missing --{flag.replace('_', '-')} (or use --config)")
    p_I = 1.0 if args.p_i is None else args.p_i
    return MarketParams(args.alpha_i, args.alpha_u, p_I, args.p_n, args.pi or 0.0)


# ---------------------------------------------------------------- commands


def _kinds(text: str) -> list[EquilibriumKind]:
    if text.lower() == "all":
        return list(EquilibriumKind)
    return [EquilibriumKind.parse(text)]


def cmd_solve(args) -> str:
    model = load_model(args)
    kinds = _kinds(args.kind)
    multi = isinstance(model, ma.AssetModel)
    p_I = model.p_I
    for k in kinds:
        if k.has_signal and p_I <= 0.0:
            raise ParameterError("p_I", f"must be > 0 for kind {k.value.lower()}; use --kind ns-{k.value.lower()}")
    blocks = []
    for k in kinds:
        eq = ma.solve_multi(model, k) if multi else eqm.solve(model, k)
        doc = eq.to_dict()
        if multi and k is EquilibriumKind.PI:
            doc["clearing_residual"] = ma.clearing_matrix_residual(eq)
        blocks.append(doc)
    out = {"equilibria": blocks}
    if p_I > 0.0:
        rep = ma.ce_ex_ante_multi(model) if multi else welfare.ce_ex_ante(model)
        out["ce"] = rep.to_dict()
    if args.format == "json":
        return json.dumps(out, indent=2) + "\n"
    rows = []

    def flatten(prefix, v):
        if isinstance(v, dict):
            for key, val in v.items():
                flatten(f"{prefix}.{key}" if prefix else key, val)
        elif isinstance(v, (list, tuple)):
            for i, val in enumerate(v):
                flatten(f"{prefix}[{i}]", val)
        elif v is not None:
            rows.append([prefix, v if isinstance(v, str) else float(v)])

    for b in blocks:
        flatten(b["kind"], {k: v for k, v in b.items() if k != "kind"})
    if "ce" in out:
        flatten("ce", out["ce"])
    return _csv(["key", "value"], rows)


def cmd_sweep(args) -> str:
    base = load_model(args, need_p_I=False)
    if isinstance(base, ma.AssetModel):
        raise UsageError("sweep takes scalar parameters")
    g = grid(args.p_i_min, args.p_i_max, args.count, args.scale)
    rows = welfare.precision_sweep(base, g)
    if args.format == "json":
        return "".join(json.dumps(r.__dict__) + "\n" for r in rows)
    return welfare.sweep_csv(rows)


def cmd_region(args) -> str:
    if args.alpha_i is None:
        raise UsageError("missing --alpha-i")
    a_grid = grid(args.alpha_u_min, args.alpha_u_max, args.alpha_u_count, args.scale)
    p_grid = grid(args.p_i_min, args.p_i_max, args.p_i_count, args.scale)
    pts = welfare.classify_region(args.alpha_i, args.p_n, a_grid, p_grid)
    if args.format == "json":
        return "".join(json.dumps(p.__dict__) + "\n" for p in pts)
    return welfare.region_csv(pts)


def figure1_presets(p_I_grid=None) -> list[dict]:
    """Scan (kappa, lambda) for PT insider CE curves of the two shapes.

    Returns the first preset found for a monotone-decreasing curve and for a
    curve with an interior maximum, scanning lambda then kappa in grid order.
    """
    p_grid = np.geomspace(1e-3, 10.0, 200) if p_I_grid is None else p_I_grid
    found = {}
    for lam in (0.5, 0.6, 0.7, 0.8, 0.9):
        for kappa in np.geomspace(1e-3, 10.0, 41):
            phi = np.array([welfare.phi_maps(p, kappa, lam)[1] for p in p_grid])
            step = np.diff(phi)
            if np.all(step < 0):
                shape = "decreasing"
            elif step[0] > 0 and step[-1] < 0:
                shape = "interior_max"
            else:
                continue
            if shape not in found:
                found[shape] = {"kappa": float(kappa), "lambda": lam, "shape": shape}
        if len(found) == 2:
            break
    return [found[s] for s in ("decreasing", "interior_max") if s in found]


def figure_rows(which: int, args=None):
    if which == 1:
        p_grid = np.geomspace(1e-3, 10.0, 200)
        rows = []
        for i, pre in enumerate(figure1_presets(p_grid)):
            params = MarketParams(1.0, (1.0 - pre["lambda"]) / pre["lambda"], 1.0, pre["kappa"])
            for r in welfare.precision_sweep(params, p_grid):
                rows.append([f"preset{i + 1}", pre["kappa"], pre["lambda"], pre["shape"], r.p_I, r.ce_I_pt])
        return ["preset", "kappa", "lambda", "shape", "p_I", "ce_I_pt"], rows
    if which == 2:
        count = 200 if args is None else args.count
        p_grid = np.linspace(10.0 / count, 10.0, count)
        rows = []
        for p in p_grid:
            model = ma.AssetModel(
                [FIG2["mu_X"]], [[FIG2["prec_X"]]], float(p), FIG2["p_N"],
                FIG2["alpha_I"], FIG2["alpha_U"], [FIG2["Pi"]],
            )
            rep = ma.ce_ex_ante_multi(model)
            rows.append([p, rep.ce_I_pi, rep.ce_I_pt])
        return ["p_I", "ce_I_pi", "ce_I_pt"], rows
    if which == 3:
        n_a = 40 if args is None else args.alpha_u_count
        n_p = 40 if args is None else args.p_i_count
        a_max = 2.0 if args is None else args.alpha_u_max
        p_max = 4.0 if args is None else args.p_i_max
        a_grid = np.linspace(a_max / n_a, a_max, n_a)
        p_grid = np.linspace(p_max / n_p, p_max, n_p)
        rows = []
        for a_I in FIG3_ALPHA_I:
            for pt in welfare.classify_region(a_I, 1.0, a_grid, p_grid):
                rows.append([a_I, pt.alpha_U, pt.p_I, pt.sign])
        return ["alpha_I", "alpha_U", "p_I", "sign"], rows
    raise ParameterError("which", f"expected 1, 2 or 3, got {which}")


def cmd_figure(args) -> str:
    header, rows = figure_rows(args.which, args)
    if args.format == "json":
        return "".join(json.dumps(dict(zip(header, r))) + "\n" for r in rows)
    return _csv(header, rows)


def cmd_mc(args) -> str:
    model = load_model(args)
    if model.p_I <= 0.0:
        raise ParameterError("p_I", "the MC suite needs p_I > 0")
    rows = mc_lab.run_suite(model, args.n_paths, args.seed, z_limit=args.z_limit, corrupt=args.corrupt)
    text = "".join(json.dumps(_jsonable(r)) + "\n" for r in rows)
    failed = [r["name"] for r in rows if not r["passed"]]
    if failed:
        raise VerificationFailed(text, failed)
    return text


def _jsonable(row: dict) -> dict:
    return {k: (float(v) if isinstance(v, (np.floating, np.integer)) else v) for k, v in row.items()}


# ---------------------------------------------------------------- parser


def _env(name: str, default=None, cast=str):
    raw = os.environ.get(ENV_PREFIX + name.upper())
    if raw is None:
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ParameterError(name, f"bad value {raw!r} in {ENV_PREFIX + name.upper()}") from None


def _seed(text) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _add_common(p, with_seed=False):
    p.add_argument("--config", default=_env("config"), help="JSON file with parameters or an asset model")
    p.add_argument("--out", default=_env("out"), help="output path (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=_env("format", p.get_default("format")))
    if with_seed:
        p.add_argument("--seed", type=_seed, default=_env("seed", 42, _seed))


def _add_params(p):
    p.add_argument("--alpha-i", dest="alpha_i", type=float, default=_env("alpha_i", None, float))
    p.add_argument("--alpha-u", dest="alpha_u", type=float, default=_env("alpha_u", None, float))
    p.add_argument("--p-i", dest="p_i", type=float, default=_env("p_i", None, float))
    p.add_argument("--p-n", dest="p_n", type=float, default=_env("p_n", None, float))
    p.add_argument("--pi", dest="pi", type=float, default=_env("pi", None, float), help="outstanding supply")
    p.add_argument("--kappa", type=float, default=None, help="with --lambda: alpha_I = 1, p_N = kappa")
    p.add_argument("--lambda", dest="lam", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="insider-impact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve equilibria and ex-ante CEs")
    p.set_defaults(format="json")
    _add_common(p)
    _add_params(p)
    p.add_argument("--kind", default=_env("kind", "all"), help="pi, pt, ns-pi, ns-pt or all")

    p = sub.add_parser("sweep", help="insider CEs over a p_I grid")
    p.set_defaults(format="csv")
    _add_common(p)
    _add_params(p)
    p.add_argument("--p-i-min", type=float, default=_env("p_i_min", 1e-2, float))
    p.add_argument("--p-i-max", type=float, default=_env("p_i_max", 1e2, float))
    p.add_argument("--count", type=int, default=_env("count", 50, int))
    p.add_argument("--scale", choices=("linear", "log"), default=_env("scale", "log"))

    p = sub.add_parser("region", help="sign of the insider CE gain from internalizing impact")
    p.set_defaults(format="csv")
    _add_common(p)
    p.add_argument("--alpha-i", dest="alpha_i", type=float, default=_env("alpha_i", None, float))
    p.add_argument("--p-n", dest="p_n", type=float, default=_env("p_n", 1.0, float))
    p.add_argument("--alpha-u-min", type=float, default=_env("alpha_u_min", 0.05, float))
    p.add_argument("--alpha-u-max", type=float, default=_env("alpha_u_max", 2.0, float))
    p.add_argument("--alpha-u-count", type=int, default=_env("alpha_u_count", 40, int))
    p.add_argument("--p-i-min", type=float, default=_env("p_i_min", 0.1, float))
    p.add_argument("--p-i-max", type=float, default=_env("p_i_max", 4.0, float))
    p.add_argument("--p-i-count", type=int, default=_env("p_i_count", 40, int))
    p.add_argument("--scale", choices=("linear", "log"), default=_env("scale", "linear"))

    p = sub.add_parser("mc", help="Monte Carlo verification suite (JSON lines)")
    p.set_defaults(format="json")
    _add_common(p, with_seed=True)
    _add_params(p)
    p.add_argument("--n-paths", type=int, default=_env("n_paths", 1_000_000, int))
    p.add_argument("--z-limit", type=float, default=_env("z_limit", 4.0, float))
    p.add_argument("--corrupt", action="store_true", help="perturb the uninformed response (negative control)")

    p = sub.add_parser("figure", help="datasets behind the figures")
    p.set_defaults(format="csv")
    _add_common(p)
    p.add_argument("which", type=int, choices=(1, 2, 3))
    p.add_argument("--count", type=int, default=_env("count", 200, int), help="p_I points (figure 2)")
    p.add_argument("--alpha-u-max", type=float, default=_env("alpha_u_max", 2.0, float))
    p.add_argument("--alpha-u-count", type=int, default=_env("alpha_u_count", 40, int))
    p.add_argument("--p-i-max", type=float, default=_env("p_i_max", 4.0, float))
    p.add_argument("--p-i-count", type=int, default=_env("p_i_count", 40, int))
    return parser


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "region": cmd_region, "mc": cmd_mc, "figure": cmd_figure}


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    try:
        parser = build_parser()
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _emit(COMMANDS[args.command](args), args.out)
    except (ParameterError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, ArithmeticError) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except VerificationFailed as exc:
        text, failed = exc.args
        _emit(text, args.out)
        print("verification failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
