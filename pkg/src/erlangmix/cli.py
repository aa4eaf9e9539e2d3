"""Command-line entry point: ``erlangmix {approximate,truncate,error,rate-study,verify}``.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 computation failure.
Settings resolve as command-line flag, then ``--config`` JSON file, then default.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as eio
from .checks import check_mixture, run_checks
from .densities import DensitySpec, certified_seminorm, zoo_density, ZOO
from .metrics import (
    REPORT_COLUMNS,
    ErrorReport,
    NormSpec,
    bound_compact_holder,
    bound_weighted_holder,
    error_norm_detail,
    report_constants,
)
from .operator import (
    CellMassTable,
    EnumerationCapError,
    ErlangMixture,
    InvariantError,
    SupportPolicy,
    ThresholdPolicy,
    build_mixture,
)
from .quadrature import QuadratureError
from .ratelab import RateStudyConfig, run_study
from .truncation import TruncationPlan, truncate

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_COMPUTE = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _density_args(p):
    p.add_argument("--density", choices=sorted(ZOO), help="zoo density identifier")
    p.add_argument("--d", type=int, help="dimension")
    p.add_argument("--M", type=float, help="support side (uniform_box) or compact side")
    p.add_argument("--rates", type=float, nargs="+", help="product_exponential rates")
    p.add_argument("--shapes", type=int, nargs="+", help="product_gamma_integer shapes")
    p.add_argument("--rate", type=float, help="product_gamma_integer rate")
    p.add_argument("--alpha", type=float, help="holder_bump exponent / target regularity")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="extra density parameter (JSON value)")


def _common(p):
    p.add_argument("--config", type=Path, help="JSON file with default settings")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, help="worker cap")
    p.add_argument("--out", help="output path (relative paths honour $ERLANGMIX_OUTPUT_DIR)")
    p.add_argument("--verbosity", type=int, choices=[0, 1, 2],
                   help="0 silent, 1 summary (default), 2 adds timings")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="erlangmix", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("approximate", help="build the Erlang mixture K_n f")
    _density_args(a)
    _common(a)
    a.add_argument("--n", type=int, help="scale index")
    a.add_argument("--policy", choices=["auto", "support", "threshold"])
    a.add_argument("--residual-tol", type=float, dest="residual_tol")
    a.add_argument("--max-cells", type=int, dest="max_cells")

    t = sub.add_parser("truncate", help="truncate a mixture to F_N with a certified bound")
    _common(t)
    t.add_argument("--mixture", type=Path, help="mixture JSON produced by 'approximate'")
    t.add_argument("--mode", choices=["compact", "weighted_sup", "weighted_lp", "generic_lp"])
    t.add_argument("--N", type=int)
    t.add_argument("--M", type=float)
    t.add_argument("--nu", type=float)
    t.add_argument("--p", type=float)
    t.add_argument("--eta", type=float)
    t.add_argument("--relocation", choices=["ell_N", "one"])

    e = sub.add_parser("error", help="measure ||f - g|| and report the matching bound")
    _density_args(e)
    _common(e)
    e.add_argument("--mixture", type=Path)
    e.add_argument("--norm", choices=["lp", "sup_box", "weighted_sup"])
    e.add_argument("--p", type=float)
    e.add_argument("--eta", type=float)
    e.add_argument("--nu", type=float)
    e.add_argument("--grid", type=int)

    r = sub.add_parser("rate-study", help="run a scale or component sweep")
    _common(r)

    v = sub.add_parser("verify", help="run the named property checks")
    _common(v)
    v.add_argument("--mixture", type=Path, help="also check the invariants of this file")
    v.add_argument("--only", nargs="+", help="run only these checks")
    return ap


_DEFAULTS = {
    "approximate": {"d": 1, "n": 16, "policy": "auto", "residual_tol": None, "max_cells": 4_000_000,
                    "out": "mixture.json", "seed": 0, "threads": 1},
    "truncate": {"mode": "compact", "N": None, "M": None, "nu": 0.0, "p": 2.0, "eta": 0.0,
                 "relocation": "ell_N", "out": "truncated.json", "seed": 0, "threads": 1},
    "error": {"d": 1, "norm": "sup_box", "p": 1.0, "eta": 0.0, "nu": 0.0, "grid": 401,
              "out": "error", "seed": 0, "threads": 1},
    "rate-study": {"out": "study", "seed": None, "threads": None},
    "verify": {"seed": 0, "threads": 1, "only": None},
}
_DENSITY_KEYS = ("density", "d", "M", "rates", "shapes", "rate", "alpha", "params")


def _settings(args) -> dict:
    """Merge flag > config file > defaults, rejecting unknown config fields."""
    defaults = dict(_DEFAULTS[args.command])
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = eio.read_json(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    if args.command == "rate-study":
        return {"file": file_cfg, "verbosity": args.verbosity if args.verbosity is not None else 1,
                **{k: getattr(args, k) for k in ("out", "seed", "threads")}}
    allowed = set(defaults) | set(vars(args)) - {"command", "config", "param"}
    if args.command in ("approximate", "error"):
        allowed |= set(_DENSITY_KEYS)
    unknown = set(file_cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    out = {"verbosity": 1, **defaults, **file_cfg}
    for k, v in vars(args).items():
        if k in ("command", "config", "param"):
            continue
        if v is not None:
            out[k] = v
    params = dict(out.get("params") or {})
    for item in getattr(args, "param", []) or []:
        if "=" not in item:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        params[k] = _parse_value(v)
    out["params"] = params
    return out


def _density(s) -> DensitySpec:
    name = s.get("density")
    if name is None:
        raise ConfigError("--density is required")
    params = dict(s.get("params") or {})
    shorthand = {
        "uniform_box": {"M": "M"},
        "product_exponential": {"rates": "rates"},
        "product_gamma_integer": {"shapes": "shapes", "rate": "rate"},
        "holder_bump": {"alpha": "alpha"},
    }.get(name, {})
    for key, pkey in shorthand.items():
        if s.get(key) is not None:
            params.setdefault(pkey, s[key])
    if name == "erlang_mixture_reference" and isinstance(params.get("mixture"), str):
        params["mixture"] = eio.read_json(params["mixture"])
    return zoo_density(name, int(s.get("d") or 1), params)


def _load_mixture(path, validate=True) -> ErlangMixture:
    if path is None:
        raise ConfigError("--mixture is required")
    try:
        data = eio.read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read mixture {path}: {exc}") from None
    return ErlangMixture.from_dict(data, validate=validate)


def _say(s, msg, level=1):
    if s.get("verbosity", 1) >= level:
        print(msg)


def cmd_approximate(s) -> int:
    f = _density(s)
    if s.get("residual_tol") is not None or s["policy"] == "threshold":
        policy = ThresholdPolicy(s.get("residual_tol") or 1e-10, max_cells=int(s["max_cells"]))
    elif s["policy"] == "support":
        policy = SupportPolicy()
    else:
        policy = None
        if f.support_box is None:
            policy = ThresholdPolicy(1e-10, max_cells=int(s["max_cells"]))
    g, _ = build_mixture(f, int(s["n"]), policy)
    path = eio.write_json(eio.resolve_output(s["out"]), g.to_dict(), compact=True)
    _say(s, f"components: {len(g)}")
    _say(s, f"residual: {g.residual!r}")
    _say(s, f"written: {path}")
    return EXIT_OK


def _table_from_mixture(g: ErlangMixture, N: int) -> CellMassTable:
    size = max(N, int(np.max(g.shapes)) if len(g) else N)
    A = np.zeros((size,) * g.d)
    np.add.at(A, tuple((g.shapes - 1).T), g.weights)
    return CellMassTable(A, g.n, g.residual)


def cmd_truncate(s) -> int:
    g = _load_mixture(s.get("mixture"))
    if s.get("N") is None:
        raise ConfigError("--N is required")
    plan = TruncationPlan(s["mode"], int(s["N"]), g.n, M=s.get("M"), nu=s.get("nu"),
                          p=s.get("p"), eta=s.get("eta"), relocation=s["relocation"])
    res = truncate(_table_from_mixture(g, plan.N), plan)
    path = eio.write_json(eio.resolve_output(s["out"]), res.mixture.to_dict(), compact=True)
    _say(s, f"components: {len(res.mixture)}")
    _say(s, f"relocated mass: {res.relocated_mass!r}")
    _say(s, f"bound: {res.bound!r}  [{res.formula}]")
    _say(s, f"written: {path}")
    return EXIT_OK


def _report(f: DensitySpec, g: ErlangMixture, s) -> ErrorReport:
    kind = s["norm"]
    alpha = f.holder.alpha if f.holder is not None else s.get("alpha")
    M = s.get("M")
    if kind == "sup_box":
        if M is None:
            if f.support_box is None:
                raise ConfigError("sup_box needs --M for densities without support box")
            M = max(f.support_box)
        spec = NormSpec.sup_box(M, grid=int(s["grid"]))
    elif kind == "weighted_sup":
        spec = NormSpec.weighted_sup(float(s["nu"]), grid=int(s["grid"]))
    else:
        spec = NormSpec.lp(float(s["p"]), float(s["eta"]))
    meas = error_norm_detail(f, g, spec)
    bound, formula = None, ""
    h = f.holder
    if kind == "sup_box" and h is not None and h.side is None and f.sup_bound is not None:
        bound = bound_compact_holder(h.H, h.alpha, M, g.n, f.d, f.sup_bound)
        formula = "H C_{alpha,d} ((1+dM)/n)^(alpha/2) + 2 sup_f (dM/n + d/(3n^2))"
    elif kind == "weighted_sup" and h is not None:
        sem = certified_seminorm(f)
        if sem is not None:
            bound = bound_weighted_holder(sem, h.alpha, g.n, f.d)
            formula = "C_{alpha,d} [f]_{nu,alpha,*} n^(-alpha/2)"
    if bound is not None and g.residual > 0:
        bound, formula = None, ""  # the operator bounds apply to the untruncated mixture
    return ErrorReport(
        metric=kind, measured=meas.value, bound=bound, bound_formula=formula,
        caveat=meas.caveat, d=f.d, n=g.n, M=M, alpha=alpha,
        nu=spec.nu if kind == "weighted_sup" else None,
        eta=spec.eta if kind == "lp" else None, p=spec.p if kind == "lp" else None,
        constants=report_constants(alpha, f.d) if alpha is not None else {},
    )


def cmd_error(s) -> int:
    f = _density(s)
    g = _load_mixture(s.get("mixture"))
    if g.d != f.d:
        raise ConfigError(f"mixture dimension {g.d} does not match density dimension {f.d}")
    rep = _report(f, g, s)
    stem = eio.resolve_output(s["out"])
    jp = eio.write_json(stem.with_suffix(".json"), rep.to_dict())
    cp = eio.write_csv(stem.with_suffix(".csv"), REPORT_COLUMNS, [rep.csv_row()])
    _say(s, f"measured: {rep.measured!r}")
    if rep.bound is not None:
        _say(s, f"bound: {rep.bound!r}  [{rep.bound_formula}]")
    if rep.caveat:
        _say(s, f"caveat: {rep.caveat}")
    _say(s, f"written: {jp} {cp}")
    return EXIT_OK


def cmd_rate_study(s) -> int:
    data = dict(s["file"])
    if not data:
        raise ConfigError("rate-study needs --config with the study definition")
    for k in ("seed", "threads"):
        if s.get(k) is not None:
            data[k] = s[k]
    out = s.get("out") or data.get("out") or "study"
    if s.get("out") is not None:
        data["out"] = s["out"]
    cfg = RateStudyConfig.from_dict(data)
    study = run_study(cfg)
    stem = eio.resolve_output(cfg.out or out)
    cp = eio.atomic_write_text(stem.with_suffix(".csv"), study.csv_text())
    jp = eio.write_json(stem.with_suffix(".json"), study.summary())
    slope = "n/a" if study.slope is None else f"{study.slope:.4f}"
    _say(s, f"slope: {slope}  predicted: {study.predicted:.4f}  pass: {study.passed}")
    _say(s, f"written: {cp} {jp}")
    return EXIT_OK if study.passed else EXIT_CHECK


def cmd_verify(s) -> int:
    rows = []
    if s.get("mixture") is not None:
        g = _load_mixture(s["mixture"], validate=False)
        rows += [(n, ok, d, 0.0) for n, ok, d in check_mixture(g)]
    only = s.get("only")
    if s.get("mixture") is None or only:
        rows += run_checks(int(s.get("seed") or 0), only)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail, secs in rows:
        _say(s, f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
        _say(s, f"      {secs:.2f}s", level=2)
    failed = [r[0] for r in rows if not r[1]]
    _say(s, f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


COMMANDS = {
    "approximate": cmd_approximate,
    "truncate": cmd_truncate,
    "error": cmd_error,
    "rate-study": cmd_rate_study,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _settings(args)
        return COMMANDS[args.command](settings)
    except (ConfigError, InvariantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnumerationCapError, QuadratureError, RuntimeError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
