"""Command-line entry point: ``choquard <subcommand> [flags]``.

Exit codes: 0 success, 2 invalid input (nothing written), 3 numeric
non-convergence.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .constants import (BubbleParams, critical_exponents, riesz_potential_closed_form,
                        riesz_potential_quadrature, universal_constants)
from .errors import ChoquardError, QuadratureError, SolverError
from .geometry import Domain, ScalarField, make_grid
from .report import emit_report

WORKERS_ENV = "CHOQUARD_WORKERS"

DEFAULTS = {
    "n": 3,
    "mu": 1.0,
    "domain": "ball:1.0",
    "h": 0.0625,
    "seed": 0,
    "out": "choquard-out",
    "format": "csv",
    "workers": None,
}

SUBCOMMANDS = ("constants", "verify-riesz", "green", "project", "energy", "expand", "fit", "flow")


class UsageError(ChoquardError, ValueError):
    """Flags or config values fail validation."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(s: str):
    return [float(t) for t in s.split(",") if t.strip()]


def _points(s: str):
    return [tuple(_floats(p)) for p in s.split(";") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--n", type=int, default=S, help="dimension (default 3)")
    common.add_argument("--mu", type=float, default=S, help="Riesz exponent (default 1)")
    common.add_argument("--domain", default=S, help="ball:R | annulus:ri,ro | box:lo,hi")
    common.add_argument("--h", type=float, default=S, help="mesh width")
    common.add_argument("--seed", type=int, default=S, help="root seed")
    common.add_argument("--out", default=S, help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default=S)
    common.add_argument("--workers", type=int, default=S, help=f"worker count (env {WORKERS_ENV})")
    common.add_argument("--config", default=None, help="key = value file; flags override it")

    p = _Parser(prog="choquard", description="Critical Choquard toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("constants", parents=[common], help="universal constants table")

    s = sub.add_parser("verify-riesz", parents=[common], help="closed-form vs quadrature Riesz potential")
    s.add_argument("--radii", default=S, help="comma list of |x| (default 0,0.5,1,2)")
    s.add_argument("--lambda", dest="lam", type=float, default=S)
    s.add_argument("--method", choices=("radial", "monte_carlo"), default=S)
    s.add_argument("--samples", type=int, default=S)

    s = sub.add_parser("green", parents=[common], help="Robin function and Green values")
    s.add_argument("--a", required=True, help="source points 'x,y,z;x,y,z'")
    s.add_argument("--x", default=S, help="evaluation points for G")
    s.add_argument("--method", choices=("auto", "grid", "wos", "closed"), default=S)
    s.add_argument("--walks", type=int, default=S)

    s = sub.add_parser("project", parents=[common], help="projected-bubble energy table")
    s.add_argument("--a", default=S, help="bubble center 'x,y,z' (default: domain anchor)")
    s.add_argument("--lambda", dest="lam", required=True, help="comma list of lambdas")
    s.add_argument("--method", choices=("solve", "approx"), default=S)

    s = sub.add_parser("energy", parents=[common], help="energies of a stored field")
    s.add_argument("--field", required=True, help="field file (binary layout)")
    s.add_argument("--method", choices=("fft", "direct"), default=S)

    s = sub.add_parser("expand", parents=[common], help="multi-bubble expansion sweep")
    s.add_argument("--p", type=int, default=S)
    s.add_argument("--lambda", dest="lam", required=True, help="comma list of lambdas")
    s.add_argument("--centers", default=S, help="'x,y,z;x,y,z' (default: p points on a mid circle)")
    s.add_argument("--alpha", default=S, help="comma list of weights (default equal)")
    s.add_argument("--direct", action="store_true", default=S)

    s = sub.add_parser("fit", parents=[common], help="bubble fit of a stored field")
    s.add_argument("--field", required=True)
    s.add_argument("--p", type=int, default=S)
    s.add_argument("--eps", type=float, default=S, help="also test V(p, eps) membership")

    s = sub.add_parser("flow", parents=[common], help="run the normalized gradient flow")
    s.add_argument("--kind", choices=("single-bubble", "random-bump"), default=S)
    s.add_argument("--a", default=S)
    s.add_argument("--lambda", dest="lam", type=float, default=S)
    s.add_argument("--steps", type=int, default=S)
    s.add_argument("--snapshot-every", dest="snapshot_every", type=int, default=S)
    s.add_argument("--dt-scale", dest="dt_scale", type=float, default=S)
    return p


SUB_DEFAULTS = {
    "verify-riesz": {"radii": "0,0.5,1,2", "lam": 1.0, "method": "radial", "samples": 400_000},
    "green": {"x": "", "method": "auto", "walks": 10_000},
    "project": {"a": "", "method": "solve"},
    "energy": {"method": "fft"},
    "expand": {"p": 1, "centers": "", "alpha": "", "direct": False},
    "fit": {"p": 1, "eps": math.nan},
    "flow": {"kind": "single-bubble", "a": "", "lam": 4.0, "steps": 100, "snapshot_every": 20,
             "dt_scale": 1.0},
}


def read_config(path: str) -> dict:
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for ln, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{ln}: expected key = value")
                k, v = (t.strip() for t in line.split("=", 1))
                out[k.replace("-", "_")] = v
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return out


def _coerce(key, value, like):
    if isinstance(value, str) and not isinstance(like, str) and like is not None:
        try:
            if isinstance(like, bool):
                return value.lower() in ("1", "true", "yes", "on")
            if isinstance(like, int):
                return int(value)
            if isinstance(like, float):
                return float(value)
        except ValueError as exc:
            raise UsageError(f"config key {key}: cannot parse {value!r}") from exc
    return value


def resolve(ns: argparse.Namespace) -> dict:
    """Merge defaults, the config file and flags (flags win)."""
    cmd = ns.command
    base = dict(DEFAULTS)
    base.update(SUB_DEFAULTS.get(cmd, {}))
    file_cfg = read_config(ns.config) if ns.config else {}
    unknown = set(file_cfg) - set(base) - {"a", "lam", "field"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = dict(base)
    for k, v in file_cfg.items():
        cfg[k] = _coerce(k, v, base.get(k))
    for k, v in vars(ns).items():
        if k not in ("config",):
            cfg[k] = v
    if cfg["workers"] is None:
        env = os.environ.get(WORKERS_ENV, "1")
        try:
            cfg["workers"] = int(env)
        except ValueError as exc:
            raise UsageError(f"{WORKERS_ENV} must be an integer") from exc
    cfg["config"] = ns.config
    return cfg


def validate(cfg: dict):
    """Check every precondition before any computation; returns the parsed domain."""
    try:
        critical_exponents(cfg["n"], cfg["mu"])
        domain = Domain.parse(cfg["domain"], cfg["n"])
    except (ValueError, ChoquardError) as exc:
        raise UsageError(str(exc)) from exc
    if not cfg["h"] > 0:
        raise UsageError("--h must be positive")
    if cfg["workers"] < 1:
        raise UsageError("--workers must be at least 1")
    cmd = cfg["command"]
    if cmd in ("energy", "fit") and not os.path.isfile(cfg["field"]):
        raise UsageError(f"field file not found: {cfg['field']}")
    if cmd in ("project", "expand"):
        try:
            lams = _floats(str(cfg["lam"]))
        except ValueError as exc:
            raise UsageError("--lambda must be a comma list of numbers") from exc
        if not lams or min(lams) <= 0:
            raise UsageError("--lambda values must be positive")
    if cmd in ("expand", "fit") and cfg["p"] < 1:
        raise UsageError("--p must be at least 1")
    if cmd == "flow" and (cfg["steps"] < 0 or cfg["lam"] <= 0):
        raise UsageError("--steps must be >= 0 and --lambda > 0")
    for key in ("a", "x", "centers"):
        if cfg.get(key):
            try:
                pts = _points(cfg[key])
            except ValueError as exc:
                raise UsageError(f"--{key}: cannot parse points") from exc
            if any(len(t) != cfg["n"] for t in pts):
                raise UsageError(f"--{key}: points must have {cfg['n']} coordinates")
    return domain


def _meta(cfg):
    shown = {k: v for k, v in cfg.items() if k != "command"}
    shown["command"] = cfg["command"]
    return {"config": shown, "version": __version__}


def _write(cfg, name, records, fields=None):
    os.makedirs(cfg["out"], exist_ok=True)
    path = os.path.join(cfg["out"], f"{name}.{cfg['format']}")
    emit_report(records, cfg["format"], path, _meta(cfg), fields)
    return path


# -- subcommands ---------------------------------------------------------

def cmd_constants(cfg, domain):
    c = universal_constants(cfg["n"], cfg["mu"])
    e = critical_exponents(cfg["n"], cfg["mu"])
    rec = {"n": c.n, "mu": c.mu, "gamma0": c.gamma0, "c1": c.c1, "C_n_mu": c.C_n_mu, "S": c.S,
           "A_HL": c.A_HL, "S_tilde_HL": c.S_tilde_HL, "S_tilde_HL_direct": c.S_tilde_HL_direct,
           "S_tilde_gap": c.S_tilde_gap, "S_HL": c.S_HL, "two_mu_star": e.two_mu_star,
           "two_mu_lower": e.two_mu_lower, "two_star": e.two_star}
    path = _write(cfg, "constants", [rec])
    for k in ("gamma0", "c1", "S", "S_tilde_HL", "S_tilde_gap"):
        print(f"{k:>12s} = {rec[k]:.10g}")
    return path


def cmd_verify_riesz(cfg, domain):
    c = universal_constants(cfg["n"], cfg["mu"], direct=False)
    e = critical_exponents(cfg["n"], cfg["mu"])
    p = BubbleParams((0.0,) * cfg["n"], cfg["lam"])
    recs = []
    for r in _floats(cfg["radii"]):
        x = np.zeros(cfg["n"])
        x[0] = r
        closed = float(riesz_potential_closed_form(p, x, e, c))
        val, err = riesz_potential_quadrature(p, x, e, c, method=cfg["method"], samples=cfg["samples"],
                                              seed=cfg["seed"])
        recs.append({"r": r, "closed_form": closed, "quadrature": val, "quadrature_err": err,
                     "rel_error": abs(val - closed) / closed})
        print(f"|x|={r:<6g} closed={closed:.10g} quad={val:.10g} rel={recs[-1]['rel_error']:.2e}")
    return _write(cfg, "verify_riesz", recs)


def cmd_green(cfg, domain):
    from .green import correction_for, green_eval
    recs = []
    for a in _points(cfg["a"]):
        kw = {}
        if cfg["method"] == "grid":
            kw = {"h": cfg["h"]}
        elif cfg["method"] == "wos":
            kw = {"walks": cfg["walks"], "seed": cfg["seed"], "workers": cfg["workers"]}
        corr = correction_for(a, domain, cfg["method"], **kw)
        H, err = corr(np.asarray(a))
        recs.append({"a": list(a), "x": list(a), "kind": "robin", "value": H, "error": err,
                     "source": corr.kind})
        print(f"H({a}, {a}) = {H:.10g} +- {err:.2g} [{corr.kind}]")
        for x in _points(cfg["x"]):
            G, gerr = green_eval(a, x, corr)
            recs.append({"a": list(a), "x": list(x), "kind": "green", "value": G, "error": gerr,
                         "source": corr.kind})
            print(f"G({a}, {x}) = {G:.10g}")
    return _write(cfg, "green", recs)


def cmd_project(cfg, domain):
    from .projection import project_bubble, pu_self_energy
    c = universal_constants(cfg["n"], cfg["mu"], direct=False)
    a = _points(cfg["a"])[0] if cfg["a"] else tuple(domain.anchor())
    grid = make_grid(domain, cfg["h"])
    recs = []
    for lam in _floats(str(cfg["lam"])):
        pb = project_bubble(BubbleParams(a, lam), domain, cfg["method"], grid, consts=c, regime_floor=0.0)
        r = pu_self_energy(pb, c)
        recs.append({"lambda": lam, "a": list(a), "method": cfg["method"], "measured": r.measured,
                     "predicted": r.predicted, "residual": r.residual,
                     "regime_ok": pb.regime >= 4.0})
        print(f"lambda={lam:<6g} <PU,PU>={r.measured:.8g} predicted={r.predicted:.8g}")
    return _write(cfg, "project", recs,
                  ["lambda", "a", "method", "measured", "predicted", "residual", "regime_ok"])


def cmd_energy(cfg, domain):
    from .energy import evaluate_functionals
    u = ScalarField.load(cfg["field"])
    eb = evaluate_functionals(u, cfg["mu"], cfg["method"])
    rec = eb.as_dict()
    rec.update({"method": cfg["method"], "h": u.grid.h, "nodes": u.grid.size,
                "domain": u.grid.domain.spec()})
    print(f"J = {eb.J:.10g}  D = {eb.D:.10g}  lambda* = {eb.lambda_star:.10g}")
    return _write(cfg, "energy", [rec])


def _default_centers(domain, p, n):
    if p == 1:
        return [tuple(domain.anchor())]
    if domain.kind == "annulus":
        r = 0.5 * (domain.r_inner + domain.radius)
    elif domain.kind == "ball":
        r = 0.5 * domain.radius
    else:
        r = 0.25 * float(np.min(np.subtract(domain.hi, domain.lo)))
    c = np.asarray(domain.center if domain.kind != "box" else 0.5 * np.add(domain.lo, domain.hi))
    out = []
    for k in range(p):
        t = 2 * math.pi * k / p
        x = c.copy()
        x[0] += r * math.cos(t)
        x[1] += r * math.sin(t)
        out.append(tuple(x))
    return out


def cmd_expand(cfg, domain):
    from .expansion import BubbleConfiguration, expansion_J
    c = universal_constants(cfg["n"], cfg["mu"])
    p = cfg["p"]
    centers = _points(cfg["centers"]) if cfg["centers"] else _default_centers(domain, p, cfg["n"])
    alphas = _floats(cfg["alpha"]) if cfg["alpha"] else [1.0 / p] * p
    if len(centers) != p or len(alphas) != p:
        raise UsageError("--centers/--alpha must list p entries")
    recs = []
    for lam in _floats(str(cfg["lam"])):
        conf = BubbleConfiguration.from_arrays(centers, lam, alphas, domain)
        rep = expansion_J(conf, c, direct=bool(cfg["direct"]), h=cfg["h"])
        flags = [] if rep.regime_ok else ["regime"]
        recs.append({"p": p, "lambda": lam, "d_a": rep.d_a, "leading": rep.leading,
                     "correction": rep.correction, "predicted_J": rep.predicted_J,
                     "direct_J": rep.direct_J, "gap": rep.gap, "flags": ";".join(flags)})
        print(f"lambda={lam:<6g} predicted_J={rep.predicted_J:.8g} direct_J={rep.direct_J:.8g}")
    return _write(cfg, "expand", recs, ["p", "lambda", "d_a", "leading", "correction", "predicted_J",
                                        "direct_J", "gap", "flags"])


def cmd_fit(cfg, domain):
    from .fitting import bubble_fit, v_membership
    c = universal_constants(cfg["n"], cfg["mu"], direct=False)
    u = ScalarField.load(cfg["field"])
    s = u.norm1()
    if s == 0.0:
        raise UsageError("field is identically zero")
    u = u * (1.0 / s)
    fit = bubble_fit(u, cfg["p"], consts=c)
    rec = fit.as_dict()
    if not math.isnan(cfg["eps"]):
        m = v_membership(u, cfg["p"], cfg["eps"], fit=fit)
        rec["membership"] = m.status
        rec["margins"] = m.margins
    print(f"p={fit.p} residual={fit.residual:.3e} lams={np.round(fit.lams, 6).tolist()}")
    old = cfg["format"]
    cfg = dict(cfg, format="json")
    path = _write(cfg, "fit", [rec])
    cfg["format"] = old
    return path


def cmd_flow(cfg, domain):
    from .flow import run_flow, seed_field
    c = universal_constants(cfg["n"], cfg["mu"], direct=False)
    grid = make_grid(domain, cfg["h"])
    a = _points(cfg["a"])[0] if cfg["a"] else None
    st = seed_field(cfg["kind"], domain, grid, cfg["mu"], a=a, lam=cfg["lam"], seed=cfg["seed"], consts=c)
    st.dt *= cfg["dt_scale"]
    summ = run_flow(st, max_steps=cfg["steps"], snapshot_every=cfg["snapshot_every"],
                    dt_cap=st.dt, consts=c)
    os.makedirs(cfg["out"], exist_ok=True)
    snaps = []
    for k, (step, t, J, u) in enumerate(summ.snapshots):
        name = f"snapshot_{step:06d}.bin"
        u.save(os.path.join(cfg["out"], name))
        snaps.append({"step": step, "time": t, "J": J, "file": name})
    hist = [{"time": t, "J": J, "grad_norm": g} for t, J, g in summ.state.J_history]
    out = dict(cfg, format="csv")
    _write(out, "flow_history", hist, ["time", "J", "grad_norm"])
    man = {"status": summ.status, "steps": summ.state.steps, "J_final": summ.J_limit,
           "level": summ.level, "snapshots": snaps}
    out["format"] = "json"
    path = _write(out, "flow_manifest", [man])
    print(f"status={summ.status} steps={summ.state.steps} J={summ.J_limit:.8g} level={summ.level}")
    return path


HANDLERS = {
    "constants": cmd_constants,
    "verify-riesz": cmd_verify_riesz,
    "green": cmd_green,
    "project": cmd_project,
    "energy": cmd_energy,
    "expand": cmd_expand,
    "fit": cmd_fit,
    "flow": cmd_flow,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        cfg = resolve(ns)
        domain = validate(cfg)
    except UsageError as exc:
        print(f"choquard: error: {exc}", file=sys.stderr)
        return 2
    try:
        HANDLERS[cfg["command"]](cfg, domain)
    except UsageError as exc:
        print(f"choquard: error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, QuadratureError) as exc:
        print(f"choquard: numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
