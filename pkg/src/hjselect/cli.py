"""Command-line runner: TOML config in, CSV tables and a JSON report out.

    hjselect <command> [--config path.toml] [--out dir] [--jobs N]

Exit codes: 0 when every in-config assertion (or every acceptance claim for
``verify-all``) passes, 2 for configuration errors, 3 for numerical
failures or failed assertions.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from functools import partial
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adjoint import DICTIONARY_VERSION, approximate_mather
from .claims import CLAIMS, ClaimContext, ClaimResult, run_claim
from .errors import ConfigError, HJSelectError, NumericalFailure
from .ergodic import estimate_ergodic_constant, sweep_effective_hamiltonian, vanishing_discount_limit
from .grid import TorusGrid, max_norm_distance
from .models import TriangularBump, ZeroPotential, double_well, flat_quasiconvex, smooth_quasiconvex
from .models import LinearDiscount
from .solver import SolverConfig, residual_field, solve_discounted
from .subsolutions import (analytic_flat_limit, flat_discounted_construction, maximal_subsolution,
                           viscosity_residuals)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("hjselect")

CONFIG_SCHEMA = "config_v1"
REPORT_SCHEMA = "report_v1"
COMMANDS = ("solve", "hbar-sweep", "limit", "adjoint", "maxsub", "flat-limit", "flat-hbar", "verify-all")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

# allowed keys per table, with their types
SCHEMA = {
    "model": {"variant": str, "P": float, "potential": str, "s": float, "height": float, "coeffs": list},
    "grid": {"n_points": int},
    "ladder": {"eps": list},
    "solver": {"scheme": str, "tol": float, "max_iter": int, "method": str, "damping": float},
    "sweep": {"P": list},
    "limit": {"hbar": float},
    "adjoint": {"x0": float, "eta_factors": list},
    "maxsub": {"y": list, "level": float},
}
TOP_LEVEL = {"schema", "assert"}
ASSERT_KEYS = {"metric", "value", "tol", "max", "min"}
VARIANTS = ("flat", "double_well", "smooth")

DEFAULTS = {
    "model": {"variant": "flat", "P": 1.5, "potential": "triangular", "s": 0.1},
    "grid": {"n_points": 1024},
    "ladder": {"eps": [1e-1, 1e-2, 1e-3]},
    "solver": {},
    "sweep": {"P": [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]},
    "limit": {},
    "adjoint": {"x0": 0.5, "eta_factors": [4.0, 2.0, 1.0]},
    "maxsub": {"y": [0.0, 0.3, 0.55, 0.8], "level": 1.0},
}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _check_type(table: str, key: str, value, kind):
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind in (str, list) and isinstance(value, kind):
        return value
    raise ConfigError(f"[{table}] {key}: expected {kind.__name__}, got {type(value).__name__}")


def validate_config(raw: dict) -> dict:
    """Check ``raw`` against the schema and merge it over the defaults."""
    unknown = set(raw) - set(SCHEMA) - TOP_LEVEL
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if raw.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported schema {raw.get('schema')!r}; expected {CONFIG_SCHEMA!r}")
    cfg = {t: dict(v) for t, v in DEFAULTS.items()}
    for table, allowed in SCHEMA.items():
        section = raw.get(table, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{table}] must be a table")
        bad = set(section) - set(allowed)
        if bad:
            raise ConfigError(f"unknown keys in [{table}]: {sorted(bad)}")
        for key, value in section.items():
            cfg[table][key] = _check_type(table, key, value, allowed[key])
    asserts = raw.get("assert", [])
    if not isinstance(asserts, list):
        raise ConfigError("assert must be an array of tables")
    for a in asserts:
        if not isinstance(a, dict) or "metric" not in a or set(a) - ASSERT_KEYS:
            raise ConfigError(f"malformed assertion {a!r}")
        if "value" in a and "tol" not in a:
            raise ConfigError(f"assertion on {a['metric']!r} has a value but no tol")
    cfg["assert"] = asserts
    if cfg["model"]["variant"] not in VARIANTS:
        raise ConfigError(f"unknown model variant {cfg['model']['variant']!r}")
    if cfg["model"]["potential"] not in ("triangular", "zero"):
        raise ConfigError(f"unknown potential {cfg['model']['potential']!r}")
    eps = [float(e) for e in cfg["ladder"]["eps"]]
    if not eps or any(e <= 0.0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("ladder.eps must be positive and strictly decreasing")
    cfg["ladder"]["eps"] = eps
    if cfg["grid"]["n_points"] < 8:
        raise ConfigError("grid.n_points must be at least 8")
    return cfg


def load_config(path: str | None) -> dict:
    if path is None:
        return validate_config({})
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return validate_config(raw)


def build_potential(model: dict):
    if model["potential"] == "zero":
        return ZeroPotential()
    return TriangularBump(model["s"], model.get("height"))


def build_hamiltonian(model: dict, P: float | None = None):
    P = model["P"] if P is None else P
    V = build_potential(model)
    if model["variant"] == "flat":
        return flat_quasiconvex(V, P)
    if model["variant"] == "double_well":
        return double_well(P, V)
    if "coeffs" in model:
        return smooth_quasiconvex(tuple(float(c) for c in model["coeffs"]), V, P)
    return smooth_quasiconvex(V=V, P=P)


def build_solver(cfg: dict) -> SolverConfig:
    try:
        return SolverConfig(**cfg["solver"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def environment() -> dict:
    return {"hjselect": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "platform": platform.platform(terse=True)}


def write_json(path: Path, payload: dict) -> None:
    from .claims import _jsonable

    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def evaluate_assertions(asserts: list, metrics: dict) -> list:
    out = []
    for a in asserts:
        name = a["metric"]
        if name not in metrics:
            raise ConfigError(f"assertion on unknown metric {name!r}; available: {sorted(metrics)}")
        val = float(metrics[name])
        ok = bool(np.isfinite(val))
        if "value" in a:
            ok &= abs(val - float(a["value"])) <= float(a["tol"])
        if "max" in a:
            ok &= val <= float(a["max"])
        if "min" in a:
            ok &= val >= float(a["min"])
        out.append({**a, "measured": val, "passed": ok})
    return out


# --------------------------------------------------------------------------
# commands: each returns a metrics dict and writes its CSV files
# --------------------------------------------------------------------------


def cmd_solve(cfg: dict, out: Path, jobs: int) -> dict:
    H = build_hamiltonian(cfg["model"])
    grid = TorusGrid(cfg["grid"]["n_points"])
    scfg = build_solver(cfg)
    eps = cfg["ladder"]["eps"][-1]
    res = solve_discounted(H, eps, grid, scfg)
    r = residual_field(res.u, H, eps, scfg)
    v = res.normalized(res.shift)
    write_csv(out / "solution.csv",
              ["x", "u (discounted solution)", "v (u + shift/eps)", "scheme residual"],
              zip(grid.nodes, res.u.values, v.values, r.values))
    return {"epsilon": eps, "shift": res.shift, "residual": res.residual, "iterations": res.iterations,
            "lipschitz": res.lipschitz, "max_scheme_residual": r.max_abs()}


def _sweep_family(model: dict, P: float):
    return build_hamiltonian(model, P)


def cmd_hbar_sweep(cfg: dict, out: Path, jobs: int) -> dict:
    grid = TorusGrid(cfg["grid"]["n_points"])
    Ps = [float(p) for p in cfg["sweep"]["P"]]
    pts = sweep_effective_hamiltonian(partial(_sweep_family, cfg["model"]), Ps, grid,
                                      cfg["ladder"]["eps"], build_solver(cfg), jobs=jobs)
    write_csv(out / "hbar_sweep.csv",
              ["P (rotation vector)", "hbar (effective Hamiltonian)", "extrapolation gap", "error"],
              [(p.P, p.hbar, p.extrapolation_gap, p.error or "") for p in pts])
    metrics = {"points": len(pts), "failures": sum(p.error is not None for p in pts)}
    if cfg["model"]["variant"] == "double_well" and cfg["model"]["potential"] == "zero":
        metrics["max_error_vs_exact"] = max(abs(p.hbar - (p.P ** 2 - 1) ** 2) for p in pts)
    return metrics


def _hbar_for(cfg: dict, H, grid: TorusGrid) -> float:
    if "hbar" in cfg["limit"]:
        return cfg["limit"]["hbar"]
    eps = cfg["ladder"]["eps"]
    ladder = eps if len(eps) >= 3 else [1e-1, 1e-2, 1e-3]
    return estimate_ergodic_constant(H, grid, ladder, build_solver(cfg)).hbar


def cmd_limit(cfg: dict, out: Path, jobs: int) -> dict:
    H = build_hamiltonian(cfg["model"])
    grid = TorusGrid(cfg["grid"]["n_points"])
    hbar = _hbar_for(cfg, H, grid)
    study = vanishing_discount_limit(H, hbar, grid, cfg["ladder"]["eps"], build_solver(cfg), check=False)
    header = ["x"] + [f"v_eps (eps={e:g})" for e in study.eps_seq]
    write_csv(out / "limit_series.csv", header,
              zip(grid.nodes, *[v.values for v in study.v_eps]))
    write_csv(out / "limit_gaps.csv", ["eps", "eps/next", "max-norm gap between consecutive v_eps"],
              [(a, b, g) for a, b, g in zip(study.eps_seq, study.eps_seq[1:], study.cauchy_gaps)])
    return {"hbar": hbar, "last_gap": float(study.cauchy_gaps[-1]) if study.cauchy_gaps.size else 0.0,
            "max_abs_v": max(v.max_abs() for v in study.v_eps),
            "gaps_decreasing": float(study.gaps_decreasing(min(3, study.cauchy_gaps.size)))}


def cmd_adjoint(cfg: dict, out: Path, jobs: int) -> dict:
    H = build_hamiltonian(cfg["model"])
    grid = TorusGrid(cfg["grid"]["n_points"])
    hbar = _hbar_for(cfg, H, grid)
    gd = LinearDiscount(H, hbar)
    x0 = grid.node_index(cfg["adjoint"]["x0"])
    m = approximate_mather(gd, x0, cfg["ladder"]["eps"], grid, build_solver(cfg),
                           eta_factors=tuple(float(c) for c in cfg["adjoint"]["eta_factors"]), check=False)
    mu = m.measure
    write_csv(out / "adjoint_measure.csv", ["x", "p (smoothed slope)", "weight (h * theta)"],
              zip(mu.x, mu.p, mu.w))
    write_csv(out / "adjoint_ladder.csv",
              ["eps", "eta", "normalization (h * sum f_r theta)", "min theta"],
              [(s.epsilon, s.eta, s.normalization, s.min_theta) for s in m.steps])
    write_csv(out / "adjoint_pairings.csv", ["eps"] + [f"pairing {n} ({DICTIONARY_VERSION})" for n in m.names],
              [(e, *row) for e, row in zip(cfg["ladder"]["eps"], m.extrapolated)])
    return {"hbar": hbar, "max_normalization_error": max(abs(s.normalization - 1.0) for s in m.steps),
            "min_theta": min(s.min_theta for s in m.steps), "identity_i": m.identity_i,
            "identity_ii": m.identity_ii,
            "last_cauchy_gap": float(m.cauchy_gaps[-1]) if m.cauchy_gaps.size else 0.0}


def cmd_maxsub(cfg: dict, out: Path, jobs: int) -> dict:
    H = build_hamiltonian(cfg["model"])
    grid = TorusGrid(cfg["grid"]["n_points"])
    level = cfg["maxsub"]["level"]
    cols, header, metrics = [grid.nodes], ["x"], {}
    worst_sub, min_super = -np.inf, np.inf
    for y in cfg["maxsub"]["y"]:
        ms = maximal_subsolution(H, level, float(y), grid)
        sub, sup = viscosity_residuals(ms.S, H, level)
        iy = grid.node_index(float(y))
        cols += [ms.S.values, sub, sup]
        header += [f"S(x, y={y:g})", f"subsolution residual (y={y:g})", f"supersolution residual (y={y:g})"]
        worst_sub = max(worst_sub, float(np.max(sub)))
        min_super = min(min_super, float(sup[iy]))
        metrics[f"super_at_vertex_y={y:g}"] = float(sup[iy])
    write_csv(out / "maxsub.csv", header, zip(*cols))
    metrics.update({"max_sub_residual": worst_sub, "min_super_at_vertex": min_super})
    return metrics


def cmd_flat_limit(cfg: dict, out: Path, jobs: int) -> dict:
    model = cfg["model"]
    if model["variant"] != "flat" or model["potential"] != "triangular" or model["P"] != 1.5:
        raise ConfigError("flat-limit needs the flat variant with the triangular potential at P = 1.5")
    s = model["s"]
    H = build_hamiltonian(model)
    grid = TorusGrid(cfg["grid"]["n_points"])
    eps = cfg["ladder"]["eps"]
    study = vanishing_discount_limit(H, 1.0, grid, eps, build_solver(cfg), check=False)
    u0, b = analytic_flat_limit(s, grid)
    con = flat_discounted_construction(s, eps[-1], grid)
    write_csv(out / "flat_limit.csv",
              ["x", "analytic limit u0", f"numerical v_eps (eps={eps[-1]:g})", "explicit discounted solution"],
              zip(grid.nodes, u0.values, study.u0.values, con.v.values))
    return {"distance": max_norm_distance(study.u0, u0), "b_closed_form": b, "b_construction": con.b,
            "a_construction": con.a, "construction_vs_numerical": max_norm_distance(study.u0, con.v)}


def cmd_flat_hbar(cfg: dict, out: Path, jobs: int) -> dict:
    H = build_hamiltonian(cfg["model"])
    grid = TorusGrid(cfg["grid"]["n_points"])
    est = estimate_ergodic_constant(H, grid, cfg["ladder"]["eps"], build_solver(cfg))
    write_csv(out / "hbar_ladder.csv", ["eps", "-eps u_eps(x0)"], est.eps_ladder)
    return {"hbar": est.hbar, "extrapolation_gap": est.extrapolation_gap}


def cmd_verify_all(cfg: dict, out: Path, jobs: int) -> tuple[dict, list]:
    ctx = ClaimContext()
    results = []
    for cid, fn in enumerate(CLAIMS, start=1):
        try:
            res = run_claim(fn, ctx)
        except NumericalFailure as exc:
            exc.claim = f"criterion {cid}"
            res = ClaimResult(cid, fn.__name__.removeprefix("claim_"), False, {}, {},
                              detail=f"{type(exc).__name__}: {exc}")
        print(res.line(), flush=True)
        results.append(res)
    write_csv(out / "acceptance.csv", ["criterion", "name", "passed"],
              [(r.cid, r.name, r.passed) for r in results])
    metrics = {"passed": sum(r.passed for r in results), "total": len(results)}
    return metrics, results


HANDLERS = {"solve": cmd_solve, "hbar-sweep": cmd_hbar_sweep, "limit": cmd_limit, "adjoint": cmd_adjoint,
            "maxsub": cmd_maxsub, "flat-limit": cmd_flat_limit, "flat-hbar": cmd_flat_hbar}


def run(command: str, cfg: dict, out: Path, jobs: int = 1) -> int:
    out.mkdir(parents=True, exist_ok=True)
    t = time.perf_counter()
    claims = []
    if command == "verify-all":
        metrics, claims = cmd_verify_all(cfg, out, jobs)
    else:
        try:
            metrics = HANDLERS[command](cfg, out, jobs)
        except NumericalFailure as exc:
            exc.claim = exc.claim or command
            raise
    elapsed = time.perf_counter() - t
    asserts = evaluate_assertions(cfg["assert"], metrics)
    ok = all(a["passed"] for a in asserts) and all(c.passed for c in claims)
    config_echo = {k: v for k, v in cfg.items() if k != "assert"}
    report = {"schema": REPORT_SCHEMA, "command": command, "config": config_echo, "metrics": metrics,
              "assertions": asserts, "claims": [c.as_dict() for c in claims], "passed": ok,
              "environment": environment()}
    write_json(out / "report.json", report)
    timings = {"total_seconds": round(elapsed, 3)}
    timings.update({f"criterion_{c.cid}": round(c.runtime, 3) for c in claims})
    write_json(out / "timings.json", timings)
    for a in asserts:
        print(f"[{'PASS' if a['passed'] else 'FAIL'}] {a['metric']} = {a['measured']:.6g}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hjselect", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="TOML experiment config (schema config_v1); defaults if omitted")
    p.add_argument("--out", default="hjselect_out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = load_config(args.config)
        return run(args.command, cfg, Path(args.out), args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        claim = f" [{exc.claim}]" if getattr(exc, "claim", None) else ""
        print(f"numerical failure{claim}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HJSelectError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
