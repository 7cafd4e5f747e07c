"""Command-line front end.

Every command writes a table (CSV or JSON) whose header echoes the resolved
configuration as ``# config: key = value`` lines.  Such a file is itself a
valid ``--config`` input, so any output can be regenerated from its header.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .errors import NoTransition, OrthospecError, SolverError, UnboundedTrimmer
from .freeconv import bulk_density, bulk_support
from .model import Model
from .montecarlo import empirical_bulk, run_trials, write_trial_dump
from .theory import find_delta_transition, predict, rho_opt
from .trimmers import make_trimmer, normalize_trimmer, opt_eps_trimmer, trimmer_family

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_RESULT = 2
EXIT_SOLVER = 3

COMMANDS = (
    "theory-curve",
    "simulate",
    "bulk-density",
    "empirical-bulk",
    "phase-transition",
    "optimal-sweep",
)


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        raise InputError(message)


# --- value parsing --------------------------------------------------------


def parse_range(text: str) -> list[float]:
    """``A:STEP:B`` -> ``[A, A+STEP, ..., B]`` (inclusive)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"expected A:STEP:B, got {text!r}")
    try:
        a, step, b = (float(p) for p in parts)
    except ValueError:
        raise InputError(f"non-numeric range {text!r}") from None
    if not (step > 0 and b >= a and all(map(math.isfinite, (a, step, b)))):
        raise InputError(f"invalid range {text!r}")
    count = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 12) for i in range(count)]


def parse_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise InputError("empty list")
    return vals


def _as_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise InputError(f"expected an integer, got {text!r}") from None


def _as_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"expected a number, got {text!r}") from None


# Keys accepted in config files and on the command line, with converters.
OPTIONS: dict[str, Callable[[str], Any]] = {
    "trimmer": str,
    "eps": _as_float,
    "const": _as_float,
    "delta": _as_float,
    "delta_grid": str,
    "n": _as_int,
    "m": _as_int,
    "trials": _as_int,
    "seed": _as_int,
    "grid": str,
    "eps_grid": str,
    "x_star": str,
    "workers": _as_int,
    "dump": str,
    "out": str,
    "format": str,
}

# Keys that affect how a run executes but not what it computes; they are
# left out of the echoed header so serial and parallel runs match byte for byte.
EXECUTION_ONLY = {"workers", "out", "dump", "format"}

DEFAULTS: dict[str, dict[str, Any]] = {
    "theory-curve": {"trimmer": "mm", "delta_grid": "1.1:0.1:6"},
    "simulate": {"trimmer": "mm", "delta": 3.0, "n": 1000, "trials": 20, "seed": 0,
                 "x_star": "e1", "workers": 1},
    "bulk-density": {"trimmer": "mm", "delta": 3.0},
    "empirical-bulk": {"trimmer": "mm", "delta": 3.0, "m": 2000, "seed": 0},
    "phase-transition": {"trimmer": "opt-eps", "eps": 1e-3, "delta_grid": "1.05:0.05:10"},
    "optimal-sweep": {"delta": 4.0, "eps_grid": "0.3,0.1,0.03,0.01"},
}

RELEVANT: dict[str, tuple[str, ...]] = {
    "theory-curve": ("trimmer", "eps", "const", "delta", "delta_grid"),
    "simulate": ("trimmer", "eps", "const", "delta", "delta_grid", "n", "trials", "seed",
                 "x_star"),
    "bulk-density": ("trimmer", "eps", "const", "delta", "grid"),
    "empirical-bulk": ("trimmer", "eps", "const", "delta", "m", "seed", "grid"),
    "phase-transition": ("trimmer", "eps", "const", "delta_grid"),
    "optimal-sweep": ("delta", "eps_grid"),
}


def load_config(path: str | Path) -> dict[str, Any]:
    """Read ``key = value`` lines; ``#`` starts a comment.

    A file holding ``# config: key = value`` lines is an earlier output; only
    those lines are read from it, so its data rows are ignored.
    """
    out: dict[str, Any] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    lines = text.splitlines()
    echoed = any(line.strip().startswith("# config:") for line in lines)
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if line.startswith("# config:"):
            line = line[len("# config:"):].strip()
        elif echoed or line.startswith("#") or not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "command":
            continue
        if key not in OPTIONS:
            raise InputError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = OPTIONS[key](value)
    return out


# --- output ---------------------------------------------------------------


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _json_value(v: Any) -> Any:
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return float(f"{f:.12g}") if math.isfinite(f) else None
    return v


@dataclass
class Table:
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)


def render(command: str, config: dict[str, Any], table: Table, fmt: str) -> str:
    echo = {k: v for k, v in config.items() if k not in EXECUTION_ONLY}
    if fmt == "json":
        doc = {
            "tool": f"orthospec {__version__}",
            "command": command,
            "config": {k: _json_value(v) for k, v in echo.items()},
            "meta": {k: _json_value(v) for k, v in table.meta.items()},
            "columns": table.columns,
            "rows": [[_json_value(v) for v in row] for row in table.rows],
        }
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# orthospec {__version__}\n")
    buf.write(f"# config: command = {command}\n")
    for k, v in echo.items():
        buf.write(f"# config: {k} = {_fmt(v)}\n")
    for k, v in table.meta.items():
        buf.write(f"# result: {k} = {_fmt(v)}\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


# --- helpers --------------------------------------------------------------


def _deltas(cfg: dict[str, Any]) -> list[float]:
    if cfg.get("delta_grid") is not None:
        ds = parse_range(cfg["delta_grid"])
    elif cfg.get("delta") is not None:
        ds = [float(cfg["delta"])]
    else:
        raise InputError("need --delta or --delta-grid")
    if any(d <= 1.0 for d in ds):
        raise InputError("every delta must exceed 1")
    return ds


def _single_delta(cfg: dict[str, Any]) -> float:
    ds = _deltas(cfg)
    if len(ds) != 1:
        raise InputError("this command takes a single --delta")
    return ds[0]


def _raw_trimmer(cfg: dict[str, Any], delta: float):
    try:
        return make_trimmer(cfg["trimmer"], delta, eps=cfg.get("eps"), value=cfg.get("const"))
    except (ValueError, OSError) as exc:
        raise InputError(str(exc)) from None


def _theory_trimmer(cfg: dict[str, Any], delta: float):
    t = _raw_trimmer(cfg, delta)
    try:
        return t if t.has_unit_range else normalize_trimmer(t)
    except UnboundedTrimmer as exc:
        raise InputError(f"{exc}; theory needs a bounded trimmer") from None


def _grid(cfg: dict[str, Any], upper: float) -> list[float]:
    if cfg.get("grid") is not None:
        g = parse_range(cfg["grid"])
    else:
        step = 0.005
        g = [round(step * (i + 1), 12) for i in range(int(math.ceil(upper / step)))]
    if any(x <= 0 for x in g):
        raise InputError("grid points must be positive")
    return g


# --- commands -------------------------------------------------------------


def cmd_theory_curve(cfg: dict[str, Any]) -> Table:
    table = Table(["delta", "tau_r", "theta_star", "lambda1_limit", "rho2_limit", "regime",
                   "lambda1_raw", "status"])
    ok = 0
    for d in _deltas(cfg):
        try:
            p = predict(Model(_theory_trimmer(cfg, d), d))
        except (SolverError, OrthospecError) as exc:
            table.rows.append([d, math.nan, None, math.nan, math.nan, "error", math.nan,
                               type(exc).__name__])
            continue
        ok += 1
        table.rows.append([d, p.tau_r, p.theta_star, p.lambda1_limit, p.rho2_limit,
                           p.regime.value, p.lambda1_raw, "ok"])
    if ok == 0:
        raise SolverError("no row of the theory curve could be computed")
    return table


def cmd_simulate(cfg: dict[str, Any]) -> Table:
    table = Table(["delta", "n", "trials", "overlap_mean", "overlap_std", "lambda1_mean",
                   "lambda1_std", "rho2_theory", "lambda1_theory"])
    if cfg["trials"] < 1 or cfg["n"] < 1:
        raise InputError("n and trials must be positive")
    if cfg["x_star"] not in ("e1", "random"):
        raise InputError("x_star must be e1 or random")
    all_results = []
    for d in _deltas(cfg):
        raw = _raw_trimmer(cfg, d)
        try:
            s = run_trials(Model(raw, d), cfg["n"], cfg["trials"], cfg["seed"],
                           x_star=cfg["x_star"], workers=max(1, cfg.get("workers") or 1))
        except ValueError as exc:
            raise InputError(str(exc)) from None
        all_results.extend(s.results)
        rho2 = lam1 = math.nan
        if raw.bounded:
            try:
                p = predict(Model(_theory_trimmer(cfg, d), d))
                rho2, lam1 = p.rho2_limit, p.lambda1_raw
            except (SolverError, OrthospecError):
                pass
        table.rows.append([d, s.n, s.trials, s.overlap_mean, s.overlap_std, s.lambda1_mean,
                           s.lambda1_std, rho2, lam1])
    if cfg.get("dump"):
        write_trial_dump(cfg["dump"], all_results)
    return table


def cmd_bulk_density(cfg: dict[str, Any]) -> Table:
    d = _single_delta(cfg)
    m = Model(_theory_trimmer(cfg, d), d)
    sup = bulk_support(m)
    grid = _grid(cfg, sup.lambda_r + 0.2)
    spec = bulk_density(m, grid, support=sup)
    table = Table(["x", "rho", "converged"])
    table.meta = {
        "lambda_l": sup.lambda_l,
        "lambda_r": sup.lambda_r,
        "tau_l": sup.tau_l,
        "tau_r": sup.tau_r,
        "continuous_mass": spec.continuous_mass(),
        "expected_continuous_mass": 1.0 / d,
        "missing_points": int(np.sum(~spec.converged)),
    }
    for x, r, c in zip(spec.grid, spec.density, spec.converged):
        table.rows.append([float(x), float(r), int(c)])
    return table


def cmd_empirical_bulk(cfg: dict[str, Any]) -> Table:
    d = _single_delta(cfg)
    m = Model(_theory_trimmer(cfg, d), d)
    try:
        ev = empirical_bulk(cfg["m"], m, cfg["seed"])
    except ValueError as exc:
        raise InputError(str(exc)) from None
    grid = np.asarray(_grid(cfg, float(ev.max()) + 0.2))
    if grid.size < 2:
        raise InputError("histogram grid needs at least two points")
    step = float(grid[1] - grid[0])
    edges = np.concatenate([grid - step / 2, [grid[-1] + step / 2]])
    nonzero = ev[ev > 1e-10]
    counts, _ = np.histogram(nonzero, bins=edges)
    dens = counts / (ev.size * step)
    table = Table(["x", "density", "count"])
    table.meta = {"m": ev.size, "nonzero_eigenvalues": nonzero.size,
                  "top_eigenvalue": float(ev[-1]), "bin_width": step}
    for x, r, c in zip(grid, dens, counts):
        table.rows.append([float(x), float(r), int(c)])
    return table


def cmd_phase_transition(cfg: dict[str, Any]) -> Table:
    ds = parse_range(cfg["delta_grid"])
    if ds[0] <= 1.0 or len(ds) < 2:
        raise InputError("delta range must lie above 1 and contain two points")
    try:
        family = trimmer_family(cfg["trimmer"], eps=cfg.get("eps"), value=cfg.get("const"))
    except (ValueError, OSError) as exc:
        raise InputError(str(exc)) from None
    res = find_delta_transition(family, (ds[0], ds[-1]))
    table = Table(["delta_T", "bracket_lo", "bracket_hi", "iterations"])
    table.rows.append([res.delta_T, res.lo, res.hi, res.iterations])
    return table


def cmd_optimal_sweep(cfg: dict[str, Any]) -> Table:
    d = _single_delta(cfg)
    eps = parse_list(cfg["eps_grid"])
    if any(not 0.0 < e < 1.0 for e in eps):
        raise InputError("eps values must lie in (0, 1)")
    best = rho_opt(d)
    table = Table(["epsilon", "delta", "rho2_eps", "rho2_opt", "gap"])
    for e in eps:
        p = predict(Model(normalize_trimmer(opt_eps_trimmer(d, e)), d))
        table.rows.append([e, d, p.rho2_limit, best, best - p.rho2_limit])
    order = sorted(table.rows, key=lambda r: -r[0])
    gaps = [r[4] for r in order]
    table.meta = {
        "gap_nonincreasing_as_eps_decreases": all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:])),
        "gap_nonnegative": all(g >= -1e-9 for g in gaps),
    }
    return table


HANDLERS: dict[str, Callable[[dict[str, Any]], Table]] = {
    "theory-curve": cmd_theory_curve,
    "simulate": cmd_simulate,
    "bulk-density": cmd_bulk_density,
    "empirical-bulk": cmd_empirical_bulk,
    "phase-transition": cmd_phase_transition,
    "optimal-sweep": cmd_optimal_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value file; command-line flags take precedence")
    common.add_argument("--trimmer", help="mm, lal, opt, opt-eps, const or csv:PATH")
    common.add_argument("--eps", help="epsilon for opt-eps")
    common.add_argument("--const", help="value of the constant trimmer")
    dgroup = common.add_mutually_exclusive_group()
    dgroup.add_argument("--delta", help="sampling ratio m/n")
    dgroup.add_argument("--delta-grid", dest="delta_grid", help="A:STEP:B")
    common.add_argument("--n", help="signal dimension")
    common.add_argument("--m", help="matrix size for empirical-bulk")
    common.add_argument("--trials")
    common.add_argument("--seed")
    common.add_argument("--grid", help="x grid A:STEP:B")
    common.add_argument("--eps-grid", dest="eps_grid", help="comma-separated epsilons")
    common.add_argument("--x-star", dest="x_star", help="e1 or random")
    common.add_argument("--workers", help="parallel worker processes for simulate")
    common.add_argument("--dump", help="JSON-lines file of per-trial results")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"))
    parser = _Parser(prog="orthospec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"orthospec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    cmd = args.command
    cfg: dict[str, Any] = dict(DEFAULTS[cmd])
    cfg["format"] = "csv"
    if args.config:
        from_file = load_config(args.config)
        if "delta" in from_file or "delta_grid" in from_file:
            cfg.pop("delta", None)
            cfg.pop("delta_grid", None)
        cfg.update(from_file)
    cli = {k: getattr(args, k) for k in OPTIONS if getattr(args, k, None) is not None}
    if "delta" in cli or "delta_grid" in cli:
        cfg.pop("delta", None)
        cfg.pop("delta_grid", None)
    for k, v in cli.items():
        cfg[k] = OPTIONS[k](v)
    if cfg.get("trimmer") == "opt-eps" and cfg.get("eps") is None:
        raise InputError("trimmer opt-eps needs --eps")
    keep = set(RELEVANT[cmd]) | EXECUTION_ONLY
    ordered = {k: cfg[k] for k in OPTIONS if k in cfg and k in keep and cfg[k] is not None}
    return ordered


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        table = HANDLERS[args.command](cfg)
        text = render(args.command, cfg, table, cfg.get("format", "csv"))
    except InputError as exc:
        print(f"orthospec: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NoTransition as exc:
        print(f"orthospec: no transition: {exc}", file=sys.stderr)
        return EXIT_NO_RESULT
    except SolverError as exc:
        print(f"orthospec: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OrthospecError as exc:
        print(f"orthospec: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = cfg.get("out")
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
