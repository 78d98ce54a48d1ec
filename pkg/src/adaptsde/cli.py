"""Command-line front end: single runs, convergence sweeps, SVG plots.

Subcommands
-----------

``run``            one solve of a catalog problem, summary line to stdout,
                   optional trajectory and step-size CSVs.
``convergence``    Monte-Carlo strong-convergence sweep, CSV table out.
``plot``           render a convergence CSV as a log-log SVG (no external
                   renderer needed).
``list-problems``  catalog of benchmark problems.
``list-schemes``   catalog of integration schemes.

Exit codes: 0 ok, 2 bad arguments, 3 I/O failure, 4 malformed input file.
Sweep parallelism honors the ADAPTSDE_WORKERS environment variable
(default: all available cores).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Optional

import numpy as np

from .core import MeshConfig
from .harness import (
    ConvergenceTable,
    ExperimentConfig,
    default_h_grid,
    default_levels,
    default_schemes,
    read_table_csv,
    run_experiment,
    write_table_csv,
)
from .problems import PROBLEM_NAMES, gl_truncation_functions, problem_by_name
from .schemes import solve
from .wiener import WienerPath

#: CLI spelling -> internal scheme id.
CLI_SCHEMES = {
    "adaptive-si": "adaptive_semi_implicit",
    "adaptive-explicit": "adaptive_explicit",
    "drift-implicit": "drift_implicit",
    "balanced": "balanced",
    "increment-tamed": "increment_tamed",
    "fully-tamed": "fully_tamed",
    "truncated": "truncated",
    "explicit-euler": "explicit_euler",
}
_SCHEME_TO_CLI = {v: k for k, v in CLI_SCHEMES.items()}

PROBLEM_BLURBS = {
    "gbm": "scalar geometric Brownian motion, r=-8, sigma=3 (stiff, linear)",
    "fhn05": "FitzHugh-Nagumo neuron, epsilon=0.5 (mild timescale separation)",
    "fhn01": "FitzHugh-Nagumo neuron, epsilon=0.1 (fast excitation variable)",
    "gl": "scalar Ginzburg-Landau with cubic drift and multiplicative noise",
    "svol": "2-D 3/2 stochastic volatility model (superlinear drift and noise)",
    "spde": "finite-difference reaction-diffusion system, 100 interior nodes",
}

SCHEME_BLURBS = {
    "adaptive-si": "adaptive semi-implicit Euler-Maruyama with balanced backstop",
    "adaptive-explicit": "adaptive explicit Euler-Maruyama with balanced backstop",
    "drift-implicit": "fixed-step drift-implicit Euler (Newton per step)",
    "balanced": "fixed-step balanced method",
    "increment-tamed": "fixed-step increment-tamed Euler",
    "fully-tamed": "fixed-step fully tamed Euler (beta=1/2)",
    "truncated": "fixed-step truncated Euler (Ginzburg-Landau only)",
    "explicit-euler": "fixed-step explicit Euler-Maruyama (no stabilization)",
}


def _fail(message: str, code: int) -> int:
    sys.stderr.write(f"error: {message}\n")
    return code


def _resolve_scheme(name: str) -> str:
    if name not in CLI_SCHEMES:
        candidates = ", ".join(sorted(CLI_SCHEMES))
        raise ValueError(f"unknown scheme {name!r}; candidates: {candidates}")
    return CLI_SCHEMES[name]


def _workers() -> int:
    env = os.environ.get("ADAPTSDE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# -- run ----------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    try:
        problem = problem_by_name(args.problem)
        scheme = _resolve_scheme(args.scheme)
        kwargs = {}
        if scheme in ("adaptive_semi_implicit", "adaptive_explicit"):
            kwargs["config"] = MeshConfig(h_max=args.hmax, rho=args.rho)
        else:
            kwargs["h"] = args.hmax
        if scheme == "truncated":
            if args.problem != "gl":
                raise ValueError("the truncated scheme is only wired up for the 'gl' problem")
            kwargs["mu_inv"], kwargs["H"] = gl_truncation_functions()
    except ValueError as exc:
        return _fail(str(exc), 2)

    path = WienerPath(problem.m, seed=args.seed)
    want_traj = args.trajectory_out is not None
    result = solve(problem, scheme, path, record_trajectory=want_traj, **kwargs)

    terminal = ",".join(repr(float(v)) for v in np.atleast_1d(result.y_terminal))
    print(
        f"problem={args.problem} scheme={args.scheme} hmax={args.hmax!r} "
        f"rho={args.rho!r} seed={args.seed} steps={result.n_steps} "
        f"mean_h={result.mean_h!r} backstops={result.n_backstop} "
        f"diverged={result.diverged} terminal=[{terminal}]"
    )

    try:
        if args.trajectory_out is not None:
            with open(args.trajectory_out, "w") as fh:
                cols = ",".join(f"y_{i + 1}" for i in range(problem.d))
                fh.write(f"t,{cols}\n")
                for t, state in result.trajectory:
                    row = ",".join(repr(float(v)) for v in state)
                    fh.write(f"{t!r},{row}\n")
        if args.stepsize_out is not None:
            with open(args.stepsize_out, "w") as fh:
                fh.write("t,h\n")
                for rec in result.mesh:
                    fh.write(f"{rec.t_start!r},{rec.h!r}\n")
    except OSError as exc:
        return _fail(f"cannot write output: {exc}", 3)
    return 0


# -- convergence ---------------------------------------------------------------


def _read_config_file(path: str) -> dict[str, str]:
    opts: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            opts[key.strip()] = value.strip()
    return opts


def cmd_convergence(args: argparse.Namespace) -> int:
    cfgfile: dict[str, str] = {}
    if args.config is not None:
        try:
            cfgfile = _read_config_file(args.config)
        except OSError as exc:
            return _fail(f"cannot read config file: {exc}", 3)
        except ValueError as exc:
            return _fail(str(exc), 4)

    def pick(flag_value, key: str, default, convert):
        if flag_value is not None:
            return flag_value
        if key in cfgfile:
            return convert(cfgfile[key])
        return default

    try:
        problem = pick(args.problem, "problem", None, str)
        if problem is None:
            raise ValueError("a problem name is required (flag --problem or config file)")
        problem_by_name(problem)  # validates, raising with candidates

        schemes_raw = pick(args.schemes, "schemes", None, str)
        if schemes_raw is None:
            schemes = default_schemes(problem)
        else:
            schemes = tuple(_resolve_scheme(s.strip()) for s in schemes_raw.split(",") if s.strip())
        hmax_raw = pick(args.hmax_list, "hmax-list", None, str)
        if hmax_raw is None:
            h_list = default_h_grid(problem)
        else:
            h_list = tuple(float(x) for x in hmax_raw.split(",") if x.strip())
        samples = pick(args.samples, "samples", 100, int)
        seed = pick(args.seed, "seed", 0, int)
        rho = pick(args.rho, "rho", 100.0, float)
        levels = pick(args.refine, "refine", default_levels(problem), int)
        out = pick(args.out, "out", None, str)

        config = ExperimentConfig(
            problem=problem,
            schemes=schemes,
            h_max_list=h_list,
            rho=rho,
            samples=samples,
            levels=levels,
            master_seed=seed,
        )
    except ValueError as exc:
        return _fail(str(exc), 2)

    table = run_experiment(config, workers=_workers())

    try:
        if out is not None:
            with open(out, "w") as fh:
                write_table_csv(table, fh)
            slope_stream = sys.stdout
        else:
            write_table_csv(table, sys.stdout)
            slope_stream = sys.stderr
    except OSError as exc:
        return _fail(f"cannot write output: {exc}", 3)

    for scheme, fit in table.slopes.items():
        cli_name = _SCHEME_TO_CLI.get(scheme, scheme)
        if fit.ok and math.isfinite(fit.slope):
            slope_stream.write(
                f"{cli_name}: order {fit.slope:.3f} (R^2 {fit.r_squared:.3f})\n"
            )
        else:
            slope_stream.write(f"{cli_name}: insufficient data for an order fit\n")
    return 0


# -- plot -----------------------------------------------------------------------

_PALETTE = (
    "#1965b0",
    "#dc050c",
    "#4eb265",
    "#f7a600",
    "#882e72",
    "#7bafde",
    "#e8601c",
    "#777777",
)

_W, _H = 720, 480
_BOX = (70.0, 30.0, 520.0, 420.0)  # left, top, right, bottom


def _render_svg(table: ConvergenceTable, x_mode: str) -> str:
    left, top, right, bottom = _BOX

    series: dict[str, list[tuple[float, float]]] = {}
    for row in table.rows:
        x = row.h_max if x_mode == "hmax" else row.mean_cputime_s
        y = row.rmse
        if math.isfinite(x) and x > 0 and math.isfinite(y) and y > 0:
            series.setdefault(row.scheme, []).append((x, y))
    series = {k: sorted(v) for k, v in series.items() if v}

    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    if xs:
        lx0, lx1 = math.log10(min(xs)), math.log10(max(xs))
        ly0, ly1 = math.log10(min(ys)), math.log10(max(ys))
    else:
        lx0, lx1, ly0, ly1 = -4.0, 0.0, -4.0, 0.0
    if lx1 - lx0 < 1e-9:
        lx0, lx1 = lx0 - 0.5, lx1 + 0.5
    if ly1 - ly0 < 1e-9:
        ly0, ly1 = ly0 - 0.5, ly1 + 0.5
    pad_x, pad_y = 0.08 * (lx1 - lx0), 0.08 * (ly1 - ly0)
    lx0, lx1 = lx0 - pad_x, lx1 + pad_x
    ly0, ly1 = ly0 - pad_y, ly1 + pad_y

    def sx(lx: float) -> float:
        return left + (lx - lx0) / (lx1 - lx0) * (right - left)

    def sy(ly: float) -> float:
        return bottom - (ly - ly0) / (ly1 - ly0) * (bottom - top)

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">'
    )
    out.append(
        "<style>text{font-family:Helvetica,Arial,sans-serif;font-size:12px;fill:#222}"
        ".tick{stroke:#ccc;stroke-width:1}.frame{fill:none;stroke:#444}"
        ".guide{stroke:#999;stroke-width:1;stroke-dasharray:6 4;fill:none}"
        ".line{fill:none;stroke-width:1.8}</style>"
    )
    out.append(f'<rect class="frame" x="{left}" y="{top}" width="{right - left}" height="{bottom - top}"/>')

    # Decade grid lines with labels; fall back to endpoint labels if the
    # range contains no integer decade.
    x_ticks = [k for k in range(math.ceil(lx0), math.floor(lx1) + 1)]
    y_ticks = [k for k in range(math.ceil(ly0), math.floor(ly1) + 1)]
    for k in x_ticks:
        px = sx(k)
        out.append(f'<line class="tick" x1="{px:.3f}" y1="{top}" x2="{px:.3f}" y2="{bottom}"/>')
        out.append(f'<text x="{px:.3f}" y="{bottom + 16}" text-anchor="middle">1e{k}</text>')
    if not x_ticks:
        out.append(f'<text x="{left}" y="{bottom + 16}" text-anchor="middle">{10 ** lx0:.2g}</text>')
        out.append(f'<text x="{right}" y="{bottom + 16}" text-anchor="middle">{10 ** lx1:.2g}</text>')
    for k in y_ticks:
        py = sy(k)
        out.append(f'<line class="tick" x1="{left}" y1="{py:.3f}" x2="{right}" y2="{py:.3f}"/>')
        out.append(f'<text x="{left - 6}" y="{py + 4:.3f}" text-anchor="end">1e{k}</text>')
    if not y_ticks:
        out.append(f'<text x="{left - 6}" y="{bottom}" text-anchor="end">{10 ** ly0:.2g}</text>')
        out.append(f'<text x="{left - 6}" y="{top + 10}" text-anchor="end">{10 ** ly1:.2g}</text>')

    # Order guide lines through the lower-left corner of the data box.
    for slope, cls, label in ((1.0, "slope-1", "slope 1"), (0.5, "slope-05", "slope 1/2")):
        gx1 = min(lx1, lx0 + (ly1 - ly0) / slope)
        gy1 = ly0 + slope * (gx1 - lx0)
        out.append(
            f'<path class="guide {cls}" d="M {sx(lx0):.3f} {sy(ly0):.3f} '
            f'L {sx(gx1):.3f} {sy(gy1):.3f}"/>'
        )
        out.append(
            f'<text x="{sx(gx1) + 4:.3f}" y="{sy(gy1):.3f}" fill="#999">{label}</text>'
        )

    legend_y = top + 10
    for i, (scheme, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        coords = [(sx(math.log10(x)), sy(math.log10(y))) for x, y in pts]
        d = "M " + " L ".join(f"{px:.3f} {py:.3f}" for px, py in coords)
        out.append(f'<path class="line s-{scheme}" stroke="{color}" d="{d}"/>')
        for px, py in coords:
            out.append(
                f'<circle class="pt s-{scheme}" cx="{px:.3f}" cy="{py:.3f}" r="3.2" '
                f'fill="{color}"/>'
            )
        label = _SCHEME_TO_CLI.get(scheme, scheme)
        fit = table.slopes.get(scheme)
        if fit is not None and fit.ok and math.isfinite(fit.slope) and x_mode == "hmax":
            label += f" (slope {fit.slope:.2f})"
        out.append(
            f'<line x1="{right + 14}" y1="{legend_y:.3f}" x2="{right + 38}" '
            f'y2="{legend_y:.3f}" stroke="{color}" stroke-width="1.8"/>'
        )
        out.append(f'<circle cx="{right + 26}" cy="{legend_y:.3f}" r="3.2" fill="{color}"/>')
        out.append(f'<text x="{right + 44}" y="{legend_y + 4:.3f}">{label}</text>')
        legend_y += 18

    x_label = "h_max" if x_mode == "hmax" else "mean cputime (s)"
    title = f"{table.problem}: RMSE vs {x_label}" if table.problem else f"RMSE vs {x_label}"
    out.append(f'<text x="{(left + right) / 2}" y="{bottom + 36}" text-anchor="middle">{x_label}</text>')
    out.append(
        f'<text x="16" y="{(top + bottom) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(top + bottom) / 2})">RMSE</text>'
    )
    out.append(f'<text x="{(left + right) / 2}" y="{top - 10}" text-anchor="middle">{title}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_plot(args: argparse.Namespace) -> int:
    try:
        with open(args.infile) as fh:
            table = read_table_csv(fh)
    except OSError as exc:
        return _fail(f"cannot read input: {exc}", 3)
    except ValueError as exc:
        return _fail(f"malformed CSV: {exc}", 4)

    svg = _render_svg(table, args.x)
    try:
        with open(args.out, "w") as fh:
            fh.write(svg)
    except OSError as exc:
        return _fail(f"cannot write output: {exc}", 3)
    return 0


# -- listings -------------------------------------------------------------------


def cmd_list_problems(_args: argparse.Namespace) -> int:
    for name in PROBLEM_NAMES:
        print(f"{name:8s} {PROBLEM_BLURBS[name]}")
    return 0


def cmd_list_schemes(_args: argparse.Namespace) -> int:
    for name in CLI_SCHEMES:
        print(f"{name:18s} {SCHEME_BLURBS[name]}")
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptsde",
        description="Adaptive and stabilized Euler-Maruyama SDE integration benchmarks.",
        epilog="Worker count for sweeps comes from ADAPTSDE_WORKERS (default: all cores).",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_run = sub.add_parser("run", help="integrate one sample path of a catalog problem")
    p_run.add_argument("--problem", required=True, help="problem name (see list-problems)")
    p_run.add_argument("--scheme", required=True, help="scheme name (see list-schemes)")
    p_run.add_argument(
        "--hmax", type=float, default=0.25,
        help="max adaptive step, or the uniform step for fixed-step schemes (default 0.25)",
    )
    p_run.add_argument("--rho", type=float, default=100.0, help="h_max/h_min ratio (default 100)")
    p_run.add_argument("--seed", type=int, default=0, help="path seed (default 0)")
    p_run.add_argument("--trajectory-out", help="write the trajectory CSV t,y_1,...,y_d here")
    p_run.add_argument("--stepsize-out", help="write the step-size CSV t,h here")
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("convergence", help="Monte-Carlo strong-convergence sweep")
    p_conv.add_argument("--problem", help="problem name")
    p_conv.add_argument("--schemes", help="comma-separated scheme names (default: per-problem set)")
    p_conv.add_argument("--hmax-list", help="comma-separated h_max grid (default: per-problem grid)")
    p_conv.add_argument("--samples", type=int, help="Monte-Carlo sample count (default 100)")
    p_conv.add_argument("--seed", type=int, help="master seed (default 0)")
    p_conv.add_argument("--rho", type=float, help="h_max/h_min ratio (default 100)")
    p_conv.add_argument(
        "--refine", type=int,
        help="bridge refinement levels for the reference (default 6; 4 for spde)",
    )
    p_conv.add_argument("--out", help="CSV output path (default: stdout)")
    p_conv.add_argument("--config", help="key=value config file; flags override it")
    p_conv.set_defaults(func=cmd_convergence)

    p_plot = sub.add_parser("plot", help="render a convergence CSV as a log-log SVG")
    p_plot.add_argument("--in", dest="infile", required=True, help="convergence CSV path")
    p_plot.add_argument(
        "--x", choices=("hmax", "cputime"), default="hmax",
        help="x axis: hmax (convergence) or cputime (efficiency); default hmax",
    )
    p_plot.add_argument("--out", required=True, help="SVG output path")
    p_plot.set_defaults(func=cmd_plot)

    sub.add_parser("list-problems", help="list catalog problems").set_defaults(
        func=cmd_list_problems
    )
    sub.add_parser("list-schemes", help="list integration schemes").set_defaults(
        func=cmd_list_schemes
    )
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
