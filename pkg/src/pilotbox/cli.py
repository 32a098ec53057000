"""Command-line front end: every experiment as a subcommand with a seeded,
machine-readable output file.

Exit codes: 0 success, 2 configuration problem, 3 runtime experiment
failure.  Output files embed the complete effective configuration in their
header, so re-running with the same flags reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import defaults, experiments
from .dynamics import (
    IntegrationFailureError,
    IntegratorConfig,
    PropagationError,
    _advance_batch,
)
from .spectral import (
    BOX_HALF_WIDTH,
    ConfigurationError,
    DomainError,
    _density_grid,
    build_singlet_state,
    correlation_analytic,
    operator_correlation,
    project_half,
)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path, config: dict, columns, rows):
    lines = ["# config: " + json.dumps(config, sort_keys=True)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path, config: dict, columns, rows, summary=None):
    records = [dict(zip(columns, row)) for row in rows]
    payload = {"config": config, "records": records}
    if summary is not None:
        payload["summary"] = summary
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _integrator_config(args) -> IntegratorConfig:
    return IntegratorConfig(rel_tol=args.rel_tol, abs_tol=args.abs_tol)


# ---------------------------------------------------------------------------
# correlation

def cmd_correlation(args) -> int:
    if args.walkers < 1:
        raise ConfigurationError("walkers must be >= 1")
    config = {
        "command": "correlation", "s": args.s, "t": args.t,
        "walkers": args.walkers, "seed": args.seed, "basis_size": args.basis_size,
        "rel_tol": args.rel_tol, "abs_tol": args.abs_tol, "format": args.format,
    }
    proto = experiments.TwoTimeProtocol(s=args.s, t=args.t,
                                        walkers=args.walkers, seed=args.seed)
    est = experiments.run_two_time_measurement(proto, _integrator_config(args))
    analytic = correlation_analytic(args.s, args.t)
    operator = operator_correlation(build_singlet_state(2), args.s, args.t,
                                    args.basis_size)
    columns = ["s", "t", "walkers", "seed", "analytic", "operator",
               "estimate", "stderr"]
    rows = [(args.s, args.t, args.walkers, args.seed, analytic, operator,
             est.value, est.stderr)]
    if args.format == "json":
        _write_json(args.out, config, columns, rows)
    else:
        _write_csv(args.out, config, columns, rows)
    return 0


# ---------------------------------------------------------------------------
# figures

def _fig1_rows(grid: int):
    state = build_singlet_state(2)
    xs, dens = _density_grid(state, grid)
    rows = []
    for i, x1 in enumerate(xs):
        for j, x2 in enumerate(xs):
            rows.append((float(x1), float(x2), float(dens[i, j])))
    return rows


def _fig2_rows(times, grid: int, N: int):
    sheets = {
        "plus": experiments.conditional_density_grid(+1, times, grid, N),
        "minus": experiments.conditional_density_grid(-1, times, grid, N),
    }
    rows = []
    for name in ("plus", "minus", "mixture"):
        source = sheets["plus"].mixture if name == "mixture" else sheets[name].densities
        x2 = sheets["plus"].x2
        for i, t in enumerate(times):
            for j, x in enumerate(x2):
                rows.append((name, float(t), float(x), float(source[i, j])))
    return rows


def _median_from_cdf(grid, dens, q):
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))])
    cdf /= cdf[-1]
    return float(np.interp(q, cdf, grid))


def _fig3_rows(side: int, count: int, horizon: float, samples: int, N: int,
               cfg: IntegratorConfig):
    """Trajectory fan of the free coordinate after a half-box measurement.

    Launch convention: the measured coordinate sits at the conditional median
    of its side, launch positions are equally spaced quantiles of the
    post-measurement free-coordinate density at the collapse instant.
    """
    grid = np.linspace(-BOX_HALF_WIDTH, BOX_HALF_WIDTH, 4097)
    state = build_singlet_state(2)
    marg1 = (np.cos(grid) ** 2 + np.sin(2 * grid) ** 2) / math.pi
    mask = grid >= 0 if side > 0 else grid <= 0
    u_med = _median_from_cdf(grid[mask], marg1[mask], 0.5)

    dens2 = experiments._collapsed_axis2_density(side, [0.0], grid, max(N, 2))[0]
    qs = (np.arange(count) + 0.5) / count
    x0 = np.array([_median_from_cdf(grid, dens2, q) for q in qs])

    c1, c2 = experiments._conditional_coefficients(np.full(count, u_med))
    fieldfn = experiments._branch_field(c1, c2, cfg.node_floor)
    times = np.linspace(0.0, horizon, samples)
    paths = np.empty((samples, count))
    paths[0] = x0
    y = x0[:, None].copy()
    for i in range(1, samples):
        y, info = _advance_batch(fieldfn, y, times[i - 1], times[i], cfg)
        if info.failed.any():
            raise PropagationError("figure trajectory failed to integrate")
        paths[i] = y[:, 0]
    rows = []
    for k in range(count):
        for i, t in enumerate(times):
            rows.append((k, float(t), float(paths[i, k])))
    return rows


def cmd_figures(args) -> int:
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    out = os.path.join(args.out_dir, f"fig{args.which}.csv")
    cfg = _integrator_config(args)
    config = {
        "command": "figures", "which": args.which, "grid": args.grid,
        "basis_size": args.basis_size, "times": args.times,
        "trajectories": args.trajectories, "horizon": args.horizon,
        "side": args.side, "rel_tol": args.rel_tol, "abs_tol": args.abs_tol,
    }
    if args.which == 1:
        _write_csv(out, config, ["x1", "x2", "density"], _fig1_rows(args.grid))
    elif args.which == 2:
        times = np.linspace(0.0, args.horizon, args.times)
        _write_csv(out, config, ["panel", "t", "x2", "density"],
                   _fig2_rows(times, args.grid, args.basis_size))
    elif args.which == 3:
        side = +1 if args.side == "plus" else -1
        _write_csv(out, config, ["trajectory", "t", "x2"],
                   _fig3_rows(side, args.trajectories, args.horizon,
                              args.times, args.basis_size, cfg))
    else:
        raise ConfigurationError(f"unknown figure id {args.which}")
    return 0


# ---------------------------------------------------------------------------
# signal

def cmd_signal(args) -> int:
    if not args.bits or any(b not in "01" for b in args.bits):
        raise ConfigurationError("bits must be a nonempty string over {0,1}")
    if args.walkers < 1 or args.trials < 1:
        raise ConfigurationError("walkers and trials must be >= 1")
    lam = experiments.resolve_lambda(args.lambda_id)
    cfg = _integrator_config(args)
    config = {
        "command": "signal", "lambda": lam.lambda_id, "bits": args.bits,
        "read_time": args.read_time, "walkers": args.walkers,
        "trials": args.trials, "seed": args.seed, "alpha": args.alpha,
        "rel_tol": args.rel_tol, "abs_tol": args.abs_tol, "format": args.format,
    }
    rng = np.random.Generator(np.random.Philox(args.seed))
    seeds = rng.integers(0, 2**62, size=(args.trials, 2))
    columns = ["trial", "probe_bit", "ks_statistic", "p_value", "detected"]
    rows = []
    detected = {0: [], 1: []}
    for i in range(args.trials):
        probe_bit = int(args.bits[i % len(args.bits)])
        run0 = experiments.run_signalling_protocol(
            lam, 0, args.read_time, args.walkers, int(seeds[i, 0]), cfg)
        probe = experiments.run_signalling_protocol(
            lam, probe_bit, args.read_time, args.walkers, int(seeds[i, 1]), cfg)
        rep = experiments.detect_bit(run0, probe, args.alpha)
        hit = int(rep.decision == "detected")
        detected[probe_bit].append(hit)
        rows.append((i, probe_bit, rep.ks_statistic, rep.p_value, hit))
    summary = {
        "detection_rate": float(np.mean([r[4] for r in rows])),
        "power_bit1": float(np.mean(detected[1])) if detected[1] else float("nan"),
        "level_bit0": float(np.mean(detected[0])) if detected[0] else float("nan"),
    }
    if args.format == "json":
        _write_json(args.out, config, columns, rows, summary=summary)
    else:
        _write_csv(args.out, config, columns, rows)
        with open(args.out, "a", newline="\n") as fh:
            fh.write("# summary: " + json.dumps(summary, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser

def _add_integrator_flags(p):
    p.add_argument("--rel-tol", type=float, default=defaults.REL_TOL)
    p.add_argument("--abs-tol", type=float, default=defaults.ABS_TOL)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pilotbox",
        description="Seeded experiments on a guided particle in a 2D box")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("correlation", help="two-time sign correlation")
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--walkers", type=int, default=defaults.WALKERS)
    p.add_argument("--seed", type=int, default=defaults.SEED)
    p.add_argument("--basis-size", type=int, default=defaults.BASIS_SIZE)
    p.add_argument("--out", default="correlation.csv")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_integrator_flags(p)
    p.set_defaults(func=cmd_correlation)

    p = sub.add_parser("figures", help="emit figure data files")
    p.add_argument("which", type=int, help="figure id: 1, 2 or 3")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--grid", type=int, default=161)
    p.add_argument("--times", type=int, default=49,
                   help="time samples (figure 2 sheets / figure 3 paths)")
    p.add_argument("--horizon", type=float, default=2 * math.pi)
    p.add_argument("--trajectories", type=int, default=12)
    p.add_argument("--side", choices=("plus", "minus"), default="minus")
    p.add_argument("--basis-size", type=int, default=defaults.BASIS_SIZE)
    _add_integrator_flags(p)
    p.set_defaults(func=cmd_figures)

    p = sub.add_parser("signal", help="one-bit transmission trials")
    p.add_argument("--lambda", dest="lambda_id", default="const",
                   help="receiver knowledge: const | sin")
    p.add_argument("--bits", default="1")
    p.add_argument("--read-time", type=float, default=defaults.READ_TIME)
    p.add_argument("--walkers", type=int, default=defaults.WALKERS)
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--seed", type=int, default=defaults.SEED)
    p.add_argument("--alpha", type=float, default=defaults.ALPHA)
    p.add_argument("--out", default="signal.csv")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    _add_integrator_flags(p)
    p.set_defaults(func=cmd_signal)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, ValueError) as exc:
        print(f"pilotbox: configuration error: {exc}", file=sys.stderr)
        return 2
    except (experiments.ExperimentError, PropagationError,
            IntegrationFailureError) as exc:
        print(f"pilotbox: experiment failed: {exc}", file=sys.stderr)
        return 3


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
