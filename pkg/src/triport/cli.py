"""``triport`` command line.

Subcommands: ``tritter-check``, ``grid`` (alias ``phasespace-grid``),
``simulate`` and ``converge``.  Settings come from defaults, then an optional
``--config`` JSON file, then explicit flags.  Exit status is 0 on success, 1
for invalid input or a failed check and 2 when a result would miss its
accuracy bound.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import detection as det
from . import io
from .errors import AccuracyError, AccuracyWarning, ConstructionError, InvalidArgument, UnsupportedParameter
from .fock import StateSpec, make_state
from .phasespace import GridSpec, eval_grid, k_sp_convolution, k_sp_trace, q_function, wigner
from .tritter import (
    CouplerMatrix,
    decompose_tritter,
    ft_identity_residual,
    ft_photocurrent_closed_form,
    ft_photocurrent_operators,
    tritter_matrix,
)

CHECK_TOL = 1e-12
THREADS_ENV = "TRIPORT_THREADS"

GRID_DEFAULTS = {
    "signal": "coherent:1",
    "probe": "vacuum",
    "window": [-2.0, 4.0, -3.0, 3.0],
    "nx": 61,
    "ny": 61,
    "cutoff": 80,
    "route": "trace",
}
CONVERGE_DEFAULTS = {
    "z_values": [3.0, 6.0, 12.0],
    "signal": "coherent:1",
    "probe": "vacuum",
    "cutoff_sp": 30,
    "bin_width": 1 / 3,
    "half_width": 5.0,
}


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _settings(args, defaults: dict, keys) -> dict:
    out = dict(defaults)
    if args.config:
        data = json.loads(Path(args.config).read_text())
        if isinstance(data, dict) and isinstance(data.get("config"), dict):
            data = data["config"]  # a report produced by this tool
        if not isinstance(data, dict):
            raise InvalidArgument("config file must hold a JSON object")
        unknown = set(data) - set(defaults)
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        out.update(data)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _threads(args) -> int:
    n = args.threads if args.threads is not None else int(os.environ.get(THREADS_ENV, "1"))
    if n < 1:
        raise InvalidArgument("thread count must be at least 1")
    return n


def _emit(text: str, out: str | None):
    if out:
        io.atomic_write(out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# tritter-check
# ---------------------------------------------------------------------------

def _ft_operator_residual(cutoff: int = 8) -> float:
    """FT identity checked on explicit three-mode operators."""
    lhs = ft_photocurrent_operators(cutoff)
    rhs = ft_photocurrent_closed_form(cutoff)
    return max(float(abs(a - b).max()) for a, b in zip(lhs, rhs))


def cmd_tritter_check(args) -> int:
    coupler = tritter_matrix()
    if args.perturb:
        t = coupler.t.copy()
        t[0, 0] += args.perturb
        coupler = CouplerMatrix(t)
    try:
        dec_res = decompose_tritter().residual(coupler)
    except ConstructionError as exc:
        print(f"decomposition failed: {exc}", file=sys.stderr)
        dec_res = float("inf")
    residuals = {
        "unitarity": coupler.unitarity_residual(),
        "moduli": coupler.moduli_residual(),
        "ft_identity": max(ft_identity_residual(coupler), _ft_operator_residual() if not args.perturb else 0.0),
        "decomposition": dec_res,
    }
    report = {k: {"residual": v, "passed": bool(v <= CHECK_TOL)} for k, v in residuals.items()}
    ok = all(r["passed"] for r in report.values())
    for k, r in report.items():
        print(f"{k:14s} residual {r['residual']:.3e}  {'ok' if r['passed'] else 'FAIL'}", file=sys.stderr)
    report["tolerance"] = CHECK_TOL
    report["passed"] = ok
    if not np.isfinite(dec_res):
        report["decomposition"]["residual"] = None
    _emit(io.dumps_json(report), args.out)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def _grid_spec(cfg: dict) -> GridSpec:
    w = [float(v) for v in cfg["window"]]
    if len(w) != 4:
        raise InvalidArgument("window needs x_min,x_max,y_min,y_max")
    return GridSpec(w[0], w[1], w[2], w[3], int(cfg["nx"]), int(cfg["ny"]))


def cmd_grid(args) -> int:
    cfg = _settings(args, GRID_DEFAULTS, ["signal", "probe", "window", "nx", "ny", "cutoff", "route"])
    spec = _grid_spec(cfg)
    cutoff = int(cfg["cutoff"])
    rho_s = make_state(StateSpec.parse(cfg["signal"]), cutoff)
    probe = cfg["probe"].strip().lower()
    if probe == "wigner":
        f = lambda a: wigner(rho_s, a)
    elif probe == "q":
        f = lambda a: q_function(rho_s, a)
    else:
        rho_p = make_state(StateSpec.parse(cfg["probe"]), cutoff)
        if cfg["route"] == "trace":
            f = lambda a: k_sp_trace(rho_s, rho_p, a)
        elif cfg["route"] == "convolution":
            f = lambda a: k_sp_convolution(rho_s, rho_p, a)
        else:
            raise InvalidArgument(f"unknown route {cfg['route']!r}")
    grid = eval_grid(f, spec, "alpha_plane")
    fmt_name = args.format or "csv"
    if fmt_name == "ppm" and not args.out:
        raise InvalidArgument("ppm output needs --out")
    if args.out:
        io.write_grid(grid, args.out, fmt_name)
    else:
        sys.stdout.write(io.grid_to_csv(grid) if fmt_name == "csv" else io.grid_to_json(grid))
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

SIM_KEYS = ["z_mag", "signal", "probe", "cutoff_sp", "count_cutoff", "n_samples", "seed", "bin_width", "half_width"]


def _sim_defaults() -> dict:
    return {
        "z_mag": 12.0,
        "signal": "coherent:1",
        "probe": "vacuum",
        "cutoff_sp": 30,
        "count_cutoff": None,
        "n_samples": 100_000,
        "seed": 1,
        "bins": None,
        "bin_width": 1 / 3,
        "half_width": 5.0,
    }


def run_simulation(cfg: det.SimConfig, threads: int = 1):
    """Sample, histogram and compare; returns (empirical, reference, report)."""
    dist = det.output_count_distribution(cfg)
    samples = det.sample_outcomes(dist, cfg, threads)
    bins = cfg.grid()
    emp, clipped = det.empirical_density(samples, bins)
    ref = det.reference_density(
        make_state(cfg.signal, cfg.cutoff_sp), make_state(cfg.probe, cfg.cutoff_sp), bins, cell_average=True
    )
    cmp = det.compare_densities(emp, ref)
    report = {
        "l1": cmp["l1"],
        "max_abs": cmp["max_abs"],
        "n_samples": cfg.n_samples,
        "z_mag": cfg.z_mag,
        "seed": cfg.seed,
        "mass_deficit": dist.mass_deficit,
        "clipped_fraction": clipped,
        "config": cfg.to_dict(),
    }
    return emp, ref, report


def cmd_simulate(args) -> int:
    settings = _settings(args, _sim_defaults(), SIM_KEYS)
    cfg = det.SimConfig.from_dict(settings)
    threads = _threads(args)
    if not args.out:
        raise InvalidArgument("simulate needs --out <directory>")
    emp, ref, report = run_simulation(cfg, threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fmt_name = args.format or "csv"
    io.write_grid(emp, out / f"empirical.{fmt_name}", fmt_name)
    io.write_grid(ref, out / f"reference.{fmt_name}", fmt_name)
    text = io.dumps_json(report)
    io.atomic_write(out / "report.json", text)
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------

def cmd_converge(args) -> int:
    cfg = _settings(args, CONVERGE_DEFAULTS, ["z_values", "signal", "probe", "cutoff_sp", "bin_width", "half_width"])
    result = det.convergence_study(
        StateSpec.parse(cfg["signal"]),
        StateSpec.parse(cfg["probe"]),
        cfg["z_values"],
        cutoff_sp=int(cfg["cutoff_sp"]),
        bin_width=float(cfg["bin_width"]),
        half_width=float(cfg["half_width"]),
    )
    lines = [f"# slope={io.fmt(result['slope'])}", "z_mag,l1"]
    lines += [f"{io.fmt(r['z_mag'])},{io.fmt(r['l1'])}" for r in result["rows"]]
    _emit("\n".join(lines) + "\n", args.out)
    if args.report:
        io.atomic_write(args.report, io.dumps_json({"config": cfg, **result}))
    print(f"slope {result['slope']:.4f}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with settings; flags override it")
    common.add_argument("--out", help="output path")
    common.add_argument("--format", choices=["csv", "json", "ppm"])
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")

    p = argparse.ArgumentParser(prog="triport", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("tritter-check", parents=[common], help="verify the coupler matrix and its decomposition")
    s.add_argument("--perturb", type=float, default=0.0, help="add this to T[1,1] before checking (testing aid)")
    s.set_defaults(func=cmd_tritter_check)

    s = sub.add_parser("grid", aliases=["phasespace-grid"], parents=[common], help="tabulate a phase-space density")
    s.add_argument("--signal")
    s.add_argument("--probe", help="probe state, or 'wigner' / 'q' for the signal's own function")
    s.add_argument("--window", type=_floats, help="x_min,x_max,y_min,y_max")
    s.add_argument("--nx", type=int)
    s.add_argument("--ny", type=int)
    s.add_argument("--cutoff", type=int)
    s.add_argument("--route", choices=["trace", "convolution"])
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("simulate", parents=[common], help="sample the detector and compare with the limit density")
    s.add_argument("--z-mag", dest="z_mag", type=float)
    s.add_argument("--signal")
    s.add_argument("--probe")
    s.add_argument("--cutoff-sp", dest="cutoff_sp", type=int)
    s.add_argument("--count-cutoff", dest="count_cutoff", type=int)
    s.add_argument("--samples", dest="n_samples", type=int)
    s.add_argument("--bin-width", dest="bin_width", type=float)
    s.add_argument("--half-width", dest="half_width", type=float)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("converge", parents=[common], help="l1 distance to the limit density against |z|")
    s.add_argument("--z", dest="z_values", type=_floats, help="comma-separated |z| values")
    s.add_argument("--signal")
    s.add_argument("--probe")
    s.add_argument("--cutoff-sp", dest="cutoff_sp", type=int)
    s.add_argument("--bin-width", dest="bin_width", type=float)
    s.add_argument("--half-width", dest="half_width", type=float)
    s.add_argument("--report", help="also write rows, slope and settings as JSON")
    s.set_defaults(func=cmd_converge)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always", AccuracyWarning)
            return args.func(args)
    except AccuracyError as exc:
        print(f"triport: accuracy error: {exc}", file=sys.stderr)
        return 2
    except (InvalidArgument, UnsupportedParameter, ConstructionError, OSError, ValueError, TypeError) as exc:
        print(f"triport: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
