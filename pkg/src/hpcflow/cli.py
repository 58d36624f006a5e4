"""Command-line entry point: ``hpcflow run | preset-list | compare | convergence``.

Exit codes: 0 success, 1 configuration error, 2 simulation failure,
3 failed ``--assert`` check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import compare as cmp
from .discrete import LatticeConfig, init_discrete, run_discrete
from .errors import ConfigError, HpcflowError, SimulationError
from .export import read_field, write_json
from .hj import SolverGrid, build_problem, run_hj
from .scenarios import PRESET_SUMMARY, config_from_settings, load_config, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_ASSERT = 0, 1, 2, 3

log = logging.getLogger("hpcflow")


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _models(text):
    return tuple(sorted(text.replace(",", " ").split()))


# config key -> converter for the matching --flag
_OVERRIDES = {
    "eta": float,
    "beta": float,
    "r_star": float,
    "i_max": int,
    "k_max": int,
    "nx": int,
    "nz": int,
    "t_final": float,
    "snapshot_times": _floats,
    "models": _models,
    "flux_order": int,
    "lineout_x": _floats,
    "outdir": str,
}


def _add_scenario_flags(p):
    p.add_argument("--config", help="scenario file (key = value with [alpha]/[rho0]/[rho_bc] sections)")
    p.add_argument("--preset", help="built-in scenario name; see preset-list")
    for key in _OVERRIDES:
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, type=str, default=None, help=f"override {key}")


def _collect_overrides(args) -> dict:
    out, problems = {}, []
    for key, conv in _OVERRIDES.items():
        raw = getattr(args, key, None)
        if raw is None:
            continue
        try:
            out[key] = conv(raw)
        except ValueError:
            problems.append(f"--{key.replace('_', '-')}: cannot parse {raw!r}")
    if problems:
        raise ConfigError(problems)
    return out


def _resolve_config(args):
    overrides = _collect_overrides(args)
    if args.config and args.preset:
        raise ConfigError(["give either --config or --preset, not both"])
    if args.config:
        return load_config(Path(args.config), overrides)
    if args.preset:
        return config_from_settings({"scenario": args.preset, **overrides})
    raise ConfigError(["one of --config or --preset is required"])


def cmd_run(args) -> int:
    config = _resolve_config(args)
    manifest = run_scenario(config)
    print(f"wrote {len(manifest['files'])} files to {config.outdir}")
    for rep in manifest.get("reports", []):
        print(f"t={rep['t']:g}  L1={rep['l1']:.6g}  L2={rep['l2']:.6g}  Linf={rep['linf']:.6g}  "
              f"relative L1={rep['relative_l1']:.6g}")
    return EXIT_OK


def cmd_preset_list(args) -> int:
    width = max(len(k) for k in PRESET_SUMMARY)
    for name, text in PRESET_SUMMARY.items():
        print(f"{name:<{width}}  {text}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = read_field(args.field_a), read_field(args.field_b)
    diff, rep = cmp.diff_fields(a, b, "difference")
    ref = float(np.mean(np.abs(b.values)))
    result = rep.to_dict()
    result["relative_l1"] = rep.l1 / ref if ref > 0 else float("inf")
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    if args.output:
        write_json(args.output, result)
    if args.assert_max is not None:
        value = result[args.norm]
        if not value <= args.assert_max:
            print(f"FAIL: {args.norm} = {value:.6g} exceeds {args.assert_max:g}", file=sys.stderr)
            return EXIT_ASSERT
        print(f"PASS: {args.norm} = {value:.6g} <= {args.assert_max:g}")
    return EXIT_OK


def _parse_ladder(text):
    rungs = []
    for item in text.replace(",", " ").split():
        try:
            i, k = item.lower().split("x")
            rungs.append((int(i), int(k)))
        except ValueError:
            raise ConfigError([f"--ladder: expected IxK pairs such as 200x40, got {item!r}"]) from None
    if not rungs:
        raise ConfigError(["--ladder: at least one rung is needed"])
    return rungs


def cmd_convergence(args) -> int:
    config = _resolve_config(args)
    ladder = _parse_ladder(args.ladder)
    bad = [f"rung {i}x{k}: k_max/i_max differs from eta = {config.eta}"
           for i, k in ladder if abs(k - config.eta * i) > 1e-9 * k]
    if bad:
        raise ConfigError(bad)
    t = config.t_final
    grid = SolverGrid(config.nx, config.nz)
    params = config.model_params()

    def continuum():
        problem = build_problem(grid, params, config.alpha, config.rho0, config.rho_bc, flux_order=config.flux_order)
        fields, _ = run_hj(problem, t)
        return cmp.continuum_snapshot(fields[-1], grid), grid

    def discrete(i_max, k_max):
        lattice = LatticeConfig.from_rescaled((i_max,), k_max, config.r_star)
        state, problem = init_discrete(lattice, config.rho0, config.rho_bc, config.alpha, params)
        states, _ = run_discrete(state, problem, t)
        return states[-1], lattice

    reports = cmp.refinement_study(continuum, discrete, ladder, t)
    for rep in reports:
        print(f"{rep.meta['i_max']}x{rep.meta['k_max']}  L1={rep.l1:.6g}  L2={rep.l2:.6g}  "
              f"Linf={rep.linf:.6g}  relative L1={rep.meta['relative_l1']:.6g}")
    decreasing = cmp.trend_decreasing(reports)
    print("trend: " + ("decreasing" if decreasing else "NOT decreasing"))
    out = Path(config.outdir)
    write_json(out / "convergence.json", {"t": t, "reports": [r.to_dict() for r in reports], "decreasing": decreasing})
    if args.assert_trend and not decreasing:
        return EXIT_ASSERT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpcflow", description="Discrete and continuum models of data flow through a processor network")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write fields, line-outs and reports")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset-list", help="list the built-in scenarios")
    p.set_defaults(func=cmd_preset_list)

    p = sub.add_parser("compare", help="difference norms of two saved field files")
    p.add_argument("field_a")
    p.add_argument("field_b", help="reference field; relative L1 divides by its mean magnitude")
    p.add_argument("--norm", choices=("l1", "l2", "linf", "relative_l1"), default="relative_l1")
    p.add_argument("--assert", dest="assert_max", type=float, default=None, metavar="MAX",
                   help="exit with status 3 when the chosen norm exceeds MAX")
    p.add_argument("--output", help="also write the report as JSON here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("convergence", help="discrete runs on a ladder of lattices against one continuum reference")
    _add_scenario_flags(p)
    p.add_argument("--ladder", required=True, help="lattice sizes as IxK pairs, e.g. '200x40,500x100'")
    p.add_argument("--assert-trend", action="store_true", help="exit with status 3 unless the discrepancy decreases")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM
    except HpcflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
