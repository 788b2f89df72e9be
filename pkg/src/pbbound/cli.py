"""Command-line front end.

Subcommands: fit, cj-bound, ext-bound, sweep, simulate, datasets.
Scalar results print as JSON; tabular results as tidy CSV.  With
`--out DIR`, outputs land in DIR next to a run manifest.  Exit codes:
0 success, 2 usage/input error, 3 solver degraded.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cjbound import cj_bound, cj_bound_sweep
from .core import DATASET_NAMES, DatasetError, load_dataset, load_example
from .extbound import OptConfig, extended_bound
from .relik import fit_ml
from .sensitivity import SWEEP_FAMILIES, sweep, sweep_to_csv
from .sim import SCENARIOS, cells_to_csv, default_sim_config, get_scenario, run_scenario

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGRADED = 3


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str = __version__
    wall_time_s: float = 0.0
    outputs: list = field(default_factory=list)

    def write(self, out_dir: Path):
        (out_dir / "manifest.json").write_text(
            json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def _add_dataset_flags(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--dataset", choices=DATASET_NAMES,
                   help="embedded case-study dataset")
    g.add_argument("--input", help="CSV file path")
    p.add_argument("--format", default="ys-csv", choices=["ys-csv", "counts-csv"],
                   help="input CSV layout (with --input)")
    p.add_argument("--correction", type=float, default=0.5,
                   help="zero-cell continuity correction for counts")


def _add_opt_flags(p):
    p.add_argument("--k1", type=int, default=None, help="w-grid size")
    p.add_argument("--k2", type=int, default=None, help="z-grid size")
    p.add_argument("--kprime-stride", type=int, default=None)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory")


def _load(args):
    if args.dataset:
        return load_example(args.dataset, correction=args.correction)
    return load_dataset(args.input, format=args.format,
                        correction=args.correction, name=Path(args.input).stem)


def _opt_config(args, base: OptConfig | None = None) -> OptConfig:
    cfg = base or OptConfig()
    updates = {}
    for flag, name in (("k1", "k1"), ("k2", "k2"),
                       ("kprime_stride", "kprime_stride"),
                       ("restarts", "restarts"), ("seed", "seed")):
        v = getattr(args, flag)
        if v is not None:
            updates[name] = v
    if updates:
        from dataclasses import replace
        cfg = replace(cfg, **updates)
    return cfg


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy % (2 ** 31))
    args.seed = seed
    return seed


def _emit(args, name: str, text: str, manifest: RunManifest | None):
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text)
        if manifest is not None:
            manifest.outputs.append(name)
    else:
        sys.stdout.write(text)


def cmd_fit(args) -> int:
    data = _load(args)
    fit = fit_ml(data)
    print(json.dumps({
        "dataset": data.name, "n": data.n,
        "mu_hat": fit.mu_hat, "tau_hat": fit.tau_hat, "se_mu": fit.se_mu,
        "ci_mu": list(fit.ci_mu), "loglik": fit.loglik,
    }, indent=2))
    return EXIT_OK


def cmd_cj_bound(args) -> int:
    data = _load(args)
    tau = args.tau if args.tau is not None else fit_ml(data).tau_hat
    if args.p_grid:
        grid = [float(x) for x in args.p_grid.split(",")]
        results = cj_bound_sweep(data, tau, grid)
        lines = ["p,lower,upper,tau"]
        lines += [f"{r.p},{r.lower!r},{r.upper!r},{r.tau_used!r}" for r in results]
        print("\n".join(lines))
    else:
        r = cj_bound(data, tau, args.p)
        print(json.dumps({"p": r.p, "lower": r.lower, "upper": r.upper,
                          "tau": r.tau_used, "method": r.method}, indent=2))
    return EXIT_OK


def cmd_ext_bound(args) -> int:
    data = _load(args)
    fit = fit_ml(data)
    tau = args.tau if args.tau is not None else fit.tau_hat
    _resolve_seed(args)
    cfg = _opt_config(args)
    res = extended_bound(data, tau, fit.mu_hat, args.p, cfg)
    degraded = (res.a1.lower_solution.degraded or res.a1.upper_solution.degraded)
    print(json.dumps({
        "p": args.p, "tau": tau,
        "cj": {"lower": res.cj.lower, "upper": res.cj.upper},
        "a1": {"lower": res.a1.bound.lower, "upper": res.a1.bound.upper,
               "best_kprime": [res.a1.lower_solution.best_kprime,
                               res.a1.upper_solution.best_kprime],
               "feas_residual": [res.a1.lower_solution.feas_residual,
                                 res.a1.upper_solution.feas_residual]},
        "extended": {"lower": res.bound.lower, "upper": res.bound.upper},
        "ratio": res.ratio,
        "degraded": degraded,
    }, indent=2))
    return EXIT_DEGRADED if degraded else EXIT_OK


def cmd_sweep(args) -> int:
    data = _load(args)
    seed = _resolve_seed(args)
    cfg = _opt_config(args)
    if args.p_grid:
        grid = [float(x) for x in args.p_grid.split(",")]
    else:
        grid = [round(0.1 * k, 1) for k in range(10, 0, -1)]
    if args.families == "none":
        families = []
    elif args.families:
        families = args.families.split(",")
        unknown = [f for f in families if f not in SWEEP_FAMILIES]
        if unknown:
            print(f"unknown families: {', '.join(unknown)}; "
                  f"available: {', '.join(SWEEP_FAMILIES)}", file=sys.stderr)
            return EXIT_USAGE
    else:
        families = None
    t0 = time.time()
    rows = sweep(data, grid, families=families, config=cfg)
    manifest = RunManifest(command="sweep", seed=seed, config={
        "dataset": data.name, "p_grid": grid, "families": families,
        "k1": cfg.k1, "k2": cfg.k2, "kprime_stride": cfg.kprime_stride,
        "restarts": cfg.restarts,
    })
    _emit(args, "sweep.csv", sweep_to_csv(rows), manifest)
    manifest.wall_time_s = time.time() - t0
    if args.out:
        manifest.write(Path(args.out))
    n_fams = len(families) if families is not None else len(SWEEP_FAMILIES)
    all_failed = n_fams > 0 and all(
        len(r.mu_adjusted_by_model) == 0 for r in rows)
    return EXIT_USAGE if all_failed else EXIT_OK


def cmd_simulate(args) -> int:
    if args.scenario not in SCENARIOS:
        print(f"unknown scenario {args.scenario!r}; presets: "
              f"{', '.join(SCENARIOS)}", file=sys.stderr)
        return EXIT_USAGE
    if args.reps is not None and args.reps <= 0:
        print("--reps must be positive", file=sys.stderr)
        return EXIT_USAGE
    overrides = {}
    if args.reps is not None:
        overrides["replications"] = args.reps
    if args.p_grid:
        overrides["p_grid"] = tuple(float(x) for x in args.p_grid.split(","))
    seed = _resolve_seed(args)
    if args.seed is not None:
        overrides["seed"] = args.seed
    scenario = get_scenario(args.scenario, **overrides)
    cfg = _opt_config(args, default_sim_config())
    t0 = time.time()
    cells = run_scenario(scenario, cfg, threads=args.threads)
    manifest = RunManifest(command="simulate", seed=seed, config={
        "scenario": scenario.name, "replications": scenario.replications,
        "p_grid": list(scenario.p_grid), "k1": cfg.k1, "k2": cfg.k2,
        "kprime_stride": cfg.kprime_stride, "restarts": cfg.restarts,
        "threads": args.threads,
    })
    _emit(args, f"{scenario.name}.csv", cells_to_csv(scenario.name, cells),
          manifest)
    manifest.wall_time_s = time.time() - t0
    if args.out:
        manifest.write(Path(args.out))
    return EXIT_OK


def cmd_datasets(args) -> int:
    if args.action == "list":
        for name in DATASET_NAMES:
            print(name)
        return EXIT_OK
    # export
    if not args.dataset:
        print("datasets export requires --dataset", file=sys.stderr)
        return EXIT_USAGE
    data = load_example(args.dataset, correction=args.correction)
    _emit(args, f"{args.dataset}.csv", data.to_ys_csv(), None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pbbound",
        description="Worst-case publication-bias bounds for meta-analysis")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="random-effects ML fit")
    _add_dataset_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cj-bound", help="closed-form C-J bias bound")
    _add_dataset_flags(p)
    p.add_argument("--tau", type=float, default=None, help="override tau-hat")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--p", type=float)
    g.add_argument("--p-grid", help="comma-separated p values")
    p.set_defaults(func=cmd_cj_bound)

    p = sub.add_parser("ext-bound", help="extended (optimization) bound")
    _add_dataset_flags(p)
    p.add_argument("--tau", type=float, default=None, help="override tau-hat")
    p.add_argument("--p", type=float, required=True)
    _add_opt_flags(p)
    p.set_defaults(func=cmd_ext_bound)

    p = sub.add_parser("sweep", help="p-grid sensitivity sweep")
    _add_dataset_flags(p)
    p.add_argument("--p-grid", default=None, help="comma-separated p values")
    p.add_argument("--families", default=None,
                   help="comma-separated comparator families, or 'none'")
    _add_opt_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="replication study")
    p.add_argument("--scenario", required=True)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--p-grid", default=None)
    _add_opt_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("datasets", help="embedded dataset management")
    p.add_argument("action", choices=["list", "export"])
    p.add_argument("--dataset", choices=DATASET_NAMES, default=None)
    p.add_argument("--correction", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_datasets)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
