"""Command line entry point: gen, run, grid and report subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import bench
from .config import METHODS, ExperimentConfig, GridConfig, load_json
from .data import write_observations
from .inference import OptimizationDiverged

log = logging.getLogger("mbpinn")

EXIT_CONFIG = 2
EXIT_IO = 3


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(v):
    # JSON has no inf/nan; write them as strings
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    return v


def _dump(obj, path: Path):
    path.write_text(json.dumps(_clean(obj), indent=2, default=_json_default) + "\n")


def cmd_gen(args) -> int:
    cfg = ExperimentConfig(problem=args.problem, eps=args.eps, noise=args.noise,
                           method="bpinn_sgd", step_size=1.0, seed=args.seed)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(3)[0])
    observations = bench.generate_observations(cfg, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snrs = {}
    for obs in observations:
        write_observations(obs, out / f"{obs.field_id}.csv")
        snrs[obs.field_id] = bench._snr_report([obs])[obs.field_id]
    _dump({"problem": cfg.problem, "eps": cfg.epsilon, "noise": cfg.noise, "seed": cfg.seed,
           "snr_db": snrs}, out / "meta.json")
    for fid, value in snrs.items():
        print(f"{fid}: n={sum(len(o) for o in observations if o.field_id == fid)} "
              f"SNR={value:.2f} dB")
    return 0


def cmd_run(args) -> int:
    cfg = ExperimentConfig.model_validate(load_json(args.config))
    result = bench.run_experiment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(result.summary(), out / "result.json")
    if result.profile is not None:
        bench.write_profile(result.profile, out / "profile.csv")
    if result.status == bench.SUCCESS:
        line = f"{cfg.method} step={cfg.step_size:g}: Success REL={result.rel_solution:.4g}"
        if result.rel_coefficient is not None:
            line += f" REL_k={result.rel_coefficient:.4g}"
    else:
        line = f"{cfg.method} step={cfg.step_size:g}: Failure ({result.reason})"
    print(line)
    return 0


def cmd_grid(args) -> int:
    grid = GridConfig.model_validate(load_json(args.config))
    report = bench.run_grid(grid)
    bench.write_report(report, args.out)
    print(bench.render_markdown(report), end="")
    return 0


def cmd_report(args) -> int:
    report = bench.read_grid_csv(Path(args.inp) / "grid.csv")
    print(bench.render_markdown(report), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbpinn", description="Bayesian PINN experiment engine.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate noisy observations for a problem")
    g.add_argument("--problem", required=True, help="P1, P2, P3 or P4")
    g.add_argument("--eps", type=float, default=None, help="scale parameter (P1, P3)")
    g.add_argument("--noise", type=float, required=True, help="noise standard deviation")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    gr = sub.add_parser("grid", help=f"run a method x step grid (methods: {', '.join(METHODS)})")
    gr.add_argument("--config", required=True)
    gr.add_argument("--out", required=True)
    gr.set_defaults(func=cmd_grid)

    rp = sub.add_parser("report", help="print the table stored in a grid output directory")
    rp.add_argument("--in", dest="inp", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OptimizationDiverged as exc:
        print(f"optimization diverged: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
