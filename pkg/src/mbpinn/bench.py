"""Metrics, posterior prediction, experiment/grid execution and reports."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import unflatten
from .config import ExperimentConfig, GridConfig
from .data import EvalGrid, ZeroNoiseError, eval_grid, make_observations
from .inference import (FAILURE, SUCCESS, AdamConfig, AdamResult, Chain, HmcConfig, Schedule,
                        adam_run, hmc_run)
from .nets import FourierPipelineSpec, Network, NetworkSpec, init_params
from .posterior import PosteriorKernel, concat_params
from .problems import make_problem

log = logging.getLogger(__name__)

MISSING = "---"


class ReportError(OSError):
    """Report files could not be written or read."""


# -- metrics --------------------------------------------------------------

def abse(pred, exact) -> np.ndarray:
    pred, exact = np.asarray(pred, dtype=float), np.asarray(exact, dtype=float)
    if pred.shape != exact.shape:
        raise ValueError("pred and exact must have the same shape")
    return np.abs(pred - exact)


def rel(pred, exact) -> float:
    """Relative L2 error sqrt(sum|pred-exact|^2 / sum|exact|^2)."""
    pred, exact = np.asarray(pred, dtype=float), np.asarray(exact, dtype=float)
    if pred.shape != exact.shape:
        raise ValueError("pred and exact must have the same shape")
    denom = float(np.sum(exact**2))
    if denom == 0.0:
        raise ValueError("relative error undefined for an all-zero reference")
    return math.sqrt(float(np.sum((pred - exact) ** 2)) / denom)


def posterior_predict(result, net: Network, grid) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std of ``net`` over the kept samples of ``result``.

    ``result`` is a :class:`Chain` or an :class:`AdamResult` (a single
    sample). ``grid`` is an :class:`EvalGrid` or a point array.
    """
    if isinstance(result, Chain):
        if not result.ok:
            raise ValueError("cannot predict from a failed chain")
        samples = result.samples
    elif isinstance(result, AdamResult):
        samples = [result.params]
    else:
        samples = list(result)
    if not samples:
        raise ValueError("no samples to predict from")
    layout = getattr(result, "layout", ()) or net.layout
    points = grid.points if isinstance(grid, EvalGrid) else np.asarray(grid)
    preds = np.array([net.predict(unflatten(np.asarray(s), layout), points)[:, 0]
                      for s in samples])
    return preds.mean(axis=0), preds.std(axis=0)


# -- experiments ----------------------------------------------------------

@dataclass
class RunResult:
    config: dict
    status: str
    rel_solution: Optional[float] = None
    rel_coefficient: Optional[float] = None
    abse_max: Optional[float] = None
    snr: dict = field(default_factory=dict)
    wall_time: float = 0.0
    reason: str = ""
    acceptance_rate: Optional[float] = None
    final_loss: Optional[float] = None
    profile: Optional[dict] = None

    def __post_init__(self):
        if self.status == FAILURE:
            self.rel_solution = self.rel_coefficient = self.abse_max = None
        elif self.status == SUCCESS and self.rel_solution is None:
            raise ValueError("successful runs must report rel_solution")

    def summary(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "profile"}
        return out


def _build_net(cfg, input_dim: int, prefix: str, rng) -> tuple[Network, object]:
    if cfg.kind == "plain":
        spec = NetworkSpec.plain(input_dim, cfg.hidden)
    else:
        spec = NetworkSpec("fourier", input_dim, cfg.hidden,
                           [FourierPipelineSpec(p.std, p.rows) for p in cfg.pipelines])
    if cfg.seed is not None:
        rng = np.random.default_rng(cfg.seed)
    return Network(spec, prefix), init_params(spec, rng, prefix)


def generate_observations(config: ExperimentConfig, rng) -> list:
    problem = make_problem(config.problem, config.epsilon)
    out = []
    for fid, (ni, nb, tau) in config.observation_layout().items():
        if tau is None and config.noise == 0:
            raise ValueError(f"noise is 0: give an explicit tau for {fid!r}")
        out.append(make_observations(problem, fid, ni, nb, config.noise, tau, rng))
    return out


def _snr_report(observations) -> dict:
    report = {}
    for obs in observations:
        try:
            report[obs.field_id] = obs.snr()
        except ZeroNoiseError:
            report[obs.field_id] = math.inf
    return report


def run_experiment(config) -> RunResult:
    """Generate data, build networks, estimate, predict and score one configuration."""
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.model_validate(config)
    t0 = time.perf_counter()
    problem = make_problem(config.problem, config.epsilon)
    data_ss, init_ss, est_ss = np.random.SeedSequence(config.seed).spawn(3)
    observations = generate_observations(config, np.random.default_rng(data_ss))
    init_rng = np.random.default_rng(init_ss)
    est_seed = int(est_ss.generate_state(1)[0])

    nets, parts = {}, []
    for unknown in problem.unknowns:
        net, params = _build_net(config.net_config(unknown), problem.dim, f"{unknown}.", init_rng)
        nets[unknown] = net
        parts.append(params)
    theta0 = concat_params(parts)
    kernel = PosteriorKernel(problem, nets, observations, config.prior_std)
    schedule = Schedule(config.schedule.kind, config.schedule.factor, config.schedule_every())
    echo = config.model_dump(mode="json")
    snrs = _snr_report(observations)

    if config.estimator == "hmc":
        result = hmc_run(kernel, theta0, HmcConfig(
            config.step_size, config.leapfrog_steps, config.trajectories, config.keep_last,
            seed=est_seed, schedule=schedule))
        if not result.ok:
            return RunResult(echo, FAILURE, snr=snrs, wall_time=time.perf_counter() - t0,
                             reason=f"trajectory {result.failed_at}: {result.reason}",
                             acceptance_rate=result.acceptance_rate)
        extra = dict(acceptance_rate=result.acceptance_rate)
    else:
        # divergence raises OptimizationDiverged; only HMC reports Failure cells
        result = adam_run(kernel, theta0, AdamConfig(
            config.step_size, epochs=config.effective_epochs, schedule=schedule, seed=est_seed))
        extra = dict(final_loss=float(result.loss_trace[-1]) if len(result.loss_trace) else None)

    grid = eval_grid(problem, config.eval_resolution)
    mean, std = posterior_predict(result, nets["u"], grid)
    profile = {"points": grid.points, "exact": grid.exact, "mean": mean, "std": std}
    rel_k = None
    if "k" in nets:
        k_mean, k_std = posterior_predict(result, nets["k"], grid)
        k_exact = problem.coefficient(grid.points)
        rel_k = rel(k_mean, k_exact)
        profile.update(k_exact=k_exact, k_mean=k_mean, k_std=k_std)
    if not np.all(np.isfinite(mean)):
        return RunResult(echo, FAILURE, snr=snrs, wall_time=time.perf_counter() - t0,
                         reason="non-finite posterior prediction", **extra)
    return RunResult(echo, SUCCESS, rel(mean, grid.exact), rel_k,
                     float(abse(mean, grid.exact).max()), snrs, time.perf_counter() - t0,
                     profile=profile, **extra)


# -- grids ----------------------------------------------------------------

@dataclass
class GridReport:
    methods: list
    steps: list
    cells: list  # cells[i][j] is the RunResult for methods[i], steps[j]
    timing_in_csv: bool = False

    def cell(self, method: str, step: float) -> RunResult:
        return self.cells[self.methods.index(method)][self.steps.index(step)]


def _run_cell(args):
    grid, method, step = args
    cfg = grid.cell_config(method, step)
    log.info("grid cell %s step=%g seed=%d", method, step, cfg.seed)
    return run_experiment(cfg)


def run_grid(grid_config) -> GridReport:
    """Run every (method, step) cell; a failed cell never aborts the grid."""
    if not isinstance(grid_config, GridConfig):
        grid_config = GridConfig.model_validate(grid_config)
    jobs = [(grid_config, m, s) for m in grid_config.methods for s in grid_config.steps]
    if grid_config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=grid_config.workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    n = len(grid_config.steps)
    cells = [results[i * n:(i + 1) * n] for i in range(len(grid_config.methods))]
    return GridReport(list(grid_config.methods), list(grid_config.steps), cells,
                      grid_config.timing_in_csv)


# -- reports --------------------------------------------------------------

GRID_COLUMNS = ["method", "step_size", "status", "rel_solution", "rel_coefficient", "wall_time"]


def _fmt(v) -> str:
    return MISSING if v is None else repr(float(v))


def _parse(s: str):
    return None if s in (MISSING, "") else float(s)


def display_name(method: str) -> str:
    return method.upper()


def render_markdown(report: GridReport) -> str:
    def table(attr, title):
        head = "| Initial step size(lr) | " + " | ".join(f"{s:g}" for s in report.steps) + " |"
        sep = "|---|" + "---|" * len(report.steps)
        lines = [f"### {title}", "", head, sep]
        for method, row in zip(report.methods, report.cells):
            vals = [MISSING if getattr(c, attr) is None else f"{getattr(c, attr):.4f}" for c in row]
            lines.append(f"| {display_name(method)} | " + " | ".join(vals) + " |")
        return lines

    lines = table("rel_solution", "REL of solution")
    if any(c.rel_coefficient is not None for row in report.cells for c in row):
        lines += [""] + table("rel_coefficient", "REL of coefficient")
    return "\n".join(lines) + "\n"


def _profile_name(method: str, step: float) -> str:
    return f"profile_{method}_{step:g}.csv"


def write_report(report: GridReport, out_dir) -> list:
    """Write grid.csv, grid.md, timing.csv and one profile CSV per successful cell."""
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "grid.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(GRID_COLUMNS)
            for method, row in zip(report.methods, report.cells):
                for step, c in zip(report.steps, row):
                    wall = repr(float(c.wall_time)) if report.timing_in_csv else ""
                    w.writerow([method, repr(float(step)), c.status, _fmt(c.rel_solution),
                                _fmt(c.rel_coefficient), wall])
        written.append(path)
        path = out / "timing.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "step_size", "wall_time"])
            for method, row in zip(report.methods, report.cells):
                for step, c in zip(report.steps, row):
                    w.writerow([method, repr(float(step)), f"{c.wall_time:.3f}"])
        written.append(path)
        path = out / "grid.md"
        path.write_text(render_markdown(report))
        written.append(path)
        for method, row in zip(report.methods, report.cells):
            for step, c in zip(report.steps, row):
                if c.profile is not None:
                    written.append(write_profile(c.profile, out / _profile_name(method, step)))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return written


def write_profile(profile: dict, path) -> Path:
    path = Path(path)
    pts = np.asarray(profile["points"])
    cols = [f"x{i + 1}" for i in range(pts.shape[1])] + ["exact", "mean", "std"]
    extra = [k for k in ("k_exact", "k_mean", "k_std") if k in profile]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + extra)
        for i in range(len(pts)):
            w.writerow([repr(float(v)) for v in pts[i]]
                       + [repr(float(profile[k][i])) for k in ("exact", "mean", "std", *extra)])
    return path


def read_grid_csv(path) -> GridReport:
    """Rebuild a (metrics-only) GridReport from ``grid.csv``."""
    try:
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ReportError(f"cannot read {path}: {exc}") from exc
    methods, steps = [], []
    for r in rows:
        if r["method"] not in methods:
            methods.append(r["method"])
        s = float(r["step_size"])
        if s not in steps:
            steps.append(s)
    lookup = {(r["method"], float(r["step_size"])): r for r in rows}
    cells = []
    timing = False
    for m in methods:
        row = []
        for s in steps:
            r = lookup[(m, s)]
            wall = _parse(r["wall_time"])
            timing = timing or wall is not None
            row.append(RunResult({}, r["status"], _parse(r["rel_solution"]),
                                 _parse(r["rel_coefficient"]), wall_time=wall or 0.0))
        cells.append(row)
    return GridReport(methods, steps, cells, timing)
