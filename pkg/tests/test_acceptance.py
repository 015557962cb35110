"""Acceptance criteria 1-9 at their stated tolerances.

Each test records a one-line verdict that is printed in the pytest terminal
summary. The long-running criteria (4, 5, 6, 8) run the real experiment
protocol and take tens of minutes in total on one CPU.
"""

import numpy as np
import pytest

from mbpinn.bench import generate_observations, run_experiment, run_grid, write_report
from mbpinn.config import PAPER_STEPS, ExperimentConfig, GridConfig
from mbpinn.inference import FAILURE, SUCCESS, HmcConfig, hmc_run, leapfrog, hamiltonian
from mbpinn.problems import make_problem

from fd_oracle import ARCHITECTURES, check_draw

# -- 1. gradient correctness -------------------------------------------------


def test_c1_gradient_correctness(acceptance_record):
    rng = np.random.default_rng(2024)
    worst = {"d1": 0.0, "d2": 0.0, "param": 0.0}
    for i in range(100):
        arch, dim = ARCHITECTURES[i % len(ARCHITECTURES)]
        for k, v in check_draw(arch, dim, rng).items():
            worst[k] = max(worst[k], v)
    ok = max(worst.values()) <= 1e-5
    acceptance_record(1, ok, "max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok, worst


# -- 2. exact-solution residual oracle ------------------------------------


def test_c2_exact_residual(acceptance_record):
    worst = {}
    for pid, eps in (("P1", 0.5), ("P1", 0.1), ("P2", None), ("P3", 0.5), ("P4", None)):
        p = make_problem(pid, eps)
        lo, hi = p.bounds
        x = np.random.default_rng(7).uniform(lo, hi, size=(1000, p.dim))
        worst[f"{pid}{'' if eps is None else f'(eps={eps})'}"] = float(
            np.max(np.abs(p.exact_residual(x) - p.force(x))))
    ok = max(worst.values()) <= 1e-6
    acceptance_record(2, ok, "max |N[u]-f| = " + f"{max(worst.values()):.1e}")
    assert ok, worst


# -- 3. HMC sampler correctness ------------------------------------------


class _StdNormal:
    def value_and_grad(self, theta):
        return -0.5 * float(theta @ theta), -theta


def _energy_drift(d, total=3.0):
    k = _StdNormal()
    th0, r0 = np.array([1.0]), np.array([0.5])
    h0 = hamiltonian(k.value_and_grad(th0)[0], r0)
    drift = 0.0
    for n in range(1, int(round(total / d)) + 1):
        res = leapfrog(k, th0, r0, d, n)
        drift = max(drift, abs(hamiltonian(res.log_density, res.momentum) - h0))
    return drift


def test_c3_hmc_correctness(acceptance_record):
    chain = hmc_run(_StdNormal(), np.zeros(5), HmcConfig(0.1, 20, 2000, 2000, seed=0))
    s = chain.sample_array()
    mean_err = float(np.max(np.abs(s.mean(axis=0))))
    var_err = float(np.max(np.abs(s.var(axis=0) - 1.0)))
    rng = np.random.default_rng(1)
    th0, r0 = rng.standard_normal(5), rng.standard_normal(5)
    fwd = leapfrog(_StdNormal(), th0, r0, 0.05, 100)
    back = leapfrog(_StdNormal(), fwd.theta, -fwd.momentum, 0.05, 100)
    rev = float(max(np.max(np.abs(back.theta - th0)), np.max(np.abs(back.momentum + r0))))
    ratio = _energy_drift(0.1) / _energy_drift(0.05)
    ok = (chain.status == SUCCESS and len(chain.samples) == 2000 and mean_err <= 0.05
          and var_err <= 0.1 and rev <= 1e-10 and 3.0 <= ratio <= 5.0)
    acceptance_record(3, ok, f"|mean|={mean_err:.3f} |var-1|={var_err:.3f} "
                             f"reversal={rev:.1e} drift ratio={ratio:.2f}")
    assert ok


# -- 4. HMC failure reproduction -----------------------------------------

C4_EXPECTED = {s: (SUCCESS if s == 1e-5 else FAILURE) for s in PAPER_STEPS}


def test_c4_failure_pattern(acceptance_record):
    base = {"problem": "P1", "eps": 0.5, "noise": 0.01}
    lines, ok = [], True
    for seed in range(3):
        report = run_grid(GridConfig(base=base, methods=["bpinn_hmc"], steps=list(PAPER_STEPS),
                                     master_seed=seed))
        cells = report.cells[0]
        matches = sum(c.status == C4_EXPECTED[s] for s, c in zip(report.steps, cells))
        small = cells[report.steps.index(1e-5)]
        rel_ok = small.status != SUCCESS or small.rel_solution <= 0.1
        ok &= matches >= 6 and rel_ok
        rel_txt = "-" if small.rel_solution is None else f"{small.rel_solution:.4f}"
        lines.append(f"seed {seed}: {matches}/7 match, REL@1e-5={rel_txt}")
    acceptance_record(4, ok, "; ".join(lines))
    assert ok


# -- 5. spectral-bias separation (+ 9. determinism) -------------------------

C5_GRID = {"base": {"problem": "P1", "eps": 0.1, "noise": 0.01, "epochs": 20000},
           "methods": ["bpinn_sgd", "ff_mbpinn_sgd", "2ff_mbpinn_sgd"],
           "steps": list(PAPER_STEPS), "master_seed": 0}


@pytest.fixture(scope="module")
def c5_grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("c5")
    report = run_grid(GridConfig.model_validate(C5_GRID))
    write_report(report, out)
    return report, out


def test_c5_spectral_bias(c5_grid, acceptance_record):
    report, _ = c5_grid

    def rels(method, steps):
        row = report.cells[report.methods.index(method)]
        return [row[report.steps.index(s)].rel_solution for s in steps]

    plain = rels("bpinn_sgd", PAPER_STEPS)
    ff = rels("ff_mbpinn_sgd", (1e-3, 5e-4, 1e-4))
    ff2 = rels("2ff_mbpinn_sgd", (5e-3, 5e-4))
    ok = min(plain) >= 0.3 and min(ff) <= 0.05 and min(ff2) <= 0.05
    acceptance_record(5, ok, f"BPINN min={min(plain):.4f} FF best={min(ff):.4f} "
                             f"2FF best={min(ff2):.4f}")
    assert ok


def test_c9_determinism(c5_grid, tmp_path, acceptance_record):
    _, out = c5_grid
    full = (out / "grid.csv").read_text().splitlines()
    sub = dict(C5_GRID, methods=["bpinn_sgd", "ff_mbpinn_sgd"], steps=[1e-3])
    write_report(run_grid(GridConfig.model_validate(sub)), tmp_path / "sub")
    rerun = (tmp_path / "sub" / "grid.csv").read_text().splitlines()
    rows_ok = all(line in full for line in rerun[1:])
    small = dict(C5_GRID, base=dict(C5_GRID["base"], epochs=200), steps=[5e-3, 1e-4])
    for name in ("a", "b"):
        write_report(run_grid(GridConfig.model_validate(small)), tmp_path / name)
    bytes_ok = (tmp_path / "a" / "grid.csv").read_bytes() == (tmp_path / "b" / "grid.csv").read_bytes()
    ok = rows_ok and bytes_ok
    acceptance_record(9, ok, f"rerun cells identical to grid rows: {rows_ok}; "
                             f"repeated grid.csv bit-identical: {bytes_ok}")
    assert ok


# -- 6. inverse problem ---------------------------------------------------


def test_c6_inverse_problem(acceptance_record):
    res = run_experiment({"problem": "P2", "noise": 0.05, "method": "ff_mbpinn_sgd",
                          "lr": 1e-3, "epochs": 20000, "seed": 0})
    ok = res.status == SUCCESS and res.rel_solution <= 0.06 and res.rel_coefficient <= 0.10
    acceptance_record(6, ok, f"REL solution={res.rel_solution:.4f} "
                             f"coefficient={res.rel_coefficient:.4f}")
    assert ok


# -- 7. SNR reproduction -----------------------------------------------------

C7_TARGETS = [(0.01, "solution", 24.527), (0.01, "force", 39.537), (0.1, "solution", 5.008)]


def test_c7_snr(acceptance_record):
    worst, means = {}, {}
    for noise, field, target in C7_TARGETS:
        values = []
        for seed in range(5):
            cfg = ExperimentConfig(problem="P1", eps=0.1, noise=noise, method="bpinn_sgd",
                                   step_size=1e-3, seed=seed)
            # same data stream as run_experiment uses for this seed
            rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[0])
            obs = {o.field_id: o for o in generate_observations(cfg, rng)}
            values.append(obs[field].snr())
        key = f"{field}@{noise}"
        worst[key] = max(abs(v - target) for v in values)
        means[key] = float(np.mean(values))
    ok = max(worst.values()) <= 1.5
    acceptance_record(7, ok, "max |dB error| over 5 seeds: "
                      + ", ".join(f"{k}={v:.2f} (mean {means[k]:.2f})" for k, v in worst.items()))
    assert ok, worst


# -- 8. 2-D desk-scale check ---------------------------------------------

C8_STEPS = list(PAPER_STEPS)


def test_c8_desk_2d(acceptance_record):
    grid = GridConfig(base={"problem": "P3", "eps": 0.5, "noise": 0.01, "desk": True},
                      methods=["bpinn_sgd", "ff_mbpinn_sgd"], steps=C8_STEPS, master_seed=0)
    report = run_grid(grid)
    plain = [c.rel_solution for c in report.cells[0]]
    ff = [c.rel_solution for c in report.cells[1]]
    small = [i for i, s in enumerate(C8_STEPS) if s <= 1e-3]
    ordering = all(ff[i] < plain[i] for i in small)
    ok = min(ff) <= 0.15 and ordering
    acceptance_record(8, ok, f"FF best={min(ff):.4f}; FF<BPINN at all lr<=1e-3: {ordering} "
                             + "(" + ", ".join(f"{s:g}: {ff[i]:.3f}/{plain[i]:.3f}"
                                               for i, s in enumerate(C8_STEPS)) + ")")
    assert ok
