"""HMC sampling and Adam MAP estimation over a log-posterior kernel.

Both estimators are duck-typed on the target: HMC needs
``value_and_grad(theta) -> (log_density, gradient)`` and Adam needs
``loss_and_grad(theta) -> (loss, gradient)``. :class:`PosteriorKernel`
provides both.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import ParamVector

log = logging.getLogger(__name__)

SUCCESS = "Success"
FAILURE = "Failure"


@dataclass(frozen=True)
class Schedule:
    """Fixed step, or ``base * factor ** (t // every)``."""

    kind: str = "fixed"
    factor: float = 0.95
    every: int = 100

    def __post_init__(self):
        if self.kind not in ("fixed", "decay"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.every < 1 or not 0 < self.factor <= 1:
            raise ValueError("decay needs every >= 1 and 0 < factor <= 1")


def schedule_step(schedule: Schedule, base: float, t: int) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    if schedule.kind == "fixed":
        return base
    return base * schedule.factor ** (t // schedule.every)


# -- HMC ------------------------------------------------------------------

@dataclass
class HmcConfig:
    step_size: float
    leapfrog_steps: int = 500
    trajectories: int = 200
    keep_last: int = 150
    mass: Optional[np.ndarray] = None
    seed: int = 0
    schedule: Schedule = field(default_factory=Schedule)

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be >= 1")
        if not 0 <= self.keep_last <= self.trajectories:
            raise ValueError("keep_last must lie in [0, trajectories]")
        if self.mass is not None:
            self.mass = np.asarray(self.mass, dtype=np.float64)
            if np.any(self.mass <= 0):
                raise ValueError("mass entries must be positive")


@dataclass
class LeapfrogResult:
    theta: np.ndarray
    momentum: np.ndarray
    ok: bool
    log_density: float = math.nan
    grad: Optional[np.ndarray] = None
    reason: str = ""


def _finite(value, grad) -> bool:
    return bool(np.isfinite(value) and np.all(np.isfinite(grad)))


def leapfrog(kernel, theta0, r0, step_size: float, n_steps: int, inv_mass=None,
             start=None) -> LeapfrogResult:
    """Integrate Hamiltonian dynamics for ``n_steps`` with potential -log density.

    Half momentum step, ``n_steps`` alternating position/momentum steps,
    then the trailing half-step correction. ``start`` may carry the
    already-computed ``(log_density, grad)`` at ``theta0``. Any non-finite
    density or gradient stops integration with ``ok=False``.
    """
    theta = np.array(theta0, dtype=np.float64)
    r = np.array(r0, dtype=np.float64)
    inv_mass = 1.0 if inv_mass is None else inv_mass
    value, grad = kernel.value_and_grad(theta) if start is None else start
    if not _finite(value, grad):
        return LeapfrogResult(theta, r, False, reason="non-finite density at trajectory start")
    with np.errstate(all="ignore"):
        r = r + 0.5 * step_size * grad
        for i in range(n_steps):
            theta = theta + step_size * inv_mass * r
            value, grad = kernel.value_and_grad(theta)
            if not _finite(value, grad):
                return LeapfrogResult(theta, r, False,
                                      reason=f"non-finite density/gradient at leapfrog step {i + 1}")
            r = r + step_size * grad
        r = r - 0.5 * step_size * grad
    if not np.all(np.isfinite(r)) or not np.all(np.isfinite(theta)):
        return LeapfrogResult(theta, r, False, reason="non-finite phase-space state")
    return LeapfrogResult(theta, r, True, float(value), grad)


def hamiltonian(log_density: float, r, inv_mass=None) -> float:
    """log density minus kinetic energy (larger is more probable)."""
    inv_mass = 1.0 if inv_mass is None else inv_mass
    with np.errstate(all="ignore"):
        return float(log_density - 0.5 * np.sum(inv_mass * r * r))


def mh_accept(h_old: float, h_new: float, rng) -> bool:
    """Accept with probability min(1, exp(h_new - h_old))."""
    delta = h_new - h_old
    if delta >= 0:
        return True
    u = rng.uniform()
    return bool(u > 0 and math.log(u) < delta)


@dataclass
class Chain:
    samples: list
    accept_flags: list
    hamiltonians: list
    status: str = SUCCESS
    reason: str = ""
    failed_at: Optional[int] = None
    layout: tuple = ()

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accept_flags)) if self.accept_flags else math.nan

    def sample_array(self) -> np.ndarray:
        return np.array(self.samples)


def hmc_run(kernel, init_params, config: HmcConfig) -> Chain:
    """Run HMC; any non-finite event turns the whole run into a Failure chain."""
    layout = init_params.layout if isinstance(init_params, ParamVector) else ()
    theta = np.array(init_params.values if isinstance(init_params, ParamVector) else init_params,
                     dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    mass = config.mass
    inv_mass = None if mass is None else 1.0 / mass
    sqrt_mass = 1.0 if mass is None else np.sqrt(mass)

    def failure(reason, t, flags, hs):
        log.info("HMC failure at trajectory %d: %s", t, reason)
        return Chain([], flags, hs, FAILURE, reason, t, layout)

    value, grad = kernel.value_and_grad(theta)
    if not _finite(value, grad):
        return failure("non-finite density at initial parameters", 0, [], [])
    flags, hs, kept = [], [], []
    first_kept = config.trajectories - config.keep_last
    for t in range(config.trajectories):
        step = schedule_step(config.schedule, config.step_size, t)
        r0 = rng.standard_normal(theta.size) * sqrt_mass
        h_old = hamiltonian(value, r0, inv_mass)
        res = leapfrog(kernel, theta, r0, step, config.leapfrog_steps, inv_mass, (value, grad))
        if not res.ok:
            return failure(res.reason, t, flags, hs)
        h_new = hamiltonian(res.log_density, res.momentum, inv_mass)
        if not math.isfinite(h_new):
            return failure("non-finite Hamiltonian", t, flags, hs)
        accepted = mh_accept(h_old, h_new, rng)
        if accepted:
            theta, value, grad = res.theta, res.log_density, res.grad
        flags.append(accepted)
        hs.append(h_new)
        if t >= first_kept:
            kept.append(theta.copy())
    return Chain(kept, flags, hs, SUCCESS, "", None, layout)


# -- Adam -----------------------------------------------------------------

class OptimizationDiverged(FloatingPointError):
    """Adam met a non-finite loss or gradient."""


@dataclass
class AdamConfig:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    epochs: int = 20000
    schedule: Schedule = field(default_factory=Schedule)
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        for b in (self.beta1, self.beta2):
            if not 0 < b <= 1:
                raise ValueError("beta1 and beta2 must lie in (0, 1]")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def adam_step(theta, g, m, v, t: int, config: AdamConfig, lr: Optional[float] = None):
    """One bias-corrected Adam update; returns (theta, m, v)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if not np.all(np.isfinite(g)):
        raise OptimizationDiverged(f"non-finite gradient at step {t}")
    lr = config.learning_rate if lr is None else lr
    b1, b2 = config.beta1, config.beta2
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + config.eps_hat), m, v


@dataclass
class AdamResult:
    params: np.ndarray
    loss_trace: np.ndarray
    layout: tuple = ()


def adam_run(objective, init_params, config: AdamConfig) -> AdamResult:
    """Full-batch Adam on ``objective.loss_and_grad``; returns final-epoch parameters."""
    layout = init_params.layout if isinstance(init_params, ParamVector) else ()
    theta = np.array(init_params.values if isinstance(init_params, ParamVector) else init_params,
                     dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace = np.empty(config.epochs)
    for t in range(1, config.epochs + 1):
        loss, g = objective.loss_and_grad(theta)
        if not math.isfinite(loss):
            raise OptimizationDiverged(f"non-finite loss at epoch {t} (|theta|={np.linalg.norm(theta):.3g})")
        trace[t - 1] = loss
        lr = schedule_step(config.schedule, config.learning_rate, t - 1)
        theta, m, v = adam_step(theta, g, m, v, t, config, lr)
    return AdamResult(theta, trace, layout)
