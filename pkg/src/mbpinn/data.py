"""Observation sampling, noise injection, evaluation grids and SNR."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .problems import BOUNDARY, COEFFICIENT, FIELDS, FORCE, SOLUTION, PdeProblem


class ZeroNoiseError(ValueError):
    """SNR requested for a noise vector with zero power."""


@dataclass(frozen=True)
class ObservationSet:
    field_id: str
    points: np.ndarray
    clean: np.ndarray
    noisy: np.ndarray
    noise_level: float
    tau: float

    def __post_init__(self):
        if self.field_id not in FIELDS:
            raise ValueError(f"unknown field {self.field_id!r}")
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        clean = np.asarray(self.clean, dtype=np.float64).reshape(-1)
        noisy = np.asarray(self.noisy, dtype=np.float64).reshape(-1)
        if not (len(pts) == len(clean) == len(noisy)):
            raise ValueError("points, clean and noisy must have equal lengths")
        if self.noise_level < 0:
            raise ValueError("noise_level must be nonnegative")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "clean", clean)
        object.__setattr__(self, "noisy", noisy)

    def __len__(self):
        return len(self.clean)

    @property
    def noise(self) -> np.ndarray:
        return self.noisy - self.clean

    def snr(self) -> float:
        return snr(self.clean, self.noise)


@dataclass(frozen=True)
class EvalGrid:
    points: np.ndarray
    exact: np.ndarray
    shape: tuple

    def __len__(self):
        return len(self.exact)


def lhs_sample(n: int, lower, upper, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube design: exactly one point per 1/n stratum on every axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    d = lower.size
    unit = np.empty((n, d))
    for j in range(d):
        unit[:, j] = (rng.permutation(n) + rng.uniform(size=n)) / n
    return lower + unit * (upper - lower)


def boundary_sample(n: int, lower, upper, rng: np.random.Generator) -> np.ndarray:
    """Points on the boundary of a box.

    In 1-D the two endpoints are used alternately (n=2 gives both). In 2-D
    points are uniform in arc length over the four edges.
    """
    lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    if lower.size == 1:
        return np.where(np.arange(n) % 2 == 0, lower[0], upper[0]).reshape(-1, 1)
    if lower.size != 2:
        raise NotImplementedError("boundary sampling supports 1-D and 2-D boxes")
    w, h = upper - lower
    s = rng.uniform(0.0, 2 * (w + h), size=n)
    pts = np.empty((n, 2))
    for i, t in enumerate(s):
        if t < w:
            pts[i] = (lower[0] + t, lower[1])
        elif t < w + h:
            pts[i] = (upper[0], lower[1] + (t - w))
        elif t < 2 * w + h:
            pts[i] = (upper[0] - (t - w - h), upper[1])
        else:
            pts[i] = (lower[0], upper[1] - (t - 2 * w - h))
    return pts


def make_observations(problem: PdeProblem, field_id: str, n_interior: int, n_boundary: int,
                      noise_level: float, tau: Optional[float], rng: np.random.Generator
                      ) -> ObservationSet:
    """Sample a field at LHS interior points plus boundary points and add noise.

    ``tau`` defaults to ``noise_level`` (the generating noise is assumed known).
    """
    if n_boundary and field_id not in (SOLUTION, BOUNDARY):
        raise ValueError(f"field {field_id!r} has no boundary observations")
    if field_id == BOUNDARY and n_interior:
        raise ValueError("boundary observations cannot have interior points")
    lo, hi = problem.bounds
    parts = []
    if n_interior:
        parts.append(lhs_sample(n_interior, lo, hi, rng))
    if n_boundary:
        parts.append(boundary_sample(n_boundary, lo, hi, rng))
    if not parts:
        raise ValueError("no observation points requested")
    points = np.concatenate(parts)
    if field_id == BOUNDARY:
        clean = problem.boundary_value(points)
    else:
        clean = problem.field(field_id, points)
    noisy = clean + noise_level * rng.standard_normal(len(clean))
    if tau is None:
        tau = noise_level
    return ObservationSet(field_id, points, clean, noisy, float(noise_level), float(tau))


def snr(clean, noise) -> float:
    """Signal-to-noise ratio in dB: 10 log10(mean(clean^2) / mean(noise^2))."""
    clean = np.asarray(clean, dtype=np.float64).reshape(-1)
    noise = np.asarray(noise, dtype=np.float64).reshape(-1)
    if clean.shape != noise.shape:
        raise ValueError("clean and noise must have equal lengths")
    pn = float(np.mean(noise**2))
    if pn == 0.0:
        raise ZeroNoiseError("noise power is zero; SNR is infinite")
    return 10.0 * math.log10(float(np.mean(clean**2)) / pn)


def eval_grid(problem: PdeProblem, resolution: int) -> EvalGrid:
    """Equidistant grid (endpoints included) along every axis."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    lo, hi = problem.bounds
    axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return EvalGrid(points, problem.exact_solution(points), tuple(len(a) for a in axes))


# -- CSV ------------------------------------------------------------------

def write_observations(obs: ObservationSet, path) -> Path:
    path = Path(path)
    d = obs.points.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["field"] + [f"x{i + 1}" for i in range(d)] + ["clean", "noisy"])
        for p, c, n in zip(obs.points, obs.clean, obs.noisy):
            w.writerow([obs.field_id] + [repr(float(v)) for v in p] + [repr(float(c)), repr(float(n))])
    return path


def read_observations(path, noise_level: float = 0.0, tau: float = 1.0) -> ObservationSet:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no observations")
    xcols = sorted((k for k in rows[0] if k.startswith("x")), key=lambda k: int(k[1:]))
    pts = np.array([[float(r[k]) for k in xcols] for r in rows])
    return ObservationSet(rows[0]["field"], pts, [float(r["clean"]) for r in rows],
                          [float(r["noisy"]) for r in rows], noise_level, tau)


__all__ = ["ObservationSet", "EvalGrid", "ZeroNoiseError", "lhs_sample", "boundary_sample",
           "make_observations", "snr", "eval_grid", "write_observations", "read_observations",
           "SOLUTION", "FORCE", "BOUNDARY", "COEFFICIENT"]
