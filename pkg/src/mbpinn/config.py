"""Experiment and grid configuration (JSON) with per-problem defaults."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .problems import make_problem

METHODS = {
    "bpinn_hmc": ("plain", "hmc"),
    "bpinn_sgd": ("plain", "sgd"),
    "ff_mbpinn_hmc": ("ff", "hmc"),
    "ff_mbpinn_sgd": ("ff", "sgd"),
    "2ff_mbpinn_hmc": ("2ff", "hmc"),
    "2ff_mbpinn_sgd": ("2ff", "sgd"),
}

PAPER_STEPS = (0.01, 0.005, 0.001, 0.0005, 0.0001, 0.00005, 0.00001)

# Observation layouts: field -> (n_interior, n_boundary).
PROBLEM_DEFAULTS = {
    "P1": dict(eps=0.1, hidden=(30, 30), resolution=1000,
               observations={"solution": (98, 2), "force": (100, 0)},
               stds={"u": {"ff": [5.0], "2ff": [1.0, 5.0]}}),
    "P2": dict(eps=None, hidden=(30, 30), resolution=1000,
               observations={"solution": (48, 2), "force": (50, 0), "coefficient": (25, 0)},
               stds={"u": {"ff": [5.0], "2ff": [1.0, 5.0]},
                     "k": {"ff": [0.5], "2ff": [0.1, 0.5]}}),
    "P3": dict(eps=0.5, hidden=(40, 40), resolution=100,
               observations={"solution": (400, 0), "boundary": (0, 100), "force": (500, 0)},
               stds={"u": {"ff": [5.0], "2ff": [1.0, 5.0]}}),
    "P4": dict(eps=None, hidden=(40, 40), resolution=100,
               observations={"solution": (700, 0), "boundary": (0, 100), "force": (800, 0)},
               stds={"u": {"ff": [1.0], "2ff": [0.2, 1.0]}}),
}

DESK_EPOCHS = 5000
DESK_OBS_2D = 500


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PipelineConfig(_Strict):
    std: float = Field(gt=0)
    rows: Optional[int] = Field(default=None, gt=0)


class NetConfig(_Strict):
    kind: Literal["plain", "fourier"]
    hidden: list[int] = Field(min_length=1)
    pipelines: list[PipelineConfig] = []
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check(self):
        if any(h <= 0 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.kind == "plain" and self.pipelines:
            raise ValueError("plain networks take no pipelines")
        if self.kind == "fourier" and not self.pipelines:
            raise ValueError("fourier networks need at least one pipeline")
        return self


class ObservationConfig(_Strict):
    n_interior: int = Field(ge=0)
    n_boundary: int = Field(default=0, ge=0)
    tau: Optional[float] = Field(default=None, gt=0)


class ScheduleConfig(_Strict):
    kind: Literal["fixed", "decay"] = "fixed"
    factor: float = Field(default=0.95, gt=0, le=1)
    every: Optional[int] = Field(default=None, ge=1)


class ExperimentConfig(_Strict):
    problem: str
    eps: Optional[float] = None
    noise: float = Field(ge=0)
    method: str
    step_size: float = Field(gt=0)
    schedule: ScheduleConfig = ScheduleConfig()
    epochs: int = Field(default=20000, ge=1)
    trajectories: int = Field(default=200, ge=1)
    leapfrog_steps: int = Field(default=500, ge=1)
    keep_last: int = Field(default=150, ge=1)
    prior_std: float = Field(default=1.0, gt=0)
    seed: int = 0
    desk: bool = False
    resolution: Optional[int] = Field(default=None, ge=2)
    observations: Optional[dict[str, ObservationConfig]] = None
    net: Optional[NetConfig] = None
    coefficient_net: Optional[NetConfig] = None

    @model_validator(mode="before")
    @classmethod
    def _lr_alias(cls, data):
        if isinstance(data, dict) and "lr" in data:
            data = dict(data)
            if "step_size" in data:
                raise ValueError("give either step_size or lr, not both")
            data["step_size"] = data.pop("lr")
        return data

    @field_validator("method")
    @classmethod
    def _method(cls, v):
        v = v.lower()
        if v not in METHODS:
            raise ValueError(f"method must be one of {sorted(METHODS)}")
        return v

    @field_validator("problem")
    @classmethod
    def _problem(cls, v):
        key = v.split("_")[0].upper()
        if key not in PROBLEM_DEFAULTS:
            raise ValueError(f"problem must be one of {sorted(PROBLEM_DEFAULTS)}")
        return key

    @model_validator(mode="after")
    def _check(self):
        if self.keep_last > self.trajectories:
            raise ValueError("keep_last must not exceed trajectories")
        make_problem(self.problem, self.epsilon)  # validates eps
        if self.observations is not None:
            unknown = set(self.observations) - {"solution", "force", "boundary", "coefficient"}
            if unknown:
                raise ValueError(f"unknown observation fields {sorted(unknown)}")
        return self

    # -- resolved settings ----------------------------------------------------

    @property
    def estimator(self) -> str:
        return METHODS[self.method][1]

    @property
    def architecture(self) -> str:
        return METHODS[self.method][0]

    @property
    def epsilon(self) -> Optional[float]:
        return self.eps if self.eps is not None else PROBLEM_DEFAULTS[self.problem]["eps"]

    @property
    def effective_epochs(self) -> int:
        return min(self.epochs, DESK_EPOCHS) if self.desk else self.epochs

    @property
    def eval_resolution(self) -> int:
        return self.resolution or PROBLEM_DEFAULTS[self.problem]["resolution"]

    def observation_layout(self) -> dict:
        """field -> (n_interior, n_boundary, tau) after defaults and desk scaling."""
        defaults = PROBLEM_DEFAULTS[self.problem]["observations"]
        if self.observations is None:
            layout = {f: (ni, nb, None) for f, (ni, nb) in defaults.items()}
        else:
            layout = {f: (o.n_interior, o.n_boundary, o.tau) for f, o in self.observations.items()}
        if self.desk and make_problem(self.problem, self.epsilon).dim == 2:
            total = {"force": 0, "solution": 0}
            for f, (ni, nb, _) in layout.items():
                key = "force" if f == "force" else "solution"
                total[key] += ni + nb
            scaled = {}
            for f, (ni, nb, tau) in layout.items():
                key = "force" if f == "force" else "solution"
                ratio = min(1.0, DESK_OBS_2D / total[key]) if total[key] else 1.0
                scaled[f] = (int(round(ni * ratio)), int(round(nb * ratio)), tau)
            layout = scaled
        return layout

    def net_config(self, unknown: str = "u") -> NetConfig:
        override = self.net if unknown == "u" else self.coefficient_net
        if override is not None:
            return override
        d = PROBLEM_DEFAULTS[self.problem]
        arch = self.architecture
        if arch == "plain":
            return NetConfig(kind="plain", hidden=list(d["hidden"]))
        stds = d["stds"][unknown][arch]
        return NetConfig(kind="fourier", hidden=list(d["hidden"]),
                         pipelines=[PipelineConfig(std=s) for s in stds])

    def schedule_every(self) -> int:
        if self.schedule.every is not None:
            return self.schedule.every
        return 20 if self.estimator == "hmc" else 100


class GridConfig(_Strict):
    base: dict
    methods: list[str] = list(METHODS)
    steps: list[float] = list(PAPER_STEPS)
    master_seed: int = 0
    workers: int = Field(default=1, ge=1)
    timing_in_csv: bool = False

    @model_validator(mode="after")
    def _check(self):
        for m in self.methods:
            if m.lower() not in METHODS:
                raise ValueError(f"unknown method {m!r}")
        self.methods = [m.lower() for m in self.methods]
        for s in self.steps:
            if not s > 0:
                raise ValueError("grid steps must be positive")
        # validate the base config once with a representative cell
        self.cell_config(self.methods[0] if self.methods else "bpinn_sgd",
                         self.steps[0] if self.steps else 1e-3)
        return self

    def cell_seed(self, method: str, step: float) -> int:
        digest = hashlib.sha256(f"{self.master_seed}|{method}|{step!r}".encode()).digest()
        return int.from_bytes(digest[:4], "little")

    def cell_config(self, method: str, step: float) -> ExperimentConfig:
        data = dict(self.base)
        data.pop("lr", None)
        data.update(method=method, step_size=step, seed=self.cell_seed(method, step))
        return ExperimentConfig.model_validate(data)


def load_json(path) -> dict:
    with Path(path).open() as fh:
        return json.load(fh)
