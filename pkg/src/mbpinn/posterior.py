"""Gaussian prior and likelihoods forming the (unnormalized) log posterior.

Additive constants (the Gaussian normalizers) are dropped throughout; they
do not depend on the parameters and cancel in HMC acceptance ratios.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import ParamVector, Tensor, unflatten, value_and_grad
from .data import ObservationSet
from .nets import Network
from .problems import BOUNDARY, COEFFICIENT, FORCE, SOLUTION, PdeProblem


def log_prior(params, prior_std: float = 1.0) -> float:
    """-|theta|^2 / (2 prior_std^2)."""
    if not prior_std > 0:
        raise ValueError("prior_std must be positive")
    theta = params.values if isinstance(params, ParamVector) else np.asarray(params)
    return float(-np.dot(theta, theta) / (2.0 * prior_std**2))


def log_likelihood_field(obs: ObservationSet, predict) -> float:
    """Gaussian log-likelihood of one observation set.

    ``predict`` is either an array of predictions at ``obs.points`` or a
    callable mapping an (N, d) point array to N predictions.
    """
    pred = predict(obs.points) if callable(predict) else predict
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    with np.errstate(all="ignore"):
        r = pred - obs.noisy
        return float(-np.sum(r * r) / (2.0 * obs.tau**2))


def concat_params(parts: Sequence[ParamVector]) -> ParamVector:
    layout = tuple(b for p in parts for b in p.layout)
    return ParamVector(np.concatenate([p.values for p in parts]), layout)


class PosteriorKernel:
    """Log posterior of the network parameters given all observation sets.

    ``nets`` maps unknown names (``"u"``, and ``"k"`` for problems with an
    unknown coefficient) to networks whose layouts are concatenated in
    that order to form the joint parameter vector.
    """

    def __init__(self, problem: PdeProblem, nets: dict, observations: Sequence[ObservationSet],
                 prior_std: float = 1.0):
        if not prior_std > 0:
            raise ValueError("prior_std must be positive")
        missing = [u for u in problem.unknowns if u not in nets]
        if missing:
            raise ValueError(f"no network for unknown(s) {missing}")
        for obs in observations:
            if obs.field_id == COEFFICIENT and "k" not in nets:
                raise ValueError("coefficient observations need a coefficient network")
            if not obs.tau > 0:
                raise ValueError("every observation set needs tau > 0")
        self.problem = problem
        self.nets = dict(nets)
        self.observations = list(observations)
        self.prior_std = float(prior_std)
        self.layout = tuple(b for name in self.nets for b in self.nets[name].layout)
        # per-set constants reused on every evaluation
        self._targets = [o.noisy.reshape(-1, 1) for o in self.observations]
        self._weights = [1.0 / (2.0 * o.tau**2) for o in self.observations]

    @property
    def size(self) -> int:
        return sum(n.size for n in self.nets.values())

    def _predict(self, blocks, obs: ObservationSet):
        pts = obs.points
        if obs.field_id in (SOLUTION, BOUNDARY):
            # all boundary operators in scope are Dirichlet (identity)
            return self.nets["u"].jet(blocks, pts, derivatives=False).value
        if obs.field_id == COEFFICIENT:
            return self.nets["k"].jet(blocks, pts, derivatives=False).value
        if obs.field_id == FORCE:
            ujet = self.nets["u"].jet(blocks, pts)
            k = None
            if "k" in self.problem.unknowns:
                k = self.nets["k"].jet(blocks, pts, derivatives=False).value
            return self.problem.residual(pts, ujet, k)
        raise ValueError(f"unknown field {obs.field_id!r}")

    def terms(self, theta: Tensor) -> list:
        """Graph nodes for [log prior, log likelihood of each observation set]."""
        blocks = unflatten(theta, self.layout)
        out = [-theta.square().sum() * (1.0 / (2.0 * self.prior_std**2))]
        for obs, target, w in zip(self.observations, self._targets, self._weights):
            pred = self._predict(blocks, obs)
            out.append(-(pred - target).square().sum() * w)
        return out

    def log_posterior_tensor(self, theta: Tensor) -> Tensor:
        terms = self.terms(theta)
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total

    def _values(self, params) -> np.ndarray:
        values = params.values if isinstance(params, ParamVector) else np.asarray(params)
        if values.shape != (self.size,):
            raise ValueError(f"parameter vector of length {values.size}, kernel needs {self.size}")
        return values

    def log_posterior(self, params) -> float:
        with np.errstate(all="ignore"):
            return float(self.log_posterior_tensor(Tensor(self._values(params))).value)

    def value_and_grad(self, params) -> tuple[float, np.ndarray]:
        """(log posterior, gradient); non-finite entries are returned unchanged."""
        return value_and_grad(self.log_posterior_tensor, self._values(params))

    def loss_and_grad(self, params) -> tuple[float, np.ndarray]:
        value, grad = self.value_and_grad(params)
        return -value, -grad

    def field_log_likelihoods(self, params) -> dict:
        """Per-observation-set log-likelihood values keyed by position and field."""
        with np.errstate(all="ignore"):
            terms = self.terms(Tensor(self._values(params)))
        return {(i, o.field_id): float(t.value)
                for i, (o, t) in enumerate(zip(self.observations, terms[1:]))}

    def predictor(self, field_id: str, params) -> Callable:
        """Numpy predictor (points -> values) for one observed field."""
        blocks = unflatten(self._values(params), self.layout)

        def predict(points):
            obs = ObservationSet(field_id, points, np.zeros(len(points)), np.zeros(len(points)),
                                 0.0, 1.0)
            with np.errstate(all="ignore"):
                return np.asarray(self._predict(blocks, obs).value).reshape(-1)
        return predict


def log_posterior_kernel(kernel: PosteriorKernel, params) -> float:
    return kernel.log_posterior(params)


def neg_log_posterior_loss(kernel: PosteriorKernel, params) -> float:
    return -kernel.log_posterior(params)


def residual(problem: PdeProblem, nets: dict, params, x) -> np.ndarray:
    """Differential operator applied to the network fields at points ``x``."""
    layout = tuple(b for name in nets for b in nets[name].layout)
    values = params.values if isinstance(params, ParamVector) else np.asarray(params)
    blocks = unflatten(values, layout)
    x = np.asarray(x, dtype=np.float64).reshape(-1, problem.dim)
    with np.errstate(all="ignore"):
        ujet = nets["u"].jet(blocks, x)
        k = nets["k"].jet(blocks, x, derivatives=False).value if "k" in problem.unknowns else None
        return np.asarray(problem.residual(x, ujet, k).value).reshape(-1)
