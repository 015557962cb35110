"""Sine-activated MLPs and Fourier-feature multi-pipeline networks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import (Jet, JetValue, LayoutError, ParamVector, Tensor, jet_concat, jet_cos,
                       jet_dense, jet_input, jet_linear, jet_sin, layout_size, unflatten)

PLAIN = "plain"
FOURIER = "fourier"


@dataclass
class FourierPipelineSpec:
    """One random Fourier feature pipeline.

    ``lambda_matrix`` is drawn from N(0, lambda_std**2) once, at
    initialization, and is never part of the trainable parameters.
    """

    lambda_std: float
    lambda_rows: Optional[int] = None
    lambda_matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.lambda_std > 0:
            raise ValueError("lambda_std must be positive")
        if self.lambda_matrix is not None:
            self.lambda_matrix = np.array(self.lambda_matrix, dtype=np.float64)
            self.lambda_matrix.setflags(write=False)


@dataclass
class NetworkSpec:
    kind: str
    input_dim: int
    hidden_widths: tuple
    pipelines: list = field(default_factory=list)
    output_dim: int = 1

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        if not self.hidden_widths or any(w <= 0 for w in self.hidden_widths):
            raise ValueError("hidden_widths must be a non-empty list of positive ints")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if self.kind == PLAIN and self.pipelines:
            raise ValueError("plain networks take no Fourier pipelines")
        if self.kind == FOURIER:
            if not self.pipelines:
                raise ValueError("Fourier networks need at least one pipeline")
            m = self.hidden_widths[0]
            for p in self.pipelines:
                if p.lambda_rows is None:
                    p.lambda_rows = m
                if p.lambda_rows != m:
                    raise ValueError(f"lambda_rows must equal the first hidden width ({m})")
        elif self.kind != PLAIN:
            raise ValueError(f"unknown network kind {self.kind!r}")

    @classmethod
    def plain(cls, input_dim, hidden_widths=(30, 30)):
        return cls(PLAIN, input_dim, hidden_widths)

    @classmethod
    def fourier(cls, input_dim, stds, hidden_widths=(30, 30)):
        return cls(FOURIER, input_dim, hidden_widths,
                   [FourierPipelineSpec(float(s)) for s in stds])


def _dense_layout(prefix, sizes):
    """Layout for consecutive dense layers mapping sizes[i] -> sizes[i+1]."""
    blocks = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        blocks.append((f"{prefix}W{i + 2}", (n_out, n_in)))
        blocks.append((f"{prefix}b{i + 2}", (n_out,)))
    return blocks


class Network:
    """Network architecture plus its flat parameter layout.

    Block names are prefixed with ``prefix`` so several networks can share
    one parameter vector.
    """

    def __init__(self, spec: NetworkSpec, prefix: str = ""):
        self.spec = spec
        self.prefix = prefix
        d, widths = spec.input_dim, spec.hidden_widths
        layout = []
        if spec.kind == PLAIN:
            layout += [(f"{prefix}W1", (widths[0], d)), (f"{prefix}b1", (widths[0],))]
            layout += _dense_layout(prefix, widths)
            last = widths[-1]
        else:
            m = widths[0]
            for n, _ in enumerate(spec.pipelines, start=1):
                p = f"{prefix}p{n}."
                layout += [(f"{p}W_lin", (m, d)), (f"{p}b_lin", (m,))]
                layout += _dense_layout(p, (3 * m,) + widths[1:])
            last = (widths[-1] if len(widths) > 1 else 3 * m) * len(spec.pipelines)
        layout += [(f"{prefix}WO", (spec.output_dim, last)), (f"{prefix}bO", (spec.output_dim,))]
        self.layout = tuple(layout)

    @property
    def size(self) -> int:
        return layout_size(self.layout)

    # -- evaluation -------------------------------------------------------

    def _hidden(self, blocks, jet: Jet, prefix: str, n_layers: int, start: int, trace):
        for i in range(start, start + n_layers):
            jet = jet_sin(jet_linear(jet, blocks[f"{prefix}W{i}"], blocks[f"{prefix}b{i}"]))
            if trace is not None:
                trace.append(jet.value.value)
        return jet

    def jet(self, blocks: dict, x: np.ndarray, derivatives: bool = True, trace=None) -> Jet:
        """Evaluate on a batch ``x`` of shape (N, d).

        ``blocks`` maps layout names to :class:`Tensor` (or arrays). With
        ``derivatives=False`` the returned jet carries no derivative terms.
        """
        spec = self.spec
        x = np.asarray(x, dtype=np.float64).reshape(-1, spec.input_dim)
        blocks = {k: v if isinstance(v, Tensor) else Tensor(v) for k, v in blocks.items()}
        seed = jet_input(x) if derivatives else Jet(Tensor(x), [], [])
        pre = self.prefix
        widths = spec.hidden_widths
        if spec.kind == PLAIN:
            h = self._hidden(blocks, seed, pre, len(widths), 1, trace)
        else:
            feats = []
            for n, pipe in enumerate(spec.pipelines, start=1):
                if pipe.lambda_matrix is None:
                    raise LayoutError("Fourier pipeline has no Lambda matrix; call init_params")
                p = f"{pre}p{n}."
                zeta = fourier_features_jet(seed, pipe.lambda_matrix,
                                            blocks[f"{p}W_lin"], blocks[f"{p}b_lin"])
                if trace is not None:
                    trace.append(zeta.value.value)
                feats.append(self._hidden(blocks, zeta, p, len(widths) - 1, 2, trace))
            h = feats[0] if len(feats) == 1 else jet_concat(feats)
        out = jet_linear(h, blocks[f"{pre}WO"], blocks[f"{pre}bO"])
        return jet_dense(out) if derivatives else out

    def predict(self, params, x) -> np.ndarray:
        """Plain numpy output values, shape (N, output_dim)."""
        blocks = _blocks(self, params)
        return self.jet(blocks, x, derivatives=False).value.value

    def activations(self, params, x) -> list:
        """Post-activation arrays of every hidden layer (feature layer included)."""
        trace: list = []
        self.jet(_blocks(self, params), x, derivatives=False, trace=trace)
        return trace


def _blocks(net: Network, params) -> dict:
    if isinstance(params, ParamVector):
        blocks = params.unflatten()
    elif isinstance(params, dict):
        blocks = params
    else:
        blocks = unflatten(np.asarray(params), net.layout)
    missing = [n for n, _ in net.layout if n not in blocks]
    if missing:
        raise LayoutError(f"parameters missing blocks {missing}")
    for name, shape in net.layout:
        if tuple(np.shape(blocks[name].value if isinstance(blocks[name], Tensor)
                          else blocks[name])) != shape:
            raise LayoutError(f"block {name!r} does not have shape {shape}")
    return blocks


def fourier_features_jet(seed: Jet, lambda_matrix, w_lin, b_lin) -> Jet:
    """[W_lin x + b_lin ; cos(pi Lambda x) ; sin(pi Lambda x)] as a jet."""
    scaled = jet_linear(seed, Tensor(np.pi * np.asarray(lambda_matrix)))
    return jet_concat([jet_linear(seed, as_t(w_lin), as_t(b_lin)),
                       jet_cos(scaled), jet_sin(scaled)])


def as_t(v):
    return v if isinstance(v, Tensor) else Tensor(v)


def fourier_features(x, pipeline: FourierPipelineSpec, w_lin, b_lin) -> np.ndarray:
    """Feature vector of length 3m for a single point ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return fourier_features_jet(Jet(Tensor(x), [], []), pipeline.lambda_matrix,
                                w_lin, b_lin).value.value[0]


def init_params(spec: NetworkSpec, rng: np.random.Generator, prefix: str = "") -> ParamVector:
    """Draw Lambda matrices (if not yet drawn) then weights N(0, 1/fan_in), zero biases."""
    for pipe in spec.pipelines:
        if pipe.lambda_matrix is None:
            lam = rng.normal(0.0, pipe.lambda_std, size=(pipe.lambda_rows, spec.input_dim))
            lam.setflags(write=False)
            pipe.lambda_matrix = lam
    net = Network(spec, prefix)
    blocks = {}
    for name, shape in net.layout:
        if len(shape) == 2:
            blocks[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[1]), size=shape)
        else:
            blocks[name] = np.zeros(shape)
    return ParamVector.flatten(blocks, net.layout)


def forward(net: Network, params, x) -> float:
    """Scalar network output at a single point."""
    return float(net.predict(params, np.atleast_1d(x).reshape(1, -1))[0, 0])


def eval_with_spatial_derivs(net: Network, params, x) -> JetValue:
    """Value, first and pure second spatial derivatives at one point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64)).reshape(1, -1)
    with np.errstate(all="ignore"):
        jet = net.jet(_blocks(net, params), x)
    return JetValue(jet.value.value[0, 0],
                    [t.value[0, 0] for t in jet.d1], [t.value[0, 0] for t in jet.d2])
