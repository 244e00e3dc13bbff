"""Feed-forward encoder/decoder networks, reverse-mode gradients and Adam.

A network is a cascade of affine layers ``Y = X W + b``. Every layer but the
last applies a leaky-linear activation with negative slope 0.1; the last one
is the identity so the output space is unconstrained.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np

from .errors import DataError
from .numerics import Matrix, SeededRng

__all__ = (
    "LayerSpec", "EncoderNetwork", "ForwardTrace", "Gradients", "AdamState", "Checkpoint",
    "init_he", "forward", "backward", "adam_step", "leaky", "leaky_slope",
    "flatten_parameters", "with_parameters", "save_checkpoint", "load_checkpoint",
    "CHECKPOINT_VERSION", "NEGATIVE_SLOPE",
)

logger = logging.getLogger(__name__)

NEGATIVE_SLOPE = 0.1
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise DataError(f"a network needs at least two widths, got {list(dims)}")
        if any(d < 1 for d in dims):
            raise DataError(f"layer widths must be positive, got {list(dims)}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def resolve(cls, dims, input_width: int) -> "LayerSpec":
        """Replace a leading ``-1`` with the dataset width."""
        dims = list(dims)
        if dims and dims[0] == -1:
            dims[0] = input_width
        return cls(tuple(dims))

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    @property
    def n_parameters(self) -> int:
        return sum((n_in + 1) * n_out for n_in, n_out in zip(self.dims, self.dims[1:]))

    def reversed(self) -> "LayerSpec":
        return LayerSpec(self.dims[::-1])


@dataclass(eq=False)
class EncoderNetwork:
    """Weights ``dims[l] × dims[l+1]`` and biases ``dims[l+1]`` per layer."""
    spec: LayerSpec
    weights: list[Matrix]
    biases: list[np.ndarray]
    trained: bool = False

    def __post_init__(self):
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise DataError(f"expected {self.spec.n_layers} layers, got {len(self.weights)} weights and {len(self.biases)} biases")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            n_in, n_out = self.spec.dims[l], self.spec.dims[l + 1]
            if W.shape != (n_in, n_out) or b.shape != (n_out,):
                raise DataError(f"layer {l} expects W {n_in}×{n_out} and b {n_out}, got {W.shape} and {b.shape}")

    @property
    def input_width(self) -> int:
        return self.spec.dims[0]

    @property
    def output_width(self) -> int:
        return self.spec.dims[-1]

    def parameters(self) -> Iterator[np.ndarray]:
        for W, b in zip(self.weights, self.biases):
            yield W
            yield b

    def copy(self) -> "EncoderNetwork":
        return EncoderNetwork(
            self.spec,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            self.trained,
        )

    def __call__(self, X: Matrix) -> Matrix:
        return forward(self, X).output


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    """Activations ``X^(0)…X^(L)`` and pre-activations ``Y^(1)…Y^(L)`` of one batch."""
    activations: list[Matrix]
    pre_activations: list[Matrix]

    @property
    def output(self) -> Matrix:
        return self.activations[-1]

    @property
    def input(self) -> Matrix:
        return self.activations[0]


@dataclass(frozen=True, eq=False)
class Gradients:
    weights: list[Matrix]
    biases: list[np.ndarray]
    input: Matrix

    def parameters(self) -> Iterator[np.ndarray]:
        for W, b in zip(self.weights, self.biases):
            yield W
            yield b


def leaky(Y: Matrix) -> Matrix:
    return np.where(Y > 0, Y, NEGATIVE_SLOPE * Y)


def leaky_slope(Y: Matrix) -> Matrix:
    return np.where(Y > 0, 1.0, NEGATIVE_SLOPE)


def init_he(spec: LayerSpec, rng: SeededRng) -> EncoderNetwork:
    """Gaussian weights with stddev ``√(2/fan_in)``, zero biases."""
    weights, biases = [], []
    for n_in, n_out in zip(spec.dims, spec.dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return EncoderNetwork(spec, weights, biases)


def forward(net: EncoderNetwork, X_batch: Matrix) -> ForwardTrace:
    X = np.asarray(X_batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.input_width:
        raise DataError(f"network expects {net.input_width} input columns, got shape {X.shape}")

    activations = [X]
    pre_activations = []
    last = net.spec.n_layers - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        Y = X @ W + b
        X = Y if l == last else leaky(Y)
        pre_activations.append(Y)
        activations.append(X)

    return ForwardTrace(activations, pre_activations)


def backward(
    net: EncoderNetwork,
    trace: ForwardTrace,
    grad_wrt_latent: Matrix,
    layer_grads: Mapping[int, Matrix] | None = None,
) -> Gradients:
    """Reverse-mode gradients of a scalar loss.

    ``grad_wrt_latent`` is ∂L/∂X^(L). ``layer_grads`` optionally adds
    ∂L/∂X^(l) for intermediate layers ``l`` (keys are activation indices).
    The returned ``input`` gradient is ∂L/∂X^(0).
    """
    G = np.asarray(grad_wrt_latent, dtype=np.float64)
    if G.shape != trace.output.shape:
        raise DataError(f"gradient shape {G.shape} does not match network output {trace.output.shape}")

    layer_grads = dict(layer_grads or {})
    L = net.spec.n_layers
    if L in layer_grads:
        G = G + layer_grads.pop(L)

    grad_W: list[Matrix] = [None] * L
    grad_b: list[np.ndarray] = [None] * L
    for l in reversed(range(L)):
        dY = G if l == L - 1 else G * leaky_slope(trace.pre_activations[l])
        grad_W[l] = trace.activations[l].T @ dY
        grad_b[l] = dY.sum(axis=0)
        G = dY @ net.weights[l].T
        if l in layer_grads:
            extra = layer_grads[l]
            if extra.shape != G.shape:
                raise DataError(f"gradient for layer {l} has shape {extra.shape}, expected {G.shape}")
            G = G + extra

    return Gradients(grad_W, grad_b, G)


@dataclass(eq=False)
class AdamState:
    first: list[np.ndarray]
    second: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_network(cls, net: EncoderNetwork) -> "AdamState":
        params = list(net.parameters())
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])

    def copy(self) -> "AdamState":
        return replace(self, first=[m.copy() for m in self.first], second=[v.copy() for v in self.second])


def adam_step(net: EncoderNetwork, grads: Gradients, state: AdamState, lr: float) -> tuple[EncoderNetwork, AdamState]:
    """Bias-corrected Adam update, in place."""
    params = list(net.parameters())
    grad_list = list(grads.parameters())
    if len(params) != len(grad_list) or len(params) != len(state.first):
        raise DataError("gradient and optimizer state do not match the network")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step

    for p, g, m, v in zip(params, grad_list, state.first, state.second):
        if g.shape != p.shape:
            raise DataError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)

    return net, state


def flatten_parameters(net: EncoderNetwork) -> np.ndarray:
    return np.concatenate([p.ravel() for p in net.parameters()])


def with_parameters(net: EncoderNetwork, vector) -> EncoderNetwork:
    """Copy of ``net`` whose parameters are read from a flat vector."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.size != net.spec.n_parameters:
        raise DataError(f"expected {net.spec.n_parameters} parameters, got {vector.size}")

    weights, biases, offset = [], [], 0
    for W, b in zip(net.weights, net.biases):
        weights.append(vector[offset:offset + W.size].reshape(W.shape).copy())
        offset += W.size
        biases.append(vector[offset:offset + b.size].copy())
        offset += b.size

    return EncoderNetwork(net.spec, weights, biases, net.trained)


@dataclass(eq=False)
class Checkpoint:
    """Everything needed to resume or inspect a run."""
    encoder: EncoderNetwork
    encoder_adam: AdamState
    epoch: int
    rng_state: dict
    losses: list[float] = field(default_factory=list)
    decoder: EncoderNetwork | None = None
    decoder_adam: AdamState | None = None
    meta: dict[str, Any] = field(default_factory=dict)


def _pack(prefix: str, net: EncoderNetwork, adam: AdamState, arrays: dict) -> dict:
    arrays[f"{prefix}/dims"] = np.asarray(net.spec.dims, dtype=np.int64)
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"{prefix}/W{l}"] = W
        arrays[f"{prefix}/b{l}"] = b
    for k, (m, v) in enumerate(zip(adam.first, adam.second)):
        arrays[f"{prefix}/m{k}"] = m
        arrays[f"{prefix}/v{k}"] = v
    return {"trained": net.trained, "adam_step": adam.step}


def _unpack(prefix: str, data, info: dict) -> tuple[EncoderNetwork, AdamState]:
    spec = LayerSpec(tuple(int(d) for d in data[f"{prefix}/dims"]))
    weights = [data[f"{prefix}/W{l}"] for l in range(spec.n_layers)]
    biases = [data[f"{prefix}/b{l}"] for l in range(spec.n_layers)]
    net = EncoderNetwork(spec, weights, biases, bool(info["trained"]))

    n = 2 * spec.n_layers
    adam = AdamState(
        [data[f"{prefix}/m{k}"] for k in range(n)],
        [data[f"{prefix}/v{k}"] for k in range(n)],
        int(info["adam_step"]),
    )
    return net, adam


def save_checkpoint(path: Path | str, checkpoint: Checkpoint) -> Path:
    """Write a checkpoint to exactly ``path`` (no suffix is added)."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    header = {
        "version": CHECKPOINT_VERSION,
        "epoch": checkpoint.epoch,
        "rng_state": checkpoint.rng_state,
        "losses": [float(x) for x in checkpoint.losses],
        "encoder": _pack("encoder", checkpoint.encoder, checkpoint.encoder_adam, arrays),
        "meta": checkpoint.meta,
    }
    if checkpoint.decoder is not None:
        header["decoder"] = _pack("decoder", checkpoint.decoder, checkpoint.decoder_adam, arrays)

    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as f:
            np.savez(f, **arrays)
    except OSError as e:
        raise DataError(f"cannot write checkpoint {path}: {e}") from e

    logger.debug("Wrote checkpoint %s (epoch %d)", path, checkpoint.epoch)
    return path


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(data["header"].tobytes().decode("utf-8"))
            if header.get("version") != CHECKPOINT_VERSION:
                raise DataError(f"{path}: unsupported checkpoint version {header.get('version')!r}")

            encoder, encoder_adam = _unpack("encoder", data, header["encoder"])
            decoder = decoder_adam = None
            if "decoder" in header:
                decoder, decoder_adam = _unpack("decoder", data, header["decoder"])
    except (OSError, KeyError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError(f"cannot read checkpoint {path}: {e}") from e

    return Checkpoint(
        encoder=encoder,
        encoder_adam=encoder_adam,
        epoch=int(header["epoch"]),
        rng_state=header["rng_state"],
        losses=list(header["losses"]),
        decoder=decoder,
        decoder_adam=decoder_adam,
        meta=header.get("meta", {}),
    )
