"""Training objectives and continuation schedules.

Two loss families compare the input layer with one or more encoder layers:

* ``lgp``: the two-way divergence between input and layer similarity sets,
  ``Σ_{i≠j} u·log(u/u′) + (1−u)·log((1−u)/(1−u′))``.
* ``lis``: neighbor distance matching plus a push-away term,
  ``Σ_{j∈N_i} |d − d′| − μ·Σ_{j∉N_i, d′<B} d′``.

Sums run over ordered pairs, so each unordered pair is counted twice. Batch
losses are raw sums. Layer σ and the push threshold B are solved from the
current activations and then held constant while differentiating.
"""
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import DataError
from .graph import SimilarityProvider, SimilaritySet, latent_similarities
from .network import ForwardTrace
from .numerics import Matrix, pairwise_sq_distances

if TYPE_CHECKING:
    from .settings import LossConfig

__all__ = (
    "Schedule", "LossResult", "AutoencoderLoss", "FrozenScales",
    "loss_lgp", "loss_iso", "loss_push", "loss_reconstruction",
    "latent_lgp", "latent_lis", "distance_chain", "median_distance",
    "freeze_scales", "loss_encoder", "loss_autoencoder",
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    """Per-epoch ν (geometric from start to end) and μ (linear down to 0)."""
    nu: tuple[float, ...]
    mu: tuple[float, ...]

    @classmethod
    def build(cls, epochs: int, nu_start: float, nu_end: float, mu0: float) -> "Schedule":
        if epochs < 1:
            raise DataError(f"epochs must be at least 1, got {epochs}")

        if nu_start == nu_end:
            nu = np.full(epochs, float(nu_start))
        else:
            nu = np.geomspace(nu_start, nu_end, epochs)

        mu = np.linspace(mu0, 0.0, epochs) if epochs > 1 else np.array([float(mu0)])
        return cls(tuple(float(v) for v in nu), tuple(float(v) for v in mu))

    @classmethod
    def from_config(cls, epochs: int, cfg: "LossConfig") -> "Schedule":
        return cls.build(epochs, cfg.nu_start, cfg.nu_end, cfg.mu0)

    @property
    def epochs(self) -> int:
        return len(self.nu)

    def at(self, epoch: int) -> tuple[float, float]:
        if not 0 <= epoch < self.epochs:
            raise DataError(f"epoch {epoch} is outside the schedule's 0..{self.epochs - 1}")
        return self.nu[epoch], self.mu[epoch]


@dataclass(frozen=True, eq=False)
class LossResult:
    """Scalar loss and ∂L/∂X^(l) for every activation index it touches."""
    value: float
    activation_grads: dict[int, Matrix]
    terms: dict[str, float] = field(default_factory=dict)

    def split(self, n_layers: int, shape: tuple[int, int]) -> tuple[Matrix, dict[int, Matrix]]:
        """Latent gradient plus the remaining per-layer gradients, as ``backward`` takes them."""
        grads = dict(self.activation_grads)
        latent = grads.pop(n_layers, None)
        return (np.zeros(shape) if latent is None else latent), grads


@dataclass(frozen=True, eq=False)
class AutoencoderLoss:
    value: float
    encoder: LossResult
    reconstruction: float
    output_grad: Matrix


@dataclass(frozen=True)
class FrozenScales:
    """Per-layer latent σ (``lgp``) or push threshold B (``lis``) for one batch."""
    sigma: dict[int, np.ndarray] = field(default_factory=dict)
    push_threshold: dict[int, float] = field(default_factory=dict)


def _off_diagonal(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def loss_lgp(u_in: SimilaritySet, u_lat: SimilaritySet) -> tuple[float, Matrix]:
    """Two-way divergence and its gradient with respect to ``u_lat``.

    Both sets must already be clamped away from 0 and 1. Diagonal entries are
    ignored and get a zero gradient.
    """
    u = np.asarray(u_in, dtype=np.float64)
    v = np.asarray(u_lat, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DataError(f"similarity sets must be square and equal in shape, got {u.shape} and {v.shape}")

    mask = _off_diagonal(u.shape[0])
    p, q = u[mask], v[mask]
    value = float(np.sum(p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))))

    grad = np.zeros_like(v)
    grad[mask] = -p / q + (1.0 - p) / (1.0 - q)
    return value, grad


def loss_iso(D_in: Matrix, D_lat: Matrix, neighbor_mask: np.ndarray) -> float:
    """``Σ_i Σ_{j∈N_i} |d_ij − d′_ij|`` over the masked pairs (distances, not squared)."""
    mask = np.asarray(neighbor_mask, dtype=bool)
    return float(np.abs(D_in[mask] - D_lat[mask]).sum())


def loss_push(D_lat: Matrix, non_neighbor_mask: np.ndarray, B: float) -> float:
    """``−Σ d′_ij`` over non-neighbor pairs closer than ``B``."""
    if not B > 0:
        raise DataError(f"push threshold must be positive, got {B!r}")
    qualifying = np.asarray(non_neighbor_mask, dtype=bool) & (D_lat < B)
    return -float(D_lat[qualifying].sum())


def loss_reconstruction(X: Matrix, X_hat: Matrix) -> tuple[float, Matrix]:
    """Summed squared error and its gradient with respect to ``X_hat``."""
    if X.shape != X_hat.shape:
        raise DataError(f"reconstruction shape {X_hat.shape} does not match input {X.shape}")
    residual = X_hat - X
    return float(np.sum(np.square(residual))), 2.0 * residual


def distance_chain(H: Matrix, Z: Matrix) -> Matrix:
    """Gradient with respect to ``Z`` given ``H_ij = ∂L/∂D_ij`` per ordered pair.

    ``D_ij = ‖z_i − z_j‖²`` is shared by both orderings of a pair.
    """
    S = H + H.T
    np.fill_diagonal(S, 0.0)
    return 2.0 * (S.sum(axis=1)[:, None] * Z - S @ Z)


def median_distance(D: Matrix) -> float:
    """Median of the off-diagonal entries of a distance matrix."""
    n = D.shape[0]
    if n < 2:
        return 0.0
    return float(np.median(D[np.triu_indices(n, 1)]))


def latent_lgp(Z: Matrix, u_in: SimilaritySet, nu: float, q: float, sigma: np.ndarray | None = None) -> tuple[float, Matrix, np.ndarray]:
    """Two-way divergence of a layer ``Z`` against ``u_in`` with its gradient in ``Z``.

    Returns ``(value, grad_Z, sigma)``; σ is solved when not given and is a
    constant for the gradient either way.
    """
    lat = latent_similarities(Z, nu, q, sigma)
    value, G = loss_lgp(u_in, lat.u)
    G = np.where(lat.unclamped, G, 0.0)

    a = lat.conditional
    dL_da = (G + G.T) * (1.0 - a.T)
    da_dD = -a * (nu + 1.0) / (lat.sigma[:, None] * nu + lat.sq_dists)
    H = dL_da * da_dD
    np.fill_diagonal(H, 0.0)

    return value, distance_chain(H, Z), lat.sigma


def latent_lis(
    Z: Matrix,
    D_in: Matrix,
    neighbor_mask: np.ndarray,
    mu: float,
    B: float | None = None,
) -> tuple[float, Matrix, float, dict[str, float]]:
    """Neighbor distance matching plus μ-weighted push-away, with its gradient in ``Z``.

    ``D_in`` holds input distances (not squared). Returns ``(value, grad_Z, B, terms)``.
    """
    n = Z.shape[0]
    D_lat = np.sqrt(pairwise_sq_distances(Z))
    if B is None:
        B = median_distance(D_lat)

    mask = np.asarray(neighbor_mask, dtype=bool) & _off_diagonal(n)
    non_neighbors = ~mask & _off_diagonal(n)

    iso = loss_iso(D_in, D_lat, mask)
    dL_dd = np.where(mask, np.sign(D_lat - D_in), 0.0)

    push = 0.0
    if B > 0:
        push = loss_push(D_lat, non_neighbors, B)
        dL_dd -= mu * (non_neighbors & (D_lat < B))

    with np.errstate(divide="ignore", invalid="ignore"):
        H = np.where(D_lat > 0, dL_dd / (2.0 * D_lat), 0.0)

    return iso + mu * push, distance_chain(H, Z), B, {"iso": iso, "push": push}


def _resolve_layers(cfg: "LossConfig", trace: ForwardTrace) -> list[int]:
    L = len(trace.activations) - 1
    layers = []
    for layer in cfg.layers:
        index = L + 1 + layer if layer < 0 else layer
        if not 1 <= index <= L:
            raise DataError(f"layer {layer} is outside the encoder's 1..{L}")
        if index not in layers:
            layers.append(index)
    return layers


def freeze_scales(trace: ForwardTrace, cfg: "LossConfig", nu: float) -> FrozenScales:
    """Solve the per-batch σ or B of every compared layer at the current activations."""
    sigma, thresholds = {}, {}
    for index in _resolve_layers(cfg, trace):
        Z = trace.activations[index]
        if cfg.mode == "lgp":
            lat = latent_similarities(Z, nu, cfg.latent_perplexity)
            sigma[index] = lat.sigma
        else:
            thresholds[index] = cfg.push_threshold or median_distance(np.sqrt(pairwise_sq_distances(Z)))
    return FrozenScales(sigma, thresholds)


def loss_encoder(
    indices,
    trace: ForwardTrace,
    provider: SimilarityProvider,
    cfg: "LossConfig",
    schedule: Schedule,
    epoch: int,
    scales: FrozenScales | None = None,
) -> LossResult:
    """α-weighted loss between the input batch and each configured layer."""
    indices = np.asarray(indices)
    n = indices.size
    if n < 2:
        return LossResult(0.0, {})
    if trace.input.shape[0] != n:
        raise DataError(f"trace has {trace.input.shape[0]} rows for a batch of {n}")

    nu, mu = schedule.at(epoch)
    D_sq = provider.sq_distances(indices)

    if cfg.mode == "lgp":
        u_in = provider.restrict(indices, D_sq)
    else:
        D_in = np.sqrt(D_sq)
        neighbors = provider.graph.neighbor_mask(indices, cfg.lis_k)

    value = 0.0
    grads: dict[int, Matrix] = {}
    terms: dict[str, float] = {}
    for index in _resolve_layers(cfg, trace):
        Z = trace.activations[index]
        if cfg.mode == "lgp":
            sigma = None if scales is None else scales.sigma.get(index)
            term, grad, _ = latent_lgp(Z, u_in, nu, cfg.latent_perplexity, sigma)
            terms[f"lgp.{index}"] = term
        else:
            B = cfg.push_threshold if scales is None else scales.push_threshold.get(index, cfg.push_threshold)
            term, grad, _, parts = latent_lis(Z, D_in, neighbors, mu, B)
            terms[f"iso.{index}"] = parts["iso"]
            terms[f"push.{index}"] = parts["push"]

        value += cfg.alpha * term
        grads[index] = cfg.alpha * grad

    return LossResult(value, grads, terms)


def loss_autoencoder(
    indices,
    enc_trace: ForwardTrace,
    dec_trace: ForwardTrace,
    provider: SimilarityProvider,
    cfg: "LossConfig",
    schedule: Schedule,
    epoch: int,
    scales: FrozenScales | None = None,
) -> AutoencoderLoss:
    """Encoder loss plus β times the summed squared reconstruction error.

    ``output_grad`` is ∂L/∂X̂ for the decoder's backward pass; the decoder's
    input gradient then joins the encoder's latent gradient.
    """
    encoder = loss_encoder(indices, enc_trace, provider, cfg, schedule, epoch, scales)
    reconstruction, grad = loss_reconstruction(enc_trace.input, dec_trace.output)

    if cfg.beta == 0:
        return AutoencoderLoss(encoder.value, encoder, reconstruction, np.zeros_like(grad))

    return AutoencoderLoss(encoder.value + cfg.beta * reconstruction, encoder, reconstruction, cfg.beta * grad)
