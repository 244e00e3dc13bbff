"""Training loop: batching, continuation schedules, optimization and checkpoints.

The input neighborhood graph is built once. Each epoch draws one permutation
from the run's single random stream, walks it in batches, and takes one Adam
step per batch. An autoencoder run trains a mirrored decoder jointly; its
initial weights come from a derived stream so the encoder side sees exactly
the draws an encoder-only run would.
"""
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import logs
from .datasets import Dataset
from .errors import ConfigError, DataError, NumericalError
from .graph import NeighborGraph, SimilarityProvider, input_similarities, kernel_evaluations
from .losses import Schedule, loss_autoencoder, loss_encoder
from .metrics import MetricsReport, evaluate_all
from .network import (
    AdamState, Checkpoint, EncoderNetwork, LayerSpec,
    adam_step, backward, forward, init_he, load_checkpoint, save_checkpoint,
)
from .numerics import Matrix, derived_rng, make_rng, restore_rng, rng_state
from .settings import TrainConfig

__all__ = (
    "RunReport", "TrainHooks", "Trainer",
    "train_encoder", "train_autoencoder", "export_layer_activations", "interpolate_latent",
    "checkpoint_path",
)

logger = logging.getLogger(__name__)
progress = logging.getLogger(f"{__name__}.progress")

DECODER_STREAM = 1


class TrainHooks:
    """Callbacks into the training loop. Subclass and override what you need."""

    def on_epoch_start(self, epoch: int, nu: float, mu: float) -> None:
        pass

    def on_batch_end(self, epoch: int, batch: int, loss: float) -> None:
        pass


@dataclass(eq=False)
class RunReport:
    config: TrainConfig
    losses: list[float]
    embedding: Matrix
    wall_time: float
    kernel_evaluations: list[int] = field(default_factory=list)
    reconstruction: list[float] = field(default_factory=list)
    metrics: list[tuple[int, MetricsReport]] = field(default_factory=list)
    graph: NeighborGraph | None = None
    batch_size: int = 0


def checkpoint_path(run_dir: Path | str, epoch: int) -> Path:
    return Path(run_dir) / f"ckpt-{epoch}"


class Trainer:
    """One training run over a dataset. Not reusable across runs."""

    def __init__(
        self,
        ds: Dataset,
        cfg: TrainConfig,
        *,
        autoencoder: bool = False,
        hooks: TrainHooks | None = None,
        run_dir: Path | str | None = None,
        resume: Checkpoint | Path | str | None = None,
    ):
        if ds.size < 2:
            raise DataError("training needs at least two points")

        self.ds = ds
        self.cfg = cfg
        self.autoencoder = autoencoder
        self.hooks = hooks or TrainHooks()
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.log = logs.adapt_logger(progress, {"run": ds.name})

        self.batch_size = min(cfg.batch_size, ds.size)
        self.schedule = Schedule.from_config(cfg.epochs, cfg.loss)

        self.rng = make_rng(cfg.seed)
        spec = LayerSpec.resolve(cfg.dims, ds.width)
        if spec.dims[0] != ds.width:
            raise DataError(f"network input width {spec.dims[0]} does not match data width {ds.width}")

        self.encoder = init_he(spec, self.rng)
        self.encoder_adam = AdamState.for_network(self.encoder)
        self.decoder = self.decoder_adam = None
        if autoencoder:
            self.decoder = init_he(spec.reversed(), derived_rng(cfg.seed, DECODER_STREAM))
            self.decoder_adam = AdamState.for_network(self.decoder)

        self.epoch = 0
        self.losses: list[float] = []
        self.evaluations: list[int] = []
        self.reconstruction: list[float] = []
        self.metrics: list[tuple[int, MetricsReport]] = []

        if resume is not None:
            self._restore(load_checkpoint(resume) if not isinstance(resume, Checkpoint) else resume)

        self.graph: NeighborGraph | None = None
        self.provider: SimilarityProvider | None = None

    def _meta(self) -> dict:
        return {
            "config": self.cfg.model_dump(mode="json"),
            "fingerprint": self.ds.fingerprint(),
            "kernel_evaluations": self.evaluations,
            "reconstruction": self.reconstruction,
            "metrics": [[epoch, report.model_dump(mode="json")] for epoch, report in self.metrics],
        }

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            encoder=self.encoder,
            encoder_adam=self.encoder_adam,
            epoch=self.epoch,
            rng_state=rng_state(self.rng),
            losses=list(self.losses),
            decoder=self.decoder,
            decoder_adam=self.decoder_adam,
            meta=self._meta(),
        )

    def _restore(self, ckpt: Checkpoint) -> None:
        meta = ckpt.meta
        if meta.get("config") != self.cfg.model_dump(mode="json"):
            raise ConfigError("checkpoint was written with a different configuration")
        if meta.get("fingerprint") != self.ds.fingerprint():
            raise DataError("checkpoint was written for different data")
        if (ckpt.decoder is not None) != self.autoencoder:
            raise ConfigError("checkpoint and run disagree on whether a decoder is trained")

        self.encoder, self.encoder_adam = ckpt.encoder, ckpt.encoder_adam
        self.decoder, self.decoder_adam = ckpt.decoder, ckpt.decoder_adam
        self.rng = restore_rng(ckpt.rng_state)
        self.epoch = ckpt.epoch
        self.losses = list(ckpt.losses)
        self.evaluations = list(meta.get("kernel_evaluations", []))
        self.reconstruction = list(meta.get("reconstruction", []))
        self.metrics = [(int(e), MetricsReport.model_validate(r)) for e, r in meta.get("metrics", [])]
        logger.info("Resuming %s at epoch %d", self.ds.name, self.epoch)

    def _save(self) -> None:
        if self.run_dir is not None:
            save_checkpoint(checkpoint_path(self.run_dir, self.epoch), self.checkpoint())

    def _step(self, indices: np.ndarray, epoch: int) -> tuple[float, float]:
        """One optimizer step on a batch; returns (loss, reconstruction error)."""
        loss_cfg = self.cfg.loss
        trace = forward(self.encoder, self.ds.features[indices])
        L = self.encoder.spec.n_layers

        if self.decoder is None:
            result = loss_encoder(indices, trace, self.provider, loss_cfg, self.schedule, epoch)
            value, reconstruction = result.value, 0.0
        else:
            dec_trace = forward(self.decoder, trace.output)
            ae = loss_autoencoder(indices, trace, dec_trace, self.provider, loss_cfg, self.schedule, epoch)
            result, value, reconstruction = ae.encoder, ae.value, ae.reconstruction

        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss {value!r}")

        latent_grad, layer_grads = result.split(L, trace.output.shape)
        if self.decoder is not None:
            dec_grads = backward(self.decoder, dec_trace, ae.output_grad)
            if loss_cfg.beta:
                latent_grad = latent_grad + dec_grads.input
            adam_step(self.decoder, dec_grads, self.decoder_adam, self.cfg.lr)

        adam_step(self.encoder, backward(self.encoder, trace, latent_grad, layer_grads), self.encoder_adam, self.cfg.lr)
        return value, reconstruction

    def _epoch(self, epoch: int) -> None:
        nu, mu = self.schedule.at(epoch)
        self.hooks.on_epoch_start(epoch, nu, mu)
        kernel_evaluations.reset()

        order = self.rng.permutation(self.ds.size)
        total = reconstruction = 0.0
        for batch, start in enumerate(range(0, self.ds.size, self.batch_size)):
            indices = order[start:start + self.batch_size]
            if indices.size < 2:
                logger.debug("Skipping final batch of %d point(s) at epoch %d", indices.size, epoch)
                continue

            try:
                value, rec = self._step(indices, epoch)
            except NumericalError as e:
                if e.epoch is not None:
                    raise
                raise NumericalError(str(e), epoch=epoch, batch=batch) from e

            total += value
            reconstruction += rec
            self.hooks.on_batch_end(epoch, batch, value)

        self.losses.append(total)
        self.evaluations.append(kernel_evaluations.reset())
        if self.decoder is not None:
            self.reconstruction.append(reconstruction)

        if self.cfg.eval_every and (epoch + 1) % self.cfg.eval_every == 0:
            report = evaluate_all(self.ds.features, self.encoder(self.ds.features), self.ds.labels, seed=self.cfg.seed)
            self.metrics.append((epoch, report))
            self.log.info("con %.4f tru %.4f rre %.4f", report.con, report.tru, report.rre, extra={"epoch": epoch})

        self.log.info("loss %.6g nu %.4g mu %.4g", total, nu, mu, extra={"epoch": epoch})

    def run(self) -> RunReport:
        started = time.perf_counter()
        cfg = self.cfg

        self.graph, self.provider = input_similarities(self.ds, cfg)

        with logs.sampled(progress, cfg.log_every, cfg.epochs):
            while self.epoch < cfg.epochs:
                self._epoch(self.epoch)
                self.epoch += 1
                if cfg.checkpoint_every and self.epoch % cfg.checkpoint_every == 0 and self.epoch < cfg.epochs:
                    self._save()

        self.encoder.trained = True
        if self.decoder is not None:
            self.decoder.trained = True
        self._save()

        embedding = self.encoder(self.ds.features)
        if not np.all(np.isfinite(embedding)):
            raise NumericalError("embedding contains non-finite values", epoch=cfg.epochs - 1)

        return RunReport(
            config=cfg,
            losses=list(self.losses),
            embedding=embedding,
            wall_time=time.perf_counter() - started,
            kernel_evaluations=list(self.evaluations),
            reconstruction=list(self.reconstruction),
            metrics=list(self.metrics),
            graph=self.graph,
            batch_size=self.batch_size,
        )


def train_encoder(
    ds: Dataset,
    cfg: TrainConfig,
    *,
    hooks: TrainHooks | None = None,
    run_dir: Path | str | None = None,
    resume: Checkpoint | Path | str | None = None,
) -> tuple[EncoderNetwork, RunReport]:
    trainer = Trainer(ds, cfg, hooks=hooks, run_dir=run_dir, resume=resume)
    report = trainer.run()
    return trainer.encoder, report


def train_autoencoder(
    ds: Dataset,
    cfg: TrainConfig,
    *,
    hooks: TrainHooks | None = None,
    run_dir: Path | str | None = None,
    resume: Checkpoint | Path | str | None = None,
) -> tuple[EncoderNetwork, EncoderNetwork, RunReport]:
    trainer = Trainer(ds, cfg, autoencoder=True, hooks=hooks, run_dir=run_dir, resume=resume)
    report = trainer.run()
    return trainer.encoder, trainer.decoder, report


def export_layer_activations(net: EncoderNetwork, ds: Dataset) -> list[Matrix]:
    """``X^(0)…X^(L)`` for the whole dataset."""
    return forward(net, ds.features).activations


def interpolate_latent(decoder: EncoderNetwork, z_a, z_b, steps: int) -> Matrix:
    """Decode ``steps`` latent points spaced evenly from ``z_a`` to ``z_b`` inclusive."""
    if not decoder.trained:
        raise DataError("decoder has not been trained")
    if steps < 2:
        raise DataError(f"interpolation needs at least 2 steps, got {steps}")

    z_a = np.asarray(z_a, dtype=np.float64).ravel()
    z_b = np.asarray(z_b, dtype=np.float64).ravel()
    if z_a.shape != (decoder.input_width,) or z_b.shape != (decoder.input_width,):
        raise DataError(f"latent points must have {decoder.input_width} coordinates")

    t = np.linspace(0.0, 1.0, steps)[:, None]
    return decoder((1.0 - t) * z_a + t * z_b)
