"""WAE-GAN optimization with a sphere-projected generator input.

Each step alternates two phases on the same batch:

1. discriminator: encodings (no gradient to the encoder) are labelled fake,
   draws from N(0, I) are labelled real; only discriminator weights move.
2. autoencoder: z = encode(x), the generator sees project(z) only, the
   reconstruction loss is added to ``adv_weight * bce(D(z), 1)``; only encoder
   and generator weights move.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError, Tensor
from .data import Dataset, ScalarStandardizer
from .model import ArchConfig, ModelParams, discriminate, encode, generate, init_params, project_to_sphere
from .seeding import stream

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "recon_image_mse", "recon_scalar_mse", "adv_loss", "disc_loss", "wall_ms")


class NumericalAbort(RuntimeError):
    def __init__(self, epoch: int, batch: int, which: str, detail: str = ""):
        msg = f"non-finite {which} at epoch {epoch}, batch {batch}"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.epoch, self.batch, self.which = epoch, batch, which


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    adv_weight: float = 1.0
    scalar_weight: float = 4.0
    seed: int = 0
    log_wall_time: bool = False

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.adv_weight < 0:
            raise ValueError("adv_weight must be >= 0")
        if self.epochs < 0 or self.batch_size < 2:
            raise ValueError("epochs must be >= 0 and batch_size >= 2")


# ---------------------------------------------------------------------------
# prior and optimizer
# ---------------------------------------------------------------------------


def sample_prior(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """(n, d) i.i.d. standard normal draws (numpy's ziggurat transform), float32."""
    if n < 1 or d < 1:
        raise ValueError("sample_prior needs n, d >= 1")
    return rng.standard_normal((n, d), dtype=np.float32)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, arr: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(arr), np.zeros_like(arr))


def adam_update(param: np.ndarray, grad: np.ndarray | None, state: AdamState, cfg: TrainConfig) -> None:
    """One in-place bias-corrected Adam step on ``param``."""
    if grad is None:
        grad = np.zeros_like(param)
    if grad.shape != param.shape or state.m.shape != param.shape:
        raise ValueError(f"adam_update: shape mismatch param {param.shape}, grad {grad.shape}, state {state.m.shape}")
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * (grad * grad)
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    param -= (cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)).astype(param.dtype)


class Adam:
    """Adam over a named group of tensors; state is created lazily per name."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.states: dict[str, AdamState] = {}

    def step(self, tensors: dict[str, Tensor]) -> None:
        for name, t in tensors.items():
            state = self.states.get(name)
            if state is None:
                state = self.states[name] = AdamState.zeros_like(t.data)
            adam_update(t.data, t.grad, state, self.cfg)


# ---------------------------------------------------------------------------
# one WAE-GAN step
# ---------------------------------------------------------------------------


@dataclass
class StepProbe:
    """Records what each network was fed during a step (for invariant checks)."""

    generator_input_norms: list[np.ndarray] = field(default_factory=list)
    discriminator_input_tags: list[str | None] = field(default_factory=list)

    def saw_generator(self, z: Tensor) -> None:
        self.generator_input_norms.append(np.linalg.norm(z.data.astype(np.float64), axis=1))

    def saw_discriminator(self, z: Tensor) -> None:
        self.discriminator_input_tags.append(z.tag)


@dataclass
class StepLosses:
    recon_image: float
    recon_scalar: float
    adv: float
    disc: float


def _finite(value: float, which: str, where: tuple[int, int]) -> float:
    if not math.isfinite(value):
        raise NumericalAbort(where[0], where[1], which)
    return value


def _discriminate(params: ModelParams, z: Tensor, probe: StepProbe | None) -> Tensor:
    if probe is not None:
        probe.saw_discriminator(z)
    return discriminate(params, z)


def discriminator_phase(
    params: ModelParams,
    images: np.ndarray,
    scalars: np.ndarray,
    rng: np.random.Generator,
    opt: Adam,
    probe: StepProbe | None = None,
    where: tuple[int, int] = (0, 0),
) -> float:
    with ad.no_grad():
        # batch statistics, but running statistics stay untouched so this phase changes no encoder state
        z_fake = encode(params, images, scalars, training=True, update_stats=False)
    z_fake.tag = "encoding"
    z_real = Tensor(sample_prior(len(images), params.arch.latent_dim, rng))
    z_real.tag = "prior"

    params.zero_grads()
    loss = ad.add(
        ad.bce_loss(_discriminate(params, z_real, probe), 1.0),
        ad.bce_loss(_discriminate(params, z_fake, probe), 0.0),
    )
    value = _finite(loss.item(), "disc_loss", where)
    ad.backward(loss)
    opt.step(params.group("discriminator"))
    return value


def autoencoder_phase(
    params: ModelParams,
    images: np.ndarray,
    scalars: np.ndarray,
    cfg: TrainConfig,
    opt: Adam,
    probe: StepProbe | None = None,
    where: tuple[int, int] = (0, 0),
) -> tuple[float, float, float]:
    params.zero_grads()
    z = encode(params, images, scalars, training=True)
    z.tag = "encoding"
    z_sphere = project_to_sphere(z)
    if probe is not None:
        probe.saw_generator(z_sphere)
    img_hat, s_hat = generate(params, z_sphere, training=True)

    rec_img = ad.mse_loss(img_hat, Tensor(images))
    rec_s = ad.mse_loss(s_hat, Tensor(scalars))
    adv = ad.bce_loss(_discriminate(params, z, probe), 1.0)
    total = ad.add(ad.add(rec_img, ad.scale(rec_s, cfg.scalar_weight)), ad.scale(adv, cfg.adv_weight))

    values = (
        _finite(rec_img.item(), "recon_image_mse", where),
        _finite(rec_s.item(), "recon_scalar_mse", where),
        _finite(adv.item(), "adv_loss", where),
    )
    ad.backward(total)
    group = params.group("encoder")
    group.update(params.group("generator"))
    opt.step(group)
    return values


def wae_gan_step(
    params: ModelParams,
    optimizers: tuple[Adam, Adam],
    images: np.ndarray,
    scalars: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    probe: StepProbe | None = None,
    where: tuple[int, int] = (0, 0),
) -> StepLosses:
    """Discriminator update then autoencoder update on one batch of standardized data.

    ``optimizers`` is ``(discriminator_adam, autoencoder_adam)``.
    """
    if len(images) == 0:
        raise ValueError("wae_gan_step: empty batch")
    opt_d, opt_ae = optimizers
    try:
        disc = discriminator_phase(params, images, scalars, rng, opt_d, probe, where)
        rec_img, rec_s, adv = autoencoder_phase(params, images, scalars, cfg, opt_ae, probe, where)
    except NonFiniteError as exc:
        raise NumericalAbort(where[0], where[1], "activation", str(exc)) from exc
    return StepLosses(rec_img, rec_s, adv, disc)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    recon_image_mse: float
    recon_scalar_mse: float
    adv_loss: float
    disc_loss: float
    wall_ms: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self, include_wall_time: bool = False) -> str:
        """CSV text; ``wall_ms`` is written as 0 unless requested, keeping logs reproducible."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in self.records:
            wall = f"{r.wall_ms:.3f}" if include_wall_time else "0"
            writer.writerow(
                [r.epoch, repr(r.recon_image_mse), repr(r.recon_scalar_mse), repr(r.adv_loss), repr(r.disc_loss), wall]
            )
        return buf.getvalue()

    def write_csv(self, path: str | os.PathLike, include_wall_time: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv(include_wall_time))


@dataclass
class TrainResult:
    params: ModelParams
    log: TrainLog
    standardizer: ScalarStandardizer


def batch_indices(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled batches; a trailing batch of one sample joins the previous batch."""
    perm = rng.permutation(n)
    batches = [perm[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def train(
    dataset: Dataset,
    arch: ArchConfig,
    cfg: TrainConfig,
    callback=None,
    probe: StepProbe | None = None,
) -> TrainResult:
    """Fit a model to ``dataset`` (raw scalars; standardization happens here).

    ``callback(record, params)`` runs after every epoch; ``probe`` is handed to every step.
    """
    cfg.validate()
    n = len(dataset)
    if n == 0:
        raise ValueError("train: empty dataset")
    if n < 2:
        raise ValueError("train: batch normalization needs at least two samples")
    images = dataset.images
    standardizer = ScalarStandardizer.fit(dataset.scalars)
    scalars = standardizer.transform(dataset.scalars)

    params = init_params(arch, stream(cfg.seed, "init"))
    shuffle_rng = stream(cfg.seed, "shuffle")
    prior_rng = stream(cfg.seed, "prior")
    opts = (Adam(cfg), Adam(cfg))
    history = TrainLog()

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        sums = np.zeros(4)
        batches = batch_indices(n, cfg.batch_size, shuffle_rng)
        for b, idx in enumerate(batches):
            losses = wae_gan_step(params, opts, images[idx], scalars[idx], cfg, prior_rng, probe, (epoch, b))
            sums += (losses.recon_image, losses.recon_scalar, losses.adv, losses.disc)
        means = sums / len(batches)
        rec = EpochRecord(epoch, *map(float, means), wall_ms=(time.perf_counter() - t0) * 1e3)
        history.records.append(rec)
        log.info(
            "epoch %d img %.5f scal %.4f adv %.4f disc %.4f (%.0f ms)",
            epoch, rec.recon_image_mse, rec.recon_scalar_mse, rec.adv_loss, rec.disc_loss, rec.wall_ms,
        )
        if callback is not None:
            callback(rec, params)
    return TrainResult(params, history, standardizer)
