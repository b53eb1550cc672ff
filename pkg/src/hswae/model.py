"""Encoder, sphere projection, generator and latent discriminator.

Pipeline: (images, scalars) --encode--> z --project_to_sphere--> z~ --generate--> (images, scalars).
The discriminator only ever sees Euclidean latents (encodings or prior draws).

All networks are plain functions of a :class:`ModelParams` mapping so that the
training loop can pick parameter groups by prefix (``encoder.``,
``generator.``, ``discriminator.``).
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

NORM_FLOOR = 1e-8
SPHERE_TAG = "sphere"
KERNEL = 4
STRIDE = 2
PAD = 1
GROUPS = ("encoder", "generator", "discriminator")

CKPT_MAGIC = b"SWAE"
CKPT_VERSION = 1


class DegenerateLatentError(ValueError):
    pass


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


class ArchMismatchError(ValueError):
    """Checkpoint tensors do not fit the requested architecture."""


@dataclass
class ArchConfig:
    channels: int = 4
    height: int = 16
    width: int = 16
    n_scalars: int = 15
    latent_dim: int = 16
    conv_channels: list[int] = field(default_factory=lambda: [32, 64])
    scalar_width: int = 64
    fusion_width: int = 128
    disc_widths: list[int] = field(default_factory=lambda: [128, 128, 128])
    leaky_slope: float = 0.2

    def validate(self) -> None:
        widths = [self.channels, self.n_scalars, self.latent_dim, self.scalar_width, self.fusion_width]
        if min(widths + list(self.conv_channels) + list(self.disc_widths)) < 1 or not self.conv_channels:
            raise ValueError("all ArchConfig widths must be >= 1")
        h, w = self.bottleneck_hw
        factor = STRIDE ** len(self.conv_channels)
        if h < 1 or w < 1 or self.height % factor or self.width % factor:
            raise ValueError(
                f"image {self.height}x{self.width} cannot be halved {len(self.conv_channels)} times"
            )

    @property
    def bottleneck_hw(self) -> tuple[int, int]:
        factor = STRIDE ** len(self.conv_channels)
        return self.height // factor, self.width // factor

    @property
    def deconv_channels(self) -> list[int]:
        # mirrored ladder: [32, 64] -> deconvs 64->32, 32->32
        ladder = list(self.conv_channels)
        return list(reversed(ladder[:-1])) + [ladder[0]]

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(**d)


class ModelParams:
    """Ordered name -> Tensor mapping for every network weight and batch-norm buffer."""

    def __init__(self, arch: ArchConfig, tensors: dict[str, Tensor] | None = None):
        self.arch = arch
        self.tensors: dict[str, Tensor] = dict(tensors or {})

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __setitem__(self, name: str, t: Tensor) -> None:
        self.tensors[name] = t

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def group(self, prefix: str) -> dict[str, Tensor]:
        """Trainable tensors whose name starts with ``prefix``."""
        return {k: t for k, t in self.tensors.items() if k.startswith(prefix + ".") and t.requires_grad}

    def trainable(self) -> dict[str, Tensor]:
        return {k: t for k, t in self.tensors.items() if t.requires_grad}

    def zero_grads(self) -> None:
        ad.zero_grads(self.tensors.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def astype(self, dtype) -> "ModelParams":
        out = ModelParams(self.arch)
        for k, t in self.tensors.items():
            out[k] = Tensor(t.data.astype(dtype), requires_grad=t.requires_grad, name=k)
        return out

    def copy(self) -> "ModelParams":
        return self.astype(np.float32)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _layer_specs(arch: ArchConfig) -> Iterable[tuple[str, tuple, int | None]]:
    """Yield (name, shape, fan_in) in canonical order; fan_in None marks non-weight tensors."""
    c = arch.channels
    h, w = arch.bottleneck_hw
    k2 = KERNEL * KERNEL

    prev = c
    for i, ch in enumerate(arch.conv_channels):
        yield f"encoder.conv{i}.weight", (ch, prev, KERNEL, KERNEL), prev * k2
        yield f"encoder.conv{i}.bias", (ch,), None
        yield from _bn_specs(f"encoder.bn{i}", ch)
        prev = ch
    flat = prev * h * w
    yield "encoder.scalar.weight", (arch.n_scalars, arch.scalar_width), arch.n_scalars
    yield "encoder.scalar.bias", (arch.scalar_width,), None
    yield "encoder.fusion.weight", (flat + arch.scalar_width, arch.fusion_width), flat + arch.scalar_width
    yield "encoder.fusion.bias", (arch.fusion_width,), None
    yield "encoder.latent.weight", (arch.fusion_width, arch.latent_dim), arch.fusion_width
    yield "encoder.latent.bias", (arch.latent_dim,), None

    d = arch.latent_dim
    top = arch.conv_channels[-1]
    yield "generator.dense.weight", (d, top * h * w), d
    yield "generator.dense.bias", (top * h * w,), None
    prev = top
    for i, ch in enumerate(arch.deconv_channels):
        # each output pixel of a stride-2, 4x4 transposed conv sees prev * 4 inputs
        yield f"generator.deconv{i}.weight", (prev, ch, KERNEL, KERNEL), prev * k2 // (STRIDE * STRIDE)
        yield f"generator.deconv{i}.bias", (ch,), None
        yield from _bn_specs(f"generator.bn{i}", ch)
        prev = ch
    yield "generator.out.weight", (c, prev, 1, 1), prev
    yield "generator.out.bias", (c,), None
    yield "generator.scalar_hidden.weight", (d, arch.scalar_width), d
    yield "generator.scalar_hidden.bias", (arch.scalar_width,), None
    yield "generator.scalar_out.weight", (arch.scalar_width, arch.n_scalars), arch.scalar_width
    yield "generator.scalar_out.bias", (arch.n_scalars,), None

    prev = d
    for i, width in enumerate(arch.disc_widths):
        yield f"discriminator.fc{i}.weight", (prev, width), prev
        yield f"discriminator.fc{i}.bias", (width,), None
        prev = width
    yield "discriminator.out.weight", (prev, 1), prev
    yield "discriminator.out.bias", (1,), None


def _bn_specs(prefix: str, ch: int):
    yield f"{prefix}.gamma", (ch,), None
    yield f"{prefix}.beta", (ch,), None
    yield f"{prefix}.running_mean", (ch,), None
    yield f"{prefix}.running_var", (ch,), None


def param_shapes(arch: ArchConfig) -> dict[str, tuple]:
    return {name: shape for name, shape, _ in _layer_specs(arch)}


def init_params(arch: ArchConfig, seed: int | np.random.Generator) -> ModelParams:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit BN scale."""
    arch.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = ModelParams(arch)
    for name, shape, fan_in in _layer_specs(arch):
        if fan_in is not None:
            bound = np.sqrt(6.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        elif name.endswith((".gamma", ".running_var")):
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        buffer = "running_" in name
        params[name] = Tensor(data.astype(np.float32), requires_grad=not buffer, name=name)
    return params


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------


def _bn(params: ModelParams, prefix: str, x: Tensor, training: bool, update_stats: bool) -> Tensor:
    return ad.batch_norm(
        x,
        params[f"{prefix}.gamma"],
        params[f"{prefix}.beta"],
        params[f"{prefix}.running_mean"],
        params[f"{prefix}.running_var"],
        training=training,
        update_stats=update_stats,
    )


def _dense(params: ModelParams, prefix: str, x: Tensor) -> Tensor:
    return ad.linear(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"])


def encode(params: ModelParams, images, scalars, training: bool = False, update_stats: bool = True) -> Tensor:
    """Map a batch of (images, standardized scalars) to Euclidean latents z (N, d)."""
    arch = params.arch
    images, scalars = ad.as_tensor(images), ad.as_tensor(scalars)
    expect = (arch.channels, arch.height, arch.width)
    if images.ndim != 4 or images.shape[1:] != expect:
        raise ShapeError(f"encode: images shape {images.shape} does not match (N, {', '.join(map(str, expect))})")
    if scalars.shape != (images.shape[0], arch.n_scalars):
        raise ShapeError(f"encode: scalars shape {scalars.shape} does not match ({images.shape[0]}, {arch.n_scalars})")

    h = images
    for i in range(len(arch.conv_channels)):
        h = ad.conv2d(h, params[f"encoder.conv{i}.weight"], params[f"encoder.conv{i}.bias"], STRIDE, PAD)
        h = ad.relu(_bn(params, f"encoder.bn{i}", h, training, update_stats))
    h = ad.flatten(h)
    s = ad.relu(_dense(params, "encoder.scalar", scalars))
    joint = ad.relu(_dense(params, "encoder.fusion", ad.concat([h, s], axis=1)))
    return _dense(params, "encoder.latent", joint)


def project_to_sphere(z) -> Tensor:
    """Row-wise z / ||z||_2; rows with norm <= 1e-8 are rejected."""
    z = ad.as_tensor(z)
    if z.ndim != 2:
        raise ShapeError(f"project_to_sphere: expected (N, d) latents, got {z.shape}")
    norm = ad.l2_norm(z, axis=1, keepdims=True)
    bad = np.flatnonzero(norm.data[:, 0] <= NORM_FLOOR)
    if bad.size:
        raise DegenerateLatentError(f"degenerate latent at row {int(bad[0])}")
    out = ad.div(z, norm)
    out.tag = SPHERE_TAG
    return out


def generate(params: ModelParams, z, training: bool = False, update_stats: bool = True) -> tuple[Tensor, Tensor]:
    """Decode latents to (images in [0, 1], standardized scalars). Inputs need not be unit norm."""
    arch = params.arch
    z = ad.as_tensor(z)
    if z.ndim != 2 or z.shape[1] != arch.latent_dim:
        raise ShapeError(f"generate: latents shape {z.shape} does not match (N, {arch.latent_dim})")
    h, w = arch.bottleneck_hw
    x = ad.reshape(_dense(params, "generator.dense", z), (z.shape[0], arch.conv_channels[-1], h, w))
    for i in range(len(arch.deconv_channels)):
        x = ad.conv_transpose2d(
            x, params[f"generator.deconv{i}.weight"], params[f"generator.deconv{i}.bias"], STRIDE, PAD
        )
        x = ad.relu(_bn(params, f"generator.bn{i}", x, training, update_stats))
    images = ad.sigmoid(ad.conv2d(x, params["generator.out.weight"], params["generator.out.bias"]))
    s = ad.relu(_dense(params, "generator.scalar_hidden", z))
    scalars = _dense(params, "generator.scalar_out", s)
    return images, scalars


def discriminate(params: ModelParams, z) -> Tensor:
    """Probability (N, 1) that each Euclidean latent was drawn from the prior."""
    arch = params.arch
    z = ad.as_tensor(z)
    if z.tag == SPHERE_TAG:
        raise ValueError("discriminate: received sphere-projected latents; the discriminator works on Euclidean z")
    if z.ndim != 2 or z.shape[1] != arch.latent_dim:
        raise ShapeError(f"discriminate: latents shape {z.shape} does not match (N, {arch.latent_dim})")
    h = z
    for i in range(len(arch.disc_widths)):
        h = ad.leaky_relu(_dense(params, f"discriminator.fc{i}", h), arch.leaky_slope)
    return ad.sigmoid(_dense(params, "discriminator.out", h))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
#
# layout (little-endian):
#   b"SWAE" | u32 version | u32 len | arch JSON (utf-8) | u32 count |
#   count x ( u32 name_len | name | u32 ndim | ndim x u32 dims | f32 payload )
#
# Tensors named "extra.*" carry run metadata (scalar standardizer, fitted line).


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    raw = name.encode()
    arr = np.ascontiguousarray(arr, dtype="<f4")
    head = struct.pack("<I", len(raw)) + raw + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return head + arr.tobytes()


def save_checkpoint(path: str | os.PathLike, params: ModelParams, extras: dict[str, np.ndarray] | None = None) -> None:
    items = [(k, t.data) for k, t in params.items()]
    items += [(f"extra.{k}", np.asarray(v)) for k, v in (extras or {}).items()]
    arch = json.dumps(asdict(params.arch), sort_keys=True).encode()
    chunks = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(arch)), arch, struct.pack("<I", len(items))]
    chunks += [_pack_tensor(k, v) for k, v in items]
    Path(path).write_bytes(b"".join(chunks))


@dataclass
class Checkpoint:
    params: ModelParams
    extras: dict[str, np.ndarray]


def load_checkpoint(path: str | os.PathLike, arch: ArchConfig | None = None) -> Checkpoint:
    """Read a checkpoint; with ``arch`` given, every tensor shape is checked against it."""
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad magic at offset 0")
    pos = 4

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise CheckpointError(f"{path}: truncated at offset {pos}")
        vals = struct.unpack_from(fmt, raw, pos)
        pos += size
        return vals

    version, arch_len = take("<II")
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    stored_arch = ArchConfig.from_dict(json.loads(raw[pos : pos + arch_len].decode()))
    pos += arch_len
    (count,) = take("<I")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = raw[pos : pos + name_len].decode()
        pos += name_len
        (ndim,) = take("<I")
        dims = take(f"<{ndim}I")
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated tensor {name!r} at offset {pos}")
        tensors[name] = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=pos).reshape(dims).astype(np.float32)
        pos += nbytes

    target = arch if arch is not None else stored_arch
    expected = param_shapes(target)
    for name, shape in expected.items():
        got = tensors.get(name)
        if got is None or got.shape != shape:
            found = "missing" if got is None else f"shape {got.shape}"
            raise ArchMismatchError(f"checkpoint tensor {name!r}: expected shape {shape}, found {found}")

    params = ModelParams(target)
    for name in expected:
        params[name] = Tensor(tensors[name], requires_grad="running_" not in name, name=name)
    extras = {k[len("extra.") :]: v for k, v in tensors.items() if k.startswith("extra.")}
    return Checkpoint(params, extras)
