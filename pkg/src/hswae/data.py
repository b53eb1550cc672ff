"""Synthetic multimodal surrogate dataset and its ``.jags`` binary format.

Each sample is rendered from five hidden parameters: amplitude, blob centre
(two coordinates), blob width and tail angle. The image volume is a Gaussian
blob plus an elongated "tail" lobe pointing along the tail angle, weighted per
channel. ``scalars[0]`` is the ion-temperature analogue and equals
``slope * mean(image) + intercept + noise``; the remaining scalars are smooth
functions of the hidden parameters.

File layout (little-endian)::

    offset  0  magic      b"JAGS"
    offset  4  version    u32 (= 1)
    offset  8  n_samples  u32
    offset 12  height     u32
    offset 16  width      u32
    offset 20  channels   u32
    offset 24  n_scalars  u32
    offset 28  reserved   u32 (= 0)
    offset 32  records: per sample C*H*W image floats then S scalar floats (f32)
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

MAGIC = b"JAGS"
VERSION = 1
HEADER = struct.Struct("<4s7I")
CHANNEL_WEIGHTS = (1.0, 0.8, 0.6, 0.4)
TAIL_STRENGTH = 0.3


class DatasetFormatError(ValueError):
    """Malformed ``.jags`` file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


@dataclass
class SyntheticConfig:
    n_samples: int = 2000
    height: int = 16
    width: int = 16
    channels: int = 4
    n_scalars: int = 15
    constraint_slope: float = 1.0
    constraint_intercept: float = 0.0
    constraint_noise: float = 0.01
    seed: int = 0
    amplitude_range: tuple[float, float] = (0.2, 1.0)
    center_range: tuple[float, float] = (0.3, 0.7)
    width_range: tuple[float, float] = (0.08, 0.2)

    def validate(self) -> None:
        for name in ("n_samples", "height", "width", "channels", "n_scalars"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"SyntheticConfig.{name} must be >= 1")
        if self.constraint_noise < 0:
            raise ValueError("SyntheticConfig.constraint_noise must be >= 0")
        for name in ("amplitude_range", "center_range", "width_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"SyntheticConfig.{name} must satisfy low <= high")


@dataclass(frozen=True)
class DatasetHeader:
    n_samples: int
    height: int
    width: int
    channels: int
    n_scalars: int
    magic: bytes = MAGIC
    version: int = VERSION

    @property
    def record_floats(self) -> int:
        return self.height * self.width * self.channels + self.n_scalars

    @property
    def payload_bytes(self) -> int:
        return self.n_samples * self.record_floats * 4


@dataclass
class SampleRecord:
    image: np.ndarray  # (C, H, W)
    scalars: np.ndarray  # (S,)

    @property
    def t_ion(self) -> float:
        return float(self.scalars[0])


@dataclass
class Dataset:
    """Column storage for a set of samples: images (N, C, H, W), scalars (N, S)."""

    images: np.ndarray
    scalars: np.ndarray
    params: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.scalars = np.asarray(self.scalars, dtype=np.float32)
        if self.images.ndim != 4 or self.scalars.ndim != 2 or len(self.images) != len(self.scalars):
            raise ValueError(f"inconsistent dataset arrays {self.images.shape} / {self.scalars.shape}")

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, i: int) -> SampleRecord:
        return SampleRecord(self.images[i], self.scalars[i])

    def __iter__(self) -> Iterator[SampleRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def header(self) -> DatasetHeader:
        n, c, h, w = self.images.shape
        return DatasetHeader(n, h, w, c, self.scalars.shape[1])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        params = None if self.params is None else self.params[idx]
        return Dataset(self.images[idx], self.scalars[idx], params)

    @classmethod
    def from_records(cls, records: Sequence[SampleRecord]) -> "Dataset":
        if len(records) == 0:
            raise ValueError("no records")
        shape_i, shape_s = records[0].image.shape, records[0].scalars.shape
        for i, r in enumerate(records):
            if r.image.shape != shape_i or r.scalars.shape != shape_s:
                raise ValueError(f"record {i} has shape {r.image.shape}/{r.scalars.shape}, expected {shape_i}/{shape_s}")
        return cls(np.stack([r.image for r in records]), np.stack([r.scalars for r in records]))


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _render(params: np.ndarray, cfg: SyntheticConfig) -> np.ndarray:
    amp, cx, cy, sig, theta = (params[:, i, None, None] for i in range(5))
    u = (np.arange(cfg.width) + 0.5) / cfg.width
    v = (np.arange(cfg.height) + 0.5) / cfg.height
    xx, yy = u[None, None, :], v[None, :, None]

    blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sig**2))

    # tail lobe: centred 1.5 widths from the blob along theta, long along theta, narrow across
    ct, st = np.cos(theta), np.sin(theta)
    dx = xx - (cx + 1.5 * sig * ct)
    dy = yy - (cy + 1.5 * sig * st)
    along = dx * ct + dy * st
    across = -dx * st + dy * ct
    tail = np.exp(-(along**2) / (2.0 * (1.5 * sig) ** 2) - across**2 / (2.0 * (0.5 * sig) ** 2))

    base = amp * (blob + TAIL_STRENGTH * tail)  # (N, H, W)
    weights = np.resize(np.asarray(CHANNEL_WEIGHTS), cfg.channels)
    img = base[:, None, :, :] * weights[None, :, None, None]
    return np.clip(img, 0.0, 1.0)


def _aux_scalars(params: np.ndarray, count: int) -> np.ndarray:
    amp, cx, cy, sig, theta = params.T
    s, c = np.sin(theta), np.cos(theta)
    pool = [amp, cx, cy, sig, s, c, amp * sig, amp**2, cx * cy, sig**2, amp * s, amp * c, cx**2, cy**2]
    cols = [pool[i % len(pool)] for i in range(count)]
    return np.stack(cols, axis=1) if cols else np.zeros((len(params), 0))


def generate_dataset(cfg: SyntheticConfig) -> Dataset:
    """Draw ``cfg.n_samples`` samples; fully determined by ``cfg`` (including its seed)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_samples
    params = np.empty((n, 5))
    params[:, 0] = rng.uniform(*cfg.amplitude_range, size=n)
    params[:, 1] = rng.uniform(*cfg.center_range, size=n)
    params[:, 2] = rng.uniform(*cfg.center_range, size=n)
    params[:, 3] = rng.uniform(*cfg.width_range, size=n)
    params[:, 4] = rng.uniform(0.0, 2.0 * np.pi, size=n)
    noise = rng.standard_normal(n) * cfg.constraint_noise

    images = np.empty((n, cfg.channels, cfg.height, cfg.width), dtype=np.float32)
    chunk = max(1, 2_000_000 // (cfg.channels * cfg.height * cfg.width))
    for start in range(0, n, chunk):
        images[start : start + chunk] = _render(params[start : start + chunk], cfg)

    temp = images.reshape(n, -1).mean(axis=1, dtype=np.float64)
    scalars = np.empty((n, cfg.n_scalars), dtype=np.float32)
    scalars[:, 0] = cfg.constraint_slope * temp + cfg.constraint_intercept + noise
    scalars[:, 1:] = _aux_scalars(params, cfg.n_scalars - 1)
    return Dataset(images, scalars, params)


def split_dataset(data: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then ``floor(n * train_fraction)`` samples go to the training set."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = len(data)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(n * train_fraction))
    return data.subset(perm[:n_train]), data.subset(perm[n_train:])


class ScalarStandardizer:
    """Per-column affine map of scalars to zero mean, unit variance."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float32)
        self.std = np.asarray(std, dtype=np.float32)

    @classmethod
    def fit(cls, scalars: np.ndarray) -> "ScalarStandardizer":
        scalars = np.asarray(scalars, dtype=np.float64)
        std = scalars.std(axis=0)
        std[std == 0] = 1.0
        return cls(scalars.mean(axis=0), std)

    def transform(self, scalars: np.ndarray) -> np.ndarray:
        return ((np.asarray(scalars, dtype=np.float32) - self.mean) / self.std).astype(np.float32)

    def inverse(self, scalars: np.ndarray) -> np.ndarray:
        return (np.asarray(scalars, dtype=np.float32) * self.std + self.mean).astype(np.float32)


# ---------------------------------------------------------------------------
# .jags IO
# ---------------------------------------------------------------------------


def write_dataset(path: str | os.PathLike, data: Dataset | Sequence[SampleRecord]) -> None:
    if not isinstance(data, Dataset):
        data = Dataset.from_records(list(data))
    if len(data) == 0:
        raise ValueError("refusing to write an empty dataset")
    n, c, h, w = data.images.shape
    s = data.scalars.shape[1]
    body = np.concatenate(
        [data.images.reshape(n, -1), data.scalars], axis=1
    ).astype("<f4", copy=False)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, n, h, w, c, s, 0))
        fh.write(np.ascontiguousarray(body).tobytes())


def read_header(raw: bytes) -> DatasetHeader:
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise DatasetFormatError("bad magic", 0)
    if len(raw) < HEADER.size:
        raise DatasetFormatError("truncated header", len(raw))
    magic, version, n, h, w, c, s, _ = HEADER.unpack_from(raw, 0)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}", 4)
    for off, val in zip(range(8, 28, 4), (n, h, w, c, s)):
        if val < 1:
            raise DatasetFormatError("zero dimension in header", off)
    return DatasetHeader(n, h, w, c, s)


def read_dataset(path: str | os.PathLike) -> tuple[DatasetHeader, Dataset]:
    raw = Path(path).read_bytes()
    header = read_header(raw)
    expected = HEADER.size + header.payload_bytes
    if len(raw) < expected:
        raise DatasetFormatError(f"truncated payload (expected {expected} bytes, found {len(raw)})", len(raw))
    if len(raw) > expected:
        raise DatasetFormatError(f"trailing bytes after payload (expected {expected} bytes)", expected)
    body = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(header.n_samples, header.record_floats)
    npix = header.channels * header.height * header.width
    images = body[:, :npix].reshape(header.n_samples, header.channels, header.height, header.width)
    scalars = body[:, npix:]
    return header, Dataset(images.astype(np.float32), scalars.astype(np.float32))
