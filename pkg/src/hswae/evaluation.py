"""Quantitative analyses of a trained model against the embedded scientific prior.

The "scientific prior" is the linear relation between the ion-temperature
scalar (``scalars[:, 0]``) and the image temperature (mean over all pixels and
channels). A generated sample is *valid* at threshold ``tau`` when its
residual against the training-set line fit is at most ``tau`` in magnitude.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import Dataset, ScalarStandardizer
from .model import ModelParams, encode, generate, project_to_sphere

DEFAULT_THRESHOLDS_SIGMA = (0.5, 1.0, 2.0, 3.0)
DEFAULT_RADII = (0.25, 0.5, 1.0, 2.0, 4.0)
UNIT_TOL = 1e-4


@dataclass
class TrainedModel:
    """Parameters plus the scalar standardizer; all methods run in eval mode on raw units."""

    params: ModelParams
    standardizer: ScalarStandardizer
    batch_size: int = 256

    @property
    def latent_dim(self) -> int:
        return self.params.arch.latent_dim

    def encode(self, images: np.ndarray, scalars: np.ndarray) -> np.ndarray:
        images = np.asarray(images, dtype=np.float32)
        s = self.standardizer.transform(scalars)
        out = []
        with ad.no_grad():
            for i in range(0, len(images), self.batch_size):
                out.append(encode(self.params, images[i : i + self.batch_size], s[i : i + self.batch_size]).data)
        return np.concatenate(out) if out else np.zeros((0, self.latent_dim), np.float32)

    def decode(self, latents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Generator output for latents fed as-is (no projection); scalars de-standardized."""
        latents = np.asarray(latents, dtype=np.float32)
        imgs, scal = [], []
        with ad.no_grad():
            for i in range(0, len(latents), self.batch_size):
                im, sc = generate(self.params, latents[i : i + self.batch_size])
                imgs.append(im.data)
                scal.append(sc.data)
        return np.concatenate(imgs), self.standardizer.inverse(np.concatenate(scal))

    def reconstruct(self, images: np.ndarray, scalars: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.decode(project(self.encode(images, scalars)))


def project(z: np.ndarray) -> np.ndarray:
    with ad.no_grad():
        return project_to_sphere(np.asarray(z, dtype=np.float32)).data


# ---------------------------------------------------------------------------
# scientific prior
# ---------------------------------------------------------------------------


def image_temperature(images: np.ndarray) -> np.ndarray | float:
    """Mean over channels and pixels; accepts one (C, H, W) image or a batch (N, C, H, W)."""
    images = np.asarray(images)
    if images.ndim == 3:
        return float(images.mean(dtype=np.float64))
    return images.reshape(len(images), -1).mean(axis=1, dtype=np.float64)


@dataclass
class ScientificLine:
    slope: float
    intercept: float
    train_residual_std: float
    n_fit: int

    def residual(self, t_ion, image_temp):
        return np.asarray(t_ion, dtype=np.float64) - (self.slope * np.asarray(image_temp, dtype=np.float64) + self.intercept)

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "train_residual_std": self.train_residual_std,
            "n_fit": self.n_fit,
        }

    def to_array(self) -> np.ndarray:
        return np.array([self.slope, self.intercept, self.train_residual_std, self.n_fit], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "ScientificLine":
        a = np.asarray(arr, dtype=np.float64)
        return cls(float(a[0]), float(a[1]), float(a[2]), int(round(a[3])))


def fit_scientific_line(t_ion, image_temp) -> ScientificLine:
    """Ordinary least squares of ``t_ion`` on ``image_temp``; residual std uses n - 2."""
    y = np.asarray(t_ion, dtype=np.float64).ravel()
    x = np.asarray(image_temp, dtype=np.float64).ravel()
    n = x.size
    if n < 2 or y.size != n:
        raise ValueError("fit_scientific_line needs at least two (t_ion, image_temp) pairs")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0.0:
        raise ValueError("fit_scientific_line: image temperatures have zero variance")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    std = float(np.sqrt(np.sum(resid**2) / (n - 2))) if n > 2 else 0.0
    return ScientificLine(slope, intercept, std, n)


def fit_line_on(data: Dataset) -> ScientificLine:
    return fit_scientific_line(data.scalars[:, 0], image_temperature(data.images))


def constraint_residual(line: ScientificLine, images: np.ndarray, scalars: np.ndarray) -> np.ndarray:
    """Residual of each sample (raw units) against ``line``."""
    images, scalars = np.asarray(images), np.asarray(scalars)
    if images.ndim == 3:
        return line.residual(scalars[0], image_temperature(images))
    return line.residual(scalars[:, 0], image_temperature(images))


def valid_fraction(line: ScientificLine, images: np.ndarray, scalars: np.ndarray, threshold: float) -> float:
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    res = constraint_residual(line, images, scalars)
    if res.size == 0:
        raise ValueError("valid_fraction of an empty sample set")
    return float(np.mean(np.abs(res) <= threshold))


# ---------------------------------------------------------------------------
# reconstruction metrics
# ---------------------------------------------------------------------------


def r2_score(y: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    """Per-column 1 - SS_res / SS_tot; NaN where SS_tot is zero."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.ndim == 1:
        y, y_hat = y[:, None], y_hat[:, None]
    ss_res = np.sum((y - y_hat) ** 2, axis=0)
    ss_tot = np.sum((y - y.mean(axis=0)) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = 1.0 - ss_res / ss_tot
    r2[ss_tot == 0] = np.nan
    return r2


def recon_mse(model: TrainedModel, test: Dataset) -> float:
    if len(test) == 0:
        raise ValueError("recon_mse on an empty test set")
    img_hat, _ = model.reconstruct(test.images, test.scalars)
    return float(np.mean((img_hat.astype(np.float64) - test.images) ** 2))


def r_squared(model: TrainedModel, test: Dataset) -> np.ndarray:
    if len(test) == 0:
        raise ValueError("r_squared on an empty test set")
    _, s_hat = model.reconstruct(test.images, test.scalars)
    return r2_score(test.scalars, s_hat)


@dataclass
class ReconMetrics:
    mse: float
    r2: np.ndarray

    @property
    def r2_mean(self) -> float:
        defined = self.r2[np.isfinite(self.r2)]
        return float(defined.mean()) if defined.size else math.nan

    def to_dict(self) -> dict:
        return {
            "mse": self.mse,
            "r2": [None if not np.isfinite(v) else float(v) for v in self.r2],
            "r2_mean": self.r2_mean,
        }


def recon_metrics(model: TrainedModel, test: Dataset) -> ReconMetrics:
    img_hat, s_hat = model.reconstruct(test.images, test.scalars)
    mse = float(np.mean((img_hat.astype(np.float64) - test.images) ** 2))
    return ReconMetrics(mse, r2_score(test.scalars, s_hat))


# ---------------------------------------------------------------------------
# sampling studies
# ---------------------------------------------------------------------------


@dataclass
class ValidityRow:
    radius: float
    threshold: float
    n_valid: int
    n_total: int


@dataclass
class GeneratedBatch:
    latents: np.ndarray  # sphere points before radius scaling
    images: np.ndarray
    scalars: np.ndarray
    residuals: np.ndarray


def sample_generated(model: TrainedModel, line: ScientificLine, n: int, radius: float, seed: int, prior_scale: float = 1.0) -> GeneratedBatch:
    """Draw z ~ N(0, prior_scale^2 I), project, feed ``radius * z~`` to the generator."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if radius <= 0 or prior_scale <= 0:
        raise ValueError("radius and prior_scale must be positive")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.latent_dim), dtype=np.float32) * np.float32(prior_scale)
    sphere = project(z)
    images, scalars = model.decode(sphere * np.float32(radius))
    return GeneratedBatch(sphere, images, scalars, constraint_residual(line, images, scalars))


def score_residuals(residuals: np.ndarray, radius: float, thresholds: Sequence[float]) -> list[ValidityRow]:
    absres = np.abs(np.asarray(residuals))
    return [ValidityRow(float(radius), float(t), int(np.sum(absres <= t)), int(absres.size)) for t in thresholds]


def generate_and_score(
    model: TrainedModel,
    line: ScientificLine,
    n: int,
    radius: float,
    thresholds: Sequence[float],
    seed: int,
) -> list[ValidityRow]:
    """One validity row per threshold for ``n`` prior samples generated at ``radius``."""
    if any(t < 0 for t in thresholds):
        raise ValueError("thresholds must be >= 0")
    batch = sample_generated(model, line, n, radius, seed)
    return score_residuals(batch.residuals, radius, thresholds)


def radius_ablation(
    model: TrainedModel,
    line: ScientificLine,
    n: int,
    radii: Sequence[float] = DEFAULT_RADII,
    thresholds_sigma: Sequence[float] = DEFAULT_THRESHOLDS_SIGMA,
    seed: int = 0,
) -> list[ValidityRow]:
    """Validity curve over radii; the same prior draws are reused at every radius."""
    thresholds = [s * line.train_residual_std for s in thresholds_sigma]
    rows: list[ValidityRow] = []
    for r in radii:
        rows.extend(generate_and_score(model, line, n, r, thresholds, seed))
    return rows


def lerp_latent(za: np.ndarray, zb: np.ndarray, t: float) -> np.ndarray:
    """(1 - t) * za + t * zb in float64, returned as float32; endpoints are returned unchanged."""
    if t == 0.0:
        return za
    if t == 1.0:
        return zb
    return ((1.0 - t) * za.astype(np.float64) + t * zb.astype(np.float64)).astype(np.float32)


@dataclass
class InterpolationPath:
    t: np.ndarray
    latents: np.ndarray  # pre-projection z_t
    images: np.ndarray
    scalars: np.ndarray
    residuals: np.ndarray
    image_temp: np.ndarray


def interpolate_latent(model: TrainedModel, line: ScientificLine, sample_a, sample_b, n_steps: int) -> InterpolationPath:
    """Linear path between the encodings of two samples, each point projected then generated.

    Samples are ``(image, scalars)`` pairs in raw units. Every point is encoded
    and generated as its own single-row batch so the endpoints coincide
    bit-for-bit with the direct encode -> project -> generate path.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    za = model.encode(np.asarray(sample_a[0])[None], np.asarray(sample_a[1])[None])[0]
    zb = model.encode(np.asarray(sample_b[0])[None], np.asarray(sample_b[1])[None])[0]
    ts = np.linspace(0.0, 1.0, n_steps)
    latents, images, scalars = [], [], []
    for t in ts:
        zt = lerp_latent(za, zb, t)
        if np.linalg.norm(zt.astype(np.float64)) <= 1e-8:
            raise ValueError(f"degenerate interpolated latent at t={t:.6g}")
        im, sc = model.decode(project(zt[None]))
        latents.append(zt)
        images.append(im[0])
        scalars.append(sc[0])
    images_arr, scalars_arr = np.stack(images), np.stack(scalars)
    return InterpolationPath(
        ts,
        np.stack(latents),
        images_arr,
        scalars_arr,
        constraint_residual(line, images_arr, scalars_arr),
        image_temperature(images_arr),
    )


@dataclass
class LocalSpread:
    center_id: int
    res_mean: float
    res_std: float
    latent_mean: np.ndarray
    center: np.ndarray


def local_sample(
    model: TrainedModel,
    line: ScientificLine,
    centers: Dataset,
    n_per_center: int,
    variance: float = 1.0,
    seed: int = 0,
) -> list[LocalSpread]:
    """Residual spread of samples drawn from N(encode(center), variance * I) around each center."""
    if n_per_center < 2:
        raise ValueError("n_per_center must be >= 2")
    if variance <= 0:
        raise ValueError("variance must be positive")
    rng = np.random.default_rng(seed)
    z_centers = model.encode(centers.images, centers.scalars)
    out = []
    for i, zc in enumerate(z_centers):
        noise = rng.standard_normal((n_per_center, zc.size))
        z = (zc.astype(np.float64) + math.sqrt(variance) * noise).astype(np.float32)
        images, scalars = model.decode(project(z))
        res = constraint_residual(line, images, scalars)
        out.append(LocalSpread(i, float(res.mean()), float(res.std(ddof=1)), z.mean(axis=0), zc))
    return out


def uniformity_statistic(points: np.ndarray) -> float:
    """Mean resultant length ||mean(points)||_2 of unit vectors; ~1/sqrt(n) for uniform points."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("uniformity_statistic expects a non-empty (n, d) array")
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
    if bad.size:
        raise ValueError(f"point {int(bad[0])} is not on the unit sphere (norm {norms[bad[0]]:.6g})")
    return float(np.linalg.norm(x.mean(axis=0)))
