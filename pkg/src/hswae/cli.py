"""Command-line entry point: ``hswae <subcommand> ...``.

Every subcommand writes its artifacts plus ``resolved-config.json`` into
``--out`` (a directory). Failures print one ``error_code: message`` line to
stderr and exit with 2 (config), 3 (IO / file format), 4 (shape or
architecture mismatch) or 5 (numerical abort).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .config import ConfigError, RunConfig, load_config
from .data import Dataset, DatasetFormatError, ScalarStandardizer, generate_dataset, read_dataset, split_dataset, write_dataset
from .evaluation import (
    ScientificLine,
    TrainedModel,
    fit_line_on,
    fit_scientific_line,
    image_temperature,
    interpolate_latent,
    local_sample,
    radius_ablation,
    recon_metrics,
    sample_generated,
)
from .model import ArchMismatchError, CheckpointError, DegenerateLatentError, load_checkpoint, save_checkpoint
from .training import NumericalAbort, train

log = logging.getLogger("hswae")

EXIT_CONFIG, EXIT_IO, EXIT_SHAPE, EXIT_NUMERIC = 2, 3, 4, 5
CHECKPOINT_NAME = "model.ckpt"


class CliError(Exception):
    def __init__(self, code: int, name: str, message: str):
        super().__init__(message)
        self.code, self.name = code, name


# ---------------------------------------------------------------------------
# small writers
# ---------------------------------------------------------------------------


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_pgm(path: Path, image: np.ndarray) -> None:
    """Binary greyscale PGM (P5, maxval 255) of a 2-D array with values in [0, 1]."""
    pix = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pix.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + pix.tobytes())


def write_grids(out: Path, rows: Sequence[np.ndarray]) -> list[Path]:
    """One ``grid_ch{c}.pgm`` per channel; ``rows`` are (k, C, H, W) batches stacked vertically."""
    paths = []
    n_channels = rows[0].shape[1]
    for c in range(n_channels):
        tiles = [np.concatenate(list(r[:, c]), axis=1) for r in rows]
        path = out / f"grid_ch{c}.pgm"
        write_pgm(path, np.concatenate(tiles, axis=0))
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# shared loading
# ---------------------------------------------------------------------------


def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None and hasattr(args, "epochs"):
        cfg.train.seed = args.seed
    for flag, section, name in (
        ("epochs", cfg.train, "epochs"),
        ("batch_size", cfg.train, "batch_size"),
        ("adv_weight", cfg.train, "adv_weight"),
        ("n_samples", cfg.data.synthetic, "n_samples"),
        ("data_seed", cfg.data.synthetic, "seed"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(section, name, value)
    if getattr(args, "out", None):
        cfg.output_dir = str(args.out)
    try:
        cfg.data.synthetic.validate()
        cfg.train.validate()
        cfg.arch.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_data(path) -> Dataset:
    _, data = read_dataset(path)
    return data


def _load_model(path, data: Dataset | None = None) -> tuple[TrainedModel, ScientificLine]:
    ckpt = load_checkpoint(path)
    arch = ckpt.params.arch
    if data is not None:
        n, c, h, w = data.images.shape
        s = data.scalars.shape[1]
        if (c, h, w, s) != (arch.channels, arch.height, arch.width, arch.n_scalars):
            raise ArchMismatchError(
                f"checkpoint expects data {arch.channels}x{arch.height}x{arch.width} + {arch.n_scalars} scalars, "
                f"data file has {c}x{h}x{w} + {s}"
            )
    try:
        standardizer = ScalarStandardizer(ckpt.extras["scalar_mean"], ckpt.extras["scalar_std"])
        line = ScientificLine.from_array(ckpt.extras["line"])
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing run metadata {exc}") from exc
    return TrainedModel(ckpt.params, standardizer), line


def _split(cfg: RunConfig, data: Dataset) -> tuple[Dataset, Dataset]:
    return split_dataset(data, cfg.data.train_fraction, cfg.data.split_seed)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse index list {text!r}") from exc


def _check_index(data: Dataset, idx: int, flag: str) -> int:
    if not 0 <= idx < len(data):
        raise ConfigError(f"{flag} {idx} outside dataset of {len(data)} samples")
    return idx


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> None:
    cfg = _config(args)
    out = _out_dir(args)
    data = generate_dataset(cfg.data.synthetic)
    path = out / "data.jags"
    write_dataset(path, data)
    line = fit_line_on(data)
    temp = image_temperature(data.images)
    write_json(
        out / "data-summary.json",
        {
            "path": str(path),
            "n_samples": len(data),
            "shape": list(data.images.shape[1:]),
            "n_scalars": int(data.scalars.shape[1]),
            "image_temp_mean": float(temp.mean()),
            "image_temp_std": float(temp.std()),
            "line": line.to_dict(),
        },
    )
    cfg.data.path = str(path)
    cfg.dump(out / "resolved-config.json")
    print(path)


def cmd_train(args) -> None:
    cfg = _config(args)
    out = _out_dir(args)
    data = _load_data(args.data)
    n, c, h, w = data.images.shape
    cfg.arch.channels, cfg.arch.height, cfg.arch.width, cfg.arch.n_scalars = c, h, w, data.scalars.shape[1]
    cfg.data.path = str(args.data)
    cfg.dump(out / "resolved-config.json")

    train_set, _ = _split(cfg, data)
    result = train(train_set, cfg.arch, cfg.train)
    line = fit_line_on(train_set)
    save_checkpoint(
        out / CHECKPOINT_NAME,
        result.params,
        {"scalar_mean": result.standardizer.mean, "scalar_std": result.standardizer.std, "line": line.to_array()},
    )
    result.log.write_csv(out / "trainlog.csv", include_wall_time=cfg.train.log_wall_time)
    print(out / CHECKPOINT_NAME)


def cmd_eval(args) -> None:
    cfg = _config(args)
    out = _out_dir(args)
    data = _load_data(args.data)
    model, line = _load_model(args.checkpoint, data)
    train_set, test_set = _split(cfg, data)
    cfg.dump(out / "resolved-config.json")

    metrics = recon_metrics(model, test_set)
    write_json(out / "recon_metrics.json", metrics.to_dict())

    img_tr, s_tr = model.reconstruct(train_set.images, train_set.scalars)
    img_te, s_te = model.reconstruct(test_set.images, test_set.scalars)
    write_json(
        out / "scientific-line.json",
        {
            "train_data": line.to_dict(),
            "train_reconstructions": fit_scientific_line(s_tr[:, 0], image_temperature(img_tr)).to_dict(),
            "test_reconstructions": fit_scientific_line(s_te[:, 0], image_temperature(img_te)).to_dict(),
        },
    )
    k = min(cfg.eval.grid_samples, len(test_set))
    write_grids(out, [test_set.images[:k], img_te[:k]])
    print(json.dumps(metrics.to_dict()))


def cmd_sample(args) -> None:
    cfg = _config(args)
    out = _out_dir(args)
    model, line = _load_model(args.checkpoint)
    cfg.eval.n_generate, cfg.eval.seed = args.n, args.seed
    cfg.dump(out / "resolved-config.json")
    batch = sample_generated(model, line, args.n, args.radius, args.seed)
    write_dataset(out / "samples.jags", Dataset(batch.images, batch.scalars))
    temp = image_temperature(batch.images)
    write_csv(
        out / "residuals.csv",
        ("index", "residual", "image_temp", "t_ion"),
        ((i, batch.residuals[i], temp[i], float(batch.scalars[i, 0])) for i in range(args.n)),
    )
    print(out / "samples.jags")


def cmd_interpolate(args) -> None:
    cfg = _config(args)
    out = _out_dir(args)
    data = _load_data(args.data)
    model, line = _load_model(args.checkpoint, data)
    a = data[_check_index(data, args.index_a, "--index-a")]
    b = data[_check_index(data, args.index_b, "--index-b")]
    cfg.dump(out / "resolved-config.json")
    path = interpolate_latent(model, line, (a.image, a.scalars), (b.image, b.scalars), args.steps)
    write_csv(
        out / "interp_path.csv",
        ("t", "residual", "image_temp", "t_ion"),
        zip(path.t, path.residuals, path.image_temp, path.scalars[:, 0].astype(np.float64)),
    )
    write_grids(out, [path.images])
    print(out / "interp_path.csv")


def cmd_ablate_radius(args) -> None:
    cfg = _config(args)
    out = _out_dir(args)
    data = _load_data(args.data)
    model, line = _load_model(args.checkpoint, data)
    radii = _floats(args.radii) if args.radii else cfg.eval.radii
    sigmas = _floats(args.thresholds_sigma) if args.thresholds_sigma else cfg.eval.thresholds_sigma
    n = args.n if args.n is not None else cfg.eval.n_generate
    seed = args.seed if args.seed is not None else cfg.eval.seed
    if any(r <= 0 for r in radii):
        raise ConfigError("radii must be positive")
    cfg.eval.radii, cfg.eval.thresholds_sigma, cfg.eval.n_generate, cfg.eval.seed = radii, sigmas, n, seed
    cfg.dump(out / "resolved-config.json")
    rows = radius_ablation(model, line, n, radii, sigmas, seed)
    write_csv(
        out / "validity_curve.csv",
        ("radius", "threshold", "n_valid", "n_total"),
        ((r.radius, r.threshold, r.n_valid, r.n_total) for r in rows),
    )
    print(out / "validity_curve.csv")


def cmd_local_sample(args) -> None:
    cfg = _config(args)
    out = _out_dir(args)
    data = _load_data(args.data)
    model, line = _load_model(args.checkpoint, data)
    centers = [_check_index(data, i, "--centers") for i in _ints(args.centers)]
    seed = args.seed if args.seed is not None else cfg.eval.seed
    cfg.eval.n_centers, cfg.eval.n_per_center, cfg.eval.local_variance, cfg.eval.seed = (
        len(centers), args.n_per_center, args.variance, seed,
    )
    cfg.dump(out / "resolved-config.json")
    spreads = local_sample(model, line, data.subset(centers), args.n_per_center, args.variance, seed)
    write_csv(
        out / "local_sampling.csv",
        ("center_id", "res_mean", "res_std"),
        ((centers[s.center_id], s.res_mean, s.res_std) for s in spreads),
    )
    print(out / "local_sampling.csv")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hswae", description="Hyperspherical WAE experiments on synthetic multimodal data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch training progress")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="JSON run configuration (defaults used when omitted)")
        sp.add_argument("--out", required=True, help="output directory (created if missing)")
        return sp

    sp = add("gen-data", cmd_gen_data, "generate the synthetic dataset as <out>/data.jags")
    sp.add_argument("--n-samples", type=int, help="override data.synthetic.n_samples")
    sp.add_argument("--data-seed", type=int, help="override data.synthetic.seed")

    sp = add("train", cmd_train, "train on the training split of a .jags file")
    sp.add_argument("--data", required=True, help="input .jags file")
    sp.add_argument("--epochs", type=int, help="override train.epochs")
    sp.add_argument("--seed", type=int, help="override train.seed")
    sp.add_argument("--batch-size", type=int, help="override train.batch_size")
    sp.add_argument("--adv-weight", type=float, help="override train.adv_weight")

    sp = add("eval", cmd_eval, "reconstruction metrics, scientific-line fits and PGM grids on the test split")
    sp.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    sp.add_argument("--data", required=True, help="input .jags file")

    sp = add("sample", cmd_sample, "generate samples from the prior at a given sphere radius")
    sp.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    sp.add_argument("--n", type=int, default=1000, help="number of samples (default 1000)")
    sp.add_argument("--radius", type=float, default=1.0, help="sphere radius fed to the generator (default 1)")
    sp.add_argument("--seed", type=int, default=0, help="prior seed (default 0)")

    sp = add("interpolate", cmd_interpolate, "linear latent interpolation between two samples")
    sp.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    sp.add_argument("--data", required=True, help="input .jags file")
    sp.add_argument("--index-a", type=int, required=True, help="start sample index in the data file")
    sp.add_argument("--index-b", type=int, required=True, help="end sample index in the data file")
    sp.add_argument("--steps", type=int, default=8, help="points on the path including endpoints (default 8)")

    sp = add("ablate-radius", cmd_ablate_radius, "valid-sample counts over sphere radii and thresholds")
    sp.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    sp.add_argument("--data", required=True, help="input .jags file (shape check)")
    sp.add_argument("--radii", help="comma-separated radii (default from config: 0.25,0.5,1,2,4)")
    sp.add_argument("--thresholds-sigma", help="comma-separated thresholds in residual-std units (default 0.5,1,2,3)")
    sp.add_argument("--n", type=int, help="samples per radius (default 1000)")
    sp.add_argument("--seed", type=int, help="prior seed shared by all radii (default 0)")

    sp = add("local-sample", cmd_local_sample, "residual spread of samples drawn around encoded data points")
    sp.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    sp.add_argument("--data", required=True, help="input .jags file")
    sp.add_argument("--centers", default="0,1,2,3,4", help="comma-separated sample indices (default 0,1,2,3,4)")
    sp.add_argument("--n-per-center", type=int, default=200, help="draws per center (default 200)")
    sp.add_argument("--variance", type=float, default=1.0, help="latent variance around each center (default 1)")
    sp.add_argument("--seed", type=int, help="sampling seed (default 0)")
    return p


def _classify(exc: BaseException) -> tuple[int, str] | None:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG, "config_error"
    if isinstance(exc, (ArchMismatchError, ad.ShapeError)):
        return EXIT_SHAPE, "shape_mismatch"
    if isinstance(exc, (NumericalAbort, ad.NonFiniteError, DegenerateLatentError, FloatingPointError)):
        return EXIT_NUMERIC, "numerical_abort"
    if isinstance(exc, (OSError, DatasetFormatError, CheckpointError)):
        return EXIT_IO, "io_error"
    return None


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        kind = _classify(exc)
        if kind is None:
            if isinstance(exc, ValueError):
                kind = (EXIT_CONFIG, "config_error")
            else:
                raise
        code, name = kind
        message = " ".join(str(exc).split())
        print(f"{name}: {message}", file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
