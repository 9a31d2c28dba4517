"""Command-line interface.

Subcommands: synth, train, eval, infer, gradcheck. Flags override
config-file values, which override built-in defaults; the seed falls
back to the GISR_SEED environment variable when neither gives one.
Exit codes: 0 success, 1 user error (bad arguments/files), 2 numeric
failure.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import container, gradcheck, metrics
from .config import default_run_config, load_run_config
from .degradation import synth_scene_dataset
from .errors import (ArgumentError, FormatError, GisrError, NumericError,
                     ShapeError)
from .model import MADUNet
from .tensor import Tensor, bicubic_resize, no_grad
from .training import load_checkpoint, restore_model, train


def _load_config(args):
    cfg = load_run_config(args.config) if args.config else default_run_config()
    model = cfg.model
    if getattr(args, "stages", None) is not None:
        model.K = args.stages
    if getattr(args, "no_memory", False):
        model.use_memory = False
    if getattr(args, "no_cnl", False):
        model.use_cnl = False
    if getattr(args, "epochs", None) is not None:
        cfg.train.epochs = args.epochs
    seed = args.seed
    if seed is None:
        seed = os.environ.get("GISR_SEED")
        seed = int(seed) if seed else None
    if seed is not None:
        cfg.train.seed = seed
    return cfg


def _seed(cfg):
    return cfg.train.seed


def cmd_synth(args):
    cfg = _load_config(args)
    m, d = cfg.model, cfg.data
    if d.size % m.r:
        raise ArgumentError(
            f"data.size {d.size} is not divisible by model ratio {m.r}")
    pairs = synth_scene_dataset(d.n, m.target_bands, m.guide_bands, d.size,
                                m.r, _seed(cfg), d.noise_sigma)
    out = args.out or cfg.paths.dataset
    container.save_dataset(out, pairs)
    print(f"wrote {len(pairs)} pairs ({3 * len(pairs)} tensors) to {out}")
    return 0


def cmd_train(args):
    cfg = _load_config(args)
    dataset_path = args.dataset or cfg.paths.dataset
    if not os.path.exists(dataset_path):
        raise FileNotFoundError(f"dataset not found: {dataset_path}")
    pairs = container.load_dataset(dataset_path)
    out_dir = args.out_dir or cfg.paths.out_dir
    os.makedirs(out_dir, exist_ok=True)
    model = MADUNet(cfg.model, seed=_seed(cfg))
    log_path = os.path.join(out_dir, "train_log.csv")

    def progress(row):
        print(f"epoch {row['epoch']:4d}  loss {row['train_loss']:.5f}  "
              f"val_psnr {row['val_psnr']:.3f}  lr {row['lr']:.2e}")

    train(model, pairs, cfg.train, out_dir=out_dir, log_path=log_path,
          resume_from=args.resume, config_echo=cfg.echo(),
          progress=progress if not args.quiet else None)
    print(f"checkpoints in {out_dir} (best.ckpt, last.ckpt); log {log_path}")
    return 0


def _model_from_checkpoint(path, override=None):
    from .config import parse_run_config
    ckpt = load_checkpoint(path)
    if not ckpt.config:
        raise FormatError(f"checkpoint {path} carries no config echo")
    cfg = parse_run_config(ckpt.config)
    if override:
        override(cfg)
    model = MADUNet(cfg.model, seed=cfg.train.seed)
    restore_model(model, ckpt)
    return model, cfg


def cmd_eval(args):
    model, cfg = _model_from_checkpoint(args.checkpoint)
    pairs = container.load_dataset(args.dataset)
    if not pairs:
        raise ArgumentError(f"dataset {args.dataset} is empty")
    dtype = model.cfg.np_dtype
    rows = []
    with no_grad():
        for idx, pair in enumerate(pairs):
            pred, _ = model.forward(pair.L[None].astype(dtype),
                                    pair.P[None].astype(dtype))
            model_rep = metrics.report(pred.data[0], pair.H_gt, pair.r)
            baseline = bicubic_resize(Tensor(pair.L[None]), pair.r).data[0]
            base_rep = metrics.report(baseline, pair.H_gt, pair.r)
            rows.append((f"pair{idx}", model_rep, base_rep))
    header = (["id"] + list(metrics.MetricReport.FIELDS)
              + ["bicubic_" + f for f in metrics.MetricReport.FIELDS])
    table = [[rid] + rep.as_row() + base.as_row() for rid, rep, base in rows]
    mean_row = ["mean"] + list(np.mean([r[1:] for r in table], axis=0))
    table.append(mean_row)
    out = args.out or "metrics.csv"
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in table:
            wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
    print(f"wrote {len(rows)} per-image rows + mean to {out}")
    print("mean model PSNR {:.3f} dB vs bicubic {:.3f} dB".format(
        float(mean_row[1]), float(mean_row[1 + len(metrics.MetricReport.FIELDS)])))
    return 0


def _load_image(path):
    """PNG (8-bit) or single-entry container -> [bands,H,W] float array."""
    if path.endswith(".png"):
        from PIL import Image
        img = np.asarray(Image.open(path))
        if img.ndim == 2:
            img = img[None]
        else:
            img = img.transpose(2, 0, 1)
        return img.astype(np.float64) / 255.0
    entries = container.read_tensors(path)
    if not entries:
        raise FormatError(f"{path} holds no tensors")
    arr = entries[0][1]
    if arr.ndim == 2:
        arr = arr[None]
    return arr


def _to_png(path, img):
    """[bands,H,W] in [0,1] -> 8-bit PNG; bands (2,1,0) as RGB if >=3."""
    from PIL import Image
    img = np.clip(img, 0.0, 1.0)
    if img.shape[0] >= 3:
        rgb = np.stack([img[2], img[1], img[0]], axis=-1)
        data = np.round(rgb * 255.0).astype(np.uint8)
    else:
        data = np.round(img[0] * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def cmd_infer(args):
    model, cfg = _model_from_checkpoint(args.checkpoint)
    low = _load_image(args.target)
    guide = _load_image(args.guide)
    if low.shape[0] != cfg.model.target_bands:
        raise ShapeError(
            f"target has {low.shape[0]} bands, model expects {cfg.model.target_bands}")
    if guide.shape[0] != cfg.model.guide_bands:
        raise ShapeError(
            f"guide has {guide.shape[0]} bands, model expects {cfg.model.guide_bands}")
    dtype = model.cfg.np_dtype
    with no_grad():
        pred, _ = model.forward(low[None].astype(dtype), guide[None].astype(dtype))
    est = pred.data[0].astype(np.float64)
    base = args.out
    _to_png(base + ".png", est)
    container.write_tensors(base + ".gisr", [("H", est)])
    outputs = [base + ".png", base + ".gisr"]
    if args.gt:
        gt = _load_image(args.gt)
        if gt.shape != est.shape:
            raise ShapeError(f"ground truth {gt.shape} != prediction {est.shape}")
        err = np.mean((est - gt) ** 2, axis=0)
        peak = err.max()
        heat = err / peak if peak > 0 else err
        from PIL import Image
        Image.fromarray(np.round(heat * 255.0).astype(np.uint8)).save(
            base + "_residual.png")
        outputs.append(base + "_residual.png")
    print("wrote " + ", ".join(outputs))
    return 0


def cmd_gradcheck(args):
    results = gradcheck.run_suite(op=args.op, seed=args.seed or 0)
    worst = 0.0
    for name, err in results:
        status = "pass" if err < 1e-4 else "FAIL"
        print(f"{status}  {name:24s} max rel err {err:.3e}")
        worst = max(worst, err)
    print(f"checked {len(results)} ops; worst {worst:.3e}")
    return 0 if worst < 1e-4 else 2


def build_parser():
    p = argparse.ArgumentParser(prog="gisr",
                                description="Guided image super-resolution toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, train_flags=False):
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--seed", type=int, default=None,
                        help="seed (fallback: GISR_SEED env var, then config)")
        if train_flags:
            sp.add_argument("--stages", type=int, default=None,
                            help="override stage count K")
            sp.add_argument("--no-memory", action="store_true",
                            help="disable the persistent memory path")
            sp.add_argument("--no-cnl", action="store_true",
                            help="disable the non-local refinement module")
            sp.add_argument("--epochs", type=int, default=None)

    sp = sub.add_parser("synth", help="generate a synthetic guided dataset")
    common(sp)
    sp.add_argument("--out", help="output dataset path")
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("train", help="train on a dataset file")
    common(sp, train_flags=True)
    sp.add_argument("--dataset", help="dataset container path")
    sp.add_argument("--out-dir", help="directory for checkpoints and log")
    sp.add_argument("--resume", help="checkpoint to resume from")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="metric report for a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("dataset")
    sp.add_argument("--out", help="metrics CSV path")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("infer", help="super-resolve one image pair")
    sp.add_argument("checkpoint")
    sp.add_argument("target", help="LR target (PNG or container)")
    sp.add_argument("guide", help="HR guidance (PNG or container)")
    sp.add_argument("--gt", help="ground truth for the residual map")
    sp.add_argument("--out", default="prediction",
                    help="output prefix (.png/.gisr/_residual.png)")
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("gradcheck", help="finite-difference suite")
    sp.add_argument("--op", help="restrict to one operation")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=cmd_gradcheck)

    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except (GisrError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
