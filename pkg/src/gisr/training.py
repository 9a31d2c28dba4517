"""MAE training loop: Adam, LR schedule, checkpoints, CSV log.

Everything is a pure function of (seed, config, dataset): mini-batch
order comes from a per-epoch generator seeded with (seed, epoch), so a
run resumed from a checkpoint continues bit-exactly where the
uninterrupted run would have been.
"""

import csv
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import container, metrics
from .errors import ArgumentError, FormatError, NumericError, ShapeError
from .tensor import Tensor, no_grad

CKPT_MAGIC = b"GICK"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 8e-4
    lr_decay_epochs: tuple = (200,)
    epochs: int = 100
    batch_size: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ArgumentError(f"lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        self.lr_decay_epochs = tuple(self.lr_decay_epochs)

    def lr_at(self, epoch):
        halvings = sum(1 for d in self.lr_decay_epochs if epoch >= d)
        return self.lr * 0.5 ** halvings


def mae_loss(pred, gt):
    """Mean absolute error over all elements (scalar tensor)."""
    gt = gt if isinstance(gt, Tensor) else Tensor(gt, dtype=pred.data.dtype)
    if pred.shape != gt.shape:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {gt.shape}")
    return (pred - gt).abs().mean()


class Adam:
    """Standard Adam with bias correction; state keyed by parameter name."""

    def __init__(self, named_params, cfg):
        self.params = list(named_params)
        self.cfg = cfg
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def step(self, lr):
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            p.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + cfg.eps)


def clip_gradients(params, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    grads = [p.grad for _, p in params if p.grad is not None]
    for g in grads:
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        scale = np.float64(max_norm / norm)
        for g in grads:
            g *= g.dtype.type(scale)
    return norm


def split_dataset(pairs):
    """Deterministic 7:2:1 split into train / val / test."""
    n = len(pairs)
    n_train = int(n * 0.7)
    n_val = int(n * 0.2)
    return (pairs[:n_train], pairs[n_train:n_train + n_val],
            pairs[n_train + n_val:])


def _stack(pairs, dtype):
    low = np.stack([p.L for p in pairs]).astype(dtype)
    guide = np.stack([p.P for p in pairs]).astype(dtype)
    hr = np.stack([p.H_gt for p in pairs]).astype(dtype)
    return low, guide, hr


@dataclass
class Checkpoint:
    params: list                 # [(name, array)] in model order
    adam_m: dict
    adam_v: dict
    step: int
    epoch: int
    best_val_psnr: float
    config: dict


def save_checkpoint(path, model, optimizer, epoch, best_val_psnr, config_echo):
    manifest = {"epoch": int(epoch), "step": int(optimizer.t),
                "best_val_psnr": float(best_val_psnr),
                "config": config_echo or {}}
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    entries = []
    for name, p in model.named_parameters():
        entries.append(("param/" + name, p.data))
    for name, _ in model.named_parameters():
        entries.append(("adam.m/" + name, optimizer.m[name]))
        entries.append(("adam.v/" + name, optimizer.v[name]))
    payload = container.pack_tensors(entries)
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(mbytes)))
        fh.write(mbytes)
        fh.write(payload)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != CKPT_MAGIC:
        raise FormatError("bad magic: not a checkpoint file")
    if len(buf) < 12:
        raise FormatError("truncated checkpoint header")
    version, mlen = struct.unpack("<II", buf[4:12])
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if len(buf) < 12 + mlen:
        raise FormatError("truncated checkpoint manifest")
    try:
        manifest = json.loads(buf[12:12 + mlen].decode("utf-8"))
    except ValueError as exc:
        raise FormatError(f"corrupt checkpoint manifest: {exc}") from None
    entries = container.unpack_tensors(buf[12 + mlen:])
    params, adam_m, adam_v = [], {}, {}
    for name, arr in entries:
        if name.startswith("param/"):
            params.append((name[len("param/"):], arr))
        elif name.startswith("adam.m/"):
            adam_m[name[len("adam.m/"):]] = arr
        elif name.startswith("adam.v/"):
            adam_v[name[len("adam.v/"):]] = arr
        else:
            raise FormatError(f"unexpected checkpoint entry {name!r}")
    return Checkpoint(params=params, adam_m=adam_m, adam_v=adam_v,
                      step=manifest.get("step", 0),
                      epoch=manifest.get("epoch", 0),
                      best_val_psnr=manifest.get("best_val_psnr", float("-inf")),
                      config=manifest.get("config", {}))


def restore_model(model, ckpt):
    """Load checkpoint parameters into the model, strictly by name."""
    stored = dict(ckpt.params)
    for name, p in model.named_parameters():
        if name not in stored:
            raise ShapeError(f"checkpoint is missing parameter {name!r}")
        arr = stored.pop(name)
        if arr.shape != p.data.shape:
            raise ShapeError(
                f"checkpoint parameter {name!r} has shape {arr.shape}, "
                f"model expects {p.data.shape}")
        p.data = arr.astype(p.data.dtype, copy=True)
    if stored:
        raise ShapeError(f"checkpoint has unknown parameter {next(iter(stored))!r}")


def restore_optimizer(optimizer, ckpt):
    for name, p in optimizer.params:
        if name not in ckpt.adam_m or name not in ckpt.adam_v:
            raise ShapeError(f"checkpoint is missing optimizer state for {name!r}")
        optimizer.m[name] = ckpt.adam_m[name].astype(p.data.dtype, copy=True)
        optimizer.v[name] = ckpt.adam_v[name].astype(p.data.dtype, copy=True)
    optimizer.t = ckpt.step


def validate_psnr(model, pairs, batch_size):
    """Mean PSNR of the model's predictions over a pair list."""
    if not pairs:
        return float("nan")
    dtype = model.cfg.np_dtype
    vals = []
    with no_grad():
        for i in range(0, len(pairs), batch_size):
            chunk = pairs[i:i + batch_size]
            low, guide, hr = _stack(chunk, dtype)
            pred, _ = model.forward(low, guide)
            for b in range(len(chunk)):
                vals.append(metrics.psnr(pred.data[b], hr[b]))
    return float(np.mean(vals))


def train(model, dataset, cfg, out_dir=None, log_path=None, resume_from=None,
          config_echo=None, progress=None):
    """Train on the 7:2:1 split of `dataset`; returns per-epoch log rows.

    Writes best/last checkpoints into out_dir (when given) and a CSV log
    with columns epoch,train_loss,val_psnr,lr (when log_path is given).
    Raises NumericError if the loss goes non-finite.
    """
    train_pairs, val_pairs, _ = split_dataset(dataset)
    if not train_pairs:
        raise ArgumentError("dataset too small: empty training split")
    dtype = model.cfg.np_dtype
    opt = Adam(model.named_parameters(), cfg)
    start_epoch = 1
    best_val = float("-inf")
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        restore_model(model, ckpt)
        restore_optimizer(opt, ckpt)
        start_epoch = ckpt.epoch + 1
        best_val = ckpt.best_val_psnr
    rows = []
    writer = None
    if log_path is not None:
        log_fh = open(log_path, "w", newline="")
        writer = csv.writer(log_fh)
        writer.writerow(["epoch", "train_loss", "val_psnr", "lr"])
    try:
        for epoch in range(start_epoch, cfg.epochs + 1):
            lr = cfg.lr_at(epoch)
            order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_pairs))
            losses = []
            for i in range(0, len(order), cfg.batch_size):
                batch = [train_pairs[j] for j in order[i:i + cfg.batch_size]]
                low, guide, hr = _stack(batch, dtype)
                pred, _ = model.forward(low, guide)
                loss = mae_loss(pred, Tensor(hr))
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError(
                        f"non-finite loss {value} at epoch {epoch} step {len(losses)}")
                model.zero_grad()
                loss.backward()
                clip_gradients(opt.params, cfg.clip_norm)
                opt.step(lr)
                losses.append(value)
            val_psnr = validate_psnr(model, val_pairs, cfg.batch_size)
            row = {"epoch": epoch, "train_loss": float(np.mean(losses)),
                   "val_psnr": val_psnr, "lr": lr}
            rows.append(row)
            if writer is not None:
                writer.writerow([row["epoch"], repr(row["train_loss"]),
                                 repr(row["val_psnr"]), repr(row["lr"])])
            if progress is not None:
                progress(row)
            if out_dir is not None:
                # empty val split: every epoch counts as best
                is_best = math.isnan(val_psnr) or val_psnr > best_val
                if is_best and not math.isnan(val_psnr):
                    best_val = val_psnr
                if is_best:
                    save_checkpoint(f"{out_dir}/best.ckpt", model, opt, epoch,
                                    best_val, config_echo)
                save_checkpoint(f"{out_dir}/last.ckpt", model, opt, epoch,
                                best_val, config_echo)
    finally:
        if writer is not None:
            log_fh.close()
    return rows
