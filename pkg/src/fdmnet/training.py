"""Deterministic desk-scale training and evaluation loops."""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import save_checkpoint
from .config import config_text
from .losses import LossWeights, total_loss
from .lowpass import LowpassConfig, bilinear_demosaic, reconstruct_lowpass
from .maformer import MaFormer, cube_batch_to_nchw, fdmnet_forward, nchw_to_cube_batch
from .metrics import metrics, psnr
from .msfa import MosaicImage, MsfaPattern, SizingError, mosaic, sample_mask
from .optim import AdamState, adam_step, halving_lr

log = logging.getLogger(__name__)

TRACE_FIELDS = ("step", "total", "l1s", "ffl", "l1c", "lr")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    patch_size: int = 128
    batch_size: int = 2
    steps: int = 1000
    lr: float = 1e-4
    halve_every: int = 1000  # epochs
    patches_per_epoch: int = 0  # 0 means one patch per training cube
    eval_every: int = 0
    target: str = "fdm"  # "blind" trains the network to predict the whole cube

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.target not in ("fdm", "blind"):
            raise ValueError(f"unknown training target {self.target!r}")

    def lr_at(self, step, n_cubes):
        per_epoch = self.patches_per_epoch or n_cubes
        epoch = (step * self.batch_size) // per_epoch
        return halving_lr(self.lr, epoch, self.halve_every)


@dataclass
class Batch:
    mosaics: np.ndarray  # (B, P, P)
    refs: np.ndarray  # (B, P, P, C)
    masks: np.ndarray  # (B, P, P, C)
    origins: list  # (cube index, row, col)


def sample_patches(cubes, cfg, rng, pattern=None):
    """Uniform random crops whose origins sit on the filter-array grid."""
    pattern = pattern or MsfaPattern.default()
    p, size = pattern.p, cfg.patch_size
    if size % p:
        raise SizingError(f"patch size {size} not divisible by period {p}")
    mos, refs, origins = [], [], []
    for _ in range(cfg.batch_size):
        ci = int(rng.integers(len(cubes)))
        cube = cubes[ci]
        if cube.shape[0] < size or cube.shape[1] < size:
            raise SizingError(f"cube {ci} of extent {cube.shape[:2]} is smaller than patch {size}")
        i0 = p * int(rng.integers((cube.shape[0] - size) // p + 1))
        j0 = p * int(rng.integers((cube.shape[1] - size) // p + 1))
        crop = cube[i0:i0 + size, j0:j0 + size]
        refs.append(crop)
        mos.append(mosaic(crop, pattern).data)
        origins.append((ci, i0, j0))
    mask = sample_mask(size, size, pattern)
    return Batch(np.stack(mos), np.stack(refs), np.broadcast_to(mask, (len(refs),) + mask.shape),
                 origins)


@dataclass
class TrainResult:
    trace: list = field(default_factory=list)
    holdout_psnr: list = field(default_factory=list)
    steps_done: int = 0


def _lowpass_batch(batch, pattern, lowcfg, cache):
    out = []
    for key, m in zip(batch.origins, batch.mosaics):
        if key not in cache:
            cache[key] = reconstruct_lowpass(MosaicImage(m, pattern), lowcfg)
        out.append(cache[key])
    return np.stack(out)


def checkpoint_header(model, lowcfg, tcfg=None):
    sections = {"model": model.cfg, "lowpass": lowcfg}
    if tcfg is not None:
        sections["train"] = tcfg
    return config_text(sections)


def write_checkpoint(path, model, lowcfg, tcfg=None):
    save_checkpoint(path, {n: p.value for n, p in model.named_params()},
                    checkpoint_header(model, lowcfg, tcfg))


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for row in trace:
            w.writerow([row["step"]] + [repr(float(row[k])) for k in TRACE_FIELDS[1:]])


def train(cubes, model: MaFormer, cfg: TrainConfig, weights=LossWeights(), lowcfg=LowpassConfig(),
          pattern=None, holdout=None, checkpoint_path=None, trace_path=None):
    """Adam on the joint loss. ``holdout`` is an optional reference cube whose
    PSNR is logged every ``cfg.eval_every`` steps."""
    pattern = pattern or MsfaPattern.default(int(round(np.sqrt(model.cfg.bands))))
    model.check_extents(cfg.patch_size, cfg.patch_size)
    rng = np.random.default_rng(cfg.seed)
    params = {n: p.value for n, p in model.named_params()}
    state = AdamState(lr=cfg.lr)
    cache = {}
    result = TrainResult()
    last_good = {n: v.copy() for n, v in params.items()}

    for step in range(cfg.steps):
        state.lr = cfg.lr_at(step, len(cubes))
        batch = sample_patches(cubes, cfg, rng, pattern)
        if cfg.target == "fdm":
            low = _lowpass_batch(batch, pattern, lowcfg, cache)
        else:
            low = np.zeros_like(batch.refs)
        model.zero_grad()
        high = nchw_to_cube_batch(model.forward(batch.mosaics[:, None]))
        terms, grad = total_loss(low, high, batch.refs, batch.masks, weights)
        if not np.isfinite(terms.total):
            _restore(model, last_good)
            if checkpoint_path:
                write_checkpoint(checkpoint_path, model, lowcfg, cfg)
            raise TrainingDiverged(f"non-finite loss at step {step}; last good parameters kept")
        model.backward(cube_batch_to_nchw(grad))
        adam_step(params, {n: p.grad for n, p in model.named_params()}, state)
        for n, v in params.items():
            last_good[n][...] = v
        result.trace.append({"step": step, "total": terms.total, "l1s": terms.l1s,
                             "ffl": terms.ffl, "l1c": terms.l1c, "lr": state.lr})
        if holdout is not None and cfg.eval_every and (step + 1) % cfg.eval_every == 0:
            score = psnr(predict(model, mosaic(holdout, pattern), lowcfg, cfg.target), holdout)
            result.holdout_psnr.append((step + 1, score))
            log.info("step %d loss %.6f holdout psnr %.3f", step + 1, terms.total, score)
        result.steps_done = step + 1

    if checkpoint_path:
        write_checkpoint(checkpoint_path, model, lowcfg, cfg)
    if trace_path:
        write_trace(trace_path, result.trace)
    return result


def _restore(model, values):
    for n, p in model.named_params():
        p.value[...] = values[n]


def predict(model, mos, lowcfg=LowpassConfig(), mode="fdm"):
    if mode == "fdm":
        return fdmnet_forward(mos, model, lowcfg)
    high = nchw_to_cube_batch(model.forward(mos.data[None, None]))[0]
    return np.clip(high, 0.0, 1.0)


def evaluate(cubes, model=None, lowcfg=LowpassConfig(), pattern=None, names=None, mode="fdm"):
    """Metric rows per cube and method, plus per-method averages."""
    pattern = pattern or MsfaPattern.default()
    names = names or [f"cube{i}" for i in range(len(cubes))]
    rows = []
    for name, cube in zip(names, cubes):
        mos = mosaic(cube, pattern)
        recon = {"bilinear": np.clip(bilinear_demosaic(mos), 0, 1),
                 "lowpass": reconstruct_lowpass(mos, lowcfg)}
        if model is not None:
            recon["fdm" if mode == "fdm" else "blind"] = predict(model, mos, lowcfg, mode)
        for method, pred in recon.items():
            rows.append({"file": name, "method": method, **metrics(pred, cube)})
    averages = {}
    for method in dict.fromkeys(r["method"] for r in rows):
        sel = [r for r in rows if r["method"] == method]
        averages[method] = {k: float(np.mean([r[k] for r in sel]))
                            for k in ("psnr", "ssim", "sam", "mrae")}
    return rows, averages
