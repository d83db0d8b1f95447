"""Training loop, per-epoch evaluation and output-directory locking."""
from __future__ import annotations

import contextlib
import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import ndiff as nd
from ..checkpoint import load_checkpoint, save_checkpoint
from ..losses import total_loss
from ..metrics import MetricsRecord, evaluate_nuvr, reconstruction
from ..model import KAEModel, ModelConfig
from ..vocab import Vocabulary, build_vocabulary, max_len_for, pad_batch, tokenize, TokenizationError
from .config import RunConfig
from .data import DatasetSplit, load_dataset

log = logging.getLogger(__name__)

STEP_FIELDS = ["epoch", "step", "lr", "total", "wcel", "regularizer", "cel_noisy", "cel_clean", "grad_norm"]
EPOCH_FIELDS = [
    "epoch", "mean_loss", "novelty", "uniqueness", "validity", "val_reconstruction",
    "nuv", "nuvr", "train_reconstruction",
]


class TrainingError(RuntimeError):
    pass


class LockError(RuntimeError):
    pass


@contextlib.contextmanager
def directory_lock(out_dir):
    """Exclusive ownership of an output directory for one subcommand."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(f"{out_dir} is in use by another process (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        with contextlib.suppress(FileNotFoundError):
            lock.unlink()


def fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def artifact_header(cfg: RunConfig, extra: str = "") -> str:
    line = f"# seed={cfg.seed} config_digest={cfg.digest()}"
    return line + (f" {extra}" if extra else "") + "\n"


def write_csv(path, header_comment: str, fields: list[str], rows: list[dict]):
    buf = io.StringIO()
    buf.write(header_comment)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([fmt(r[f]) for f in fields])
    Path(path).write_text(buf.getvalue())


def read_csv_body(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def portable_config(cfg: RunConfig) -> dict:
    """Config as stored in checkpoints: without the output directory, so a
    run reproduced elsewhere writes identical bytes."""
    d = cfg.to_dict()
    d.pop("out_dir")
    return d


def conditions_for(cfg: RunConfig, split: DatasetSplit, part: str) -> np.ndarray | None:
    if not cfg.model.conditional:
        return None
    return split.values(part, cfg.data.property)


def build_model(cfg: RunConfig, vocab: Vocabulary, max_len: int) -> KAEModel:
    m = cfg.model
    mc = ModelConfig(
        vocab_size=vocab.size,
        max_len=m.max_len or max_len,
        embedding_size=m.embedding_size,
        heads=m.heads,
        encoder_layers=m.encoder_layers,
        decoder_layers=m.decoder_layers,
        latent_positions=m.latent_positions,
        ff_width=m.ff_width,
        conditional=m.conditional,
        dropout=m.dropout,
        kl_mode=m.kl_mode or cfg.loss.objective == "kl",
        dtype=m.dtype,
    )
    return KAEModel(mc, seed=cfg.seed)


def tokenizable(smiles: list[str], vocab: Vocabulary, max_len: int) -> list[int]:
    keep = []
    for i, s in enumerate(smiles):
        try:
            t = tokenize(s, vocab)
        except TokenizationError:
            continue
        if len(t.ids) <= max_len:
            keep.append(i)
    return keep


def eval_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, 7])


def epoch_metrics(model, vocab, cfg: RunConfig, split: DatasetSplit, epoch: int) -> dict:
    """Light evaluation; a standalone run on the saved epoch checkpoint
    reproduces it exactly because the RNG is derived from (seed, epoch)."""
    tc = cfg.train
    rng = eval_rng(cfg.seed, epoch)
    train_smiles = split.smiles("train")
    val_idx = tokenizable(split.smiles("validation"), vocab, model.cfg.max_len)
    val = [split.smiles("validation")[i] for i in val_idx]
    val_cond = None
    cond = None
    if cfg.model.conditional:
        vals = split.values("validation", cfg.data.property)
        val_cond = vals[val_idx] if len(val_idx) else None
        cond = float(np.mean(split.values("train", cfg.data.property)))
    rec = evaluate_nuvr(
        model, vocab, train_smiles, val, rng, n_samples=tc.eval_samples, repeats=1,
        beam=tc.eval_beam, condition=cond, test_conditions=val_cond,
    )
    val_rec, nuvr = (rec.reconstruction, rec.nuvr) if val else (float("nan"), float("nan"))
    train_rec = float("nan")
    if tc.train_recon_samples:
        sub = train_smiles[: tc.train_recon_samples]
        tcond = None
        if cfg.model.conditional:
            tcond = split.values("train", cfg.data.property)[: tc.train_recon_samples]
        train_rec = reconstruction(model, vocab, sub, tcond)
    return {
        "epoch": epoch,
        "novelty": rec.novelty,
        "uniqueness": rec.uniqueness,
        "validity": rec.validity,
        "val_reconstruction": val_rec,
        "nuv": rec.nuv,
        "nuvr": nuvr,
        "train_reconstruction": train_rec,
    }


def clip_gradients(params: dict, max_norm: float | None) -> float:
    sq = 0.0
    for p in params.values():
        if p.grad is not None:
            sq += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(sq)
    if max_norm is not None and norm > max_norm and math.isfinite(norm):
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


def learning_rate(cfg: RunConfig, step: int, total_steps: int) -> float:
    o = cfg.optim
    if o.warmup_steps and step < o.warmup_steps:
        return o.lr * (step + 1) / o.warmup_steps
    if o.schedule == "cosine" and total_steps > o.warmup_steps:
        frac = min(1.0, (step - o.warmup_steps) / (total_steps - o.warmup_steps))
        return o.min_lr + 0.5 * (o.lr - o.min_lr) * (1.0 + math.cos(math.pi * frac))
    return o.lr


@dataclass
class TrainResult:
    out_dir: Path
    checkpoints: list[Path]
    step_log: Path
    epoch_log: Path
    epochs: list[dict] = field(default_factory=list)
    model: KAEModel | None = None
    vocab: Vocabulary | None = None
    split: DatasetSplit | None = None


def _rng_from_meta(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


def train(cfg: RunConfig, init_checkpoint=None, split: DatasetSplit | None = None, lock: bool = True) -> TrainResult:
    """Run ``cfg.train.epochs`` epochs, writing logs and one checkpoint per epoch.

    ``init_checkpoint`` continues from saved weights and optimizer state (the
    sweep protocol); epochs are then numbered after the checkpoint's epoch.
    """
    out = Path(cfg.out_dir)
    ctx = directory_lock(out) if lock else contextlib.nullcontext(out)
    with ctx:
        return _train(cfg, out, init_checkpoint, split)


def _train(cfg: RunConfig, out: Path, init_checkpoint, split) -> TrainResult:
    out.mkdir(parents=True, exist_ok=True)
    if split is None:
        split = load_dataset(
            cfg.data.path, cfg.data.property if (cfg.model.conditional or cfg.data.property == "toy") else None,
            cfg.data.smiles_column, cfg.data.split, cfg.seed, cfg.data.test_path,
        )
    train_smiles = split.smiles("train")
    if not train_smiles:
        raise TrainingError("training split is empty")
    start_epoch = 0
    if init_checkpoint is not None:
        ck = load_checkpoint(init_checkpoint)
        model, vocab = ck.model, ck.vocab
        model.cfg.dropout = cfg.model.dropout
        opt = ck.make_optimizer(lr=cfg.optim.lr, beta1=cfg.optim.beta1, beta2=cfg.optim.beta2, eps=cfg.optim.eps)
        start_epoch = int(ck.meta.get("epoch", 0))
        rng = np.random.default_rng([cfg.seed, start_epoch, 11])
    else:
        vocab = build_vocabulary(train_smiles)
        model = build_model(cfg, vocab, max_len_for(train_smiles))
        o = cfg.optim
        opt = nd.Adam(model.params, lr=o.lr, beta1=o.beta1, beta2=o.beta2, eps=o.eps)
        rng = np.random.default_rng([cfg.seed, 0, 11])
    M = model.cfg.max_len
    seqs = [tokenize(s, vocab) for s in train_smiles]
    ids_all, mask_all = pad_batch(seqs, M, vocab.pad_id)
    cond_all = conditions_for(cfg, split, "train")
    labels_all = ids_all[:, 1:]
    label_mask_all = mask_all[:, 1:]
    D = model.cfg.latent_dim
    dt = model.cfg.np_dtype

    header = artifact_header(cfg)
    step_rows: list[dict] = []
    epoch_rows: list[dict] = []
    checkpoints: list[Path] = []
    step_log = out / "train_log.csv"
    epoch_log = out / "epoch_metrics.csv"
    bs = cfg.train.batch_size
    n = len(seqs)
    global_step = opt.step_count
    # schedule horizon covers this invocation only, so continued runs restart it
    steps_per_epoch = -(-n // bs)
    first_step = global_step
    total_steps = steps_per_epoch * cfg.train.epochs
    try:
        for epoch in range(start_epoch + 1, start_epoch + cfg.train.epochs + 1):
            order = rng.permutation(n)
            losses = []
            for lo in range(0, n, bs):
                idx = order[lo : lo + bs]
                cond = None if cond_all is None else cond_all[idx]
                lpn, lpc, lat, logvar = model.forward_train(
                    ids_all[idx], mask_all[idx], cond, rng, training=True, noise_scale=cfg.train.noise_scale
                )
                gauss = None
                if cfg.loss.objective != "kl":
                    gauss = nd.constant(rng.standard_normal((cfg.loss.gaussian_samples, D)).astype(dt))
                loss, rep = total_loss(
                    lpn, lpc, labels_all[idx], label_mask_all[idx], cfg.loss,
                    latents=lat, gaussians=gauss, kl_mean=lat, kl_logvar=logvar,
                )
                if not math.isfinite(rep.total):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch} step {global_step}: {rep.as_dict()}"
                    )
                opt.zero_grad()
                nd.reverse_accumulate(loss)
                gnorm = clip_gradients(model.params, cfg.optim.clip_norm)
                lr = learning_rate(cfg, global_step - first_step, total_steps)
                if not opt.step(lr):
                    raise TrainingError(f"non-finite gradient at epoch {epoch} step {global_step}")
                global_step += 1
                losses.append(rep.total)
                step_rows.append({
                    "epoch": epoch, "step": global_step, "lr": float(lr), "total": rep.total,
                    "wcel": rep.wcel, "regularizer": rep.regularizer, "cel_noisy": rep.cel_noisy,
                    "cel_clean": rep.cel_clean, "grad_norm": gnorm,
                })
            row = {"epoch": epoch, "mean_loss": float(np.mean(losses))}
            if cfg.train.eval_every and epoch % cfg.train.eval_every == 0:
                row.update(epoch_metrics(model, vocab, cfg, split, epoch))
            else:
                row.update({k: float("nan") for k in EPOCH_FIELDS if k not in row})
            epoch_rows.append(row)
            log.info("epoch %d loss %.4f", epoch, row["mean_loss"])
            ck_path = out / f"epoch_{epoch:04d}.ckpt"
            save_checkpoint(ck_path, model, vocab, opt, meta={
                "seed": cfg.seed, "config_digest": cfg.digest(), "epoch": epoch,
                "rng_state": rng.bit_generator.state, "run_config": portable_config(cfg),
            })
            if cfg.train.keep_checkpoints == "last":
                for old in checkpoints:
                    old.unlink(missing_ok=True)
                checkpoints = []
            checkpoints.append(ck_path)
    finally:
        write_csv(step_log, header, STEP_FIELDS, step_rows)
        write_csv(epoch_log, header, EPOCH_FIELDS, epoch_rows)
    return TrainResult(out, checkpoints, step_log, epoch_log, epoch_rows, model, vocab, split)
