"""Experiment runners shared by the CLI, the scripts and the tests."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..chem import PropertyOracle, is_valid
from ..checkpoint import Checkpoint, load_checkpoint
from ..metrics import MetricsRecord, decode_latents, encode_smiles, evaluate_nuvr, generate, sample_latents
from ..vocab import TokenizationError, tokenize
from .config import RunConfig
from .data import DatasetSplit
from .train import train

log = logging.getLogger(__name__)


def _as_checkpoint(ck) -> Checkpoint:
    return ck if isinstance(ck, Checkpoint) else load_checkpoint(ck)


def _condition_vector(model, n: int, condition: float | None) -> np.ndarray | None:
    if model.cfg.conditional:
        if condition is None:
            raise ValueError("conditional model: pass a condition value")
        return np.full(n, float(condition))
    if condition is not None:
        raise ValueError("condition given to an unconditional model")
    return None


def sample(ck, n: int, seed: int = 0, condition: float | None = None, beam: int = 1, training: Sequence[str] = ()) -> list[str]:
    ck = _as_checkpoint(ck)
    cond = _condition_vector(ck.model, n, condition)
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    z = sample_latents(ck.model, n, rng)
    return generate(ck.model, ck.vocab, z, set(training), cond, beam)


@dataclass
class ReconstructionRow:
    smiles: str
    status: str  # match | mismatch | too-long | untokenizable
    decoded: str


def reconstruct(ck, smiles: Sequence[str], conditions: Sequence[float] | None = None, beam: int = 1) -> tuple[list[ReconstructionRow], float | None]:
    """Per-molecule exact-match report. Inputs that cannot be encoded are
    reported and skipped; the rate is None when nothing was evaluable."""
    ck = _as_checkpoint(ck)
    model, vocab = ck.model, ck.vocab
    if model.cfg.conditional and conditions is None:
        raise ValueError("conditional model: per-molecule conditions are required")
    rows: list[ReconstructionRow | None] = [None] * len(smiles)
    ok_idx = []
    for i, s in enumerate(smiles):
        try:
            t = tokenize(s, vocab)
        except TokenizationError:
            rows[i] = ReconstructionRow(s, "untokenizable", "")
            continue
        if len(t.ids) > model.cfg.max_len:
            rows[i] = ReconstructionRow(s, "too-long", "")
            continue
        ok_idx.append(i)
    for lo in range(0, len(ok_idx), 256):
        idx = ok_idx[lo : lo + 256]
        part = [smiles[i] for i in idx]
        cond = None if conditions is None else np.asarray([conditions[i] for i in idx], dtype=float)
        z = encode_smiles(model, vocab, part, cond)
        outs = decode_latents(model, vocab, z.values, cond, beam)
        for i, s, o in zip(idx, part, outs):
            rows[i] = ReconstructionRow(s, "match" if o[0] == s else "mismatch", o[0])
    if not ok_idx:
        return rows, None
    hits = sum(1 for r in rows if r.status == "match")
    return rows, hits / len(ok_idx)


def full_metrics(ck, training: Sequence[str], test_set: Sequence[str], seed: int = 0, n_samples: int = 10000,
                 repeats: int = 5, beam: int = 1, condition: float | None = None, test_conditions=None) -> MetricsRecord:
    ck = _as_checkpoint(ck)
    rng = np.random.default_rng([seed, 13])
    if ck.model.cfg.conditional and condition is None:
        raise ValueError("conditional model: pass a sampling condition")
    return evaluate_nuvr(ck.model, ck.vocab, training, test_set, rng, n_samples, repeats, beam, condition, test_conditions)


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Correlation over the finite pairs; None when it is undefined."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if len(x) < 2:
        return None
    dx, dy = x - x.mean(), y - y.mean()
    den = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if den == 0.0:
        return None
    return float(dx @ dy) / den


@dataclass
class CorrelationRow:
    condition: float
    mean_property: float
    valid_count: int
    samples: int


def correlate(ck, grid: Sequence[float], n_per_point: int, oracle: PropertyOracle, seed: int = 0,
              beam: int = 1, training: Sequence[str] = ()) -> tuple[list[CorrelationRow], float | None]:
    ck = _as_checkpoint(ck)
    if len(grid) == 0:
        raise ValueError("condition grid is empty")
    if not ck.model.cfg.conditional:
        raise ValueError("correlation needs a conditional model")
    train_set = set(training)
    rows = []
    for k, c in enumerate(grid):
        rng = np.random.default_rng([seed, k])
        z = sample_latents(ck.model, n_per_point, rng)
        gen = generate(ck.model, ck.vocab, z, train_set, np.full(n_per_point, float(c)), beam)
        vals = [oracle.value(s) for s in gen if is_valid(s)]
        mean = float(np.mean(vals)) if vals else math.nan
        rows.append(CorrelationRow(float(c), mean, len(vals), n_per_point))
    r = pearson([row.condition for row in rows], [row.mean_property for row in rows])
    return rows, r


SWEEP_KINDS = {"lambda": ("loss", "lam"), "delta": ("loss", "delta"), "sigma": ("loss", "two_sigma_sq"),
               "loss-type": ("loss", "objective"), "beam-size": (None, None)}


@dataclass
class SweepRow:
    setting: str
    record: MetricsRecord
    checkpoint: str


def sweep(kind: str, grid: Sequence, base_cfg: RunConfig, split: DatasetSplit, base_checkpoint=None,
          n_samples: int = 1000, repeats: int = 1, beam: int = 1, out_dir=None) -> list[SweepRow]:
    """Per-setting metrics.

    lambda / delta / sigma continue training from ``base_checkpoint`` for
    ``base_cfg.train.epochs`` epochs per setting. loss-type trains each
    objective from scratch (the KL variant needs an extra encoder head).
    beam-size evaluates ``base_checkpoint`` at every beam width.
    """
    if kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}; choose from {sorted(SWEEP_KINDS)}")
    out_dir = Path(out_dir or base_cfg.out_dir)
    training = split.smiles("train")
    test = split.smiles("test")
    cond = test_cond = None
    if base_cfg.model.conditional:
        cond = float(np.mean(split.values("train", base_cfg.data.property)))
        test_cond = split.values("test", base_cfg.data.property)
    rows = []
    if kind == "beam-size":
        if base_checkpoint is None:
            raise ValueError("beam-size sweep needs a checkpoint")
        ck = _as_checkpoint(base_checkpoint)
        for b in grid:
            rec = full_metrics(ck, training, test, base_cfg.seed, n_samples, repeats, int(b), cond, test_cond)
            rows.append(SweepRow(str(b), rec, str(base_checkpoint)))
        return rows
    section, key = SWEEP_KINDS[kind]
    if kind != "loss-type" and base_checkpoint is None:
        raise ValueError(f"{kind} sweep continues training and needs a base checkpoint")
    for value in grid:
        run_dir = out_dir / f"{kind}_{value}"
        cfg = base_cfg.with_overrides(**{section: {key: value}}, out_dir=str(run_dir))
        init = None if kind == "loss-type" else base_checkpoint
        res = train(cfg, init_checkpoint=init, split=split)
        ck = load_checkpoint(res.checkpoints[-1])
        rec = full_metrics(ck, training, test, base_cfg.seed, n_samples, repeats, beam, cond, test_cond)
        rows.append(SweepRow(str(value), rec, str(res.checkpoints[-1])))
    return rows


@dataclass
class PCAResult:
    components: np.ndarray  # (2, D) leading principal axes of the reference
    eigenvalues: np.ndarray  # all reference eigenvalues, descending
    reference: np.ndarray  # (n_gaussian, 2)
    clean: np.ndarray  # (n, 2)
    noisy: np.ndarray  # (n, 2)
    mahalanobis_clean: float
    mahalanobis_noisy: float


def mahalanobis(points: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Distance of each row of ``points`` to the sample distribution of
    ``reference`` (mean and covariance estimated from it)."""
    mu = reference.mean(axis=0)
    cov = np.cov(reference, rowvar=False)
    diff = points - mu
    sol = np.linalg.lstsq(cov, diff.T, rcond=None)[0]
    return np.sqrt(np.maximum(np.einsum("ij,ji->i", diff, sol), 0.0))


def latent_pca(latents: np.ndarray, n_gaussian: int, seed: int = 0, noise_scale: float = 1.0) -> PCAResult:
    """Project latents (and noised copies) onto the top two principal axes of
    a standard Gaussian reference sample."""
    latents = np.asarray(latents, dtype=np.float64).reshape(len(latents), -1)
    if len(latents) < 2 or n_gaussian < 2:
        raise ValueError("latent PCA needs at least two latents and two reference samples")
    rng = np.random.default_rng(seed)
    D = latents.shape[1]
    ref = rng.standard_normal((n_gaussian, D))
    mu = ref.mean(axis=0)
    evals, evecs = np.linalg.eigh(np.cov(ref, rowvar=False))
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    comps = evecs[:, order[:2]].T
    noisy = latents + noise_scale * rng.standard_normal(latents.shape)
    proj = lambda x: (x - mu) @ comps.T  # noqa: E731
    return PCAResult(
        comps, evals, proj(ref), proj(latents), proj(noisy),
        float(mahalanobis(latents, ref).mean()), float(mahalanobis(noisy, ref).mean()),
    )


def encoded_latents(ck, smiles: Sequence[str], conditions=None) -> np.ndarray:
    ck = _as_checkpoint(ck)
    out = []
    for lo in range(0, len(smiles), 256):
        cond = None if conditions is None else np.asarray(conditions[lo : lo + 256], dtype=float)
        out.append(encode_smiles(ck.model, ck.vocab, list(smiles[lo : lo + 256]), cond).values)
    return np.concatenate(out).reshape(len(smiles), -1)
