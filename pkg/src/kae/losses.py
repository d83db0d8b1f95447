"""Reconstruction and latent-regularisation losses for the kernel-elastic
autoencoder: CEL, weighted CEL, RBF-kernel MMD variants and the KL baseline."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import ndiff as nd
from .ndiff import Tensor

log = logging.getLogger(__name__)

OBJECTIVES = ("m-mmd", "s-mmd", "kl")

# 2 sigma^2 presets: main-text sigma = sqrt(0.32) and the SI optimum 0.0005 * E
TWO_SIGMA_SQ_MAIN = 0.64


def two_sigma_sq_si(embedding_size: int) -> float:
    return 0.0005 * embedding_size


@dataclass
class LossConfig:
    lam: float = 1.0
    delta: float = -1.0
    two_sigma_sq: float = TWO_SIGMA_SQ_MAIN
    gaussian_samples: int = 1000
    objective: str = "m-mmd"
    reduction: str = "sum"  # per-sequence reduction; always averaged over the batch

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.lam + self.delta + 1 == 0:
            raise ValueError("lambda + delta + 1 must be nonzero")
        if self.two_sigma_sq <= 0:
            raise ValueError("two_sigma_sq must be positive")
        if self.gaussian_samples < 1:
            raise ValueError("gaussian_samples must be >= 1")
        if self.reduction not in ("sum", "mean"):
            raise ValueError("reduction must be 'sum' or 'mean'")


@dataclass
class LossReport:
    total: float
    wcel: float
    regularizer: float
    cel_noisy: float
    cel_clean: float
    objective: str

    def as_dict(self) -> dict:
        return asdict(self)


def cel(log_probs: Tensor, labels: np.ndarray, pad_mask: np.ndarray, reduction: str = "sum") -> Tensor:
    """-sum_s log P[s, label_s] over non-pad positions, averaged over the batch.

    log_probs: (batch, S, T); labels, pad_mask: (batch, S).
    """
    keep = (~np.asarray(pad_mask)).astype(log_probs.dtype)
    picked = nd.pick(log_probs, np.where(pad_mask, 0, labels))
    per_seq = -(picked * keep).sum(axis=-1)
    if reduction == "mean":
        per_seq = per_seq / np.maximum(keep.sum(axis=-1), 1.0)
    return per_seq.mean()


def cel_from_probs(probs: Tensor, labels: np.ndarray, pad_mask: np.ndarray, floor: float = 1e-12) -> Tensor:
    """Same as :func:`cel` for probability inputs; zeros at label positions are
    clamped to ``floor`` and reported."""
    labels = np.asarray(labels)
    idx = tuple(np.indices(labels.shape)) + (np.where(pad_mask, 0, labels),)
    at_labels = probs.data[idx]
    if np.any((at_labels < floor) & ~np.asarray(pad_mask)):
        log.warning("zero probability at a label position; clamped to %g", floor)
    above = probs.data >= floor
    # gradient flows only where the input was above the floor
    clamped = probs * above.astype(probs.dtype) + np.where(above, 0.0, floor).astype(probs.dtype)
    return cel(nd.log(clamped), labels, pad_mask)


def wcel(
    log_probs_noisy: Tensor,
    log_probs_clean: Tensor,
    labels: np.ndarray,
    pad_mask: np.ndarray,
    lam: float,
    delta: float,
    reduction: str = "sum",
) -> Tensor:
    denom = lam + delta + 1.0
    if denom == 0:
        raise ValueError("lambda + delta + 1 must be nonzero")
    c_noisy = cel(log_probs_noisy, labels, pad_mask, reduction)
    c_clean = cel(log_probs_clean, labels, pad_mask, reduction)
    return _wcel_combine(c_noisy, c_clean, lam, delta)


def _wcel_combine(c_noisy: Tensor, c_clean: Tensor, lam: float, delta: float) -> Tensor:
    return (c_noisy + c_clean * (lam + delta)) * (1.0 / (lam + delta + 1.0))


def rbf_kernel(a, b, two_sigma_sq: float = TWO_SIGMA_SQ_MAIN) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"kernel arguments differ in length: {a.size} vs {b.size}")
    d = a - b
    return float(np.exp(-np.mean(d * d) / two_sigma_sq))


def kernel_matrix(x: Tensor, y: Tensor, two_sigma_sq: float) -> Tensor:
    """K[i, j] = exp(-mean_d (x_i - y_j)^2 / two_sigma_sq) for x (n, D), y (m, D)."""
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError(f"kernel_matrix needs (n, D) and (m, D), got {x.shape} and {y.shape}")
    dim = x.shape[1]
    xx = (x * x).sum(axis=1, keepdims=True)
    yy = (y * y).sum(axis=1, keepdims=True)
    gram = x @ nd.transpose(y)
    if x is y:
        # symmetrise and zero the diagonal so K(a, a) = 1 and K = K^T exactly
        gram = (gram + nd.transpose(gram)) * 0.5
    # the expansion can dip a few ulps below zero for near-identical rows
    sq = nd.relu(xx + nd.transpose(yy) - gram * 2.0)
    if x is y:
        sq = sq * (1.0 - np.eye(x.shape[0], dtype=sq.data.dtype))
    return nd.exp(sq * (-1.0 / (dim * two_sigma_sq)))


def _check_sets(x: Tensor, y: Tensor):
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("MMD needs non-empty sample sets")


def s_mmd(latents: Tensor, gaussians: Tensor, lam: float, two_sigma_sq: float = TWO_SIGMA_SQ_MAIN) -> Tensor:
    _check_sets(latents, gaussians)
    kxx = kernel_matrix(latents, latents, two_sigma_sq).mean()
    kxy = kernel_matrix(latents, gaussians, two_sigma_sq).mean()
    return (kxx - kxy * 2.0) * lam


def m_mmd(latents: Tensor, gaussians: Tensor, lam: float, two_sigma_sq: float = TWO_SIGMA_SQ_MAIN) -> Tensor:
    _check_sets(latents, gaussians)
    kxy = kernel_matrix(latents, gaussians, two_sigma_sq).mean()
    return (1.0 - kxy) * lam


def kl_loss(mean: Tensor, sigma: Tensor) -> Tensor:
    """KL(N(mean, sigma^2) || N(0, 1)) summed over the latent dimension and
    averaged over the batch."""
    if np.any(sigma.data <= 0):
        raise ValueError("sigma must be positive")
    var = sigma * sigma
    per = (var + mean * mean - 1.0 - nd.log(var)) * 0.5
    flat = per.reshape(per.shape[0], -1)
    return flat.sum(axis=1).mean()


def kl_loss_logvar(mean: Tensor, logvar: Tensor) -> Tensor:
    """KL in terms of log-variance (numerically friendlier for training)."""
    per = (nd.exp(logvar) + mean * mean - 1.0 - logvar) * 0.5
    return per.reshape(per.shape[0], -1).sum(axis=1).mean()


def total_loss(
    log_probs_noisy: Tensor,
    log_probs_clean: Tensor,
    labels: np.ndarray,
    pad_mask: np.ndarray,
    cfg: LossConfig,
    latents: Tensor | None = None,
    gaussians: Tensor | None = None,
    kl_mean: Tensor | None = None,
    kl_logvar: Tensor | None = None,
) -> tuple[Tensor, LossReport]:
    """WCEL plus the configured latent regulariser.

    For the MMD objectives ``latents`` is the flattened (N_x, D) un-noised
    latent batch and ``gaussians`` the (N_y, D) reference draw. For ``kl`` the
    encoder mean and log-variance are needed instead; the regulariser is
    lam * KL so that lam=1, delta=-1 gives the plain VAE objective.
    """
    c_noisy = cel(log_probs_noisy, labels, pad_mask, cfg.reduction)
    c_clean = cel(log_probs_clean, labels, pad_mask, cfg.reduction)
    w = _wcel_combine(c_noisy, c_clean, cfg.lam, cfg.delta)
    if cfg.objective == "m-mmd":
        reg = m_mmd(latents, gaussians, cfg.lam, cfg.two_sigma_sq)
    elif cfg.objective == "s-mmd":
        reg = s_mmd(latents, gaussians, cfg.lam, cfg.two_sigma_sq)
    else:
        if kl_mean is None or kl_logvar is None:
            raise ValueError("kl objective needs encoder mean and log-variance")
        reg = kl_loss_logvar(kl_mean, kl_logvar) * cfg.lam
    total = w + reg
    wv, rv = float(w.data), float(reg.data)
    report = LossReport(
        total=wv + rv,
        wcel=wv,
        regularizer=rv,
        cel_noisy=float(c_noisy.data),
        cel_clean=float(c_clean.data),
        objective=cfg.objective,
    )
    return total, report
