"""Named run configurations for the desk-scale experiments."""
from __future__ import annotations

from ..losses import LossConfig
from .config import DataConfig, ModelSection, OptimConfig, RunConfig, TrainConfig


def desk_config(
    data_path: str = "data/toy_corpus.csv",
    out_dir: str = "runs/desk",
    objective: str = "m-mmd",
    conditional: bool = False,
    epochs: int = 100,
    seed: int = 0,
    eval_every: int = 10,
    split: tuple[float, float, float] = (1.0, 0.0, 0.0),
) -> RunConfig:
    """2+2 layers, E=64, four latent rows; trains on the whole corpus by
    default (the memorisation setting)."""
    return RunConfig(
        data=DataConfig(path=data_path, split=split),
        model=ModelSection(embedding_size=64, heads=4, encoder_layers=2, decoder_layers=2,
                           latent_positions=4, dropout=0.0, conditional=conditional),
        loss=LossConfig(lam=3.5, delta=1.0, objective=objective),
        optim=OptimConfig(lr=1.5e-3, warmup_steps=50, clip_norm=1.0, schedule="cosine", min_lr=1e-5),
        train=TrainConfig(batch_size=32, epochs=epochs, eval_every=eval_every, eval_samples=100,
                          train_recon_samples=256, keep_checkpoints="last"),
        seed=seed,
        out_dir=out_dir,
    )


def tiny_config(data_path: str = "data/toy_corpus.csv", out_dir: str = "runs/tiny", epochs: int = 2, seed: int = 0) -> RunConfig:
    """Seconds-scale model for smoke and reproducibility runs."""
    return RunConfig(
        data=DataConfig(path=data_path),
        model=ModelSection(embedding_size=16, heads=2, encoder_layers=1, decoder_layers=1,
                           latent_positions=2, dropout=0.1),
        optim=OptimConfig(lr=1e-3),
        train=TrainConfig(batch_size=64, epochs=epochs, eval_every=1, eval_samples=20, train_recon_samples=16),
        seed=seed,
        out_dir=out_dir,
    )
