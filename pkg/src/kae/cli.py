"""Command-line entry point: ``kae <subcommand> [options]``."""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .chem import PropertyError, PropertyOracle, SmilesError
from .checkpoint import load_checkpoint
from .harness import experiments as ex
from .harness.config import RunConfig
from .harness.data import DatasetSplit, load_dataset, read_records
from .harness.train import (
    EPOCH_FIELDS, TrainingError, artifact_header, directory_lock, epoch_metrics, train, write_csv,
)
from .ses import SESConfig, dataset_search_baseline, random_search_baseline, run_ses, write_ses_csv
from .vocab import build_vocabulary

log = logging.getLogger("kae")

THREADS_ENV = "KAE_NUM_THREADS"


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive of b) or a comma-separated list."""
    if ":" in text:
        a, b, s = (float(x) for x in text.split(":"))
        if s <= 0:
            raise argparse.ArgumentTypeError("grid step must be positive")
        n = int(round((b - a) / s))
        return [round(a + k * s, 10) for k in range(n + 1)]
    return [float(x) for x in text.split(",") if x.strip()]


def _grid_values(kind: str, text: str) -> list:
    if kind == "loss-type":
        return [x.strip() for x in text.split(",") if x.strip()]
    if kind == "beam-size":
        return [int(float(x)) for x in text.split(",")]
    return parse_grid(text)


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else None
    if cfg is None and args.checkpoint:
        meta = load_checkpoint(args.checkpoint).meta
        if "run_config" in meta:
            cfg = RunConfig.from_dict(meta["run_config"])
    cfg = cfg or RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out_dir is not None:
        changes["out_dir"] = args.out_dir
    return cfg.with_overrides(**changes) if changes else cfg


def load_split(cfg: RunConfig) -> DatasetSplit:
    prop = cfg.data.property if (cfg.model.conditional or cfg.data.property == "toy") else None
    return load_dataset(cfg.data.path, prop, cfg.data.smiles_column, cfg.data.split, cfg.seed, cfg.data.test_path)


def _need_checkpoint(args):
    if not args.checkpoint:
        raise SystemExit(f"{args.command}: --checkpoint is required")
    return load_checkpoint(args.checkpoint)


def _read_smiles(path, column="smiles") -> list[str]:
    p = Path(path)
    first = p.read_text().splitlines()[:1]
    if first and column in first[0].replace("\t", ",").split(","):
        return [r.smiles for r in read_records(p, column)]
    return [ln.strip() for ln in p.read_text().splitlines() if ln.strip()]


# ---------------------------------------------------------------- commands


def cmd_build_vocab(args, cfg):
    out = Path(cfg.out_dir)
    with directory_lock(out):
        split = load_split(cfg)
        vocab = build_vocabulary(split.smiles("train"))
        doc = {"seed": cfg.seed, "config_digest": cfg.digest(), "characters": vocab.to_list(), "size": vocab.size}
        (out / "vocab.json").write_text(json.dumps(doc, indent=2) + "\n")
        print(f"{vocab.size} tokens -> {out / 'vocab.json'}")


def cmd_train(args, cfg):
    if args.epochs is not None:
        cfg = cfg.with_overrides(train={"epochs": args.epochs})
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    cfg.save(Path(cfg.out_dir) / "config.json")
    res = train(cfg, init_checkpoint=args.checkpoint)
    print(f"trained {len(res.epochs)} epochs; last checkpoint {res.checkpoints[-1]}")


def cmd_sample(args, cfg):
    ck = _need_checkpoint(args)
    training = []
    if args.training_set:
        training = _read_smiles(args.training_set)
    seed = cfg.seed
    out = Path(cfg.out_dir)
    with directory_lock(out):
        smiles = ex.sample(ck, args.n, seed, args.condition, args.beam, training)
        rows = [{"index": i, "smiles": s} for i, s in enumerate(smiles)]
        write_csv(out / "samples.csv", artifact_header(cfg, f"beam={args.beam} condition={args.condition}"), ["index", "smiles"], rows)
    print(f"{len(smiles)} samples -> {out / 'samples.csv'}")


def cmd_reconstruct(args, cfg):
    ck = _need_checkpoint(args)
    smiles = _read_smiles(args.input)
    conds = None
    if ck.model.cfg.conditional:
        oracle = PropertyOracle(kind="toy") if cfg.data.property == "toy" else None
        if oracle is None:
            raise SystemExit("reconstruct: conditional checkpoints are supported with the toy property only")
        conds = []
        for s in smiles:
            try:
                conds.append(oracle.value(s))
            except (SmilesError, PropertyError):
                conds.append(0.0)  # the row is still reported, as a mismatch
    out = Path(cfg.out_dir)
    with directory_lock(out):
        rows, rate = ex.reconstruct(ck, smiles, conds, args.beam)
        write_csv(out / "reconstruction.csv", artifact_header(cfg), ["smiles", "status", "decoded"],
                  [r.__dict__ for r in rows])
    print("reconstruction rate: " + ("undefined (no evaluable inputs)" if rate is None else f"{rate:.4f}"))


def cmd_metrics(args, cfg):
    ck = _need_checkpoint(args)
    split = load_split(cfg)
    out = Path(cfg.out_dir)
    with directory_lock(out):
        if args.protocol == "epoch":
            epoch = int(ck.meta.get("epoch", 0))
            row = {"epoch": epoch, "mean_loss": float("nan")}
            row.update(epoch_metrics(ck.model, ck.vocab, cfg, split, epoch))
            write_csv(out / "metrics.csv", artifact_header(cfg, "protocol=epoch"), EPOCH_FIELDS, [row])
            print(json.dumps(row))
            return
        cond = test_cond = None
        if ck.model.cfg.conditional:
            cond = args.condition if args.condition is not None else float(np.mean(split.values("train", cfg.data.property)))
            test_cond = split.values("test", cfg.data.property)
        rec = ex.full_metrics(ck, split.smiles("train"), split.smiles("test"), cfg.seed, args.n_samples,
                              args.repeats, args.beam, cond, test_cond)
        d = rec.as_dict()
        write_csv(out / "metrics.csv", artifact_header(cfg, "protocol=full"), list(d), [d])
        print(json.dumps(d))


def cmd_sweep(args, cfg):
    split = load_split(cfg)
    grid = _grid_values(args.kind, args.grid)
    rows = ex.sweep(args.kind, grid, cfg, split, args.checkpoint, args.n_samples, args.repeats, args.beam,
                    out_dir=cfg.out_dir)
    fields = ["setting", "novelty", "uniqueness", "validity", "reconstruction", "nuv", "nuvr", "beam"]
    table = [{"setting": r.setting, **{k: getattr(r.record, k) for k in fields[1:]}} for r in rows]
    out = Path(cfg.out_dir)
    with directory_lock(out):
        write_csv(out / f"sweep_{args.kind}.csv", artifact_header(cfg, f"kind={args.kind}"), fields, table)
    print(f"{len(rows)} settings -> {out / f'sweep_{args.kind}.csv'}")


def cmd_correlate(args, cfg):
    ck = _need_checkpoint(args)
    oracle = PropertyOracle(kind="command", command=args.oracle_command) if args.oracle_command else PropertyOracle(kind="toy")
    grid = parse_grid(args.grid)
    out = Path(cfg.out_dir)
    with directory_lock(out):
        rows, r = ex.correlate(ck, grid, args.n, oracle, cfg.seed, args.beam)
        write_csv(out / "correlation.csv", artifact_header(cfg, "pearson_r=" + ("undefined" if r is None else repr(r))),
                  ["condition", "mean_property", "valid_count", "samples"], [x.__dict__ for x in rows])
    print("pearson r: " + ("undefined" if r is None else f"{r:.4f}"))


def _ses_config(args) -> SESConfig:
    return SESConfig(beam=args.beam, step=args.step, max_increase=args.max_increase, repeats=args.repeats,
                     reposition_iters=args.reposition_iters, threshold=args.threshold)


def _targets(args, cfg) -> list[str]:
    smiles = _read_smiles(args.targets) if args.targets else load_split(cfg).smiles("test")
    return smiles[: args.n_targets] if args.n_targets else smiles


def cmd_ses(args, cfg):
    ck = _need_checkpoint(args)
    oracle = PropertyOracle(kind="command", command=args.oracle_command) if args.oracle_command else PropertyOracle(kind="toy")
    targets = _targets(args, cfg)
    out = Path(cfg.out_dir)
    with directory_lock(out):
        results = run_ses(targets, ck.model, ck.vocab, oracle, _ses_config(args), cfg.seed)
        write_ses_csv(out / "ses.csv", results, artifact_header(cfg))
    wins = sum(r.success for r in results)
    print(f"{wins}/{len(results)} targets improved -> {out / 'ses.csv'}")


def cmd_baseline(args, cfg):
    oracle = PropertyOracle(kind="toy")
    targets = _targets(args, cfg)
    out = Path(cfg.out_dir)
    with directory_lock(out):
        if args.kind == "dataset":
            split = load_split(cfg)
            pool = split.smiles("train") + split.smiles("validation") + split.smiles("test")
            best = [dataset_search_baseline(t, [p for p in pool if p != t], oracle, args.threshold) for t in targets]
        else:
            ck = _need_checkpoint(args)
            best = random_search_baseline(targets, ck.model, ck.vocab, oracle, parse_grid(args.grid), args.n_vectors,
                                          args.beam, args.threshold, np.random.default_rng(cfg.seed))
        rows = []
        for t, b in zip(targets, best):
            before = oracle.value(t)
            rows.append({
                "target": t, "best_smiles": b.smiles if b else "", "property_before": before,
                "property_after": b.property if b else float("nan"),
                "improvement": (b.property - before) if b else float("nan"),
                "similarity": b.similarity if b else float("nan"),
            })
        write_csv(out / f"baseline_{args.kind}.csv", artifact_header(cfg, f"kind={args.kind}"), list(rows[0]) if rows else ["target"], rows)
    print(f"{len(rows)} targets -> {out / f'baseline_{args.kind}.csv'}")


def cmd_latent_pca(args, cfg):
    ck = _need_checkpoint(args)
    smiles = _read_smiles(args.input) if args.input else load_split(cfg).smiles("test")
    smiles = smiles[: args.n] if args.n else smiles
    conds = None
    if ck.model.cfg.conditional:
        conds = PropertyOracle(kind="toy").values(smiles)
    lat = ex.encoded_latents(ck, smiles, conds)
    res = ex.latent_pca(lat, args.n_gaussian, cfg.seed)
    rows = []
    for kind, arr in (("gaussian", res.reference), ("latent", res.clean), ("latent+noise", res.noisy)):
        rows.extend({"set": kind, "pc1": float(a), "pc2": float(b)} for a, b in arr)
    out = Path(cfg.out_dir)
    with directory_lock(out):
        extra = f"mahalanobis_clean={res.mahalanobis_clean!r} mahalanobis_noisy={res.mahalanobis_noisy!r}"
        write_csv(out / "latent_pca.csv", artifact_header(cfg, extra), ["set", "pc1", "pc2"], rows)
    print(f"mean Mahalanobis distance: clean {res.mahalanobis_clean:.3f}, noisy {res.mahalanobis_noisy:.3f}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out-dir", help="override the output directory")
    common.add_argument("--checkpoint", help="model checkpoint")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="kae", description="Kernel-regularised transformer autoencoder for SMILES")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("build-vocab", parents=[common], help="build the token vocabulary from the training split")

    p = sub.add_parser("train", parents=[common], help="train (or continue from --checkpoint)")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("sample", parents=[common], help="decode Gaussian latent samples")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--condition", type=float)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--training-set", help="file whose molecules count as not novel for the selection policy")

    p = sub.add_parser("reconstruct", parents=[common], help="exact-match reconstruction report")
    p.add_argument("--input", required=True)
    p.add_argument("--beam", type=int, default=1)

    p = sub.add_parser("metrics", parents=[common], help="novelty/uniqueness/validity/reconstruction")
    p.add_argument("--protocol", choices=["full", "epoch"], default="full")
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--condition", type=float)

    p = sub.add_parser("sweep", parents=[common], help="hyper-parameter or beam-size sweep")
    p.add_argument("--kind", required=True, choices=sorted(ex.SWEEP_KINDS))
    p.add_argument("--grid", required=True, help="a:b:step or comma list (objective names for loss-type)")
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--beam", type=int, default=1)

    p = sub.add_parser("correlate", parents=[common], help="condition vs generated property")
    p.add_argument("--grid", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--oracle-command", help="external property program (one SMILES per line in, one value per line out)")

    def ses_args(p):
        p.add_argument("--targets", help="file of target molecules (default: test split)")
        p.add_argument("--n-targets", type=int)
        p.add_argument("--threshold", type=float, default=0.4)
        p.add_argument("--beam", type=int, default=15)

    p = sub.add_parser("ses", parents=[common], help="similarity-constrained property optimisation")
    ses_args(p)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--max-increase", type=float, default=20.0)
    p.add_argument("--repeats", type=int, default=4)
    p.add_argument("--reposition-iters", type=int, default=100)
    p.add_argument("--oracle-command")

    p = sub.add_parser("baseline-search", parents=[common], help="dataset scan or random latent search")
    ses_args(p)
    p.add_argument("--kind", choices=["dataset", "random"], default="dataset")
    p.add_argument("--n-vectors", type=int, default=800)
    p.add_argument("--grid", default="-10:10:0.1")

    p = sub.add_parser("latent-pca", parents=[common], help="project latents onto Gaussian principal axes")
    p.add_argument("--input")
    p.add_argument("--n", type=int)
    p.add_argument("--n-gaussian", type=int, default=4096)
    return ap


COMMANDS = {
    "build-vocab": cmd_build_vocab, "train": cmd_train, "sample": cmd_sample, "reconstruct": cmd_reconstruct,
    "metrics": cmd_metrics, "sweep": cmd_sweep, "correlate": cmd_correlate, "ses": cmd_ses,
    "baseline-search": cmd_baseline, "latent-pca": cmd_latent_pca,
}


def thread_limit():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        with thread_limit():
            COMMANDS[args.command](args, cfg)
    except (ValueError, TrainingError, OSError, RuntimeError) as e:
        print(f"kae {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
