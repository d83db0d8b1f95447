"""Similarity-constrained property optimisation in latent space.

Three phases per target molecule:

* condition search: decode the target's own latent under a ladder of raised
  condition values,
* repositioning: a random walk in latent space that only moves when a decoded
  candidate beats the best so far,
* phase two: condition ladders around noised copies of the original and the
  repositioned latent, repeated several times.

Candidates count as retained when they parse, pass the valence check and have
Tanimoto similarity >= threshold to the target (radius-2 fingerprints).
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .chem import PropertyError, PropertyOracle, SmilesError, check_valence, morgan_fingerprint, parse_smiles, tanimoto
from .decode import model_beam
from .metrics import encode_smiles
from .vocab import Vocabulary, detokenize

log = logging.getLogger(__name__)

PHASES = ("condition-search", "reposition", "phase-two", "dataset-search", "random-search")


@dataclass(frozen=True)
class SESConfig:
    beam: int = 15
    step: float = 0.1
    max_increase: float = 20.0
    repeats: int = 4
    reposition_iters: int = 100
    threshold: float = 0.4
    noise_scale: float = 1.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("condition step must be > 0")
        if not self.max_increase > 0:
            raise ValueError("max_increase must be > 0")
        for name in ("beam", "repeats", "reposition_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")

    @property
    def n_steps(self) -> int:
        # Δ/δ_s, rounded so that 20/0.1 gives 200 despite float error
        return int(round(self.max_increase / self.step))

    def ladder(self, c0: float) -> np.ndarray:
        return c0 + self.step * np.arange(self.n_steps + 1)

    @property
    def candidates_per_sweep(self) -> int:
        return self.beam * (self.n_steps + 1)


@dataclass(frozen=True)
class CandidateRecord:
    smiles: str
    property: float
    similarity: float
    phase: str

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}")


def better(a: CandidateRecord | None, b: CandidateRecord | None) -> CandidateRecord | None:
    """Higher property wins; ties go to higher similarity, then the
    lexicographically smaller string, so the choice never depends on order."""
    if a is None:
        return b
    if b is None:
        return a
    ka = (a.property, a.similarity, _neg(a.smiles))
    kb = (b.property, b.similarity, _neg(b.smiles))
    return a if ka >= kb else b


def _neg(s: str):
    return tuple(-ord(ch) for ch in s) + (1,)


class CandidateScorer:
    """Validity, similarity and property of decoded strings, memoised."""

    def __init__(self, target: str, oracle: PropertyOracle, threshold: float):
        self.target = target
        self.oracle = oracle
        self.threshold = threshold
        self.target_fp = morgan_fingerprint(parse_smiles(target), 2)
        self._memo: dict[str, tuple[float, float] | None] = {}

    def evaluate(self, smiles: str) -> tuple[float, float] | None:
        """(property, similarity) for a retained candidate, None otherwise."""
        if smiles in self._memo:
            return self._memo[smiles]
        out = None
        try:
            g = parse_smiles(smiles)
            ok, _ = check_valence(g)
            if ok:
                sim = tanimoto(self.target_fp, morgan_fingerprint(g, 2))
                if sim >= self.threshold:
                    out = (float(self.oracle.value(smiles, g)), sim)
        except (SmilesError, PropertyError):
            out = None
        self._memo[smiles] = out
        return out

    def best_of(self, strings: Sequence[str], phase: str) -> CandidateRecord | None:
        best = None
        for s in strings:
            r = self.evaluate(s)
            if r is not None:
                best = better(best, CandidateRecord(s, r[0], r[1], phase))
        return best


def decode_candidates(model, vocab: Vocabulary, latents: np.ndarray, conditions: np.ndarray, beam: int) -> list[str]:
    """All ``beam`` hypotheses for every (latent, condition) row, flattened."""
    memory = model.expand(latents, conditions)
    out = []
    for hyps in model_beam(model, memory, beam):
        out.extend(detokenize(h.ids, vocab) for h in hyps)
    return out


@dataclass
class PhaseResult:
    best: CandidateRecord | None
    explored: int
    trace: list[float] = field(default_factory=list)


def condition_search(z: np.ndarray, c0: float, model, vocab, scorer: CandidateScorer, cfg: SESConfig) -> PhaseResult:
    """Decode ``z`` at conditions c0, c0+δ, ..., c0+Δ with beam B."""
    ladder = cfg.ladder(c0)
    zs = np.repeat(z[None], len(ladder), axis=0)
    strings = decode_candidates(model, vocab, zs, ladder, cfg.beam)
    return PhaseResult(scorer.best_of(strings, "condition-search"), len(strings))


@dataclass
class RepositionResult:
    latent: np.ndarray | None
    best: CandidateRecord | None
    explored: int
    accepted: list[float] = field(default_factory=list)


def reposition(
    z: np.ndarray, c0: float, model, vocab, scorer: CandidateScorer, cfg: SESConfig,
    rng: np.random.Generator, incumbent: float,
) -> RepositionResult:
    """Random walk from ``z`` at fixed condition, moving only on improvement
    over ``incumbent`` (the best property seen so far for this target)."""
    current = z
    best_latent = None
    best = None
    accepted = []
    explored = 0
    for _ in range(cfg.reposition_iters):
        eps = rng.standard_normal(z.shape).astype(z.dtype)
        trial = current + cfg.noise_scale * eps
        strings = decode_candidates(model, vocab, trial[None], np.array([c0]), cfg.beam)
        explored += len(strings)
        cand = scorer.best_of(strings, "reposition")
        if cand is not None and cand.property > incumbent:
            incumbent = cand.property
            best = cand
            best_latent = trial
            current = trial
            accepted.append(cand.property)
    return RepositionResult(best_latent, best, explored, accepted)


def phase_two(
    z: np.ndarray, z_moved: np.ndarray | None, c0: float, model, vocab, scorer: CandidateScorer,
    cfg: SESConfig, rng: np.random.Generator, incumbent: CandidateRecord | None = None,
) -> PhaseResult:
    """Noised condition ladders around each latent set, R times; the result is
    the better set, never worse than ``incumbent``."""
    sets = [z] if z_moved is None else [z, z_moved]
    per_set = []
    explored = 0
    ladder = cfg.ladder(c0)
    for base in sets:
        best = None
        for _ in range(cfg.repeats):
            eps = rng.standard_normal(base.shape).astype(base.dtype)
            noisy = base + cfg.noise_scale * eps
            zs = np.repeat(noisy[None], len(ladder), axis=0)
            strings = decode_candidates(model, vocab, zs, ladder, cfg.beam)
            explored += len(strings)
            best = better(best, scorer.best_of(strings, "phase-two"))
        per_set.append(best)
    result = incumbent
    for b in per_set:
        result = better(result, b)
    return PhaseResult(result, explored, [b.property if b else math.nan for b in per_set])


@dataclass
class SESResult:
    target: str
    property_before: float
    condition_search: PhaseResult
    reposition: RepositionResult
    phase_two: PhaseResult

    @property
    def best(self) -> CandidateRecord | None:
        return self.phase_two.best

    @property
    def improvement(self) -> float:
        return math.nan if self.best is None else self.best.property - self.property_before

    @property
    def success(self) -> bool:
        return self.best is not None and self.improvement > 0

    @property
    def explored(self) -> int:
        return self.condition_search.explored + self.reposition.explored + self.phase_two.explored


def optimize_molecule(target: str, model, vocab, oracle: PropertyOracle, cfg: SESConfig, rng: np.random.Generator) -> SESResult:
    if not model.cfg.conditional:
        raise ValueError("similarity search needs a conditional model")
    c0 = float(oracle.value(target))
    scorer = CandidateScorer(target, oracle, cfg.threshold)
    z = encode_smiles(model, vocab, [target], np.array([c0])).values[0]
    cs = condition_search(z, c0, model, vocab, scorer, cfg)
    floor = max(c0, cs.best.property) if cs.best else c0
    rp = reposition(z, c0, model, vocab, scorer, cfg, rng, floor)
    incumbent = better(cs.best, rp.best)
    p2 = phase_two(z, rp.latent, c0, model, vocab, scorer, cfg, rng, incumbent)
    return SESResult(target, c0, cs, rp, p2)


def run_ses(targets: Sequence[str], model, vocab, oracle: PropertyOracle, cfg: SESConfig, seed: int = 0) -> list[SESResult]:
    """Each target gets its own RNG stream so results do not depend on the
    order or subset of targets processed."""
    return [
        optimize_molecule(t, model, vocab, oracle, cfg, np.random.default_rng([seed, i]))
        for i, t in enumerate(targets)
    ]


SES_FIELDS = [
    "target", "best_smiles", "property_before", "property_after", "improvement",
    "similarity", "phase", "candidates_explored", "condition_search_candidates", "success",
]


def ses_rows(results: Sequence[SESResult]) -> list[dict]:
    rows = []
    for r in results:
        b = r.best
        rows.append({
            "target": r.target,
            "best_smiles": b.smiles if b else "",
            "property_before": r.property_before,
            "property_after": b.property if b else math.nan,
            "improvement": r.improvement,
            "similarity": b.similarity if b else math.nan,
            "phase": b.phase if b else "",
            "candidates_explored": r.explored,
            "condition_search_candidates": r.condition_search.explored,
            "success": int(r.success),
        })
    return rows


def write_ses_csv(path, results: Sequence[SESResult], header_comment: str = "") -> str:
    buf = io.StringIO()
    buf.write(header_comment)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SES_FIELDS)
    for row in ses_rows(results):
        w.writerow([repr(v) if isinstance(v, float) else v for v in (row[f] for f in SES_FIELDS)])
    text = buf.getvalue()
    Path(path).write_text(text)
    return text


# ---------------------------------------------------------------- baselines


def dataset_search_baseline(
    target: str, dataset: Sequence[str], oracle: PropertyOracle, threshold: float = 0.4,
    values: Sequence[float] | None = None,
) -> CandidateRecord | None:
    """Exhaustive scan: best property among dataset entries similar enough to
    the target. ``values`` supplies precomputed properties aligned with
    ``dataset``."""
    scorer = CandidateScorer(target, oracle, threshold)
    best = None
    for i, s in enumerate(dataset):
        r = scorer.evaluate(s)
        if r is None:
            continue
        prop = r[0] if values is None else float(values[i])
        best = better(best, CandidateRecord(s, prop, r[1], "dataset-search"))
    return best


def random_search_baseline(
    targets: Sequence[str], model, vocab, oracle: PropertyOracle, grid: Sequence[float],
    n_vectors: int = 800, beam: int = 15, threshold: float = 0.4, rng: np.random.Generator | None = None,
) -> list[CandidateRecord | None]:
    """Decode random latents over a condition grid, then pick per target the
    best similar candidate from the shared pool."""
    rng = np.random.default_rng(0) if rng is None else rng
    pool: set[str] = set()
    if n_vectors > 0:
        c = model.cfg
        for cond in grid:
            z = rng.standard_normal((n_vectors, c.latent_positions, c.embedding_size)).astype(c.np_dtype)
            pool.update(decode_candidates(model, vocab, z, np.full(n_vectors, float(cond)), beam))
    ordered = sorted(pool)
    out = []
    for t in targets:
        scorer = CandidateScorer(t, oracle, threshold)
        out.append(scorer.best_of(ordered, "random-search"))
    return out
