"""Novelty / uniqueness / validity / reconstruction and the NUVR protocol."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .chem import is_valid
from .decode import Hypothesis, model_beam, model_greedy
from .vocab import Vocabulary, detokenize, pad_batch, tokenize

log = logging.getLogger(__name__)


@dataclass
class MetricsRecord:
    novelty: float
    uniqueness: float
    validity: float
    reconstruction: float
    nuv: float
    nuvr: float
    sample_count: int
    repeats: int
    beam: int = 1

    @classmethod
    def from_parts(cls, n, u, v, r, sample_count, repeats, beam=1) -> "MetricsRecord":
        return cls(n, u, v, r, n * u * v, n * u * v * r, sample_count, repeats, beam)

    def as_dict(self) -> dict:
        return asdict(self)


def novelty(generated: Sequence[str], training: Iterable[str]) -> float:
    if not generated:
        log.warning("novelty of an empty generation list is reported as 0")
        return 0.0
    train = training if isinstance(training, (set, frozenset)) else set(training)
    return sum(1 for s in generated if s not in train) / len(generated)


def uniqueness(generated: Sequence[str]) -> float:
    if not generated:
        log.warning("uniqueness of an empty generation list is reported as 0")
        return 0.0
    return len(set(generated)) / len(generated)


def validity(generated: Sequence[str]) -> float:
    if not generated:
        log.warning("validity of an empty generation list is reported as 0")
        return 0.0
    return sum(1 for s in generated if is_valid(s)) / len(generated)


def select_from_beam(candidates: Sequence[str], seen: set[str], training: set[str]) -> str:
    """Pick one string from rank-ordered beam outputs.

    First novel+unique+valid candidate, else the first valid one, else the
    top-ranked.
    """
    if not candidates:
        raise ValueError("select_from_beam needs at least one candidate")
    first_valid = None
    for s in candidates:
        if is_valid(s):
            if s not in seen and s not in training:
                return s
            if first_valid is None:
                first_valid = s
    return first_valid if first_valid is not None else candidates[0]


def hypotheses_to_strings(hyps: Sequence[Hypothesis], vocab: Vocabulary) -> list[str]:
    return [detokenize(h.ids, vocab) for h in hyps]


def encode_smiles(model, vocab: Vocabulary, smiles: Sequence[str], conditions=None):
    ids, mask = pad_batch([tokenize(s, vocab) for s in smiles], model.cfg.max_len, vocab.pad_id)
    return model.encode(ids, mask, conditions)


def decode_latents(model, vocab: Vocabulary, latents: np.ndarray, conditions=None, beam: int = 1) -> list[list[str]]:
    """Rank-ordered candidate strings per latent row.

    beam=1 is greedy decoding.
    """
    memory = model.expand(latents, conditions)
    if beam == 1:
        return [[detokenize(h.ids, vocab)] for h in model_greedy(model, memory)]
    return [hypotheses_to_strings(hs, vocab) for hs in model_beam(model, memory, beam)]


def reconstruction(model, vocab: Vocabulary, smiles: Sequence[str], conditions=None, beam: int = 1, batch: int = 256) -> float:
    """Fraction of inputs regenerated character-for-character from their
    un-noised latent (top-ranked output)."""
    if not smiles:
        log.warning("reconstruction over an empty set is reported as 0")
        return 0.0
    hits = 0
    for lo in range(0, len(smiles), batch):
        part = list(smiles[lo : lo + batch])
        cond = None if conditions is None else np.asarray(conditions[lo : lo + batch])
        z = encode_smiles(model, vocab, part, cond)
        outs = decode_latents(model, vocab, z.values, cond, beam)
        hits += sum(1 for s, o in zip(part, outs) if o[0] == s)
    return hits / len(smiles)


def sample_latents(model, n: int, rng: np.random.Generator) -> np.ndarray:
    c = model.cfg
    return rng.standard_normal((n, c.latent_positions, c.embedding_size)).astype(c.np_dtype)


def generate(model, vocab: Vocabulary, latents: np.ndarray, training: set[str], conditions=None, beam: int = 1, seen: set[str] | None = None) -> list[str]:
    """Decode latents and apply the selection policy to each beam."""
    seen = set() if seen is None else seen
    out = []
    for cands in decode_latents(model, vocab, latents, conditions, beam):
        s = select_from_beam(cands, seen, training)
        seen.add(s)
        out.append(s)
    return out


def nuv_of(generated: Sequence[str], training: set[str]) -> tuple[float, float, float]:
    return novelty(generated, training), uniqueness(generated), validity(generated)


def evaluate_nuvr(
    model,
    vocab: Vocabulary,
    training: Iterable[str],
    test_set: Sequence[str],
    rng: np.random.Generator,
    n_samples: int = 10000,
    repeats: int = 5,
    beam: int = 1,
    condition: float | None = None,
    test_conditions=None,
) -> MetricsRecord:
    train = set(training)
    ns, us, vs = [], [], []
    for _ in range(repeats):
        z = sample_latents(model, n_samples, rng)
        cond = None if condition is None else np.full(n_samples, condition)
        gen = generate(model, vocab, z, train, cond, beam)
        n, u, v = nuv_of(gen, train)
        ns.append(n)
        us.append(u)
        vs.append(v)
    r = reconstruction(model, vocab, test_set, test_conditions, beam=1)
    return MetricsRecord.from_parts(
        float(np.mean(ns)), float(np.mean(us)), float(np.mean(vs)), r, n_samples, repeats, beam
    )
