"""Greedy and length-normalised beam-search decoding.

Both work against any incremental decoder exposing ``step(tokens) -> (n, T)
log-probs`` and ``reorder(index)``; :class:`kae.model.DecoderCache` is the
production one, tests plug in hand-built transition tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Hypothesis:
    ids: tuple[int, ...]  # starts with SOS; ends with EOS when finished by EOS
    logprob_sum: float
    nonpad_count: int  # number of scored (generated) tokens
    finished: bool

    @property
    def score(self) -> float:
        return score(self)


def score(h: Hypothesis) -> float:
    if h.nonpad_count < 1:
        raise ValueError("score needs at least one scored token")
    return h.logprob_sum / math.sqrt(h.nonpad_count)


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int
    max_len: int
    vocab_size: int | None = None

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam size must be >= 1")
        if self.vocab_size is not None and self.beam_size > self.vocab_size:
            raise ValueError(f"beam size {self.beam_size} exceeds vocabulary size {self.vocab_size}")
        if self.max_len < 2:
            raise ValueError("max_len must allow SOS plus one token")


def _banned(T: int, banned: tuple[int, ...]) -> np.ndarray:
    mask = np.zeros(T, dtype=bool)
    mask[list(banned)] = True
    return mask


def greedy_decode(cache, n: int, sos: int, eos: int, max_len: int, banned: tuple[int, ...] = ()) -> list[Hypothesis]:
    """Feed SOS, then repeatedly the arg-max token, until EOS or max_len."""
    seqs = [[sos] for _ in range(n)]
    sums = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    tokens = np.full(n, sos)
    ban = None
    for _ in range(max_len - 1):
        logp = cache.step(tokens)
        if ban is None:
            ban = _banned(logp.shape[1], banned)
        logp = np.where(ban, -np.inf, logp)
        nxt = np.argmax(logp, axis=1)
        for i in range(n):
            if not done[i]:
                seqs[i].append(int(nxt[i]))
                sums[i] += float(logp[i, nxt[i]])
                if nxt[i] == eos:
                    done[i] = True
        if done.all():
            break
        tokens = nxt
    return [
        Hypothesis(tuple(s), float(sums[i]), len(s) - 1, True) for i, s in enumerate(seqs)
    ]


def _top_candidates(scores: np.ndarray, seqs: list[tuple[int, ...]], k: int) -> list[int]:
    """Indices of the k best scores; exact ties broken by lexicographic token order."""
    finite = np.flatnonzero(np.isfinite(scores))
    if finite.size == 0:
        return []
    if finite.size > k:
        kth = -np.partition(-scores[finite], k - 1)[k - 1]
        pool = finite[scores[finite] >= kth]
    else:
        pool = finite
    ordered = sorted(pool.tolist(), key=lambda i: (-scores[i], seqs[i]))
    return ordered[:k]


def beam_decode(
    cache,
    n: int,
    sos: int,
    eos: int,
    max_len: int,
    beam_size: int,
    banned: tuple[int, ...] = (),
) -> list[list[Hypothesis]]:
    """Beam search for ``n`` independent inputs held by ``cache``.

    Candidates are ranked by logprob_sum / sqrt(N) both when pruning and for
    the final ranking. Finished hypotheses keep competing for beam slots with
    their frozen score. Returns, per input, up to ``beam_size`` hypotheses
    best first.
    """
    B = beam_size
    # per group: list of (ids, sum, finished)
    beams: list[list[tuple[tuple[int, ...], float, bool]]] = [[((sos,), 0.0, False)] for _ in range(n)]
    rows = list(range(n))  # cache row of each alive hypothesis, in group order
    tokens = np.full(n, sos)
    ban = None
    for _step in range(max_len - 1):
        if not rows:
            break
        logp = cache.step(tokens)
        T = logp.shape[1]
        if ban is None:
            ban = _banned(T, banned)
        logp = np.where(ban, -np.inf, logp)
        new_rows: list[int] = []
        new_tokens: list[int] = []
        r = 0
        new_beams = []
        for g in range(n):
            group = beams[g]
            alive = [h for h in group if not h[2]]
            frozen = [h for h in group if h[2]]
            if not alive:
                new_beams.append(group)
                continue
            k = len(alive)
            block = logp[r : r + k]
            base_rows = list(range(r, r + k))
            r += k
            sums = np.array([h[1] for h in alive])[:, None] + block
            length = len(alive[0][0])  # all alive hypotheses share a length
            cand_scores = (sums / math.sqrt(length)).ravel()
            cand_seqs = [alive[i][0] + (t,) for i in range(k) for t in range(T)]
            frozen_scores = np.array([s / math.sqrt(len(ids) - 1) for ids, s, _ in frozen])
            all_scores = np.concatenate([cand_scores, frozen_scores]) if frozen else cand_scores
            all_seqs = cand_seqs + [h[0] for h in frozen]
            chosen = _top_candidates(all_scores, all_seqs, B)
            nb = []
            for c in chosen:
                if c >= k * T:
                    nb.append(frozen[c - k * T])
                    continue
                i, t = divmod(c, T)
                ids = cand_seqs[c]
                fin = t == eos or len(ids) >= max_len
                nb.append((ids, float(sums[i, t]), fin))
                if not fin:
                    new_rows.append(base_rows[i])
                    new_tokens.append(t)
            new_beams.append(nb)
        beams = new_beams
        if new_rows:
            cache.reorder(np.array(new_rows))
        rows = new_rows
        tokens = np.array(new_tokens, dtype=np.int64)
    out = []
    for group in beams:
        hyps = [Hypothesis(ids, s, len(ids) - 1, True) for ids, s, _ in group]
        hyps.sort(key=lambda h: (-h.score, h.ids))
        out.append(hyps)
    return out


# ------------------------------------------------------------------ model helpers


def _special(model):
    v = model.cfg.vocab_size
    # vocabulary layout: chars..., SOS, EOS, PAD
    return v - 3, v - 2, v - 1


def model_greedy(model, memory: np.ndarray) -> list[Hypothesis]:
    sos, eos, pad = _special(model)
    cache = model.decoder_cache(memory)
    return greedy_decode(cache, memory.shape[0], sos, eos, model.cfg.max_len, banned=(sos, pad))


def model_beam(model, memory: np.ndarray, beam_size: int, chunk: int = 512) -> list[list[Hypothesis]]:
    """Beam-decode every memory row; processed in chunks to bound cache size."""
    BeamConfig(beam_size, model.cfg.max_len, model.cfg.vocab_size)
    sos, eos, pad = _special(model)
    out: list[list[Hypothesis]] = []
    for lo in range(0, memory.shape[0], chunk):
        part = memory[lo : lo + chunk]
        cache = model.decoder_cache(part)
        out.extend(beam_decode(cache, part.shape[0], sos, eos, model.cfg.max_len, beam_size, banned=(sos, pad)))
    return out


def rescore(model, memory_row: np.ndarray, h: Hypothesis) -> float:
    """Independent recomputation of a hypothesis score with a full (non-cached)
    decoder pass."""
    from . import ndiff as nd

    ids = np.array(h.ids)[None, :]
    with nd.no_grad():
        logp = model.decode_tensor(nd.constant(memory_row[None]), ids[:, :-1]).data
    picked = logp[0, np.arange(ids.shape[1] - 1), ids[0, 1:]].astype(np.float64)
    return float(picked.sum() / math.sqrt(len(h.ids) - 1))
