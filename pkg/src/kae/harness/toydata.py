"""Procedural generator of small valid SMILES for desk-scale experiments."""
from __future__ import annotations

import numpy as np

from ..chem import is_valid, parse_smiles, toy_descriptor

RINGS = [
    "c1ccccc1", "C1CCCCC1", "C1CCCC1", "C1CCCCCC1", "c1ccncc1", "C1CCOC1",
    "C1CCNCC1", "c1ccoc1", "C1CCCCCCC1", "c1ccsc1",
]
TERMINALS = ["C", "O", "N", "F", "Cl", "C(=O)O", "C#N", "OC", "C(C)C", "C=C"]


def _chain(rng: np.random.Generator, max_atoms: int) -> str:
    out = []
    n = int(rng.integers(0, max_atoms + 1))
    for k in range(n):
        r = rng.random()
        if r < 0.62:
            atom = "C"
        elif r < 0.74:
            atom = "O" if out and out[-1] not in ("O",) else "C"
        elif r < 0.86:
            atom = "N"
        else:
            atom = "C(C)"
        if k > 0 and atom == "C" and rng.random() < 0.12:
            atom = "C(=O)"
        out.append(atom)
    return "".join(out)


def random_smiles(rng: np.random.Generator) -> str:
    left = _chain(rng, 4)
    parts = [left]
    if rng.random() < 0.7:
        parts.append(RINGS[int(rng.integers(len(RINGS)))])
    parts.append(_chain(rng, 3))
    if rng.random() < 0.5:
        parts.append(TERMINALS[int(rng.integers(len(TERMINALS)))])
    s = "".join(parts)
    return s or "C"


def toy_corpus(n: int, seed: int = 0, max_chars: int = 22, exclude: set[str] | None = None) -> list[str]:
    """``n`` distinct valid SMILES of at most ``max_chars`` characters."""
    rng = np.random.default_rng(seed)
    seen: set[str] = set(exclude or ())
    out: list[str] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n + 10000:
            raise RuntimeError("could not generate enough distinct molecules")
        s = random_smiles(rng)
        if len(s) > max_chars or s in seen or not is_valid(s):
            continue
        seen.add(s)
        out.append(s)
    return out


def write_corpus_csv(path, smiles: list[str]):
    with open(path, "w", newline="") as fh:
        fh.write("smiles,toy\n")
        for s in smiles:
            fh.write(f"{s},{toy_descriptor(parse_smiles(s)):g}\n")
