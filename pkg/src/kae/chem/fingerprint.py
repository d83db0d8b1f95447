"""Morgan (ECFP-style) circular fingerprints and Tanimoto similarity."""
from __future__ import annotations

from dataclasses import dataclass

from .smiles import AROMATIC, MolecularGraph
from .valence import implicit_hydrogens, ring_atoms

FP_WIDTH = 2048

ATOMIC_NUMBERS = {
    "H": 1, "B": 5, "C": 6, "N": 7, "O": 8, "F": 9, "Na": 11, "Mg": 12, "Si": 14,
    "P": 15, "S": 16, "Cl": 17, "K": 19, "Ca": 20, "Zn": 30, "As": 33, "Se": 34,
    "Br": 35, "Te": 52, "I": 53, "Li": 3,
}

_MASK = 0xFFFFFFFF


def _fmix32(h: int) -> int:
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & _MASK
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & _MASK
    h ^= h >> 16
    return h


def hash32(values) -> int:
    """Deterministic 32-bit hash of a sequence of ints (FNV-1a over the words,
    murmur3 finaliser)."""
    h = 0x811C9DC5
    for v in values:
        v &= _MASK
        for shift in (0, 8, 16, 24):
            h ^= (v >> shift) & 0xFF
            h = (h * 0x01000193) & _MASK
    return _fmix32(h)


@dataclass(frozen=True)
class Fingerprint:
    bits: frozenset[int]
    width: int = FP_WIDTH

    def __post_init__(self):
        if any(b < 0 or b >= self.width for b in self.bits):
            raise ValueError("fingerprint bit outside width")


def _bond_code(order: float) -> int:
    return 4 if order == AROMATIC else int(order)


def _atomic_number(symbol: str) -> int:
    if symbol in ATOMIC_NUMBERS:
        return ATOMIC_NUMBERS[symbol]
    return 200 + sum(ord(c) for c in symbol)


def morgan_identifiers(g: MolecularGraph, radius: int = 2) -> list[set[int]]:
    """Atom-environment identifiers for each radius 0..radius."""
    nbrs = g.neighbors()
    hs = implicit_hydrogens(g)
    in_ring = ring_atoms(g)
    ids = [
        hash32(
            (
                _atomic_number(a.symbol),
                len(nbrs[i]),
                a.charge,
                hs[i],
                1 if i in in_ring else 0,
            )
        )
        for i, a in enumerate(g.atoms)
    ]
    layers = [set(ids)]
    for r in range(1, radius + 1):
        new = []
        for i in range(len(g.atoms)):
            env = sorted((_bond_code(o), ids[j]) for j, o in nbrs[i])
            flat = [r, ids[i]]
            for code, nid in env:
                flat.extend((code, nid))
            new.append(hash32(flat))
        ids = new
        layers.append(set(ids))
    return layers


def morgan_fingerprint(g: MolecularGraph, radius: int = 2, width: int = FP_WIDTH) -> Fingerprint:
    bits = set()
    for layer in morgan_identifiers(g, radius):
        bits.update(x % width for x in layer)
    return Fingerprint(frozenset(bits), width)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    if a.width != b.width:
        raise ValueError(f"fingerprint width mismatch: {a.width} vs {b.width}")
    union = len(a.bits | b.bits)
    if union == 0:
        return 1.0
    return len(a.bits & b.bits) / union
