"""Valence rules and the overall validity verdict."""
from __future__ import annotations

from .smiles import AROMATIC, MolecularGraph, SmilesError, parse_smiles

# allowed valences of neutral atoms
VALENCES: dict[str, tuple[int, ...]] = {
    "H": (1,),
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
    "Si": (4,),
    "Se": (2, 4, 6),
    "As": (3, 5),
    "Te": (2, 4, 6),
    "Li": (1,),
    "Na": (1,),
    "K": (1,),
    "Mg": (2,),
    "Ca": (2,),
    "Zn": (2,),
}

# electron-rich elements gain one valence per positive charge (N+ like C)
_ELECTRON_RICH = {"N", "O", "P", "S", "F", "Cl", "Br", "I", "Se", "As", "Te"}
_METALS = {"Li", "Na", "K", "Mg", "Ca", "Zn"}


def allowed_valences(symbol: str, charge: int) -> tuple[int, ...] | None:
    base = VALENCES.get(symbol)
    if base is None:
        return None
    if charge == 0:
        return base
    if symbol in _ELECTRON_RICH:
        out = tuple(v + charge for v in base if v + charge >= 0)
    elif symbol in ("C", "Si"):
        out = (base[0] - abs(charge),)
    elif symbol == "B":
        out = (base[0] - charge,)
    elif symbol in _METALS:
        out = (base[0] - abs(charge),)
    else:
        out = base
    return tuple(v for v in out if v >= 0) or (0,)


def _needs_pi(symbol: str) -> bool:
    # aromatic carbon/boron always spend one valence on the pi system;
    # heteroatoms may donate a lone pair instead, so no extra charge is taken
    return symbol in ("C", "B")


def bond_order_sums(g: MolecularGraph) -> list[float]:
    sums = [0.0] * len(g.atoms)
    for b in g.bonds:
        w = 1 if b.order == AROMATIC else b.order
        sums[b.a] += w
        sums[b.b] += w
    for i, atom in enumerate(g.atoms):
        if atom.aromatic and _needs_pi(atom.symbol):
            sums[i] += 1
    return sums


def implicit_hydrogens(g: MolecularGraph) -> list[int]:
    """Hydrogen count per atom: explicit for bracket atoms, otherwise the
    smallest allowed valence that accommodates the bonds."""
    sums = bond_order_sums(g)
    out = []
    for atom, s in zip(g.atoms, sums):
        if atom.hcount is not None:
            out.append(atom.hcount)
            continue
        if atom.aromatic and not _needs_pi(atom.symbol):
            out.append(0)
            continue
        vals = allowed_valences(atom.symbol, atom.charge) or ()
        fit = [v for v in vals if v >= s]
        out.append(int(fit[0] - s) if fit else 0)
    return out


def check_valence(g: MolecularGraph) -> tuple[bool, str]:
    sums = bond_order_sums(g)
    for i, (atom, s) in enumerate(zip(g.atoms, sums)):
        vals = allowed_valences(atom.symbol, atom.charge)
        if vals is None:
            continue
        total = s + (atom.hcount or 0)
        if total > max(vals):
            return False, (
                f"atom {i} ({atom.symbol}, charge {atom.charge}) has valence {total:g}"
                f" > allowed {max(vals)}"
            )
    return True, ""


def ring_atoms(g: MolecularGraph) -> set[int]:
    return {a for ring in g.rings for a in ring}


def validity_verdict(s: str) -> tuple[bool, str]:
    try:
        g = parse_smiles(s)
    except SmilesError as e:
        return False, str(e)
    ok, why = check_valence(g)
    if not ok:
        return False, why
    in_ring = ring_atoms(g)
    for i, atom in enumerate(g.atoms):
        if atom.aromatic and i not in in_ring:
            return False, f"aromatic atom {i} is not in a ring"
    return True, ""


def is_valid(s: str) -> bool:
    try:
        return validity_verdict(s)[0]
    except (RecursionError, MemoryError):
        return False
