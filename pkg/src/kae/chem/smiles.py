"""SMILES parsing into a molecular graph.

Covers the OpenSMILES subset seen in drug-like datasets: organic-subset and
bracket atoms, explicit bonds (``- = # $ : / \\``), branches, ring closures
(``1``..``9`` and ``%nn``) and ``.`` disconnections.
"""
from __future__ import annotations

from dataclasses import dataclass, field

AROMATIC = 1.5

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
ORGANIC_AROMATIC = {"b", "c", "n", "o", "p", "s"}
BRACKET_AROMATIC = {"b", "c", "n", "o", "p", "s", "se", "as", "te"}

# symbols accepted inside brackets
ELEMENTS = set(
    """H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni
    Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe
    Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg
    Tl Pb Bi Po At Rn""".split()
)

DIGITS = frozenset("0123456789")

BOND_SYMBOLS = {"-": 1, "=": 2, "#": 3, "$": 4, ":": AROMATIC, "/": 1, "\\": 1}


class SmilesError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


@dataclass
class Atom:
    symbol: str  # capitalised element symbol
    charge: int = 0
    aromatic: bool = False
    hcount: int | None = None  # explicit H from a bracket; None for organic-subset atoms
    isotope: int | None = None


@dataclass
class Bond:
    a: int
    b: int
    order: float  # 1, 2, 3, 4 or AROMATIC


@dataclass
class MolecularGraph:
    atoms: list[Atom] = field(default_factory=list)
    bonds: list[Bond] = field(default_factory=list)
    _rings: list[tuple[int, ...]] | None = field(default=None, repr=False)

    def neighbors(self) -> list[list[tuple[int, float]]]:
        nbrs: list[list[tuple[int, float]]] = [[] for _ in self.atoms]
        for bd in self.bonds:
            nbrs[bd.a].append((bd.b, bd.order))
            nbrs[bd.b].append((bd.a, bd.order))
        return nbrs

    @property
    def rings(self) -> list[tuple[int, ...]]:
        if self._rings is None:
            from .rings import minimum_cycle_basis

            self._rings = minimum_cycle_basis(len(self.atoms), [(b.a, b.b) for b in self.bonds])
        return self._rings


def _bond_between(graph: MolecularGraph, a: int, b: int) -> bool:
    return any({bd.a, bd.b} == {a, b} for bd in graph.bonds)


def _default_order(graph: MolecularGraph, a: int, b: int) -> float:
    if graph.atoms[a].aromatic and graph.atoms[b].aromatic:
        return AROMATIC
    return 1


def _parse_bracket(s: str, start: int) -> tuple[Atom, int]:
    """Parse ``[...]`` starting at ``s[start] == '['``; return the atom and the
    index just past ``]``."""
    i = start + 1
    n = len(s)

    j = i
    while j < n and s[j] in DIGITS:
        j += 1
    isotope = int(s[i:j]) if j > i else None
    i = j

    if i >= n:
        raise SmilesError("unterminated bracket atom", start)
    aromatic = False
    symbol = None
    if s[i].islower():
        for cand in (s[i : i + 2], s[i]):
            if cand in BRACKET_AROMATIC:
                symbol, aromatic = cand.capitalize(), True
                i += len(cand)
                break
    elif s[i].isupper():
        two = s[i : i + 2]
        if len(two) == 2 and two[1].islower() and two in ELEMENTS:
            symbol = two
            i += 2
        elif s[i] in ELEMENTS:
            symbol = s[i]
            i += 1
    if symbol is None:
        raise SmilesError("bad element symbol in bracket atom", i)

    if i < n and s[i] == "@":
        i += 1
        if i < n and s[i] == "@":
            i += 1
        elif i + 1 < n and s[i : i + 2] in ("TH", "AL", "SP", "TB", "OH"):
            i += 2
            k = i
            while i < n and s[i] in DIGITS:
                i += 1
            if i == k:
                raise SmilesError("chirality class without number", k)

    hcount = 0
    if i < n and s[i] == "H":
        i += 1
        hcount = 1
        if i < n and s[i] in DIGITS:
            hcount = int(s[i])
            i += 1

    charge = 0
    if i < n and s[i] in "+-":
        sign = 1 if s[i] == "+" else -1
        ch = s[i]
        i += 1
        if i < n and s[i] in DIGITS:
            k = i
            while i < n and s[i] in DIGITS:
                i += 1
            charge = sign * int(s[k:i])
        else:
            charge = sign
            while i < n and s[i] == ch:
                charge += sign
                i += 1

    if i < n and s[i] == ":":
        i += 1
        k = i
        while i < n and s[i] in DIGITS:
            i += 1
        if i == k:
            raise SmilesError("atom class without number", k)

    if i >= n or s[i] != "]":
        raise SmilesError("bad bracket-atom syntax, expected ']'", i)
    return Atom(symbol, charge, aromatic, hcount, isotope), i + 1


def parse_smiles(s: str) -> MolecularGraph:
    g = MolecularGraph()
    n = len(s)
    i = 0
    prev: int | None = None
    pending: tuple[float, int] | None = None  # (bond order, position of the symbol)
    branches: list[tuple[int | None, int]] = []  # (atom before branch, position of '(')
    open_rings: dict[int, tuple[int, float | None, int]] = {}

    def add_atom(atom: Atom, pos: int):
        nonlocal prev, pending
        g.atoms.append(atom)
        idx = len(g.atoms) - 1
        if prev is not None:
            order = pending[0] if pending else _default_order(g, prev, idx)
            g.bonds.append(Bond(prev, idx, order))
        elif pending is not None:
            raise SmilesError("bond symbol without a preceding atom", pending[1])
        pending = None
        prev = idx

    while i < n:
        ch = s[i]
        if ch == "[":
            atom, i_next = _parse_bracket(s, i)
            add_atom(atom, i)
            i = i_next
            continue
        if ch in "BCNOPSFI" or ch in ORGANIC_AROMATIC:
            if s[i : i + 2] in ("Cl", "Br"):
                add_atom(Atom(s[i : i + 2]), i)
                i += 2
                continue
            if ch in ORGANIC_AROMATIC:
                add_atom(Atom(ch.upper(), aromatic=True), i)
            elif ch in ORGANIC:
                add_atom(Atom(ch), i)
            i += 1
            continue
        if ch in BOND_SYMBOLS:
            if pending is not None:
                raise SmilesError("two consecutive bond symbols", i)
            if prev is None:
                raise SmilesError("bond symbol without a preceding atom", i)
            pending = (BOND_SYMBOLS[ch], i)
            i += 1
            continue
        if ch == "(":
            if prev is None:
                raise SmilesError("branch opened without a preceding atom", i)
            if pending is not None:
                raise SmilesError("bond symbol before '('", pending[1])
            if i + 1 < n and s[i + 1] == ")":
                raise SmilesError("empty branch", i)
            if i > 0 and s[i - 1] == "(":
                raise SmilesError("branch must start with an atom or bond", i)
            branches.append((prev, i))
            i += 1
            continue
        if ch == ")":
            if not branches:
                raise SmilesError("unbalanced parenthesis: ')' without '('", i)
            if pending is not None:
                raise SmilesError("dangling bond symbol before ')'", pending[1])
            prev = branches.pop()[0]
            i += 1
            continue
        if ch in DIGITS or ch == "%":
            if ch == "%":
                digits = s[i + 1 : i + 3]
                if len(digits) != 2 or not all(d in DIGITS for d in digits):
                    raise SmilesError("'%' must be followed by two digits", i)
                num = int(s[i + 1 : i + 3])
                width = 3
            else:
                num = int(ch)
                width = 1
            if prev is None:
                raise SmilesError("ring-closure digit without a preceding atom", i)
            order = pending[0] if pending else None
            if num in open_rings:
                other, other_order, pos = open_rings.pop(num)
                if other == prev:
                    raise SmilesError(f"ring bond {num} closes on its own atom", i)
                if order is not None and other_order is not None and order != other_order:
                    raise SmilesError(f"conflicting bond orders on ring bond {num}", i)
                if _bond_between(g, other, prev):
                    raise SmilesError(f"ring bond {num} duplicates an existing bond", i)
                final = order if order is not None else other_order
                if final is None:
                    final = _default_order(g, other, prev)
                g.bonds.append(Bond(other, prev, final))
            else:
                open_rings[num] = (prev, order, i)
            pending = None
            i += width
            continue
        if ch == ".":
            if pending is not None:
                raise SmilesError("dangling bond symbol before '.'", pending[1])
            if prev is None:
                raise SmilesError("'.' without a preceding atom", i)
            prev = None
            i += 1
            continue
        raise SmilesError(f"unexpected character {ch!r}", i)

    if pending is not None:
        raise SmilesError("dangling bond symbol at end of string", pending[1])
    if branches:
        raise SmilesError("unbalanced parenthesis: '(' never closed", branches[-1][1])
    if open_rings:
        num, (_, _, pos) = min(open_rings.items(), key=lambda kv: kv[1][2])
        raise SmilesError(f"ring bond {num} unclosed", pos)
    if not g.atoms:
        raise SmilesError("no atoms", 0)
    return g
