"""Ring counting and pluggable property oracles."""
from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .smiles import MolecularGraph, parse_smiles


class PropertyError(RuntimeError):
    pass


def ring_count_gt6(g: MolecularGraph) -> int:
    return sum(1 for ring in g.rings if len(ring) > 6)


def toy_descriptor(g: MolecularGraph) -> float:
    """carbons - (rings larger than six) - heteroatoms / 2."""
    carbons = sum(1 for a in g.atoms if a.symbol == "C")
    hetero = sum(1 for a in g.atoms if a.symbol not in ("C", "H"))
    return float(carbons - ring_count_gt6(g) - hetero / 2)


@dataclass
class PropertyOracle:
    """kind is one of ``toy``, ``column`` or ``command``.

    ``column`` looks values up in ``table`` (smiles -> value, typically a
    dataset column); ``command`` pipes one SMILES per line to ``command`` and
    expects one decimal per output line.
    """

    kind: str = "toy"
    table: Mapping[str, float] = field(default_factory=dict)
    command: str | None = None
    timeout: float = 600.0

    def __post_init__(self):
        if self.kind not in ("toy", "column", "command"):
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.kind == "command" and not self.command:
            raise ValueError("command oracle needs a command line")

    def value(self, smiles: str, graph: MolecularGraph | None = None) -> float:
        if self.kind == "toy":
            return toy_descriptor(graph if graph is not None else parse_smiles(smiles))
        if self.kind == "column":
            try:
                return self.table[smiles]
            except KeyError:
                raise PropertyError(f"no property value stored for {smiles!r}") from None
        return self.values([smiles])[0]

    def values(self, smiles: Sequence[str]) -> list[float]:
        if self.kind != "command":
            return [self.value(s) for s in smiles]
        if not smiles:
            return []
        payload = "".join(s + "\n" for s in smiles)
        try:
            proc = subprocess.run(
                shlex.split(self.command),
                input=payload,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            raise PropertyError(f"property command failed: {e}") from e
        if proc.returncode != 0:
            raise PropertyError(
                f"property command exited with {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        lines = proc.stdout.splitlines()
        if len(lines) != len(smiles):
            raise PropertyError(
                f"property command returned {len(lines)} lines for {len(smiles)} inputs"
            )
        try:
            return [float(x) for x in lines]
        except ValueError as e:
            raise PropertyError(f"unparseable property output: {e}") from e
