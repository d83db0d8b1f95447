"""Delimited-text dataset ingestion and deterministic splitting."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..chem import PropertyOracle, SmilesError, parse_smiles, toy_descriptor


class DatasetError(ValueError):
    pass


@dataclass
class Record:
    smiles: str
    properties: dict[str, float] = field(default_factory=dict)


@dataclass
class DatasetSplit:
    train: list[Record]
    validation: list[Record]
    test: list[Record]

    def smiles(self, part: str) -> list[str]:
        return [r.smiles for r in getattr(self, part)]

    def values(self, part: str, prop: str) -> np.ndarray:
        return np.array([r.properties[prop] for r in getattr(self, part)], dtype=np.float64)


def read_records(path, smiles_column: str = "smiles", property_columns: tuple[str, ...] = ()) -> list[Record]:
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        raise DatasetError(f"{path} is empty")
    first = text.splitlines()[0]
    delimiter = "\t" if first.count("\t") > first.count(",") else ","
    reader = csv.reader(text.splitlines(), delimiter=delimiter)
    header = next(reader)
    if smiles_column not in header:
        raise DatasetError(f"{path}: header lacks required column {smiles_column!r}")
    for col in property_columns:
        if col not in header:
            raise DatasetError(f"{path}: missing property column {col!r}")
    si = header.index(smiles_column)
    pidx = {c: header.index(c) for c in property_columns}
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not x.strip() for x in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        props = {}
        for c, i in pidx.items():
            try:
                props[c] = float(row[i])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: column {c!r} value {row[i]!r} is not a number") from None
        out.append(Record(row[si].strip(), props))
    return out


def attach_toy(records: list[Record]) -> list[Record]:
    for r in records:
        if "toy" not in r.properties:
            try:
                r.properties["toy"] = toy_descriptor(parse_smiles(r.smiles))
            except SmilesError as e:
                raise DatasetError(f"cannot compute toy property for {r.smiles!r}: {e}") from None
    return records


def split_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = int(round(ratios[0] * n))
    n_val = min(int(round(ratios[1] * n)), n - n_train)
    return n_train, n_val, n - n_train - n_val


def load_dataset(
    path,
    property_column: str | None = None,
    smiles_column: str = "smiles",
    split: tuple[float, float, float] = (0.9, 0.004, 0.096),
    seed: int = 0,
    test_path=None,
) -> DatasetSplit:
    """Read a dataset and split it by a seeded shuffle.

    ``property_column`` of ``"toy"`` computes the built-in descriptor when the
    column is absent; any other name must be a column of the file.
    """
    cols = ()
    if property_column and property_column != "toy":
        cols = (property_column,)
    records = read_records(path, smiles_column, cols)
    if property_column == "toy":
        attach_toy(records)
    if not records:
        raise DatasetError(f"{path} has no data rows")
    perm = np.random.default_rng(seed).permutation(len(records))
    n_train, n_val, _ = split_counts(len(records), split)
    shuffled = [records[i] for i in perm]
    train = shuffled[:n_train]
    val = shuffled[n_train : n_train + n_val]
    test = shuffled[n_train + n_val :]
    if test_path is not None:
        test = read_records(test_path, smiles_column, cols)
        if property_column == "toy":
            attach_toy(test)
    return DatasetSplit(train, val, test)


def oracle_for(property_name: str, records: list[Record] | None = None, command: str | None = None) -> PropertyOracle:
    if command:
        return PropertyOracle(kind="command", command=command)
    if property_name == "toy":
        return PropertyOracle(kind="toy")
    table = {r.smiles: r.properties[property_name] for r in (records or [])}
    return PropertyOracle(kind="column", table=table)
