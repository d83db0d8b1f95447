from .fingerprint import FP_WIDTH, Fingerprint, morgan_fingerprint, tanimoto
from .properties import PropertyError, PropertyOracle, ring_count_gt6, toy_descriptor
from .smiles import AROMATIC, Atom, Bond, MolecularGraph, SmilesError, parse_smiles
from .valence import check_valence, implicit_hydrogens, is_valid, validity_verdict


def fingerprint_of(smiles: str, radius: int = 2) -> Fingerprint:
    return morgan_fingerprint(parse_smiles(smiles), radius)


__all__ = [
    "AROMATIC", "Atom", "Bond", "FP_WIDTH", "Fingerprint", "MolecularGraph",
    "PropertyError", "PropertyOracle", "SmilesError", "check_valence",
    "fingerprint_of", "implicit_hydrogens", "is_valid", "morgan_fingerprint",
    "parse_smiles", "ring_count_gt6", "tanimoto", "toy_descriptor",
    "validity_verdict",
]
