"""Hand-curated SMILES with their expected validity verdicts."""

VALID = [
    "C", "CC", "CCO", "C=C", "C#N", "N#N", "O=C=O", "CC(C)C", "CC(C)(C)C", "CC(=O)O",
    "c1ccccc1", "C1CCCCC1", "C1=CC=CC=C1", "c1ccncc1", "c1ccoc1", "c1ccsc1", "c1cc[nH]c1",
    "c1ccc2ccccc2c1", "C1CC2CCC1C2", "Oc1ccccc1", "c1ccc(cc1)O", "CN1CCCC1",
    "C%10CC%10", "C1CC1C2CC2", "[NH4+]", "CC(=O)[O-]", "C[N+](C)(C)C", "[Na+].[Cl-]",
    "[2H]C", "C[C@H](N)C(=O)O", "F/C=C/F", "ClCCBr", "OS(=O)(=O)O", "OP(=O)(O)O",
    "C=1CCCCC1", "[O-][N+](=O)C", "N1CCOCC1", "CC#CC",
]

INVALID = [
    "", "C(", "C)", "(C)", "C1CC", "C=", "=C", "C==C", "CC(=)C", "C(C", "C[", "[C",
    "C[Xx]C", "C(C)(C)(C)(C)C", "F(F)F", "O(C)(C)C", "CC#C#CC", "N(=O)(=O)=O", "C11",
    "Cl(C)C", "C%1C", "C)C", "CC((C))C", "C..C", "1CC1", "B(C)(C)(C)C", "[CH5]", "C()C",
    "C1CC1C1", "c1ccccc1)",
]

CASES = [(s, True) for s in VALID] + [(s, False) for s in INVALID]
