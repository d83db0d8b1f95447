"""Write the desk-scale toy corpus and a disjoint held-out set."""
import argparse
from pathlib import Path

from kae.harness.toydata import toy_corpus, write_corpus_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="data")
    ap.add_argument("--n-train", type=int, default=256)
    ap.add_argument("--n-heldout", type=int, default=640)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = toy_corpus(a.n_train, seed=a.seed)
    held = toy_corpus(a.n_heldout, seed=a.seed + 1, exclude=set(train))
    write_corpus_csv(out / "toy_corpus.csv", train)
    write_corpus_csv(out / "toy_heldout.csv", held)
    print(f"wrote {len(train)} + {len(held)} molecules to {out}")


if __name__ == "__main__":
    main()
