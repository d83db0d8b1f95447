"""Write the named run configurations as JSON files for ``kae --config``."""
import argparse
from pathlib import Path

from kae.harness.presets import desk_config, tiny_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="configs")
    out = Path(ap.parse_args().out_dir)
    out.mkdir(parents=True, exist_ok=True)
    presets = {
        "desk": desk_config(),
        "desk_smmd": desk_config(objective="s-mmd", out_dir="runs/desk_smmd"),
        "desk_ckae": desk_config(conditional=True, out_dir="runs/desk_ckae"),
        "tiny": tiny_config(),
    }
    for name, cfg in presets.items():
        cfg.save(out / f"{name}.json")
        print(f"{out / name}.json  digest {cfg.digest()}")


if __name__ == "__main__":
    main()
