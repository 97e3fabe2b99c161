"""Generate the synthetic set, train on it and write every figure csv.

    python scripts/figures.py --out-dir figs --seed 0
"""
import argparse
from pathlib import Path

from relrep.cli import main as relrep

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="figs")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--config", default=str(ROOT / "configs" / "synthetic.cfg"))
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = str(out / "data.bin")
    steps = [
        ["gen", "--classes", "10", "--per-class", "200", "--dim", "16", "--std", "0.3",
         "--seed", str(args.seed), "--out", data],
        ["run", "--data", data, "--config", args.config, "--out-dir", str(out / "run")],
        ["eval", "--data", data, "--checkpoint", str(out / "run" / "final.ckpt")],
        ["analyze", "--data", data, "--checkpoint", str(out / "run" / "final.ckpt"),
         "--out-dir", str(out)],
    ]
    for argv in steps:
        if relrep(argv) != 0:
            raise SystemExit(f"relrep {argv[0]} failed")


if __name__ == "__main__":
    main()
