"""Per-seed kNN, group correctness and coverage for the K=3 run and its K=1 ablation.

    python scripts/trend_study.py --seeds 5 --out trend.csv
"""
import argparse
import time
from pathlib import Path

from relrep.dataset import SyntheticSpec, gen_synthetic
from relrep.embednet import forward
from relrep.evalreport import knn_accuracy, write_csv
from relrep.pipeline import load_config, run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--config", default=ROOT / "configs" / "synthetic.cfg")
    ap.add_argument("--k1-config", default=ROOT / "configs" / "synthetic_k1.cfg")
    ap.add_argument("--out", default="trend.csv")
    args = ap.parse_args()

    rows = []
    for seed in range(args.seeds):
        t = time.perf_counter()
        ds = gen_synthetic(SyntheticSpec(10, 200, 16, 0.3, seed=seed))
        res = run(ds, load_config(args.config, seed=seed))
        k1 = run(ds, load_config(args.k1_config, seed=seed))
        knn = lambda net: knn_accuracy(forward(net, ds.vectors), ds.labels, 10)
        per_it = [knn(s.phi) for s in res.history]
        row = [seed, knn(res.phi_init), *per_it, knn(k1.phi),
               *[s.metrics["group_correctness_mean"] for s in res.history],
               *[s.metrics["coverage_overall"] for s in res.history]]
        rows.append(row)
        print(f"seed {seed}: knn init {row[1]:.3f} -> {per_it[-1]:.3f} (K=1 {row[len(per_it) + 2]:.3f}) "
              f"in {time.perf_counter() - t:.0f}s", flush=True)
    T = len(rows[0]) // 3 - 1 if rows else 0
    header = (["seed", "knn_init"] + [f"knn_it{i + 1}" for i in range(T)] + ["knn_k1"]
              + [f"correctness_it{i + 1}" for i in range(T)] + [f"coverage_it{i + 1}" for i in range(T)])
    write_csv(args.out, header, rows)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
