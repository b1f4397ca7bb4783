"""Family comparison and interpretation on the user-supplied TRAIN data.

Runs a random search per DNN family, the MNL and NL baselines on the same
folds, and writes the averaged elasticity matrix of each family's top models.
The data file is not shipped; pass --data or set CHOICENET_TRAIN_CSV.
"""
import argparse
import csv
import json
import os
import time
from pathlib import Path

from choicenet.data import Schema, load_csv, split
from choicenet.experiments import compare_families, logit_baseline, pooled
from choicenet.hpo import HyperSpace, sorted_curves
from choicenet.interpret import average_elasticity

SCHEMA = Path(__file__).resolve().parents[1] / "src" / "choicenet" / "presets" / "schemas" / "train.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("CHOICENET_TRAIN_CSV", "data/train.csv"))
    ap.add_argument("--schema", default=str(SCHEMA))
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--space", default="desk", help="preset name or JSON path")
    ap.add_argument("--top", type=int, default=10, help="models averaged for elasticities")
    ap.add_argument("--out", type=Path, default=Path("runs/train"))
    args = ap.parse_args()

    schema = Schema.load(args.schema)
    ds = load_csv(args.data, schema)
    space = HyperSpace.load(args.space) if args.space.endswith(".json") else HyperSpace.preset(args.space)
    t0 = time.time()
    cmp = compare_families(ds, space, args.trials, args.seed, parallelism=args.parallel)
    tr, va, te = split(ds, args.seed)
    trainval = pooled(tr, va)
    nl = None
    if schema.nests:
        nl = logit_baseline(trainval, te, args.seed, family="nl", nests=schema.nest_indices())

    args.out.mkdir(parents=True, exist_ok=True)
    for fam, board in cmp.boards.items():
        board.to_csv(args.out / f"{fam}_folds.csv", args.out / f"{fam}_summary.csv")
        models = [m for r in board.top(args.top) for m in r.models]
        if models:
            average_elasticity(models, tr).to_csv(args.out / f"{fam}_elasticity.csv")
    average_elasticity(cmp.baseline.models, tr).to_csv(args.out / "mnl_elasticity.csv")
    rows = sorted_curves(cmp.boards)
    with open(args.out / "sorted_curves.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    summary = {
        "n": ds.n,
        "mnl": {"cv": cmp.baseline.cv_accuracy, "test": cmp.baseline.test_accuracy},
        "nl": {"cv": nl.cv_accuracy, "test": nl.test_accuracy} if nl else None,
        f"top{args.top}_test": {f: cmp.top_mean(f, args.top) for f in cmp.boards},
        f"top{args.top}_cv": {f: cmp.top_mean(f, args.top, metric="cv") for f in cmp.boards},
        "seconds": round(time.time() - t0, 1),
    }
    print(json.dumps(summary, indent=1))
    (args.out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")


if __name__ == "__main__":
    main()
