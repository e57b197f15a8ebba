"""Optimised DG siting against random sitings on the same planned topology."""
import argparse
from pathlib import Path

from gridplan.bench import dg_study_csv, dg_value_study
from gridplan.ccg import CcgParams
from gridplan.grid import bundled


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instance", default="ieee33")
    ap.add_argument("--periods", type=int, default=1)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epsilon", type=float, default=1e-4)
    ap.add_argument("--out", default="runs/dg")
    args = ap.parse_args()

    inst = bundled(args.instance).with_periods(args.periods)
    rows = dg_value_study(inst, None, args.trials, args.seed, CcgParams(epsilon=args.epsilon))
    text = dg_study_csv(inst, rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "dg_study.csv").write_text(text)
    print(text, end="")


if __name__ == "__main__":
    main()
