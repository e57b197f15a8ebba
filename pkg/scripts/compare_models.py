"""DR vs RO cross-evaluation table (WCD / WCS / Sim / time) on the bundled feeders."""
import argparse
import logging
from pathlib import Path

from gridplan.bench import EvalParams, compare, comparison_csv, comparison_table
from gridplan.ccg import CcgParams
from gridplan.grid import bundled


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", default="ieee33", help="comma-separated bundled names, e.g. ieee33,ieee69")
    ap.add_argument("--periods", type=int, default=1, help="keep the first K periods (24 is slow)")
    ap.add_argument("--n-z", type=int, default=None, help="override the outage count")
    ap.add_argument("--epsilon", type=float, default=1e-4)
    ap.add_argument("--time-limit", type=float, default=None, help="per CCG run")
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--draws", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/compare")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rows = []
    for name in args.cases.split(","):
        inst = bundled(name).with_periods(args.periods)
        if args.n_z is not None:
            inst = inst.replace(n_z=args.n_z)
        cmp = compare(inst, ccg=CcgParams(epsilon=args.epsilon, time_limit=args.time_limit),
                      params=EvalParams(samples=args.samples, draws=args.draws, seed=args.seed))
        rows.append((name, cmp))
        print(name, cmp.summary())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(comparison_csv(rows))
    print(comparison_table(rows))


if __name__ == "__main__":
    main()
