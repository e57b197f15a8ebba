"""Plan a DR design and print the adversarial outage distribution behind it."""
import argparse
import logging

from gridplan.ccg import CcgParams, extract_worst_case_distribution, run_ccg
from gridplan.grid import bundled


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instance", default="ieee33")
    ap.add_argument("--periods", type=int, default=1)
    ap.add_argument("--n-z", type=int, default=None, help="override the outage count")
    ap.add_argument("--epsilon", type=float, default=1e-4)
    ap.add_argument("--time-limit", type=float, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    inst = bundled(args.instance).with_periods(args.periods)
    if args.n_z is not None:
        inst = inst.replace(n_z=args.n_z)
    res = run_ccg(inst, params=CcgParams(epsilon=args.epsilon, time_limit=args.time_limit))
    print(f"objective {res.objective:.4f} KW after {res.state.iteration} iterations ({res.status})")
    print(extract_worst_case_distribution(inst, res).table(inst))


if __name__ == "__main__":
    main()
