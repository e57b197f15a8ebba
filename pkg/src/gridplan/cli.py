"""Command-line entry point: ``gridplan <command> [options]``.

Exit codes: 0 success, 2 CCG did not converge, 3 infeasible or invalid instance.
Reports are deterministic; wall-clock times go to ``timing.csv`` only.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bench import (
    EvalParams,
    budget_grid,
    compare,
    comparison_csv,
    comparison_table,
    dg_study_csv,
    dg_value_study,
    evaluate_configuration,
    report_dict,
    sweep,
)
from .ccg import CcgParams, InfeasibleInstance, PlanResult, extract_worst_case_distribution, run_ccg
from .formulations import Configuration, FormulationOptions, check_tree
from .grid import InstanceError, InstanceTemplate, NetworkInstance, bundled, dumps, generate_instance, load_instance
from .oracle import exact_plan, exact_worst_case_expectation
from .scenarios import AmbiguitySet, ScenarioExplosion, distribution_to_dict

EXIT_OK, EXIT_NONCONVERGED, EXIT_INFEASIBLE = 0, 2, 3


def _instance(args) -> NetworkInstance:
    src = args.instance
    inst = load_instance(src) if Path(src).exists() else bundled(src)
    if getattr(args, "periods", None):
        inst = inst.with_periods(args.periods)
    if getattr(args, "n_z", None) is not None:
        inst = inst.replace(n_z=args.n_z)
    if getattr(args, "budget", None) is not None:
        inst = inst.replace(budget_cost=args.budget)
    if getattr(args, "mu", None) is not None:
        inst = inst.with_mu(args.mu)
    return inst


def _ccg(args) -> CcgParams:
    return CcgParams(
        epsilon=args.epsilon, mode=args.mode, time_limit=args.time_limit, solver=args.solver,
        max_iter=args.max_iter, seed_pool=args.seed_pool, options=FormulationOptions(voltage_activation=args.voltage_activation),
    )


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def plan_dict(inst: NetworkInstance, res: PlanResult) -> dict:
    return {
        "mode": res.mode,
        "objective": res.objective,
        "lb": res.lb,
        "gap": res.gap,
        "status": res.status,
        "iterations": res.state.iteration,
        "y": list(res.config.y),
        "w": list(res.config.w),
        "f": list(res.config.f),
        **res.config.describe(inst),
        "notes": res.state.notes,
    }


def _config_from_plan(path: str, inst: NetworkInstance) -> Configuration:
    d = json.loads(Path(path).read_text())
    cfg = Configuration(tuple(d["y"]), tuple(d["w"]), tuple(d.get("f", ())))
    problems = check_tree(inst, cfg)
    if problems:
        raise InstanceError("plan does not fit the instance", problems)
    return cfg


def _trace(res: PlanResult) -> tuple[str, str]:
    a, b = io.StringIO(), io.StringIO()
    wa, wb = csv.writer(a, lineterminator="\n"), csv.writer(b, lineterminator="\n")
    wa.writerow(("iteration", "lb", "ub", "gap", "master_value", "sub_value", "dual_bound", "added"))
    wb.writerow(("iteration", "master_s", "subproblem_s"))
    for h in res.state.history:
        gap = (h.ub - h.lb) / max(h.lb, 1e-9)
        wa.writerow((h.iteration, repr(h.lb), repr(h.ub), repr(gap), repr(h.master_value), repr(h.sub_value),
                     repr(h.dual_bound), h.added))
        wb.writerow((h.iteration, f"{h.master_time:.3f}", f"{h.sub_time:.3f}"))
    return a.getvalue(), b.getvalue()


# -- commands -----------------------------------------------------------------

def cmd_plan(args) -> int:
    inst = _instance(args)
    res = run_ccg(inst, AmbiguitySet.from_instance(inst), _ccg(args))
    out = _out(args)
    _write(out / "plan.json", _json(plan_dict(inst, res)))
    trace, timing = _trace(res)
    _write(out / "trace.csv", trace)
    _write(out / "timing.csv", timing + f"total,{res.time_s:.3f},\n")
    if res.mode == "dr":
        wcd = extract_worst_case_distribution(inst, res, solver=args.solver)
        _write(out / "wcd.json", _json({**distribution_to_dict(wcd.as_distribution(), inst),
                                        "expected_shed": wcd.expected_shed, "rows": wcd.rows(inst)}))
        _write(out / "wcd.txt", wcd.table(inst) + "\n")
    print(f"{res.mode.upper()} objective {res.objective:.6f} KW, gap {res.gap:.3g}, "
          f"{res.state.iteration} iterations, status {res.status}")
    print(f"lines: {' '.join(res.config.describe(inst)['lines'])}")
    print(f"dg: {' '.join(map(str, res.config.describe(inst)['dg']))}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _eval_params(args) -> EvalParams:
    return EvalParams(samples=args.samples, seed=args.seed, mode=args.eval_mode, draws=args.draws,
                      solver=args.solver)


def cmd_evaluate(args) -> int:
    inst = _instance(args)
    amb = AmbiguitySet.from_instance(inst)
    if args.plan:
        cfg = _config_from_plan(args.plan, inst)
        label = Path(args.plan).stem
        converged = True
    else:
        res = run_ccg(inst, amb, _ccg(args))
        cfg, label, converged = res.config, args.mode.upper(), res.converged
    rep = evaluate_configuration(inst, cfg, amb, _eval_params(args), label)
    _write(_out(args) / "evaluation.json", _json(report_dict(rep)))
    print(f"{label}: WCD {rep.wcd:.6f}  WCS {rep.wcs:.6f}  Sim {rep.sim:.6f}  nominal {rep.nominal:.6f} ({rep.mode})")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_compare(args) -> int:
    inst = _instance(args)
    cmp = compare(inst, AmbiguitySet.from_instance(inst), _ccg(args), _eval_params(args))
    out = _out(args)
    name = Path(args.instance).stem
    _write(out / "compare.csv", comparison_csv([(name, cmp)]))
    summary = cmp.summary()
    _write(out / "summary.txt", summary + "\n")
    _write(out / "timing.csv", f"model,time_s\nDR,{cmp.dr_plan.time_s:.3f}\nRO,{cmp.ro_plan.time_s:.3f}\n")
    print(comparison_table([(name, cmp)]))
    print(summary)
    return EXIT_OK if cmp.dr_plan.converged and cmp.ro_plan.converged else EXIT_NONCONVERGED


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_sweep(args) -> int:
    inst = _instance(args)
    if args.budgets:
        budgets = _floats(args.budgets)
    else:
        budgets = budget_grid(inst, _floats(args.budget_factors), args.budget_step)
    nzs = [int(x) for x in _floats(args.nz)]
    rep = sweep(inst, AmbiguitySet.from_instance(inst), budgets, nzs, replace(_ccg(args), mode="dr"))
    out = _out(args)
    _write(out / "sweep.csv", rep.to_csv())
    _write(out / "timing.csv", rep.timing_csv())
    _write(out / "violations.txt", "".join(v + "\n" for v in rep.violations))
    print(rep.to_csv(), end="")
    for v in rep.violations:
        print("monotonicity:", v)
    return EXIT_OK if all(p.status in ("converged", "duplicate") for p in rep.points) else EXIT_NONCONVERGED


def cmd_oracle(args) -> int:
    inst = _instance(args)
    amb = AmbiguitySet.from_instance(inst)
    exact = exact_plan(inst, amb, mode=args.mode, limit_scenarios=args.limit, limit_trees=args.limit)
    res = run_ccg(inst, amb, _ccg(args))
    doc = {
        "mode": args.mode,
        "oracle_objective": exact.objective,
        "oracle_design": exact.config.describe(inst),
        "ccg_objective": res.objective,
        "ccg_design": res.config.describe(inst),
        "delta": res.objective - exact.objective,
        "designs_evaluated": exact.evaluated,
    }
    if args.mode == "dr":
        sol = exact_worst_case_expectation(inst, exact.config, amb, limit=args.limit)
        doc["distribution"] = [
            {"affected": z.describe(inst), "probability": float(p), "shed": float(q)}
            for z, p, q in zip(sol.scenarios, sol.psi, sol.shed) if p > 1e-9
        ]
    _write(_out(args) / "oracle.json", _json(doc))
    print(f"oracle {exact.objective:.6f}  ccg {res.objective:.6f}  delta {doc['delta']:.3g}")
    for row in doc.get("distribution", []):
        print(f"  {row['probability']:.6f}  {row['shed']:10.3f}  {row['affected']}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_generate(args) -> int:
    subs = tuple(int(x) for x in args.substations.split(","))
    tmpl = InstanceTemplate(node_count=args.nodes, substation_ids=subs, dg_count=args.dg, periods=args.periods or 24,
                            seed=args.seed, n_z=args.n_z, tie_lines=args.tie_lines)
    inst = generate_instance(tmpl)
    out = _out(args)
    path = out / (args.name or f"grid{args.nodes}_s{args.seed}.json")
    _write(path, dumps(inst))
    print(path)
    return EXIT_OK


def cmd_study(args) -> int:
    inst = _instance(args)
    rows = dg_value_study(inst, AmbiguitySet.from_instance(inst), args.trials, args.seed, _ccg(args))
    _write(_out(args) / "dg_study.csv", dg_study_csv(inst, rows))
    print(dg_study_csv(inst, rows), end="")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance file or bundled name (ieee33, ieee69, tiny2, ring4, twin7)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--epsilon", type=float, default=1e-4)
    common.add_argument("--mode", choices=("dr", "ro"), default="dr")
    common.add_argument("--out", default="runs")
    common.add_argument("--solver", default=None)
    common.add_argument("--time-limit", type=float, default=None)
    common.add_argument("--max-iter", type=int, default=50)
    common.add_argument("--periods", type=int, default=None, help="keep only the first K periods")
    common.add_argument("--n-z", type=int, default=None, help="override the outage budget")
    common.add_argument("--budget", type=float, default=None, help="override the line budget")
    common.add_argument("--mu", type=float, default=None, help="override every mu_max")
    common.add_argument("--voltage-activation", action="store_true")
    common.add_argument("--seed-pool", choices=("singles", "ones"), default="singles",
                        help="initial CCG pool: every single-line outage, or no-outage only")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gridplan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("plan", parents=[common], help="plan a network by CCG").set_defaults(func=cmd_plan)

    def eval_flags(sp):
        sp.add_argument("--samples", type=int, default=20)
        sp.add_argument("--draws", type=int, default=2000)
        sp.add_argument("--eval-mode", choices=("auto", "oracle", "ccg"), default="auto")

    sp = sub.add_parser("evaluate", parents=[common], help="WCD/WCS/Sim of a plan")
    sp.add_argument("--plan", default=None, help="plan.json from 'plan'; planned afresh when omitted")
    eval_flags(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", parents=[common], help="DR vs RO cross-evaluation")
    eval_flags(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", parents=[common], help="budget x outage-count sweep")
    sp.add_argument("--budgets", default="", help="comma-separated absolute budgets")
    sp.add_argument("--budget-factors", default="1.0,1.1,1.2", help="multiples of the cheapest forest cost")
    sp.add_argument("--budget-step", type=float, default=1.0)
    sp.add_argument("--nz", default="1,2,3")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", parents=[common], help="exact enumeration vs CCG")
    sp.add_argument("--limit", type=int, default=100_000)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("generate", parents=[common], help="write a seeded random instance")
    sp.add_argument("--nodes", type=int, default=33)
    sp.add_argument("--substations", default="1,11,25")
    sp.add_argument("--dg", type=int, default=2)
    sp.add_argument("--tie-lines", type=int, default=0)
    sp.add_argument("--name", default=None)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("dg-study", parents=[common], help="optimal vs random DG siting")
    sp.add_argument("--trials", type=int, default=5)
    sp.set_defaults(func=cmd_study)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command != "generate" and not args.instance:
        parser.error("--instance is required")
    try:
        return args.func(args)
    except (InstanceError, InfeasibleInstance) as exc:
        print(f"infeasible instance: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioExplosion, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
