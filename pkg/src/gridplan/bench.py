"""Out-of-sample evaluation, DR-vs-RO comparison, DG value study, budget sweeps."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .ccg import CcgParams, PlanResult, run_ccg
from .formulations import Configuration
from .grid import NetworkInstance, min_forest
from .oracle import ShedTable, exact_worst_case_expectation, exact_worst_case_scenario
from .rng import substream
from .scenarios import AmbiguitySet, ScenarioExplosion, count_scenarios, sample_distribution

ORACLE_LIMIT = 20_000


@dataclass(frozen=True)
class EvalParams:
    samples: int = 20
    seed: int = 0
    mode: str = "auto"  # oracle | ccg | auto
    draws: int = 2000
    epsilon: float = 1e-6
    solver: str | None = None


@dataclass(frozen=True)
class EvaluationReport:
    label: str
    wcd: float
    wcs: float
    sim: float
    sim_std: float
    nominal: float
    time_s: float
    sample_count: int
    seed: int
    mode: str

    def sandwich_problems(self, tol: float = 1e-5) -> list[str]:
        out = []
        if self.wcd > self.wcs + tol:
            out.append(f"WCD {self.wcd:.6g} > WCS {self.wcs:.6g}")
        if self.nominal > self.wcd + tol:
            out.append(f"nominal {self.nominal:.6g} > WCD {self.wcd:.6g}")
        if self.mode == "oracle" and self.sample_count:
            noise = 3 * self.sim_std / math.sqrt(self.sample_count)
            if self.sim > self.wcd + tol + noise:
                out.append(f"Sim {self.sim:.6g} > WCD {self.wcd:.6g}")
        return out


def _eval_mode(instance: NetworkInstance, mode: str) -> str:
    if mode != "auto":
        return mode
    try:
        count_scenarios(instance, ORACLE_LIMIT)
    except ScenarioExplosion:
        return "ccg"
    return "oracle"


def simulate(
    instance: NetworkInstance, config: Configuration, ambiguity: AmbiguitySet, samples: int, seed: int,
    draws: int = 2000, table: ShedTable | None = None,
) -> np.ndarray:
    """Expected shed under ``samples`` sampled members of the ambiguity set."""
    table = table or ShedTable(instance, config)
    seeds = substream(seed, "sim").integers(0, 2**31 - 1, size=samples)
    out = []
    for s in seeds:
        dist = sample_distribution(ambiguity, instance, int(s), draws)
        out.append(float(sum(p * table(z) for z, p in zip(dist.support, dist.probs))))
    return np.array(out)


def evaluate_configuration(
    instance: NetworkInstance, config: Configuration, ambiguity: AmbiguitySet | None = None,
    params: EvalParams = EvalParams(), label: str = "", time_s: float = 0.0,
) -> EvaluationReport:
    ambiguity = ambiguity or AmbiguitySet.from_instance(instance)
    mode = _eval_mode(instance, params.mode)
    table = ShedTable(instance, config, params.solver)
    if mode == "oracle":
        wcd = exact_worst_case_expectation(instance, config, ambiguity, limit=ORACLE_LIMIT, table=table).value
        wcs = exact_worst_case_scenario(instance, config, limit=ORACLE_LIMIT, table=table)[1]
    elif mode == "ccg":
        cp = CcgParams(epsilon=params.epsilon, solver=params.solver)
        wcd = run_ccg(instance, ambiguity, cp, fixed=config).objective
        wcs = run_ccg(instance, ambiguity, replace(cp, mode="ro"), fixed=config).objective
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    nominal = table(_all_ones(instance))
    sims = simulate(instance, config, ambiguity, params.samples, params.seed, params.draws, table)
    return EvaluationReport(
        label, float(wcd), float(wcs), float(sims.mean()) if len(sims) else float("nan"),
        float(sims.std(ddof=1)) if len(sims) > 1 else 0.0, float(nominal), time_s, params.samples, params.seed, mode,
    )


def _all_ones(instance: NetworkInstance):
    from .scenarios import ContingencyScenario

    return ContingencyScenario.all_ones(instance.n_lines, instance.periods)


# -- comparison -------------------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    dr: EvaluationReport
    ro: EvaluationReport
    dr_plan: PlanResult
    ro_plan: PlanResult

    def deltas(self) -> dict[str, float]:
        """DR minus RO per column, absolute and percent of RO."""
        out = {}
        for col in ("wcd", "wcs", "sim"):
            a, b = getattr(self.dr, col), getattr(self.ro, col)
            out[col] = a - b
            out[f"{col}_pct"] = 0.0 if b == 0 else 100.0 * (a - b) / b
        return out

    def summary(self) -> str:
        d = self.deltas()
        parts = []
        for col, name in (("wcd", "worst-case expected"), ("sim", "average")):
            pct = -d[f"{col}_pct"]
            word = "reduction" if pct >= 0 else "increase"
            parts.append(f"{abs(pct):.1f}% {word} in {name} load shedding")
        return "DR vs RO: " + "; ".join(parts)


def compare(
    instance: NetworkInstance, ambiguity: AmbiguitySet | None = None, ccg: CcgParams = CcgParams(),
    params: EvalParams = EvalParams(),
) -> Comparison:
    ambiguity = ambiguity or AmbiguitySet.from_instance(instance)
    dr = run_ccg(instance, ambiguity, replace(ccg, mode="dr"))
    ro = run_ccg(instance, ambiguity, replace(ccg, mode="ro"))
    return Comparison(
        evaluate_configuration(instance, dr.config, ambiguity, params, "DR", dr.time_s),
        evaluate_configuration(instance, ro.config, ambiguity, params, "RO", ro.time_s),
        dr, ro,
    )


REPORT_COLUMNS = ("model", "wcd", "wcs", "sim", "sim_std", "nominal")


def comparison_table(rows: list[tuple[str, Comparison]]) -> str:
    """Table with one row per instance and WCD/WCS/Sim/Time per model."""
    head = f"{'case':<10}" + "".join(
        f"{m + ' ' + c:>14}" for m in ("DR", "RO") for c in ("WCD", "WCS", "Sim", "Time(s)")
    )
    lines = [head]
    for name, cmp in rows:
        cells = []
        for rep in (cmp.dr, cmp.ro):
            cells += [f"{rep.wcd:14.3f}", f"{rep.wcs:14.3f}", f"{rep.sim:14.3f}", f"{rep.time_s:14.2f}"]
        lines.append(f"{name:<10}" + "".join(cells))
    return "\n".join(lines)


def comparison_csv(rows: list[tuple[str, Comparison]]) -> str:
    """Deterministic CSV (no wall-clock columns)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("case",) + REPORT_COLUMNS + ("objective", "gap", "iterations", "status"))
    for name, cmp in rows:
        for rep, plan in ((cmp.dr, cmp.dr_plan), (cmp.ro, cmp.ro_plan)):
            w.writerow((name, rep.label, repr(rep.wcd), repr(rep.wcs), repr(rep.sim), repr(rep.sim_std),
                        repr(rep.nominal), repr(plan.objective), repr(plan.gap), plan.state.iteration, plan.status))
    return buf.getvalue()


# -- DG value study -----------------------------------------------------------

@dataclass(frozen=True)
class DgStudyRow:
    mode: str
    optimal: float
    random_mean: float
    random: tuple[float, ...]
    placements: tuple[tuple[int, ...], ...]
    optimal_dg: tuple[int, ...]


def random_placements(instance: NetworkInstance, trials: int, seed: int) -> list[tuple[int, ...]]:
    rng = substream(seed, "placement")
    cand = instance.dg_candidates
    k = min(instance.budget_dg, len(cand))
    return [tuple(sorted(int(x) for x in rng.choice(cand, size=k, replace=False))) for _ in range(trials)]


def dg_value_study(
    instance: NetworkInstance, ambiguity: AmbiguitySet | None = None, trials: int = 5, seed: int = 0,
    ccg: CcgParams = CcgParams(),
) -> list[DgStudyRow]:
    """Optimised DG siting versus random siting, for both models."""
    if not instance.dg_candidates:
        raise ValueError("instance has no DG candidates")
    placements = random_placements(instance, trials, seed)
    rows = []
    for mode in ("dr", "ro"):
        cp = replace(ccg, mode=mode)
        best = run_ccg(instance, ambiguity, cp)
        vals = []
        for place in placements:
            fixed = Configuration((0,) * instance.n_lines, tuple(int(n in place) for n in range(instance.n_nodes)))
            vals.append(run_ccg(instance, ambiguity, cp, fixed=fixed, fix_dg_only=True).objective)
        rows.append(DgStudyRow(mode, best.objective, float(np.mean(vals)), tuple(vals), tuple(placements),
                               tuple(best.config.dg_nodes)))
    return rows


def dg_study_csv(instance: NetworkInstance, rows: list[DgStudyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("model", "optimal_shed", "random_mean_shed", "optimal_dg", "random_values"))
    for r in rows:
        ids = " ".join(str(instance.nodes[n].id) for n in r.optimal_dg)
        w.writerow((r.mode.upper(), repr(r.optimal), repr(r.random_mean), ids, " ".join(map(repr, r.random))))
    return buf.getvalue()


# -- sweeps -------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    budget: float
    n_z: int
    shed: float
    lb: float
    gap: float
    status: str
    time_s: float = field(default=0.0, compare=False)

    @property
    def abs_gap(self) -> float:
        return max(0.0, self.shed - self.lb)


@dataclass(frozen=True)
class SweepReport:
    points: tuple[SweepPoint, ...]
    violations: tuple[str, ...]

    def grid(self) -> dict[tuple[float, int], float]:
        return {(p.budget, p.n_z): p.shed for p in self.points}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("B_y", "N_z", "shed_kw", "gap", "status"))
        for p in self.points:
            w.writerow((repr(p.budget), p.n_z, repr(p.shed), repr(p.gap), p.status))
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("B_y", "N_z", "time_s"))
        for p in self.points:
            w.writerow((repr(p.budget), p.n_z, f"{p.time_s:.3f}"))
        return buf.getvalue()


def monotonicity_violations(points: list[SweepPoint], tol: float = 1e-6) -> list[str]:
    """Shed must not rise with budget nor fall with N_z beyond the reported gaps."""
    by = {(p.budget, p.n_z): p for p in points}
    budgets = sorted({p.budget for p in points})
    nzs = sorted({p.n_z for p in points})
    out = []
    for nz in nzs:
        for lo, hi in zip(budgets, budgets[1:]):
            a, b = by.get((lo, nz)), by.get((hi, nz))
            if a and b and b.shed > a.shed + b.abs_gap + tol:
                out.append(f"N_z={nz}: shed rises from {a.shed:.6g} at B_y={lo:.6g} to {b.shed:.6g} at B_y={hi:.6g}")
    for budget in budgets:
        for lo, hi in zip(nzs, nzs[1:]):
            a, b = by.get((budget, lo)), by.get((budget, hi))
            if a and b and b.shed < a.shed - a.abs_gap - tol:
                out.append(f"B_y={budget:.6g}: shed falls from {a.shed:.6g} at N_z={lo} to {b.shed:.6g} at N_z={hi}")
    return out


def budget_grid(instance: NetworkInstance, factors: list[float], step: float = 1.0) -> list[float]:
    """Budgets as multiples of the cheapest forest cost, rounded up to ``step``."""
    best = min_forest(instance)
    if best is None:
        raise ValueError("instance has no rooted spanning forest")
    return [math.ceil(best[0] * f / step) * step for f in factors]


def sweep(
    instance: NetworkInstance, ambiguity: AmbiguitySet | None = None, by_grid: list[float] = (),
    nz_grid: list[int] = (), ccg: CcgParams = CcgParams(),
) -> SweepReport:
    """Independent DR plan per (budget, N_z) grid point."""
    if not by_grid or not nz_grid:
        raise ValueError("sweep grids must be nonempty")
    points = []
    for budget in sorted(by_grid):
        for nz in sorted(nz_grid):
            inst = instance.replace(budget_cost=float(budget), n_z=int(nz))
            res = run_ccg(inst, ambiguity, ccg)
            points.append(SweepPoint(float(budget), int(nz), res.objective, res.lb, res.gap, res.status, res.time_s))
    return SweepReport(tuple(points), tuple(monotonicity_violations(points)))


def report_dict(rep: EvaluationReport) -> dict:
    d = asdict(rep)
    d.pop("time_s")
    return d
