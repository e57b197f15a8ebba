"""Column-and-constraint generation for the DR and robust design problems."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .formulations import (
    DEFAULT_OPTIONS,
    Configuration,
    FormulationOptions,
    add_scenario,
    build_master,
    build_restoration,
    build_subproblem,
    check_tree,
    default_dual_bound,
    product_duals,
    scenario_from_values,
)
from .grid import NetworkInstance
from .opt import LinearModel, SolveParams, SolverError, solve
from .scenarios import AmbiguitySet, ContingencyScenario, FiniteDistribution, single_line_scenarios

log = logging.getLogger(__name__)

GAP_FLOOR = 1e-9
ABS_GAP = 1e-6


class InfeasibleInstance(RuntimeError):
    pass


@dataclass(frozen=True)
class CcgParams:
    epsilon: float = 1e-4
    max_iter: int = 50
    mode: str = "dr"
    time_limit: float | None = None
    solver: str | None = None
    master_gap: float = 1e-6
    sub_gap: float = 1e-9
    seed_pool: str = "singles"  # ones | singles
    options: FormulationOptions = DEFAULT_OPTIONS

    def solve_params(self, gap: float, deadline: float | None = None) -> SolveParams:
        limit = None if deadline is None else max(1.0, deadline - time.perf_counter())
        return SolveParams(time_limit=limit, mip_gap=gap, solver=self.solver)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    lb: float
    ub: float
    master_value: float
    sub_value: float
    added: str
    master_time: float
    sub_time: float
    dual_bound: float


@dataclass
class CcgState:
    lb: float = -math.inf
    ub: float = math.inf
    pool: list[ContingencyScenario] = field(default_factory=list)
    iteration: int = 0
    incumbent: tuple[Configuration, np.ndarray] | None = None
    history: list[IterationRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def gap(self) -> float:
        if not math.isfinite(self.ub) or not math.isfinite(self.lb):
            return math.inf
        return (self.ub - self.lb) / max(self.lb, GAP_FLOOR)

    def converged(self, epsilon: float) -> bool:
        return self.gap <= epsilon or self.ub - self.lb <= ABS_GAP


@dataclass(frozen=True)
class PlanResult:
    config: Configuration
    beta: np.ndarray
    objective: float
    gap: float
    mode: str
    state: CcgState
    converged: bool
    status: str  # converged | duplicate | max_iter | time_limit
    time_s: float = 0.0

    @property
    def lb(self) -> float:
        return self.state.lb

    @property
    def ub(self) -> float:
        return self.state.ub


@dataclass(frozen=True)
class SubproblemResult:
    scenario: ContingencyScenario
    value: float  # MIP optimum: Q(g, z) + beta . z
    shed: float  # Q(g, z) recomputed from the restoration LP
    dual_bound: float
    time_s: float


def restoration_value(
    instance: NetworkInstance, config: Configuration, z: ContingencyScenario, solver: str | None = None,
    options: FormulationOptions = DEFAULT_OPTIONS,
) -> float:
    res = solve(build_restoration(instance, config, z, options=options), SolveParams(solver=solver))
    if not res.ok:
        raise SolverError(f"restoration LP {res.status}")
    return res.objective


def solve_subproblem(
    instance: NetworkInstance,
    config: Configuration,
    beta: np.ndarray | None,
    params: CcgParams = CcgParams(),
    deadline: float | None = None,
    retries: int = 4,
) -> SubproblemResult:
    """Worst scenario for (config, beta), with dual-bound validation and retry."""
    t0 = time.perf_counter()
    bound = default_dual_bound(instance, params.options)
    for _ in range(retries + 1):
        model = build_subproblem(instance, config, beta, params.options, dual_bound=bound)
        res = solve(model, params.solve_params(params.sub_gap, deadline))
        if res.status not in ("optimal", "limit"):
            raise SolverError(f"subproblem {res.status}")
        _check_mccormick(model, res.values)
        # a dual paired with z = 0 drops out of the objective and may sit anywhere
        at_bound = [
            p for p, z in product_duals(model)
            if res.values[z] > 0.5 and abs(res.values[p]) >= abs(bound) * (1 - 1e-7)
        ]
        if not at_bound:
            break
        log.debug("dual bound %.3g active on %d duals; retrying", bound, len(at_bound))
        bound *= 10.0
    else:
        raise SolverError(f"subproblem duals still at bound {bound:.3g} after {retries} retries")
    z = scenario_from_values(instance, res.values)
    shed = restoration_value(instance, config, z, params.solver, params.options)
    bz = 0.0 if beta is None else float((beta * z.z).sum())
    if abs(shed + bz - res.objective) > 1e-6 * (1 + abs(res.objective)):
        log.warning("subproblem value %.9g differs from recomputed %.9g", res.objective, shed + bz)
    return SubproblemResult(z, res.objective, shed, bound, time.perf_counter() - t0)


def _check_mccormick(model: LinearModel, values: dict[str, float]) -> None:
    for pi, z in product_duals(model):
        w = values[f"mc:{pi}*{z}"]
        if abs(w - values[pi] * values[z]) > 1e-6 * (1 + abs(values[pi])):
            raise SolverError(f"McCormick product {pi}*{z} inexact: {w} vs {values[pi] * values[z]}")


def _beta(instance: NetworkInstance, values: dict[str, float], mode: str) -> np.ndarray:
    if mode == "ro":
        return np.zeros((instance.n_lines, instance.periods))
    return np.array(
        [[max(0.0, values[f"beta[{e},{t}]"]) for t in range(instance.periods)] for e in range(instance.n_lines)]
    )


def run_ccg(
    instance: NetworkInstance,
    ambiguity: AmbiguitySet | None = None,
    params: CcgParams = CcgParams(),
    fixed: Configuration | None = None,
    fix_dg_only: bool = False,
) -> PlanResult:
    """Alternate master (lower bound) and subproblem (upper bound) until the gap closes.

    The pool starts with the no-outage scenario: without it the first master
    is unbounded in ``beta`` along lines the first cut leaves out. With
    ``seed_pool="singles"`` every single-line outage is pooled up front too,
    which prices each multiplier before the first subproblem instead of one
    line per iteration.
    """
    if params.mode not in ("dr", "ro"):
        raise ValueError(f"mode must be 'dr' or 'ro', got {params.mode!r}")
    if params.epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mode = params.mode
    mu = (ambiguity or AmbiguitySet.from_instance(instance)).mu_max
    if mu.shape != (instance.n_lines, instance.periods):
        raise ValueError("ambiguity set does not match instance dimensions")
    t_start = time.perf_counter()
    deadline = None if params.time_limit is None else t_start + params.time_limit
    state = CcgState()
    state.pool.append(ContingencyScenario.all_ones(instance.n_lines, instance.periods))
    if params.seed_pool == "singles":
        state.pool.extend(single_line_scenarios(instance))
    elif params.seed_pool != "ones":
        raise ValueError(f"seed_pool must be 'ones' or 'singles', got {params.seed_pool!r}")
    master = build_master(instance, state.pool, mu, mode, fixed, fix_dg_only, params.options)
    status = "max_iter"
    while state.iteration < params.max_iter:
        state.iteration += 1
        res = solve(master, params.solve_params(params.master_gap, deadline))
        if res.status == "infeasible":
            raise InfeasibleInstance("master problem infeasible: no spanning forest within the budgets")
        if res.status not in ("optimal", "limit") or not res.values:
            raise SolverError(f"master {res.status}")
        bound = res.objective if res.bound is None or not math.isfinite(res.bound) else min(res.bound, res.objective)
        state.lb = max(state.lb, bound)
        config = Configuration.from_values(instance, res.values)
        problems = check_tree(instance, config)
        if problems:
            raise SolverError("master returned an invalid design: " + "; ".join(problems))
        beta = _beta(instance, res.values, mode)

        sub = solve_subproblem(instance, config, None if mode == "ro" else beta, params, deadline)
        candidate = sub.value + (float(((mu - 1.0) * beta).sum()) if mode == "dr" else 0.0)
        if candidate < state.ub:
            state.ub = candidate
            state.incumbent = (config, beta)
        new = sub.scenario not in state.pool
        state.history.append(
            IterationRecord(
                state.iteration, state.lb, state.ub, res.objective, sub.value,
                sub.scenario.key if new else "", res.time_s, sub.time_s, sub.dual_bound,
            )
        )
        log.info("iter %d lb %.6g ub %.6g gap %.3g", state.iteration, state.lb, state.ub, state.gap)
        if state.converged(params.epsilon):
            status = "converged"
            break
        if not new:
            state.notes.append(
                f"iteration {state.iteration}: subproblem returned pooled scenario; gap {state.gap:.3g} left as is"
            )
            status = "duplicate"
            break
        if deadline is not None and time.perf_counter() > deadline:
            status = "time_limit"
            break
        state.pool.append(sub.scenario)
        add_scenario(master, instance, len(state.pool) - 1, sub.scenario, mode, params.options)

    config, beta = state.incumbent
    return PlanResult(
        config=config, beta=beta, objective=state.ub, gap=state.gap, mode=mode, state=state,
        converged=status in ("converged", "duplicate"), status=status, time_s=time.perf_counter() - t_start,
    )


def worst_case_expectation(
    instance: NetworkInstance, config: Configuration, ambiguity: AmbiguitySet | None = None,
    params: CcgParams = CcgParams(epsilon=1e-7),
) -> PlanResult:
    """Inner DR (or RO) value of a fixed design, by CCG with the design frozen."""
    return run_ccg(instance, ambiguity, params, fixed=config)


# -- worst-case distribution --------------------------------------------------

@dataclass(frozen=True)
class WorstCaseDistribution:
    support: tuple[ContingencyScenario, ...]
    probs: np.ndarray
    shed: np.ndarray
    expected_shed: float

    def as_distribution(self) -> FiniteDistribution:
        return FiniteDistribution(self.support, self.probs)

    def rows(self, instance: NetworkInstance, threshold: float = 1e-9) -> list[dict]:
        out = []
        for k, (z, p, q) in enumerate(zip(self.support, self.probs, self.shed)):
            if p > threshold:
                out.append({"scenario": len(out) + 1, "affected": z.describe(instance), "probability": float(p), "shed": float(q)})
        return out

    def table(self, instance: NetworkInstance) -> str:
        rows = self.rows(instance)
        width = max([len("Affected lines")] + [len(r["affected"]) for r in rows])
        lines = [f"{'Scenario':>8}  {'Affected lines':<{width}}  {'Probability':>11}  {'Shed (KW)':>10}"]
        for r in rows:
            lines.append(f"{r['scenario']:>8}  {r['affected']:<{width}}  {r['probability']:>11.6f}  {r['shed']:>10.3f}")
        lines.append(f"expected shed: {self.expected_shed:.6f}")
        return "\n".join(lines)


def _repair_moments(support, psi: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Shift mass from violating scenarios to the no-outage one (index of all ones)."""
    psi = psi.copy()
    ones = next(j for j, z in enumerate(support) if z.n_failures == 0)
    out = np.array([1 - z.z for z in support], dtype=float)
    for _ in range(len(support) + 1):
        marg = np.tensordot(psi, out, axes=1)
        excess = marg - mu
        if (excess <= 0).all():
            break
        e, t = np.unravel_index(np.argmax(excess), mu.shape)
        hit = out[:, e, t] > 0
        scale = mu[e, t] / marg[e, t] if marg[e, t] > 0 else 0.0
        moved = psi[hit] * (1 - scale)
        psi[hit] -= moved
        psi[ones] += moved.sum()
    return psi


def extract_worst_case_distribution(
    instance: NetworkInstance, result: PlanResult, ambiguity: AmbiguitySet | None = None, solver: str | None = None,
) -> WorstCaseDistribution:
    """Worst-case distribution as the cut multipliers of the final master.

    With the design fixed at the incumbent and each recourse block at its
    optimal value Q(g, z^j), the master reduces to an LP in (beta, lam)
    whose cut duals form the distribution.
    """
    if result.mode != "dr":
        raise ValueError("worst-case distribution is defined for DR plans only")
    mu = (ambiguity or AmbiguitySet.from_instance(instance)).mu_max
    pool = list(result.state.pool)
    config = result.config
    shed = np.array([restoration_value(instance, config, z, solver) for z in pool])
    model = LinearModel("residual", "min")
    lam = model.add_var("lam", -math.inf, math.inf)
    obj = {lam: 1.0}
    for e in range(instance.n_lines):
        for t in range(instance.periods):
            obj[model.add_var(f"beta[{e},{t}]")] = float(mu[e, t]) - 1.0
    for j, z in enumerate(pool):
        expr = {lam: 1.0}
        for e, t in zip(*np.nonzero(z.z)):
            expr[f"beta[{e},{t}]"] = -1.0
        model.add_constraint(f"cut[{j}]", expr, ">=", float(shed[j]))
    model.set_objective(obj, "min")
    res = solve(model, SolveParams(solver=solver, feas_tol=1e-10))
    if not res.ok:
        raise SolverError(f"residual LP {res.status}")
    psi = np.clip(np.array([res.duals[f"cut[{j}]"] for j in range(len(pool))]), 0.0, None)
    psi = psi / psi.sum()
    psi = _repair_moments(pool, psi, mu)
    psi = psi / psi.sum()
    return WorstCaseDistribution(tuple(pool), psi, shed, float(psi @ shed))
