"""Brute-force ground truth for tiny instances.

The restoration LP decouples by period once the design is fixed, so shed
values are cached per (period, failed built lines) and summed.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .formulations import Configuration, build_restoration
from .grid import NetworkInstance
from .opt import LinearModel, SolveParams, SolverError, solve
from .scenarios import AmbiguitySet, ContingencyScenario, ScenarioExplosion, enumerate_scenarios

TIE_TOL = 1e-9


class ShedTable:
    """Q(config, z) with per-period memoisation."""

    def __init__(self, instance: NetworkInstance, config: Configuration, solver: str | None = None):
        self.instance = instance
        self.config = config
        self.solver = solver
        self._built = np.array(config.built, dtype=int)
        self._cache: dict[tuple[int, tuple[int, ...]], float] = {}

    def period(self, t: int, failed: tuple[int, ...]) -> float:
        key = (t, failed)
        if key not in self._cache:
            z = np.ones((self.instance.n_lines, self.instance.periods), dtype=np.int8)
            z[list(failed), t] = 0
            res = solve(build_restoration(self.instance, self.config, z, periods=[t]), SolveParams(solver=self.solver))
            if not res.ok:
                raise SolverError(f"restoration LP {res.status}")
            self._cache[key] = res.objective
        return self._cache[key]

    def __call__(self, z: ContingencyScenario) -> float:
        total = 0.0
        for t in range(self.instance.periods):
            col = z.z[self._built, t]
            total += self.period(t, tuple(self._built[col == 0].tolist()))
        return total


@dataclass(frozen=True)
class MomentLpSolution:
    scenarios: tuple[ContingencyScenario, ...]
    shed: np.ndarray
    psi: np.ndarray
    gamma: float
    beta: np.ndarray
    value: float

    def dual_value(self, mu_max: np.ndarray) -> float:
        return float(self.gamma + (mu_max * self.beta).sum())


def moment_lp(
    scenarios: list[ContingencyScenario], shed: np.ndarray, mu_max: np.ndarray, solver: str | None = None
) -> MomentLpSolution:
    """max sum psi_j Q_j over distributions on ``scenarios`` meeting the moment bounds."""
    L, T = mu_max.shape
    model = LinearModel("moment", "max")
    names = [model.add_var(f"psi[{j}]") for j in range(len(scenarios))]
    model.add_constraint("norm", {n: 1.0 for n in names}, "==", 1.0)
    rows = {}
    for e in range(L):
        for t in range(T):
            expr = {names[j]: 1.0 for j, z in enumerate(scenarios) if z.z[e, t] == 0}
            if expr:
                rows[(e, t)] = model.add_constraint(f"moment[{e},{t}]", expr, "<=", float(mu_max[e, t]))
    model.set_objective({n: float(q) for n, q in zip(names, shed)}, "max")
    res = solve(model, SolveParams(solver=solver, feas_tol=1e-10))
    if not res.ok:
        raise SolverError(f"moment LP {res.status}")
    psi = np.array([res.values[n] for n in names])
    beta = np.zeros((L, T))
    for (e, t), r in rows.items():
        beta[e, t] = res.duals[r]
    return MomentLpSolution(tuple(scenarios), np.asarray(shed, dtype=float), psi, res.duals["norm"], beta, res.objective)


def exact_worst_case_expectation(
    instance: NetworkInstance, config: Configuration, ambiguity: AmbiguitySet | None = None,
    limit: int = 100_000, table: ShedTable | None = None, scenarios: list[ContingencyScenario] | None = None,
) -> MomentLpSolution:
    mu = (ambiguity or AmbiguitySet.from_instance(instance)).mu_max
    scenarios = enumerate_scenarios(instance, limit) if scenarios is None else scenarios
    table = table or ShedTable(instance, config)
    shed = np.array([table(z) for z in scenarios])
    return moment_lp(scenarios, shed, mu)


def exact_worst_case_scenario(
    instance: NetworkInstance, config: Configuration, limit: int = 100_000,
    table: ShedTable | None = None, scenarios: list[ContingencyScenario] | None = None,
) -> tuple[ContingencyScenario, float]:
    """Worst scenario; the lexicographically smallest among ties."""
    scenarios = enumerate_scenarios(instance, limit) if scenarios is None else scenarios
    table = table or ShedTable(instance, config)
    best, value = None, -math.inf
    for z in scenarios:  # enumeration order is lexicographic
        q = table(z)
        if q > value + TIE_TOL:
            best, value = z, q
    return best, value


def enumerate_trees(instance: NetworkInstance, limit: int = 100_000) -> list[list[int]]:
    """Every spanning forest rooted at the substations within the cost budget.

    Each non-substation node picks one incoming line; a pick is kept when
    following parents from every node reaches a substation.
    """
    subs = set(instance.substations)
    others = [n for n in range(instance.n_nodes) if n not in subs]
    choices = [instance.in_lines[n] for n in others]
    if any(not c for c in choices):
        return []
    total = math.prod(len(c) for c in choices)
    if total > limit:
        raise ScenarioExplosion(total, limit)
    out = []
    for pick in itertools.product(*choices):
        if sum(instance.lines[e].cost for e in pick) > instance.budget_cost * (1 + 1e-12):
            continue
        parent = {n: instance.line_ends[e][0] for n, e in zip(others, pick)}
        ok = True
        for n in others:
            seen = set()
            while n not in subs:
                if n in seen:
                    ok = False
                    break
                seen.add(n)
                n = parent[n]
            if not ok:
                break
        if ok:
            out.append(sorted(pick))
    return sorted(out)


def dg_placements(instance: NetworkInstance) -> list[tuple[int, ...]]:
    """Maximal DG placements only: an extra unit never increases shedding."""
    k = min(instance.budget_dg, len(instance.dg_candidates))
    return list(itertools.combinations(instance.dg_candidates, k))


@dataclass(frozen=True)
class OraclePlan:
    config: Configuration
    objective: float
    mode: str
    evaluated: int
    values: tuple[tuple[tuple[int, ...], tuple[int, ...], float], ...]  # (lines, dg, value)


def exact_plan(
    instance: NetworkInstance, ambiguity: AmbiguitySet | None = None, mode: str = "dr",
    limit_scenarios: int = 100_000, limit_trees: int = 100_000, dg: tuple[int, ...] | None = None,
) -> OraclePlan:
    """Minimise the exact worst-case expectation (or maximum) over all designs.

    ``dg`` fixes the DG placement instead of enumerating placements.
    """
    if mode not in ("dr", "ro"):
        raise ValueError(f"mode must be 'dr' or 'ro', got {mode!r}")
    scenarios = enumerate_scenarios(instance, limit_scenarios)
    trees = enumerate_trees(instance, limit_trees)
    if not trees:
        raise ValueError("no spanning forest within the budget")
    placements = [tuple(dg)] if dg is not None else dg_placements(instance)
    best: tuple[float, Configuration] | None = None
    values = []
    for lines in trees:
        for place in placements:
            config = Configuration.from_tree(instance, lines, place)
            table = ShedTable(instance, config)
            if mode == "dr":
                v = exact_worst_case_expectation(instance, config, ambiguity, table=table, scenarios=scenarios).value
            else:
                v = exact_worst_case_scenario(instance, config, table=table, scenarios=scenarios)[1]
            values.append((tuple(lines), tuple(place), v))
            if best is None or v < best[0] - TIE_TOL:
                best = (v, config)
    return OraclePlan(best[1], best[0], mode, len(values), tuple(values))
