"""Solve interface with a pluggable backend registry.

The bundled backend is HiGHS through :mod:`scipy.optimize`; ``linprog`` is used
for pure LPs (so row duals and bound multipliers are available) and ``milp``
for models with binaries. Select a backend with ``SolveParams.solver`` or the
``GRIDPLAN_SOLVER`` environment variable.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import INF, LinearModel, ModelError


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveParams:
    time_limit: float | None = None
    mip_gap: float = 1e-6
    threads: int = 1
    solver: str | None = None
    feas_tol: float = 1e-9


@dataclass(frozen=True)
class SolveResult:
    status: str  # optimal | infeasible | unbounded | limit
    objective: float
    values: dict[str, float]
    duals: dict[str, float] | None = None
    # multipliers of finite variable bounds, sensitivity convention
    lb_duals: dict[str, float] | None = None
    ub_duals: dict[str, float] | None = None
    time_s: float = 0.0
    mip_gap: float | None = None
    bound: float | None = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _arrays(model: LinearModel):
    names = list(model.vars)
    index = {n: i for i, n in enumerate(names)}
    n = len(names)
    c = np.zeros(n)
    for v, coef in model.objective.items():
        c[index[v]] = coef
    lb = np.array([model.vars[v].lb for v in names])
    ub = np.array([model.vars[v].ub for v in names])
    integrality = np.array([1 if model.vars[v].binary else 0 for v in names])
    rows, cols, data = [], [], []
    lo, hi, senses = [], [], []
    for r, con in enumerate(model.cons.values()):
        for v, coef in con.expr.items():
            rows.append(r)
            cols.append(index[v])
            data.append(coef)
        lo.append(con.rhs if con.sense in (">=", "==") else -INF)
        hi.append(con.rhs if con.sense in ("<=", "==") else INF)
        senses.append(con.sense)
    A = sparse.csr_matrix((data, (rows, cols)), shape=(len(model.cons), n))
    return names, c, lb, ub, integrality, A, np.array(lo), np.array(hi), senses


def _solve_highs(model: LinearModel, params: SolveParams) -> SolveResult:
    names, c, lb, ub, integrality, A, lo, hi, senses = _arrays(model)
    flip = -1.0 if model.sense == "max" else 1.0
    c = flip * c
    t0 = time.perf_counter()
    if integrality.any():
        opts = {"disp": False, "presolve": True, "mip_rel_gap": params.mip_gap}
        if params.time_limit is not None:
            opts["time_limit"] = params.time_limit
        cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
        res = milp(c, integrality=integrality, bounds=Bounds(lb, ub), constraints=cons, options=opts)
        elapsed = time.perf_counter() - t0
        if res.status == 2:
            return SolveResult("infeasible", float("nan"), {}, time_s=elapsed)
        if res.status == 3:
            return SolveResult("unbounded", float("nan"), {}, time_s=elapsed)
        if res.x is None:
            raise SolverError(f"{model.name}: {res.message}")
        status = "optimal" if res.status == 0 else "limit"
        x = res.x.copy()
        x[integrality == 1] = np.round(x[integrality == 1])
        values = dict(zip(names, x.tolist()))
        bound = getattr(res, "mip_dual_bound", None)
        bound = None if bound is None else flip * bound + model.obj_constant
        return SolveResult(
            status, float(flip * res.fun + model.obj_constant), values, time_s=elapsed,
            mip_gap=getattr(res, "mip_gap", None), bound=bound,
        )

    # pure LP: split rows by sense so the marginals keep their meaning
    ub_rows = [i for i, s in enumerate(senses) if s != "=="]
    eq_rows = [i for i, s in enumerate(senses) if s == "=="]
    sign = np.array([1.0 if senses[i] == "<=" else -1.0 for i in ub_rows])
    A_ub = sparse.diags(sign) @ A[ub_rows] if ub_rows else None
    b_ub = sign * np.array([hi[i] if senses[i] == "<=" else lo[i] for i in ub_rows]) if ub_rows else None
    A_eq = A[eq_rows] if eq_rows else None
    b_eq = lo[eq_rows] if eq_rows else None
    opts = {
        "presolve": True,
        "primal_feasibility_tolerance": params.feas_tol,
        "dual_feasibility_tolerance": params.feas_tol,
    }
    if params.time_limit is not None:
        opts["time_limit"] = params.time_limit
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=np.column_stack([lb, ub]) if len(names) else None, method="highs", options=opts,
    )
    elapsed = time.perf_counter() - t0
    if res.status == 2:
        return SolveResult("infeasible", float("nan"), {}, time_s=elapsed)
    if res.status == 3:
        return SolveResult("unbounded", float("nan"), {}, time_s=elapsed)
    if res.status == 1:
        if res.x is None:
            raise SolverError(f"{model.name}: limit reached without incumbent")
        return SolveResult("limit", flip * res.fun + model.obj_constant, dict(zip(names, res.x.tolist())), time_s=elapsed)
    if res.status != 0:
        raise SolverError(f"{model.name}: {res.message}")
    cnames = list(model.cons)
    duals: dict[str, float] = {}
    if ub_rows:
        m = res.ineqlin.marginals
        for k, i in enumerate(ub_rows):
            duals[cnames[i]] = float(flip * sign[k] * m[k])
    if eq_rows:
        m = res.eqlin.marginals
        for k, i in enumerate(eq_rows):
            duals[cnames[i]] = float(flip * m[k])
    lb_duals = {n: float(flip * d) for n, d, l in zip(names, res.lower.marginals, lb) if np.isfinite(l)}
    ub_duals = {n: float(flip * d) for n, d, u in zip(names, res.upper.marginals, ub) if np.isfinite(u)}
    return SolveResult(
        "optimal", float(flip * res.fun + model.obj_constant), dict(zip(names, res.x.tolist())),
        duals=duals, lb_duals=lb_duals, ub_duals=ub_duals, time_s=elapsed,
    )


BACKENDS: dict[str, Callable[[LinearModel, SolveParams], SolveResult]] = {"highs": _solve_highs}


def solve(model: LinearModel, params: SolveParams | None = None) -> SolveResult:
    """Solve ``model``. Duals are sensitivities d(objective)/d(rhs), LPs only."""
    params = params or SolveParams()
    if model.params:
        raise ModelError(f"{model.name}: unresolved parameters {sorted(model.params)[:3]}...")
    problems = model.check()
    if problems:
        raise ModelError("; ".join(problems[:5]))
    name = params.solver or os.environ.get("GRIDPLAN_SOLVER", "highs")
    try:
        backend = BACKENDS[name]
    except KeyError:
        raise SolverError(f"unknown solver {name!r}; available: {sorted(BACKENDS)}") from None
    return backend(model, params)
