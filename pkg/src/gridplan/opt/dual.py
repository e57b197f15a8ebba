"""LP dualization and exact binary x bounded-continuous linearization."""
from __future__ import annotations

import math

from .model import INF, LinearModel, ModelError

# dual variable sign by (primal objective sense, row sense)
_DUAL_BOUNDS = {
    ("min", "<="): (-INF, 0.0),
    ("min", ">="): (0.0, INF),
    ("max", "<="): (0.0, INF),
    ("max", ">="): (-INF, 0.0),
}
# dual row sense by (primal objective sense, primal variable sign)
_DUAL_ROW = {
    ("min", "+"): "<=",
    ("min", "-"): ">=",
    ("max", "+"): ">=",
    ("max", "-"): "<=",
}


def dual_name(row: str) -> str:
    return f"dual:{row}"


def _split_bounds(model: LinearModel):
    """Sign class per variable plus explicit rows for every other finite bound."""
    signs: dict[str, str] = {}
    extra: list[tuple[str, str, str, float]] = []  # (row, var, sense, rhs)
    for v in model.vars.values():
        if v.binary:
            raise ModelError(f"cannot dualize: {v.name} is binary")
        lb, ub = v.lb, v.ub
        if lb == 0.0 and ub == INF:
            signs[v.name] = "+"
        elif lb == -INF and ub == 0.0:
            signs[v.name] = "-"
        elif lb == -INF and ub == INF:
            signs[v.name] = "free"
        elif lb == ub:
            signs[v.name] = "free"
            extra.append((f"fix:{v.name}", v.name, "==", lb))
        elif lb == 0.0:
            signs[v.name] = "+"
            extra.append((f"ub:{v.name}", v.name, "<=", ub))
        elif ub == 0.0:
            signs[v.name] = "-"
            extra.append((f"lb:{v.name}", v.name, ">=", lb))
        else:
            signs[v.name] = "free"
            if math.isfinite(lb):
                extra.append((f"lb:{v.name}", v.name, ">=", lb))
            if math.isfinite(ub):
                extra.append((f"ub:{v.name}", v.name, "<=", ub))
    return signs, extra


def dualize(model: LinearModel) -> LinearModel:
    """Exact LP dual of ``model``.

    One dual variable ``dual:<row>`` per primal constraint (finite variable
    bounds other than a plain sign restriction are first turned into rows
    ``lb:x``/``ub:x``/``fix:x``) and one dual row ``dualcon:<var>`` per primal
    variable. Dual variables use the sensitivity convention, so a minimisation
    with ``<=`` rows yields nonpositive duals and equality rows free duals.
    Parametric right-hand sides become ``param_objective`` products.
    """
    if model.param_objective:
        raise ModelError("cannot dualize a model with a parametric objective")
    signs, extra = _split_bounds(model)
    sense = model.sense
    dual = LinearModel(f"dual({model.name})", "max" if sense == "min" else "min")

    rows = [(c.name, c.expr, c.sense, c.rhs, c.param_rhs) for c in model.cons.values()]
    rows += [(r, {v: 1.0}, s, rhs, {}) for r, v, s, rhs in extra]

    columns: dict[str, dict[str, float]] = {v: {} for v in model.vars}
    obj: dict[str, float] = {}
    for name, expr, rsense, rhs, prhs in rows:
        pi = dual_name(name)
        lo, hi = (-INF, INF) if rsense == "==" else _DUAL_BOUNDS[(sense, rsense)]
        dual.add_var(pi, lo, hi)
        if rhs:
            obj[pi] = rhs
        for p, coef in prhs.items():
            dual.param_objective[(pi, p)] = coef
        for v, coef in expr.items():
            columns[v][pi] = coef

    for v, col in columns.items():
        s = signs[v]
        rel = "==" if s == "free" else _DUAL_ROW[(sense, s)]
        dual.add_constraint(f"dualcon:{v}", col, rel, model.objective.get(v, 0.0))
    dual.set_objective(obj, dual.sense, model.obj_constant)
    return dual


def mccormick_binary(model: LinearModel, pi: str, zbit: str, lower: float | None = None, upper: float | None = None) -> str:
    """Add ``w = pi * zbit`` exactly for binary ``zbit`` and bounded ``pi``.

    ``pi`` is clipped to ``[lower, upper]`` (defaults: its current bounds) and
    both ends must be finite. Returns the name of the product variable.
    """
    var = model.vars[pi]
    lo = var.lb if lower is None else max(var.lb, lower)
    hi = var.ub if upper is None else min(var.ub, upper)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ModelError(f"McCormick on {pi} needs finite bounds, got [{lo}, {hi}]")
    if not model.vars[zbit].binary:
        raise ModelError(f"{zbit} is not binary")
    var.lb, var.ub = lo, hi
    w = model.add_var(f"mc:{pi}*{zbit}", min(lo, 0.0), max(hi, 0.0))
    model.add_constraint(f"mc1:{w}", {w: 1.0, zbit: -lo}, ">=", 0.0)
    model.add_constraint(f"mc2:{w}", {w: 1.0, zbit: -hi}, "<=", 0.0)
    model.add_constraint(f"mc3:{w}", {w: 1.0, pi: -1.0, zbit: -hi}, ">=", -hi)
    model.add_constraint(f"mc4:{w}", {w: 1.0, pi: -1.0, zbit: -lo}, "<=", -lo)
    return w
