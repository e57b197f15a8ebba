"""Solver-agnostic linear / mixed-binary model container.

Names are structured strings such as ``p[3,7,0]``; every expression is a
``{variable name: coefficient}`` mapping. Constraint right-hand sides may carry
*parameter* terms (``param_rhs``) that stay symbolic until :meth:`fix_params`
substitutes values, which is how the restoration LP is kept parametric in the
contingency vector.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

INF = math.inf
SENSES = ("<=", "==", ">=")


class ModelError(ValueError):
    pass


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    binary: bool = False


@dataclass
class Constraint:
    name: str
    expr: dict[str, float]
    sense: str
    rhs: float = 0.0
    param_rhs: dict[str, float] = field(default_factory=dict)

    def activity(self, values: Mapping[str, float]) -> float:
        return sum(c * values[v] for v, c in self.expr.items())


class LinearModel:
    def __init__(self, name: str = "model", sense: str = "min"):
        self.name = name
        self.vars: dict[str, Variable] = {}
        self.cons: dict[str, Constraint] = {}
        self.sense = sense
        self.objective: dict[str, float] = {}
        self.obj_constant = 0.0
        # (variable, parameter) -> coefficient; produced by dualize()
        self.param_objective: dict[tuple[str, str], float] = {}
        # free-form bookkeeping for builders (never read by solvers)
        self.meta: dict = {}

    # -- construction -------------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = INF, binary: bool = False) -> str:
        if name in self.vars:
            raise ModelError(f"duplicate variable {name!r}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.vars[name] = Variable(name, float(lb), float(ub), binary)
        return name

    def add_constraint(
        self,
        name: str,
        expr: Mapping[str, float],
        sense: str,
        rhs: float = 0.0,
        param_rhs: Mapping[str, float] | None = None,
    ) -> str:
        if name in self.cons:
            raise ModelError(f"duplicate constraint {name!r}")
        if sense not in SENSES:
            raise ModelError(f"bad sense {sense!r} in {name!r}")
        self.cons[name] = Constraint(
            name, {v: float(c) for v, c in expr.items() if c != 0.0}, sense, float(rhs),
            {k: float(c) for k, c in (param_rhs or {}).items() if c != 0.0},
        )
        return name

    def set_objective(self, expr: Mapping[str, float], sense: str | None = None, constant: float = 0.0) -> None:
        """Replace the objective; ``sense`` None keeps the model's current sense."""
        sense = self.sense if sense is None else sense
        if sense not in ("min", "max"):
            raise ModelError(f"bad objective sense {sense!r}")
        self.sense = sense
        self.objective = {v: float(c) for v, c in expr.items() if c != 0.0}
        self.obj_constant = float(constant)

    def fix_var(self, name: str, value: float) -> None:
        v = self.vars[name]
        v.lb = v.ub = float(value)

    # -- queries ------------------------------------------------------------
    @property
    def is_mip(self) -> bool:
        return any(v.binary for v in self.vars.values())

    @property
    def params(self) -> set[str]:
        out = {p for c in self.cons.values() for p in c.param_rhs}
        out.update(p for _, p in self.param_objective)
        return out

    def copy(self) -> "LinearModel":
        return copy.deepcopy(self)

    def check(self) -> list[str]:
        """Return every structural problem; empty when the model is well formed."""
        problems = []
        for v in self.vars.values():
            if not v.lb <= v.ub:
                problems.append(f"variable {v.name}: lb {v.lb} > ub {v.ub}")
            if v.binary and (v.lb < 0 or v.ub > 1):
                problems.append(f"binary {v.name} has bounds outside [0,1]")
        for c in self.cons.values():
            for name in c.expr:
                if name not in self.vars:
                    problems.append(f"constraint {c.name} references undeclared {name!r}")
        for name in self.objective:
            if name not in self.vars:
                problems.append(f"objective references undeclared {name!r}")
        for name, _ in self.param_objective:
            if name not in self.vars:
                problems.append(f"parametric objective references undeclared {name!r}")
        return problems

    def fix_params(self, values: Mapping[str, float]) -> "LinearModel":
        """Copy with every parameter substituted; missing parameters raise."""
        out = self.copy()
        for c in out.cons.values():
            if c.param_rhs:
                c.rhs += sum(coef * values[p] for p, coef in c.param_rhs.items())
                c.param_rhs = {}
        for (v, p), coef in out.param_objective.items():
            out.objective[v] = out.objective.get(v, 0.0) + coef * values[p]
        out.param_objective = {}
        return out

    def violations(self, values: Mapping[str, float], tol: float = 1e-6) -> list[str]:
        """Constraints and bounds violated by ``values`` beyond ``tol`` (abs + rel)."""
        bad = []
        for v in self.vars.values():
            x = values[v.name]
            if x < v.lb - tol * (1 + abs(v.lb)) or x > v.ub + tol * (1 + abs(v.ub)):
                bad.append(v.name)
        for c in self.cons.values():
            a = c.activity(values)
            slack = tol * (1 + abs(c.rhs))
            if (c.sense == "<=" and a > c.rhs + slack) or (c.sense == ">=" and a < c.rhs - slack) or (
                c.sense == "==" and abs(a - c.rhs) > slack
            ):
                bad.append(c.name)
        return bad

    def objective_value(self, values: Mapping[str, float]) -> float:
        return self.obj_constant + sum(c * values[v] for v, c in self.objective.items())

    # -- export -------------------------------------------------------------
    def to_lp(self) -> str:
        """CPLEX-LP text export for debugging with external tools."""
        if self.params:
            raise ModelError("fix parameters before export")
        alias = {name: f"x{i}" for i, name in enumerate(self.vars)}

        def fmt(expr: Mapping[str, float]) -> str:
            if not expr:
                return "0 " + next(iter(alias.values()), "x0")
            return " ".join(f"{c:+.17g} {alias[v]}" for v, c in expr.items())

        lines = [f"\\ model {self.name}"]
        lines += [f"\\ {a} = {n}" for n, a in alias.items()]
        lines.append("Maximize" if self.sense == "max" else "Minimize")
        lines.append(f" obj: {fmt(self.objective)}")
        lines.append("Subject To")
        for i, c in enumerate(self.cons.values()):
            op = {"<=": "<=", ">=": ">=", "==": "="}[c.sense]
            lines.append(f" c{i}: {fmt(c.expr)} {op} {c.rhs:.17g}")
        lines.append("Bounds")
        for n, v in self.vars.items():
            lo = "-inf" if v.lb == -INF else f"{v.lb:.17g}"
            hi = "+inf" if v.ub == INF else f"{v.ub:.17g}"
            lines.append(f" {lo} <= {alias[n]} <= {hi}")
        binaries = [alias[n] for n, v in self.vars.items() if v.binary]
        if binaries:
            lines.append("Binaries")
            lines.append(" " + " ".join(binaries))
        lines.append("End")
        return "\n".join(lines) + "\n"


def lin(*terms: Iterable[tuple[str, float]] | Mapping[str, float]) -> dict[str, float]:
    """Merge several ``(name, coef)`` collections, summing duplicates."""
    out: dict[str, float] = {}
    for group in terms:
        items = group.items() if isinstance(group, Mapping) else group
        for name, coef in items:
            out[name] = out.get(name, 0.0) + coef
    return out
