"""Model builders: spanning-forest design, restoration LP, CCG master and subproblem.

Naming contract (used by the engine, the worst-case extraction and tests):

* first stage: ``y[e]`` line ``e`` built, ``w[n]`` DG at node ``n``, ``f[e]``
  fictitious flow on line ``e``, ``fr[k]`` fictitious flow on the k-th root edge;
* restoration block (prefix ``b<k>:`` inside the master, one per period and
  failed-line set): ``p[e,t]``,
  ``q[e,t]``, ``xp[n,t]``, ``xq[n,t]``, ``v[n,t]``, ``s[n,t]``, optional
  ``sq[n,t]``; rows ``bal_p``, ``bal_q``, ``cap_p``, ``cap_q``, ``volt`` (or
  ``volt_hi``/``volt_lo``) with the same indices;
* master: ``beta[e,t]``, ``lam``, cut rows ``cut[j]``;
* subproblem: binaries ``z[e,t]``; the parametric right-hand sides of the
  restoration LP refer to parameters with the same names.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .grid import ROOT, NetworkInstance
from .opt import INF, LinearModel, dual_name, dualize, mccormick_binary
from .scenarios import ContingencyScenario


@dataclass(frozen=True)
class FormulationOptions:
    # drop the voltage-drop equality on failed lines (big-M on y*z instead of y)
    voltage_activation: bool = False
    # lower bound on capacity-row duals in the subproblem; None -> -10 * total load
    dual_bound: float | None = None
    # upper bound on beta in the master; None -> total load (see master docstring)
    beta_cap: float | None = None


DEFAULT_OPTIONS = FormulationOptions()


# -- first stage --------------------------------------------------------------

@dataclass(frozen=True)
class Configuration:
    y: tuple[int, ...]
    w: tuple[int, ...]
    f: tuple[float, ...] = ()

    @property
    def built(self) -> list[int]:
        return [e for e, v in enumerate(self.y) if v]

    @property
    def dg_nodes(self) -> list[int]:
        return [n for n, v in enumerate(self.w) if v]

    def cost(self, instance: NetworkInstance) -> float:
        return float(sum(instance.lines[e].cost for e in self.built))

    def with_dg(self, nodes: Iterable[int]) -> "Configuration":
        chosen = set(nodes)
        return Configuration(self.y, tuple(int(n in chosen) for n in range(len(self.w))), self.f)

    def describe(self, instance: NetworkInstance) -> dict:
        return {
            "lines": [instance.lines[e].label for e in self.built],
            "dg": [instance.nodes[n].id for n in self.dg_nodes],
            "cost": self.cost(instance),
        }

    @classmethod
    def from_tree(cls, instance: NetworkInstance, lines: Iterable[int], dg: Iterable[int] = ()) -> "Configuration":
        """Configuration with fictitious flows set to subtree sizes."""
        built = sorted(set(lines))
        children: dict[int, list[int]] = {}
        for e in built:
            m, n = instance.line_ends[e]
            children.setdefault(m, []).append(n)

        size: dict[int, int] = {}

        def subtree(n: int, depth: int = 0) -> int:
            if depth > instance.n_nodes:
                raise ValueError("built lines contain a cycle")
            if n not in size:
                size[n] = 1 + sum(subtree(c, depth + 1) for c in children.get(n, []))
            return size[n]

        y = [0] * instance.n_lines
        f = [0.0] * (instance.n_lines + len(instance.substations))
        for e in built:
            y[e] = 1
            f[e] = float(subtree(instance.line_ends[e][1]))
        for k, r in enumerate(instance.substations):
            f[instance.n_lines + k] = float(subtree(r))
        dg = set(dg)
        return cls(tuple(y), tuple(int(n in dg) for n in range(instance.n_nodes)), tuple(f))

    @classmethod
    def from_values(cls, instance: NetworkInstance, values: dict[str, float]) -> "Configuration":
        y = tuple(int(round(values[f"y[{e}]"])) for e in range(instance.n_lines))
        w = tuple(int(round(values.get(f"w[{n}]", 0.0))) for n in range(instance.n_nodes))
        nr = len(instance.substations)
        f = tuple(float(values[f"f[{e}]"]) for e in range(instance.n_lines)) + tuple(
            float(values[f"fr[{k}]"]) for k in range(nr)
        )
        return cls(y, w, f)


def check_tree(instance: NetworkInstance, config: Configuration, tol: float = 1e-6) -> list[str]:
    """Independent check that ``config`` is a feasible first-stage decision."""
    problems = []
    if len(config.y) != instance.n_lines or len(config.w) != instance.n_nodes:
        return ["configuration dimensions do not match the instance"]
    g = nx.DiGraph()
    g.add_nodes_from(range(instance.n_nodes))
    g.add_node(ROOT)
    for r in instance.substations:
        g.add_edge(ROOT, r)
    for e in config.built:
        g.add_edge(*instance.line_ends[e])
    if g.number_of_edges() != g.number_of_nodes() - 1:
        problems.append(f"{g.number_of_edges()} edges in augmented graph, need {g.number_of_nodes() - 1}")
    if not nx.is_arborescence(g):
        problems.append("built lines with root edges do not form a spanning arborescence from the root")
    if config.cost(instance) > instance.budget_cost * (1 + 1e-9) + 1e-9:
        problems.append(f"line cost {config.cost(instance):.6g} exceeds budget {instance.budget_cost:.6g}")
    if sum(config.w) > instance.budget_dg:
        problems.append(f"{sum(config.w)} DG units exceed budget {instance.budget_dg}")
    cand = set(instance.dg_candidates)
    if any(n not in cand for n in config.dg_nodes):
        problems.append("DG placed on a non-candidate node")
    if config.f:
        n1 = instance.n_nodes
        f = np.asarray(config.f)
        if (f < -tol).any():
            problems.append("negative fictitious flow")
        if any(f[e] > n1 * config.y[e] + tol for e in range(instance.n_lines)):
            problems.append("fictitious flow on an unbuilt line")
        net = np.zeros(instance.n_nodes)
        for e, (m, n) in enumerate(instance.line_ends):
            net[n] += f[e]
            net[m] -= f[e]
        for k, r in enumerate(instance.substations):
            net[r] += f[instance.n_lines + k]
        if np.abs(net - 1.0).max() > tol:
            problems.append("fictitious flow does not deliver one unit per node")
        if abs(f[instance.n_lines:].sum() - n1) > tol:
            problems.append("root outflow differs from the node count")
    return problems


def add_first_stage(model: LinearModel, instance: NetworkInstance) -> None:
    """Spanning-forest constraints over ``y``, ``w``, ``f``, ``fr``."""
    L, N = instance.n_lines, instance.n_nodes
    n_edges = N  # |N'| - 1 with N' = N + root
    for e in range(L):
        model.add_var(f"y[{e}]", binary=True)
        model.add_var(f"f[{e}]", 0.0, INF)
        model.add_constraint(f"tree_cap[{e}]", {f"f[{e}]": 1.0, f"y[{e}]": -float(n_edges)}, "<=", 0.0)
    # root edges are always built, so only their flow needs a variable
    for k, _ in enumerate(instance.substations):
        model.add_var(f"fr[{k}]", 0.0, float(n_edges))
    for n in instance.dg_candidates:
        model.add_var(f"w[{n}]", binary=True)
    model.add_constraint("tree_root", {f"fr[{k}]": 1.0 for k in range(len(instance.substations))}, "==", float(n_edges))
    sub_k = {r: k for k, r in enumerate(instance.substations)}
    for n in range(N):
        expr = {f"f[{e}]": 1.0 for e in instance.in_lines[n]}
        for e in instance.out_lines[n]:
            expr[f"f[{e}]"] = expr.get(f"f[{e}]", 0.0) - 1.0
        if n in sub_k:
            expr[f"fr[{sub_k[n]}]"] = 1.0
        model.add_constraint(f"tree_flow[{n}]", expr, "==", 1.0)
    model.add_constraint("tree_size", {f"y[{e}]": 1.0 for e in range(L)}, "==", float(N - len(instance.substations)))
    model.add_constraint("dg_budget", {f"w[{n}]": 1.0 for n in instance.dg_candidates}, "<=", float(instance.budget_dg))
    model.add_constraint("cost_budget", {f"y[{e}]": instance.lines[e].cost for e in range(L)}, "<=", instance.budget_cost)


def build_first_stage(instance: NetworkInstance) -> LinearModel:
    model = LinearModel("first_stage", "min")
    add_first_stage(model, instance)
    model.set_objective({}, "min")
    return model


def fix_configuration(model: LinearModel, config: Configuration, dg_only: bool = False) -> None:
    if not dg_only:
        for e, v in enumerate(config.y):
            model.fix_var(f"y[{e}]", v)
    for n in model.vars.keys() & {f"w[{n}]" for n in range(len(config.w))}:
        model.fix_var(n, config.w[int(n[2:-1])])


# -- restoration --------------------------------------------------------------

def voltage_big_m(instance: NetworkInstance, e: int) -> float:
    l = instance.lines[e]
    return instance.v_ref * (instance.v_max - instance.v_min) + l.resistance * l.cap_p + l.reactance * l.cap_q


def add_restoration(
    model: LinearModel,
    instance: NetworkInstance,
    *,
    prefix: str = "",
    config: Configuration | None = None,
    z: np.ndarray | None = None,
    periods: Sequence[int] | None = None,
    options: FormulationOptions = DEFAULT_OPTIONS,
) -> list[str]:
    """Add one restoration block; returns the names of its shed variables.

    ``config`` given: ``y``/``w`` are data and unbuilt lines are omitted.
    ``config`` None: ``y[e]``/``w[n]`` must already be model variables.
    ``z`` given: availability is data. ``z`` None: capacity right-hand sides
    carry parameters ``z[e,t]`` (only valid with ``config`` given).
    """
    T = range(instance.periods) if periods is None else list(periods)
    P = prefix
    Dp, Dq = instance.load_p, instance.load_q
    if config is not None:
        lines = config.built
        dg = set(config.dg_nodes)
    else:
        lines = list(range(instance.n_lines))
        dg = set(instance.dg_candidates)
    lineset = set(lines)
    subs = set(instance.substations)
    shed = []
    for t in T:
        for e in lines:
            l = instance.lines[e]
            p, q = model.add_var(f"{P}p[{e},{t}]"), model.add_var(f"{P}q[{e},{t}]")
            for kind, var, cap in (("cap_p", p, l.cap_p), ("cap_q", q, l.cap_q)):
                row = f"{P}{kind}[{e},{t}]"
                if config is None:
                    model.add_constraint(row, {var: 1.0, f"y[{e}]": -cap * float(z[e, t])}, "<=", 0.0)
                elif z is None:
                    model.add_constraint(row, {var: 1.0}, "<=", 0.0, {f"z[{e},{t}]": cap})
                else:
                    model.add_constraint(row, {var: 1.0}, "<=", cap * float(z[e, t]))
        for n in range(instance.n_nodes):
            v = model.add_var(f"{P}v[{n},{t}]", instance.v_min, instance.v_max)
            if n in subs:
                model.fix_var(v, 1.0)
            s = model.add_var(f"{P}s[{n},{t}]", 0.0, float(Dp[n, t]))
            shed.append(s)
            bal_p = {s: 1.0}
            bal_q = {}
            if Dp[n, t] > 0:
                bal_q[s] = float(Dq[n, t] / Dp[n, t])
            elif Dq[n, t] > 0:
                bal_q[model.add_var(f"{P}sq[{n},{t}]", 0.0, float(Dq[n, t]))] = 1.0
            if n in subs or n in dg:
                node = instance.nodes[n]
                xp = model.add_var(f"{P}xp[{n},{t}]", 0.0, node.cap_p)
                xq = model.add_var(f"{P}xq[{n},{t}]", 0.0, node.cap_q)
                if n not in subs and config is None:
                    model.vars[xp].ub = model.vars[xq].ub = INF
                    model.add_constraint(f"{P}dg_p[{n},{t}]", {xp: 1.0, f"w[{n}]": -node.cap_p}, "<=", 0.0)
                    model.add_constraint(f"{P}dg_q[{n},{t}]", {xq: 1.0, f"w[{n}]": -node.cap_q}, "<=", 0.0)
                bal_p[xp] = 1.0
                bal_q[xq] = 1.0
            for e in instance.in_lines[n]:
                if e in lineset:
                    bal_p[f"{P}p[{e},{t}]"] = 1.0
                    bal_q[f"{P}q[{e},{t}]"] = 1.0
            for e in instance.out_lines[n]:
                if e in lineset:
                    bal_p[f"{P}p[{e},{t}]"] = -1.0
                    bal_q[f"{P}q[{e},{t}]"] = -1.0
            model.add_constraint(f"{P}bal_p[{n},{t}]", bal_p, "==", float(Dp[n, t]))
            model.add_constraint(f"{P}bal_q[{n},{t}]", bal_q, "==", float(Dq[n, t]))
        for e in lines:
            _add_voltage(model, instance, e, t, P, config, z, options)
    return shed


def _add_voltage(model, instance, e, t, P, config, z, options) -> None:
    l = instance.lines[e]
    m, n = instance.line_ends[e]
    V0 = instance.v_ref
    expr = {f"{P}v[{n},{t}]": V0, f"{P}v[{m},{t}]": -V0, f"{P}p[{e},{t}]": l.resistance, f"{P}q[{e},{t}]": l.reactance}
    M = voltage_big_m(instance, e)
    if config is None:
        # y is a variable: relax by M (1 - y) [and M (1 - z) when activated]
        if options.voltage_activation and z[e, t] == 0:
            return
        model.add_constraint(f"{P}volt_hi[{e},{t}]", {**expr, f"y[{e}]": M}, "<=", M)
        model.add_constraint(f"{P}volt_lo[{e},{t}]", {**expr, f"y[{e}]": -M}, ">=", -M)
    elif not options.voltage_activation:
        model.add_constraint(f"{P}volt[{e},{t}]", expr, "==", 0.0)
    elif z is None:
        model.add_constraint(f"{P}volt_hi[{e},{t}]", expr, "<=", M, {f"z[{e},{t}]": -M})
        model.add_constraint(f"{P}volt_lo[{e},{t}]", expr, ">=", -M, {f"z[{e},{t}]": M})
    elif z[e, t] == 1:
        model.add_constraint(f"{P}volt[{e},{t}]", expr, "==", 0.0)


def build_restoration(
    instance: NetworkInstance,
    config: Configuration,
    z: ContingencyScenario | np.ndarray | None = None,
    periods: Sequence[int] | None = None,
    options: FormulationOptions = DEFAULT_OPTIONS,
) -> LinearModel:
    """Minimum-shed LP for a fixed design; parametric in ``z[e,t]`` when ``z`` is None."""
    zz = None if z is None else np.asarray(z.z if isinstance(z, ContingencyScenario) else z)
    model = LinearModel("restoration", "min")
    shed = add_restoration(model, instance, config=config, z=zz, periods=periods, options=options)
    model.set_objective({s: 1.0 for s in shed}, "min")
    return model


# -- master -------------------------------------------------------------------

def build_master(
    instance: NetworkInstance,
    pool: Sequence[ContingencyScenario],
    mu_max: np.ndarray | None = None,
    mode: str = "dr",
    fixed: Configuration | None = None,
    fix_dg_only: bool = False,
    options: FormulationOptions = DEFAULT_OPTIONS,
) -> LinearModel:
    """CCG master over the design, ``beta``, ``lam`` and one recourse block per pool scenario.

    ``beta`` is capped at the total load: lowering any larger multiplier to
    that value keeps every cut satisfied (a scenario failing that line can
    shed at most the total load), so the cap never cuts off an optimum. With
    an empty pool ``beta`` is fixed at zero and ``lam >= 0``.
    """
    if mode not in ("dr", "ro"):
        raise ValueError(f"mode must be 'dr' or 'ro', got {mode!r}")
    L, T = instance.n_lines, instance.periods
    mu = instance.mu_max if mu_max is None else np.asarray(mu_max)
    model = LinearModel(f"master[{mode}]", "min")
    add_first_stage(model, instance)
    if fixed is not None:
        fix_configuration(model, fixed, dg_only=fix_dg_only)
    model.add_var("lam", 0.0, INF)
    obj = {"lam": 1.0}
    cap = instance.total_load() if options.beta_cap is None else options.beta_cap
    if mode == "dr":
        for e in range(L):
            for t in range(T):
                b = model.add_var(f"beta[{e},{t}]", 0.0, cap if pool else 0.0)
                obj[b] = float(mu[e, t]) - 1.0
    for j, scen in enumerate(pool):
        add_scenario(model, instance, j, scen, mode, options)
    model.set_objective(obj, "min")
    return model


def add_scenario(
    model: LinearModel,
    instance: NetworkInstance,
    j: int,
    scen: ContingencyScenario,
    mode: str = "dr",
    options: FormulationOptions = DEFAULT_OPTIONS,
) -> str:
    """Append the cut ``cut[j]`` for ``scen``, creating recourse blocks as needed.

    Shedding decouples by period once the design is fixed, so a recourse
    block ``b<k>:`` covers one (period, failed lines) pair and is shared by
    every pooled scenario with that pattern. Each cut therefore still reads
    lam >= sum of the scenario's minimal shed + beta . z.
    """
    blocks = model.meta.setdefault("blocks", {})
    cut = {"lam": 1.0}
    for t in range(instance.periods):
        key = (t, tuple(np.flatnonzero(scen.z[:, t] == 0).tolist()))
        if key not in blocks:
            k = len(blocks)
            blocks[key] = add_restoration(
                model, instance, prefix=f"b{k}:", z=scen.z, periods=[t], options=options
            )
        for s in blocks[key]:
            cut[s] = cut.get(s, 0.0) - 1.0
    if mode == "dr":
        for e, t in zip(*np.nonzero(scen.z)):
            cut[f"beta[{e},{t}]"] = -1.0
    return model.add_constraint(f"cut[{j}]", cut, ">=", 0.0)


def build_ro_master(instance: NetworkInstance, pool: Sequence[ContingencyScenario], **kw) -> LinearModel:
    return build_master(instance, pool, mode="ro", **kw)


# -- subproblem ---------------------------------------------------------------

def default_dual_bound(instance: NetworkInstance, options: FormulationOptions = DEFAULT_OPTIONS) -> float:
    return -10.0 * instance.total_load() if options.dual_bound is None else float(options.dual_bound)


def add_support(model: LinearModel, instance: NetworkInstance) -> None:
    """Binaries ``z[e,t]`` restricted to the admissible scenario set."""
    L, T = instance.n_lines, instance.periods
    for e in range(L):
        for t in range(T):
            model.add_var(f"z[{e},{t}]", binary=True)
    for t in range(T):
        model.add_constraint(f"outages[{t}]", {f"z[{e},{t}]": 1.0 for e in range(L)}, ">=", float(L - instance.n_z))
    for e in range(L):
        tau = int(instance.tau_rst[e])
        for t in range(T):
            for s in range(t + 1, min(t + tau, T - 1) + 1):
                model.add_constraint(f"restore[{e},{t},{s}]", {f"z[{e},{s}]": 1.0, f"z[{e},{t}]": -1.0}, "<=", 0.0)


def build_subproblem(
    instance: NetworkInstance,
    config: Configuration,
    beta: np.ndarray | None = None,
    options: FormulationOptions = DEFAULT_OPTIONS,
    dual_bound: float | None = None,
) -> LinearModel:
    """max over admissible z of Q(config, z) + sum beta * z, as one MIP.

    The restoration LP is built with z-parametric right-hand sides, dualized,
    and each product (dual x z) is replaced by an exact McCormick variable.
    ``beta`` None gives the robust subproblem.
    """
    inner = build_restoration(instance, config, None, options=options)
    model = dualize(inner)
    model.name = "subproblem"
    add_support(model, instance)
    bound = default_dual_bound(instance, options) if dual_bound is None else dual_bound
    obj = dict(model.objective)
    for (pi, zname), coef in sorted(model.param_objective.items()):
        w = mccormick_binary(model, pi, zname, lower=bound, upper=-bound)
        obj[w] = obj.get(w, 0.0) + coef
    model.param_objective = {}
    if beta is not None:
        for e in range(instance.n_lines):
            for t in range(instance.periods):
                if beta[e, t]:
                    name = f"z[{e},{t}]"
                    obj[name] = obj.get(name, 0.0) + float(beta[e, t])
    model.set_objective(obj, "max", model.obj_constant)
    return model


def build_ro_subproblem(instance: NetworkInstance, config: Configuration, **kw) -> LinearModel:
    return build_subproblem(instance, config, None, **kw)


def product_duals(model: LinearModel) -> list[tuple[str, str]]:
    """(dual variable, z variable) pairs linearized in a subproblem."""
    out = []
    for name in model.vars:
        if name.startswith("mc:"):
            pi, z = name[3:].rsplit("*", 1)
            out.append((pi, z))
    return out


def scenario_from_values(instance: NetworkInstance, values: dict[str, float]) -> ContingencyScenario:
    z = np.array(
        [[round(values[f"z[{e},{t}]"]) for t in range(instance.periods)] for e in range(instance.n_lines)],
        dtype=np.int8,
    ).reshape(instance.n_lines, instance.periods)
    return ContingencyScenario(z)


__all__ = [
    "Configuration", "FormulationOptions", "DEFAULT_OPTIONS", "add_first_stage", "add_restoration",
    "add_scenario", "add_support", "build_first_stage", "build_master", "build_restoration", "build_ro_master",
    "build_ro_subproblem", "build_subproblem", "check_tree", "default_dual_bound", "dual_name",
    "fix_configuration", "product_duals", "scenario_from_values", "voltage_big_m",
]
