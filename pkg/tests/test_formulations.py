from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridplan.formulations import (
    Configuration,
    FormulationOptions,
    build_first_stage,
    build_master,
    build_restoration,
    build_subproblem,
    check_tree,
    product_duals,
    scenario_from_values,
)
from gridplan.grid import bundled
from gridplan.opt import SolveParams, dualize, solve
from gridplan.oracle import ShedTable, enumerate_trees
from gridplan.scenarios import ContingencyScenario, enumerate_scenarios


def shed(inst, config, failed, **kw):
    z = ContingencyScenario.from_failures(inst.n_lines, inst.periods, failed)
    res = solve(build_restoration(inst, config, z, **kw))
    assert res.ok
    return res.objective


def test_tiny2_shed_by_hand(tiny2):
    # line up: everything served; line down: all load lost unless the DG covers part of it
    cfg = Configuration.from_tree(tiny2, [0])
    assert shed(tiny2, cfg, []) == pytest.approx(0.0, abs=1e-9)
    assert shed(tiny2, cfg, [(0, 0), (0, 1)]) == pytest.approx(180.0)
    assert shed(tiny2, cfg, [(0, 1)]) == pytest.approx(80.0)
    dg = cfg.with_dg([1])
    assert shed(tiny2, dg, [(0, 0), (0, 1)]) == pytest.approx(50.0 + 30.0)


def test_voltage_limit_binds_on_long_feeder(tiny2):
    # v_2 = 1 - (r p + x q) / v_ref must stay above v_min, so heavy impedance forces shedding
    heavy = tiny2.replace(lines=(replace(tiny2.lines[0], resistance=1.0, reactance=0.0),))
    cfg = Configuration.from_tree(heavy, [0])
    # 1000 * 0.05 / 1.0 = 50 kW deliverable at t0, 80 kW demand at t1 leaves 30 kW shed
    assert shed(heavy, cfg, []) == pytest.approx((100 - 50) + (80 - 50))


@pytest.mark.parametrize("name", ["ring4", "twin7"])
def test_from_tree_passes_checker(name):
    inst = bundled(name)
    for lines in enumerate_trees(inst):
        cfg = Configuration.from_tree(inst, lines, inst.dg_candidates[: inst.budget_dg])
        assert check_tree(inst, cfg) == []


def test_checker_rejects_cycles_and_budgets(ring4):
    bad = Configuration(tuple([1, 1, 1, 1, 0]), (0, 0, 0, 0))
    assert check_tree(ring4, bad)
    over = Configuration.from_tree(ring4, [0, 1, 2], [2, 3])
    assert any("DG" in p for p in check_tree(ring4, over))


def count_arborescences(inst):
    """Directed matrix-tree theorem on the augmented graph (root merged with substations)."""
    subs = set(inst.substations)
    idx = {n: i for i, n in enumerate(n for n in range(inst.n_nodes) if n not in subs)}
    k = len(idx)
    lap = np.zeros((k, k))
    for m, n in inst.line_ends:
        if n in subs:
            continue
        lap[idx[n], idx[n]] += 1
        if m not in subs:
            lap[idx[m], idx[n]] -= 1
    return round(np.linalg.det(lap)) if k else 1


@pytest.mark.parametrize("name", ["tiny2", "ring4", "twin7"])
def test_tree_enumeration_matches_matrix_tree_theorem(name):
    inst = bundled(name).replace(budget_cost=1e12)
    assert len(enumerate_trees(inst)) == count_arborescences(inst)


@pytest.mark.parametrize("name", ["ring4", "twin7"])
def test_first_stage_feasible_set(name):
    inst = bundled(name)
    res = solve(build_first_stage(inst))
    assert res.ok
    assert check_tree(inst, Configuration.from_values(inst, res.values)) == []


@given(seed=st.integers(0, 10**6))
def test_master_blocks_reproduce_restoration_value(seed):
    # with the design fixed, each shared recourse block is the restoration LP of its pattern
    inst = bundled("ring4")
    rng = np.random.default_rng(seed)
    trees = enumerate_trees(inst)
    lines = trees[rng.integers(len(trees))]
    cfg = Configuration.from_tree(inst, lines, [inst.dg_candidates[rng.integers(2)]])
    scens = enumerate_scenarios(inst)
    z = scens[rng.integers(len(scens))]
    master = build_master(inst, [z], mode="ro", fixed=cfg)
    res = solve(master)
    assert res.ok
    assert res.objective == pytest.approx(ShedTable(inst, cfg)(z), abs=1e-6)


@pytest.mark.parametrize("activation", [False, True])
def test_subproblem_is_exact_on_ring4(ring4, activation):
    opts = FormulationOptions(voltage_activation=activation)
    rng = np.random.default_rng(5)
    scens = enumerate_scenarios(ring4)
    for lines in enumerate_trees(ring4)[:4]:
        cfg = Configuration.from_tree(ring4, lines, [2])
        beta = rng.uniform(0, 50, size=(ring4.n_lines, ring4.periods))
        model = build_subproblem(ring4, cfg, beta, opts)
        res = solve(model, SolveParams(mip_gap=1e-9))
        best = max(solve(build_restoration(ring4, cfg, z, options=opts)).objective + (beta * z.z).sum() for z in scens)
        assert res.objective == pytest.approx(best, rel=1e-7, abs=1e-6)
        z = scenario_from_values(ring4, res.values)
        for pi, zb in product_duals(model):
            assert res.values[f"mc:{pi}*{zb}"] == pytest.approx(res.values[pi] * res.values[zb], abs=1e-6)
        assert z in set(scens)


def hand_dual(inst, cfg, z):
    """Dual of the restoration LP written row by row and solved with raw linprog.

    Multipliers: a/aq <= 0 on the flow capacities, lam/kap free on the
    balances, eta free on the voltage equalities, and r >= 0 paying for the
    finite upper bounds (plus rp >= 0 for voltage lower bounds).
    """
    from scipy.optimize import linprog

    V0, lines, dg, subs = inst.v_ref, cfg.built, set(cfg.dg_nodes), set(inst.substations)
    Dp, Dq = inst.load_p, inst.load_q
    cols: dict[tuple, int] = {}
    bounds, obj = [], []

    def var(key, lo, hi, c=0.0):
        cols[key] = len(bounds)
        bounds.append((lo, hi))
        obj.append(c)
        return cols[key]

    rows, rhs = [], []  # each row: {col: coef} <= rhs

    def leq(expr, b):
        rows.append(expr)
        rhs.append(b)

    for t in range(inst.periods):
        for e in lines:
            l = inst.lines[e]
            var(("a", e, t), None, 0, l.cap_p * z[e, t])
            var(("aq", e, t), None, 0, l.cap_q * z[e, t])
            var(("eta", e, t), None, None)
        for n in range(inst.n_nodes):
            var(("lam", n, t), None, None, Dp[n, t])
            var(("kap", n, t), None, None, Dq[n, t])
        for e in lines:
            m, n = inst.line_ends[e]
            l = inst.lines[e]
            # p column: cap_p, +1 at head balance, -1 at tail balance, r in voltage row
            leq({cols["a", e, t]: 1, cols["lam", n, t]: 1, cols["lam", m, t]: -1, cols["eta", e, t]: l.resistance}, 0)
            leq({cols["aq", e, t]: 1, cols["kap", n, t]: 1, cols["kap", m, t]: -1, cols["eta", e, t]: l.reactance}, 0)
        for n in range(inst.n_nodes):
            # voltage column: reduced cost d = -V0 (sum eta into n - sum eta out of n)
            d = {}
            for e in lines:
                tail, head = inst.line_ends[e]
                if head == n:
                    d[cols["eta", e, t]] = d.get(cols["eta", e, t], 0) - V0
                if tail == n:
                    d[cols["eta", e, t]] = d.get(cols["eta", e, t], 0) + V0
            if n in subs:
                for c, v in d.items():  # v fixed at 1
                    obj[c] += v
            else:
                rp = var(("vp", n, t), 0, None, inst.v_min)
                rm = var(("vm", n, t), 0, None, -inst.v_max)
                # d = rp - rm
                leq({**d, rp: -1, rm: 1}, 0)
                leq({**{c: -v for c, v in d.items()}, rp: 1, rm: -1}, 0)
            # shed column: 1 - lam - rho kap >= -r
            rho = Dq[n, t] / Dp[n, t] if Dp[n, t] > 0 else 0.0
            r = var(("s", n, t), 0, None, -Dp[n, t])
            leq({cols["lam", n, t]: 1, cols["kap", n, t]: rho, r: -1}, 1)
            if Dp[n, t] == 0 and Dq[n, t] > 0:
                r = var(("sq", n, t), 0, None, -Dq[n, t])
                leq({cols["kap", n, t]: 1, r: -1}, 0)
            if n in subs or n in dg:
                node = inst.nodes[n]
                r = var(("xp", n, t), 0, None, -node.cap_p)
                leq({cols["lam", n, t]: 1, r: -1}, 0)
                r = var(("xq", n, t), 0, None, -node.cap_q)
                leq({cols["kap", n, t]: 1, r: -1}, 0)
    A = np.zeros((len(rows), len(bounds)))
    for i, expr in enumerate(rows):
        for c, v in expr.items():
            A[i, c] += v
    res = linprog(-np.array(obj), A_ub=A, b_ub=rhs, bounds=bounds, method="highs")
    assert res.status == 0
    return -res.fun


@given(seed=st.integers(0, 10**6))
def test_generic_dual_matches_hand_dual(seed):
    rng = np.random.default_rng(seed)
    inst = bundled(["tiny2", "ring4", "twin7"][seed % 3])
    trees = enumerate_trees(inst)
    dg = inst.dg_candidates[: inst.budget_dg]
    cfg = Configuration.from_tree(inst, trees[rng.integers(len(trees))], dg)
    z = (rng.uniform(size=(inst.n_lines, inst.periods)) > 0.3).astype(np.int8)
    primal = build_restoration(inst, cfg, z)
    generic = solve(dualize(primal))
    assert generic.ok
    hand = hand_dual(inst, cfg, z)
    assert generic.objective == pytest.approx(hand, rel=1e-6, abs=1e-6)
    assert solve(primal).objective == pytest.approx(hand, rel=1e-6, abs=1e-6)
