"""Acceptance suite: one marked group of tests per criterion.

The terminal summary prints a PASS/FAIL line per criterion (see conftest).
"""
import itertools
import time

import numpy as np
import pytest

from gridplan.bench import EvalParams, budget_grid, compare, sweep
from gridplan.ccg import (
    CcgParams,
    extract_worst_case_distribution,
    restoration_value,
    run_ccg,
    worst_case_expectation,
)
from gridplan.cli import main
from gridplan.formulations import Configuration, build_master, build_restoration, default_dual_bound
from gridplan.grid import bundled, min_forest
from gridplan.opt import LinearModel, dualize, mccormick_binary, solve
from gridplan.oracle import ShedTable, enumerate_trees, exact_plan, exact_worst_case_expectation
from gridplan.scenarios import AmbiguitySet, ContingencyScenario, enumerate_scenarios

FIXTURES = ("tiny2", "ring4", "twin7")
GRID = [(name, T, nz) for name in FIXTURES for T in (1, 2) for nz in (1, 2)]


def variant(name, T, nz):
    return bundled(name).with_periods(T).replace(n_z=nz)


def random_config(inst, rng, trees=None):
    trees = trees if trees is not None else enumerate_trees(inst)
    k = int(rng.integers(0, min(inst.budget_dg, len(inst.dg_candidates)) + 1))
    dg = rng.choice(inst.dg_candidates, size=k, replace=False) if k else []
    return Configuration.from_tree(inst, trees[int(rng.integers(len(trees)))], [int(n) for n in dg])


def close(a, b, rel):
    return abs(a - b) <= rel * max(1.0, abs(b))


@pytest.fixture(scope="module")
def fixture_runs():
    """CCG and oracle on every fixture variant and both modes."""
    out = {}
    for name, T, nz in GRID:
        inst = variant(name, T, nz)
        for mode in ("dr", "ro"):
            t0 = time.perf_counter()
            res = run_ccg(inst, params=CcgParams(epsilon=1e-6, mode=mode))
            elapsed = time.perf_counter() - t0
            out[name, T, nz, mode] = (inst, res, exact_plan(inst, mode=mode).objective, elapsed)
    return out


# -- 1 ------------------------------------------------------------------------

@pytest.mark.criterion(1)
@pytest.mark.parametrize("name", FIXTURES)
def test_c1_planning_matches_oracle(fixture_runs, name):
    total = 0.0
    for (n, T, nz, mode), (_, res, oracle, elapsed) in fixture_runs.items():
        if n != name or mode != "dr":
            continue
        assert res.converged, (T, nz, res.status)
        assert close(res.objective, oracle, 1e-5), (T, nz, res.objective, oracle)
        total += elapsed
    assert total < 60.0


# -- 2 ------------------------------------------------------------------------

@pytest.mark.criterion(2)
@pytest.mark.parametrize("name", FIXTURES)
def test_c2_inner_problem_matches_oracle(name):
    rng = np.random.default_rng(sum(map(ord, name)))
    for k in range(25):
        T, nz = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        inst = variant(name, T, nz)
        cfg = random_config(inst, rng)
        amb = AmbiguitySet(rng.uniform(0.0, 1.0, size=(inst.n_lines, T)) * rng.choice([0.1, 0.5, 1.0]))
        got = worst_case_expectation(inst, cfg, amb).objective
        want = exact_worst_case_expectation(inst, cfg, amb).value
        assert close(got, want, 1e-5), (k, T, nz, got, want)


# -- 3 ------------------------------------------------------------------------

@pytest.mark.criterion(3)
def test_c3_worst_case_distribution(fixture_runs):
    for (name, T, nz, mode), (inst, res, _, _) in fixture_runs.items():
        if mode != "dr" or not res.converged:
            continue
        wcd = extract_worst_case_distribution(inst, res)
        psi = wcd.probs
        assert (psi >= 0).all()
        assert abs(psi.sum() - 1.0) <= 1e-9
        marg = sum(p * (1 - z.z) for p, z in zip(psi, wcd.support))
        assert (marg <= inst.mu_max + 1e-9).all(), (name, T, nz)
        table = ShedTable(inst, res.config)
        q = np.array([table(z) for z in wcd.support])
        assert close(float(psi @ q), res.objective, 1e-5), (name, T, nz, float(psi @ q), res.objective)


# -- 4 ------------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_c4_restoration_strong_duality():
    rng = np.random.default_rng(4)
    ieee33 = bundled("ieee33").with_periods(2)
    cases = [(bundled(n), enumerate_trees(bundled(n))) for n in FIXTURES] + [(ieee33, None)]
    for k in range(100):
        inst, trees = cases[k % len(cases)]
        if trees is not None:
            cfg = random_config(inst, rng, trees)
        else:
            dg = rng.choice(inst.dg_candidates, size=inst.budget_dg, replace=False)
            cfg = Configuration.from_tree(inst, min_forest(inst)[1], [int(n) for n in dg])
        z = (rng.uniform(size=(inst.n_lines, inst.periods)) > rng.uniform(0.05, 0.5)).astype(np.int8)
        primal = build_restoration(inst, cfg, z)
        p, d = solve(primal), solve(dualize(primal))
        assert p.ok and d.ok
        assert abs(p.objective - d.objective) <= 1e-6 * max(1.0, abs(p.objective)), (k, p.objective, d.objective)


@pytest.mark.criterion(4)
def test_c4_mccormick_six_point_sweep():
    bound = default_dual_bound(bundled("twin7"))
    for lower, upper in [(bound, 0.0), (-5.0, 0.0), (-2.0, 3.0), (0.0, 4.0)]:
        for pi_val, z_val in itertools.product(np.linspace(lower, upper, 3), (0, 1)):
            m = LinearModel("mc", "max")
            m.add_var("pi", lower, upper)
            m.add_var("z", binary=True)
            w = mccormick_binary(m, "pi", "z")
            m.fix_var("pi", pi_val)
            m.fix_var("z", z_val)
            for sense in ("min", "max"):
                m.set_objective({w: 1.0}, sense)
                assert abs(solve(m).values[w] - pi_val * z_val) <= 1e-9


# -- 5 ------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_c5_bound_discipline(fixture_runs):
    for key, (_, res, oracle, _) in fixture_runs.items():
        hist = res.state.history
        for a, b in zip(hist, hist[1:]):
            assert b.lb >= a.lb - 1e-9, key
            assert b.ub <= a.ub + 1e-9, key
        for h in hist:
            assert h.lb <= h.ub + 1e-6, key
            assert h.lb - 1e-6 <= oracle <= h.ub + 1e-6, (key, h)


# -- 6 ------------------------------------------------------------------------

@pytest.mark.criterion(6)
@pytest.mark.parametrize("name", FIXTURES)
def test_c6_zero_mu_gives_nominal(name):
    inst = bundled(name).with_mu(0.0)
    res = run_ccg(inst, params=CcgParams(epsilon=1e-9))
    nominal = restoration_value(inst, res.config, ContingencyScenario.all_ones(inst.n_lines, inst.periods))
    assert abs(res.objective - nominal) <= 1e-6


@pytest.mark.criterion(6)
@pytest.mark.parametrize("name,T", [("tiny2", 2), ("ring4", 2), ("twin7", 1)])
def test_c6_unit_mu_gives_robust(name, T):
    inst = bundled(name).with_periods(T).with_mu(1.0)
    inst = inst.replace(n_z=inst.n_lines)
    dr = run_ccg(inst, params=CcgParams(epsilon=1e-7, mode="dr"))
    ro = run_ccg(inst, params=CcgParams(epsilon=1e-7, mode="ro"))
    assert dr.converged and ro.converged
    assert close(dr.objective, ro.objective, 1e-5), (dr.objective, ro.objective)


@pytest.mark.criterion(6)
@pytest.mark.parametrize("name", FIXTURES + ("ieee33",))
def test_c6_no_outages_single_iteration(name):
    inst = bundled(name)
    inst = inst.with_periods(1).replace(n_z=0) if name == "ieee33" else inst.replace(n_z=0)
    res = run_ccg(inst)
    assert res.converged and res.state.iteration == 1


# -- 7 ------------------------------------------------------------------------

@pytest.mark.criterion(7)
@pytest.mark.parametrize("name,T,nz", [("tiny2", 2, 1), ("ring4", 2, 1), ("ring4", 2, 2), ("twin7", 2, 2), ("twin7", 1, 1)])
def test_c7_cross_dominance(name, T, nz):
    cmp = compare(variant(name, T, nz), ccg=CcgParams(epsilon=1e-7), params=EvalParams(samples=2, draws=200))
    assert cmp.dr.wcd <= cmp.ro.wcd + 1e-5
    assert cmp.ro.wcs <= cmp.dr.wcs + 1e-5


# -- 8 ------------------------------------------------------------------------

def spanning_tree_problems(inst, cfg):
    """Union-find check that the built lines plus root arcs form an arborescence of the augmented graph."""
    subs = set(inst.substations)
    built = [e for e, v in enumerate(cfg.y) if v]
    parent = list(range(inst.n_nodes + 1))
    root = inst.n_nodes

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for s in subs:
        parent[s] = root
    problems = []
    indeg = [0] * inst.n_nodes
    for e in built:
        i, j = inst.line_ends[e]
        indeg[j] += 1
        a, b = find(i), find(j)
        if a == b:
            problems.append(f"cycle through line {e}")
        parent[a] = b
    for n in range(inst.n_nodes):
        want = 0 if n in subs else 1
        if indeg[n] != want:
            problems.append(f"node {n} has {indeg[n]} parents")
    if len({find(n) for n in range(inst.n_nodes + 1)}) != 1:
        problems.append("not spanning")
    if sum(inst.lines[e].cost for e in built) > inst.budget_cost * (1 + 1e-9):
        problems.append("line budget exceeded")
    dg = [n for n, v in enumerate(cfg.w) if v]
    if len(dg) > inst.budget_dg or not set(dg) <= set(inst.dg_candidates):
        problems.append(f"bad DG placement {dg}")
    return problems


@pytest.mark.criterion(8)
def test_c8_randomized_master_solves():
    rng = np.random.default_rng(8)
    bases = {name: bundled(name) for name in FIXTURES}
    bases["ieee33"] = bundled("ieee33").with_periods(1)
    scen = {}
    solved = 0
    for k in range(1000):
        name = "ieee33" if k % 10 == 9 else FIXTURES[k % 3]
        inst = bases[name]
        if name != "ieee33":
            inst = inst.with_periods(int(rng.integers(1, 3))).replace(n_z=int(rng.integers(1, 3)))
        cheapest = min_forest(inst)[0]
        inst = inst.replace(
            budget_cost=float(np.ceil(cheapest * rng.uniform(1.0, 1.6))),
            budget_dg=int(rng.integers(0, len(inst.dg_candidates) + 1)),
        )
        key = (name, inst.periods, inst.n_z)
        if key not in scen:
            scen[key] = enumerate_scenarios(inst)
        pool = [ContingencyScenario.all_ones(inst.n_lines, inst.periods)]
        pool += [scen[key][i] for i in rng.choice(len(scen[key]), size=int(rng.integers(1, 4)))]
        mu = rng.uniform(0, 1, size=(inst.n_lines, inst.periods))
        res = solve(build_master(inst, pool, mu, str(rng.choice(["dr", "ro"]))))
        assert res.ok, (k, res.status)
        cfg = Configuration.from_values(inst, res.values)
        assert spanning_tree_problems(inst, cfg) == [], (k, name)
        solved += 1
    assert solved == 1000


# -- 9 ------------------------------------------------------------------------

@pytest.mark.criterion(9)
@pytest.mark.slow
def test_c9_scale_smoke():
    inst = bundled("ieee33").with_periods(6).replace(n_z=3)
    res = run_ccg(inst, params=CcgParams(epsilon=1e-4))
    print(f"33-node T=6 N_z=3: {res.state.iteration} iterations, {res.time_s:.0f} s, gap {res.gap:.2e}")
    assert res.converged
    assert res.state.iteration <= 30
    assert res.time_s <= 1800


@pytest.mark.criterion(9)
@pytest.mark.slow
def test_c9_sweep_monotone():
    inst = bundled("ieee33").with_periods(1)
    rep = sweep(inst, by_grid=budget_grid(inst, [1.0, 1.1]), nz_grid=[1, 2, 3], ccg=CcgParams(epsilon=1e-4))
    assert all(p.status in ("converged", "duplicate") for p in rep.points)
    assert rep.violations == ()


# -- 10 -----------------------------------------------------------------------

COMMANDS = [
    ["plan", "--instance", "ring4", "--epsilon", "1e-7"],
    ["plan", "--instance", "twin7", "--mode", "ro"],
    ["evaluate", "--instance", "twin7", "--samples", "3", "--draws", "200", "--seed", "5"],
    ["compare", "--instance", "ring4", "--samples", "2", "--draws", "200"],
    ["sweep", "--instance", "ring4", "--budget-factors", "1.0,1.3", "--nz", "1,2"],
    ["oracle", "--instance", "twin7"],
    ["generate", "--nodes", "15", "--substations", "1,8", "--periods", "4", "--seed", "9"],
    ["dg-study", "--instance", "ring4", "--trials", "2"],
]


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "timing.csv"}


@pytest.mark.criterion(10)
@pytest.mark.parametrize("argv", COMMANDS, ids=[c[0] + "-" + c[2] if len(c) > 2 else c[0] for c in COMMANDS])
def test_c10_cli_determinism(tmp_path, argv):
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main([*argv, "--out", str(out)]) == 0
        runs.append(snapshot(out))
    assert runs[0].keys() == runs[1].keys() and runs[0]
    for name in runs[0]:
        assert runs[0][name] == runs[1][name], name
