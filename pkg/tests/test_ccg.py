import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridplan.ccg import (
    CcgParams,
    InfeasibleInstance,
    extract_worst_case_distribution,
    run_ccg,
    solve_subproblem,
    worst_case_expectation,
)
from gridplan.formulations import Configuration
from gridplan.grid import bundled
from gridplan.oracle import ShedTable, enumerate_trees, exact_plan, exact_worst_case_expectation
from gridplan.scenarios import AmbiguitySet, enumerate_scenarios


def assert_trace_sound(res, oracle=None):
    hist = res.state.history
    for a, b in zip(hist, hist[1:]):
        assert b.lb >= a.lb - 1e-9
        assert b.ub <= a.ub + 1e-9
    for h in hist:
        assert h.lb <= h.ub + 1e-6
        if oracle is not None:
            assert h.lb - 1e-6 <= oracle <= h.ub + 1e-6


@pytest.mark.parametrize("name", ["ring4", "twin7"])
@pytest.mark.parametrize("mode", ["dr", "ro"])
def test_bounds_bracket_the_oracle_every_iteration(name, mode):
    inst = bundled(name)
    oracle = exact_plan(inst, mode=mode).objective
    for seed_pool in ("ones", "singles"):
        res = run_ccg(inst, params=CcgParams(epsilon=1e-7, mode=mode, seed_pool=seed_pool))
        assert res.converged
        assert_trace_sound(res, oracle)
        assert res.objective == pytest.approx(oracle, rel=1e-5)


def test_ones_seeding_needs_more_iterations(twin7):
    a = run_ccg(twin7, params=CcgParams(epsilon=1e-7, seed_pool="ones"))
    b = run_ccg(twin7, params=CcgParams(epsilon=1e-7, seed_pool="singles"))
    assert a.objective == pytest.approx(b.objective, rel=1e-6)
    assert b.state.iteration <= a.state.iteration


@given(seed=st.integers(0, 10**6))
@settings(max_examples=10)
def test_subproblem_finds_the_worst_scenario(seed):
    inst = bundled("twin7")
    rng = np.random.default_rng(seed)
    trees = enumerate_trees(inst)
    cfg = Configuration.from_tree(inst, trees[rng.integers(len(trees))], [inst.dg_candidates[rng.integers(2)]])
    beta = rng.uniform(0, 80, size=(inst.n_lines, inst.periods)) * (rng.uniform(size=(inst.n_lines, inst.periods)) < 0.5)
    sub = solve_subproblem(inst, cfg, beta)
    table = ShedTable(inst, cfg)
    best = max(table(z) + float((beta * z.z).sum()) for z in enumerate_scenarios(inst))
    assert sub.value == pytest.approx(best, rel=1e-7, abs=1e-6)
    assert sub.shed == pytest.approx(table(sub.scenario), abs=1e-6)


def test_fixed_design_matches_moment_lp(twin7):
    cfg = Configuration.from_tree(twin7, enumerate_trees(twin7)[3], [6])
    res = worst_case_expectation(twin7, cfg)
    assert res.config == cfg
    assert res.objective == pytest.approx(exact_worst_case_expectation(twin7, cfg).value, rel=1e-5)


def test_worst_case_distribution(ring4):
    res = run_ccg(ring4, params=CcgParams(epsilon=1e-7))
    wcd = extract_worst_case_distribution(ring4, res)
    amb = AmbiguitySet.from_instance(ring4)
    assert (wcd.probs >= 0).all()
    assert wcd.probs.sum() == pytest.approx(1.0, abs=1e-9)
    assert wcd.as_distribution().problems(ring4, amb) == []
    table = ShedTable(ring4, res.config)
    assert float(sum(p * table(z) for z, p in zip(wcd.support, wcd.probs))) == pytest.approx(res.objective, abs=1e-5)
    text = wcd.table(ring4)
    assert "Probability" in text and "expected shed" in text


def test_ro_has_no_distribution(ring4):
    res = run_ccg(ring4, params=CcgParams(mode="ro"))
    with pytest.raises(ValueError):
        extract_worst_case_distribution(ring4, res)


def test_infeasible_budget(ring4):
    with pytest.raises(InfeasibleInstance):
        run_ccg(ring4.replace(budget_cost=10.0))


def test_iteration_cap_reports_status(twin7):
    res = run_ccg(twin7.replace(n_z=2), params=CcgParams(mode="ro", max_iter=1, epsilon=1e-9, seed_pool="ones"))
    assert res.status == "max_iter" and not res.converged
    assert math.isfinite(res.gap)


def test_parameter_validation(ring4):
    with pytest.raises(ValueError):
        run_ccg(ring4, params=CcgParams(mode="xx"))
    with pytest.raises(ValueError):
        run_ccg(ring4, params=CcgParams(epsilon=0.0))
    with pytest.raises(ValueError):
        run_ccg(ring4, params=CcgParams(seed_pool="many"))


def test_zero_outage_budget_converges_at_once(twin7):
    res = run_ccg(twin7.replace(n_z=0))
    assert res.state.iteration == 1 and res.status == "converged"
