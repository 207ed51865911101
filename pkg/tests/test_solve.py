import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import toy
from wardmip.compile import ConstraintRow, IlpModel, VarRef, compile
from wardmip.model import random_instance
from wardmip.roster import decode, validate
from wardmip.solve import (INFEASIBLE, LIMIT, OPTIMAL, SolverConfig, TooLargeError, brute_force,
                           conflict_families, solve_ilp, solve_lp)


def _model(obj, rows=(), sense="maximize", integer=True):
    n = len(obj)
    return IlpModel(num_columns=n, n_assignment=n, columns=tuple(VarRef("assignment", (i,), i) for i in range(n)),
                    lower=(0.0,) * n, upper=(1.0,) * n, integer=(integer,) * n, rows=tuple(rows),
                    objective=tuple(float(v) for v in obj), objective_constant=0.0, sense=sense)


def _row(cols, sense, rhs, k=0):
    return ConstraintRow(tuple((c, 1.0) for c in cols), sense, float(rhs), ("C1", (k,)))


@pytest.mark.parametrize("engine", ["highs", "simplex"])
def test_lp_no_rows_all_upper(engine):
    sol = solve_lp(_model([1, 2, 3]), engine=engine)
    assert sol.status == OPTIMAL
    assert np.allclose(sol.values, 1.0)


@pytest.mark.parametrize("engine", ["highs", "simplex"])
def test_lp_single_row(engine):
    sol = solve_lp(_model([1, 1], [_row([0, 1], "<=", 1)]), engine=engine)
    assert sol.objective == pytest.approx(1.0)


@pytest.mark.parametrize("engine", ["highs", "simplex"])
def test_lp_infeasible(engine):
    m = _model([1, 1], [_row([0, 1], ">=", 3)])
    assert solve_lp(m, engine=engine).status == INFEASIBLE


def _tiny_models(count):
    for seed in range(count):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        rows = []
        for k in range(int(rng.integers(1, 5))):
            cols = sorted(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False).tolist())
            rows.append(_row(cols, "<=", int(rng.integers(0, len(cols) + 1)), k))
        yield _model(rng.integers(-3, 6, n), rows)


def _enumerate(model):
    n = model.num_columns
    A, lo, hi = model.matrix()
    X = ((np.arange(2 ** n)[:, None] >> np.arange(n)[::-1]) & 1).astype(float)
    ok = np.all((A @ X.T).T <= hi + 1e-9, axis=1) & np.all((A @ X.T).T >= lo - 1e-9, axis=1)
    return (X[ok] @ np.array(model.objective)).max()


def test_lp_bounds_ilp_on_tiny_models():
    for m in _tiny_models(50):
        lp = solve_lp(m)
        best = _enumerate(m)
        assert lp.objective >= best - 1e-9
        res = solve_ilp(m)
        assert res.status == OPTIMAL and res.objective == pytest.approx(best)
        assert res.stats.root_bound >= res.objective - 1e-9


def test_engines_agree():
    for m in _tiny_models(30):
        assert solve_lp(m, engine="simplex").objective == pytest.approx(solve_lp(m).objective, abs=1e-7)
        a, b = solve_ilp(m), solve_ilp(m, SolverConfig(engine="simplex"))
        assert a.objective == pytest.approx(b.objective)


def test_toy_optimum_five():
    inst = toy(1, 1, pref={(0, 0, 0): 5, (0, 1, 0): 2, (0, 2, 0): 1})
    res = solve_ilp(compile(inst))
    assert res.status == OPTIMAL and res.objective == 5
    assert res.stats.nodes <= 3
    assert list(res.assignment) == [1, 0, 0]


def test_pigeonhole_infeasible():
    inst = toy(1, 1, demand={(0, 0, 0, 0): 2})
    res = solve_ilp(compile(inst))
    assert res.status == INFEASIBLE and res.incumbent is None
    assert brute_force(inst).status == INFEASIBLE


def test_certificate_on_builtins(li_solved, ward_solved):
    for model, res in (li_solved, ward_solved):
        assert res.status == OPTIMAL
        assert abs(res.objective - res.bound) <= 1e-6
        assert np.all(np.abs(res.assignment - np.rint(res.assignment)) <= 1e-6)


def test_incumbents_pass_validator(li, li_solved, ward, ward_solved):
    for inst, (_, res) in ((li, li_solved), (ward, ward_solved)):
        rep = validate(inst, decode(inst, res.assignment))
        assert rep.ok
        assert rep.objective_recomputed == pytest.approx(res.objective, abs=1e-6)


def test_determinism(li):
    m = compile(li)
    a, b = solve_ilp(m), solve_ilp(m)
    assert np.array_equal(a.incumbent, b.incumbent)
    assert (a.objective, a.bound, a.stats.nodes) == (b.objective, b.bound, b.stats.nodes)


def test_node_limit_reports_limit(li, li_solved):
    model, full = li_solved
    assert full.stats.nodes > 1
    res = solve_ilp(model, SolverConfig(node_limit=1))
    assert res.status == LIMIT
    assert res.stats.nodes == 1
    # Minimisation: the bound sits below the optimum and any incumbent above it.
    assert res.bound <= full.objective + 1e-9
    if res.incumbent is not None:
        assert res.objective >= full.objective - 1e-9
        assert validate(li, decode(li, res.assignment)).ok


def test_time_limit_reports_limit(ward):
    m = compile(dataclasses.replace(ward, policy=dataclasses.replace(ward.policy, soft_pm_am_weight=1.0)))
    res = solve_ilp(m, SolverConfig(time_limit=1e-6))
    assert res.status in (LIMIT, OPTIMAL)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(feasibility_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(node_limit=0)
    with pytest.raises(ValueError):
        SolverConfig(engine="cplex")
    with pytest.raises(ValueError):
        SolverConfig(node_selection="depth_first")


def test_brute_force_guard():
    with pytest.raises(TooLargeError):
        brute_force(toy(4, 3))  # 4^12 candidates


def test_brute_force_small():
    res = brute_force(toy(2, 2))
    assert res.stats.nodes == 256
    assert res.status == OPTIMAL and res.objective == 0
    assert not res.incumbent.any()  # tie broken toward the all-off roster


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 2), st.integers(0, 10 ** 6))
def test_oracle_equivalence_property(N, D, R, seed):
    inst = random_instance(N, D, ranks=R, seed=seed, density=0.25)
    res, bf = solve_ilp(compile(inst)), brute_force(inst)
    assert res.status == bf.status
    if res.status == OPTIMAL:
        assert res.objective == pytest.approx(bf.objective, abs=1e-9)


def test_conflict_families():
    inst = toy(1, 2, demand={(0, 0, 2, 0): 1, (0, 0, 0, 1): 1}, forbid_night_morning=True)
    m = compile(inst)
    assert solve_ilp(m).status == INFEASIBLE
    assert conflict_families(m) == ["C6", "C8"]
    assert conflict_families(compile(toy(1, 1))) == []
