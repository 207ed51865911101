import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import toy
from wardmip.compile import (FAMILIES, CompileError, build_objective, compile, compile_hard, compile_soft,
                             index_of, var_of)
from wardmip.model import random_instance
from wardmip.solve import OPTIMAL, solve_ilp, solve_lp


def test_index_of_examples(ward):
    t = toy(1, 14)
    assert index_of(t, 0, 0, 0) == 0
    assert index_of(ward, 19, 2, 13) == (19 * 3 + 2) * 14 + 13 == 839
    assert index_of(t, 0, 1, 0) == 14


@pytest.mark.parametrize("args,dim", [((20, 0, 0), "nurse"), ((0, 3, 0), "shift"), ((0, 0, -1), "day")])
def test_index_of_names_dimension(ward, args, dim):
    with pytest.raises(IndexError, match=dim):
        index_of(ward, *args)


def test_index_bijection(ward):
    cols = [index_of(ward, *var_of(ward, c)) for c in range(ward.n_cells)]
    assert cols == list(range(ward.n_cells))


def test_general_ward_counts(ward):
    m = compile(ward)
    fc = m.family_counts()
    assert m.n_assignment == m.num_columns == 840
    assert all(m.integer)
    assert fc["C1"] == 280 and fc["C2"] == 20 and fc["C3"] == 200 and fc["C6"] == 260
    assert fc["C4"] == 20 * (14 - 3 - 1 + 1)


def test_li_counts(li):
    m = compile(li)
    assert m.num_columns == 567 and m.n_assignment == 567
    assert m.family_counts()["C6"] == 27 * 6 == 162
    assert m.objective_constant == li.cost.constant()
    assert m.sense == "minimize"


def _policy_strategy(D):
    return st.fixed_dictionaries({
        "window": st.one_of(st.none(), st.integers(1, D).flatmap(lambda W: st.tuples(st.just(W), st.integers(0, W - 1)))),
        "block": st.one_of(st.none(), st.tuples(st.integers(1, 3), st.integers(1, 2))),
        "nm": st.booleans(),
        "pmam": st.booleans(),
        "cap": st.one_of(st.none(), st.integers(0, 3)),
        "maxn": st.one_of(st.none(), st.integers(0, 3)),
    })


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 9).flatmap(lambda D: st.tuples(st.just(D), _policy_strategy(D))))
def test_row_count_formulas(N, dp):
    D, p = dp
    inst = toy(N, D, window_rules=(p["window"],) if p["window"] else (), night_block=p["block"],
               forbid_night_morning=p["nm"], forbid_pm_am_hard=p["pmam"],
               max_consecutive_nights=p["cap"], max_nights=p["maxn"])
    fc = compile(inst).family_counts()
    assert fc.get("C1") == N * D
    assert fc.get("C2") == N
    if p["window"]:
        assert fc.get("C3", 0) == N * (D - p["window"][0] + 1)
    else:
        assert "C3" not in fc
    if p["block"]:
        i, b = p["block"]
        assert fc.get("C4", 0) == N * max(0, D - i - b + 1)
    assert fc.get("C6", 0) == (N * (D - 1) if p["nm"] else 0)
    assert fc.get("C11", 0) == (N * (D - 1) if p["pmam"] else 0)
    if p["cap"] is not None:
        assert fc.get("C12", 0) == N * max(0, D - p["cap"])
    assert fc.get("C2b", 0) == (N if p["maxn"] is not None else 0)
    assert "C5" not in fc and "C10" not in fc


def test_feature_gating_minimal():
    inst = toy(2, 3, demand={(0, 0, 0, 0): 1}, required={0: 2})
    fams = set(compile(inst).family_counts())
    assert fams == {"C1", "C2", "C8", "C10"}


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 3), st.integers(0, 10 ** 6))
def test_tag_completeness(N, D, R, seed):
    inst = random_instance(N, D, ranks=R, seed=seed, density=0.5)
    m = compile(inst)
    fams = set(m.family_counts())
    pol = inst.policy
    assert fams <= set(FAMILIES)
    assert ("C3" in fams) == (bool(pol.window_rules) and N * D > 0)
    assert ("C5" in fams) == any(n.leave_days for n in inst.nurses)
    assert ("C6" in fams) == (pol.forbid_night_morning and D > 1)
    assert ("C11" in fams) == (pol.forbid_pm_am_hard and D > 1)
    assert ("C2b" in fams) == (pol.max_nights is not None)
    assert ("C10" in fams) == any(n.required_shifts is not None for n in inst.nurses)
    assert ("P11" in fams) == (pol.soft_pm_am_weight is not None and D > 1)
    if pol.night_block is None:
        assert "C4" not in fams
    if pol.max_consecutive_nights is None:
        assert "C12" not in fams
    for r in m.rows:
        cols = [c for c, _ in r.terms]
        assert len(cols) == len(set(cols)) and all(0 <= c < m.num_columns for c in cols)
        assert all(v != 0 for _, v in r.terms)


def test_rows_sorted_by_family(ward):
    order = list(FAMILIES)
    fams = [order.index(r.family) for r in compile(ward).rows]
    assert fams == sorted(fams)


def test_compile_deterministic(ward):
    assert compile(ward) == compile(ward)


def test_compile_rejects_invalid():
    inst = toy(1, 2, leave={0: [2]})
    with pytest.raises(CompileError) as exc:
        compile(inst)
    assert exc.value.errors


def test_soft_negative_weight_rejected():
    inst = toy(1, 2, soft_pm_am_weight=-1.0)
    with pytest.raises(CompileError):
        compile_soft(inst)


def test_li_soft_pm_am_columns(li):
    import dataclasses
    inst = dataclasses.replace(li, policy=dataclasses.replace(li.policy, soft_pm_am_weight=2.0))
    m = compile(inst)
    assert m.num_columns - m.n_assignment == 27 * 6 == 162
    assert not any(m.integer[567:])
    assert m.family_counts()["P11"] == 162
    assert compile(li).num_columns == 567


def _pinned_optimum(inst, pins):
    """Solve with the assignment block fixed to ``pins`` and return the penalty values."""
    m = compile(inst)
    lo = np.array(m.lower)
    hi = np.array(m.upper)
    for c, v in pins.items():
        lo[c] = hi[c] = v
    sol = solve_lp(m, lo, hi)
    assert sol.status == OPTIMAL
    return sol.values[m.n_assignment:]


@pytest.mark.parametrize("x1,x2", list(itertools.product((0, 1), repeat=2)))
@pytest.mark.parametrize("mode", ["maximize_utility", "minimize_cost"])
def test_pm_am_truth_table(x1, x2, mode):
    inst = toy(1, 2, soft_pm_am_weight=3.0, mode=mode)
    pins = {c: 0 for c in range(inst.n_cells)}
    pins[index_of(inst, 0, 1, 0)] = x1
    pins[index_of(inst, 0, 0, 1)] = x2
    z = _pinned_optimum(inst, pins)
    assert z.shape == (1,)
    assert z[0] == pytest.approx(x1 * x2, abs=1e-9)


@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_night_run_truth_table(j):
    inst = toy(1, j, soft_night_run=(j, 1.5))
    for bits in itertools.product((0, 1), repeat=j):
        pins = {c: 0 for c in range(inst.n_cells)}
        for d, b in enumerate(bits):
            pins[index_of(inst, 0, 2, d)] = b
        z = _pinned_optimum(inst, pins)
        assert z[0] == pytest.approx(float(all(bits)), abs=1e-9)


def test_night_run_three_days_free_solve():
    # Preferences force nights on days 1-3; the single window penalty must be paid once.
    inst = toy(1, 3, soft_night_run=(3, 1.0), pref={(0, 2, d): 10 for d in range(3)})
    res = solve_ilp(compile(inst))
    assert res.status == OPTIMAL
    assert res.incumbent[inst.n_cells] == pytest.approx(1.0)
    assert res.objective == pytest.approx(29.0)


def test_objective_toy_enumeration():
    inst = toy(1, 1, pref={(0, 0, 0): 5, (0, 1, 0): 2, (0, 2, 0): 1})
    c, const, sense = build_objective(inst)
    assert list(c) == [5, 2, 1] and const == 0 and sense == "maximize"
    # Enumerate the four assignments allowed by the one-shift rule.
    best = max([0.0] + [float(c[s]) for s in range(3)])
    res = solve_ilp(compile(inst))
    assert res.objective == best == 5


def test_objective_zero_pref_any_solution():
    inst = toy(2, 2)
    m = compile(inst)
    for x in itertools.product((0, 1), repeat=2):
        v = np.zeros(m.num_columns)
        v[:2] = x
        assert m.objective_value(v) == 0


def test_li_zero_cost_is_constant(li):
    import dataclasses
    from wardmip.model import WeightTable
    inst = dataclasses.replace(li, cost=WeightTable({}, per_nurse_constant=li.cost.per_nurse_constant))
    m = compile(inst)
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.integers(0, 2, m.num_columns)
        assert m.objective_value(x) == pytest.approx(li.cost.constant())


@pytest.mark.parametrize("mode,sign", [("maximize_utility", -1), ("minimize_cost", 1),
                                       ("penalized_utility", -1), ("penalized_cost", 1)])
def test_penalty_sign(mode, sign):
    inst = toy(1, 2, soft_pm_am_weight=2.0, mode=mode, pref={(0, 0, 0): 1}, cost={(0, 1, 1): 3})
    c, _, sense = build_objective(inst)
    assert c[-1] == sign * 2.0
    assert (sense == "maximize") == (sign < 0)


def test_penalized_objectives():
    inst = toy(1, 1, pref={(0, 0, 0): 4}, cost={(0, 0, 0): 1}, mode="penalized_utility")
    assert build_objective(inst)[0][0] == 3
    inst = toy(1, 1, pref={(0, 0, 0): 4}, cost={(0, 0, 0): 1}, mode="penalized_cost")
    assert build_objective(inst)[0][0] == -3


def test_cascade_rows():
    base = dict(ranks=2, nurse_ranks=[0, 1], demand={(0, 0, 0, 0): 1, (0, 1, 0, 0): 1})
    off = compile_hard(toy(2, 1, cascade_mode="off", **base))
    adj = compile_hard(toy(2, 1, cascade_mode="adjacent", **base))
    assert {r.family for r in off} >= {"C8"} and "C9" not in {r.family for r in off}
    c9 = [r for r in adj if r.family == "C9"]
    assert len(c9) == 3 and c9[0].rhs == 2  # junior row absorbs the senior demand
    assert any(r.family == "C8" and r.tag[1][1] == 1 for r in adj)  # top rank stays plain


def _all_grids(N, D, S=3):
    cells = N * D
    codes = np.arange((S + 1) ** cells)
    powers = (S + 1) ** np.arange(cells - 1, -1, -1)
    return ((codes[:, None] // powers) % (S + 1) - 1).reshape(-1, N, D)


def _compiled_feasible(model, G, S=3):
    """Rows of ``G`` whose assignment (plus minimal penalties) satisfies every compiled row."""
    X = (G[:, :, None, :] == np.arange(S)[None, None, :, None]).reshape(len(G), -1).astype(float)
    full = np.array([model.complete(x) for x in X])
    A, lo, hi = model.matrix()
    ax = (A @ full.T).T
    return np.all((ax >= lo - 1e-9) & (ax <= hi + 1e-9), axis=1)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 2), st.integers(0, 10 ** 6))
def test_monotonicity(N, D, seed):
    """Soft rules leave the assignment feasible set alone; a hard rule can only shrink it."""
    import dataclasses
    inst = random_instance(N, D, seed=seed, rules=False, density=0.3)
    G = _all_grids(N, D)
    base = _compiled_feasible(compile(inst), G)
    soft = dataclasses.replace(inst, policy=dataclasses.replace(inst.policy, soft_pm_am_weight=1.0,
                                                                soft_night_run=(2, 1.0)))
    hard = dataclasses.replace(inst, policy=dataclasses.replace(inst.policy, forbid_night_morning=True,
                                                                max_nights=1))
    assert np.array_equal(_compiled_feasible(compile(soft), G), base)
    assert not np.any(_compiled_feasible(compile(hard), G) & ~base)
