import pytest

from wardmip.model import (DemandTable, Nurse, PolicyConfig, ProblemInstance, ShiftSet,
                           WeightTable, builtin_general_ward, builtin_li2003)


def toy(n_nurses=1, horizon=1, *, ranks=1, demand=None, pref=None, cost=None, mode="maximize_utility",
        nurse_ranks=None, leave=None, required=None, **policy):
    """Small hand-built instance; policy keywords go straight to PolicyConfig."""
    policy.setdefault("max_work_days", horizon)
    policy.setdefault("forbid_night_morning", False)
    nurse_ranks = nurse_ranks or [0] * n_nurses
    leave = leave or {}
    required = required or {}
    nurses = tuple(Nurse(id=f"N{k}", rank=nurse_ranks[k], leave_days=frozenset(leave.get(k, ())),
                         required_shifts=required.get(k)) for k in range(n_nurses))
    return ProblemInstance(
        horizon=horizon, shift_set=ShiftSet(), nurses=nurses, ranks=ranks, wards=1,
        demand=DemandTable(demand or {}), preference=WeightTable(pref or {}),
        cost=WeightTable(cost or {}), policy=PolicyConfig(**policy), objective_mode=mode,
    )


@pytest.fixture(scope="session")
def li():
    return builtin_li2003(0)


@pytest.fixture(scope="session")
def ward():
    return builtin_general_ward(0)


@pytest.fixture(scope="session")
def li_solved(li):
    from wardmip.compile import compile
    from wardmip.solve import solve_ilp
    model = compile(li)
    return model, solve_ilp(model)


@pytest.fixture(scope="session")
def ward_solved(ward):
    from wardmip.compile import compile
    from wardmip.solve import solve_ilp
    model = compile(ward)
    return model, solve_ilp(model)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
