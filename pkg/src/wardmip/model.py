"""Domain types for ward scheduling instances and the two built-in case studies.

All indices are 0-based here. Day ``d`` runs over ``range(horizon)``, shift
``s`` over ``range(len(shift_set.shifts))``. Ranks are ordered from most
junior (0) to most senior (``ranks - 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

OBJECTIVE_MODES = ("maximize_utility", "minimize_cost", "penalized_utility", "penalized_cost")
COVERAGE_MODES = ("exact", "at_least")
CASCADE_MODES = ("off", "adjacent", "cumulative")


@dataclass(frozen=True)
class ShiftSet:
    shifts: tuple[str, ...] = ("AM", "PM", "MN")
    morning_index: int = 0
    afternoon_index: int = 1
    night_index: int = 2

    def __len__(self) -> int:
        return len(self.shifts)


@dataclass(frozen=True)
class Nurse:
    """A nurse and their personal constraints.

    ``required_shifts`` is either a total shift count over the horizon or a
    mapping shift index -> count (only the listed shift types are pinned).
    """

    id: str
    rank: int = 0
    ward: int = 0
    leave_days: frozenset[int] = frozenset()
    required_shifts: Union[None, int, Mapping[int, int]] = None


@dataclass(frozen=True)
class DemandTable:
    # (ward, rank, shift, day) -> headcount; unlisted cells have demand 0
    entries: Mapping[tuple[int, int, int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", {k: v for k, v in sorted(self.entries.items()) if v != 0})

    def get(self, ward: int, rank: int, shift: int, day: int) -> int:
        return self.entries.get((ward, rank, shift, day), 0)


@dataclass(frozen=True)
class WeightTable:
    """Sparse (nurse, shift, day) -> weight table with a default and per-nurse constants.

    Entries equal to the default are dropped on construction so that two
    tables describing the same weights compare equal.
    """

    values: Mapping[tuple[int, int, int], float] = field(default_factory=dict)
    default: float = 0.0
    per_nurse_constant: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        cleaned = {k: v for k, v in sorted(self.values.items()) if v != self.default}
        object.__setattr__(self, "values", cleaned)
        object.__setattr__(self, "per_nurse_constant", dict(sorted(self.per_nurse_constant.items())))

    def get(self, nurse: int, shift: int, day: int) -> float:
        return self.values.get((nurse, shift, day), self.default)

    def dense(self, n_nurses: int, n_shifts: int, horizon: int) -> np.ndarray:
        out = np.full((n_nurses, n_shifts, horizon), float(self.default))
        for (n, s, d), v in self.values.items():
            out[n, s, d] = v
        return out

    def constant(self) -> float:
        return float(sum(self.per_nurse_constant.values()))


PreferenceTable = WeightTable
CostTable = WeightTable


@dataclass(frozen=True)
class PolicyConfig:
    """Ward policy switches.

    ``night_block = (i, b)``: after ``i`` consecutive nights the next ``b``
    days are off. ``max_nights`` caps the total number of nights per nurse
    over the horizon; ``max_consecutive_nights`` caps night runs.
    """

    max_work_days: int
    window_rules: tuple[tuple[int, int], ...] = ()
    night_block: Optional[tuple[int, int]] = None
    max_consecutive_nights: Optional[int] = None
    max_nights: Optional[int] = None
    forbid_night_morning: bool = True
    forbid_pm_am_hard: bool = False
    soft_pm_am_weight: Optional[float] = None
    soft_night_run: Optional[tuple[int, float]] = None
    coverage_mode: str = "at_least"
    cascade_mode: str = "off"

    @property
    def has_soft_rules(self) -> bool:
        return self.soft_pm_am_weight is not None or self.soft_night_run is not None


@dataclass(frozen=True)
class ProblemInstance:
    horizon: int
    shift_set: ShiftSet
    nurses: tuple[Nurse, ...]
    ranks: int
    wards: int
    demand: DemandTable
    preference: WeightTable
    cost: WeightTable
    policy: PolicyConfig
    objective_mode: str = "maximize_utility"
    name: str = ""

    @property
    def n_nurses(self) -> int:
        return len(self.nurses)

    @property
    def n_shifts(self) -> int:
        return len(self.shift_set)

    @property
    def n_cells(self) -> int:
        return self.n_nurses * self.n_shifts * self.horizon


@dataclass(frozen=True, order=True)
class InstanceError:
    field: str
    index: tuple
    message: str

    def __str__(self) -> str:
        where = f"{self.field}[{', '.join(map(str, self.index))}]" if self.index else self.field
        return f"{where}: {self.message}"


def _finite(x) -> bool:
    try:
        return math.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def _sort_key(v):
    return (0, v, "") if isinstance(v, int) else (1, 0, str(v))


def validate_instance(inst: ProblemInstance) -> list[InstanceError]:
    """Return every structural problem with ``inst``; an empty list means valid."""
    errs: list[InstanceError] = []

    def err(fld, idx, msg):
        errs.append(InstanceError(fld, tuple(idx), msg))

    D = inst.horizon
    ss = inst.shift_set
    S = len(ss.shifts)
    pol = inst.policy

    if D < 1:
        err("horizon", (), f"must be >= 1, got {D}")
    if inst.ranks < 1:
        err("ranks", (), f"must be >= 1, got {inst.ranks}")
    if inst.wards < 1:
        err("wards", (), f"must be >= 1, got {inst.wards}")
    if inst.objective_mode not in OBJECTIVE_MODES:
        err("objective_mode", (), f"unknown mode {inst.objective_mode!r}")

    if S < 1:
        err("shift_set", (), "at least one shift is required")
    if len(set(ss.shifts)) != S:
        err("shift_set", (), "shift labels must be unique")
    for name in ("morning_index", "afternoon_index", "night_index"):
        v = getattr(ss, name)
        if not 0 <= v < max(S, 1):
            err("shift_set", (name,), f"index {v} out of range for {S} shifts")
    night_rules = pol.forbid_night_morning
    if night_rules and ss.morning_index == ss.night_index:
        err("shift_set", ("night_index",), "morning and night shift coincide while the night->morning ban is on")
    pm_rules = pol.forbid_pm_am_hard or pol.soft_pm_am_weight is not None
    if pm_rules and ss.morning_index == ss.afternoon_index:
        err("shift_set", ("afternoon_index",), "morning and afternoon shift coincide while a PM->AM rule is on")

    seen: dict[str, int] = {}
    for i, nurse in enumerate(inst.nurses):
        if nurse.id in seen:
            err("nurses", (i,), f"duplicate nurse id {nurse.id!r} (first at {seen[nurse.id]})")
        else:
            seen[nurse.id] = i
        if not 0 <= nurse.rank < inst.ranks:
            err("nurses", (i, "rank"), f"rank {nurse.rank} out of range [0, {inst.ranks})")
        if not 0 <= nurse.ward < inst.wards:
            err("nurses", (i, "ward"), f"ward {nurse.ward} out of range [0, {inst.wards})")
        for d in sorted(nurse.leave_days):
            if not 0 <= d < D:
                err("nurses", (i, "leave_days"), f"leave day {d} out of range [0, {D})")
        req = nurse.required_shifts
        if isinstance(req, Mapping):
            for s, c in sorted(req.items()):
                if not 0 <= s < S:
                    err("nurses", (i, "required_shifts"), f"shift {s} out of range")
                if c < 0:
                    err("nurses", (i, "required_shifts"), f"negative count {c} for shift {s}")
            if sum(req.values()) > D:
                err("nurses", (i, "required_shifts"), f"total {sum(req.values())} exceeds horizon {D}")
        elif req is not None:
            if req < 0:
                err("nurses", (i, "required_shifts"), f"negative count {req}")
            elif req > D:
                err("nurses", (i, "required_shifts"), f"total {req} exceeds horizon {D}")

    for key, v in sorted(inst.demand.entries.items()):
        w, r, s, d = key
        if not (0 <= w < inst.wards and 0 <= r < inst.ranks and 0 <= s < S and 0 <= d < D):
            err("demand", key, "index out of range")
        if int(v) != v or v < 0:
            err("demand", key, f"demand must be a non-negative integer, got {v}")

    N = inst.n_nurses
    for tname in ("preference", "cost"):
        table: WeightTable = getattr(inst, tname)
        if not _finite(table.default):
            err(tname, ("default",), "default must be finite")
        for key, v in table.values.items():
            n, s, d = key
            if not (0 <= n < N and 0 <= s < S and 0 <= d < D):
                err(tname, key, "index out of range")
            if not _finite(v):
                err(tname, key, "value must be finite")
        for n, v in table.per_nurse_constant.items():
            if not 0 <= n < N:
                err(tname, ("per_nurse_constant", n), "nurse index out of range")
            if not _finite(v):
                err(tname, ("per_nurse_constant", n), "value must be finite")

    if not 0 <= pol.max_work_days <= max(D, 0):
        err("policy", ("max_work_days",), f"must lie in [0, {D}], got {pol.max_work_days}")
    for k, (W, m) in enumerate(pol.window_rules):
        if not (0 <= m < W <= D):
            err("policy", ("window_rules", k), f"need 0 <= max_worked < window <= horizon, got ({W}, {m})")
    if pol.night_block is not None:
        i, b = pol.night_block
        if i < 1 or b < 1:
            err("policy", ("night_block",), f"need nights >= 1 and off days >= 1, got ({i}, {b})")
    if pol.max_consecutive_nights is not None and pol.max_consecutive_nights < 0:
        err("policy", ("max_consecutive_nights",), "must be >= 0")
    if pol.max_nights is not None and pol.max_nights < 0:
        err("policy", ("max_nights",), "must be >= 0")
    if pol.soft_pm_am_weight is not None and not (_finite(pol.soft_pm_am_weight) and pol.soft_pm_am_weight >= 0):
        err("policy", ("soft_pm_am_weight",), "weight must be finite and >= 0")
    if pol.soft_night_run is not None:
        j, wgt = pol.soft_night_run
        if j < 1:
            err("policy", ("soft_night_run",), f"run length must be >= 1, got {j}")
        if not (_finite(wgt) and wgt >= 0):
            err("policy", ("soft_night_run",), "weight must be finite and >= 0")
    if pol.coverage_mode not in COVERAGE_MODES:
        err("policy", ("coverage_mode",), f"unknown coverage mode {pol.coverage_mode!r}")
    if pol.cascade_mode not in CASCADE_MODES:
        err("policy", ("cascade_mode",), f"unknown cascade mode {pol.cascade_mode!r}")

    return sorted(errs, key=lambda e: (e.field, tuple(_sort_key(i) for i in e.index)))


@dataclass(frozen=True)
class CapacityReport:
    total_demand: int
    total_capacity: int
    per_day_gap: dict[int, int]  # day -> (demand - available nurses), only positive gaps

    @property
    def ok(self) -> bool:
        return not self.per_day_gap and self.total_demand <= self.total_capacity


def capacity_screen(inst: ProblemInstance) -> CapacityReport:
    """Cheap necessary conditions for feasibility."""
    D = inst.horizon
    y = inst.policy.max_work_days
    capacity = sum(min(y, D - len(n.leave_days)) for n in inst.nurses)
    total = int(sum(inst.demand.entries.values()))
    per_day = [0] * D
    for (w, r, s, d), v in inst.demand.entries.items():
        per_day[d] += int(v)
    gaps = {}
    for d in range(D):
        available = sum(1 for n in inst.nurses if d not in n.leave_days)
        if per_day[d] > available:
            gaps[d] = per_day[d] - available
    return CapacityReport(total, capacity, gaps)


# ---------------------------------------------------------------------------
# Built-in instances

GENERAL_WARD_SENIORS = 8
GENERAL_WARD_JUNIORS = 12


def builtin_general_ward(seed: int = 0) -> ProblemInstance:
    """20 nurses, 14 days, senior/junior ranks in one ward.

    Demand, preferences, leave and required shift totals are synthesized
    from ``seed``; the policy values are fixed. Seniors are rank 1 and may
    cover junior demand.
    """
    rng = np.random.default_rng([seed, 14])
    D, S = 14, 3
    n_sen, n_jun = GENERAL_WARD_SENIORS, GENERAL_WARD_JUNIORS
    ranks = [1] * n_sen + [0] * n_jun

    # Per-day headcount for (rank, shift): juniors AM/PM/MN, seniors AM/PM/MN.
    demand = {}
    for d in range(D):
        weekend = d % 7 >= 5
        jun = (3, 2, 1) if not weekend else (2, 2, 1)
        sen = (2, 1, 1) if not weekend else (1, 1, 1)
        bump = int(rng.integers(0, 3))  # 0: none, 1: extra junior AM, 2: extra senior PM
        for s in range(S):
            demand[(0, 0, s, d)] = jun[s] + (1 if bump == 1 and s == 0 and not weekend else 0)
            demand[(0, 1, s, d)] = sen[s] + (1 if bump == 2 and s == 1 and not weekend else 0)

    nurses = []
    for k, r in enumerate(ranks):
        leave = set()
        if rng.random() < 0.3:
            start = int(rng.integers(0, D - 1))
            leave.update(range(start, min(D, start + int(rng.integers(1, 3)))))
        # Required shifts stay well below the 4-in-5 window and 11-day caps.
        req = int(rng.integers(8, 10)) - len(leave) // 2
        nurses.append(Nurse(id=f"{'S' if r == 1 else 'J'}{k + 1:02d}", rank=r, ward=0,
                            leave_days=frozenset(leave), required_shifts=req))

    pref = {}
    base = rng.integers(0, 4, size=(len(ranks), S, D))
    for n in range(len(ranks)):
        for s in range(S):
            for d in range(D):
                pref[(n, s, d)] = int(base[n, s, d])

    policy = PolicyConfig(
        max_work_days=11,
        window_rules=((5, 4),),
        night_block=(3, 1),
        forbid_night_morning=True,
        coverage_mode="at_least",
        cascade_mode="adjacent",
    )
    inst = ProblemInstance(
        horizon=D,
        shift_set=ShiftSet(),
        nurses=tuple(nurses),
        ranks=2,
        wards=1,
        demand=DemandTable(demand),
        preference=WeightTable(pref),
        cost=WeightTable(),
        policy=policy,
        objective_mode="maximize_utility",
        name=f"general-ward-{seed}",
    )
    return inst


LI_DEMAND = (6, 6, 3)


def builtin_li2003(seed: int = 0) -> ProblemInstance:
    """27 nurses over one week, cost objective with a per-nurse constant.

    Coverage is exactly 6/6/3 (AM/PM/MN) every day; each nurse works at most
    five days and at most one night.
    """
    rng = np.random.default_rng([seed, 7])
    N, D, S = 27, 7, 3
    demand = {(0, 0, s, d): LI_DEMAND[s] for d in range(D) for s in range(S)}

    nurses = []
    on_leave = set(rng.choice(N, size=4, replace=False).tolist())
    for n in range(N):
        leave = frozenset()
        if n in on_leave:
            start = int(rng.integers(0, D))
            leave = frozenset(range(start, min(D, start + int(rng.integers(1, 3)))))
        nurses.append(Nurse(id=f"N{n + 1:02d}", leave_days=leave))

    costs = rng.integers(0, 6, size=(N, S, D))
    cost_vals = {(n, s, d): int(costs[n, s, d]) for n in range(N) for s in range(S) for d in range(D)}
    constants = {n: int(v) for n, v in enumerate(rng.integers(20, 40, size=N))}

    policy = PolicyConfig(
        max_work_days=5,
        max_nights=1,
        forbid_night_morning=True,
        coverage_mode="exact",
        cascade_mode="off",
    )
    return ProblemInstance(
        horizon=D,
        shift_set=ShiftSet(),
        nurses=tuple(nurses),
        ranks=1,
        wards=1,
        demand=DemandTable(demand),
        preference=WeightTable(),
        cost=WeightTable(cost_vals, per_nurse_constant=constants),
        policy=policy,
        objective_mode="minimize_cost",
        name=f"li2003-{seed}",
    )


def random_instance(n_nurses: int, horizon: int, ranks: int = 1, density: float = 0.5,
                    seed: int = 0, max_work_days: Optional[int] = None,
                    rules: bool = True) -> ProblemInstance:
    """Small random instance for oracle testing and ``wardmip gen``.

    With ``rules`` on, the optional policy families are switched on at random
    so that every family gets exercised across seeds.
    """
    if n_nurses < 1 or horizon < 1 or ranks < 1:
        raise ValueError("n_nurses, horizon and ranks must be positive")
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    y = horizon if max_work_days is None else max_work_days
    if not 0 <= y <= horizon:
        raise ValueError(f"max_work_days {y} must lie in [0, horizon={horizon}]")

    rng = np.random.default_rng([seed, n_nurses, horizon, ranks])
    S = 3
    nurse_ranks = sorted(int(r) for r in rng.integers(0, ranks, size=n_nurses))
    nurses = []
    for k in range(n_nurses):
        leave = frozenset()
        if rules and rng.random() < 0.25:
            leave = frozenset({int(rng.integers(0, horizon))})
        req = None
        if rules and rng.random() < 0.2:
            if rng.random() < 0.5:
                req = int(rng.integers(0, horizon - len(leave) + 1))
            else:
                req = {int(rng.integers(0, S)): int(rng.integers(0, 2))}
        nurses.append(Nurse(id=f"N{k + 1}", rank=nurse_ranks[k], leave_days=leave, required_shifts=req))

    demand = {}
    for r in range(ranks):
        at_rank = sum(1 for x in nurse_ranks if x == r)
        if at_rank == 0:
            continue
        for s in range(S):
            for d in range(horizon):
                if rng.random() < density:
                    demand[(0, r, s, d)] = int(rng.integers(1, max(1, at_rank) + 1))

    pref = rng.integers(-2, 5, size=(n_nurses, S, horizon))
    cost = rng.integers(0, 5, size=(n_nurses, S, horizon))
    P = WeightTable({(n, s, d): int(pref[n, s, d]) for n in range(n_nurses)
                     for s in range(S) for d in range(horizon)})
    C = WeightTable({(n, s, d): int(cost[n, s, d]) for n in range(n_nurses)
                     for s in range(S) for d in range(horizon)},
                    per_nurse_constant={n: int(rng.integers(0, 10)) for n in range(n_nurses)})

    pol = dict(max_work_days=y, forbid_night_morning=False, coverage_mode="at_least", cascade_mode="off")
    if rules:
        def coin(p=0.4):
            return bool(rng.random() < p)

        if horizon >= 2 and coin():
            W = int(rng.integers(2, horizon + 1))
            pol["window_rules"] = ((W, int(rng.integers(1, W))),)
        if coin():
            pol["night_block"] = (int(rng.integers(1, 3)), 1)
        if coin(0.3):
            pol["max_consecutive_nights"] = int(rng.integers(1, 3))
        if coin(0.3):
            pol["max_nights"] = int(rng.integers(1, 3))
        pol["forbid_night_morning"] = coin(0.5)
        pol["forbid_pm_am_hard"] = coin(0.2)
        if coin():
            pol["soft_pm_am_weight"] = int(rng.integers(0, 4))
        if coin():
            pol["soft_night_run"] = (int(rng.integers(1, 3)), int(rng.integers(0, 4)))
        pol["coverage_mode"] = "exact" if coin(0.3) else "at_least"
        if ranks > 1:
            pol["cascade_mode"] = CASCADE_MODES[int(rng.integers(0, 3))]
    mode = OBJECTIVE_MODES[int(rng.integers(0, 4))] if rules else "maximize_utility"

    return ProblemInstance(
        horizon=horizon,
        shift_set=ShiftSet(),
        nurses=tuple(nurses),
        ranks=ranks,
        wards=1,
        demand=DemandTable(demand),
        preference=P,
        cost=C,
        policy=PolicyConfig(**pol),
        objective_mode=mode,
        name=f"random-{n_nurses}x{horizon}-{seed}",
    )
