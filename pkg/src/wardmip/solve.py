"""Exact optimisation of compiled models.

``solve_lp`` solves the continuous relaxation, ``solve_ilp`` runs a
deterministic best-bound branch-and-bound on top of it and ``brute_force``
enumerates every roster of a tiny instance as an independent oracle.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import simplex
from .compile import IlpModel
from .model import ProblemInstance
from .roster import feasible_mask, objective_batch

log = logging.getLogger(__name__)

OPTIMAL, INFEASIBLE, UNBOUNDED, LIMIT = "optimal", "infeasible", "unbounded", "limit_reached"
ENGINES = ("highs", "simplex")


class SolverError(RuntimeError):
    """The LP engine failed numerically; never swallowed into a wrong answer."""


class TooLargeError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-7
    integrality_tol: float = 1e-6
    # Relative gap for general objectives. Integer-valued objectives are pruned
    # on whole units instead, which closes the gap exactly.
    optimality_tol: float = 1e-6
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    engine: str = "highs"
    # The only rules implemented; kept as fields so a config states them.
    branching: str = "most_fractional"      # ties -> lowest column
    node_selection: str = "best_bound"      # ties -> oldest node

    def __post_init__(self):
        for name in ("feasibility_tol", "integrality_tol", "optimality_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node_limit must be > 0")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be > 0")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown LP engine {self.engine!r}")
        if self.branching != "most_fractional":
            raise ValueError(f"unsupported branching rule {self.branching!r}")
        if self.node_selection != "best_bound":
            raise ValueError(f"unsupported node selection {self.node_selection!r}")


@dataclass
class LpSolution:
    status: str
    values: Optional[np.ndarray]
    objective: float
    iterations: int = 0


@dataclass
class SolveStats:
    nodes: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0
    root_bound: float = math.nan


@dataclass
class SolveResult:
    status: str
    incumbent: Optional[np.ndarray]
    objective: float
    bound: float
    stats: SolveStats = field(default_factory=SolveStats)
    n_assignment: Optional[int] = None

    @property
    def assignment(self) -> Optional[np.ndarray]:
        if self.incumbent is None:
            return None
        return self.incumbent[: self.n_assignment]


class _LpData:
    """Matrix form of a model, prepared once per solve."""

    def __init__(self, model: IlpModel):
        A, lo, hi = model.matrix()
        empty = np.diff(A.indptr) == 0
        # Empty rows are dropped; one that demands a nonzero left side is infeasible outright.
        self.trivially_infeasible = bool(np.any(empty & ((lo > 0) | (hi < 0))))
        keep = ~empty
        self.A = A[keep]
        self.lo, self.hi = lo[keep], hi[keep]
        sign = -1.0 if model.sense == "maximize" else 1.0
        self.sign = sign
        self.c = sign * np.asarray(model.objective, float)
        self.constant = model.objective_constant
        ub_rows = np.isfinite(self.hi)
        lb_rows = np.isfinite(self.lo)
        eq = ub_rows & lb_rows & (self.hi == self.lo)
        le = ub_rows & ~eq
        ge = lb_rows & ~eq
        self.A_ub = _vstack(self.A[le], -self.A[ge])
        self.b_ub = np.concatenate([self.hi[le], -self.lo[ge]])
        self.A_eq = self.A[eq] if eq.any() else None
        self.b_eq = self.lo[eq] if eq.any() else None
        self._dense = None

    @property
    def dense(self):
        if self._dense is None:
            self._dense = self.A.toarray()
        return self._dense


def _vstack(a, b):
    if a.shape[0] + b.shape[0] == 0:
        return None
    return sparse.vstack([a, b]).tocsr()


def solve_lp(model: IlpModel, lower=None, upper=None, engine: str = "highs",
             _data: Optional[_LpData] = None) -> LpSolution:
    """Optimal vertex of the LP relaxation, with optional column-bound overrides."""
    data = _data if _data is not None else _LpData(model)
    lb = np.asarray(model.lower if lower is None else lower, float)
    ub = np.asarray(model.upper if upper is None else upper, float)
    if data.trivially_infeasible or np.any(lb > ub):
        return LpSolution(INFEASIBLE, None, math.nan)

    if engine == "simplex":
        try:
            res = simplex.solve(data.c, data.dense, data.lo, data.hi, lb, ub)
        except simplex.SimplexError as exc:
            raise SolverError(str(exc)) from exc
        if res.status != OPTIMAL:
            return LpSolution(res.status, None, math.nan, res.iterations)
        x, its = res.x, res.iterations
    elif engine == "highs":
        res = linprog(data.c, A_ub=data.A_ub, b_ub=data.b_ub, A_eq=data.A_eq, b_eq=data.b_eq,
                      bounds=np.column_stack([lb, ub]), method="highs-ds")
        its = int(getattr(res, "nit", 0) or 0)
        if res.status == 2:
            return LpSolution(INFEASIBLE, None, math.nan, its)
        if res.status == 3:
            return LpSolution(UNBOUNDED, None, math.nan, its)
        if res.status != 0:
            raise SolverError(f"LP engine failed: {res.message}")
        x = np.clip(res.x, lb, ub)
    else:
        raise ValueError(f"unknown LP engine {engine!r}")
    return LpSolution(OPTIMAL, x, model.objective_value(x), its)


def _integral_objective(model: IlpModel) -> bool:
    return all(float(v).is_integer() for v in model.objective)


@dataclass(order=True)
class _Node:
    key: float                   # minus the parent's bound in "gain" units (max gain first)
    seq: int
    fixes: tuple = field(compare=False)  # ((column, value), ...)
    bound: float = field(compare=False)


def solve_ilp(model: IlpModel, config: SolverConfig = SolverConfig()) -> SolveResult:
    """Best-bound branch-and-bound on the most fractional column.

    Ties in node selection go to the oldest node, ties in branching to the
    lowest column, so runs are reproducible node for node.
    """
    t0 = time.perf_counter()
    data = _LpData(model)
    stats = SolveStats()
    int_cols = np.flatnonzero(model.integer)
    lb0 = np.asarray(model.lower, float)
    ub0 = np.asarray(model.upper, float)
    integral = _integral_objective(model)
    const = model.objective_constant
    sign = -data.sign  # gain = sign * (c.x); larger is better

    def gain_of(obj):
        return sign * (obj - const)

    def usable(g):
        # Integer-valued objectives only reach integer gains.
        return math.floor(g + 1e-6) if integral else g

    def improves(bound_gain, inc_gain):
        if inc_gain is None:
            return True
        if integral:
            return bound_gain > inc_gain + 0.5
        return bound_gain > inc_gain + config.optimality_tol * max(1.0, abs(inc_gain))

    def lp(lb, ub):
        sol = solve_lp(model, lb, ub, engine=config.engine, _data=data)
        stats.lp_iterations += sol.iterations
        return sol

    inc_x, inc_gain = None, None
    heap: list[_Node] = [_Node(-math.inf, 0, (), math.inf)]
    seq = 1
    status = OPTIMAL

    while heap:
        if config.node_limit is not None and stats.nodes >= config.node_limit:
            status = LIMIT
            break
        if config.time_limit is not None and time.perf_counter() - t0 > config.time_limit:
            status = LIMIT
            break
        node = heapq.heappop(heap)
        if not improves(node.bound, inc_gain):
            continue
        stats.nodes += 1
        lb, ub = lb0.copy(), ub0.copy()
        for c, v in node.fixes:
            lb[c] = ub[c] = v
        sol = lp(lb, ub)
        if sol.status == UNBOUNDED:
            raise SolverError("LP relaxation is unbounded; 0-1 models never should be")
        if sol.status != OPTIMAL:
            continue
        g = usable(gain_of(sol.objective))
        if stats.nodes == 1:
            stats.root_bound = sol.objective
        if not improves(g, inc_gain):
            continue

        xi = sol.values[int_cols]
        frac = np.abs(xi - np.rint(xi))
        fractional = frac > config.integrality_tol
        if not fractional.any():
            # Fix the integer part and let the continuous columns settle.
            lb[int_cols] = ub[int_cols] = np.rint(xi)
            fixed = lp(lb, ub)
            if fixed.status != OPTIMAL:
                raise SolverError("integral LP point became infeasible after rounding")
            fg = gain_of(fixed.objective)
            if inc_gain is None or fg > inc_gain + 1e-9:
                x = fixed.values.copy()
                x[int_cols] = np.rint(x[int_cols])
                inc_x, inc_gain = x, fg
                log.debug("node %d: incumbent %.6g", stats.nodes, fixed.objective)
            continue

        closeness = np.where(fractional, np.abs(xi - np.floor(xi) - 0.5), np.inf)
        k = int(np.argmin(closeness))  # argmin takes the lowest index on ties
        col = int(int_cols[k])
        first = 1.0 if xi[k] - math.floor(xi[k]) >= 0.5 else 0.0
        for v in (first, 1.0 - first):
            heapq.heappush(heap, _Node(-gain_of(sol.objective), seq, node.fixes + ((col, v),), g))
            seq += 1

    stats.wall_time = time.perf_counter() - t0
    objective = const + sign * inc_gain if inc_gain is not None else math.nan
    if status == LIMIT:
        open_bounds = [n.bound for n in heap if improves(n.bound, inc_gain)]
        best = max(open_bounds, default=-math.inf)
        if inc_gain is not None:
            best = max(best, inc_gain)
        bound = const + sign * best if math.isfinite(best) else sign * math.inf
        if not open_bounds and inc_gain is not None:
            status, bound = OPTIMAL, objective
    elif inc_x is None:
        status, bound = INFEASIBLE, math.nan
    else:
        bound = objective
    return SolveResult(status, inc_x, objective, bound, stats, model.n_assignment)


# ---------------------------------------------------------------------------

BRUTE_FORCE_LIMIT = 10 ** 7


def brute_force(inst: ProblemInstance, chunk: int = 1 << 15) -> SolveResult:
    """Enumerate every roster, keep those the roster checker accepts, pick the best.

    Ties go to the lexicographically smallest assignment vector.
    """
    N, S, D = inst.n_nurses, inst.n_shifts, inst.horizon
    cells = N * D
    total = (S + 1) ** cells
    if total > BRUTE_FORCE_LIMIT:
        raise TooLargeError(f"{total} candidate rosters exceed the enumeration limit {BRUTE_FORCE_LIMIT}")
    maximize = inst.objective_mode in ("maximize_utility", "penalized_utility")
    t0 = time.perf_counter()

    # Cell (n, d) is digit n*D + d, most significant first, so codes enumerate in grid order.
    powers = (S + 1) ** np.arange(cells - 1, -1, -1, dtype=np.int64)
    best_val, best_vecs = None, []
    for start in range(0, total, chunk):
        codes = np.arange(start, min(total, start + chunk), dtype=np.int64)
        G = ((codes[:, None] // powers[None, :]) % (S + 1) - 1).reshape(-1, N, D)
        ok = feasible_mask(inst, G)
        if not ok.any():
            continue
        G = G[ok]
        vals = np.round(objective_batch(inst, G), 9)
        top = vals.max() if maximize else vals.min()
        if best_val is not None and (top < best_val if maximize else top > best_val):
            continue
        winners = G[vals == top]
        vecs = [(w[:, None, :] == np.arange(S)[None, :, None]).astype(np.int8).ravel() for w in winners]
        if best_val is None or top != best_val:
            best_val, best_vecs = top, vecs
        else:
            best_vecs.extend(vecs)

    stats = SolveStats(nodes=total, wall_time=time.perf_counter() - t0)
    if best_val is None:
        return SolveResult(INFEASIBLE, None, math.nan, math.nan, stats, N * S * D)
    best = min(best_vecs, key=lambda v: tuple(v.tolist()))
    return SolveResult(OPTIMAL, best.astype(float), float(best_val), float(best_val), stats, N * S * D)


# ---------------------------------------------------------------------------

def _restrict(model: IlpModel, families: set[str]) -> IlpModel:
    rows = tuple(r for r in model.rows if r.family in families)
    return replace(model, rows=rows, objective=(0.0,) * model.num_columns, objective_constant=0.0)


def conflict_families(model: IlpModel, config: SolverConfig = SolverConfig()) -> list[str]:
    """A minimal set of row families that is infeasible on its own.

    Deletion filter: drop each family in turn and keep it out if what remains
    is still infeasible. Returns ``[]`` when the model is feasible.
    """
    def infeasible(fams):
        sub = _restrict(model, fams)
        if solve_lp(sub, engine=config.engine).status == INFEASIBLE:
            return True
        return solve_ilp(sub, config).status == INFEASIBLE

    keep = []
    for r in model.rows:
        if r.family not in keep:
            keep.append(r.family)
    if not infeasible(set(keep)):
        return []
    for fam in list(keep):
        trial = set(keep) - {fam}
        if infeasible(trial):
            keep.remove(fam)
    return keep
