"""Translate a :class:`ProblemInstance` into a tagged sparse 0-1 ILP.

Columns: the assignment block ``x[n, s, d]`` comes first in nurse-major,
shift, day order; penalty columns for soft rules follow. Every row carries a
``(family, index)`` tag so the row set can be audited family by family.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

from .model import ProblemInstance, validate_instance

LE, EQ, GE = "<=", "=", ">="

# Row families in emission order, with the names of their index fields.
FAMILIES: dict[str, tuple[str, ...]] = {
    "C1": ("n", "d"),          # one shift per day
    "C2": ("n",),              # max worked days over the horizon
    "C2b": ("n",),             # max nights over the horizon
    "C3": ("k", "n", "d"),     # sliding-window rest, rule k starting at day d
    "C4": ("n", "d"),          # night block followed by off days, block starting at d
    "C5": ("n", "d"),          # leave
    "C6": ("n", "d"),          # night on d then morning on d+1
    "C8": ("w", "r", "s", "d"),  # coverage
    "C9": ("w", "r", "s", "d"),  # coverage with senior cascade
    "C10": ("n", "s"),         # required shift counts; s = -1 for the total form
    "C11": ("n", "d"),         # afternoon on d then morning on d+1 (hard)
    "C12": ("n", "d"),         # night runs longer than the cap (hard), window start d
    "P11": ("n", "d"),         # penalty link: afternoon -> morning
    "P12": ("n", "d"),         # penalty link: night run starting at d
}
FAMILY_ORDER = {f: i for i, f in enumerate(FAMILIES)}


class CompileError(ValueError):
    """The instance cannot be compiled (structural errors or bad soft-rule weights)."""

    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)


@dataclass(frozen=True)
class VarRef:
    kind: str      # "assignment" or "penalty"
    key: tuple     # (nurse, shift, day) or (pattern family, nurse, day)
    column: int


@dataclass(frozen=True)
class ConstraintRow:
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    tag: tuple[str, tuple]

    @property
    def family(self) -> str:
        return self.tag[0]

    def name(self) -> str:
        fam, idx = self.tag
        return fam + "".join(f"_{f}{v}" for f, v in zip(FAMILIES[fam], idx))


def _row(coefs: Mapping[int, float], sense: str, rhs: float, family: str, index: tuple) -> ConstraintRow:
    terms = tuple((c, float(v)) for c, v in sorted(coefs.items()) if v != 0)
    return ConstraintRow(terms, sense, float(rhs), (family, tuple(index)))


def _sum_row(cols: Iterable[int], sense: str, rhs: float, family: str, index: tuple) -> ConstraintRow:
    coefs: dict[int, float] = {}
    for c in cols:
        coefs[c] = coefs.get(c, 0.0) + 1.0
    return _row(coefs, sense, rhs, family, index)


@dataclass(frozen=True)
class IlpModel:
    num_columns: int
    n_assignment: int
    columns: tuple[VarRef, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    integer: tuple[bool, ...]
    rows: tuple[ConstraintRow, ...]
    objective: tuple[float, ...]
    objective_constant: float
    sense: str  # "maximize" or "minimize"

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.family] = out.get(r.family, 0) + 1
        return out

    def rows_of(self, family: str) -> list[ConstraintRow]:
        return [r for r in self.rows if r.family == family]

    def matrix(self) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        """Return ``(A, row_lo, row_hi)`` with ``row_lo <= A x <= row_hi``."""
        data, ind, ptr = [], [], [0]
        lo = np.empty(len(self.rows))
        hi = np.empty(len(self.rows))
        for i, r in enumerate(self.rows):
            for c, v in r.terms:
                ind.append(c)
                data.append(v)
            ptr.append(len(ind))
            lo[i] = r.rhs if r.sense in (EQ, GE) else -np.inf
            hi[i] = r.rhs if r.sense in (EQ, LE) else np.inf
        A = sparse.csr_matrix((np.asarray(data, float), np.asarray(ind, int), np.asarray(ptr, int)),
                              shape=(len(self.rows), self.num_columns))
        return A, lo, hi

    def objective_value(self, x) -> float:
        return float(np.dot(self.objective, np.asarray(x, float)) + self.objective_constant)

    def violated_rows(self, x, tol: float = 1e-7) -> list[tuple[str, tuple]]:
        """Tags of rows (and ``("bounds", (col,))`` entries) that ``x`` violates."""
        x = np.asarray(x, float)
        out = [("bounds", (int(c),)) for c in np.flatnonzero(
            (x < np.asarray(self.lower) - tol) | (x > np.asarray(self.upper) + tol))]
        A, lo, hi = self.matrix()
        ax = A @ x
        bad = np.flatnonzero((ax < lo - tol) | (ax > hi + tol))
        out += [self.rows[i].tag for i in bad]
        return out

    def complete(self, assignment) -> np.ndarray:
        """Extend an assignment block with the smallest feasible penalty values."""
        assignment = np.asarray(assignment, float)
        if assignment.shape != (self.n_assignment,):
            raise ValueError(f"expected {self.n_assignment} assignment values, got {assignment.shape}")
        x = np.zeros(self.num_columns)
        x[: self.n_assignment] = assignment
        for r in self.rows:
            if r.family not in ("P11", "P12"):
                continue
            # sum(x) - z <= rhs  =>  z >= sum(x) - rhs
            zc = [c for c, v in r.terms if c >= self.n_assignment]
            (z,) = zc
            need = sum(v * x[c] for c, v in r.terms if c != z) - r.rhs
            x[z] = min(self.upper[z], max(self.lower[z], need))
        return x


def index_of(inst: ProblemInstance, nurse: int, shift: int, day: int) -> int:
    """Column of ``x[nurse, shift, day]``."""
    N, S, D = inst.n_nurses, inst.n_shifts, inst.horizon
    for name, v, size in (("nurse", nurse, N), ("shift", shift, S), ("day", day, D)):
        if not 0 <= v < size:
            raise IndexError(f"{name} index {v} out of range [0, {size})")
    return (nurse * S + shift) * D + day


def var_of(inst: ProblemInstance, column: int) -> tuple[int, int, int]:
    """Inverse of :func:`index_of` over the assignment block."""
    S, D = inst.n_shifts, inst.horizon
    if not 0 <= column < inst.n_cells:
        raise IndexError(f"column {column} outside the assignment block [0, {inst.n_cells})")
    ns, d = divmod(column, D)
    n, s = divmod(ns, S)
    return n, s, d


def _x(inst: ProblemInstance):
    S, D = inst.n_shifts, inst.horizon
    return lambda n, s, d: (n * S + s) * D + d


def compile_hard(inst: ProblemInstance) -> list[ConstraintRow]:
    """Hard constraint rows for every enabled policy family, in family order."""
    x = _x(inst)
    N, S, D = inst.n_nurses, inst.n_shifts, inst.horizon
    ss, pol = inst.shift_set, inst.policy
    AM, PM, MN = ss.morning_index, ss.afternoon_index, ss.night_index
    rows: list[ConstraintRow] = []

    for n in range(N):
        for d in range(D):
            rows.append(_sum_row((x(n, s, d) for s in range(S)), LE, 1, "C1", (n, d)))

    for n in range(N):
        rows.append(_sum_row((x(n, s, d) for s in range(S) for d in range(D)), LE,
                             pol.max_work_days, "C2", (n,)))

    if pol.max_nights is not None:
        for n in range(N):
            rows.append(_sum_row((x(n, MN, d) for d in range(D)), LE, pol.max_nights, "C2b", (n,)))

    for k, (W, m) in enumerate(pol.window_rules):
        for n in range(N):
            for d in range(D - W + 1):
                cols = (x(n, s, t) for t in range(d, d + W) for s in range(S))
                rows.append(_sum_row(cols, LE, m, "C3", (k, n, d)))

    if pol.night_block is not None:
        i, b = pol.night_block
        for n in range(N):
            for j in range(D - i - b + 1):
                cols = [x(n, MN, t) for t in range(j, j + i)]
                cols += [x(n, s, t) for t in range(j + i, j + i + b) for s in range(S)]
                rows.append(_sum_row(cols, LE, i, "C4", (n, j)))

    for n, nurse in enumerate(inst.nurses):
        for d in sorted(nurse.leave_days):
            rows.append(_sum_row((x(n, s, d) for s in range(S)), LE, 0, "C5", (n, d)))

    if pol.forbid_night_morning:
        for n in range(N):
            for d in range(D - 1):
                rows.append(_sum_row((x(n, AM, d + 1), x(n, MN, d)), LE, 1, "C6", (n, d)))

    rows.extend(_coverage_rows(inst))

    for n, nurse in enumerate(inst.nurses):
        req = nurse.required_shifts
        if req is None:
            continue
        if isinstance(req, Mapping):
            for s, count in sorted(req.items()):
                rows.append(_sum_row((x(n, s, d) for d in range(D)), EQ, count, "C10", (n, s)))
        else:
            rows.append(_sum_row((x(n, s, d) for s in range(S) for d in range(D)), EQ, req, "C10", (n, -1)))

    if pol.forbid_pm_am_hard:
        for n in range(N):
            for d in range(D - 1):
                rows.append(_sum_row((x(n, PM, d), x(n, AM, d + 1)), LE, 1, "C11", (n, d)))

    if pol.max_consecutive_nights is not None:
        m = pol.max_consecutive_nights
        for n in range(N):
            for d in range(D - m):
                rows.append(_sum_row((x(n, MN, t) for t in range(d, d + m + 1)), LE, m, "C12", (n, d)))

    return rows


def _coverage_rows(inst: ProblemInstance) -> list[ConstraintRow]:
    x = _x(inst)
    S, D, R = inst.n_shifts, inst.horizon, inst.ranks
    pol = inst.policy
    at = {}
    for n, nurse in enumerate(inst.nurses):
        at.setdefault((nurse.ward, nurse.rank), []).append(n)

    def supply(w, ranks, s, d):
        return [x(n, s, d) for r in ranks for n in at.get((w, r), ())]

    def demand(w, ranks, s, d):
        return sum(inst.demand.get(w, r, s, d) for r in ranks)

    plain_sense = EQ if pol.coverage_mode == "exact" else GE
    rows = []
    for w in range(inst.wards):
        for r in range(R):
            for s in range(S):
                for d in range(D):
                    if pol.cascade_mode == "off" or R == 1:
                        group, fam, sense = [r], "C8", plain_sense
                    elif r == R - 1:
                        # Nobody above the top rank; surplus there may cascade down.
                        group, fam, sense = [r], "C8", GE
                    elif pol.cascade_mode == "adjacent":
                        group, fam, sense = [r, r + 1], "C9", GE
                    else:
                        group, fam, sense = list(range(r, R)), "C9", GE
                    rows.append(_sum_row(supply(w, group, s, d), sense, demand(w, group, s, d),
                                         fam, (w, r, s, d)))
    rows.sort(key=lambda row: FAMILY_ORDER[row.family])
    return rows


def compile_soft(inst: ProblemInstance, first_column: int | None = None):
    """Penalty columns, their linking rows and objective terms for the soft rules.

    Each penalty column ``z`` in ``[0, 1]`` is tied to its pattern by
    ``sum(pattern x) - z <= len(pattern) - 1``; with the weight signed against
    the optimisation direction, an optimal solution has ``z`` equal to the AND
    of the pattern variables.
    """
    x = _x(inst)
    N, D = inst.n_nurses, inst.horizon
    ss, pol = inst.shift_set, inst.policy
    col = inst.n_cells if first_column is None else first_column
    sign = -1.0 if _sense(inst) == "maximize" else 1.0

    columns: list[VarRef] = []
    rows: list[ConstraintRow] = []
    terms: list[tuple[int, float]] = []

    if pol.soft_pm_am_weight is not None:
        wgt = float(pol.soft_pm_am_weight)
        if wgt < 0:
            raise CompileError(f"soft PM->AM weight must be >= 0, got {wgt}")
        for n in range(N):
            for d in range(D - 1):
                columns.append(VarRef("penalty", ("P11", n, d), col))
                coefs = {x(n, ss.afternoon_index, d): 1.0, x(n, ss.morning_index, d + 1): 1.0, col: -1.0}
                rows.append(_row(coefs, LE, 1, "P11", (n, d)))
                terms.append((col, sign * wgt))
                col += 1

    if pol.soft_night_run is not None:
        j, wgt = pol.soft_night_run
        wgt = float(wgt)
        if wgt < 0:
            raise CompileError(f"soft night-run weight must be >= 0, got {wgt}")
        for n in range(N):
            for d in range(D - j + 1):
                columns.append(VarRef("penalty", ("P12", n, d), col))
                coefs = {x(n, ss.night_index, t): 1.0 for t in range(d, d + j)}
                coefs[col] = -1.0
                rows.append(_row(coefs, LE, j - 1, "P12", (n, d)))
                terms.append((col, sign * wgt))
                col += 1

    return columns, rows, terms


def _sense(inst: ProblemInstance) -> str:
    return "maximize" if inst.objective_mode in ("maximize_utility", "penalized_utility") else "minimize"


def build_objective(inst: ProblemInstance) -> tuple[np.ndarray, float, str]:
    """Objective vector (assignment block plus any penalty columns), constant and sense."""
    N, S, D = inst.n_nurses, inst.n_shifts, inst.horizon
    P = inst.preference.dense(N, S, D).ravel()
    C = inst.cost.dense(N, S, D).ravel()
    mode = inst.objective_mode
    if mode == "maximize_utility":
        coef, const = P, inst.preference.constant()
    elif mode == "minimize_cost":
        coef, const = -C, inst.cost.constant()
    elif mode == "penalized_utility":
        coef, const = P - C, inst.preference.constant()
    elif mode == "penalized_cost":
        coef, const = C - P, inst.cost.constant()
    else:
        raise CompileError(f"unknown objective mode {mode!r}")
    if inst.policy.has_soft_rules:
        _, _, terms = compile_soft(inst)
        coef = np.concatenate([coef, [v for _, v in terms]])
    return coef.astype(float), float(const), _sense(inst)


def compile(inst: ProblemInstance) -> IlpModel:
    """Compile a validated instance into an :class:`IlpModel`."""
    errors = validate_instance(inst)
    if errors:
        raise CompileError("invalid instance:\n" + "\n".join(f"  {e}" for e in errors), errors)

    N, S, D = inst.n_nurses, inst.n_shifts, inst.horizon
    columns = [VarRef("assignment", (n, s, d), (n * S + s) * D + d)
               for n in range(N) for s in range(S) for d in range(D)]
    rows = compile_hard(inst)
    if inst.policy.has_soft_rules:
        pcols, prows, _ = compile_soft(inst)
        columns += pcols
        rows += prows
    rows.sort(key=lambda r: FAMILY_ORDER[r.family])  # stable: index order kept within a family

    obj, const, sense = build_objective(inst)
    n_cols = len(columns)
    n_pen = n_cols - inst.n_cells
    return IlpModel(
        num_columns=n_cols,
        n_assignment=inst.n_cells,
        columns=tuple(columns),
        lower=(0.0,) * n_cols,
        upper=(1.0,) * n_cols,
        integer=(True,) * inst.n_cells + (False,) * n_pen,
        rows=tuple(rows),
        objective=tuple(float(v) for v in obj),
        objective_constant=const,
        sense=sense,
    )
