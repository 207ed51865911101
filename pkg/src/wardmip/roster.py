"""Rosters: decoding solver output, independent re-checking, fairness statistics.

The checks here work directly on the nurse x day grid (``-1`` = off) and
never look at compiled constraint rows. They are written over a leading batch
axis so the brute-force oracle can screen thousands of candidate grids at a
time through the very same code that :func:`validate` uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import ProblemInstance

OFF = -1


class DecodeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Roster:
    instance: ProblemInstance
    grid: np.ndarray  # (nurses, days), shift index or OFF

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=np.int64)
        inst = self.instance
        if g.shape != (inst.n_nurses, inst.horizon):
            raise ValueError(f"grid shape {g.shape} does not match ({inst.n_nurses}, {inst.horizon})")
        if np.any((g < OFF) | (g >= inst.n_shifts)):
            raise ValueError("grid cells must be OFF or a shift index")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    def __eq__(self, other):
        return isinstance(other, Roster) and self.instance == other.instance \
            and np.array_equal(self.grid, other.grid)

    def label(self, nurse: int, day: int) -> str | None:
        s = self.grid[nurse, day]
        return None if s == OFF else self.instance.shift_set.shifts[s]


def decode(inst: ProblemInstance, vector, tol: float = 1e-6) -> Roster:
    """Turn an assignment-block vector into a roster."""
    v = np.asarray(vector, float)
    N, S, D = inst.n_nurses, inst.n_shifts, inst.horizon
    if v.shape != (N * S * D,):
        raise DecodeError(f"expected {N * S * D} assignment values, got shape {v.shape}")
    r = np.rint(v)
    if np.any(np.abs(v - r) > tol) or np.any((r != 0) & (r != 1)):
        raise DecodeError("assignment vector is not 0/1 within tolerance")
    x = r.reshape(N, S, D).astype(bool)
    per_cell = x.sum(axis=1)
    if np.any(per_cell > 1):
        n, d = np.argwhere(per_cell > 1)[0]
        raise DecodeError(f"nurse {n} has {per_cell[n, d]} shifts on day {d}")
    grid = np.where(per_cell == 1, x.argmax(axis=1), OFF)
    return Roster(inst, grid)


def encode(roster: Roster) -> np.ndarray:
    inst = roster.instance
    S = inst.n_shifts
    onehot = roster.grid[:, None, :] == np.arange(S)[None, :, None]
    return onehot.astype(float).ravel()


# ---------------------------------------------------------------------------
# Batched checks

def _windows(a: np.ndarray, width: int) -> np.ndarray:
    """Sums of ``width`` consecutive entries along the last axis."""
    cs = np.concatenate([np.zeros(a.shape[:-1] + (1,), np.int64), np.cumsum(a, axis=-1)], axis=-1)
    return cs[..., width:] - cs[..., :-width]


def _run_lengths(a: np.ndarray) -> np.ndarray:
    """Length of the run of True ending at each position (last axis)."""
    out = np.zeros(a.shape, np.int64)
    run = np.zeros(a.shape[:-1], np.int64)
    for t in range(a.shape[-1]):
        run = np.where(a[..., t], run + 1, 0)
        out[..., t] = run
    return out


def _coverage_counts(inst: ProblemInstance, G: np.ndarray) -> np.ndarray:
    """(K, wards, ranks, shifts, days) headcounts."""
    S = inst.n_shifts
    member = np.zeros((inst.wards, inst.ranks, inst.n_nurses), np.int64)
    for n, nurse in enumerate(inst.nurses):
        member[nurse.ward, nurse.rank, n] = 1
    onehot = (G[:, :, None, :] == np.arange(S)[None, None, :, None]).astype(np.int64)
    return np.einsum("wrn,knsd->kwrsd", member, onehot)


def _demand_array(inst: ProblemInstance) -> np.ndarray:
    M = np.zeros((inst.wards, inst.ranks, inst.n_shifts, inst.horizon), np.int64)
    for (w, r, s, d), v in inst.demand.entries.items():
        M[w, r, s, d] = v
    return M


def _family_masks(inst: ProblemInstance, G: np.ndarray):
    """Yield ``(family, mask, to_index)`` with ``mask`` of shape ``(K, ...)``.

    ``to_index`` maps the non-batch position of a True entry to the row tag
    index used by the compiler, so reports from both sides line up.
    """
    pol, ss = inst.policy, inst.shift_set
    D = inst.horizon
    work = G >= 0
    night = G == ss.night_index
    morning = G == ss.morning_index
    afternoon = G == ss.afternoon_index
    ident = tuple

    yield "C2", work.sum(-1) > pol.max_work_days, ident
    if pol.max_nights is not None:
        yield "C2b", night.sum(-1) > pol.max_nights, ident

    for k, (W, m) in enumerate(pol.window_rules):
        yield "C3", _windows(work, W) > m, (lambda k: lambda idx: (k,) + tuple(idx))(k)

    if pol.night_block is not None:
        i, b = pol.night_block
        if D - i - b + 1 > 0:
            nights = _windows(night, i)[..., : D - i - b + 1]
            rest = _windows(work, b)[..., i: i + D - i - b + 1]
            yield "C4", nights + rest > i, ident

    leave = np.zeros((inst.n_nurses, D), bool)
    for n, nurse in enumerate(inst.nurses):
        leave[n, sorted(nurse.leave_days)] = True
    if leave.any():
        yield "C5", work & leave[None], ident

    if pol.forbid_night_morning:
        yield "C6", night[..., :-1] & morning[..., 1:], ident

    yield from _coverage_masks(inst, G)

    req_masks = []
    for n, nurse in enumerate(inst.nurses):
        req = nurse.required_shifts
        if req is None:
            continue
        if isinstance(req, Mapping):
            for s, count in sorted(req.items()):
                req_masks.append(((n, s), (G[:, n] == s).sum(-1) != count))
        else:
            req_masks.append(((n, -1), work[:, n].sum(-1) != req))
    if req_masks:
        keys = [k for k, _ in req_masks]
        yield "C10", np.stack([m for _, m in req_masks], axis=1), lambda idx: keys[idx[0]]

    if pol.forbid_pm_am_hard:
        yield "C11", afternoon[..., :-1] & morning[..., 1:], ident

    if pol.max_consecutive_nights is not None:
        m = pol.max_consecutive_nights
        too_long = _run_lengths(night) > m
        # report the window of m+1 nights ending at the offending day
        yield "C12", too_long, lambda idx: (idx[0], idx[1] - m)


def _coverage_masks(inst: ProblemInstance, G: np.ndarray):
    pol = inst.policy
    have = _coverage_counts(inst, G)
    need = _demand_array(inst)[None]
    R = inst.ranks
    if pol.cascade_mode == "off" or R == 1:
        short = have != need if pol.coverage_mode == "exact" else have < need
        yield "C8", short, tuple
        return
    if pol.cascade_mode == "adjacent":
        pooled_have = have[:, :, :-1] + have[:, :, 1:]
        pooled_need = need[:, :, :-1] + need[:, :, 1:]
    else:
        # rank r may draw on every rank above it
        pooled_have = np.flip(np.cumsum(np.flip(have, 2), 2), 2)[:, :, :-1]
        pooled_need = np.flip(np.cumsum(np.flip(need, 2), 2), 2)[:, :, :-1]
    yield "C9", pooled_have < pooled_need, tuple
    top_short = have[:, :, -1:] < need[:, :, -1:]
    yield "C8", top_short, lambda idx: (idx[0], R - 1, idx[2], idx[3])


def feasible_mask(inst: ProblemInstance, G: np.ndarray) -> np.ndarray:
    """Boolean ``(K,)``: which grids in the batch satisfy every enabled family."""
    G = np.asarray(G)
    ok = np.ones(G.shape[0], bool)
    for _, mask, _ in _family_masks(inst, G):
        ok &= ~mask.reshape(mask.shape[0], -1).any(axis=1)
    return ok


def penalty_counts(inst: ProblemInstance, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-grid counts of afternoon->morning turnarounds and over-long night windows."""
    ss, pol = inst.shift_set, inst.policy
    K = G.shape[0]
    pm_am = np.zeros(K, np.int64)
    runs = np.zeros(K, np.int64)
    if pol.soft_pm_am_weight is not None:
        pm_am = ((G[..., :-1] == ss.afternoon_index) & (G[..., 1:] == ss.morning_index)).sum(axis=(1, 2))
    if pol.soft_night_run is not None:
        j = pol.soft_night_run[0]
        # a maximal run of L nights contains L - j + 1 windows of j nights
        runs = (_run_lengths(G == ss.night_index) >= j).sum(axis=(1, 2))
    return pm_am, runs


def objective_batch(inst: ProblemInstance, G: np.ndarray) -> np.ndarray:
    """Objective of each grid, computed straight from the weight tables."""
    G = np.asarray(G)
    N, S, D = inst.n_nurses, inst.n_shifts, inst.horizon
    P = inst.preference.dense(N, S, D)
    C = inst.cost.dense(N, S, D)
    mode = inst.objective_mode
    maximize = mode in ("maximize_utility", "penalized_utility")
    weights = {"maximize_utility": P, "minimize_cost": -C,
               "penalized_utility": P - C, "penalized_cost": C - P}[mode]
    constant = inst.preference.constant() if mode.endswith("utility") else inst.cost.constant()

    worked = np.where(G >= 0, G, 0)
    picked = np.take_along_axis(np.broadcast_to(weights, (G.shape[0],) + weights.shape),
                                worked[:, :, None, :], axis=2)[:, :, 0, :]
    value = np.where(G >= 0, picked, 0.0).sum(axis=(1, 2)) + constant

    pm_am, runs = penalty_counts(inst, G)
    pol = inst.policy
    penalty = np.zeros(G.shape[0])
    if pol.soft_pm_am_weight is not None:
        penalty += pol.soft_pm_am_weight * pm_am
    if pol.soft_night_run is not None:
        penalty += pol.soft_night_run[1] * runs
    return value - penalty if maximize else value + penalty


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    family: str
    index: tuple
    message: str

    def __str__(self):
        return f"{self.family} {self.index}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    objective_recomputed: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def families(self) -> list[str]:
        return sorted({v.family for v in self.violations}, key=_family_key)


def _family_key(f: str):
    digits = "".join(ch for ch in f if ch.isdigit())
    return int(digits or 0), f


_MESSAGES = {
    "C2": "works more days than the horizon cap",
    "C2b": "works more nights than the horizon cap",
    "C3": "too many worked days inside a rest window",
    "C4": "night block not followed by the required days off",
    "C5": "works on a leave day",
    "C6": "night shift followed by a morning shift",
    "C8": "coverage does not match demand",
    "C9": "coverage short even after cascading senior staff",
    "C10": "required shift count not met",
    "C11": "afternoon shift followed by a morning shift",
    "C12": "night run longer than allowed",
}


def validate(inst: ProblemInstance, roster: Roster) -> ValidationReport:
    """Re-check every enabled hard family on the grid and recompute the objective."""
    if roster.grid.shape != (inst.n_nurses, inst.horizon):
        raise ValueError("roster shape does not match the instance")
    G = roster.grid[None]
    found = []
    for fam, mask, to_index in _family_masks(inst, G):
        for pos in np.argwhere(mask[0]):
            idx = tuple(int(v) for v in to_index(tuple(int(p) for p in pos)))
            found.append(Violation(fam, idx, _describe(inst, fam, idx)))
    found.sort(key=lambda v: (_family_key(v.family), v.index))
    return ValidationReport(tuple(found), float(objective_batch(inst, G)[0]))


def _describe(inst: ProblemInstance, fam: str, idx: tuple) -> str:
    base = _MESSAGES[fam]
    if fam in ("C8", "C9"):
        w, r, s, d = idx
        return f"{base} (ward {w + 1}, rank {r + 1}, {inst.shift_set.shifts[s]}, day {d + 1})"
    nurse = inst.nurses[idx[-2] if fam == "C3" else idx[0]].id
    if fam in ("C2", "C2b"):
        return f"{base} ({nurse})"
    if fam == "C10":
        what = "total" if idx[1] < 0 else inst.shift_set.shifts[idx[1]]
        return f"{base} ({nurse}, {what})"
    return f"{base} ({nurse}, day {idx[-1] + 1})"


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FairnessReport:
    nights: tuple[int, ...]
    totals: tuple[int, ...]
    longest_run: tuple[int, ...]
    longest_night_run: tuple[int, ...]
    night_spread: int
    total_spread: int
    mean_nights: float
    mean_total: float


def fairness(inst: ProblemInstance, roster: Roster) -> FairnessReport:
    """Per-nurse workload statistics. Reported only, never optimised."""
    G = roster.grid
    work = G >= 0
    night = G == inst.shift_set.night_index
    nights = night.sum(axis=1)
    totals = work.sum(axis=1)
    runs = _run_lengths(work)
    night_runs = _run_lengths(night)
    longest = runs.max(axis=1) if G.shape[1] else np.zeros(G.shape[0], int)
    longest_n = night_runs.max(axis=1) if G.shape[1] else np.zeros(G.shape[0], int)

    def spread(a):
        return int(a.max() - a.min()) if a.size else 0

    return FairnessReport(
        nights=tuple(int(v) for v in nights),
        totals=tuple(int(v) for v in totals),
        longest_run=tuple(int(v) for v in longest),
        longest_night_run=tuple(int(v) for v in longest_n),
        night_spread=spread(nights),
        total_spread=spread(totals),
        mean_nights=float(nights.mean()) if nights.size else 0.0,
        mean_total=float(totals.mean()) if totals.size else 0.0,
    )
