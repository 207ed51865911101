"""Instance documents, fixed-format MPS export and roster rendering.

Instance documents are JSON with a canonical layout: top-level keys sorted,
one table record per line, 1-based day and shift numbering. Writing the same
instance always yields the same bytes.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
from typing import Any, Mapping

import numpy as np

from .compile import IlpModel
from .model import (
    DemandTable,
    InstanceError,
    Nurse,
    PolicyConfig,
    ProblemInstance,
    ShiftSet,
    WeightTable,
    validate_instance,
)
from .roster import OFF, Roster

FORMAT = "wardmip-instance"
VERSION = 1
OFF_GRID = "–"
OFF_CSV = "OFF"


class DocumentError(ValueError):
    """A document could not be parsed; ``errors`` holds semantic problems if any."""

    def __init__(self, message: str, errors: list[InstanceError] | None = None):
        super().__init__(message)
        self.errors = errors or []


# ---------------------------------------------------------------------------
# Instance documents

def _dump(v) -> str:
    return json.dumps(v, sort_keys=True, ensure_ascii=False, separators=(", ", ": "))


def _num(v):
    """Keep integral floats as written; JSON cannot hold inf/nan anyway."""
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def _instance_dict(inst: ProblemInstance) -> dict[str, Any]:
    ss = inst.shift_set
    labels = ss.shifts
    D = inst.horizon
    ids = [n.id for n in inst.nurses]

    nurses = []
    for n in inst.nurses:
        rec: dict[str, Any] = {"id": n.id, "rank": n.rank + 1, "ward": n.ward + 1,
                               "leave": [d + 1 for d in sorted(n.leave_days)]}
        if isinstance(n.required_shifts, Mapping):
            rec["required"] = {labels[s]: c for s, c in sorted(n.required_shifts.items())}
        elif n.required_shifts is not None:
            rec["required"] = n.required_shifts
        nurses.append(rec)

    # One line per (ward, rank, day) with a count per shift.
    rows = {}
    for (w, r, s, d), v in inst.demand.entries.items():
        rows.setdefault((w, r, d), [0] * len(labels))[s] = _num(v)
    demand = [{"ward": w + 1, "rank": r + 1, "day": d + 1, "counts": counts}
              for (w, r, d), counts in sorted(rows.items())]

    def table(t: WeightTable):
        cells = {}
        for (n, s, d), v in t.values.items():
            cells.setdefault((n, s), [t.default] * D)[d] = _num(v)
        return {
            "default": _num(t.default),
            "constants": {ids[n]: _num(v) for n, v in t.per_nurse_constant.items()},
            "rows": [{"nurse": ids[n], "shift": labels[s], "values": vals}
                     for (n, s), vals in sorted(cells.items())],
        }

    pol = inst.policy
    policy = {
        "max_work_days": pol.max_work_days,
        "window_rules": [list(w) for w in pol.window_rules],
        "night_block": list(pol.night_block) if pol.night_block else None,
        "max_consecutive_nights": pol.max_consecutive_nights,
        "max_nights": pol.max_nights,
        "forbid_night_morning": pol.forbid_night_morning,
        "forbid_pm_am_hard": pol.forbid_pm_am_hard,
        "soft_pm_am_weight": _num(pol.soft_pm_am_weight),
        "soft_night_run": [pol.soft_night_run[0], _num(pol.soft_night_run[1])] if pol.soft_night_run else None,
        "coverage_mode": pol.coverage_mode,
        "cascade_mode": pol.cascade_mode,
    }
    return {
        "format": FORMAT,
        "version": VERSION,
        "name": inst.name,
        "horizon": D,
        "ranks": inst.ranks,
        "wards": inst.wards,
        "objective": inst.objective_mode,
        "shifts": {"labels": list(labels), "morning": ss.morning_index + 1,
                   "afternoon": ss.afternoon_index + 1, "night": ss.night_index + 1},
        "policy": policy,
        "nurses": nurses,
        "demand": demand,
        "preference": table(inst.preference),
        "cost": table(inst.cost),
    }


def write_instance(inst: ProblemInstance) -> str:
    """Canonical document text for ``inst``."""
    doc = _instance_dict(inst)
    out = ["{"]
    keys = sorted(doc)
    for i, key in enumerate(keys):
        comma = "," if i < len(keys) - 1 else ""
        out.append(f"  {json.dumps(key)}: {_render_value(doc[key], 2)}{comma}")
    out.append("}")
    return "\n".join(out) + "\n"


def _render_value(v, indent: int) -> str:
    pad = " " * indent
    if isinstance(v, list) and v and all(isinstance(x, dict) for x in v):
        inner = ",\n".join(f"{pad}  {_dump(x)}" for x in v)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(v, dict) and any(isinstance(x, (list, dict)) and x for x in v.values()):
        keys = sorted(v)
        lines = [f"{pad}  {json.dumps(k)}: {_render_value(v[k], indent + 2)}" for k in keys]
        return "{\n" + ",\n".join(lines) + "\n" + pad + "}"
    return _dump(v)


_TOP_KEYS = {"format", "version", "name", "horizon", "ranks", "wards", "objective",
             "shifts", "policy", "nurses", "demand", "preference", "cost"}
_POLICY_KEYS = {"max_work_days", "window_rules", "night_block", "max_consecutive_nights", "max_nights",
                "forbid_night_morning", "forbid_pm_am_hard", "soft_pm_am_weight", "soft_night_run",
                "coverage_mode", "cascade_mode"}
_NURSE_KEYS = {"id", "rank", "ward", "leave", "required"}
_TABLE_KEYS = {"default", "constants", "rows"}


def _check_keys(obj, allowed: set[str], where: str, required: set[str] = frozenset()):
    if not isinstance(obj, dict):
        raise DocumentError(f"{where}: expected an object, got {type(obj).__name__}")
    for k in obj:
        if k not in allowed:
            raise DocumentError(f"{where}: unknown field {k!r}")
    for k in sorted(required):
        if k not in obj:
            raise DocumentError(f"{where}: missing field {k!r}")


def _int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise DocumentError(f"{where}: expected an integer, got {v!r}")
    return v


def _real(v, where: str):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DocumentError(f"{where}: expected a number, got {v!r}")
    return v


def read_instance(text: str) -> ProblemInstance:
    """Parse and validate an instance document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc

    _check_keys(doc, _TOP_KEYS, "document", required=_TOP_KEYS - {"name"})
    if doc["format"] != FORMAT:
        raise DocumentError(f"format: expected {FORMAT!r}, got {doc['format']!r}")
    if doc["version"] != VERSION:
        raise DocumentError(f"version: unsupported version {doc['version']!r}")

    D = _int(doc["horizon"], "horizon")
    if D < 1:
        # Checked up front: every per-day table length depends on it.
        err = InstanceError("horizon", (), f"must be >= 1, got {D}")
        raise DocumentError(f"invalid instance:\n  {err}", [err])
    shifts = doc["shifts"]
    _check_keys(shifts, {"labels", "morning", "afternoon", "night"}, "shifts", required={"labels"})
    labels = tuple(str(x) for x in shifts["labels"])
    shift_of = {lab: i for i, lab in enumerate(labels)}

    def shift_index(lab, where):
        if lab not in shift_of:
            raise DocumentError(f"{where}: unknown shift {lab!r}")
        return shift_of[lab]

    ss = ShiftSet(labels, _int(shifts.get("morning", 1), "shifts.morning") - 1,
                  _int(shifts.get("afternoon", 2), "shifts.afternoon") - 1,
                  _int(shifts.get("night", 3), "shifts.night") - 1)

    nurses = []
    if not isinstance(doc["nurses"], list):
        raise DocumentError("nurses: expected a list")
    for i, rec in enumerate(doc["nurses"]):
        where = f"nurses[{i}]"
        _check_keys(rec, _NURSE_KEYS, where, required={"id"})
        req = rec.get("required")
        if isinstance(req, dict):
            req = {shift_index(k, f"{where}.required"): _int(v, f"{where}.required.{k}") for k, v in req.items()}
        elif req is not None:
            req = _int(req, f"{where}.required")
        nurses.append(Nurse(
            id=str(rec["id"]),
            rank=_int(rec.get("rank", 1), f"{where}.rank") - 1,
            ward=_int(rec.get("ward", 1), f"{where}.ward") - 1,
            leave_days=frozenset(_int(d, f"{where}.leave") - 1 for d in rec.get("leave", [])),
            required_shifts=req,
        ))
    nurse_of = {n.id: k for k, n in enumerate(nurses)}

    demand = {}
    for i, rec in enumerate(doc["demand"]):
        where = f"demand[{i}]"
        _check_keys(rec, {"ward", "rank", "day", "counts"}, where, required={"day", "counts"})
        if len(rec["counts"]) != len(labels):
            raise DocumentError(f"{where}.counts: expected {len(labels)} values, got {len(rec['counts'])}")
        w = _int(rec.get("ward", 1), f"{where}.ward") - 1
        r = _int(rec.get("rank", 1), f"{where}.rank") - 1
        d = _int(rec["day"], f"{where}.day") - 1
        for s, v in enumerate(rec["counts"]):
            v = _real(v, f"{where}.counts")
            if v:
                demand[(w, r, s, d)] = v

    def table(obj, name):
        _check_keys(obj, _TABLE_KEYS, name)
        default = _real(obj.get("default", 0.0), f"{name}.default")
        values = {}
        for i, rec in enumerate(obj.get("rows", [])):
            where = f"{name}.rows[{i}]"
            _check_keys(rec, {"nurse", "shift", "values"}, where, required={"nurse", "shift", "values"})
            if rec["nurse"] not in nurse_of:
                raise DocumentError(f"{where}: unknown nurse {rec['nurse']!r}")
            n, s = nurse_of[rec["nurse"]], shift_index(rec["shift"], where)
            if len(rec["values"]) != D:
                raise DocumentError(f"{where}.values: expected {D} values, got {len(rec['values'])}")
            for d, v in enumerate(rec["values"]):
                values[(n, s, d)] = _real(v, f"{where}.values")
        consts = {}
        for nid, v in obj.get("constants", {}).items():
            if nid not in nurse_of:
                raise DocumentError(f"{name}.constants: unknown nurse {nid!r}")
            consts[nurse_of[nid]] = _real(v, f"{name}.constants.{nid}")
        return WeightTable(values, default, consts)

    pol = doc["policy"]
    _check_keys(pol, _POLICY_KEYS, "policy", required={"max_work_days"})
    policy = PolicyConfig(
        max_work_days=_int(pol["max_work_days"], "policy.max_work_days"),
        window_rules=tuple((int(w), int(m)) for w, m in pol.get("window_rules", [])),
        night_block=tuple(pol["night_block"]) if pol.get("night_block") else None,
        max_consecutive_nights=pol.get("max_consecutive_nights"),
        max_nights=pol.get("max_nights"),
        forbid_night_morning=bool(pol.get("forbid_night_morning", True)),
        forbid_pm_am_hard=bool(pol.get("forbid_pm_am_hard", False)),
        soft_pm_am_weight=pol.get("soft_pm_am_weight"),
        soft_night_run=tuple(pol["soft_night_run"]) if pol.get("soft_night_run") else None,
        coverage_mode=pol.get("coverage_mode", "at_least"),
        cascade_mode=pol.get("cascade_mode", "off"),
    )

    inst = ProblemInstance(
        horizon=D,
        shift_set=ss,
        nurses=tuple(nurses),
        ranks=_int(doc["ranks"], "ranks"),
        wards=_int(doc["wards"], "wards"),
        demand=DemandTable(dict(sorted(demand.items()))),
        preference=table(doc["preference"], "preference"),
        cost=table(doc["cost"], "cost"),
        policy=policy,
        objective_mode=doc["objective"],
        name=str(doc.get("name", "")),
    )
    errors = validate_instance(inst)
    if errors:
        raise DocumentError("invalid instance:\n" + "\n".join(f"  {e}" for e in errors), errors)
    return inst


# ---------------------------------------------------------------------------
# MPS

def _base36(k: int) -> str:
    digits = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    out = ""
    while True:
        k, r = divmod(k, 36)
        out = digits[r] + out
        if k == 0:
            return out


def row_names(model: IlpModel) -> list[str]:
    """Fixed-format row names: the tag when it fits in 8 characters.

    Longer tags become ``<family>_<row number in base 36>`` in upper case;
    natural tag names only use lower-case field letters, so the two styles
    cannot collide.
    """
    names = []
    for i, r in enumerate(model.rows):
        name = r.name()
        if len(name) > 8:
            fam = r.family.upper()
            code = _base36(i)
            name = f"{fam}_{code.rjust(8 - len(fam) - 1, '0')}"
            if len(name) > 8:
                raise ValueError(f"row {i} cannot be named in 8 characters")
        names.append(name)
    return names


def column_names(model: IlpModel) -> list[str]:
    return [("X" if ref.kind == "assignment" else "Z") + str(ref.column).rjust(7, "0")
            for ref in model.columns]


def _fmt(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    s = repr(v)
    return s if len(s) <= 12 else f"{v:.6e}"


def _field_line(a="", b="", c="", d="", e="", f="") -> str:
    # Fixed MPS columns: 2-3, 5-12, 15-22, 25-36, 40-47, 50-61 (1-based).
    line = f" {a:<2} {b:<8}  {c:<8}  {d:>12}"
    if e:
        line += f"   {e:<8}  {f:>12}"
    return line.rstrip()


def export_mps(model: IlpModel, name: str = "WARDMIP") -> str:
    """Fixed-format MPS text for ``model``.

    The objective constant goes on the RHS of the objective row with the
    conventional sign flip (RHS = -constant).
    """
    rnames = row_names(model)
    cnames = column_names(model)
    obj = "OBJ"
    kind = {"<=": "L", ">=": "G", "=": "E"}

    by_col: list[list[tuple[str, float]]] = [[] for _ in range(model.num_columns)]
    for rn, r in zip(rnames, model.rows):
        for c, v in r.terms:
            by_col[c].append((rn, v))

    lines = [f"NAME          {name[:8]}"]
    if model.sense == "maximize":
        lines += ["OBJSENSE", "    MAX"]
    lines.append("ROWS")
    lines.append(_field_line("N", obj))
    for rn, r in zip(rnames, model.rows):
        lines.append(_field_line(kind[r.sense], rn))

    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for c in range(model.num_columns):
        if model.integer[c] != in_int:
            tag = "'INTORG'" if model.integer[c] else "'INTEND'"
            lines.append(_field_line("", f"MARKER{marker:02d}", "'MARKER'", "", tag, ""))
            marker += 1
            in_int = model.integer[c]
        entries = [(obj, model.objective[c])] if model.objective[c] != 0 else []
        entries += by_col[c]
        if not entries:
            entries = [(obj, 0.0)]  # declare the column even when it appears nowhere
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            if len(pair) == 2:
                lines.append(_field_line("", cnames[c], pair[0][0], _fmt(pair[0][1]), pair[1][0], _fmt(pair[1][1])))
            else:
                lines.append(_field_line("", cnames[c], pair[0][0], _fmt(pair[0][1])))
    if in_int:
        lines.append(_field_line("", f"MARKER{marker:02d}", "'MARKER'", "", "'INTEND'", ""))

    lines.append("RHS")
    rhs = [(rn, r.rhs) for rn, r in zip(rnames, model.rows) if r.rhs != 0]
    if model.objective_constant != 0:
        rhs.insert(0, (obj, -model.objective_constant))
    for k in range(0, len(rhs), 2):
        pair = rhs[k:k + 2]
        if len(pair) == 2:
            lines.append(_field_line("", "RHS", pair[0][0], _fmt(pair[0][1]), pair[1][0], _fmt(pair[1][1])))
        else:
            lines.append(_field_line("", "RHS", pair[0][0], _fmt(pair[0][1])))

    lines.append("RANGES")
    lines.append("BOUNDS")
    for c in range(model.num_columns):
        lo, hi = model.lower[c], model.upper[c]
        if model.integer[c] and lo == 0 and hi == 1:
            lines.append(_field_line("BV", "BND", cnames[c]))
            continue
        if lo != 0:
            lines.append(_field_line("LO", "BND", cnames[c], _fmt(lo)))
        if math.isfinite(hi):
            lines.append(_field_line("UP", "BND", cnames[c], _fmt(hi)))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Rosters

def render_roster(roster: Roster, format: str = "grid") -> str:
    inst = roster.instance
    labels = inst.shift_set.shifts
    ids = [n.id for n in inst.nurses]
    D = inst.horizon
    if format == "grid":
        cell_w = max([len(OFF_GRID)] + [len(x) for x in labels] + [len(f"D{D}")])
        id_w = max([len("Nurse")] + [len(i) for i in ids])
        head = "Nurse".ljust(id_w) + " " + " ".join(f"D{d + 1}".rjust(cell_w) for d in range(D))
        lines = [head.rstrip()]
        for n, nid in enumerate(ids):
            cells = [OFF_GRID if s == OFF else labels[s] for s in roster.grid[n]]
            lines.append((nid.ljust(id_w) + " " + " ".join(c.rjust(cell_w) for c in cells)).rstrip())
        return "\n".join(lines) + "\n"
    if format == "csv":
        buf = _stdio.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["nurse"] + [f"D{d + 1}" for d in range(D)])
        for n, nid in enumerate(ids):
            w.writerow([nid] + [OFF_CSV if s == OFF else labels[s] for s in roster.grid[n]])
        return buf.getvalue()
    raise ValueError(f"unknown roster format {format!r}")


def read_roster_csv(inst: ProblemInstance, text: str) -> Roster:
    """Parse a roster CSV written by :func:`render_roster` (rows may come in any order)."""
    rows = list(csv.reader(_stdio.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise DocumentError("roster csv is empty")
    header, body = rows[0], rows[1:]
    D = inst.horizon
    if len(header) != D + 1:
        raise DocumentError(f"roster csv has {len(header) - 1} day columns, instance has {D}")
    if len(body) != inst.n_nurses:
        raise DocumentError(f"roster csv has {len(body)} nurse rows, instance has {inst.n_nurses}")
    shift_of = {lab: s for s, lab in enumerate(inst.shift_set.shifts)}
    nurse_of = {n.id: k for k, n in enumerate(inst.nurses)}
    grid = np.full((inst.n_nurses, D), OFF)
    seen = set()
    for line, row in enumerate(body, start=2):
        if len(row) != D + 1:
            raise DocumentError(f"line {line}: expected {D + 1} fields, got {len(row)}")
        nid = row[0]
        if nid not in nurse_of or nid in seen:
            raise DocumentError(f"line {line}: unknown or repeated nurse {nid!r}")
        seen.add(nid)
        for d, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell in ("", OFF_CSV, "-", OFF_GRID):
                continue
            if cell not in shift_of:
                raise DocumentError(f"line {line}, day {d + 1}: unknown shift {cell!r}")
            grid[nurse_of[nid], d] = shift_of[cell]
    return Roster(inst, grid)
