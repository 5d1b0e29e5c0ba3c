"""
MATPOWER case parsing and admittance assembly
=============================================

Responsibilities
----------------
* Parse ``mpc.baseMVA`` / ``mpc.bus`` / ``mpc.gen`` / ``mpc.branch`` out of a
  MATPOWER ``.m`` file into a validated :class:`NetworkCase`
* Serialize a case back to MATPOWER text (supported column subset)
* Build the nodal admittance matrix and the branch matrices Yf / Yt

Only the columns needed downstream are read; trailing columns are ignored.
MW / MVAr are divided by baseMVA and degrees become radians at this boundary.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix

from ppf_lab.core.errors import (
    CaseParseError,
    CaseValidationError,
    InputFileNotFound,
    SingularElementError,
)
from ppf_lab.models.network import AdmittanceMatrix, Branch, Bus, BusKind, Gen, NetworkCase

logger = logging.getLogger(__name__)

# --------------------------------------------------------------------------- #
# MATPOWER column indices (0-based)
# --------------------------------------------------------------------------- #
BUS_I, BUS_TYPE, PD, QD, GS, BS, BUS_AREA, VM, VA, BASE_KV = range(10)
GEN_BUS, PG, QG, QMAX, QMIN, VG, MBASE, GEN_STATUS = range(8)
F_BUS, T_BUS, BR_R, BR_X, BR_B, RATE_A, RATE_B, RATE_C, TAP, SHIFT, BR_STATUS = range(11)

_MIN_COLUMNS: Dict[str, int] = {"bus": BASE_KV + 1, "gen": GEN_STATUS + 1, "branch": BR_STATUS + 1}

_SCALAR_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^\[\{;]+?)\s*;")
_MATRIX_START_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_FUNCTION_RE = re.compile(r"^\s*function\s+\w+\s*=\s*(\w+)")

Row = Tuple[int, List[float]]  # (line number, values)


# --------------------------------------------------------------------------- #
# Tokenizing
# --------------------------------------------------------------------------- #
def _row_values(chunk: str, line_no: int) -> List[float]:
    tokens = [tok for tok in re.split(r"[\s,]+", chunk.strip()) if tok]
    try:
        return [float(tok) for tok in tokens]
    except ValueError as exc:
        raise CaseParseError(f"non-numeric entry in {chunk.strip()!r}", line_no) from exc


def _scan(text: str) -> Tuple[Dict[str, str], Dict[str, List[Row]], Optional[str]]:
    """Split the source into scalar assignments and numeric matrices."""
    scalars: Dict[str, str] = {}
    matrices: Dict[str, List[Row]] = {}
    name: Optional[str] = None
    current: Optional[str] = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0]
        if not line.strip():
            continue

        if current is None:
            fn = _FUNCTION_RE.match(line)
            if fn:
                name = fn.group(1)
                continue
            start = _MATRIX_START_RE.match(line)
            if start:
                current = start.group(1)
                matrices[current] = []
                line = start.group(2)
            else:
                scalar = _SCALAR_RE.match(line)
                if scalar:
                    scalars[scalar.group(1)] = scalar.group(2).strip()
                continue

        closed = "]" in line
        body = line.split("]", 1)[0] if closed else line
        for chunk in body.split(";"):
            if chunk.strip():
                matrices[current].append((line_no, _row_values(chunk, line_no)))
        if closed:
            current = None

    if current is not None:
        raise CaseParseError(f"matrix mpc.{current} is not terminated by '];'")
    return scalars, matrices, name


def _checked_rows(matrices: Dict[str, List[Row]], key: str) -> List[Row]:
    if key not in matrices:
        raise CaseParseError(f"missing matrix mpc.{key}")
    rows = matrices[key]
    need = _MIN_COLUMNS[key]
    width = len(rows[0][1]) if rows else need
    for line_no, values in rows:
        if len(values) < need:
            raise CaseParseError(
                f"mpc.{key} row has {len(values)} columns, at least {need} required", line_no
            )
        if len(values) != width:
            raise CaseParseError(
                f"mpc.{key} row has {len(values)} columns, expected {width} like the first row", line_no
            )
    return rows


# --------------------------------------------------------------------------- #
# Parsing
# --------------------------------------------------------------------------- #
def parse_case(text: str, *, name: Optional[str] = None) -> NetworkCase:
    """
    Parse MATPOWER case source into a validated :class:`NetworkCase`.

    Raises ``CaseParseError`` (with line number) for malformed rows and
    ``CaseValidationError`` for slack / reference problems.
    """
    scalars, matrices, fn_name = _scan(text)

    if "baseMVA" not in scalars:
        raise CaseParseError("missing scalar mpc.baseMVA")
    try:
        base_mva = float(scalars["baseMVA"])
    except ValueError as exc:
        raise CaseParseError(f"mpc.baseMVA is not numeric: {scalars['baseMVA']!r}") from exc
    if base_mva <= 0:
        raise CaseValidationError(f"baseMVA must be positive, got {base_mva}")

    bus_rows = _checked_rows(matrices, "bus")
    gen_rows = _checked_rows(matrices, "gen")
    branch_rows = _checked_rows(matrices, "branch")

    gens = tuple(
        Gen(
            bus_id=int(v[GEN_BUS]),
            p_out=v[PG] / base_mva,
            q_out=v[QG] / base_mva,
            v_setpoint=v[VG],
            in_service=v[GEN_STATUS] > 0,
        )
        for _, v in gen_rows
    )
    live_gen_buses = {g.bus_id for g in gens if g.in_service}

    buses: List[Bus] = []
    for line_no, v in bus_rows:
        code = int(v[BUS_TYPE])
        if code == 4:
            raise CaseValidationError(f"bus {int(v[BUS_I])} is isolated (type 4), which is not supported")
        if code not in (1, 2, 3):
            raise CaseParseError(f"unknown bus type {code}", line_no)
        kind = BusKind.from_code(code)
        bus_id = int(v[BUS_I])
        if kind is BusKind.GENERATOR and bus_id not in live_gen_buses:
            logger.warning("PV bus %d has no in-service generator; treating it as PQ", bus_id)
            kind = BusKind.LOAD
        buses.append(
            Bus(
                id=bus_id,
                kind=kind,
                p_demand=v[PD] / base_mva,
                q_demand=v[QD] / base_mva,
                gs_shunt=v[GS] / base_mva,
                bs_shunt=v[BS] / base_mva,
                base_kv=v[BASE_KV],
                v_mag_init=v[VM],
                v_ang_init=math.radians(v[VA]),
            )
        )

    branches = tuple(
        Branch(
            from_bus=int(v[F_BUS]),
            to_bus=int(v[T_BUS]),
            r=v[BR_R],
            x=v[BR_X],
            b_charge=v[BR_B],
            tap=v[TAP] if v[TAP] != 0 else 1.0,
            shift=math.radians(v[SHIFT]),
            in_service=v[BR_STATUS] > 0,
        )
        for _, v in branch_rows
    )

    case = NetworkCase(
        base_mva=base_mva,
        buses=tuple(buses),
        gens=gens,
        branches=branches,
        name=name or fn_name or "case",
    )
    validate_case(case)
    logger.debug(
        "Parsed %s: %d buses, %d gens, %d branches (M=%d in service)",
        case.name, case.n_bus, len(case.gens), len(case.branches), case.n_branch,
    )
    return case


def validate_case(case: NetworkCase) -> None:
    ids = [bus.id for bus in case.buses]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseValidationError(f"duplicate bus ids: {dupes}")
    if not case.buses:
        raise CaseValidationError("case has no buses")

    slack = [bus.id for bus in case.buses if bus.kind is BusKind.SLACK]
    if len(slack) != 1:
        raise CaseValidationError(f"exactly one slack bus required, found {len(slack)}: {slack}")

    known = set(ids)
    kinds = {bus.id: bus.kind for bus in case.buses}
    for bus in case.buses:
        if bus.v_mag_init <= 0:
            raise CaseValidationError(f"bus {bus.id} has non-positive initial magnitude {bus.v_mag_init}")
    for gen in case.gens:
        if gen.bus_id not in known:
            raise CaseValidationError(f"generator references unknown bus {gen.bus_id}")
        if gen.in_service and kinds[gen.bus_id] is BusKind.LOAD:
            raise CaseValidationError(f"in-service generator on PQ bus {gen.bus_id}")
    for k, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                raise CaseValidationError(f"branch {k} ({br.from_bus}-{br.to_bus}) references unknown bus {end}")
        if br.tap <= 0:
            raise CaseValidationError(f"branch {k} has non-positive tap ratio {br.tap}")


def load_case(path: Union[str, Path]) -> NetworkCase:
    path = Path(path)
    if not path.is_file():
        raise InputFileNotFound(path, "case file")
    return parse_case(path.read_text(encoding="utf-8"), name=path.stem)


# --------------------------------------------------------------------------- #
# Serialization
# --------------------------------------------------------------------------- #
def _fmt(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def serialize_case(case: NetworkCase) -> str:
    """MATPOWER text for the supported column subset; parse_case reads it back."""
    base = case.base_mva
    lines = [
        f"function mpc = {case.name}",
        "mpc.version = '2';",
        f"mpc.baseMVA = {_fmt(base)};",
        "",
        "%% bus data",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
    ]
    for bus in case.buses:
        cols = [
            bus.id, bus.kind.code, bus.p_demand * base, bus.q_demand * base,
            bus.gs_shunt * base, bus.bs_shunt * base, 1, bus.v_mag_init,
            math.degrees(bus.v_ang_init), bus.base_kv, 1, 1.1, 0.9,
        ]
        lines.append("\t" + "\t".join(_fmt(c) for c in cols) + ";")
    lines += ["];", "", "%% generator data", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin", "mpc.gen = ["]
    for gen in case.gens:
        cols = [gen.bus_id, gen.p_out * base, gen.q_out * base, 0, 0, gen.v_setpoint, base, int(gen.in_service), 0, 0]
        lines.append("\t" + "\t".join(_fmt(c) for c in cols) + ";")
    lines += [
        "];", "", "%% branch data",
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
        "mpc.branch = [",
    ]
    for br in case.branches:
        cols = [
            br.from_bus, br.to_bus, br.r, br.x, br.b_charge, 0, 0, 0,
            0 if br.tap == 1.0 else br.tap, math.degrees(br.shift), int(br.in_service), -360, 360,
        ]
        lines.append("\t" + "\t".join(_fmt(c) for c in cols) + ";")
    lines += ["];", ""]
    return "\n".join(lines)


def with_branch_status(case: NetworkCase, index: int, in_service: bool) -> NetworkCase:
    """Copy of *case* with one branch switched in or out of service."""
    branches = list(case.branches)
    branches[index] = replace(branches[index], in_service=in_service)
    return replace(case, branches=tuple(branches))


# --------------------------------------------------------------------------- #
# Admittance
# --------------------------------------------------------------------------- #
def branch_admittances(case: NetworkCase) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Two-port elements (Yff, Yft, Ytf, Ytt) of every in-service branch:

        | If |   | Yff  Yft |   | Vf |
        | It | = | Ytf  Ytt | * | Vt |
    """
    live = case.in_service_branches
    r = np.array([br.r for br in live])
    x = np.array([br.x for br in live])
    dead = np.flatnonzero((r == 0) & (x == 0))
    if dead.size:
        br = live[int(dead[0])]
        raise SingularElementError(
            f"branch {br.from_bus}-{br.to_bus} is in service with zero series impedance"
        )
    ys = 1.0 / (r + 1j * x)
    bc = np.array([br.b_charge for br in live])
    tap = np.array([br.tap for br in live]) * np.exp(1j * np.array([br.shift for br in live]))

    ytt = ys + 1j * bc / 2
    yff = ytt / (tap * np.conj(tap))
    yft = -ys / np.conj(tap)
    ytf = -ys / tap
    return yff, yft, ytf, ytt


def build_ybus(case: NetworkCase) -> AdmittanceMatrix:
    """
    Bus admittance matrix with the standard two-port transformer model;
    out-of-service branches contribute nothing.
    """
    nb = case.n_bus
    nl = case.n_branch
    yff, yft, ytf, ytt = branch_admittances(case)
    f, t = case.branch_endpoints

    ysh = np.array([bus.gs_shunt + 1j * bus.bs_shunt for bus in case.buses])

    rows = np.r_[np.arange(nl), np.arange(nl)]
    yf = csr_matrix((np.r_[yff, yft], (rows, np.r_[f, t])), shape=(nl, nb), dtype=complex)
    yt = csr_matrix((np.r_[ytf, ytt], (rows, np.r_[f, t])), shape=(nl, nb), dtype=complex)

    cf = csr_matrix((np.ones(nl), (np.arange(nl), f)), shape=(nl, nb))
    ct = csr_matrix((np.ones(nl), (np.arange(nl), t)), shape=(nl, nb))
    ybus = cf.T @ yf + ct.T @ yt + csr_matrix((ysh, (np.arange(nb), np.arange(nb))), shape=(nb, nb))
    return AdmittanceMatrix(ybus=csr_matrix(ybus), yf=yf, yt=yt)


def resolve_bus_ids(case: NetworkCase, bus_ids: Sequence[int]) -> np.ndarray:
    """Dense indices for external bus ids; unknown ids are a validation error."""
    missing = [b for b in bus_ids if b not in case.index_of]
    if missing:
        raise CaseValidationError(f"unknown bus ids {missing} in {case.name}")
    return np.array([case.index_of[b] for b in bus_ids], dtype=np.int64)


def incidence_matrix(case: NetworkCase) -> np.ndarray:
    """
    Reduced branch-bus incidence A (M x (N-1)) of the in-service branches,
    columns in angle order [PV; PQ]: +1 at the from bus, -1 at the to bus,
    slack column removed.
    """
    cols = {int(bus): j for j, bus in enumerate(case.non_slack_indices)}
    f, t = case.branch_endpoints
    a = np.zeros((f.size, case.n_bus - 1))
    for row, (i, j) in enumerate(zip(f, t)):
        if int(i) in cols:
            a[row, cols[int(i)]] += 1.0
        if int(j) in cols:
            a[row, cols[int(j)]] -= 1.0
    return a


__all__ = [
    "parse_case",
    "validate_case",
    "load_case",
    "serialize_case",
    "with_branch_status",
    "branch_admittances",
    "build_ybus",
    "resolve_bus_ids",
    "incidence_matrix",
]
