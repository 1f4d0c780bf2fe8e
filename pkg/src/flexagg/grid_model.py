"""Grid case data model, JSON (de)serialization and admittance matrix assembly.

Quantities inside a :class:`GridCase` are per-unit on ``base_power``.  The JSON
format stores active/reactive powers in MW/Mvar and impedances in p.u.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

SLACK = "slack"
LOAD = "load"


class CaseError(ValueError):
    """Raised when a case file violates the schema or the case invariants."""

    def __init__(self, message: str, diagnostics: Sequence[str] = ()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


@dataclass(frozen=True)
class Bus:
    index: int
    kind: str
    p_inj: float = 0.0
    q_inj: float = 0.0
    shunt_admittance: complex = 0j
    v_set: float = 1.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    series_impedance: complex
    total_shunt_admittance: complex = 0j
    thermal_current_limit: float = math.inf

    @property
    def series_admittance(self) -> complex:
        return 1.0 / self.series_impedance


@dataclass(frozen=True)
class NodeFlexibility:
    bus: int
    delta_p_min: float
    delta_p_max: float
    delta_q_min: float
    delta_q_max: float


@dataclass(frozen=True)
class OperatingLimits:
    v_min: np.ndarray
    v_max: np.ndarray
    delta_min: np.ndarray
    delta_max: np.ndarray

    @classmethod
    def uniform(cls, n: int, v_min=0.9, v_max=1.1, delta_min=-math.pi / 2, delta_max=math.pi / 2):
        def arr(x):
            a = np.asarray(x, dtype=float)
            return np.full(n, float(a)) if a.ndim == 0 else a.copy()

        return cls(arr(v_min), arr(v_max), arr(delta_min), arr(delta_max))


@dataclass(frozen=True)
class GridCase:
    """A complete problem instance: network, interconnections and flexibilities."""

    base_power: float
    buses: tuple
    branches: tuple
    interconnections: tuple
    flexibilities: tuple = ()
    limits: OperatingLimits | None = None

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "interconnections", tuple(int(k) for k in self.interconnections))
        object.__setattr__(self, "flexibilities", tuple(self.flexibilities))
        if self.limits is None:
            object.__setattr__(self, "limits", OperatingLimits.uniform(len(self.buses)))

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def slack_bus(self) -> int:
        slacks = [b.index for b in self.buses if b.kind == SLACK]
        if len(slacks) != 1:
            raise CaseError(f"expected exactly one slack bus, found {len(slacks)}")
        return slacks[0]

    @cached_property
    def non_slack(self) -> np.ndarray:
        """Indices of PQ buses in ascending order."""
        return np.array([b.index for b in self.buses if b.kind != SLACK], dtype=int)

    @property
    def p_scheduled(self) -> np.ndarray:
        return np.array([b.p_inj for b in self.buses])

    @property
    def q_scheduled(self) -> np.ndarray:
        return np.array([b.q_inj for b in self.buses])

    @property
    def flexibility_buses(self) -> list[int]:
        return sorted({f.bus for f in self.flexibilities})

    def branch_arrays(self):
        """Return ``(f, t, y_series, y_shunt_total, i_max)`` as numpy arrays."""
        f = np.array([br.from_bus for br in self.branches], dtype=int)
        t = np.array([br.to_bus for br in self.branches], dtype=int)
        ys = np.array([br.series_admittance for br in self.branches], dtype=complex)
        ysh = np.array([br.total_shunt_admittance for br in self.branches], dtype=complex)
        imax = np.array([br.thermal_current_limit for br in self.branches], dtype=float)
        return f, t, ys, ysh, imax

    def with_injections(self, p: np.ndarray, q: np.ndarray) -> "GridCase":
        buses = tuple(
            Bus(b.index, b.kind, float(p[b.index]), float(q[b.index]), b.shunt_admittance, b.v_set)
            for b in self.buses
        )
        return GridCase(self.base_power, buses, self.branches, self.interconnections,
                        self.flexibilities, self.limits)

    def with_flexibilities(self, flexibilities: Iterable[NodeFlexibility]) -> "GridCase":
        return GridCase(self.base_power, self.buses, self.branches, self.interconnections,
                        tuple(flexibilities), self.limits)

    def with_limits(self, limits: OperatingLimits) -> "GridCase":
        return GridCase(self.base_power, self.buses, self.branches, self.interconnections,
                        self.flexibilities, limits)


@dataclass(frozen=True)
class AdmittanceMatrix:
    Y: np.ndarray
    magnitude: np.ndarray = field(init=False)
    theta: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "magnitude", np.abs(self.Y))
        object.__setattr__(self, "theta", np.angle(self.Y))


def validate_case(case: GridCase) -> list[str]:
    """Check every case invariant; return one diagnostic per violation."""
    diags = []
    n = len(case.buses)
    for pos, bus in enumerate(case.buses):
        if bus.index != pos:
            diags.append(f"bus at position {pos} has index {bus.index}; indices must be contiguous 0..{n - 1}")
        if bus.kind not in (SLACK, LOAD):
            diags.append(f"bus {bus.index}: unknown kind {bus.kind!r}")
    n_slack = sum(b.kind == SLACK for b in case.buses)
    if n_slack == 0:
        diags.append("no slack bus")
    elif n_slack > 1:
        diags.append(f"{n_slack} slack buses; exactly one required")
    for k, br in enumerate(case.branches):
        for end, idx in (("from", br.from_bus), ("to", br.to_bus)):
            if not 0 <= idx < n:
                diags.append(f"branch {k}: {end} bus {idx} does not exist")
        if br.from_bus == br.to_bus:
            diags.append(f"branch {k}: from_bus equals to_bus ({br.from_bus})")
        if abs(br.series_impedance) == 0:
            diags.append(f"branch {k}: zero series impedance")
        if not br.thermal_current_limit > 0:
            diags.append(f"branch {k}: thermal current limit must be positive")
    ic = list(case.interconnections)
    if not ic:
        diags.append("no interconnections")
    seen = set()
    for k in ic:
        if not 0 <= k < len(case.branches):
            diags.append(f"interconnection {k} is not a valid branch index")
        if k in seen:
            diags.append(f"interconnection {k} listed twice")
        seen.add(k)
    for fl in case.flexibilities:
        if not 0 <= fl.bus < n:
            diags.append(f"flexibility at bus {fl.bus}: bus does not exist")
        if not fl.delta_p_min <= 0 <= fl.delta_p_max:
            diags.append(f"flexibility at bus {fl.bus}: active bounds exclude 0 (zero deviation infeasible)")
        if not fl.delta_q_min <= 0 <= fl.delta_q_max:
            diags.append(f"flexibility at bus {fl.bus}: reactive bounds exclude 0 (zero deviation infeasible)")
    lim = case.limits
    for name in ("v_min", "v_max", "delta_min", "delta_max"):
        if len(getattr(lim, name)) != n:
            diags.append(f"limits.{name} has length {len(getattr(lim, name))}, expected {n}")
    if len(lim.v_min) == n and len(lim.v_max) == n and np.any(lim.v_min >= lim.v_max):
        diags.append("limits: v_min must be below v_max")
    return diags


def build_admittance(case: GridCase) -> AdmittanceMatrix:
    """Assemble the bus admittance matrix from pi-model branches and bus shunts."""
    n = case.n_bus
    Y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        i, j = br.from_bus, br.to_bus
        ys = br.series_admittance
        half = br.total_shunt_admittance / 2
        Y[i, i] += ys + half
        Y[j, j] += ys + half
        Y[i, j] -= ys
        Y[j, i] -= ys
    for bus in case.buses:
        Y[bus.index, bus.index] += bus.shunt_admittance
    return AdmittanceMatrix(Y)


# --- JSON ---------------------------------------------------------------------------

_BUS_FIELDS = {"index": int, "kind": str, "p_mw": float, "q_mvar": float,
               "shunt_g_pu": float, "shunt_b_pu": float}
_BRANCH_FIELDS = {"from": int, "to": int, "r_pu": float, "x_pu": float,
                  "b_shunt_pu": float, "i_max_pu": float}
_FLEX_FIELDS = {"bus": int, "dp_min_mw": float, "dp_max_mw": float,
                "dq_min_mvar": float, "dq_max_mvar": float}


def _require(obj, fields, where):
    if not isinstance(obj, dict):
        raise CaseError(f"{where}: expected an object")
    out = {}
    for name, typ in fields.items():
        if name not in obj:
            raise CaseError(f"{where}: missing field {name!r}")
        val = obj[name]
        if typ is int:
            ok = isinstance(val, int) and not isinstance(val, bool)
        elif typ is float:
            ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        else:
            ok = isinstance(val, typ)
        if not ok:
            raise CaseError(f"{where}: field {name!r} must be {typ.__name__}, got {type(val).__name__}")
        out[name] = typ(val)
    return out


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def case_from_dict(data: dict) -> GridCase:
    if not isinstance(data, dict):
        raise CaseError("case: expected a JSON object")
    for key in ("base_power_mva", "buses", "branches", "interconnections", "limits"):
        if key not in data:
            raise CaseError(f"case: missing field {key!r}")
    base = data["base_power_mva"]
    if not _number(base) or base <= 0:
        raise CaseError("case: base_power_mva must be a positive number")
    base = float(base)

    buses = []
    for k, raw in enumerate(data["buses"]):
        b = _require(raw, _BUS_FIELDS, f"buses[{k}]")
        v_set = raw.get("v_set_pu", 1.0)
        if not _number(v_set):
            raise CaseError(f"buses[{k}]: field 'v_set_pu' must be float")
        buses.append(Bus(b["index"], b["kind"], b["p_mw"] / base, b["q_mvar"] / base,
                         complex(b["shunt_g_pu"], b["shunt_b_pu"]), float(v_set)))
    buses.sort(key=lambda b: b.index)

    branches = []
    for k, raw in enumerate(data["branches"]):
        b = _require(raw, _BRANCH_FIELDS, f"branches[{k}]")
        branches.append(Branch(b["from"], b["to"], complex(b["r_pu"], b["x_pu"]),
                               complex(0.0, b["b_shunt_pu"]), b["i_max_pu"]))

    ic = data["interconnections"]
    if not isinstance(ic, list) or not all(isinstance(k, int) and not isinstance(k, bool) for k in ic):
        raise CaseError("interconnections: expected a list of branch indices")

    flexes = []
    for k, raw in enumerate(data.get("flexibilities", [])):
        f = _require(raw, _FLEX_FIELDS, f"flexibilities[{k}]")
        flexes.append(NodeFlexibility(f["bus"], f["dp_min_mw"] / base, f["dp_max_mw"] / base,
                                      f["dq_min_mvar"] / base, f["dq_max_mvar"] / base))

    lim_raw = data["limits"]
    if not isinstance(lim_raw, dict):
        raise CaseError("limits: expected an object")
    for key in ("v_min_pu", "v_max_pu"):
        if key not in lim_raw:
            raise CaseError(f"limits: missing field {key!r}")
    lim_vals = {}
    for key, default in (("v_min_pu", None), ("v_max_pu", None),
                         ("delta_min_rad", -math.pi / 2), ("delta_max_rad", math.pi / 2)):
        val = lim_raw.get(key, default)
        if not (_number(val) or (isinstance(val, list) and all(_number(x) for x in val))):
            raise CaseError(f"limits: field {key!r} must be a number or list of numbers")
        lim_vals[key] = val
    limits = OperatingLimits.uniform(len(buses), lim_vals["v_min_pu"], lim_vals["v_max_pu"],
                                     lim_vals["delta_min_rad"], lim_vals["delta_max_rad"])
    return GridCase(base, tuple(buses), tuple(branches), tuple(ic), tuple(flexes), limits)


def load_grid_case(source: str) -> GridCase:
    """Parse a case from JSON text and validate it.

    Raises
    ------
    CaseError
        On malformed JSON, schema violations or broken invariants.  For the
        latter, ``diagnostics`` lists every problem found.
    """
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise CaseError(f"invalid JSON: {exc}") from exc
    case = case_from_dict(data)
    diags = validate_case(case)
    if diags:
        raise CaseError("; ".join(diags), diags)
    return case


def read_grid_case(path) -> GridCase:
    with open(path, encoding="utf-8") as fh:
        return load_grid_case(fh.read())


def case_to_dict(case: GridCase) -> dict:
    base = case.base_power

    def scalar_or_list(a):
        a = np.asarray(a, dtype=float)
        return float(a[0]) if a.size and np.all(a == a[0]) else [float(x) for x in a]

    buses = []
    for b in case.buses:
        entry = {"index": b.index, "kind": b.kind, "p_mw": b.p_inj * base, "q_mvar": b.q_inj * base,
                 "shunt_g_pu": b.shunt_admittance.real, "shunt_b_pu": b.shunt_admittance.imag}
        if b.v_set != 1.0:
            entry["v_set_pu"] = b.v_set
        buses.append(entry)
    return {
        "base_power_mva": base,
        "buses": buses,
        "branches": [
            {"from": br.from_bus, "to": br.to_bus, "r_pu": br.series_impedance.real,
             "x_pu": br.series_impedance.imag, "b_shunt_pu": br.total_shunt_admittance.imag,
             "i_max_pu": br.thermal_current_limit}
            for br in case.branches
        ],
        "interconnections": list(case.interconnections),
        "flexibilities": [
            {"bus": f.bus, "dp_min_mw": f.delta_p_min * base, "dp_max_mw": f.delta_p_max * base,
             "dq_min_mvar": f.delta_q_min * base, "dq_max_mvar": f.delta_q_max * base}
            for f in case.flexibilities
        ],
        "limits": {"v_min_pu": scalar_or_list(case.limits.v_min),
                   "v_max_pu": scalar_or_list(case.limits.v_max),
                   "delta_min_rad": scalar_or_list(case.limits.delta_min),
                   "delta_max_rad": scalar_or_list(case.limits.delta_max)},
    }


def dump_grid_case(case: GridCase) -> str:
    return json.dumps(case_to_dict(case), indent=2)
