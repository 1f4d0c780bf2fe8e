"""Sampled determination of interdependent interconnection FORs.

Each sweep starts from the base case.  At sample ``k`` the flexibility buses
are down-regulated by one active power step, the reactive deviations from the
base schedule are re-optimized so that their total equals the sweep's
threshold, and the operating point is moved to the LP solution.
"""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .grid_model import GridCase, NodeFlexibility
from .lp_core import (OPTIMAL, LinearProgram, LPSolution, OperatingState, SampleBounds,
                      assemble_for_lp, solve_lp, SOLVER_METHOD)
from .powerflow import ConvergenceError, interconnection_flows, solve_newton_raphson
from .sensitivity import LinearizationError, compute_sensitivities

logger = logging.getLogger(__name__)

BUDGET_EPS = 1e-12


@dataclass(frozen=True)
class Scenario:
    name: str
    priority_interconnection: int
    weight_priority_q: float = -1.0
    weight_other_q: float = 0.1
    weight_dp: float = -1.0
    q_thresh_pos: float = 0.6
    q_thresh_neg: float = -0.6

    def validate(self, case: GridCase | None = None):
        if not self.q_thresh_pos > 0 > self.q_thresh_neg:
            raise ValueError("q_thresh_pos must be positive and q_thresh_neg negative")
        if case is not None and not 0 <= self.priority_interconnection < len(case.interconnections):
            raise ValueError(f"priority_interconnection {self.priority_interconnection} is not a valid "
                             f"interconnection index (case has {len(case.interconnections)})")
        return self


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario
    k_max: int = 20
    relinearize: bool = True


def load_scenario_config(source: str, base_power: float = 100.0) -> ScenarioConfig:
    """Parse a scenario JSON document (thresholds in Mvar)."""
    data = json.loads(source)
    try:
        w = data.get("weights", {})
        scenario = Scenario(
            name=str(data["name"]),
            priority_interconnection=int(data["priority_interconnection"]),
            weight_priority_q=float(w.get("priority_q", -1.0)),
            weight_other_q=float(w.get("other_q", 0.1)),
            weight_dp=float(w.get("dp", -1.0)),
            q_thresh_pos=float(data["q_thresh_pos_mvar"]) / base_power,
            q_thresh_neg=float(data["q_thresh_neg_mvar"]) / base_power,
        )
        k_max = int(data.get("k_max", 20))
        relin = bool(data.get("relinearize", True))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid scenario config: {exc}") from exc
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    return ScenarioConfig(scenario.validate(), k_max, relin)


@dataclass(frozen=True)
class FlexDiscretization:
    bus: int
    k_max: int
    dp_step: float
    dq_min: float
    dq_max: float

    @property
    def budget(self) -> float:
        return self.dp_step * self.k_max


@dataclass
class FORBoundary:
    interconnection: int
    upper: list
    lower: list
    scenario: str
    q_thresh: tuple
    upper_status: list = field(default_factory=list)
    lower_status: list = field(default_factory=list)

    def polygon(self) -> np.ndarray:
        """Closed trace: base point, upper sweep, lower sweep reversed back to the base."""
        up = [pt for pt, st in zip(self.upper, self.upper_status or ["ok"] * len(self.upper)) if _usable(st)]
        lo = [pt for pt, st in zip(self.lower, self.lower_status or ["ok"] * len(self.lower)) if _usable(st)]
        pts = up + lo[:0:-1]
        return np.array(pts, dtype=float).reshape(-1, 2)

    def area(self) -> float:
        return polygon_area(self.polygon())


def _usable(status):
    return status in ("base", OPTIMAL, "ok")


def polygon_area(points) -> float:
    """Shoelace area of a polygon given as an ``(k, 2)`` array of vertices."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


@dataclass
class SampleRecord:
    sweep: str
    k: int
    status: str
    lp: LinearProgram | None = None
    solution: LPSolution | None = None
    dp: np.ndarray | None = None
    dq: np.ndarray | None = None
    predicted_flows: np.ndarray | None = None    # (ic, 2)
    nr_flows: np.ndarray | None = None           # (ic, 2) after the update, if re-solved
    q_total: float | None = None                 # total reactive deviation from base after the sample
    message: str = ""


@dataclass
class AggregationRun:
    case: GridCase
    scenario: Scenario
    k_max: int
    relinearize: bool
    base_flows: np.ndarray
    sign_consistent_q: bool = True
    samples: list = field(default_factory=list)
    solver: str = SOLVER_METHOD

    def sweep_records(self, sweep: str) -> list:
        return [s for s in self.samples if s.sweep == sweep]


def aggregate_rectangular_flexibilities(envelopes) -> NodeFlexibility:
    """Minkowski sum of axis-aligned PQ rectangles at one bus."""
    envelopes = list(envelopes)
    if not envelopes:
        raise ValueError("cannot aggregate an empty list of flexibilities")
    bus = envelopes[0].bus
    if any(e.bus != bus for e in envelopes):
        raise ValueError("all envelopes must share the same bus")
    return NodeFlexibility(bus,
                           sum(e.delta_p_min for e in envelopes), sum(e.delta_p_max for e in envelopes),
                           sum(e.delta_q_min for e in envelopes), sum(e.delta_q_max for e in envelopes))


def merge_flexibilities(case: GridCase) -> GridCase:
    """Replace the case's flexibilities by one aggregated envelope per bus."""
    groups = defaultdict(list)
    for f in case.flexibilities:
        groups[f.bus].append(f)
    return case.with_flexibilities(aggregate_rectangular_flexibilities(groups[b]) for b in sorted(groups))


def discretize_flexibility(flex: NodeFlexibility, k_max: int, direction: str = "down") -> FlexDiscretization:
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    budget = flex.delta_p_min if direction == "down" else flex.delta_p_max
    return FlexDiscretization(flex.bus, k_max, budget / k_max, flex.delta_q_min, flex.delta_q_max)


def update_operating_point(case: GridCase, lp_solution: LPSolution) -> GridCase:
    """Apply the solved dp/dq at the flexibility buses and shift their envelopes.

    The remaining envelope at a bus is the original one translated by the
    applied deviation, so budgets shrink by exactly what was used.
    """
    if not lp_solution.optimal:
        raise ValueError("can only apply an optimal LP solution")
    n = case.n_bus
    x = lp_solution.x
    dp, dq = x[:n], x[n:2 * n]
    flex_buses = case.flexibility_buses
    p, q = case.p_scheduled.copy(), case.q_scheduled.copy()
    p[flex_buses] += dp[flex_buses]
    q[flex_buses] += dq[flex_buses]
    new_flex = []
    for f in case.flexibilities:
        bounds = [f.delta_p_min - dp[f.bus], f.delta_p_max - dp[f.bus],
                  f.delta_q_min - dq[f.bus], f.delta_q_max - dq[f.bus]]
        for k, sign in ((0, -1), (1, 1), (2, -1), (3, 1)):
            if sign * bounds[k] < 0:
                if sign * bounds[k] < -1e-6:
                    logger.warning("flexibility at bus %d: budget overrun %.3e clamped to zero", f.bus, bounds[k])
                bounds[k] = 0.0
        new_flex.append(NodeFlexibility(f.bus, *bounds))
    return case.with_injections(p, q).with_flexibilities(new_flex)


def _sample_bounds(case: GridCase, steps: dict, direction: str) -> SampleBounds:
    n = case.n_bus
    dp_min, dp_max, dq_min, dq_max = (np.zeros(n) for _ in range(4))
    for f in case.flexibilities:
        step = steps[f.bus]
        if direction == "down":
            dp_min[f.bus] = max(step, f.delta_p_min)
        else:
            dp_max[f.bus] = min(step, f.delta_p_max)
        dq_min[f.bus], dq_max[f.bus] = f.delta_q_min, f.delta_q_max
    return SampleBounds(dp_min, dp_max, dq_min, dq_max, -1.0 if direction == "down" else 1.0)


def restrict_reactive_direction(case: GridCase, sweep: str) -> GridCase:
    """Allow only reactive injection (upper sweep) or only absorption (lower sweep)."""
    flex = []
    for f in case.flexibilities:
        if sweep == "upper":
            flex.append(NodeFlexibility(f.bus, f.delta_p_min, f.delta_p_max, 0.0, f.delta_q_max))
        else:
            flex.append(NodeFlexibility(f.bus, f.delta_p_min, f.delta_p_max, f.delta_q_min, 0.0))
    return case.with_flexibilities(flex)


def _run_sweep(run: AggregationRun, base_case, base_solution, base_bundle, steps, sweep, q_thresh,
               direction, pf_options):
    case = restrict_reactive_direction(base_case, sweep) if run.sign_consistent_q else base_case
    ic = list(base_case.interconnections)
    n = base_case.n_bus
    flex_buses = base_case.flexibility_buses
    solution, bundle = base_solution, base_bundle
    state = OperatingState.from_solution(base_solution)
    anchor = interconnection_flows(base_solution, base_case)
    q_base = base_case.q_scheduled
    stopped = None
    for k in range(1, run.k_max + 1):
        if stopped:
            run.samples.append(SampleRecord(sweep, k, "early_stop", message=stopped))
            continue
        bounds = _sample_bounds(case, steps, direction)
        q_used = float(np.sum(case.q_scheduled[flex_buses] - q_base[flex_buses]))
        lp = assemble_for_lp(bundle, case, bounds, run.scenario, q_thresh - q_used, sweep,
                             state=None if run.relinearize else state)
        sol = solve_lp(lp)
        if not sol.optimal:
            stopped = f"LP {sol.status} at sample {k}"
            logger.info("%s sweep stopped: %s", sweep, stopped)
            run.samples.append(SampleRecord(sweep, k, sol.status, lp, sol, message=stopped))
            continue
        blk = lp.blocks()
        x = sol.x
        slack = x[blk["slack"]]
        predicted = anchor + np.stack([slack[:len(ic)], slack[len(ic):]], axis=1)
        case = update_operating_point(case, sol)
        record = SampleRecord(sweep, k, OPTIMAL, lp, sol, x[blk["dp"]].copy(), x[blk["dq"]].copy(),
                              predicted,
                              q_total=float(np.sum(case.q_scheduled[flex_buses] - q_base[flex_buses])))
        if run.relinearize:
            try:
                solution = solve_newton_raphson(case, **pf_options)
                bundle = compute_sensitivities(solution, case)
            except (ConvergenceError, LinearizationError) as exc:
                stopped = f"re-linearization failed after sample {k}: {exc}"
                record.message = stopped
                run.samples.append(record)
                continue
            record.nr_flows = interconnection_flows(solution, case)
            anchor = record.nr_flows
        else:
            anchor = predicted
            i_lin = np.concatenate([bundle.operating_point.branch_i[:, 0], bundle.operating_point.branch_i[:, 1]])
            di = np.zeros_like(i_lin)
            di[bundle.current_rows_valid] = (np.hstack([bundle.ID_TB, bundle.IU_TB])
                                             @ np.concatenate([x[blk["ddelta"]], x[blk["dv"]]])
                                             )[bundle.current_rows_valid] * i_lin[bundle.current_rows_valid]
            state = OperatingState(state.v + x[blk["dv"]], state.delta + x[blk["ddelta"]], state.i + di)
        run.samples.append(record)


def run_for_determination(case: GridCase, scenario: Scenario, k_max: int = 20, relinearize: bool = True,
                          direction: str = "down", pf_options: dict | None = None,
                          sign_consistent_q: bool = True) -> AggregationRun:
    """Sweep maximum positive then maximum negative vertical reactive transfer.

    Parameters
    ----------
    case : GridCase
        Base case with at least one flexibility.
    scenario : Scenario
    k_max : int
        Number of active power samples per sweep.
    relinearize : bool
        Re-solve the power flow and rebuild sensitivities after every sample.
        When False the base sensitivities are kept and the operating state is
        advanced with the linear predictions.
    direction : {"down", "up"}
        Which side of the active power envelope is sampled.
    sign_consistent_q : bool
        Restrict reactive deviations to injection in the upper sweep and to
        absorption in the lower sweep.  Without it the LP may circulate
        reactive power between flexibility buses.
    """
    if direction not in ("down", "up"):
        raise ValueError("direction must be 'down' or 'up'")
    if not case.flexibilities:
        raise ValueError("case has no flexibilities")
    scenario.validate(case)
    pf_options = dict(pf_options or {})
    base_case = merge_flexibilities(case)
    base_solution = solve_newton_raphson(base_case, **pf_options)
    base_bundle = compute_sensitivities(base_solution, base_case)
    steps = {f.bus: discretize_flexibility(f, k_max, direction).dp_step for f in base_case.flexibilities}
    run = AggregationRun(base_case, scenario, k_max, relinearize,
                         interconnection_flows(base_solution, base_case), sign_consistent_q)
    _run_sweep(run, base_case, base_solution, base_bundle, steps, "upper", scenario.q_thresh_pos,
               direction, pf_options)
    _run_sweep(run, base_case, base_solution, base_bundle, steps, "lower", scenario.q_thresh_neg,
               direction, pf_options)
    return run


def extract_boundaries(run: AggregationRun) -> list[FORBoundary]:
    out = []
    for j in range(len(run.case.interconnections)):
        base = tuple(float(v) for v in run.base_flows[j])
        traces = {}
        for sweep in ("upper", "lower"):
            pts, sts = [base], ["base"]
            for rec in run.sweep_records(sweep):
                if rec.predicted_flows is not None:
                    pts.append(tuple(float(v) for v in rec.predicted_flows[j]))
                else:
                    pts.append((float("nan"), float("nan")))
                sts.append(rec.status)
            traces[sweep] = (pts, sts)
        out.append(FORBoundary(j, traces["upper"][0], traces["lower"][0], run.scenario.name,
                               (run.scenario.q_thresh_pos, run.scenario.q_thresh_neg),
                               traces["upper"][1], traces["lower"][1]))
    return out
