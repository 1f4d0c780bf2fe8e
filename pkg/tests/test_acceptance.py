"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python tests/test_acceptance.py``.  Tolerances are pinned below.
"""
import time

import numpy as np
import pytest

from flexagg.cli import main as cli_main
from flexagg.for_engine import Scenario, extract_boundaries, run_for_determination
from flexagg.grid_model import build_admittance, read_grid_case
from flexagg.lp_core import OPTIMAL
from flexagg.powerflow import compute_bus_injections, solve_newton_raphson
from flexagg.sensitivity import compute_sensitivities
from flexagg.validation import (jacobian_fd_check, lp_constraint_audit, ptdf_deviation_sweep,
                                ptdf_prediction_error, slack_recomputation_error)

from conftest import data_path
from runs import scenario_run

NR_MISMATCH = 1e-8
NR_MAX_ITER = 10
NR_RUNTIME_S = 0.100
FD_STEP = 1e-6
FD_TOL = 1e-6
PTDF_EPS = 0.01
PTDF_REL_TOL = 0.01
HALVING_RANGE = (1.6, 2.4)
LP_TOL = 1e-9
THRESH_TOL = 1e-9
Q_HIGH, Q_LOW = 0.60, 0.40
NEST_TOL = 1e-9
RUNTIME_S = 10.0

FIXTURES = ("case5.json", "case34.json")


def report(number, ok, detail, capsys=None):
    line = f"[acceptance {number:2d}] {'PASS' if ok else 'FAIL'}: {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


def criterion_1():
    worst_mis, worst_it, worst_t, resid = 0.0, 0, 0.0, 0.0
    for name in FIXTURES:
        case = read_grid_case(data_path(name))
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            sol = solve_newton_raphson(case, tolerance=NR_MISMATCH, flat_start=True)
            times.append(time.perf_counter() - t0)
        p, q = compute_bus_injections(sol.v, sol.delta, build_admittance(case))
        pq = case.non_slack
        resid = max(resid, np.max(np.abs(p[pq] - case.p_scheduled[pq])), np.max(np.abs(q[pq] - case.q_scheduled[pq])))
        worst_mis = max(worst_mis, sol.report.final_mismatch)
        worst_it = max(worst_it, sol.report.iterations)
        worst_t = max(worst_t, float(np.median(times)))
    ok = worst_mis < NR_MISMATCH and worst_it <= NR_MAX_ITER and resid < NR_MISMATCH and worst_t < NR_RUNTIME_S
    return ok, (f"max mismatch {worst_mis:.2e} p.u., max iterations {worst_it}, injection residual {resid:.2e}, "
                f"median solve {worst_t * 1e3:.2f} ms")


def criterion_2():
    errs = [jacobian_fd_check(read_grid_case(data_path(n)), FD_STEP) for n in FIXTURES]
    return max(errs) < FD_TOL, f"FD relative errors {', '.join(f'{e:.2e}' for e in errs)} (limit {FD_TOL:g})"


def criterion_3():
    case = read_grid_case(data_path("case34.json"))
    sol = solve_newton_raphson(case, tolerance=1e-12)
    bundle = compute_sensitivities(sol, case)
    worst_rel, ratios = 0.0, []
    for bus in case.non_slack:
        for ic in range(len(case.interconnections)):
            pred, true = ptdf_prediction_error(case, ic, bus, "q", PTDF_EPS, sol, bundle)
            err = abs(pred[1] - true[1])
            worst_rel = max(worst_rel, err / abs(true[1]))
            pred_h, true_h = ptdf_prediction_error(case, ic, bus, "q", PTDF_EPS / 2, sol, bundle)
            ratios.append(err / abs(pred_h[1] - true_h[1]))
    accurate = worst_rel < PTDF_REL_TOL
    lo, hi = HALVING_RANGE
    halving = lo <= min(ratios) and max(ratios) <= hi
    return accurate and halving, (f"max relative dq_ij error {worst_rel:.2e} (limit {PTDF_REL_TOL:g}: "
                                  f"{'ok' if accurate else 'exceeded'}); absolute error halving ratio "
                                  f"{min(ratios):.3f}..{max(ratios):.3f} (required [{lo}, {hi}]: "
                                  f"{'ok' if halving else 'outside'})")


def criterion_4():
    case = read_grid_case(data_path("case34.json"))
    margin, points = np.inf, 0
    for bus in case.flexibility_buses:
        for ic in range(len(case.interconnections)):
            dp = ptdf_deviation_sweep(case, ic, bus, "p")
            dq = ptdf_deviation_sweep(case, ic, bus, "q")
            nonzero = dp.magnitudes > 0
            diff = np.abs(dp.deviations[nonzero]) - np.abs(dq.deviations[nonzero])
            margin = min(margin, float(np.min(diff)))
            points += int(nonzero.sum())
    return margin > 0, f"{points} sweep points, min(|dev_p| - |dev_q|) = {margin:.3e}"


def _all_runs():
    return [scenario_run(s, q) for q in (Q_HIGH, Q_LOW) for s in range(3)]


def criterion_5():
    count, cols_ok, violations, slack_err = 0, True, 0, 0.0
    for run, _ in _all_runs():
        n, ic = run.case.n_bus, len(run.case.interconnections)
        bundle_case = run.case
        for rec in run.samples:
            if rec.lp is None:
                continue
            cols_ok &= rec.lp.m == 4 * n + 2 * ic
            if rec.status != OPTIMAL:
                continue
            count += 1
            violations += len(lp_constraint_audit(rec.lp, rec.solution, LP_TOL))
            x = rec.solution.x
            blk = rec.lp.blocks()
            # slack rows rebuilt from the program's own PTDF coefficients
            rows = rec.lp.A_eq[2 * n:2 * n + 2 * ic]
            rebuilt = rows[:, blk["dp"]] @ x[blk["dp"]] + rows[:, blk["dq"]] @ x[blk["dq"]]
            slack_err = max(slack_err, float(np.max(np.abs(rebuilt - x[blk["slack"]]))))
    # one independent recomputation from a fresh bundle at the base point
    case = read_grid_case(data_path("case34.json"))
    sol = solve_newton_raphson(case)
    bundle = compute_sensitivities(sol, case)
    first = scenario_run(0, Q_HIGH)[0].samples[0]
    slack_err = max(slack_err, slack_recomputation_error(first.lp, first.solution, bundle, case))
    ok = cols_ok and count > 0 and violations == 0 and slack_err <= LP_TOL
    return ok, (f"{count} optimal programs, column count {'ok' if cols_ok else 'wrong'}, "
                f"{violations} audit violations, max slack recomputation error {slack_err:.2e}")


def criterion_6():
    worst, count = 0.0, 0
    for run, _ in _all_runs():
        sc = run.scenario
        n = run.case.n_bus
        flex = run.case.flexibility_buses
        for rec in run.samples:
            if rec.status != OPTIMAL:
                continue
            target = sc.q_thresh_pos if rec.sweep == "upper" else sc.q_thresh_neg
            rhs = rec.lp.b_eq[-1]
            worst = max(worst, abs(rec.solution.x[n:2 * n][flex].sum() - rhs), abs(rec.q_total - target))
            count += 1
    return worst <= THRESH_TOL and count > 0, f"{count} optimal samples, max threshold residual {worst:.2e}"


def _qmax(bd):
    return np.maximum(np.abs([p[1] for p in bd.upper]), np.abs([p[1] for p in bd.lower]))


def criterion_7():
    runs = {s: scenario_run(s, Q_HIGH)[1] for s in range(3)}
    ok, details = True, []
    for s in range(3):
        mine = _qmax(runs[s][s])
        areas = [runs[o][s].area() for o in range(3)]
        dominates = all(np.all(mine >= _qmax(runs[o][s]) - 1e-12) for o in range(3) if o != s)
        largest = all(areas[s] > areas[o] for o in range(3) if o != s)
        ok &= dominates and largest
        details.append(f"ic{s + 1}: |q| dominance {'ok' if dominates else 'violated'}, "
                       f"areas {'/'.join(f'{a * 1e4:.0f}' for a in areas)} MW*Mvar")
    return ok, "; ".join(details)


def criterion_8():
    worst = np.inf
    for s in range(3):
        high = scenario_run(s, Q_HIGH)[1]
        low = scenario_run(s, Q_LOW)[1]
        for bh, bl in zip(high, low):
            uh, lh = np.array([p[1] for p in bh.upper]), np.array([p[1] for p in bh.lower])
            ul, ll = np.array([p[1] for p in bl.upper]), np.array([p[1] for p in bl.lower])
            lo_h, hi_h = np.minimum(uh, lh), np.maximum(uh, lh)
            lo_l, hi_l = np.minimum(ul, ll), np.maximum(ul, ll)
            worst = min(worst, float(np.min(lo_l - lo_h)), float(np.min(hi_h - hi_l)))
    return worst >= -NEST_TOL, f"min containment margin {worst:.3e} p.u. over 3 scenarios x 3 interconnections"


def criterion_9():
    case = read_grid_case(data_path("case34.json"))
    t0 = time.perf_counter()
    for s in range(3):
        run = run_for_determination(case, Scenario(f"s{s}", s, q_thresh_pos=Q_HIGH, q_thresh_neg=-Q_HIGH), 20, True)
        extract_boundaries(run)
    elapsed = time.perf_counter() - t0
    return elapsed < RUNTIME_S, f"3 scenarios, k_max 20, re-linearization on: {elapsed:.2f} s"


def criterion_10(tmp_dir):
    import io
    from contextlib import redirect_stdout
    outs = []
    for tag in ("a", "b"):
        d = tmp_dir / tag
        with redirect_stdout(io.StringIO()):
            code = cli_main(["for", str(data_path("case34.json")), str(data_path("scenario1.json")),
                             "--out-dir", str(d)])
        outs.append((code, {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}))
    same = outs[0][1] == outs[1][1] and len(outs[0][1]) == 3
    return same and outs[0][0] == outs[1][0] == 0, f"{len(outs[0][1])} CSVs, byte-identical: {same}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9]


@pytest.mark.parametrize("number", range(1, 10))
def test_criterion(number, capsys):
    ok, detail = CRITERIA[number - 1]()
    assert report(number, ok, detail, capsys), detail


def test_criterion_10(tmp_path, capsys):
    ok, detail = criterion_10(tmp_path)
    assert report(10, ok, detail, capsys), detail


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    results = [report(k + 1, *fn()) for k, fn in enumerate(CRITERIA)]
    with tempfile.TemporaryDirectory() as d:
        results.append(report(10, *criterion_10(Path(d))))
    sys.exit(0 if all(results) else 1)
