"""Cached FOR runs shared by the engine and acceptance tests."""
from functools import lru_cache

from flexagg.for_engine import Scenario, extract_boundaries, run_for_determination
from flexagg.grid_model import read_grid_case

from conftest import data_path


@lru_cache(maxsize=None)
def case(name="case34.json"):
    return read_grid_case(data_path(name))


@lru_cache(maxsize=None)
def scenario_run(priority, q_thresh, k_max=20, relinearize=True, name="case34.json"):
    sc = Scenario(f"scenario{priority + 1}", priority, q_thresh_pos=q_thresh, q_thresh_neg=-q_thresh)
    run = run_for_determination(case(name), sc, k_max, relinearize)
    return run, extract_boundaries(run)
