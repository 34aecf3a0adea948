import pathlib

import pytest

from hemogp import build_kernel, load_scenario, run_ensemble

ROOT = pathlib.Path(__file__).resolve().parents[1]
SCENARIO_DIR = ROOT / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir():
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def ys_scenario():
    return load_scenario(SCENARIO_DIR / "yshape.toml")


@pytest.fixture(scope="session")
def tiny_scenario(ys_scenario):
    # 12 nodes per vessel, 20 snapshots: cheap enough for unit tests
    return ys_scenario.with_resolution(grid_points=12, snapshots=20)


@pytest.fixture(scope="session")
def tiny_ensemble(tiny_scenario):
    sc = tiny_scenario
    return run_ensemble(sc.network, sc.randomization, 6, seed=3, m=sc.m,
                        cfg=sc.solver)


@pytest.fixture(scope="session")
def tiny_kernel(tiny_ensemble):
    return build_kernel(tiny_ensemble, energy_threshold=0.99,
                        keep_right_vectors=True)
