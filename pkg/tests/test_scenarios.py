"""Scenario loading, measurement layouts, and holdout truth runs."""

from dataclasses import replace

import numpy as np
import pytest

from hemogp import (ConfigError, holdout_truth, layout_measurements,
                    load_scenario)
from hemogp.scenarios import LayoutSpec, midpoint_queries


def with_layout(sc, lay):
    # shallow copy so shared fixtures never see the extra layout
    sc2 = replace(sc)
    sc2.layouts = dict(sc.layouts)
    sc2.layouts[lay.name] = lay
    return sc2


def test_scenario_fields(ys_scenario):
    sc = ys_scenario
    assert sc.network.vessel_ids == [1, 2, 3]
    assert sc.m == 160
    assert sc.n_samples == 200
    assert sc.energy_threshold == 0.9999
    assert sc.holdout_seed == 9001
    assert set(sc.layouts) == {"case1", "case2"}
    assert sc.layouts["case1"].vessels == [1]
    assert sc.layouts["case2"].vessels == [1, 2, 3]
    assert sc.solver.cfl_number == 0.85


def test_with_resolution_is_a_copy(ys_scenario):
    tiny = ys_scenario.with_resolution(grid_points=12, snapshots=20)
    assert tiny.m == 20
    assert all(v.grid_points == 12 for v in tiny.network.vessels.values())
    assert all(v.grid_points == 100 for v in ys_scenario.network.vessels.values())
    assert ys_scenario.m == 160


@pytest.fixture(scope="module")
def tiny_truth(tiny_scenario):
    return tiny_scenario, holdout_truth(tiny_scenario)


def test_holdout_is_deterministic(tiny_truth):
    sc, (sample, res) = tiny_truth
    sample2, res2 = holdout_truth(sc)
    assert sample2.to_dict() == sample.to_dict()
    assert np.array_equal(res2.u, res.u)
    assert sample.seed == sc.holdout_seed
    # a different index gives a different member
    sample3, _ = holdout_truth(sc, index=1)
    assert sample3.to_dict() != sample.to_dict()


def test_layout_times_and_rows(tiny_truth):
    sc, (_, res) = tiny_truth
    # dt = 2*T/m lands on every second snapshot
    lay = LayoutSpec(name="probe", vessels=[1, 3], position="outlet",
                     dt=2 * res.period / res.m, noise=0.0)
    mset = layout_measurements(with_layout(sc, lay), "probe", res)
    assert len(mset) == 2 * (res.m // 2)
    assert set(np.unique(mset.vessel)) == {1, 3}
    assert np.array_equal(mset.u, mset.u_clean)
    sel = mset.vessel == 1
    assert np.array_equal(mset.t[sel], res.t_grid[::2])
    k = res.vessel_ids.index(1)
    assert np.all(mset.x[sel] == res.x_grids[k][-1])
    row = res.u[res.vessel_slice(1)][-1]
    assert np.array_equal(mset.u_clean[sel], row[::2])


def test_layout_noise_is_seeded_and_scaled(tiny_truth):
    sc, (_, res) = tiny_truth
    lay = LayoutSpec(name="noisy", vessels=[1], position="inlet",
                     dt=res.period / res.m, noise=0.05)
    sc2 = with_layout(sc, lay)
    a = layout_measurements(sc2, "noisy", res, noise_seed=5)
    b = layout_measurements(sc2, "noisy", res, noise_seed=5)
    c = layout_measurements(sc2, "noisy", res, noise_seed=6)
    assert np.array_equal(a.u, b.u)
    assert not np.array_equal(a.u, c.u)
    assert np.array_equal(a.u_clean, c.u_clean)
    rms = float(np.sqrt(np.mean(a.u_clean**2)))
    resid = a.u - a.u_clean
    # 20 draws of N(0, 0.05 rms): the sample std stays within a factor ~2
    assert 0.3 * 0.05 * rms < np.std(resid) < 2.5 * 0.05 * rms
    d = layout_measurements(sc2, "noisy", res, with_noise=False)
    assert np.array_equal(d.u, d.u_clean)


def test_layout_stride_must_divide(tiny_truth):
    sc, (_, res) = tiny_truth
    lay = LayoutSpec(name="bad", vessels=[1], position="inlet",
                     dt=res.period / res.m * 1.3, noise=0.0)
    with pytest.raises(ConfigError, match="whole multiple"):
        layout_measurements(with_layout(sc, lay), "bad", res)
    with pytest.raises(ConfigError, match="unknown layout"):
        layout_measurements(sc, "nope", res)


def test_layout_positions(tiny_truth):
    sc, (_, res) = tiny_truth
    xg = res.x_grids[0]
    for pos, expect in (("inlet", xg[0]), ("outlet", xg[-1]),
                        ("mid", xg[(len(xg) - 1) // 2]),
                        (float(xg[4]) + 1e-12, xg[4])):
        lay = LayoutSpec(name="p", vessels=[1], position=pos,
                         dt=res.period / res.m, noise=0.0)
        mset = layout_measurements(with_layout(sc, lay), "p", res)
        assert np.all(mset.x == expect)
    lay = LayoutSpec(name="p", vessels=[1], position="center",
                     dt=res.period / res.m, noise=0.0)
    with pytest.raises(ConfigError, match="position"):
        layout_measurements(with_layout(sc, lay), "p", res)


def test_midpoint_queries(tiny_truth):
    _, (_, res) = tiny_truth
    v, x, t = midpoint_queries(res)
    assert len(v) == 3 * res.m
    for k, vid in enumerate(res.vessel_ids):
        sel = v == vid
        assert np.all(x[sel] == 0.5 * res.x_grids[k][-1])
        assert np.array_equal(t[sel], res.t_grid)


def test_layout_validation():
    with pytest.raises(ConfigError, match="dt"):
        LayoutSpec(name="x", vessels=[1], position="inlet", dt=0.0, noise=0.0)
    with pytest.raises(ConfigError, match="noise"):
        LayoutSpec(name="x", vessels=[1], position="inlet", dt=0.1, noise=-0.1)


def test_scenario_file_errors(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("[vessel\n")
    with pytest.raises(ConfigError):
        load_scenario(p)
