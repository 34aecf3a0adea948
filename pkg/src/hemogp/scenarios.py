"""Scenario fixtures: one self-contained TOML document describing the network,
the randomization law, solver settings, and measurement layouts."""

import copy
from dataclasses import dataclass, replace

import numpy as np
from numpy.random import Generator, Philox

from .ensemble import (RandomizationSpec, apply_sample, randomization_from_dict,
                       sample_parameters)
from .errors import ConfigError
from .gp import MeasurementSet
from .network import network_from_dict
from .solver import SolverConfig, simulate, solver_config_from_dict

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


@dataclass
class LayoutSpec:
    """Where and when synthetic sensors sample a truth run. `position` is
    'inlet' / 'mid' / 'outlet' or a coordinate in meters (snapped to the
    nearest truth grid node; the snapped value is what gets recorded)."""

    name: str
    vessels: list
    position: object
    dt: float
    noise: float

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ConfigError(f"layout {self.name}: dt must be positive")
        if self.noise < 0.0:
            raise ConfigError(f"layout {self.name}: noise fraction must be >= 0")


@dataclass
class Scenario:
    name: str
    network: object
    randomization: RandomizationSpec
    n_samples: int
    m: int
    energy_threshold: float
    holdout_seed: int
    layouts: dict
    solver: SolverConfig

    def with_resolution(self, grid_points=None, snapshots=None):
        """Copy with overridden per-vessel grid resolution and/or snapshot
        count; used to scale fixtures down without touching the files."""
        sc = copy.deepcopy(self)
        if grid_points is not None:
            for v in sc.network.vessels.values():
                v.grid_points = int(grid_points)
        if snapshots is not None:
            sc.m = int(snapshots)
        return sc


def load_scenario(path):
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    net = network_from_dict(doc)
    rand = randomization_from_dict(doc.get("randomization", {}), net)
    solver = solver_config_from_dict(doc.get("solver", {}))
    sc = doc.get("scenario", {})
    layouts = {}
    for name, tab in sc.get("layout", {}).items():
        vessels = tab.get("vessels", "all")
        if vessels == "all":
            vessels = net.vessel_ids
        layouts[name] = LayoutSpec(
            name=name,
            vessels=[int(v) for v in vessels],
            position=tab.get("position", "inlet"),
            dt=float(tab.get("dt", net.period / 100)),
            noise=float(tab.get("noise", 0.0)),
        )
        for vid in layouts[name].vessels:
            if vid not in net.vessels:
                raise ConfigError(f"layout {name}: unknown vessel {vid}")
    return Scenario(
        name=str(sc.get("name", "scenario")),
        network=net,
        randomization=rand,
        n_samples=int(sc.get("samples", 100)),
        m=int(sc.get("snapshots", 160)),
        energy_threshold=float(sc.get("energy_threshold", 0.99)),
        holdout_seed=int(sc.get("holdout_seed", 9000)),
        layouts=layouts,
        solver=solver,
    )


def holdout_truth(scenario, seed=None, index=0):
    """Simulate one held-out randomized sample (never part of an ensemble
    unless seeds are reused). Returns (sample, SimulationResult)."""
    seed = scenario.holdout_seed if seed is None else seed
    sample = sample_parameters(scenario.randomization, scenario.network, seed, index)
    net = apply_sample(scenario.network, sample)
    result = simulate(net, cfg=scenario.solver, m=scenario.m)
    return sample, result


def _position_index(layout, xg):
    n = len(xg)
    if layout.position == "inlet":
        return 0
    if layout.position == "outlet":
        return n - 1
    if layout.position == "mid":
        return (n - 1) // 2
    try:
        x = float(layout.position)
    except (TypeError, ValueError):
        raise ConfigError(
            f"layout {layout.name}: position must be inlet/mid/outlet or a "
            f"coordinate, got {layout.position!r}"
        )
    return int(np.argmin(np.abs(xg - x)))


def layout_measurements(scenario, layout_name, truth, noise_seed=0, with_noise=True):
    """Extract measurements from a truth run per a named layout.

    Measurement times are whole multiples of the layout dt that exist on the
    truth snapshot grid (dt must be an integer multiple of T/m). Noise is
    zero-mean Gaussian with std = noise_fraction * RMS of the clean values,
    drawn from a Philox stream keyed by (noise_seed, 0).
    """
    if layout_name not in scenario.layouts:
        raise ConfigError(
            f"unknown layout '{layout_name}' (have {sorted(scenario.layouts)})"
        )
    lay = scenario.layouts[layout_name]
    m = truth.m
    T = truth.period
    ratio = lay.dt * m / T
    stride = round(ratio)
    if stride < 1 or abs(ratio - stride) > 1e-6 * max(ratio, 1.0):
        raise ConfigError(
            f"layout {layout_name}: dt = {lay.dt:g} s is not a whole multiple "
            f"of the snapshot spacing {T / m:g} s"
        )
    tidx = np.arange(0, m, stride)

    vs, xs, ts, us = [], [], [], []
    for vid in lay.vessels:
        if vid not in truth.vessel_ids:
            raise ConfigError(f"layout {layout_name}: vessel {vid} not in truth run")
        k = truth.vessel_ids.index(vid)
        xg = truth.x_grids[k]
        j = _position_index(lay, xg)
        row = int(truth.offsets[k]) + j
        vs.append(np.full(len(tidx), vid, dtype=np.int64))
        xs.append(np.full(len(tidx), xg[j]))
        ts.append(truth.t_grid[tidx])
        us.append(truth.u[row, tidx])
    vessel = np.concatenate(vs)
    x = np.concatenate(xs)
    t = np.concatenate(ts)
    clean = np.concatenate(us)

    u = clean
    if with_noise and lay.noise > 0.0:
        rms = float(np.sqrt(np.mean(clean**2)))
        gen = Generator(Philox(key=np.array([noise_seed, 0], dtype=np.uint64)))
        u = clean + gen.normal(0.0, lay.noise * rms, size=len(clean))
    return MeasurementSet(vessel=vessel, x=x, t=t, u=u, u_clean=clean)


def midpoint_queries(result_or_kernel):
    """Query points at every vessel midpoint across the snapshot window."""
    obj = result_or_kernel
    ids = obj.vessel_ids
    xgs = obj.x_grids
    tg = obj.t_grid
    vs, xs, ts = [], [], []
    for vid, xg in zip(ids, xgs):
        half = 0.5 * float(xg[-1])
        vs.append(np.full(len(tg), vid, dtype=np.int64))
        xs.append(np.full(len(tg), half))
        ts.append(np.asarray(tg, dtype=float))
    return np.concatenate(vs), np.concatenate(xs), np.concatenate(ts)
