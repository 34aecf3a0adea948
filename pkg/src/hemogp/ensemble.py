"""Stochastic ensemble generation: parameter randomization and batch solves.

Each randomized scalar gets one draw psi ~ U[-0.5, 0.5] from a counter-based
Philox stream keyed by (seed, sample index), so sample i is reproducible in
isolation. Draw order is fixed: inlets by vessel id (base, then peaks,
centers, widths), outlets by vessel id (resistance, compliance), then one
area multiplier per vessel by id. A draw is consumed even when its sigma is
zero, so streams align across configs that share a network shape.

Inlet parameters and the area profile perturb additively / multiplicatively:
  additive:        value = mean + sigma * psi
  multiplicative:  value = mean * (1 + sigma * psi)
Vessel stiffness beta is never rescaled by the area draw; the multiplier
perturbs the reference area profile only.
"""

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from .errors import ConfigError, InvariantError, SampleRejectedError
from .network import NetworkTopology, Vessel, WindkesselOutlet
from .solver import SolverConfig, simulate
from .waveform import InletWaveform

MANIFEST_SCHEMA = 1


@dataclass(frozen=True)
class InletSigma:
    base: float = 0.0
    peaks: tuple = ()
    centers: tuple = ()
    widths: tuple = ()


@dataclass(frozen=True)
class RandomizationSpec:
    """Standard deviations-of-support for every randomized quantity. Missing
    entries mean sigma 0 (still drawn). Multiplicative sigmas must satisfy
    sigma < 2 so mean*(1 - sigma/2) stays positive."""

    inlet: dict      # vessel id -> InletSigma (additive)
    outlet: dict     # vessel id -> (sigma_resistance, sigma_compliance), multiplicative
    area: dict       # vessel id -> sigma, multiplicative

    def __post_init__(self):
        for vid, ins in self.inlet.items():
            for name, vals in (("peaks", ins.peaks), ("centers", ins.centers),
                               ("widths", ins.widths)):
                if any(v < 0.0 for v in vals):
                    raise ConfigError(f"inlet {vid}: negative sigma in {name}")
            if ins.base < 0.0:
                raise ConfigError(f"inlet {vid}: negative base sigma")
        for vid, (sr, sc) in self.outlet.items():
            if not (0.0 <= sr < 2.0 and 0.0 <= sc < 2.0):
                raise ConfigError(
                    f"outlet {vid}: multiplicative sigmas must lie in [0, 2), "
                    f"got ({sr}, {sc})"
                )
        for vid, sa in self.area.items():
            if not 0.0 <= sa < 2.0:
                raise ConfigError(
                    f"area sigma for vessel {vid} must lie in [0, 2), got {sa}"
                )


def randomization_from_dict(tab, net):
    """Parse a [randomization] TOML table against a network."""
    known = {"inlet", "outlet", "area"}
    bad = set(tab) - known
    if bad:
        raise ConfigError(f"[randomization]: unknown keys {sorted(bad)}")
    inlet = {}
    for key, sub in tab.get("inlet", {}).items():
        vid = int(key)
        if vid not in net.inlets:
            raise ConfigError(f"[randomization.inlet.{key}]: vessel has no inlet")
        nw = net.inlets[vid].n_peaks
        ins = InletSigma(
            base=float(sub.get("sigma_base", 0.0)),
            peaks=tuple(float(v) for v in sub.get("sigma_peaks", [0.0] * nw)),
            centers=tuple(float(v) for v in sub.get("sigma_centers", [0.0] * nw)),
            widths=tuple(float(v) for v in sub.get("sigma_widths", [0.0] * nw)),
        )
        for name, vals in (("sigma_peaks", ins.peaks), ("sigma_centers", ins.centers),
                           ("sigma_widths", ins.widths)):
            if len(vals) != nw:
                raise ConfigError(
                    f"[randomization.inlet.{key}]: {name} must have {nw} entries"
                )
        inlet[vid] = ins
    outlet = {}
    for key, sub in tab.get("outlet", {}).items():
        vid = int(key)
        if vid not in net.outlets:
            raise ConfigError(f"[randomization.outlet.{key}]: vessel has no outlet")
        outlet[vid] = (
            float(sub.get("sigma_resistance", 0.0)),
            float(sub.get("sigma_compliance", 0.0)),
        )
    area = {}
    atab = tab.get("area", {})
    if "sigma" in atab and not isinstance(atab["sigma"], dict):
        area = {vid: float(atab["sigma"]) for vid in net.vessels}
    else:
        for key, val in atab.get("sigma", {}).items():
            vid = int(key)
            if vid not in net.vessels:
                raise ConfigError(f"[randomization.area]: unknown vessel {key}")
            area[vid] = float(val)
    return RandomizationSpec(inlet=inlet, outlet=outlet, area=area)


@dataclass
class ParameterSample:
    """Realized parameters for one ensemble member."""

    seed: int
    index: int
    waveforms: dict        # vessel id -> InletWaveform
    outlets: dict          # vessel id -> (resistance, compliance)
    area_scale: dict       # vessel id -> multiplier

    def to_dict(self):
        return {
            "seed": self.seed,
            "index": self.index,
            "inlets": {
                str(vid): {
                    "base": wf.base,
                    "peaks": list(wf.peaks),
                    "centers": list(wf.centers),
                    "widths": list(wf.widths),
                    "period": wf.period,
                }
                for vid, wf in self.waveforms.items()
            },
            "outlets": {
                str(vid): {"resistance": rt, "compliance": c}
                for vid, (rt, c) in self.outlets.items()
            },
            "area_scale": {str(vid): s for vid, s in self.area_scale.items()},
        }


def sample_parameters(spec, net, seed, index):
    """Draw one ParameterSample. Raises SampleRejectedError when a realized
    physical quantity comes out non-positive."""
    if seed < 0 or index < 0:
        raise ConfigError("seed and sample index must be nonnegative")
    gen = Generator(Philox(key=np.array([seed, index], dtype=np.uint64)))

    def psi():
        return float(gen.random()) - 0.5

    def reject(what, value):
        raise SampleRejectedError(
            f"sample {index} (seed {seed}): {what} drew non-positive value {value:g}"
        )

    waveforms = {}
    for vid in sorted(net.inlets):
        wf = net.inlets[vid]
        ins = spec.inlet.get(vid, InletSigma(peaks=(0.0,) * wf.n_peaks,
                                             centers=(0.0,) * wf.n_peaks,
                                             widths=(0.0,) * wf.n_peaks))
        base = wf.base + ins.base * psi()
        peaks = tuple(m + s * psi() for m, s in zip(wf.peaks, ins.peaks))
        centers = tuple(m + s * psi() for m, s in zip(wf.centers, ins.centers))
        widths = tuple(m + s * psi() for m, s in zip(wf.widths, ins.widths))
        for i, w in enumerate(widths):
            if w <= 0.0:
                reject(f"inlet {vid} width {i + 1}", w)
        waveforms[vid] = InletWaveform(
            period=wf.period, base=base, peaks=peaks, centers=centers, widths=widths
        )

    outlets = {}
    for vid in sorted(net.outlets):
        out = net.outlets[vid]
        sr, sc = spec.outlet.get(vid, (0.0, 0.0))
        rt = out.resistance * (1.0 + sr * psi())
        cap = out.compliance * (1.0 + sc * psi())
        if rt <= 0.0:
            reject(f"outlet {vid} resistance", rt)
        if cap < 0.0:
            reject(f"outlet {vid} compliance", cap)
        outlets[vid] = (rt, cap)

    area_scale = {}
    for vid in sorted(net.vessels):
        sa = spec.area.get(vid, 0.0)
        mult = 1.0 + sa * psi()
        if mult <= 0.0:
            reject(f"vessel {vid} area multiplier", mult)
        area_scale[vid] = mult

    return ParameterSample(
        seed=seed, index=index, waveforms=waveforms, outlets=outlets,
        area_scale=area_scale,
    )


def apply_sample(net, sample):
    """Realize a sampled network. The terminal impedance split keeps the R1
    of the configured (nominal) geometry; the sampled total only moves the
    distal R2. Recomputing R1 from a scaled area would reject perfectly
    reasonable draws whenever the area multiplier dips below ~0.9."""
    vessels = {}
    for vid, v in net.vessels.items():
        mult = sample.area_scale.get(vid, 1.0)
        area = v.area * mult if np.isscalar(v.area) else tuple(
            c * mult for c in v.area
        )
        vessels[vid] = Vessel(
            id=vid, length=v.length, area=area, grid_points=v.grid_points,
            beta=v.beta, external_pressure=v.external_pressure,
        )
    outlets = {}
    for vid, out in net.outlets.items():
        rt, cap = sample.outlets.get(vid, (out.resistance, out.compliance))
        o = WindkesselOutlet(
            vessel=vid, resistance=rt, compliance=cap,
            distal_pressure=out.distal_pressure,
        )
        o.r1 = out.r1
        o.r2 = rt - out.r1
        if o.r2 < 0.0:
            raise SampleRejectedError(
                f"sample (seed {sample.seed}, index {sample.index}): outlet "
                f"{vid} resistance draw {rt:g} fell below the nominal "
                f"characteristic impedance {out.r1:g}"
            )
        outlets[vid] = o
    inlets = {vid: sample.waveforms.get(vid, wf) for vid, wf in net.inlets.items()}
    return NetworkTopology(
        blood=net.blood, vessels=vessels, junctions=list(net.junctions),
        inlets=inlets, outlets=outlets,
    )


@dataclass
class SnapshotMatrix:
    """Stacked ensemble velocities: U[(offset_k + j)*m + i, l] is vessel k,
    node j, snapshot time i, sample l."""

    U: np.ndarray            # (N, s)
    vessel_ids: list
    x_grids: list
    t_grid: np.ndarray
    period: float
    seed: int
    samples: list            # ParameterSample list or manifest dicts
    run_stats: list          # per-sample dicts

    @property
    def n_samples(self):
        return self.U.shape[1]

    @property
    def m(self):
        return len(self.t_grid)

    @property
    def counts(self):
        return np.array([len(xg) for xg in self.x_grids], dtype=np.int32)

    def node_offsets(self):
        c = self.counts
        return np.concatenate(([0], np.cumsum(c[:-1]))).astype(np.int32)

    def validate(self):
        N = int(self.counts.sum()) * self.m
        if self.U.shape != (N, self.n_samples):
            raise InvariantError(
                f"snapshot matrix shape {self.U.shape} does not match grids "
                f"({N} rows expected)"
            )
        if not np.all(np.isfinite(self.U)):
            raise InvariantError("snapshot matrix contains non-finite entries")


def _run_one(net, sample, cfg, m):
    real = apply_sample(net, sample)
    try:
        res = simulate(real, cfg=cfg, m=m)
    except Exception as exc:
        raise type(exc)(
            f"sample {sample.index} (seed {sample.seed}) failed: {exc}; "
            f"parameters: {json.dumps(sample.to_dict())}"
        ) from exc
    return res


_POOL_CTX = {}


def _pool_init(net, cfg, m):
    _POOL_CTX["args"] = (net, cfg, m)


def _pool_run(sample):
    net, cfg, m = _POOL_CTX["args"]
    res = _run_one(net, sample, cfg, m)
    return res.u, res.cycles, res.residual_history[-1], res.stats


def run_ensemble(net, spec, n_samples, seed, m=160, cfg=None, jobs=1, progress=None):
    """Simulate n_samples randomized networks and stack their velocity
    snapshots columnwise. Any failed sample aborts the whole ensemble."""
    if seed is None:
        raise ConfigError("ensemble generation requires an explicit seed")
    if n_samples < 1:
        raise ConfigError(f"need at least one sample, got {n_samples}")
    cfg = cfg or SolverConfig()
    samples = [sample_parameters(spec, net, seed, i) for i in range(n_samples)]

    t_grid = np.arange(m, dtype=float) * net.period / m
    N = net.total_nodes() * m
    U = np.empty((N, n_samples))
    run_stats = []

    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_pool_init, initargs=(net, cfg, m)
        ) as pool:
            for i, (u, cycles, resid, st) in enumerate(
                pool.map(_pool_run, samples, chunksize=4)
            ):
                U[:, i] = u.reshape(-1)
                run_stats.append(_sample_stats(cycles, resid, st))
                if progress:
                    progress(i + 1, n_samples)
    else:
        for i, sample in enumerate(samples):
            res = _run_one(net, sample, cfg, m)
            U[:, i] = res.flatten_u()
            run_stats.append(
                _sample_stats(res.cycles, res.residual_history[-1], res.stats)
            )
            if progress:
                progress(i + 1, n_samples)

    arr_ids = net.vessel_ids
    snap = SnapshotMatrix(
        U=U,
        vessel_ids=list(arr_ids),
        x_grids=[net.vessels[vid].x_grid() for vid in arr_ids],
        t_grid=t_grid,
        period=net.period,
        seed=seed,
        samples=samples,
        run_stats=run_stats,
    )
    snap.validate()
    return snap


def _sample_stats(cycles, resid, st):
    q = st.get("junction_flux_scale", 0.0)
    return {
        "cycles": cycles,
        "periodicity_residual": resid,
        "max_junction_flux_residual": st.get("junction_flux_residual", 0.0),
        "relative_junction_flux_residual": (
            st.get("junction_flux_residual", 0.0) / q if q > 0.0 else 0.0
        ),
    }


def manifest_dict(snap, solver_cfg=None):
    entries = []
    for i, sample in enumerate(snap.samples):
        d = sample.to_dict() if isinstance(sample, ParameterSample) else dict(sample)
        if i < len(snap.run_stats):
            d["run"] = snap.run_stats[i]
        entries.append(d)
    doc = {
        "schema": MANIFEST_SCHEMA,
        "seed": snap.seed,
        "samples": snap.n_samples,
        "snapshots_per_period": snap.m,
        "period": snap.period,
        "vessel_ids": list(snap.vessel_ids),
        "grid_points": {str(v): int(n) for v, n in zip(snap.vessel_ids, snap.counts)},
        "entries": entries,
    }
    if solver_cfg is not None:
        doc["solver"] = {
            "cfl_number": solver_cfg.cfl_number,
            "max_dt": (None if math.isinf(solver_cfg.max_dt) else solver_cfg.max_dt),
            "warmup_cycles": solver_cfg.warmup_cycles,
            "max_cycles": solver_cfg.max_cycles,
            "periodicity_tol": solver_cfg.periodicity_tol,
            "junction_newton_tol": solver_cfg.junction_newton_tol,
            "junction_max_iter": solver_cfg.junction_max_iter,
            "junction_model": solver_cfg.junction_model,
        }
    return doc


def save_ensemble(snap, directory, solver_cfg=None):
    """Write snapshots.hkrn plus manifest.json into directory."""
    from .container import save_snapshots

    os.makedirs(directory, exist_ok=True)
    save_snapshots(snap, os.path.join(directory, "snapshots.hkrn"))
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest_dict(snap, solver_cfg), fh, indent=1)
        fh.write("\n")


def load_ensemble(directory):
    """Read an ensemble saved by save_ensemble."""
    from .container import load_snapshots

    snap = load_snapshots(os.path.join(directory, "snapshots.hkrn"))
    mpath = os.path.join(directory, "manifest.json")
    if os.path.exists(mpath):
        with open(mpath) as fh:
            doc = json.load(fh)
        snap.seed = doc.get("seed", snap.seed)
        snap.samples = doc.get("entries", [])
    return snap
