"""Time integration driver: backend selection, cycle control, periodicity,
snapshot recording, and the operation-level boundary API.

The hyperbolic system is marched with a two-step Lax-Wendroff scheme on
(A, u); fluxes are F_A = A*u and F_u = u^2/2 + p/rho with p the tube law, so
a resting network (u = 0, A = A0(x)) is an exact fixed point of the discrete
update even for tapered vessels. Wall friction enters as a pointwise split
source f*u/(rho*A) on interior nodes after the hyperbolic update.
"""

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from . import _bounds, _kernels_py
from .errors import ConfigError, ConvergenceError, FileFormatError, NumericalError
from .network import NetworkTopology

try:
    from . import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

_FORCE_PY = bool(os.environ.get("HEMOGP_FORCE_PYTHON"))


def available_backends():
    names = ["python"]
    if _kernels_c is not None:
        names.insert(0, "cython")
    return names


def get_backend(name="auto"):
    """Resolve a backend module by name; 'auto' prefers the compiled core."""
    if name == "auto":
        if _kernels_c is not None and not _FORCE_PY:
            return _kernels_c
        return _kernels_py
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _kernels_c is None:
            raise ConfigError("compiled backend requested but not built")
        return _kernels_c
    raise ConfigError(f"unknown backend '{name}' (use auto, cython, or python)")


def active_backend(name="auto"):
    return get_backend(name).BACKEND_NAME


@dataclass
class SolverConfig:
    cfl_number: float = 0.5
    max_dt: float = math.inf
    warmup_cycles: int = 5
    max_cycles: int = 20
    periodicity_tol: float = 1e-3
    junction_newton_tol: float = 1e-12
    junction_max_iter: int = 50
    junction_model: str = "total_pressure"
    backend: str = "auto"

    def __post_init__(self):
        if not 0.0 < self.cfl_number <= 1.0:
            raise ConfigError(f"cfl_number must be in (0, 1], got {self.cfl_number}")
        if not self.max_dt > 0.0:
            raise ConfigError(f"max_dt must be positive, got {self.max_dt}")
        if self.warmup_cycles < 1:
            raise ConfigError(f"warmup_cycles must be >= 1, got {self.warmup_cycles}")
        if self.max_cycles < self.warmup_cycles:
            raise ConfigError(
                f"max_cycles ({self.max_cycles}) must be >= warmup_cycles "
                f"({self.warmup_cycles})"
            )
        if not self.periodicity_tol > 0.0:
            raise ConfigError(f"periodicity_tol must be positive, got {self.periodicity_tol}")
        if not self.junction_newton_tol > 0.0:
            raise ConfigError("junction_newton_tol must be positive")
        if self.junction_max_iter < 1:
            raise ConfigError("junction_max_iter must be >= 1")
        if self.junction_model not in ("total_pressure", "static_pressure"):
            raise ConfigError(
                f"junction_model must be total_pressure or static_pressure, "
                f"got {self.junction_model!r}"
            )

    @property
    def junction_mode(self):
        return 0 if self.junction_model == "total_pressure" else 1


def solver_config_from_dict(tab):
    """Build a SolverConfig from a parsed [solver] TOML table."""
    known = {
        "cfl_number", "max_dt", "warmup_cycles", "max_cycles", "periodicity_tol",
        "junction_newton_tol", "junction_max_iter", "junction_model", "backend",
    }
    bad = set(tab) - known
    if bad:
        raise ConfigError(f"[solver]: unknown keys {sorted(bad)}")
    return SolverConfig(**tab)


class NetworkArrays:
    """Flat array view of a NetworkTopology, in the layout the backends expect.
    Vessels are ordered by id; node j of vessel slot k lives at offset[k] + j."""

    def __init__(self, net):
        self.net = net
        ids = net.vessel_ids
        self.ids = ids
        self.K = len(ids)
        self.id2slot = {vid: i for i, vid in enumerate(ids)}
        vs = [net.vessels[vid] for vid in ids]
        self.nnode = np.array([v.grid_points for v in vs], dtype=np.int32)
        self.offset = np.concatenate(([0], np.cumsum(self.nnode[:-1]))).astype(np.int32)
        self.total = int(self.nnode.sum())
        self.dx = np.array([v.dx for v in vs])
        self.beta = np.array([v.beta for v in vs])
        self.rho = net.blood.density
        self.hb = self.beta / (2.0 * self.rho)
        self.pext = np.array([v.external_pressure for v in vs])
        self.fric_rho = net.blood.friction / self.rho
        self.A0 = np.concatenate([v.reference_area() for v in vs])
        self.sqA0 = np.sqrt(self.A0)
        # half-node reference areas chosen so equilibrium is an exact fixed point
        halves = []
        for k, v in enumerate(vs):
            a0 = self.A0[self.offset[k]:self.offset[k] + v.grid_points]
            halves.append(np.sqrt(0.5 * (a0[:-1] + a0[1:])))
        self.sqA0h = np.concatenate(halves)
        self.offh = (self.offset - np.arange(self.K, dtype=np.int32)).astype(np.int32)
        self.hb_nodes = np.repeat(self.hb, self.nnode)

        # inlets, ordered by vessel id
        in_ids = sorted(net.inlets)
        self.inlet_list = []
        slots, bases, periods, offs = [], [], [], [0]
        pa, pb, pc = [], [], []
        for vid in in_ids:
            wf = net.inlets[vid]
            slot = self.id2slot[vid]
            self.inlet_list.append(
                (slot, wf.base, wf.peaks, wf.centers, wf.widths, wf.period)
            )
            slots.append(slot)
            bases.append(wf.base)
            periods.append(wf.period)
            pa.extend(wf.peaks)
            pb.extend(wf.centers)
            pc.extend(wf.widths)
            offs.append(len(pa))
        self.in_slot = np.array(slots, dtype=np.int32)
        self.in_base = np.array(bases)
        self.in_T = np.array(periods)
        self.in_off = np.array(offs, dtype=np.int32)
        self.in_a = np.array(pa)
        self.in_b = np.array(pb)
        self.in_c = np.array(pc)

        # junctions with characteristic residual scales
        from .network import wave_speed

        self.junction_list = []
        pslots, coff, cslots, qscales, pscales = [], [0], [], [], []
        for j in net.junctions:
            ps = self.id2slot[j.parent]
            css = tuple(self.id2slot[c] for c in j.children)
            ends = [(ps, self.offset[ps] + self.nnode[ps] - 1)]
            ends += [(cs, self.offset[cs]) for cs in css]
            qs, hs = 0.0, 0.0
            for slot, node in ends:
                a0 = self.A0[node]
                c0 = wave_speed(self.beta[slot], a0, self.rho)
                qs = max(qs, a0 * c0)
                hs = max(hs, self.rho * c0 * c0)
            self.junction_list.append((ps, css, qs, hs))
            pslots.append(ps)
            cslots.extend(css)
            coff.append(len(cslots))
            qscales.append(qs)
            pscales.append(hs)
        self.jn_pslot = np.array(pslots, dtype=np.int32)
        self.jn_coff = np.array(coff, dtype=np.int32)
        self.jn_cslot = np.array(cslots, dtype=np.int32)
        self.jn_qscale = np.array(qscales)
        self.jn_pscale = np.array(pscales)

        # terminals
        out_ids = sorted(net.outlets)
        self.outlet_list = []
        oslots, r1s, r2s, caps, pinfs = [], [], [], [], []
        for vid in out_ids:
            out = net.outlets[vid]
            slot = self.id2slot[vid]
            self.outlet_list.append(
                (slot, out.r1, out.r2, out.compliance, out.distal_pressure)
            )
            oslots.append(slot)
            r1s.append(out.r1)
            r2s.append(out.r2)
            caps.append(out.compliance)
            pinfs.append(out.distal_pressure)
        self.out_slot = np.array(oslots, dtype=np.int32)
        self.out_r1 = np.array(r1s)
        self.out_r2 = np.array(r2s)
        self.out_cap = np.array(caps)
        self.out_pinf = np.array(pinfs)

    def vessel_of_node(self, node):
        k = int(np.searchsorted(self.offset, node, side="right")) - 1
        return self.ids[k]

    def slice_of(self, vid):
        k = self.id2slot[vid]
        return slice(int(self.offset[k]), int(self.offset[k]) + int(self.nnode[k]))


@dataclass
class FieldState:
    """Concatenated per-node state. Node layout matches NetworkArrays."""

    vessel_ids: list
    offsets: np.ndarray
    counts: np.ndarray
    A: np.ndarray
    u: np.ndarray
    t: float = 0.0

    @classmethod
    def equilibrium(cls, net):
        arr = NetworkArrays(net)
        return cls(
            vessel_ids=list(arr.ids),
            offsets=arr.offset.copy(),
            counts=arr.nnode.copy(),
            A=arr.A0.copy(),
            u=np.zeros(arr.total),
            t=0.0,
        )

    def vessel(self, vid):
        k = self.vessel_ids.index(vid)
        sl = slice(int(self.offsets[k]), int(self.offsets[k]) + int(self.counts[k]))
        return self.A[sl], self.u[sl]

    def copy(self):
        return FieldState(
            vessel_ids=list(self.vessel_ids),
            offsets=self.offsets.copy(),
            counts=self.counts.copy(),
            A=self.A.copy(),
            u=self.u.copy(),
            t=self.t,
        )


def _new_stats():
    return np.array([0.0, math.inf, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])


STAT_NAMES = (
    "steps", "min_dt", "max_dt", "junction_flux_residual", "junction_flux_scale",
    "junction_newton_iters", "windkessel_newton_iters", "max_velocity_ratio",
)


def stats_dict(stats):
    d = dict(zip(STAT_NAMES, (float(v) for v in stats)))
    d["steps"] = int(d["steps"])
    return d


def integrate(net, state, t1, cfg=None, snap_times=None, arrays=None):
    """Advance `state` in place to state.t + window end t1 (relative to the
    waveform clock), optionally recording snapshots. Returns (stats array,
    snap_u, snap_A); the snapshot arrays are None when no times were given."""
    cfg = cfg or SolverConfig()
    arr = arrays if arrays is not None else NetworkArrays(net)
    backend = get_backend(cfg.backend)
    if snap_times is None:
        st = np.empty(0)
        snap_u = np.empty((arr.total, 0))
        snap_A = np.empty((arr.total, 0))
    else:
        st = np.asarray(snap_times, dtype=float)
        if st.size and (st[0] <= state.t or st[-1] > t1 or np.any(np.diff(st) <= 0)):
            raise ConfigError("snapshot times must increase within (t, t1]")
        snap_u = np.empty((arr.total, st.size))
        snap_A = np.empty((arr.total, st.size))
    stats = _new_stats()
    backend.advance(
        arr, state.A, state.u, state.t, t1, st, snap_u, snap_A, 0,
        cfg.cfl_number, cfg.max_dt, cfg.junction_newton_tol, cfg.junction_max_iter,
        cfg.junction_mode, stats,
    )
    state.t = t1
    if snap_times is None:
        return stats, None, None
    return stats, snap_u, snap_A


def step(state, net, cfg=None, dt=None, arrays=None):
    """Advance exactly one time step of size dt (CFL-limited when omitted).
    Raises NumericalError if the requested dt violates the CFL bound."""
    cfg = cfg or SolverConfig()
    arr = arrays if arrays is not None else NetworkArrays(net)
    sqA = np.sqrt(state.A)
    c = np.sqrt(arr.hb_nodes * sqA)
    smax = np.maximum.reduceat(np.abs(state.u) + c, arr.offset)
    dt_cfl = cfg.cfl_number * float(np.min(arr.dx / smax))
    if dt is None:
        dt = min(dt_cfl, cfg.max_dt)
    elif dt > dt_cfl * (1.0 + 1e-12):
        raise NumericalError(
            f"CFL violation: requested dt = {dt:g} s exceeds the stable bound "
            f"{dt_cfl:g} s"
        )
    stats = _new_stats()
    backend = get_backend(cfg.backend)
    t1 = state.t + dt
    backend.advance(
        arr, state.A, state.u, state.t, t1, np.empty(0),
        np.empty((arr.total, 0)), np.empty((arr.total, 0)), 0,
        cfg.cfl_number, dt, cfg.junction_newton_tol, cfg.junction_max_iter,
        cfg.junction_mode, stats,
    )
    state.t = t1
    return stats


def apply_inlet(state, net, vessel_id, t_new, dt):
    """Operation-level inlet closure: new (A, u) for the proximal node of an
    inflow vessel, evaluated at waveform time t_new with characteristic feet
    located dt back. Does not mutate state."""
    if vessel_id not in net.inlets:
        raise ConfigError(f"vessel {vessel_id} has no inlet")
    arr = NetworkArrays(net)
    wf = net.inlets[vessel_id]
    k = arr.id2slot[vessel_id]
    o = int(arr.offset[k])
    return _bounds.inlet_node(
        state.A[o], state.A[o + 1], state.u[o], state.u[o + 1],
        arr.hb[k], arr.dx[k], dt,
        wf.base, wf.peaks, wf.centers, wf.widths, wf.period, t_new, vessel_id,
    )


def apply_windkessel(state, net, vessel_id, dt, cfg=None):
    """Operation-level RCR closure: new (A, u) for the distal node of a
    terminal vessel. Does not mutate state."""
    cfg = cfg or SolverConfig()
    if vessel_id not in net.outlets:
        raise ConfigError(f"vessel {vessel_id} has no outlet")
    arr = NetworkArrays(net)
    out = net.outlets[vessel_id]
    k = arr.id2slot[vessel_id]
    e = int(arr.offset[k]) + int(arr.nnode[k]) - 1
    a, u, _ = _bounds.windkessel_node(
        state.A[e], state.A[e - 1], state.u[e], state.u[e - 1],
        arr.hb[k], arr.beta[k], arr.pext[k], arr.sqA0[e], arr.dx[k], dt,
        out.r1, out.r2, out.compliance, out.distal_pressure,
        cfg.junction_newton_tol, cfg.junction_max_iter, vessel_id, state.t,
    )
    return a, u


def apply_junction(state, net, junction, dt, cfg=None):
    """Operation-level branch closure. Returns (A_parent, u_parent,
    [A_child...], [u_child...]). Does not mutate state."""
    cfg = cfg or SolverConfig()
    arr = NetworkArrays(net)
    for ps, css, qs, hs in arr.junction_list:
        if arr.ids[ps] == junction.parent:
            break
    else:
        raise ConfigError(f"junction with parent {junction.parent} not in network")
    pe = int(arr.offset[ps]) + int(arr.nnode[ps]) - 1
    cs = [int(arr.offset[s]) for s in css]
    a_p, u_p, a_c, u_c, _, _, _ = _bounds.junction_nodes(
        arr.rho, dt, cfg.junction_newton_tol, cfg.junction_max_iter,
        cfg.junction_mode,
        state.A[pe], state.A[pe - 1], state.u[pe], state.u[pe - 1],
        arr.hb[ps], arr.beta[ps], arr.pext[ps], arr.sqA0[pe], arr.dx[ps],
        [state.A[s] for s in cs], [state.A[s + 1] for s in cs],
        [state.u[s] for s in cs], [state.u[s + 1] for s in cs],
        [arr.hb[s] for s in css], [arr.beta[s] for s in css],
        [arr.pext[s] for s in css],
        [arr.sqA0[int(arr.offset[s])] for s in css],
        [arr.dx[s] for s in css],
        qs, hs, junction.parent, state.t,
    )
    return a_p, u_p, a_c, u_c


@dataclass
class SimulationResult:
    """One periodic cycle sampled at m equispaced instants t_k = k*T/m."""

    vessel_ids: list
    offsets: np.ndarray
    counts: np.ndarray
    x_grids: list               # per-vessel node coordinates
    t_grid: np.ndarray          # length m
    u: np.ndarray               # (total_nodes, m)
    A: np.ndarray               # (total_nodes, m)
    period: float
    residual_history: list
    cycles: int
    stats: dict

    @property
    def m(self):
        return len(self.t_grid)

    def vessel_slice(self, vid):
        k = self.vessel_ids.index(vid)
        return slice(int(self.offsets[k]), int(self.offsets[k]) + int(self.counts[k]))

    def flatten_u(self):
        """Velocity snapshot column: row (offset_k + j)*m + i holds vessel k,
        node j, time t_i."""
        return self.u.reshape(-1)

    def sample_u(self, vid, x, t):
        """Bilinear evaluation of the recorded velocity at (x, t) arrays."""
        sl = self.vessel_slice(vid)
        return _bilinear(self.u[sl], self.x_grids[self.vessel_ids.index(vid)],
                         self.t_grid, x, t)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vessel_id", "x", "t", "u", "A"])
            for k, vid in enumerate(self.vessel_ids):
                o = int(self.offsets[k])
                for j, x in enumerate(self.x_grids[k]):
                    for i, t in enumerate(self.t_grid):
                        w.writerow([
                            vid, repr(float(x)), repr(float(t)),
                            repr(float(self.u[o + j, i])), repr(float(self.A[o + j, i])),
                        ])


def _bilinear(values, xg, tg, x, t):
    """Interpolate a (n_x, n_t) grid at point arrays (x, t); no extrapolation."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ex = 1e-9 * max(xg[-1] - xg[0], 1e-30)
    et = 1e-9 * max(tg[-1] - tg[0], 1e-30)
    if np.any(x < xg[0] - ex) or np.any(x > xg[-1] + ex):
        raise ConfigError("x outside the recorded grid")
    if np.any(t < tg[0] - et) or np.any(t > tg[-1] + et):
        raise ConfigError("t outside the recorded grid")
    x = np.clip(x, xg[0], xg[-1])
    t = np.clip(t, tg[0], tg[-1])
    jx = np.clip(np.searchsorted(xg, x, side="right") - 1, 0, len(xg) - 2)
    it = np.clip(np.searchsorted(tg, t, side="right") - 1, 0, len(tg) - 2)
    wx = (x - xg[jx]) / (xg[jx + 1] - xg[jx])
    wt = (t - tg[it]) / (tg[it + 1] - tg[it])
    return (
        values[jx, it] * (1 - wx) * (1 - wt)
        + values[jx + 1, it] * wx * (1 - wt)
        + values[jx, it + 1] * (1 - wx) * wt
        + values[jx + 1, it + 1] * wx * wt
    )


def simulate(net, waveforms=None, cfg=None, m=160):
    """Run the network to a periodic state, then record one period.

    waveforms optionally replaces the configured inlet waveforms (keyed by
    vessel id). Warmup runs until the cycle-to-cycle velocity residual drops
    below cfg.periodicity_tol (at least warmup_cycles, at most max_cycles,
    else ConvergenceError). The recorded cycle holds m snapshots at
    t_k = k*T/m, k = 0..m-1.
    """
    cfg = cfg or SolverConfig()
    if m < 2:
        raise ConfigError(f"need at least 2 snapshots per period, got {m}")
    if waveforms:
        inlets = dict(net.inlets)
        for vid, wf in waveforms.items():
            if vid not in inlets:
                raise ConfigError(f"vessel {vid} has no inlet to override")
            inlets[vid] = wf
        net = NetworkTopology(
            blood=net.blood, vessels=net.vessels, junctions=net.junctions,
            inlets=inlets, outlets=net.outlets,
        )
    arr = NetworkArrays(net)
    T = net.period
    state = FieldState.equilibrium(net)
    stats = _new_stats()

    residuals = []
    prev_u = state.u.copy()
    cycle = 0
    while True:
        cycle += 1
        state.t = 0.0
        get_backend(cfg.backend).advance(
            arr, state.A, state.u, 0.0, T, np.empty(0),
            np.empty((arr.total, 0)), np.empty((arr.total, 0)), 0,
            cfg.cfl_number, cfg.max_dt, cfg.junction_newton_tol,
            cfg.junction_max_iter, cfg.junction_mode, stats,
        )
        num = float(np.linalg.norm(state.u - prev_u))
        den = float(np.linalg.norm(state.u))
        residuals.append(num / den if den > 0.0 else (0.0 if num == 0.0 else math.inf))
        prev_u[:] = state.u
        if cycle >= cfg.warmup_cycles and residuals[-1] <= cfg.periodicity_tol:
            break
        if cycle >= cfg.max_cycles:
            raise ConvergenceError(
                f"no periodic state after {cycle} cycles "
                f"(residuals {['%.3e' % r for r in residuals]}, "
                f"tol {cfg.periodicity_tol:g})"
            )

    t_grid = np.arange(m, dtype=float) * T / m
    snap_u = np.empty((arr.total, m))
    snap_A = np.empty((arr.total, m))
    snap_u[:, 0] = state.u
    snap_A[:, 0] = state.A
    state.t = 0.0
    get_backend(cfg.backend).advance(
        arr, state.A, state.u, 0.0, T, t_grid, snap_u, snap_A, 1,
        cfg.cfl_number, cfg.max_dt, cfg.junction_newton_tol, cfg.junction_max_iter,
        cfg.junction_mode, stats,
    )

    vs = [net.vessels[vid] for vid in arr.ids]
    return SimulationResult(
        vessel_ids=list(arr.ids),
        offsets=arr.offset.copy(),
        counts=arr.nnode.copy(),
        x_grids=[v.x_grid() for v in vs],
        t_grid=t_grid,
        u=snap_u,
        A=snap_A,
        period=T,
        residual_history=[float(r) for r in residuals],
        cycles=cycle,
        stats=stats_dict(stats),
    )


def load_result_csv(path):
    """Rebuild a SimulationResult from its CSV export."""
    by_vessel = {}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header != ["vessel_id", "x", "t", "u", "A"]:
            raise FileFormatError(f"{path}: expected header vessel_id,x,t,u,A")
        for row in rd:
            if not row:
                continue
            try:
                vid = int(row[0])
                vals = [float(v) for v in row[1:5]]
            except (ValueError, IndexError):
                raise FileFormatError(f"{path}: bad row {row!r}")
            by_vessel.setdefault(vid, []).append(vals)
    if not by_vessel:
        raise FileFormatError(f"{path}: no data rows")
    vessel_ids = sorted(by_vessel)
    x_grids, t_grid = [], None
    u_cols, A_cols, counts = [], [], []
    for vid in vessel_ids:
        rows = np.array(by_vessel[vid])
        xs = np.unique(rows[:, 0])
        ts = np.unique(rows[:, 1])
        if len(xs) * len(ts) != len(rows):
            raise FileFormatError(f"{path}: vessel {vid} grid is not complete")
        order = np.lexsort((rows[:, 1], rows[:, 0]))
        rows = rows[order]
        if t_grid is None:
            t_grid = ts
        elif len(ts) != len(t_grid) or not np.array_equal(ts, t_grid):
            raise FileFormatError(f"{path}: vessels disagree on snapshot times")
        x_grids.append(xs)
        counts.append(len(xs))
        u_cols.append(rows[:, 2].reshape(len(xs), len(ts)))
        A_cols.append(rows[:, 3].reshape(len(xs), len(ts)))
    counts = np.array(counts, dtype=np.int32)
    offsets = np.concatenate(([0], np.cumsum(counts[:-1]))).astype(np.int32)
    m = len(t_grid)
    # infer the period from the grid convention t_k = k*T/m
    period = float(t_grid[1] - t_grid[0]) * m if m > 1 else 0.0
    return SimulationResult(
        vessel_ids=vessel_ids, offsets=offsets, counts=counts, x_grids=x_grids,
        t_grid=t_grid, u=np.vstack(u_cols), A=np.vstack(A_cols), period=period,
        residual_history=[], cycles=0, stats={},
    )
