"""Self-contained invariant checks behind the `validate` CLI command. Each
check builds its own tiny problem, so the suite runs in seconds and needs no
external files; an optional scenario file gets a load/layout check on top."""

import os
import tempfile

import numpy as np

from . import container, gp, lowrank, scenarios
from .ensemble import (InletSigma, RandomizationSpec, run_ensemble,
                       sample_parameters)
from .network import (BloodProperties, NetworkTopology, Vessel,
                      WindkesselOutlet, load_network, serialize_network,
                      wave_speed)
from .solver import FieldState, SolverConfig, integrate, simulate
from .waveform import InletWaveform, evaluate_inlet


def _tube(n=24, beta=5.25e6, a0=1e-4, base=0.0, peaks=(0.0,), centers=(0.1,),
          widths=(1e-2,), mu=0.0, rt_scale=4.0):
    rho = 1050.0
    c0 = wave_speed(beta, a0, rho)
    r1 = rho * c0 / a0
    return NetworkTopology(
        blood=BloodProperties(density=rho, viscosity=mu),
        vessels={1: Vessel(id=1, length=0.5, area=a0, grid_points=n, beta=beta)},
        junctions=[],
        inlets={1: InletWaveform(period=0.4, base=base, peaks=peaks,
                                 centers=centers, widths=widths)},
        outlets={1: WindkesselOutlet(vessel=1, resistance=rt_scale * r1,
                                     compliance=1e-10)},
    )


def check_equilibrium():
    """A resting network must stay at rest to machine precision."""
    net = _tube()
    state = FieldState.equilibrium(net)
    integrate(net, state, 0.05, SolverConfig(cfl_number=0.9))
    a0 = net.vessels[1].area
    da = float(np.max(np.abs(state.A - a0))) / a0
    du = float(np.max(np.abs(state.u)))
    ok = da < 1e-12 and du < 1e-12
    return ok, f"max |dA|/A0 = {da:.2e}, max |u| = {du:.2e}"


def check_waveform_periodicity():
    wf = InletWaveform(period=0.8, base=0.5, peaks=(-0.5, 3.0, -1.0, -0.1),
                       centers=(0.08, 0.2, 0.4, 0.6),
                       widths=(2e-3, 5e-3, 1.5e-2, 1e-2))
    ts = np.linspace(0.0, 0.8, 33)[:-1]
    a = evaluate_inlet(wf, ts)
    b = evaluate_inlet(wf, ts + 3 * wf.period)
    err = float(np.max(np.abs(a - b)))
    return err < 1e-12, f"max |u(t) - u(t + 3T)| = {err:.2e}"


def check_sampling_reproducibility():
    net = _tube(peaks=(0.3,), base=0.2)
    spec = RandomizationSpec(
        inlet={1: InletSigma(base=0.1, peaks=(0.2,), centers=(0.01,), widths=(1e-3,))},
        outlet={1: (0.05, 0.05)}, area={1: 0.3},
    )
    s1 = sample_parameters(spec, net, 123, 7)
    s2 = sample_parameters(spec, net, 123, 7)
    same = s1.to_dict() == s2.to_dict()
    lo, hi = 1.0 - 0.3 / 2, 1.0 + 0.3 / 2
    support = all(
        lo <= sample_parameters(spec, net, 123, i).area_scale[1] <= hi
        for i in range(50)
    )
    return same and support, "same key reproduces; draws inside support"


def _tiny_ensemble():
    net = _tube(n=12, base=0.2, peaks=(0.4,), centers=(0.15,), widths=(4e-3,))
    spec = RandomizationSpec(
        inlet={1: InletSigma(base=0.2, peaks=(0.3,), centers=(0.02,), widths=(0.0,))},
        outlet={1: (0.05, 0.05)}, area={},
    )
    cfg = SolverConfig(cfl_number=0.9, warmup_cycles=2, max_cycles=10,
                       periodicity_tol=1e-2)
    return run_ensemble(net, spec, 12, seed=5, m=24, cfg=cfg), net


def check_kernel_identities():
    snap, _ = _tiny_ensemble()
    k = lowrank.build_kernel(snap, rank=12, keep_right_vectors=True)
    # orthonormal basis
    orth = float(np.max(np.abs(k.phi.T @ k.phi - np.eye(k.rank))))
    # full-rank kernel on the grid equals the empirical second moment
    gram_full = (k.phi * k.lam) @ k.phi.T
    emp = snap.U @ snap.U.T / snap.n_samples
    rel = float(np.linalg.norm(gram_full - emp) / np.linalg.norm(emp))
    # eigenvalues nonnegative and sorted
    mono = bool(np.all(np.diff(k.lam) <= 1e-300)) and float(k.lam.min()) >= 0.0
    ok = orth < 1e-10 and rel < 1e-10 and mono
    return ok, f"orthonormality {orth:.2e}, gram error {rel:.2e}"


def check_gp_posterior():
    snap, _ = _tiny_ensemble()
    k = lowrank.build_kernel(snap, energy_threshold=0.999999)
    vid = k.vessel_ids[0]
    xg = k.x_grids[0]
    tg = k.t_grid
    pts = (np.array([vid, vid, vid]), np.array([xg[2], xg[5], xg[8]]),
           np.array([tg[3], tg[10], tg[17]]))
    mset = gp.MeasurementSet(vessel=pts[0], x=pts[1], t=pts[2],
                             u=np.array([0.1, 0.3, 0.2]))
    field = gp.predict(k, mset, 1e-8, pts)
    fit = float(np.max(np.abs(field.mean - mset.u)))
    prior = np.sqrt(np.maximum((gp.eval_basis(k, pts) ** 2) @ k.lam, 0.0))
    shrink = bool(np.all(field.std <= prior + 1e-12))
    ok = fit < 1e-3 and shrink
    return ok, f"datum misfit {fit:.2e}; posterior std <= prior std: {shrink}"


def check_container_roundtrip():
    snap, _ = _tiny_ensemble()
    k = lowrank.build_kernel(snap, energy_threshold=0.99, keep_right_vectors=True)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "k.hkrn")
        container.save_kernel(k, path)
        k2 = container.load_kernel(path)
        ok = (
            np.array_equal(k.lam, k2.lam)
            and np.array_equal(k.phi, k2.phi)
            and np.array_equal(k.Y, k2.Y)
            and np.array_equal(k.t_grid, k2.t_grid)
        )
        # corruption must be detected
        with open(path, "r+b") as fh:
            fh.seek(60)
            byte = fh.read(1)
            fh.seek(60)
            fh.write(bytes([byte[0] ^ 0xFF]))
        try:
            container.load_kernel(path)
            caught = False
        except Exception:
            caught = True
    return ok and caught, f"round-trip exact: {ok}; corruption detected: {caught}"


def check_scenario(path):
    sc = scenarios.load_scenario(path)
    text = serialize_network(sc.network)
    with tempfile.NamedTemporaryFile("w", suffix=".toml", delete=False) as fh:
        fh.write(text)
        tmp = fh.name
    try:
        net2 = load_network(tmp)
        ok = serialize_network(net2) == text
    finally:
        os.unlink(tmp)
    return ok, (
        f"{sc.name}: {len(sc.network.vessels)} vessels, "
        f"{len(sc.layouts)} layouts; serialization round-trips: {ok}"
    )


CHECKS = [
    ("equilibrium fixed point", check_equilibrium),
    ("waveform periodicity", check_waveform_periodicity),
    ("sampling reproducibility", check_sampling_reproducibility),
    ("kernel identities", check_kernel_identities),
    ("gp posterior sanity", check_gp_posterior),
    ("container round-trip", check_container_roundtrip),
]


def run_validation(scenario_path=None, out=None):
    """Run every check; returns True when all pass. Prints one line each."""
    checks = list(CHECKS)
    if scenario_path:
        checks.append(("scenario file", lambda: check_scenario(scenario_path)))
    all_ok = True
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        print(line, file=out)
    return all_ok
