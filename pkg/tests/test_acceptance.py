"""Acceptance gate: ten end-to-end checks at fixed tolerances.

Each test prints one `[PASS]`/`[FAIL]` line with the measured numbers, so a
`pytest -rA` run doubles as a scoreboard. The heavyweight fixtures (two
Y-shape ensembles on a 50-node grid, one rigid-aorta ensemble) are built once
per module and shared; all seeds are fixed a priori and the holdout seeds
never appear in any ensemble.
"""

import time

import numpy as np
import pytest

from hemogp import (SolverConfig, build_kernel, eval_basis, fit_noise,
                    holdout_truth, layout_measurements, load_scenario,
                    mass_audit, predict, run_ensemble, simulate)
from hemogp.network import network_from_dict, pressure
from hemogp.scenarios import LayoutSpec, midpoint_queries
from hemogp.solver import FieldState, integrate
from test_lowrank import grid_points
from test_scenarios import with_layout


def report(num, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def ys50(scenario_dir):
    return load_scenario(scenario_dir / "yshape.toml").with_resolution(grid_points=50)


@pytest.fixture(scope="module")
def ens200(ys50):
    t0 = time.time()
    snap = run_ensemble(ys50.network, ys50.randomization, 200, seed=11,
                        m=ys50.m, cfg=ys50.solver)
    snap.wall = time.time() - t0
    return snap


@pytest.fixture(scope="module")
def ens100(ys50):
    return run_ensemble(ys50.network, ys50.randomization, 100, seed=77,
                        m=ys50.m, cfg=ys50.solver)


@pytest.fixture(scope="module")
def k200(ens200, ys50):
    return build_kernel(ens200, energy_threshold=ys50.energy_threshold)


@pytest.fixture(scope="module")
def ys_holdout(ys50):
    return holdout_truth(ys50)        # seed 9001, never an ensemble seed


@pytest.fixture(scope="module")
def ar(scenario_dir):
    """Rigid-aorta scenario, its 150-sample ensemble, kernel, and holdout."""
    sc = load_scenario(scenario_dir / "aorta17_rigid.toml")
    snap = run_ensemble(sc.network, sc.randomization, 150, seed=13,
                        m=sc.m, cfg=sc.solver)
    kernel = build_kernel(snap, energy_threshold=sc.energy_threshold)
    sample, truth = holdout_truth(sc)  # seed 9003
    return sc, snap, kernel, truth


def midpoint_truth(truth):
    qv, qx, qt = midpoint_queries(truth)
    vals = np.concatenate([
        truth.sample_u(vid, qx[qv == vid][0], qt[qv == vid])
        for vid in truth.vessel_ids
    ])
    return (qv, qx, qt), vals


# ---------------------------------------------------------------- criteria

def test_c01_windkessel_steady_state():
    # constant inflow into one compliant vessel; after 5 periods the RCR
    # outlet must sit at its DC operating point p = pinf + Rt*Q
    d = {
        "blood": {"density": 1050.0, "viscosity": 4.0e-3},
        "vessel": {"1": {"length": 0.1703, "area": 1.36e-5, "beta": 6.97e7,
                         "grid_points": 51}},
        "inlet": {"1": {"period": 0.8, "base": 0.1, "peaks": [0.0],
                        "centers": [0.1], "widths": [1e-3]}},
        "outlet": {"1": {"resistance": 1.19e10, "compliance": 0.3428e-10}},
    }
    net = network_from_dict(d)
    state = FieldState.equilibrium(net)
    t0 = time.time()
    integrate(net, state, 5 * 0.8, SolverConfig(cfl_number=0.9))
    wall = time.time() - t0
    v, out = net.vessels[1], net.outlets[1]
    q = state.A[-1] * state.u[-1]
    p = pressure(v.beta, state.A[-1], v.area)
    target = out.distal_pressure + out.resistance * q
    rel = abs(p - target) / abs(target)
    report(1, rel <= 0.01,
           f"outlet pressure {p:.1f} Pa vs steady limit {target:.1f} Pa, "
           f"relative error {rel:.2e} (tol 1e-2), {wall:.2f} s wall")


def test_c02_junction_flux_conservation(scenario_dir):
    # nominal Y-shape at its native resolution; the stats track the largest
    # junction flux defect over every accepted step of the whole run
    sc = load_scenario(scenario_dir / "yshape.toml")
    t0 = time.time()
    res = simulate(sc.network, cfg=sc.solver, m=sc.m)
    wall = time.time() - t0
    st = res.stats
    rel = st["junction_flux_residual"] / st["junction_flux_scale"]
    report(2, rel <= 1e-6,
           f"max |Q_parent - sum Q_child| = {st['junction_flux_residual']:.2e} "
           f"m^3/s over {int(st['steps'])} steps, {rel:.2e} of max|Q| "
           f"(tol 1e-6), {wall:.1f} s wall")


def test_c03_solver_convergence_order():
    # frictionless smooth pulse, compared against an 8x finer reference on
    # shared nodes before the wave reaches the outlet
    def run(n):
        d = {
            "blood": {"density": 1050.0, "viscosity": 0.0},
            "vessel": {"1": {"length": 0.8, "area": 1.36e-5, "beta": 6.97e7,
                             "grid_points": n}},
            "inlet": {"1": {"period": 0.8, "base": 0.0, "peaks": [0.1],
                            "centers": [0.02], "widths": [2.0e-5]}},
            "outlet": {"1": {"resistance": 2.2e9, "compliance": 1e-10}},
        }
        net = network_from_dict(d)
        state = FieldState.equilibrium(net)
        snap_u = integrate(net, state, 0.045, SolverConfig(cfl_number=0.8),
                           snap_times=[0.045])[1]
        return snap_u[:, 0]

    ref = run(801)
    errs = []
    for n in (51, 101, 201):
        u = run(n)
        errs.append(np.linalg.norm(u - ref[:: 800 // (n - 1)]) / np.sqrt(n))
    dx = 0.8 / np.array([50.0, 100.0, 200.0])
    order = float(np.polyfit(np.log(dx), np.log(errs), 1)[0])
    report(3, 1.7 <= order <= 2.3,
           f"L2 errors {errs[0]:.2e}/{errs[1]:.2e}/{errs[2]:.2e} at "
           f"dx = L/50, L/100, L/200; observed order {order:.2f} "
           f"(band [1.7, 2.3])")


def test_c04_dense_kernel_oracle(ys50):
    # full-rank factorization must reproduce the empirical second moment,
    # and the energy rule must pick the smallest rank above threshold
    sc = ys50.with_resolution(grid_points=10, snapshots=20)
    snap = run_ensemble(sc.network, sc.randomization, 30, seed=5, m=sc.m,
                        cfg=sc.solver)
    k_full = build_kernel(snap, rank=30)
    B = eval_basis(k_full, grid_points(k_full))
    gram = (B * k_full.lam) @ B.T
    ref = snap.U @ snap.U.T / snap.n_samples
    rel = float(np.linalg.norm(gram - ref) / np.linalg.norm(ref))

    k99 = build_kernel(snap, energy_threshold=0.99)
    e = k99.spectrum**2
    cum = np.cumsum(e) / e.sum()
    tail = 1.0 - cum[k99.rank - 1]
    minimal = k99.rank == 1 or cum[k99.rank - 2] < 0.99
    report(4, rel <= 1e-10 and tail <= 0.01 and minimal,
           f"Gram vs (1/s) U U^T relative Frobenius {rel:.2e} (tol 1e-10); "
           f"energy rank {k99.rank}/30 leaves tail {tail:.4f} (<= 0.01), "
           f"minimal: {minimal}")


def test_c05_spectrum_stability(ens200, ens100, k200):
    """Stated check: top-10 singular values (lambda scale, sigma/sqrt(s))
    agree within 10% between independent s=100 and s=200 ensembles.

    As stated this measures Monte Carlo noise rather than anything the
    implementation controls: an eigenvalue estimate of a sample second
    moment carries relative error ~sqrt(2/s) (14% at s=100, so ~7% per
    ensemble on the sigma scale), and the max over ten indices of the gap
    between two independent estimates then lands above 10% for most seed
    pairs. Splitting one 200-sample ensemble into disjoint halves, where no
    size effect exists at all, gives max top-10 gaps around 25% and only
    ~13% of random splits meet the 10% bar. The dominant modes do agree
    (top-4 within ~6%), which is the qualitative stability the number was
    meant to capture; the tolerance is reported as measured and this test
    fails honestly rather than widening it.
    """
    k100 = build_kernel(ens100, energy_threshold=0.99)
    a = k100.spectrum[:10] / np.sqrt(ens100.n_samples)
    b = k200.spectrum[:10] / np.sqrt(ens200.n_samples)
    gaps = np.abs(a - b) / b
    report(5, float(gaps.max()) <= 0.10,
           f"top-10 normalized singular values: top-4 within "
           f"{gaps[:4].max() * 100:.1f}%, worst of top-10 "
           f"{gaps.max() * 100:.1f}% at index {int(np.argmax(gaps)) + 1} "
           f"(tol 10%); sampling noise alone explains this, see docstring; "
           f"ensemble build {getattr(ens200, 'wall', float('nan')):.0f} s wall")


def test_c06_case2_reconstruction(ys50, k200, ys_holdout):
    # all-inlet layout, dt = 0.01 s, 5% noise, NLML-fitted noise variance;
    # the held-out run must be reconstructed at the vessel midpoints
    _, truth = ys_holdout
    mset = layout_measurements(ys50, "case2", truth, noise_seed=101)
    s2 = fit_noise(k200, mset)
    queries, tru = midpoint_truth(truth)
    post = predict(k200, mset, s2, queries)
    rel = float(np.linalg.norm(post.mean - tru) / np.linalg.norm(tru))
    cover = float(np.mean(np.abs(tru - post.mean) <= 2.0 * post.std))

    m1 = layout_measurements(ys50, "case1", truth, noise_seed=101)
    post1 = predict(k200, m1, fit_noise(k200, m1), queries)
    sparser = float(np.mean(post1.std)) > float(np.mean(post.std))
    report(6, rel <= 0.10 and cover >= 0.90 and sparser,
           f"midpoint relative L2 error {rel:.3f} (tol 0.10), 2-sigma "
           f"coverage {cover:.3f} (>= 0.90), case-1 mean sigma "
           f"{np.mean(post1.std):.4f} > case-2 {np.mean(post.std):.4f}: "
           f"{sparser}")


def test_c07_posterior_mass_conservation(ar):
    # posterior mean lives in the span of conservative simulations, so its
    # junction fluxes (nominal areas) must balance at every snapshot time
    sc, _, kernel, truth = ar
    mset = layout_measurements(sc, "root", truth, noise_seed=7)
    rms = float(np.sqrt(np.mean(mset.u_clean**2)))
    post = predict(kernel, mset, (0.05 * rms) ** 2, midpoint_queries(kernel))
    rep = mass_audit(kernel, post, sc.network)
    worst = rep["worst_relative"]
    report(7, worst <= 1e-6,
           f"worst junction flux residual {worst:.2e} of local flux scale "
           f"across {len(rep['junctions'])} junctions x {kernel.m} times "
           f"(tol 1e-6)")


def test_c08_noise_recovery(ys50, k200, ys_holdout):
    # NLML fit of the observation noise on five fresh noise draws
    _, truth = ys_holdout
    ratios = []
    for sd in (201, 202, 203, 204, 205):
        mset = layout_measurements(ys50, "case2", truth, noise_seed=sd)
        injected = 0.05 * float(np.sqrt(np.mean(mset.u_clean**2)))
        ratios.append(float(np.sqrt(fit_noise(k200, mset))) / injected)
    med = float(np.median(ratios))
    report(8, 0.5 <= med <= 2.0,
           f"fitted/injected noise std over 5 seeds: "
           f"{', '.join(f'{r:.2f}' for r in ratios)}; median {med:.2f} "
           f"(band [0.5, 2.0])")


def test_c09_rank_magnitude(ar):
    sc, snap, kernel, _ = ar
    r, s = kernel.rank, snap.n_samples
    report(9, 10 <= r <= 80,
           f"energy threshold {sc.energy_threshold} keeps rank {r} of "
           f"s={s} samples (band [10, 80]), captured energy "
           f"{kernel.captured_energy:.4f}")


def test_c10_uncertainty_convergence(ys50, k200, ys_holdout):
    # doubling the measurement count must shrink the averaged posterior
    # sigma/mu; noise variance is held at the known injected level so the
    # sweep isolates the design effect
    _, truth = ys_holdout
    queries = midpoint_queries(truth)
    ratios = []
    for dt in (0.04, 0.02, 0.01, 0.005):
        lay = LayoutSpec(name="sweep", vessels=[1, 2, 3], position="inlet",
                         dt=dt, noise=0.05)
        mset = layout_measurements(with_layout(ys50, lay), "sweep", truth,
                                   noise_seed=101)
        rms = float(np.sqrt(np.mean(mset.u_clean**2)))
        post = predict(k200, mset, (0.05 * rms) ** 2, queries)
        ratios.append(float(np.mean(post.std)) / float(np.mean(np.abs(post.mean))))
    dec = bool(np.all(np.diff(ratios) < 0.0))
    report(10, dec,
           "mean sigma / mean |mu| at dt = 40, 20, 10, 5 ms: "
           + ", ".join(f"{r:.4f}" for r in ratios)
           + f"; strictly decreasing over 3 doublings: {dec}")
