"""Command-line interface.

Exit codes: 0 success, 2 bad input (config/CSV/arguments), 3 numerical or
convergence failure, 4 internal invariant violation.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import container, gp, lowrank, scenarios, validate
from .ensemble import load_ensemble, run_ensemble, save_ensemble
from .errors import ConfigError, HemoGPError
from .solver import (SolverConfig, active_backend, load_result_csv, simulate,
                     stats_dict)


def _load_scenario(path):
    if not os.path.exists(path):
        raise ConfigError(f"no such config file: {path}")
    return scenarios.load_scenario(path)


def _scenario_overrides(sc, args):
    if getattr(args, "grid_n", None):
        sc = sc.with_resolution(grid_points=args.grid_n)
    if getattr(args, "snapshots", None):
        sc = sc.with_resolution(snapshots=args.snapshots)
    if getattr(args, "samples", None):
        sc.n_samples = args.samples
    cfg = sc.solver
    if getattr(args, "cycles", None):
        cfg.warmup_cycles = args.cycles
        cfg.max_cycles = args.cycles
    if getattr(args, "periodicity_tol", None) is not None:
        cfg.periodicity_tol = args.periodicity_tol
    if getattr(args, "backend", None):
        cfg.backend = args.backend
    return sc


def cmd_simulate(args):
    sc = _scenario_overrides(_load_scenario(args.config), args)
    net = sc.network
    sample = None
    if args.holdout:
        sample, result = scenarios.holdout_truth(sc)
    else:
        if (args.sample_seed is None) != (args.sample_index is None):
            raise ConfigError("--sample-seed and --sample-index go together")
        if args.sample_seed is not None:
            from .ensemble import apply_sample, sample_parameters

            sample = sample_parameters(
                sc.randomization, net, args.sample_seed, args.sample_index
            )
            net = apply_sample(net, sample)
        result = simulate(net, cfg=sc.solver, m=sc.m)
    result.to_csv(args.out)
    print(f"wrote {args.out} ({len(result.vessel_ids)} vessels, "
          f"{result.m} snapshots, backend {active_backend(sc.solver.backend)})")
    print(f"cycles: {result.cycles}, final periodicity residual: "
          f"{result.residual_history[-1]:.3e}")
    if sample is not None:
        print(f"sample: seed {sample.seed}, index {sample.index}")
    st = result.stats
    print(f"steps: {st['steps']}, dt range [{st['min_dt']:.3e}, "
          f"{st['max_dt']:.3e}] s, max junction flux residual "
          f"{st['junction_flux_residual']:.3e} m^3/s")
    return 0


def cmd_ensemble(args):
    sc = _scenario_overrides(_load_scenario(args.config), args)
    if args.seed is None:
        raise ConfigError("ensemble requires an explicit --seed")

    def progress(i, n):
        if args.verbose and (i % 10 == 0 or i == n):
            print(f"  sample {i}/{n}", file=sys.stderr)

    snap = run_ensemble(
        sc.network, sc.randomization, sc.n_samples, args.seed, m=sc.m,
        cfg=sc.solver, jobs=args.jobs, progress=progress,
    )
    save_ensemble(snap, args.out, solver_cfg=sc.solver)
    print(f"wrote {args.out}/snapshots.hkrn and manifest.json "
          f"({snap.U.shape[0]} rows x {snap.n_samples} samples, seed {args.seed})")
    return 0


def cmd_build_kernel(args):
    snap = load_ensemble(args.ensemble)
    if args.rank is not None and args.energy is not None:
        raise ConfigError("give either --rank or --energy, not both")
    kernel = lowrank.build_kernel(
        snap,
        energy_threshold=args.energy if args.energy is not None else 0.99,
        rank=args.rank,
        keep_right_vectors=args.keep_right_vectors,
    )
    out = args.out or os.path.join(args.ensemble, "kernel.hkrn")
    container.save_kernel(kernel, out)
    spec_path = os.path.splitext(out)[0] + "_spectrum.csv"
    with open(spec_path, "w") as fh:
        fh.write("index,sigma,lambda,cumulative_energy\n")
        e = kernel.spectrum**2
        cum = np.cumsum(e) / e.sum()
        for i, (sg, cu) in enumerate(zip(kernel.spectrum, cum), start=1):
            lam = sg * sg / kernel.n_samples
            fh.write(f"{i},{float(sg)!r},{float(lam)!r},{float(cu)!r}\n")
    print(f"wrote {out} (rank {kernel.rank} of {kernel.n_samples} samples, "
          f"captured energy {kernel.captured_energy:.6f}) and {spec_path}")
    return 0


def cmd_predict(args):
    kernel = container.load_kernel(args.kernel)
    mset = gp.MeasurementSet.from_csv(args.measurements)
    queries = gp.read_queries(args.queries)
    if args.noise_std is not None and args.fit_noise:
        raise ConfigError("give either --noise-std or --fit-noise, not both")
    if args.fit_noise:
        s2 = gp.fit_noise(kernel, mset)
        print(f"fitted noise std: {np.sqrt(s2):.6g}")
    elif args.noise_std is not None:
        if args.noise_std < 0:
            raise ConfigError("--noise-std must be nonnegative")
        s2 = args.noise_std**2
    else:
        raise ConfigError("choose a noise model: --noise-std VALUE or --fit-noise")
    field = gp.predict(kernel, mset, s2, queries)
    field.to_csv(args.out)
    print(f"wrote {args.out} ({len(field.mean)} query points, "
          f"mean posterior std {float(np.mean(field.std)):.6g})")
    if args.audit_config:
        sc = _load_scenario(args.audit_config)
        report = gp.mass_audit(kernel, field, sc.network)
        for vid, entry in sorted(report["junctions"].items()):
            print(f"junction at vessel {vid}: relative flux mismatch "
                  f"{entry['relative']:.3e}")
        print(f"worst relative flux mismatch: {report['worst_relative']:.3e}")
    if args.decompose:
        snap = load_ensemble(args.decompose)
        a, rep = gp.decompose(field, kernel, snap)
        print(f"posterior mean = combination of {len(a)} ensemble members "
              f"(identity error {rep['relative_error']:.3e})")
    return 0


def cmd_validate(args):
    ok = validate.run_validation(args.config)
    if not ok:
        print("validation FAILED")
        return 4
    print("all validation checks passed")
    return 0


def cmd_plot(args):
    post = _read_posterior_csv(args.posterior)
    sel = post["vessel"] == args.vessel
    if not np.any(sel):
        raise ConfigError(f"posterior file has no rows for vessel {args.vessel}")
    xs = post["x"][sel]
    xpick = xs[int(np.argmin(np.abs(xs - args.x)))]
    sel &= post["x"] == xpick
    truth_t = truth_u = None
    if args.truth:
        truth = load_result_csv(args.truth)
        if args.vessel in truth.vessel_ids:
            k = truth.vessel_ids.index(args.vessel)
            xg = truth.x_grids[k]
            j = int(np.argmin(np.abs(xg - xpick)))
            truth_t = truth.t_grid
            truth_u = truth.u[int(truth.offsets[k]) + j]
    from .plotting import posterior_svg

    svg = posterior_svg(
        post["t"][sel], post["mean"][sel], post["std"][sel],
        truth_t=truth_t, truth_u=truth_u,
        title=f"vessel {args.vessel}, x = {xpick:.4g} m",
    )
    with open(args.out, "w") as fh:
        fh.write(svg)
    print(f"wrote {args.out} (vessel {args.vessel}, x = {xpick:.6g} m, "
          f"{int(np.sum(sel))} samples)")
    return 0


def _read_posterior_csv(path):
    rows = gp._read_csv(path, gp.POSTERIOR_HEADER)
    return {
        "vessel": rows[:, 0].astype(np.int64), "x": rows[:, 1], "t": rows[:, 2],
        "mean": rows[:, 3], "std": rows[:, 4],
    }


def cmd_layout(args):
    sc = _load_scenario(args.config)
    truth = load_result_csv(args.truth)
    mset = scenarios.layout_measurements(
        sc, args.layout, truth, noise_seed=args.seed,
        with_noise=not args.no_noise,
    )
    mset.to_csv(args.out)
    print(f"wrote {args.out} ({len(mset)} measurements, layout {args.layout})")
    if args.queries_out:
        qv, qx, qt = scenarios.midpoint_queries(truth)
        with open(args.queries_out, "w") as fh:
            fh.write(",".join(gp.QUERY_HEADER) + "\n")
            for v, x, t in zip(qv, qx, qt):
                fh.write(f"{int(v)},{float(x)!r},{float(t)!r}\n")
        print(f"wrote {args.queries_out} ({len(qv)} midpoint query points)")
    return 0


_FORMATS = """\
file formats (headers are exact):
  simulation/truth CSV   vessel_id,x,t,u,A     one row per grid node and snapshot
  measurement CSV        vessel_id,x,t,u
  query CSV              vessel_id,x,t
  posterior CSV          vessel_id,x,t,mean,std
  spectrum CSV           index,sigma,lambda,cumulative_energy

.hkrn container (little-endian): magic "HKRN", version u32 (=1), kind u32
(1 kernel, 2 snapshots), vessel count u32, snapshots m u32, total rows u64,
rank u32, ensemble size u32, has-right-vectors u8, period f64, energy
threshold f64, captured energy f64, then per-vessel (id u32, node count u32,
x grid f64[n]), the time grid f64[m], the payload (kernel: lambda, sigma,
basis Phi, optional Y; snapshots: U, all f64 row-major), and a crc32 trailer
over every preceding byte.

exit codes: 0 success, 2 bad input, 3 numerical/convergence failure,
4 internal invariant violation.
"""


def build_parser():
    p = argparse.ArgumentParser(
        prog="hemogp",
        description="Reconstruct blood-flow velocity from sparse measurements "
                    "with a simulation-informed low-rank GP.",
        epilog=_FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(q):
        q.add_argument("--grid-n", type=int, help="override grid points per vessel")
        q.add_argument("--snapshots", type=int, help="override snapshots per period")
        q.add_argument("--backend", choices=["auto", "cython", "python"],
                       help="solver backend")

    q = sub.add_parser("simulate", help="run one network to a periodic state")
    q.add_argument("config")
    q.add_argument("--out", default="truth.csv")
    q.add_argument("--holdout", action="store_true",
                   help="randomize with the scenario holdout seed")
    q.add_argument("--sample-seed", type=int)
    q.add_argument("--sample-index", type=int)
    q.add_argument("--cycles", type=int,
                   help="run exactly this many cycles (warmup and cap)")
    q.add_argument("--periodicity-tol", type=float)
    add_common(q)
    q.set_defaults(fn=cmd_simulate)

    q = sub.add_parser("ensemble", help="simulate a randomized ensemble")
    q.add_argument("config")
    q.add_argument("--seed", type=int, required=True,
                   help="randomization seed (mandatory; no silent defaults)")
    q.add_argument("--out", default="ensemble_out")
    q.add_argument("--samples", type=int, help="override sample count")
    q.add_argument("--jobs", type=int, default=1)
    q.add_argument("--verbose", action="store_true")
    add_common(q)
    q.set_defaults(fn=cmd_ensemble)

    q = sub.add_parser("build-kernel", help="factor an ensemble into a kernel")
    q.add_argument("ensemble", help="directory written by the ensemble command")
    q.add_argument("--energy", type=float,
                   help="energy threshold for rank selection (default 0.99)")
    q.add_argument("--rank", type=int, help="fixed rank instead of energy rule")
    q.add_argument("--keep-right-vectors", action="store_true",
                   help="store right singular vectors for posterior decomposition")
    q.add_argument("--out")
    q.set_defaults(fn=cmd_build_kernel)

    q = sub.add_parser("predict", help="GP posterior at query points")
    q.add_argument("kernel")
    q.add_argument("measurements", help="CSV with header vessel_id,x,t,u")
    q.add_argument("queries", help="CSV with header vessel_id,x,t")
    q.add_argument("--noise-std", type=float)
    q.add_argument("--fit-noise", action="store_true")
    q.add_argument("--out", default="posterior.csv")
    q.add_argument("--audit-config",
                   help="scenario file; audit posterior junction flux balance")
    q.add_argument("--decompose",
                   help="ensemble directory; report the snapshot combination")
    q.set_defaults(fn=cmd_predict)

    q = sub.add_parser("validate", help="run the built-in invariant suite")
    q.add_argument("config", nargs="?", help="optional scenario file to check")
    q.set_defaults(fn=cmd_validate)

    q = sub.add_parser("plot", help="render a posterior trace to SVG")
    q.add_argument("posterior", help="CSV written by predict")
    q.add_argument("truth", nargs="?", help="optional truth CSV overlay")
    q.add_argument("--vessel", type=int, required=True)
    q.add_argument("--x", type=float, required=True)
    q.add_argument("--out", default="posterior.svg")
    q.set_defaults(fn=cmd_plot)

    q = sub.add_parser("layout", help="extract measurements from a truth run")
    q.add_argument("config")
    q.add_argument("truth", help="truth CSV from the simulate command")
    q.add_argument("--layout", required=True)
    q.add_argument("--seed", type=int, default=0, help="noise seed")
    q.add_argument("--no-noise", action="store_true")
    q.add_argument("--out", default="measurements.csv")
    q.add_argument("--queries-out", help="also write midpoint query points")
    q.set_defaults(fn=cmd_layout)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except HemoGPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
