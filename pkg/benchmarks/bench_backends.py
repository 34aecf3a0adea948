"""Throughput comparison of the solver backends.

Runs the same network integration on the compiled extension and on the pure
numpy fallback and reports node-steps per second (one node-step = updating one
grid node by one time step). Usage:

    python3 benchmarks/bench_backends.py [--grid-n 100] [--seconds 0.8]
"""

import argparse
import time

from hemogp.network import load_network
from hemogp.solver import FieldState, SolverConfig, available_backends, integrate


def bench(net, backend, t1):
    state = FieldState.equilibrium(net)
    cfg = SolverConfig(backend=backend)
    # warm up caches and the import path
    integrate(net, FieldState.equilibrium(net), t1 / 20, cfg)
    t0 = time.perf_counter()
    stats = integrate(net, state, t1, cfg)[0]
    wall = time.perf_counter() - t0
    nodes = len(state.u)
    return stats[0], nodes, wall


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", default="scenarios/yshape.toml")
    ap.add_argument("--grid-n", type=int, default=100)
    ap.add_argument("--seconds", type=float, default=0.8,
                    help="simulated time span per run")
    args = ap.parse_args()

    net = load_network(args.scenario)
    for v in net.vessels.values():
        v.grid_points = args.grid_n
    backends = available_backends()
    print(f"{args.scenario} at {args.grid_n} nodes/vessel, "
          f"{args.seconds:g} s simulated")
    print(f"{'backend':<10} {'steps':>8} {'nodes':>6} {'wall s':>8} "
          f"{'node-steps/s':>14}")
    rates = {}
    for b in backends:
        steps, nodes, wall = bench(net, b, args.seconds)
        rate = steps * nodes / wall
        rates[b] = rate
        print(f"{b:<10} {int(steps):>8} {nodes:>6} {wall:>8.3f} {rate:>14.3g}")
    if "cython" in rates and "python" in rates:
        print(f"speedup: {rates['cython'] / rates['python']:.1f}x")


if __name__ == "__main__":
    main()
