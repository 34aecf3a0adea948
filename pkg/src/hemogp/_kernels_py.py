"""Pure-NumPy solver backend: two-step Lax-Wendroff on (A, u) with
characteristic boundary closures. Mirrors the compiled backend in _kernels.pyx
step for step; the equivalence tests hold the two to the same trajectories.
"""

import math

import numpy as np

from . import _bounds
from .errors import NumericalError

BACKEND_NAME = "python"


def advance(arr, A, u, t0, t1, snap_times, snap_u, snap_A, isnap0,
            cfl, max_dt, jn_tol, jn_maxit, jn_mode, stats):
    """Integrate the network state in place from t0 to t1.

    Snapshot columns isnap0.. of snap_u/snap_A are filled as the integration
    lands exactly on snap_times[isnap0..]; every landing time must lie in
    (t0, t1]. Returns the next unfilled snapshot index. stats (len 8) collects
    [n_steps, min dt, max dt, max junction mass residual, max junction |Q|,
    max junction iters, max windkessel iters, max |u|/c].
    """
    total = A.shape[0]
    An = np.empty(total)
    un = np.empty(total)
    K = arr.K
    offset = arr.offset
    nnode = arr.nnode
    rho = arr.rho
    fric_rho = arr.fric_rho
    isnap = isnap0
    ns = len(snap_times)
    t = t0
    n_steps = 0
    min_dt = math.inf
    max_dt_used = 0.0
    max_fm = 0.0
    max_q = 0.0
    max_jit = 0.0
    max_wit = 0.0
    max_mach = 0.0

    while t < t1:
        if np.any(A <= 0.0) or not np.all(np.isfinite(A)):
            j = int(np.argmin(A))
            raise NumericalError(
                f"non-positive or non-finite area at t = {t:g} s "
                f"(vessel {arr.vessel_of_node(j)})"
            )
        if not np.all(np.isfinite(u)):
            j = int(np.argmin(np.isfinite(u)))
            raise NumericalError(
                f"velocity blew up at t = {t:g} s (vessel {arr.vessel_of_node(j)})"
            )
        sqA = np.sqrt(A)
        c = np.sqrt(arr.hb_nodes * sqA)
        speed = np.abs(u) + c
        smax = np.maximum.reduceat(speed, offset)
        dt = cfl * float(np.min(arr.dx / smax))
        if not (dt > 0.0 and math.isfinite(dt)):
            raise NumericalError(f"time step collapsed (dt = {dt}) at t = {t:g} s")
        dt = min(dt, max_dt)
        t_next = snap_times[isnap] if isnap < ns else t1
        rem = t_next - t
        land = dt >= rem * (1.0 - 1e-12)
        if land:
            dt = rem
        t_new = t_next if land else t + dt
        mach = float(np.max(np.abs(u) / c))
        if mach > max_mach:
            max_mach = mach

        # interior update, one vessel at a time
        for k in range(K):
            o = int(offset[k])
            n = int(nnode[k])
            sl = slice(o, o + n)
            Ak = A[sl]
            uk = u[sl]
            bt = arr.beta[k]
            px = arr.pext[k]
            r = dt / arr.dx[k]
            Q = Ak * uk
            E = 0.5 * uk * uk + (px + bt * (sqA[sl] - arr.sqA0[sl])) / rho
            Ah = 0.5 * (Ak[:-1] + Ak[1:]) - 0.5 * r * (Q[1:] - Q[:-1])
            if np.any(Ah <= 0.0):
                raise NumericalError(
                    f"vessel {arr.ids[k]}: negative area at half step, t = {t:g} s"
                )
            uh = 0.5 * (uk[:-1] + uk[1:]) - 0.5 * r * (E[1:] - E[:-1])
            oh = int(arr.offh[k])
            sqh = arr.sqA0h[oh:oh + n - 1]
            Qh = Ah * uh
            Eh = 0.5 * uh * uh + (px + bt * (np.sqrt(Ah) - sqh)) / rho
            inner = Ak[1:-1] - r * (Qh[1:] - Qh[:-1])
            if np.any(inner <= 0.0):
                raise NumericalError(
                    f"vessel {arr.ids[k]}: negative area, t = {t:g} s"
                )
            An[o + 1:o + n - 1] = inner
            unew = uk[1:-1] - r * (Eh[1:] - Eh[:-1])
            if fric_rho != 0.0:
                unew = unew * (1.0 + dt * fric_rho / inner)
            un[o + 1:o + n - 1] = unew

        # boundary closures, all reading the old state
        for slot, base, peaks, centers, widths, period in arr.inlet_list:
            o = int(offset[slot])
            a_, u_ = _bounds.inlet_node(
                A[o], A[o + 1], u[o], u[o + 1], arr.hb[slot], arr.dx[slot], dt,
                base, peaks, centers, widths, period, t_new, arr.ids[slot],
            )
            An[o] = a_
            un[o] = u_

        for slot, r1, r2, cap, pinf in arr.outlet_list:
            e = int(offset[slot]) + int(nnode[slot]) - 1
            a_, u_, wit = _bounds.windkessel_node(
                A[e], A[e - 1], u[e], u[e - 1], arr.hb[slot], arr.beta[slot],
                arr.pext[slot], arr.sqA0[e], arr.dx[slot], dt,
                r1, r2, cap, pinf, jn_tol, jn_maxit, arr.ids[slot], t,
            )
            An[e] = a_
            un[e] = u_
            if wit > max_wit:
                max_wit = wit

        for pslot, cslots, qscale, pscale in arr.junction_list:
            pe = int(offset[pslot]) + int(nnode[pslot]) - 1
            cs = [int(offset[s]) for s in cslots]
            a_p, u_p, a_c, u_c, jit, fm, qmax = _bounds.junction_nodes(
                rho, dt, jn_tol, jn_maxit, jn_mode,
                A[pe], A[pe - 1], u[pe], u[pe - 1], arr.hb[pslot],
                arr.beta[pslot], arr.pext[pslot], arr.sqA0[pe], arr.dx[pslot],
                [A[s] for s in cs], [A[s + 1] for s in cs],
                [u[s] for s in cs], [u[s + 1] for s in cs],
                [arr.hb[s] for s in cslots], [arr.beta[s] for s in cslots],
                [arr.pext[s] for s in cslots],
                [arr.sqA0[int(offset[s])] for s in cslots],
                [arr.dx[s] for s in cslots],
                qscale, pscale, arr.ids[pslot], t,
            )
            An[pe] = a_p
            un[pe] = u_p
            for i, s in enumerate(cs):
                An[s] = a_c[i]
                un[s] = u_c[i]
            max_fm = max(max_fm, fm)
            max_q = max(max_q, qmax)
            max_jit = max(max_jit, jit)

        A[:] = An
        u[:] = un
        n_steps += 1
        min_dt = min(min_dt, dt)
        max_dt_used = max(max_dt_used, dt)
        if land:
            t = t_next
            if isnap < ns:
                snap_u[:, isnap] = u
                snap_A[:, isnap] = A
                isnap += 1
        else:
            t = t_new

    stats[0] += n_steps
    stats[1] = min(stats[1], min_dt) if n_steps else stats[1]
    stats[2] = max(stats[2], max_dt_used)
    stats[3] = max(stats[3], max_fm)
    stats[4] = max(stats[4], max_q)
    stats[5] = max(stats[5], max_jit)
    stats[6] = max(stats[6], max_wit)
    stats[7] = max(stats[7], max_mach)
    return isnap
