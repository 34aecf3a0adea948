# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled solver backend. Same algorithm as _kernels_py: two-step
Lax-Wendroff interior update plus characteristic boundary closures, with the
whole time window advanced in C.
"""

import math

import numpy as np

cimport numpy as cnp
from libc.float cimport DBL_EPSILON
from libc.math cimport exp, fabs, floor, isfinite, sqrt

from .errors import ConvergenceError, NumericalError

BACKEND_NAME = "cython"

DEF MAXCH = 15


cdef inline double _wave_eval(double t, double T, double a0,
                              Py_ssize_t lo, Py_ssize_t hi,
                              const double[::1] pa, const double[::1] pb,
                              const double[::1] pc) noexcept:
    # must match waveform.evaluate_inlet / _bounds.wave_value
    cdef double tau = t - floor(t / T) * T
    cdef double v = a0
    cdef double d
    cdef Py_ssize_t i
    for i in range(lo, hi):
        d = tau - pb[i]
        v += pa[i] * exp(-(d * d) / pc[i])
    return v


def advance(arr, double[::1] A, double[::1] u, double t0, double t1,
            double[::1] snap_times, double[:, ::1] snap_u, double[:, ::1] snap_A,
            Py_ssize_t isnap0, double cfl, double max_dt,
            double jn_tol, int jn_maxit, int jn_mode, double[::1] stats):
    """Integrate the network state in place from t0 to t1; see _kernels_py."""
    cdef int[::1] nnode = arr.nnode
    cdef int[::1] offset = arr.offset
    cdef double[::1] dx = arr.dx
    cdef double[::1] beta = arr.beta
    cdef double[::1] hb = arr.hb
    cdef double[::1] pext = arr.pext
    cdef double[::1] sqA0 = arr.sqA0
    cdef double[::1] sqA0h = arr.sqA0h
    cdef int[::1] offh = arr.offh
    cdef double rho = arr.rho
    cdef double fric_rho = arr.fric_rho

    cdef int[::1] in_slot = arr.in_slot
    cdef double[::1] in_base = arr.in_base
    cdef double[::1] in_T = arr.in_T
    cdef int[::1] in_off = arr.in_off
    cdef double[::1] in_a = arr.in_a
    cdef double[::1] in_b = arr.in_b
    cdef double[::1] in_c = arr.in_c

    cdef int[::1] jn_pslot = arr.jn_pslot
    cdef int[::1] jn_coff = arr.jn_coff
    cdef int[::1] jn_cslot = arr.jn_cslot
    cdef double[::1] jn_qscale = arr.jn_qscale
    cdef double[::1] jn_pscale = arr.jn_pscale

    cdef int[::1] out_slot = arr.out_slot
    cdef double[::1] out_r1 = arr.out_r1
    cdef double[::1] out_r2 = arr.out_r2
    cdef double[::1] out_cap = arr.out_cap
    cdef double[::1] out_pinf = arr.out_pinf

    cdef Py_ssize_t total = A.shape[0]
    cdef Py_ssize_t K = arr.K
    cdef Py_ssize_t n_in = in_slot.shape[0]
    cdef Py_ssize_t n_jn = jn_pslot.shape[0]
    cdef Py_ssize_t n_out = out_slot.shape[0]
    cdef Py_ssize_t nmax = 0
    cdef Py_ssize_t k
    for k in range(K):
        if nnode[k] > nmax:
            nmax = nnode[k]

    buf = np.empty(4 * total + 4 * nmax, dtype=np.float64)
    cdef double[::1] An = buf[0:total]
    cdef double[::1] un = buf[total:2 * total]
    cdef double[::1] sq = buf[2 * total:3 * total]
    cdef double[::1] cv = buf[3 * total:4 * total]
    cdef double[::1] Q = buf[4 * total:4 * total + nmax]
    cdef double[::1] E = buf[4 * total + nmax:4 * total + 2 * nmax]
    cdef double[::1] Qh = buf[4 * total + 2 * nmax:4 * total + 3 * nmax]
    cdef double[::1] Eh = buf[4 * total + 3 * nmax:4 * total + 4 * nmax]

    cdef Py_ssize_t isnap = isnap0
    cdef Py_ssize_t ns = snap_times.shape[0]
    cdef double t = t0
    cdef double n_steps = 0.0
    cdef double min_dt = stats[1]
    cdef double max_dt_used = stats[2]
    cdef double max_fm = stats[3]
    cdef double max_q = stats[4]
    cdef double max_jit = stats[5]
    cdef double max_wit = stats[6]
    cdef double max_mach = stats[7]

    cdef Py_ssize_t j, o, n, e, i, lo, hi, nch, it, pe
    cdef double a, s, cj, sp, smax, dk, dtc, dt, t_next, rem, t_new, r, bt, px
    cdef double ah, uhv, qv, ev, an_, un_, mach
    cdef double c1, c2, xi, wb_, unew, cb, sqa
    cdef double wf, p_old, q_old, rt, rc, rrc, scale, g, uu, q_, p_, dp, dq, dg, anew, da
    cdef double cpe, cpi, sqp, cp, u_p, p_p, hp, qp, fm, qmaxl, fmax
    cdef double sqi, ci, ui, p_i, qi, jip, j0p, denom, rhs, dap
    cdef double acs[MAXCH]
    cdef double ucs[MAXCH]
    cdef double wbs[MAXCH]
    cdef double fis[MAXCH]
    cdef double jiis[MAXCH]
    cdef double j0is[MAXCH]
    cdef bint land, singular, floor_hit
    cdef int oh

    while t < t1:
        # pass 1: sound speeds and the CFL bound
        dtc = math.inf
        mach = 0.0
        for k in range(K):
            o = offset[k]
            n = nnode[k]
            smax = 0.0
            for j in range(o, o + n):
                a = A[j]
                if not (a > 0.0):
                    raise NumericalError(
                        f"non-positive or non-finite area at t = {t:g} s "
                        f"(vessel {arr.ids[k]})"
                    )
                if not isfinite(u[j]):
                    raise NumericalError(
                        f"velocity blew up at t = {t:g} s (vessel {arr.ids[k]})"
                    )
                s = sqrt(a)
                sq[j] = s
                cj = sqrt(hb[k] * s)
                cv[j] = cj
                sp = fabs(u[j]) + cj
                if sp > smax:
                    smax = sp
                sp = fabs(u[j]) / cj
                if sp > mach:
                    mach = sp
            dk = dx[k] / smax
            if dk < dtc:
                dtc = dk
        dt = cfl * dtc
        if not (dt > 0.0 and isfinite(dt)):
            raise NumericalError(f"time step collapsed (dt = {dt}) at t = {t:g} s")
        if dt > max_dt:
            dt = max_dt
        t_next = snap_times[isnap] if isnap < ns else t1
        rem = t_next - t
        land = dt >= rem * (1.0 - 1e-12)
        if land:
            dt = rem
        t_new = t_next if land else t + dt
        if mach > max_mach:
            max_mach = mach

        # pass 2: Lax-Wendroff interior update
        for k in range(K):
            o = offset[k]
            n = nnode[k]
            r = dt / dx[k]
            bt = beta[k]
            px = pext[k]
            oh = offh[k]
            for j in range(n):
                Q[j] = A[o + j] * u[o + j]
                E[j] = 0.5 * u[o + j] * u[o + j] + (px + bt * (sq[o + j] - sqA0[o + j])) / rho
            for j in range(n - 1):
                ah = 0.5 * (A[o + j] + A[o + j + 1]) - 0.5 * r * (Q[j + 1] - Q[j])
                if ah <= 0.0:
                    raise NumericalError(
                        f"vessel {arr.ids[k]}: negative area at half step, t = {t:g} s"
                    )
                uhv = 0.5 * (u[o + j] + u[o + j + 1]) - 0.5 * r * (E[j + 1] - E[j])
                Qh[j] = ah * uhv
                Eh[j] = 0.5 * uhv * uhv + (px + bt * (sqrt(ah) - sqA0h[oh + j])) / rho
            for j in range(1, n - 1):
                an_ = A[o + j] - r * (Qh[j] - Qh[j - 1])
                if an_ <= 0.0:
                    raise NumericalError(
                        f"vessel {arr.ids[k]}: negative area, t = {t:g} s"
                    )
                un_ = u[o + j] - r * (Eh[j] - Eh[j - 1])
                if fric_rho != 0.0:
                    un_ = un_ * (1.0 + dt * fric_rho / an_)
                An[o + j] = an_
                un[o + j] = un_

        # inflow ends
        for i in range(n_in):
            k = in_slot[i]
            o = offset[k]
            c1 = cv[o]
            c2 = cv[o + 1]
            xi = (c1 - u[o]) * dt / dx[k]
            if xi < 0.0:
                xi = 0.0
            elif xi > 1.0:
                xi = 1.0
            wb_ = (1.0 - xi) * (u[o] - 4.0 * c1) + xi * (u[o + 1] - 4.0 * c2)
            lo = in_off[i]
            hi = in_off[i + 1]
            unew = _wave_eval(t_new, in_T[i], in_base[i], lo, hi, in_a, in_b, in_c)
            cb = 0.25 * (unew - wb_)
            if cb <= 0.0:
                raise NumericalError(
                    f"vessel {arr.ids[k]}: inlet characteristic collapsed "
                    f"(c = {cb:g} m/s at t = {t_new:g} s)"
                )
            sqa = cb * cb / hb[k]
            An[o] = sqa * sqa
            un[o] = unew

        # RCR terminals
        for i in range(n_out):
            k = out_slot[i]
            o = offset[k]
            n = nnode[k]
            e = o + n - 1
            c1 = cv[e]
            c2 = cv[e - 1]
            xi = (u[e] + c1) * dt / dx[k]
            if xi < 0.0:
                xi = 0.0
            elif xi > 1.0:
                xi = 1.0
            wf = (1.0 - xi) * (u[e] + 4.0 * c1) + xi * (u[e - 1] + 4.0 * c2)
            bt = beta[k]
            px = pext[k]
            p_old = px + bt * (sq[e] - sqA0[e])
            q_old = A[e] * u[e]
            rt = out_r1[i] + out_r2[i]
            rc = out_r2[i] * out_cap[i] / dt
            rrc = out_r1[i] * rc
            a = A[e]
            g = 0.0
            it = 0
            while it < jn_maxit:
                s = sqrt(a)
                cj = sqrt(hb[k] * s)
                uu = wf - 4.0 * cj
                q_ = a * uu
                p_ = px + bt * (s - sqA0[e])
                g = (p_ - out_pinf[i]) + rc * (p_ - p_old) - rt * q_ - rrc * (q_ - q_old)
                # round-off floor of g tracks the magnitudes summed into it,
                # so scale the test by the terms, not the cancelled total
                scale = (0.5 * bt * sqA0[e] + fabs(p_ - out_pinf[i])
                         + rc * (fabs(p_) + fabs(p_old))
                         + rt * fabs(q_) + rrc * (fabs(q_) + fabs(q_old)))
                if fabs(g) <= jn_tol * scale:
                    break
                dp = 0.5 * bt / s
                dq = uu - cj
                dg = dp * (1.0 + rc) - (rt + rrc) * dq
                if dg == 0.0 or not isfinite(dg):
                    it = jn_maxit
                    break
                da = g / dg
                if fabs(da) <= 16.0 * DBL_EPSILON * a:
                    # update within a few ulps of a: no representable area
                    # does better; g can staircase over ulps near the root
                    break
                anew = a - da
                if anew <= 0.0:
                    anew = 0.5 * a
                a = anew
                it += 1
            if it >= jn_maxit:
                raise ConvergenceError(
                    f"outlet vessel {arr.ids[k]}: windkessel newton stalled "
                    f"(residual {g:g} Pa at t = {t:g} s)"
                )
            An[e] = a
            un[e] = uu
            if it > max_wit:
                max_wit = it

        # branch points
        for i in range(n_jn):
            k = jn_pslot[i]
            pe = offset[k] + nnode[k] - 1
            cpe = cv[pe]
            cpi = cv[pe - 1]
            xi = (u[pe] + cpe) * dt / dx[k]
            if xi < 0.0:
                xi = 0.0
            elif xi > 1.0:
                xi = 1.0
            wf = (1.0 - xi) * (u[pe] + 4.0 * cpe) + xi * (u[pe - 1] + 4.0 * cpi)
            lo = jn_coff[i]
            hi = jn_coff[i + 1]
            nch = hi - lo
            for j in range(nch):
                e = offset[jn_cslot[lo + j]]
                c1 = cv[e]
                c2 = cv[e + 1]
                xi = (c1 - u[e]) * dt / dx[jn_cslot[lo + j]]
                if xi < 0.0:
                    xi = 0.0
                elif xi > 1.0:
                    xi = 1.0
                wbs[j] = (1.0 - xi) * (u[e] - 4.0 * c1) + xi * (u[e + 1] - 4.0 * c2)
                acs[j] = A[e]
            a = A[pe]
            fm = 0.0
            it = 0
            while it < jn_maxit:
                sqp = sqrt(a)
                cp = sqrt(hb[k] * sqp)
                u_p = wf - 4.0 * cp
                p_p = pext[k] + beta[k] * (sqp - sqA0[pe])
                hp = p_p + 0.5 * rho * u_p * u_p
                qp = a * u_p
                fm = qp
                qmaxl = fabs(qp)
                fmax = 0.0
                for j in range(nch):
                    e = jn_cslot[lo + j]
                    sqi = sqrt(acs[j])
                    ci = sqrt(hb[e] * sqi)
                    ui = wbs[j] + 4.0 * ci
                    ucs[j] = ui
                    p_i = pext[e] + beta[e] * (sqi - sqA0[offset[e]])
                    qi = acs[j] * ui
                    fm -= qi
                    if fabs(qi) > qmaxl:
                        qmaxl = fabs(qi)
                    if jn_mode == 0:
                        fis[j] = hp - (p_i + 0.5 * rho * ui * ui)
                        jiis[j] = -rho * ci * (ci + ui) / acs[j]
                    else:
                        fis[j] = p_p - p_i
                        jiis[j] = -rho * ci * ci / acs[j]
                    j0is[j] = -(ui + ci)
                    if fabs(fis[j]) > fmax:
                        fmax = fabs(fis[j])
                if fabs(fm) <= jn_tol * jn_qscale[i] and fmax <= jn_tol * jn_pscale[i]:
                    break
                if jn_mode == 0:
                    jip = rho * cp * (cp - u_p) / a
                else:
                    jip = rho * cp * cp / a
                j0p = u_p - cp
                denom = j0p
                rhs = -fm
                singular = False
                for j in range(nch):
                    if jiis[j] == 0.0 or not isfinite(jiis[j]):
                        singular = True
                        break
                    denom -= j0is[j] * jip / jiis[j]
                    rhs += j0is[j] * fis[j] / jiis[j]
                if singular or denom == 0.0 or not isfinite(denom):
                    it = jn_maxit
                    break
                dap = rhs / denom
                floor_hit = fabs(dap) <= 16.0 * DBL_EPSILON * a
                for j in range(nch):
                    if fabs(-fis[j] - jip * dap) > 16.0 * DBL_EPSILON * acs[j] * fabs(jiis[j]):
                        floor_hit = False
                if floor_hit:
                    # all updates within a few ulps of the areas
                    break
                anew = a + dap
                a = anew if anew > 0.0 else 0.5 * a
                for j in range(nch):
                    anew = acs[j] + (-fis[j] - jip * dap) / jiis[j]
                    acs[j] = anew if anew > 0.0 else 0.5 * acs[j]
                it += 1
            if it >= jn_maxit:
                raise ConvergenceError(
                    f"junction at vessel {arr.ids[k]}: newton stalled "
                    f"(mass residual {fm:g} m^3/s at t = {t:g} s)"
                )
            An[pe] = a
            un[pe] = u_p
            for j in range(nch):
                e = offset[jn_cslot[lo + j]]
                An[e] = acs[j]
                un[e] = ucs[j]
            if fabs(fm) > max_fm:
                max_fm = fabs(fm)
            if qmaxl > max_q:
                max_q = qmaxl
            if it > max_jit:
                max_jit = it

        A[:] = An
        u[:] = un
        n_steps += 1.0
        if dt < min_dt:
            min_dt = dt
        if dt > max_dt_used:
            max_dt_used = dt
        if land:
            t = t_next
            if isnap < ns:
                for j in range(total):
                    snap_u[j, isnap] = u[j]
                    snap_A[j, isnap] = A[j]
                isnap += 1
        else:
            t = t_new

    stats[0] += n_steps
    stats[1] = min_dt
    stats[2] = max_dt_used
    stats[3] = max_fm
    stats[4] = max_q
    stats[5] = max_jit
    stats[6] = max_wit
    stats[7] = max_mach
    return isnap
