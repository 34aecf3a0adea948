"""Characteristic boundary closures, shared by the pure-Python backend and the
operation-level API. The compiled backend reimplements the same arithmetic in
C; backend-equivalence tests pin the two together.

All functions work on scalars from the *old* time level and return new values
for the boundary nodes. Characteristic feet are located by linear
interpolation between the end node and its interior neighbor, with the
interpolation weight clamped to one cell (guaranteed by the CFL bound).
"""

import math
import sys

from .errors import ConvergenceError, NumericalError

EPS = sys.float_info.epsilon


def wave_value(t, period, base, peaks, centers, widths):
    """Inlet waveform, scalar form. Must match waveform.evaluate_inlet."""
    tau = t - math.floor(t / period) * period
    v = base
    for i in range(len(peaks)):
        d = tau - centers[i]
        v += peaks[i] * math.exp(-(d * d) / widths[i])
    return v


def inlet_node(a1, a2, u1, u2, hb, dx, dt, base, peaks, centers, widths, period,
               t_new, vid):
    """New (A, u) at an inflow end. u is prescribed by the waveform; A follows
    from the outgoing invariant W- = u - 4c carried to the boundary."""
    c1 = math.sqrt(hb * math.sqrt(a1))
    c2 = math.sqrt(hb * math.sqrt(a2))
    xi = (c1 - u1) * dt / dx
    xi = min(max(xi, 0.0), 1.0)
    wb = (1.0 - xi) * (u1 - 4.0 * c1) + xi * (u2 - 4.0 * c2)
    unew = wave_value(t_new, period, base, peaks, centers, widths)
    cb = 0.25 * (unew - wb)
    if cb <= 0.0:
        raise NumericalError(
            f"vessel {vid}: inlet characteristic collapsed (c = {cb:g} m/s "
            f"at t = {t_new:g} s)"
        )
    sq = cb * cb / hb
    return sq * sq, unew


def windkessel_node(a1, a2, u1, u2, hb, beta, pext, sqa0, dx, dt,
                    r1, r2, cap, pinf, tol, maxit, vid, t):
    """New (A, u) at an RCR terminal.

    The lumped model p + R2*C*dp/dt = p_inf + Rt*Q + R1*R2*C*dQ/dt is closed
    with backward-Euler time derivatives and the incoming invariant
    W+ = u + 4c, leaving a scalar Newton iteration in A.
    Returns (A, u, iterations).
    """
    c1 = math.sqrt(hb * math.sqrt(a1))
    c2 = math.sqrt(hb * math.sqrt(a2))
    xi = (u1 + c1) * dt / dx
    xi = min(max(xi, 0.0), 1.0)
    wf = (1.0 - xi) * (u1 + 4.0 * c1) + xi * (u2 + 4.0 * c2)
    p_old = pext + beta * (math.sqrt(a1) - sqa0)
    q_old = a1 * u1
    rt = r1 + r2
    rc = r2 * cap / dt
    rrc = r1 * rc
    a = a1
    g = 0.0
    for it in range(maxit):
        sq = math.sqrt(a)
        cc = math.sqrt(hb * sq)
        uu = wf - 4.0 * cc
        q = a * uu
        p = pext + beta * (sq - sqa0)
        g = (p - pinf) + rc * (p - p_old) - rt * q - rrc * (q - q_old)
        # round-off floor of g tracks the magnitudes summed into it, not the
        # final value; rc and rrc blow up as dt shrinks, so scale by the terms
        scale = (0.5 * beta * sqa0 + abs(p - pinf) + rc * (abs(p) + abs(p_old))
                 + rt * abs(q) + rrc * (abs(q) + abs(q_old)))
        if abs(g) <= tol * scale:
            return a, uu, it
        dp = 0.5 * beta / sq
        dq = uu - cc
        dg = dp * (1.0 + rc) - (rt + rrc) * dq
        if dg == 0.0 or not math.isfinite(dg):
            break
        da = g / dg
        if abs(da) <= 16.0 * EPS * a:
            # update within a few ulps of a: no representable area does
            # better, and g can staircase over several ulps near the root
            return a, uu, it
        anew = a - da
        if anew <= 0.0:
            anew = 0.5 * a
        a = anew
    raise ConvergenceError(
        f"outlet vessel {vid}: windkessel newton stalled "
        f"(residual {g:g} Pa at t = {t:g} s)"
    )


def junction_nodes(rho, dt, tol, maxit, mode,
                   ap, ap_in, up, up_in, hbp, betap, pextp, sqa0p, dxp,
                   ac, ac_in, uc, uc_in, hbc, betac, pextc, sqa0c, dxc,
                   qscale, pscale, parent_vid, t):
    """New boundary states at a branching point: parent distal node plus each
    child proximal node.

    Unknowns are the areas; velocities are eliminated through the invariants
    (W+ into the junction from the parent, W- from each child). Equations are
    flux continuity and, per child, continuity of total pressure
    p + rho*u^2/2 (mode 0) or static pressure p (mode 1). The Jacobian is
    arrow-shaped and solved by elimination.
    Returns (a_p, u_p, a_c list, u_c list, iterations, |mass residual|, max|Q|).
    """
    nch = len(ac)
    cpe = math.sqrt(hbp * math.sqrt(ap))
    cpi = math.sqrt(hbp * math.sqrt(ap_in))
    xi = min(max((up + cpe) * dt / dxp, 0.0), 1.0)
    wf = (1.0 - xi) * (up + 4.0 * cpe) + xi * (up_in + 4.0 * cpi)
    wb = [0.0] * nch
    for i in range(nch):
        cce = math.sqrt(hbc[i] * math.sqrt(ac[i]))
        cci = math.sqrt(hbc[i] * math.sqrt(ac_in[i]))
        xi = min(max((cce - uc[i]) * dt / dxc[i], 0.0), 1.0)
        wb[i] = (1.0 - xi) * (uc[i] - 4.0 * cce) + xi * (uc_in[i] - 4.0 * cci)

    qthresh = tol * qscale
    pthresh = tol * pscale
    a_p = ap
    a_c = list(ac)
    u_c = [0.0] * nch
    fi = [0.0] * nch
    jii = [0.0] * nch
    j0i = [0.0] * nch
    fm = 0.0
    for it in range(maxit):
        sqp = math.sqrt(a_p)
        cp = math.sqrt(hbp * sqp)
        u_p = wf - 4.0 * cp
        p_p = pextp + betap * (sqp - sqa0p)
        hp = p_p + 0.5 * rho * u_p * u_p
        qp = a_p * u_p
        fm = qp
        qmax = abs(qp)
        fmax = 0.0
        for i in range(nch):
            sqi = math.sqrt(a_c[i])
            ci = math.sqrt(hbc[i] * sqi)
            ui = wb[i] + 4.0 * ci
            u_c[i] = ui
            p_i = pextc[i] + betac[i] * (sqi - sqa0c[i])
            qi = a_c[i] * ui
            fm -= qi
            qmax = max(qmax, abs(qi))
            if mode == 0:
                fi[i] = hp - (p_i + 0.5 * rho * ui * ui)
                jii[i] = -rho * ci * (ci + ui) / a_c[i]
            else:
                fi[i] = p_p - p_i
                jii[i] = -rho * ci * ci / a_c[i]
            j0i[i] = -(ui + ci)
            fmax = max(fmax, abs(fi[i]))
        if abs(fm) <= qthresh and fmax <= pthresh:
            return a_p, u_p, a_c, u_c, it, abs(fm), qmax
        if mode == 0:
            jip = rho * cp * (cp - u_p) / a_p
        else:
            jip = rho * cp * cp / a_p
        j0p = u_p - cp
        denom = j0p
        rhs = -fm
        singular = False
        for i in range(nch):
            if jii[i] == 0.0 or not math.isfinite(jii[i]):
                singular = True
                break
            denom -= j0i[i] * jip / jii[i]
            rhs += j0i[i] * fi[i] / jii[i]
        if singular or denom == 0.0 or not math.isfinite(denom):
            break
        dap = rhs / denom
        floor = abs(dap) <= 16.0 * EPS * a_p
        for i in range(nch):
            if abs(-fi[i] - jip * dap) > 16.0 * EPS * a_c[i] * abs(jii[i]):
                floor = False
        if floor:
            # all updates within a few ulps of the areas: machine-converged
            return a_p, u_p, a_c, u_c, it, abs(fm), qmax
        anew = a_p + dap
        a_p = anew if anew > 0.0 else 0.5 * a_p
        for i in range(nch):
            anew = a_c[i] + (-fi[i] - jip * dap) / jii[i]
            a_c[i] = anew if anew > 0.0 else 0.5 * a_c[i]
    raise ConvergenceError(
        f"junction at vessel {parent_vid}: newton stalled "
        f"(mass residual {fm:g} m^3/s at t = {t:g} s)"
    )
