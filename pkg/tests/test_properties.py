"""Property-based checks for algebraic invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from hemogp.ensemble import InletSigma, RandomizationSpec, sample_parameters
from hemogp.lowrank import build_kernel
from hemogp.network import (BloodProperties, NetworkTopology, Vessel,
                            WindkesselOutlet, pressure, wave_speed)
from hemogp.waveform import InletWaveform, evaluate_inlet
from test_lowrank import synthetic_snap

betas = st.floats(1e5, 1e10)
areas = st.floats(1e-7, 1e-3)
rhos = st.floats(900.0, 1200.0)


@given(beta=betas, a=areas, rho=rhos)
def test_wave_speed_inverts_to_area(beta, a, rho):
    c = wave_speed(beta, a, rho)
    hb = beta / (2.0 * rho)
    back = (c * c / hb) ** 2
    assert abs(back - a) <= 4e-15 * a


@given(beta=betas, a0=areas, f1=st.floats(0.2, 5.0), f2=st.floats(0.2, 5.0))
def test_pressure_monotone_in_area(beta, a0, f1, f2):
    lo, hi = sorted((f1 * a0, f2 * a0))
    assert pressure(beta, lo, a0) <= pressure(beta, hi, a0)
    assert pressure(beta, a0, a0) == 0.0


@given(beta=betas, a=areas, rho=rhos, k=st.floats(0.1, 10.0))
def test_wave_speed_scales_as_sqrt_beta(beta, a, rho, k):
    ratio = wave_speed(k * beta, a, rho) / wave_speed(beta, a, rho)
    assert abs(ratio - np.sqrt(k)) < 1e-12 * np.sqrt(k)


@given(
    base=st.floats(-1.0, 1.0),
    peak=st.floats(-5.0, 5.0),
    center=st.floats(0.0, 0.8),
    width=st.floats(1e-4, 1e-1),
    t=st.floats(0.0, 0.8),
    n=st.integers(1, 5),
)
def test_waveform_periodic_under_shifts(base, peak, center, width, t, n):
    wf = InletWaveform(period=0.8, base=base, peaks=(peak,), centers=(center,),
                       widths=(width,))
    a = evaluate_inlet(wf, t)
    b = evaluate_inlet(wf, t + n * wf.period)
    # the mod-T fold moves t by ulps of n*T; slopes are bounded by the strategy
    assert abs(a - b) < 1e-9


@settings(max_examples=40, deadline=None)
@given(
    sigs=st.lists(st.floats(0.05, 30.0), min_size=2, max_size=12),
    thr=st.floats(0.05, 1.0),
)
def test_energy_rank_is_minimal(sigs, thr):
    cols = []
    for i, s in enumerate(sorted(sigs, reverse=True)):
        c = np.zeros(20)
        c[i] = s * np.sqrt(len(sigs))    # singular value of U is s*sqrt(N)
        cols.append(c)
    k = build_kernel(synthetic_snap(cols), energy_threshold=thr)
    e = np.sort(np.array(sigs) ** 2)[::-1]
    cum = np.cumsum(e) / e.sum()
    assert cum[k.rank - 1] >= thr - 1e-12
    assert k.rank == 1 or cum[k.rank - 2] < thr


def one_tube():
    rho = 1050.0
    return NetworkTopology(
        blood=BloodProperties(density=rho, viscosity=0.0),
        vessels={1: Vessel(id=1, length=0.1, area=1e-4, grid_points=5,
                           beta=1e7)},
        junctions=[],
        inlets={1: InletWaveform(period=0.8, base=0.2, peaks=(1.0,),
                                 centers=(0.2,), widths=(1e-2,))},
        outlets={1: WindkesselOutlet(vessel=1, resistance=1e10,
                                     compliance=1e-10)},
    )


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    index=st.integers(0, 1000),
    s_base=st.floats(0.0, 1.0),
    s_area=st.floats(0.0, 0.8),
)
def test_sample_draws_stay_inside_support(seed, index, s_base, s_area):
    net = one_tube()
    spec = RandomizationSpec(
        inlet={1: InletSigma(base=s_base, peaks=(0.5,), centers=(0.01,),
                             widths=(0.0,))},
        outlet={1: (0.4, 0.4)},
        area={1: s_area},
    )
    smp = sample_parameters(spec, net, seed, index)
    wf = smp.waveforms[1]
    assert abs(wf.base - 0.2) <= 0.5 * s_base + 1e-15
    assert abs(wf.peaks[0] / 1.0 - 1.0) <= 0.25 + 1e-15
    assert abs(smp.area_scale[1] - 1.0) <= 0.5 * s_area + 1e-15
    rt, cap = smp.outlets[1]
    assert abs(rt / 1e10 - 1.0) <= 0.2 + 1e-15
    assert abs(cap / 1e-10 - 1.0) <= 0.2 + 1e-15
    # same key, same draw
    smp2 = sample_parameters(spec, net, seed, index)
    assert smp2.to_dict() == smp.to_dict()
