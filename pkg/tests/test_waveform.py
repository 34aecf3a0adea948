"""Inlet waveform evaluation.

The t=0.2 oracle value was summed by hand from
base + sum_i a_i exp(-(0.2-b_i)^2/c_i) with the four peak terms of the
branching-network inflow (period 0.8, base 0.5, peaks -0.5/3.0/-1.0/-0.1).
"""

import numpy as np
import pytest

from hemogp import ConfigError, InletWaveform, evaluate_inlet


def ys_waveform():
    return InletWaveform(period=0.8, base=0.5,
                         peaks=(-0.5, 3.0, -1.0, -0.1),
                         centers=(0.08, 0.2, 0.4, 0.6),
                         widths=(2.0e-3, 5.0e-3, 1.5e-2, 0.01))


def test_oracle_value():
    wf = ys_waveform()
    assert evaluate_inlet(wf, 0.2) == pytest.approx(3.430143244619493, rel=1e-14)


def test_periodicity():
    wf = ys_waveform()
    t = np.array([0.0, 0.05, 0.2, 0.41, 0.79])
    base = evaluate_inlet(wf, t)
    # adding T perturbs tau by a few ulps; the steepest peak slope is ~40 /s,
    # so the wrapped values agree to ~1e-14
    assert np.allclose(evaluate_inlet(wf, t + 0.8), base, rtol=0, atol=1e-12)
    assert np.allclose(evaluate_inlet(wf, t + 4 * 0.8), base, rtol=0, atol=1e-12)


def test_scalar_and_array_agree():
    wf = ys_waveform()
    t = np.linspace(0.0, 1.6, 33)
    arr = evaluate_inlet(wf, t)
    assert arr.shape == t.shape
    for i in (0, 7, 20, 32):
        s = evaluate_inlet(wf, float(t[i]))
        assert isinstance(s, float)
        assert s == arr[i]


def test_peak_dominates_at_center():
    wf = ys_waveform()
    # at the tallest center the local term contributes its full amplitude
    assert evaluate_inlet(wf, 0.2) > wf.base + 2.5


def test_validation():
    with pytest.raises(ConfigError):
        InletWaveform(period=0.0, base=0.0, peaks=(1.0,), centers=(0.1,),
                      widths=(1e-3,))
    with pytest.raises(ConfigError):
        InletWaveform(period=1.0, base=0.0, peaks=(1.0, 2.0), centers=(0.1,),
                      widths=(1e-3,))
    with pytest.raises(ConfigError):
        InletWaveform(period=1.0, base=0.0, peaks=(1.0,), centers=(0.1,),
                      widths=(0.0,))
    with pytest.raises(ConfigError):
        InletWaveform(period=1.0, base=0.0, peaks=(), centers=(), widths=())


def test_list_inputs_become_tuples():
    wf = InletWaveform(period=1.0, base=0.0, peaks=[1.0], centers=[0.1],
                       widths=[1e-3])
    assert wf.peaks == (1.0,)
    hash(wf)  # stays hashable for caching keyed on the waveform
