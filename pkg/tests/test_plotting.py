import numpy as np
import pytest

from hemogp import ConfigError
from hemogp.plotting import posterior_svg


def trace():
    t = np.linspace(0.0, 0.8, 40)
    mean = np.sin(2 * np.pi * t / 0.8)
    std = 0.1 + 0.02 * t
    return t, mean, std


def test_svg_is_deterministic():
    t, mean, std = trace()
    a = posterior_svg(t, mean, std, title="vessel 1")
    b = posterior_svg(t, mean, std, title="vessel 1")
    assert a == b
    assert a.startswith("<svg ")
    assert a.rstrip().endswith("</svg>")
    assert "timestamp" not in a


def test_svg_layers():
    t, mean, std = trace()
    svg = posterior_svg(t, mean, std, truth_t=t, truth_u=mean + 0.05,
                        title="with truth", measurements=(t[::8], mean[::8]))
    assert svg.count("<polyline") == 2      # truth + mean
    assert svg.count("<circle") == len(t[::8])
    assert "<polygon" in svg                # +-2 std band
    assert "with truth" in svg
    plain = posterior_svg(t, mean, std)
    assert plain.count("<polyline") == 1
    assert "<circle" not in plain


def test_svg_sorts_unordered_input():
    t, mean, std = trace()
    perm = np.random.default_rng(0).permutation(len(t))
    assert posterior_svg(t[perm], mean[perm], std[perm]) == posterior_svg(t, mean, std)


def test_svg_handles_flat_trace():
    t = np.array([0.0, 1.0])
    svg = posterior_svg(t, np.zeros(2), np.zeros(2))
    assert "NaN" not in svg and "nan" not in svg


def test_svg_input_validation():
    t, mean, std = trace()
    with pytest.raises(ConfigError, match="aligned"):
        posterior_svg(t, mean[:-1], std)
    with pytest.raises(ConfigError, match="aligned"):
        posterior_svg([0.0], [1.0], [0.1])
