import numpy as np
import pytest

from blochforge.grid import GridError, TorusGrid
from blochforge.potentials import (
    SIN2_SCALE,
    PotentialSpec,
    omega_native,
    omega_rescaled,
    sample_potential,
    sin2_native,
    smoothing_profile,
)


def test_zero_potential():
    g = TorusGrid(2, 16)
    V = sample_potential(PotentialSpec("zero"), g)
    assert V.shape == g.shape and np.all(V == 0.0)


def test_sin2_native_cell_mean_is_half():
    # sampled without the rescaling amplitude: plain sin^2(y), mean 1/2
    g = TorusGrid(1, 128)
    V = sample_potential(PotentialSpec("sin2_1d", {"rescaled": False}), g)
    assert V.mean() == pytest.approx(0.5, abs=1e-14)
    assert np.all(V >= 0) and V.max() == pytest.approx(1.0, abs=1e-12)


def test_sin2_rescaled_amplitude_and_unit_conversion():
    g = TorusGrid(1, 128)
    V = sample_potential(PotentialSpec("sin2_1d"), g)
    assert V.max() == pytest.approx(SIN2_SCALE, abs=1e-10)
    assert omega_native(omega_rescaled(0.76)) == pytest.approx(0.76, rel=1e-15)
    # composition really is the native lattice: V(y) = scale * sin2(10 y / pi)
    (y,) = g.points()
    assert np.allclose(V, SIN2_SCALE * sin2_native(10.0 * y / np.pi), atol=1e-12)


def test_smoothed_square_matches_pointwise_oracle():
    g = TorusGrid(2, 64)
    V = sample_potential(PotentialSpec("smoothed_square_2d"), g)
    x1, x2 = g.points()
    # independent scalar oracle, written out directly
    a = 3 * np.pi / 5
    W1 = 0.5 * (np.tanh(7 * (x1 + a)) + np.tanh(7 * (a - x1)))
    W2 = 0.5 * (np.tanh(7 * (x2 + a)) + np.tanh(7 * (a - x2)))
    assert np.max(np.abs(V - (1 + 4.35 * W1 * W2))) < 1e-14
    assert V.min() == pytest.approx(1.0, abs=1e-6)  # far from the plateau
    assert V.max() == pytest.approx(1.0 + 4.35, abs=1e-6)  # W*W ~ 1 plateau


def test_smoothing_profile_shape():
    assert smoothing_profile(0.0) == pytest.approx(1.0, abs=1e-8)
    assert abs(smoothing_profile(np.pi)) < 1e-6
    assert smoothing_profile(0.3) == pytest.approx(smoothing_profile(-0.3), abs=1e-15)


def test_cosine_family_any_dimension():
    amp = 2.5
    for dim, n in ((1, 64), (2, 32)):
        g = TorusGrid(dim, n)
        V = sample_potential(PotentialSpec("cosine", {"amplitude": amp}), g)
        pts = g.points()
        assert np.allclose(V, amp * sum(np.cos(x) for x in pts), atol=1e-14)


def test_fourier_table_sampling():
    g = TorusGrid(1, 64)
    spec = PotentialSpec(fourier_table={(1,): 0.5, (-1,): 0.5, (0,): 2.0})
    V = sample_potential(spec, g)
    (x,) = g.points()
    assert np.allclose(V, 2.0 + np.cos(x), atol=1e-12)


def test_fourier_table_must_be_real():
    g = TorusGrid(1, 64)
    with pytest.raises(ValueError):
        sample_potential(PotentialSpec(fourier_table={(1,): 1.0}), g)


def test_dimension_mismatch_rejected():
    with pytest.raises(GridError):
        sample_potential(PotentialSpec("sin2_1d"), TorusGrid(2, 16))
    with pytest.raises(GridError):
        sample_potential(PotentialSpec("smoothed_square_2d"), TorusGrid(1, 16))


def test_spec_requires_exactly_one_source():
    with pytest.raises(ValueError):
        PotentialSpec()
    with pytest.raises(ValueError):
        PotentialSpec("zero", fourier_table={(0,): 1.0})
    with pytest.raises(ValueError):
        PotentialSpec("no_such_family")


def test_sampled_fields_are_real_and_periodic():
    for spec, dim in (
        (PotentialSpec("smoothed_square_2d"), 2),
        (PotentialSpec("sin2_1d"), 1),
        (PotentialSpec("cosine", {"amplitude": 1.0}), 1),
    ):
        g = TorusGrid(dim, 32)
        V = sample_potential(spec, g)
        assert V.dtype == np.float64
