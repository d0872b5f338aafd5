import numpy as np
import pytest

from blochforge.grid import (
    ComplexField,
    GridError,
    TorusGrid,
    inner_product,
    l2_norm,
    sobolev_norm,
)

TWO_PI = 2 * np.pi


def random_band_limited(grid, rng, max_mode=6):
    c = np.zeros(grid.shape, dtype=complex)
    ms = np.fft.fftfreq(grid.n, d=1.0 / grid.n).astype(int)
    if grid.dim == 1:
        sel = np.abs(ms) <= max_mode
        c[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    else:
        sel = (np.abs(ms)[:, None] <= max_mode) & (np.abs(ms)[None, :] <= max_mode)
        c[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    return ComplexField(grid, grid.from_coeffs(c))


def test_grid_validation():
    with pytest.raises(GridError):
        TorusGrid(3, 64)
    with pytest.raises(GridError):
        TorusGrid(1, 48)  # not a power of two
    g = TorusGrid(2, 16)
    assert g.size == 256 and g.h == pytest.approx(TWO_PI / 16)


def test_axis_covers_cell_once():
    g = TorusGrid(1, 64)
    x = g.axis()
    assert x[0] == pytest.approx(-np.pi)
    assert x[-1] == pytest.approx(np.pi - g.h)
    assert np.all(np.diff(x) > 0)


@pytest.mark.parametrize("dim,n", [(1, 64), (2, 32)])
def test_transform_roundtrip(dim, n):
    rng = np.random.default_rng(3)
    g = TorusGrid(dim, n)
    f = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
    back = g.from_coeffs(g.to_coeffs(f))
    assert np.max(np.abs(back - f)) <= 1e-12 * np.max(np.abs(f))


def test_coeffs_pick_out_single_mode():
    g = TorusGrid(1, 32)
    (x,) = g.points()
    c = g.to_coeffs(np.exp(3j * x))
    assert c[3] == pytest.approx(1.0)
    c[3] = 0
    assert np.max(np.abs(c)) < 1e-13


def test_inner_product_examples():
    g = TorusGrid(2, 32)
    const = ComplexField(g, np.full(g.shape, 1.0 / TWO_PI))
    assert inner_product(const, const) == pytest.approx(1.0)
    g1 = TorusGrid(1, 64)
    (x,) = g1.points()
    f = ComplexField(g1, np.exp(1j * x))
    h = ComplexField(g1, np.exp(2j * x))
    assert abs(inner_product(f, h)) <= 1e-12


def test_inner_product_matches_dense_sum_oracle():
    rng = np.random.default_rng(11)
    g = TorusGrid(1, 128)
    f = random_band_limited(g, rng)
    h = random_band_limited(g, rng)
    # independent oracle: plain python accumulation over samples
    acc = 0.0 + 0.0j
    for a, b in zip(f.values, h.values):
        acc += a * np.conj(b)
    acc *= g.h
    assert inner_product(f, h) == pytest.approx(acc, abs=1e-12)


def test_inner_product_conjugate_symmetry():
    rng = np.random.default_rng(5)
    g = TorusGrid(2, 16)
    f = random_band_limited(g, rng, max_mode=4)
    h = random_band_limited(g, rng, max_mode=4)
    assert inner_product(f, h) == pytest.approx(np.conj(inner_product(h, f)))


def test_inner_product_grid_mismatch():
    f = ComplexField(TorusGrid(1, 32), np.zeros(32))
    g = ComplexField(TorusGrid(1, 64), np.zeros(64))
    with pytest.raises(GridError):
        inner_product(f, g)


def test_sobolev_norm_constant():
    g = TorusGrid(2, 16)
    f = ComplexField(g, np.full(g.shape, 2.0 - 1.0j))
    expect = abs(2.0 - 1.0j) * TWO_PI  # (2 pi)^{d/2}, d=2
    for s in (0.0, 1.0, 2.5):
        assert sobolev_norm(f, s) == pytest.approx(expect, rel=1e-12)


def test_sobolev_norm_single_mode():
    g = TorusGrid(1, 64)
    (x,) = g.points()
    for m in (1, 3, 5):
        f = ComplexField(g, np.exp(1j * m * x))
        assert sobolev_norm(f, 1.0) == pytest.approx(
            np.sqrt(TWO_PI * (1 + m**2)), rel=1e-12
        )


def test_sobolev_h1_matches_derivative_oracle():
    """||f||_{H^1}^2 = ||f||^2 + ||(grad + ik) f||^2 via physical-space
    quadrature of the spectral derivative."""
    rng = np.random.default_rng(7)
    g = TorusGrid(1, 128)
    k = 0.3
    f = random_band_limited(g, rng)
    f = ComplexField(g, f.values, k=(k,))
    c = g.to_coeffs(f.values)
    (m,) = g.wavenumbers()
    df = g.from_coeffs(1j * (m + k) * c)  # derivative of p e^{ikx} times e^{-ikx}
    l2sq = float(np.sum(np.abs(f.values) ** 2) * g.h)
    d2sq = float(np.sum(np.abs(df) ** 2) * g.h)
    assert sobolev_norm(f, 1.0) == pytest.approx(np.sqrt(l2sq + d2sq), abs=1e-10)


def test_parseval_and_s0():
    rng = np.random.default_rng(13)
    g = TorusGrid(2, 32)
    f = random_band_limited(g, rng, max_mode=8)
    phys = l2_norm(f)
    four = np.sqrt(np.sum(np.abs(f.coeffs()) ** 2) * TWO_PI**2)
    assert phys == pytest.approx(four, abs=1e-12 * max(1.0, phys))
    assert sobolev_norm(f, 0.0) == pytest.approx(phys, abs=1e-12 * max(1.0, phys))


def test_grid_doubling_changes_smooth_inner_products_negligibly():
    rng = np.random.default_rng(17)
    g1, g2 = TorusGrid(1, 64), TorusGrid(1, 128)
    c = np.zeros(64, dtype=complex)
    c[:8] = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    c[-7:] = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    f1 = ComplexField(g1, g1.from_coeffs(c))
    c2 = np.zeros(128, dtype=complex)
    c2[:8], c2[-7:] = c[:8], c[-7:]
    f2 = ComplexField(g2, g2.from_coeffs(c2))
    assert inner_product(f1, f1) == pytest.approx(inner_product(f2, f2), abs=1e-10)


def test_field_immutability_and_k_tag():
    g = TorusGrid(1, 32)
    f = ComplexField(g, np.ones(32), k=(0.25,))
    with pytest.raises(ValueError):
        f.values[0] = 2.0
    assert f.k == (0.25,)
    with pytest.raises(GridError):
        ComplexField(g, np.ones(31))
    with pytest.raises(GridError):
        ComplexField(g, np.ones(32), k=(0.1, 0.2))
