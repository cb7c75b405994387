import os

import numpy as np
import pytest

from nslab import (
    Grid,
    GridMismatchError,
    PhysicalField,
    SnapshotFormatError,
    SpectralField,
    dealias,
    derivative,
    divergence,
    divergence_error,
    heat_semigroup,
    hermitian_symmetry_error,
    l2_norm,
    laplacian,
    leray_project,
    load_snapshot,
    mean_magnitude,
    physical_l2_norm,
    q_bilinear,
    random_divfree_field,
    save_snapshot,
    taylor_green,
    tensor_product,
    to_physical,
    to_spectral,
    zero_field,
)

from oracles import rk4_navier_stokes  # noqa: F401  (shared test helpers)


@pytest.fixture(scope="module")
def grid():
    return Grid(16)


@pytest.fixture(scope="module")
def u(grid):
    return random_divfree_field(grid, seed=7)


@pytest.fixture(scope="module")
def v(grid):
    return random_divfree_field(grid, seed=8, slope=1.5)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(6)
    with pytest.raises(ValueError):
        Grid(15)
    with pytest.raises(ValueError):
        Grid(16, length=-1.0)


def test_grid_wavenumbers(grid):
    assert grid.k.shape == (3, 16, 16, 16)
    # the first axis of k[0] runs over the integer modes 0, 1, ..., -1
    assert grid.k[0][1, 0, 0] == pytest.approx(1.0)
    assert grid.k[0][-1, 0, 0] == pytest.approx(-1.0)
    assert grid.cutoff == 5


def test_transform_roundtrip(grid, u):
    back = to_spectral(to_physical(u))
    assert np.max(np.abs(back.coef - u.coef)) < 1e-14


def test_parseval(grid, u):
    assert l2_norm(u) == pytest.approx(physical_l2_norm(to_physical(u)), rel=1e-13)


def test_mean_mode_is_lattice_mean(grid):
    x1, _, _ = grid.mesh()
    g = PhysicalField(grid, 2.5 + np.sin(x1))
    f = to_spectral(g)
    assert f.coef[0, 0, 0, 0] == pytest.approx(2.5)


def test_derivative_of_plane_wave(grid):
    x1, x2, x3 = grid.mesh()
    f = to_spectral(PhysicalField(grid, np.sin(2.0 * x1)))
    d = to_physical(derivative(f, 1)).values[0]
    assert np.max(np.abs(d - 2.0 * np.cos(2.0 * x1))) < 1e-12
    with pytest.raises(ValueError):
        derivative(f, 0)


def test_laplacian_and_heat_on_single_mode(grid):
    x1, x2, x3 = grid.mesh()
    f = to_spectral(PhysicalField(grid, np.cos(x1 + 2.0 * x2)))
    lap = to_physical(laplacian(f)).values[0]
    assert np.max(np.abs(lap + 5.0 * np.cos(x1 + 2.0 * x2))) < 1e-12
    t = 0.3
    ht = to_physical(heat_semigroup(f, t)).values[0]
    assert np.max(np.abs(ht - np.exp(-5.0 * t) * np.cos(x1 + 2.0 * x2))) < 1e-12
    with pytest.raises(ValueError):
        heat_semigroup(f, -0.1)


def test_leray_projection(grid):
    rng = np.random.Generator(np.random.Philox(3))
    raw = to_spectral(PhysicalField(grid, rng.standard_normal((3, 16, 16, 16))))
    p = leray_project(raw)
    assert divergence_error(p) < 1e-13
    # idempotent
    pp = leray_project(p)
    assert np.max(np.abs(pp.coef - p.coef)) < 1e-14
    # identity on already divergence-free fields
    u = random_divfree_field(grid, seed=12)
    assert np.max(np.abs(leray_project(u).coef - u.coef)) < 1e-14


def test_divergence_requires_vector(grid):
    with pytest.raises(ValueError):
        divergence(zero_field(grid, ncomp=1))


def test_tensor_product_dealiased_and_mean_free(grid, u, v):
    t = tensor_product(u, v)
    assert t.ncomp == 9
    assert mean_magnitude(t) == 0.0
    outside = ~grid.dealias_mask
    assert np.max(np.abs(t.coef[:, outside])) == 0.0
    assert np.max(np.abs(dealias(t).coef - t.coef)) == 0.0


def test_q_bilinear_properties(grid, u, v):
    q = q_bilinear(u, v)
    assert divergence_error(q) < 1e-13
    assert mean_magnitude(q) == 0.0
    assert hermitian_symmetry_error(q) < 1e-13


def test_q_bilinear_grid_mismatch(u):
    other = random_divfree_field(Grid(8), seed=1)
    with pytest.raises(GridMismatchError):
        q_bilinear(u, other)


def test_taylor_green(grid):
    u = taylor_green(grid, amplitude=0.7)
    assert divergence_error(u) < 1e-13
    assert mean_magnitude(u) < 1e-15
    # closed form: ||u||_L2 = A * (2 pi)^{3/2} / 2
    assert l2_norm(u) == pytest.approx(0.7 * (2.0 * np.pi) ** 1.5 / 2.0, rel=1e-12)


def test_random_divfree_field(grid):
    a = random_divfree_field(grid, seed=5, amplitude=0.3)
    b = random_divfree_field(grid, seed=5, amplitude=0.3)
    c = random_divfree_field(grid, seed=6, amplitude=0.3)
    assert np.array_equal(a.coef, b.coef)
    assert not np.array_equal(a.coef, c.coef)
    assert l2_norm(a) == pytest.approx(0.3, rel=1e-12)
    assert divergence_error(a) < 1e-13
    assert mean_magnitude(a) == 0.0
    assert hermitian_symmetry_error(a) < 1e-12


def test_random_field_band_limit(grid):
    a = random_divfree_field(grid, seed=5, kmax=3.0)
    outside = grid.kabs > 3.0
    assert np.max(np.abs(a.coef[:, outside])) == 0.0


def test_snapshot_roundtrip(tmp_path, grid, u):
    path = tmp_path / "field.nslb"
    save_snapshot(u, path)
    back = load_snapshot(path)
    assert back.grid == grid
    assert np.array_equal(back.coef, u.coef)


def test_snapshot_errors(tmp_path, grid, u):
    path = tmp_path / "field.nslb"
    save_snapshot(u, path)
    with pytest.raises(GridMismatchError):
        load_snapshot(path, Grid(8))
    bad = tmp_path / "bad.nslb"
    bad.write_bytes(b"JUNK" + b"\x00" * 40)
    with pytest.raises(SnapshotFormatError):
        load_snapshot(bad)
    trunc = tmp_path / "trunc.nslb"
    trunc.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(SnapshotFormatError):
        load_snapshot(trunc)


def test_field_arithmetic(grid, u, v):
    w = 2.0 * u - v + (-u)
    expect = 2.0 * u.coef - v.coef - u.coef
    assert np.max(np.abs(w.coef - expect)) == 0.0
    with pytest.raises(ValueError):
        SpectralField(grid, np.zeros((2, 16, 16, 16)))
