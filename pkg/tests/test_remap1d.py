import numpy as np
import pytest

from sldg.characteristics import GL_POINTS, VelocityField, constant_1d, sine_1d, zero_field
from sldg.core import Basis, Mesh1D, gauss_rule, mass_vector, project, total_mass
from sldg.remap1d import (
    GeometryError,
    assemble_remap_1d,
    build_upstream_1d,
    remap_term1_1d,
    split_subintervals,
)


def project_translate_exact(u, shift):
    """Independent oracle: L2 projection of the periodic translate, split at
    the translated mesh's breakpoints so all quadrature is exact."""
    mesh, k = u.mesh, u.k
    basis = Basis(k, 1)
    nodes, weights = gauss_rule(k + 2)
    off = np.mod(shift / mesh.dx, 1.0)
    coeffs = np.zeros((mesh.n, k + 1))
    for j in range(mesh.n):
        a = mesh.x_a + j * mesh.dx
        for lo, hi in ((a, a + off * mesh.dx), (a + off * mesh.dx, a + mesh.dx)):
            if hi - lo <= 0:
                continue
            x = 0.5 * (lo + hi) + (hi - lo) * nodes
            xi = (x - a) / mesh.dx - 0.5
            coeffs[j] += (hi - lo) * np.einsum(
                "q,q,qd->d", weights, u.evaluate(x - shift), basis.eval(xi)
            )
    return coeffs / (basis.mass_diag()[None, :] * mesh.dx)


def random_field(mesh, k, seed=0, base=np.sin):
    rng = np.random.default_rng(seed)
    u = project(base, mesh, k)
    u.coeffs += 0.3 * rng.standard_normal(u.coeffs.shape)
    return u


def test_zero_velocity_single_subinterval():
    mesh = Mesh1D(0.0, 1.0, 5)
    up = build_upstream_1d(mesh, 2, 1.0, 0.0, zero_field(1), 2)
    assert (up.lo, up.hi) == pytest.approx((0.4, 0.6))
    subs = split_subintervals(up, mesh)
    assert len(subs) == 1
    assert subs[0].cell == 2
    assert (subs[0].lo, subs[0].hi) == pytest.approx((0.4, 0.6))


def test_zero_velocity_test_function_unchanged():
    mesh = Mesh1D(0.0, 2 * np.pi, 8)
    up = build_upstream_1d(mesh, 3, 0.7, 0.0, zero_field(1), 2)
    xs = up.lo + (up.hi - up.lo) * np.array([0.1, 0.5, 0.9])
    xi = (xs - mesh.x_a) / mesh.dx - 3 - 0.5
    assert np.max(np.abs(up.test.eval(xs) - Basis(2, 1).eval(xi))) < 1e-12


def test_half_cell_shift_layout():
    mesh = Mesh1D(0.0, 1.0, 8)
    dt = 0.5 * mesh.dx
    up = build_upstream_1d(mesh, 4, dt, 0.0, constant_1d(1.0), 1)
    subs = split_subintervals(up, mesh)
    assert [s.cell for s in subs] == [3, 4]
    lengths = [(s.hi - s.lo) / mesh.dx for s in subs]
    assert lengths == pytest.approx([0.5, 0.5])


def test_two_and_half_cell_shift_layout():
    mesh = Mesh1D(0.0, 1.0, 8)
    dt = 2.5 * mesh.dx
    up = build_upstream_1d(mesh, 4, dt, 0.0, constant_1d(1.0), 1)
    subs = split_subintervals(up, mesh)
    assert [s.cell for s in subs] == [1, 2]
    lengths = [(s.hi - s.lo) / mesh.dx for s in subs]
    assert lengths == pytest.approx([0.5, 0.5])


def test_periodic_wrap_assignment():
    mesh = Mesh1D(0.0, 1.0, 8)
    up = build_upstream_1d(mesh, 0, 1.5 * mesh.dx, 0.0, constant_1d(1.0), 1)
    subs = split_subintervals(up, mesh)
    assert [s.cell for s in subs] == [6, 7]
    assert subs[0].shift == pytest.approx(-1.0)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_interpolation_conditions_variable_field(k):
    mesh = Mesh1D(0.0, 2 * np.pi, 12)
    up = build_upstream_1d(mesh, 5, 0.3, 0.0, sine_1d(), k)
    got = up.test.eval(up.feet)
    want = Basis(k, 1).eval(np.array(GL_POINTS[k]))
    assert np.max(np.abs(got - want)) < 1e-12


@pytest.mark.parametrize("k", [0, 1, 2])
def test_zero_velocity_remap_is_mass_product(k):
    mesh = Mesh1D(0.0, 2 * np.pi, 9)
    u = random_field(mesh, k)
    up = build_upstream_1d(mesh, 4, 0.8, 0.0, zero_field(1), k)
    load = remap_term1_1d(u, up)
    expect = Basis(k, 1).mass_diag() * mesh.dx * u.coeffs[4]
    assert np.max(np.abs(load - expect)) < 1e-13


@pytest.mark.parametrize("k", [0, 1, 2])
def test_translation_exactness(k):
    mesh = Mesh1D(0.0, 2 * np.pi, 16)
    u = random_field(mesh, k, seed=k)
    for shift in (0.37, 2.5 * mesh.dx, 4 * mesh.dx):
        R = assemble_remap_1d(mesh, k, shift, 0.0, constant_1d(1.0))
        got = ((R @ u.coeffs.ravel()) / mass_vector(mesh, k)).reshape(u.coeffs.shape)
        ref = project_translate_exact(u, shift)
        assert np.max(np.abs(got - ref)) < 1e-11


@pytest.mark.parametrize("k", [0, 1, 2])
def test_global_mass_conservation(k):
    mesh = Mesh1D(0.0, 2 * np.pi, 14)
    u = random_field(mesh, k, seed=2 + k)
    R = assemble_remap_1d(mesh, k, 0.45, 0.0, sine_1d())
    loads = (R @ u.coeffs.ravel()).reshape(mesh.n, -1)
    assert abs(loads[:, 0].sum() - total_mass(u)) < 1e-12


def test_tiling_local_and_global():
    mesh = Mesh1D(0.0, 2 * np.pi, 16)
    cover = np.zeros(mesh.n)
    for j in range(mesh.n):
        up = build_upstream_1d(mesh, j, 0.4, 0.0, sine_1d(), 2)
        subs = split_subintervals(up, mesh)
        assert abs(sum(s.hi - s.lo for s in subs) - (up.hi - up.lo)) < 1e-12
        for s in subs:
            cover[s.cell] += s.hi - s.lo
    assert np.max(np.abs(cover - mesh.dx)) < 1e-12


@pytest.mark.parametrize("k", [0, 1, 2])
def test_matrix_matches_per_cell_ops(k):
    mesh = Mesh1D(0.0, 2 * np.pi, 11)
    u = random_field(mesh, k, seed=5)
    R = assemble_remap_1d(mesh, k, 0.3, 0.0, sine_1d())
    loads = (R @ u.coeffs.ravel()).reshape(mesh.n, -1)
    for j in (0, 3, 7, 10):
        up = build_upstream_1d(mesh, j, 0.3, 0.0, sine_1d(), k)
        assert np.max(np.abs(remap_term1_1d(u, up) - loads[j])) < 1e-13


def test_backward_pair_supported():
    # stage pairs with negative elapsed time trace forward
    mesh = Mesh1D(0.0, 2 * np.pi, 12)
    u = random_field(mesh, 2, seed=9)
    R = assemble_remap_1d(mesh, 2, 0.3, 0.45, sine_1d())
    loads = (R @ u.coeffs.ravel()).reshape(mesh.n, -1)
    assert abs(loads[:, 0].sum() - total_mass(u)) < 1e-12


def test_non_monotone_feet_rejected():
    mesh = Mesh1D(0.0, 2 * np.pi, 8)
    with pytest.raises(GeometryError):
        # one giant RK4 step of a strong field overshoots and folds
        build_upstream_1d(mesh, 3, 5.0, 0.0, sine_1d(), 2, substeps=1)


def test_overlong_upstream_rejected():
    mesh = Mesh1D(0.0, 1.0, 8)
    stretch = VelocityField(1, lambda x, t: -(x - 0.5), (1.0,), False, "expanding")
    with pytest.raises(GeometryError):
        build_upstream_1d(mesh, 3, 2.0, 0.0, stretch, 1)
