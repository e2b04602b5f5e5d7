import numpy as np
import pytest

from coupling import (
    CouplingContext,
    continuous_divergence,
    interpolate,
    interpolate_body,
    spread,
    spread_body,
    spread_forces,
)
from errors import ConfigurationError, StencilOverflowError
from kernels import make_delta
from lagrangian import LagrangianState
from macgrid import GridSpec, StaggeredField, fill_ghosts, make_divfree, max_speed
from meshes import circle_fiber, rectangle_mesh
from properties import COUPLING_KERNELS, adjointness, bounded_adjointness


def _context(name, spec, mesh=None):
    return CouplingContext(make_delta(name, spec.h), spec, mesh)


def test_context_requires_enough_ghost_layers():
    with pytest.raises(ConfigurationError):
        _context('IB6', GridSpec.box(16, ghost=2))
    with pytest.raises(ConfigurationError):
        CouplingContext(make_delta('IB4', 0.1), GridSpec.box(16))


@pytest.mark.parametrize('name', ['IB3', 'IB4', 'BS3', 'CBS32', 'CBS43'])
def test_constant_field_is_interpolated_exactly(name, periodic_spec, rng):
    f = StaggeredField.zeros(periodic_spec)
    f.u[...] = 1.5
    f.v[...] = -0.25
    velocities = interpolate(_context(name, periodic_spec), f, rng.random((30, 2)))
    assert np.allclose(velocities, [[1.5, -0.25]] * 30, atol=1e-14)


def test_hat_kernel_reads_face_value(periodic_spec, rng):
    h = periodic_spec.h
    f = StaggeredField.zeros(periodic_spec)
    f.interior('u')[...] = rng.standard_normal(periodic_spec.face_counts(0))
    fill_ghosts(f, periodic_spec)
    velocity = interpolate(_context('BS2', periodic_spec), f, [[5 * h, 3.5 * h]])
    assert velocity[0, 0] == pytest.approx(f.interior('u')[5, 3])


def test_single_node_spread_on_face_center(periodic_spec):
    h = periodic_spec.h
    fu, fv = spread_forces(_context('BS2', periodic_spec), [[5 * h, 3.5 * h]], [[1.0, 0.0]], [1.0])
    assert np.count_nonzero(fu) == 1
    assert fu[5, 3] == pytest.approx(1.0 / h ** 2)
    assert not np.any(fv)


@pytest.mark.parametrize('name', COUPLING_KERNELS)
def test_spread_and_interpolate_are_adjoint(name):
    for check in adjointness(name, trials=20, seed=4):
        assert check['passed'], check


def test_spread_uses_mesh_weights(periodic_spec, rng):
    fiber = circle_fiber((0.5, 0.5), 0.25, 40)
    state = LagrangianState.reference(fiber)
    state.forces = rng.standard_normal((fiber.node_count, 2))
    fu, fv = spread(_context('CBS32', periodic_spec, fiber), state)
    expected = (state.forces * fiber.weights[:, None]).sum(axis=0)
    h2 = periodic_spec.h ** 2
    assert [h2 * fu.sum(), h2 * fv.sum()] == pytest.approx(expected, rel=1e-12)


def test_spread_is_translation_equivariant(periodic_spec, rng):
    ctx = _context('IB4', periodic_spec)
    positions = 0.2 + 0.6 * rng.random((10, 2))
    forces = rng.standard_normal((10, 2))
    fu, fv = spread_forces(ctx, positions, forces)
    shifted_u, shifted_v = spread_forces(ctx, positions + [periodic_spec.h, 0.0], forces)
    assert np.allclose(shifted_u, np.roll(fu, 1, axis=0), rtol=0, atol=1e-10 * np.abs(fu).max())
    assert np.allclose(shifted_v, np.roll(fv, 1, axis=0), rtol=0, atol=1e-10 * np.abs(fv).max())


def test_spread_near_wall_overflows(wall_spec):
    with pytest.raises(StencilOverflowError):
        spread_forces(_context('IB4', wall_spec), [[-0.6, 0.5]], [[1.0, 0.0]], [1.0])


@pytest.mark.parametrize('name', COUPLING_KERNELS)
def test_spread_and_interpolate_are_adjoint_next_to_boundaries(name):
    for check in bounded_adjointness(name, trials=20, seed=4):
        assert check['passed'], check


@pytest.mark.parametrize('name', ['IB4', 'CBS32'])
def test_node_half_cell_from_wall_keeps_adjoint_pairing(name, wall_spec, rng):
    h = wall_spec.h
    ctx = _context(name, wall_spec)
    node = [[0.5 * h, 0.5]]
    force = [[1.0, 1.0]]
    f = StaggeredField.zeros(wall_spec)
    f.interior('u')[...] = rng.standard_normal(wall_spec.face_counts(0))
    f.interior('v')[...] = rng.standard_normal(wall_spec.face_counts(1))
    fill_ghosts(f, wall_spec)
    fu, fv = spread_forces(ctx, node, force, [1.0])
    grid_side = h ** 2 * (np.sum(fu * f.interior('u')) + np.sum(fv * f.interior('v')))
    node_side = np.sum(np.asarray(force) * interpolate(ctx, f, node))
    assert grid_side == pytest.approx(node_side, rel=1e-12)
    # faces de parede têm velocidade prescrita e não recebem força
    assert not np.any(fu[0, :])


@pytest.mark.parametrize('name', COUPLING_KERNELS)
def test_interior_nodes_conserve_force_on_wall_grid(name, wall_spec, rng):
    positions = 0.35 + 0.3 * rng.random((12, 2))
    forces = rng.standard_normal((12, 2))
    weights = rng.uniform(0.5, 1.5, 12)
    fu, fv = spread_forces(_context(name, wall_spec), positions, forces, weights)
    h2 = wall_spec.h ** 2
    expected = (forces * weights[:, None]).sum(axis=0)
    assert [h2 * fu.sum(), h2 * fv.sum()] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_continuous_divergence_of_constant_field(periodic_spec, rng):
    f = StaggeredField.zeros(periodic_spec)
    f.u[...] = 2.0
    f.v[...] = 1.0
    div = continuous_divergence(_context('CBS32', periodic_spec), f, rng.random((50, 2)))
    assert np.max(np.abs(div)) < 1e-12


@pytest.mark.parametrize('name', ['CBS21', 'CBS32', 'CBS43'])
def test_composite_interpolant_is_divergence_free(name, rng):
    spec = GridSpec.box(32)
    f = make_divfree(42, spec)
    div = continuous_divergence(_context(name, spec), f, rng.random((1000, 2)))
    assert np.max(np.abs(div)) < 1e-12 * max_speed(f) / spec.h


def test_isotropic_interpolant_is_not_divergence_free(rng):
    spec = GridSpec.box(32)
    f = make_divfree(42, spec)
    points = rng.random((1000, 2))
    cbs = np.max(np.abs(continuous_divergence(_context('CBS32', spec), f, points)))
    ib4 = np.max(np.abs(continuous_divergence(_context('IB4', spec), f, points)))
    assert ib4 > 1e-3 * max_speed(f) / spec.h
    assert cbs < 1e-8 * ib4


# ---------------------------------------------------------------------------
# Quadratura elemental em fibras
# ---------------------------------------------------------------------------

def test_elemental_context_validation(periodic_spec):
    delta = make_delta('CBS32', periodic_spec.h)
    with pytest.raises(ConfigurationError):
        CouplingContext(delta, periodic_spec, None, 2.0)
    with pytest.raises(ConfigurationError):
        CouplingContext(delta, periodic_spec, rectangle_mesh((0.4, 0.4), (0.2, 0.2), 2, 2), 2.0)
    with pytest.raises(ConfigurationError):
        CouplingContext(delta, periodic_spec, circle_fiber((0.5, 0.5), 0.25, 20), 0.0)


@pytest.mark.parametrize('name', ['IB4', 'CBS32'])
def test_elemental_spread_conserves_force_and_stays_adjoint(name, periodic_spec, rng):
    # marcadores a 1.5 h: a quadratura elemental coloca 3 pontos por segmento
    fiber = circle_fiber((0.5, 0.5), 0.25, 17)
    ctx = CouplingContext(make_delta(name, periodic_spec.h), periodic_spec, fiber, 2.0)
    phi, weights = ctx.quadrature()
    assert len(weights) == 3 * fiber.node_count
    forces = rng.standard_normal((fiber.node_count, 2))
    fu, fv = spread_body(ctx, fiber.nodes, forces)
    h2 = periodic_spec.h ** 2
    expected = (forces * fiber.weights[:, None]).sum(axis=0)
    assert [h2 * fu.sum(), h2 * fv.sum()] == pytest.approx(expected, rel=1e-12)

    f = make_divfree(7, periodic_spec)
    grid_side = h2 * (np.sum(fu * f.interior('u')) + np.sum(fv * f.interior('v')))
    velocities = interpolate_body(ctx, f, fiber.nodes)
    node_side = np.sum(forces * velocities * fiber.weights[:, None])
    assert grid_side == pytest.approx(node_side, rel=1e-12)


def test_elemental_interpolation_of_constant_field(periodic_spec):
    fiber = circle_fiber((0.5, 0.5), 0.25, 17)
    ctx = CouplingContext(make_delta('CBS32', periodic_spec.h), periodic_spec, fiber, 2.0)
    f = StaggeredField.zeros(periodic_spec)
    f.u[...] = 0.75
    f.v[...] = -2.0
    assert np.allclose(interpolate_body(ctx, f, fiber.nodes), [[0.75, -2.0]] * 17, atol=1e-13)


def test_nodal_body_coupling_matches_point_coupling(periodic_spec, rng):
    fiber = circle_fiber((0.5, 0.5), 0.25, 40)
    ctx = _context('IB4', periodic_spec, fiber)
    forces = rng.standard_normal((40, 2))
    for body, point in zip(spread_body(ctx, fiber.nodes, forces), spread_forces(ctx, fiber.nodes, forces)):
        assert np.array_equal(body, point)
