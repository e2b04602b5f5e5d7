import numpy as np
import pytest

from errors import ConfigurationError, InvertedElementError, MeshError
from lagrangian import (
    LagrangianMesh,
    LagrangianState,
    Material,
    SurfaceLoad,
    TetherParams,
    deformation_gradient,
    elastic_nodal_forces,
    element_jacobians,
    first_pk_stress,
    jacobian_error_norm,
    load_ramp,
    modified_first_invariant,
    stabilization_bulk_modulus,
    strain_energy,
    tether_nodal_forces,
    tracer_area,
    traction_nodal_forces,
)
from meshes import circle_fiber, line_fiber, rectangle_mesh
from properties import STABILIZATION_CASES, STRESS_CASES, stress_energy_consistency

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _deformed(mesh, matrix):
    state = LagrangianState.reference(mesh)
    state.positions = mesh.nodes @ np.asarray(matrix, dtype=float).T
    return state


# ---------------------------------------------------------------------------
# Malha
# ---------------------------------------------------------------------------

def test_unit_square_quadrature():
    mesh = LagrangianMesh(UNIT_SQUARE, [[0, 1, 2, 3]])
    assert mesh.areas == pytest.approx([1.0])
    assert mesh.weights == pytest.approx([0.25] * 4)
    assert mesh.is_solid
    assert len(mesh.boundary_edges()) == 4


def test_weights_sum_to_area():
    mesh = rectangle_mesh((1.0, 2.0), (2.0, 1.0), 4, 3)
    assert mesh.weights.sum() == pytest.approx(2.0)
    assert mesh.measure == pytest.approx(2.0)
    assert len(mesh.boundary_edges()) == 2 * (4 + 3)


@pytest.mark.parametrize('nodes,elements,kind', [
    (UNIT_SQUARE, [[0, 1, 2, 3]], 'triangle'),
    (UNIT_SQUARE, [[0, 1, 2]], 'quad'),
    (UNIT_SQUARE, [[0, 1, 2, 4]], 'quad'),
    (np.vstack([UNIT_SQUARE, [[5.0, 5.0]]]), [[0, 1, 2, 3]], 'quad'),
    (UNIT_SQUARE, [[0, 3, 2, 1]], 'quad'),
    ([[0.0, 0.0], [0.0, 0.0]], [[0, 1]], 'segment'),
])
def test_invalid_meshes(nodes, elements, kind):
    with pytest.raises(MeshError):
        LagrangianMesh(nodes, elements, kind)


def test_segment_weights():
    fiber = line_fiber((0.0, 0.0), (1.0, 0.0), 5)
    assert fiber.weights == pytest.approx([0.125, 0.25, 0.25, 0.25, 0.125])
    assert not fiber.is_solid


def test_segment_quadrature_points_on_line():
    fiber = line_fiber((0.0, 0.0), (1.0, 0.0), 3)
    phi, weights = fiber.segment_quadrature(0.2)
    points = phi @ fiber.nodes
    assert points[:, 0] == pytest.approx((np.arange(6) + 0.5) / 6)
    assert np.all(points[:, 1] == 0.0)
    assert weights == pytest.approx(np.full(6, 1.0 / 6))


def test_segment_quadrature_reproduces_nodal_weights():
    fiber = circle_fiber((0.5, 0.5), 0.25, 30)
    phi, weights = fiber.segment_quadrature(0.01)
    assert len(weights) == 30 * int(np.ceil(fiber.areas[0] / 0.01))
    assert np.all(weights <= 0.01)
    assert np.asarray(phi.sum(axis=1)).ravel() == pytest.approx(np.ones(len(weights)))
    assert phi.T @ weights == pytest.approx(fiber.weights, rel=1e-12)


def test_segment_quadrature_validation():
    with pytest.raises(MeshError):
        rectangle_mesh((0.0, 0.0), (1.0, 1.0), 2, 2).segment_quadrature(0.1)
    with pytest.raises(MeshError):
        line_fiber((0.0, 0.0), (1.0, 0.0), 3).segment_quadrature(0.0)


# ---------------------------------------------------------------------------
# Gradiente de deformação e tensões
# ---------------------------------------------------------------------------

def test_deformation_gradient_identity_and_stretch():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 2, 2)
    F, J = deformation_gradient(mesh, LagrangianState.reference(mesh), 0)
    assert np.allclose(F, np.eye(2))
    assert J == pytest.approx(1.0)
    F, J = deformation_gradient(mesh, _deformed(mesh, [[2.0, 0.0], [0.0, 0.5]]), 3, (0.3, -0.7))
    assert np.allclose(F, [[2.0, 0.0], [0.0, 0.5]])
    assert J == pytest.approx(1.0)


def test_deformation_gradient_errors():
    fiber = circle_fiber((0.5, 0.5), 0.25, 8)
    with pytest.raises(MeshError):
        deformation_gradient(fiber, LagrangianState.reference(fiber), 0)
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 1, 1)
    with pytest.raises(MeshError):
        deformation_gradient(mesh, LagrangianState.reference(mesh), 5)


@pytest.mark.parametrize('mat', [
    Material('neo_hookean', 1.0),
    Material('neo_hookean', 1.0, modified_invariants=True),
    Material('svk', 1.0, lam=2.0),
    Material('neo_hookean', 1.0, nu_stab=0.4),
])
def test_reference_state_is_stress_free(mat):
    assert np.allclose(first_pk_stress(mat, np.eye(2)), 0.0)


def test_simple_shear_stress():
    P = first_pk_stress(Material('neo_hookean', 1.0), np.array([[1.0, 0.1], [0.0, 1.0]]))
    assert np.allclose(P, [[0.0, 0.1], [0.1, 0.0]])


def test_inverted_element_reports_id():
    F = np.stack([np.eye(2), np.diag([1.0, -1.0])])
    with pytest.raises(InvertedElementError) as info:
        first_pk_stress(Material('neo_hookean', 1.0), F, elements=np.array([7, 9]))
    assert info.value.element == 9
    assert info.value.jacobian == pytest.approx(-1.0)


def test_membrane_springs_have_no_stress():
    with pytest.raises(ConfigurationError):
        first_pk_stress(Material('membrane_spring', 1.0), np.eye(2))


@pytest.mark.parametrize('kwargs', [
    {'law': 'mooney', 'G': 1.0}, {'law': 'svk', 'G': 0.0}, {'law': 'neo_hookean', 'G': 1.0, 'nu_stab': 0.5},
])
def test_material_validation(kwargs):
    with pytest.raises(ConfigurationError):
        Material(**kwargs)


def test_stabilization_bulk_modulus():
    assert round(stabilization_bulk_modulus(80.194, 0.4), 3) == pytest.approx(374.239)
    assert round(stabilization_bulk_modulus(250.0 / 3.0, 0.4), 3) == pytest.approx(388.889)
    assert stabilization_bulk_modulus(10.0, -1.0) == 0.0
    mat = Material('neo_hookean', 80.194, nu_stab=0.4)
    assert mat.stabilized
    assert mat.kappa_stab == pytest.approx(374.239, rel=1e-5)
    assert not Material('neo_hookean', 1.0).stabilized


def test_modified_invariant_of_isochoric_stretch():
    assert modified_first_invariant(np.diag([2.0, 0.5])) == pytest.approx(5.25)


@pytest.mark.parametrize('law,modified,lam', STRESS_CASES)
@pytest.mark.parametrize('nu_stab', STABILIZATION_CASES)
def test_stress_is_energy_derivative(law, modified, lam, nu_stab):
    mat = Material(law, 1.0, lam=lam, modified_invariants=modified, nu_stab=nu_stab)
    assert stress_energy_consistency(mat, samples=100, seed=3) < 1e-5


def test_energy_vanishes_at_reference():
    for mat in (Material('neo_hookean', 2.0), Material('svk', 2.0, lam=3.0),
                Material('neo_hookean', 2.0, modified_invariants=True, nu_stab=0.3)):
        assert strain_energy(mat, np.eye(2)) == pytest.approx(0.0, abs=1e-14)


# ---------------------------------------------------------------------------
# Forças nodais
# ---------------------------------------------------------------------------

def test_undeformed_solid_has_no_elastic_force():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 0.5), 4, 2)
    state = LagrangianState.reference(mesh)
    for mat in (Material('neo_hookean', 5.0), Material('neo_hookean', 5.0, nu_stab=0.4), None):
        assert np.allclose(elastic_nodal_forces(mesh, state, mat), 0.0)


def test_rigid_rotation_has_no_elastic_force():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 0.5), 4, 2)
    c, s = np.cos(0.4), np.sin(0.4)
    forces = elastic_nodal_forces(mesh, _deformed(mesh, [[c, -s], [s, c]]), Material('neo_hookean', 5.0))
    assert np.allclose(forces, 0.0, atol=1e-12)


def test_elastic_forces_are_self_equilibrated(rng):
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 3, 3)
    state = LagrangianState.reference(mesh)
    state.positions = mesh.nodes + 0.03 * rng.standard_normal(mesh.nodes.shape)
    forces = elastic_nodal_forces(mesh, state, Material('svk', 2.0, lam=5.0))
    assert np.abs(forces).max() > 0
    assert np.allclose((forces * mesh.weights[:, None]).sum(axis=0), 0.0, atol=1e-12)


def test_stretched_solid_pulls_back():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 2, 2)
    forces = elastic_nodal_forces(mesh, _deformed(mesh, [[1.2, 0.0], [0.0, 1.0]]), Material('neo_hookean', 1.0))
    right = mesh.node_sets['right']
    left = mesh.node_sets['left']
    assert np.all(forces[right, 0] < 0)
    assert np.all(forces[left, 0] > 0)


def test_membrane_spring_force_points_inward():
    radius = 0.25
    fiber = circle_fiber((0.5, 0.5), radius, 400)
    forces = elastic_nodal_forces(fiber, LagrangianState.reference(fiber), Material('membrane_spring', 1.0))
    outward = (fiber.nodes - 0.5) / radius
    radial = np.einsum('ij,ij->i', forces, outward)
    assert np.all(radial < 0)
    assert np.allclose(-radial, 1.0 / radius, rtol=1e-3)


def test_membrane_spring_uses_chord_lengths():
    # com cordas como ds, o anel uniforme dá |F| = kappa / R para qualquer número de nós
    radius, kappa = 0.25, 2.0
    fiber = circle_fiber((0.5, 0.5), radius, 12)
    forces = elastic_nodal_forces(fiber, LagrangianState.reference(fiber), Material('membrane_spring', kappa))
    assert np.linalg.norm(forces, axis=1) == pytest.approx(np.full(12, kappa / radius), rel=1e-12)
    assert fiber.areas == pytest.approx(np.full(12, 2 * radius * np.sin(np.pi / 12)))


def test_solid_law_on_fiber_is_rejected():
    fiber = circle_fiber((0.5, 0.5), 0.25, 8)
    with pytest.raises(ConfigurationError):
        elastic_nodal_forces(fiber, LagrangianState.reference(fiber), Material('neo_hookean', 1.0))


def test_tether_linear_law():
    fiber = line_fiber((0.0, 0.0), (1.0, 0.0), 2)
    state = LagrangianState.reference(fiber)
    assert np.allclose(tether_nodal_forces(fiber, state, TetherParams(2.0, 1.0), 0.0), 0.0)

    state.positions = fiber.nodes + np.array([0.1, 0.0])
    assert np.allclose(tether_nodal_forces(fiber, state, TetherParams(2.0), 0.0), [[-0.2, 0.0]] * 2)

    state = LagrangianState.reference(fiber)
    state.velocities[:] = (0.0, -1.0)
    assert np.allclose(tether_nodal_forces(fiber, state, TetherParams(0.0, 3.0), 0.0), [[0.0, 3.0]] * 2)


def test_tether_node_and_component_selection():
    fiber = line_fiber((0.0, 0.0), (1.0, 0.0), 3)
    state = LagrangianState.reference(fiber)
    state.positions = fiber.nodes + np.array([0.1, 0.2])
    tp = TetherParams(1.0, nodes=[2], components=(False, True))
    forces = tether_nodal_forces(fiber, state, tp, 0.0)
    assert np.allclose(forces, [[0.0, 0.0], [0.0, 0.0], [0.0, -0.2]])


def test_tether_moving_target():
    fiber = line_fiber((0.0, 0.0), (1.0, 0.0), 2)
    tp = TetherParams(1.0, target=lambda t: fiber.nodes + np.array([t, 0.0]))
    forces = tether_nodal_forces(fiber, LagrangianState.reference(fiber), tp, 0.5)
    assert np.allclose(forces, [[0.5, 0.0]] * 2)


@pytest.mark.parametrize('kwargs', [{'kappa': -1.0}, {'kappa': 1.0, 'eta': -1.0}, {'kappa': 0.0}])
def test_tether_validation(kwargs):
    with pytest.raises(ConfigurationError):
        TetherParams(**kwargs)


def test_load_ramp():
    assert load_ramp(0.0, 2.0) == 0.0
    assert load_ramp(0.5, 2.0) == 0.25
    assert load_ramp(3.0, 2.0) == 1.0
    assert load_ramp(0.1, 0.0) == 1.0


def test_traction_delivers_total_load():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 2.0), 2, 4)
    load = SurfaceLoad(mesh.edge_sets['right'], (0.0, 3.0), ramp_time=4.0)
    forces = traction_nodal_forces(mesh, load, 2.0)
    total = (forces * mesh.weights[:, None]).sum(axis=0)
    assert total == pytest.approx([0.0, 3.0 * 2.0 * 0.5])
    loaded = np.flatnonzero(np.abs(forces).sum(axis=1))
    assert set(loaded) == set(mesh.node_sets['right'])


# ---------------------------------------------------------------------------
# Diagnósticos
# ---------------------------------------------------------------------------

def test_element_jacobians():
    mesh = rectangle_mesh((0.0, 0.0), (1.0, 1.0), 3, 2)
    state = LagrangianState.reference(mesh)
    assert np.allclose(element_jacobians(mesh, state), 1.0)
    assert jacobian_error_norm(mesh, state) == pytest.approx(0.0, abs=1e-12)
    doubled = _deformed(mesh, np.sqrt(2.0) * np.eye(2))
    assert np.allclose(element_jacobians(mesh, doubled), 2.0)
    assert jacobian_error_norm(mesh, doubled) == pytest.approx(1.0)


def test_tracer_area():
    assert tracer_area(UNIT_SQUARE) == pytest.approx(1.0)
    assert tracer_area(circle_fiber((0.5, 0.5), 0.25, 4).nodes) == pytest.approx(0.125)
    assert abs(tracer_area(circle_fiber((0.5, 0.5), 0.25, 10000).nodes) - np.pi / 16) < 1e-7
    with pytest.raises(ValueError):
        tracer_area([[0.0, 0.0], [1.0, 0.0]])
