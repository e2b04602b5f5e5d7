import numpy as np
import pytest

from errors import ConfigurationError, SolverFailureError, UnsupportedFixtureError
from macgrid import (
    BoundaryCondition,
    GridSpec,
    PressureSolver,
    StaggeredField,
    advection,
    divergence,
    dump_field,
    fill_ghosts,
    fold_faces,
    gradient,
    laplacian,
    load_field,
    make_divfree,
    max_speed,
    pad_cells,
    pad_faces,
    pressure_solve,
    vorticity,
)


def _walls(**overrides):
    bc = {side: BoundaryCondition('wall') for side in ('left', 'right', 'bottom', 'top')}
    bc.update(overrides)
    return bc


def test_face_counts(periodic_spec, wall_spec):
    assert periodic_spec.face_counts(0) == (16, 16)
    assert periodic_spec.face_counts(1) == (16, 16)
    assert wall_spec.face_counts(0) == (17, 16)
    assert wall_spec.face_counts(1) == (16, 17)
    assert wall_spec.padded_shape('p') == (24, 24)


def test_grid_spec_validation():
    with pytest.raises(ConfigurationError):
        GridSpec((0.0, 0.0), (2.0, 1.0), (16, 16))
    with pytest.raises(ConfigurationError):
        GridSpec((0.0, 0.0), (1.0, 1.0), (16, 16), bc={'left': BoundaryCondition('wall')})
    with pytest.raises(ConfigurationError):
        GridSpec((0.0, 0.0), (1.0, 1.0), (16, 16), bc=_walls(left=BoundaryCondition('periodic')))


def test_boundary_condition_rules():
    with pytest.raises(ConfigurationError):
        BoundaryCondition('inflow')
    with pytest.raises(ConfigurationError):
        BoundaryCondition('slip')
    assert BoundaryCondition('traction', normal_stress=5.0).pressure_at(0.0) == -5.0
    assert BoundaryCondition('traction', normal_stress=lambda t: 2.0 * t).pressure_at(1.5) == -3.0


@pytest.mark.parametrize('bc', [
    _walls(right=BoundaryCondition('traction'),
           top=BoundaryCondition('traction', no_slip_tangential=True)),
    _walls(left=BoundaryCondition('periodic'), right=BoundaryCondition('periodic')),
])
@pytest.mark.parametrize('component', [0, 1])
def test_fold_faces_is_transpose_of_homogeneous_padding(bc, component, rng):
    spec = GridSpec((0.0, 0.0), (1.0, 1.0), (8, 8), ghost=3, bc=bc)
    values = rng.standard_normal(spec.face_counts(component))
    padded_weights = rng.standard_normal(spec.padded_shape('u' if component == 0 else 'v'))
    forward = np.sum(pad_faces(values, component, spec) * padded_weights)
    backward = np.sum(values * fold_faces(padded_weights, component, spec))
    assert forward == pytest.approx(backward, rel=1e-12)


def test_divergence_of_constant_and_linear_fields(wall_spec):
    f = StaggeredField.zeros(wall_spec)
    f.u[...] = 1.0
    f.v[...] = 0.0
    assert np.allclose(divergence(f, wall_spec), 0.0)
    x = wall_spec.coordinates(0, 0)
    f.u[...] = x[:, None]
    assert np.allclose(divergence(f, wall_spec), 1.0)


@pytest.mark.parametrize('n', [16, 32])
def test_make_divfree_is_discretely_solenoidal(n):
    spec = GridSpec.box(n)
    f = make_divfree(42, spec)
    assert max_speed(f) > 0
    assert np.max(np.abs(divergence(f, spec))) < 1e-13 * max_speed(f) / spec.h


def test_make_divfree_trivial_stream_functions(periodic_spec):
    assert max_speed(make_divfree(0, periodic_spec, psi=np.zeros(periodic_spec.cells))) == 0.0
    assert max_speed(make_divfree(0, periodic_spec, psi=3.0)) == 0.0


def test_make_divfree_requires_periodic_grid(wall_spec):
    with pytest.raises(UnsupportedFixtureError):
        make_divfree(1, wall_spec)


def test_integration_by_parts(periodic_spec, rng):
    h2 = periodic_spec.h ** 2
    f = StaggeredField.zeros(periodic_spec)
    f.interior('u')[...] = rng.standard_normal(periodic_spec.face_counts(0))
    f.interior('v')[...] = rng.standard_normal(periodic_spec.face_counts(1))
    fill_ghosts(f, periodic_spec)
    p = rng.standard_normal(periodic_spec.cells)
    gx, gy = gradient(pad_cells(p, periodic_spec), periodic_spec)
    lhs = h2 * np.sum(divergence(f, periodic_spec) * p)
    rhs = -h2 * (np.sum(gx * f.interior('u')) + np.sum(gy * f.interior('v')))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize('spec_name', ['periodic_spec', 'wall_spec'])
def test_laplacian_is_symmetric(spec_name, request, rng):
    spec = request.getfixturevalue(spec_name)
    p = rng.standard_normal(spec.cells)
    q = rng.standard_normal(spec.cells)
    assert np.sum(laplacian(p, spec) * q) == pytest.approx(np.sum(p * laplacian(q, spec)), rel=1e-12)


def test_fft_single_mode_symbol():
    spec = GridSpec.box(32)
    h = spec.h
    x = (np.arange(32) + 0.5) * h
    mode = np.cos(2 * np.pi * 3 * x)[:, None] * np.ones(32)[None, :]
    symbol = (2.0 * np.cos(2 * np.pi * 3 / 32) - 2.0) / h ** 2
    solution = PressureSolver(spec, method='fft').solve(symbol * mode)
    assert np.allclose(solution, mode, atol=1e-10)


def test_zero_rhs_gives_zero_pressure(wall_spec):
    assert np.array_equal(pressure_solve(np.zeros(wall_spec.cells), wall_spec), np.zeros(wall_spec.cells))


@pytest.mark.parametrize('method', ['fft', 'multigrid'])
def test_periodic_manufactured_solution(method):
    spec = GridSpec.box(32)
    x = (np.arange(32) + 0.5) * spec.h
    X, Y = np.meshgrid(x, x, indexing='ij')
    exact = np.sin(2 * np.pi * X) * np.cos(4 * np.pi * Y) + 0.3
    rhs = laplacian(exact, spec)
    solution = PressureSolver(spec, rtol=1e-12, method=method).solve(rhs)
    assert np.max(np.abs(solution - (exact - exact.mean()))) < 1e-9


def test_neumann_solve_removes_mean(wall_spec, rng):
    rhs = rng.standard_normal(wall_spec.cells) + 2.0
    solver = PressureSolver(wall_spec, rtol=1e-12)
    assert solver.singular
    p = solver.solve(rhs)
    assert solver.last_mean_shift == pytest.approx(rhs.mean())
    assert abs(p.mean()) < 1e-12
    assert np.max(np.abs(laplacian(p, wall_spec) - (rhs - rhs.mean()))) < 1e-8 * np.max(np.abs(rhs))
    assert solver.last_iterations == len(solver.last_residuals) > 0


def test_dirichlet_side_makes_problem_nonsingular(rng):
    spec = GridSpec((0.0, 0.0), (2.0, 1.0), (32, 16),
                    bc=_walls(left=BoundaryCondition('traction'), right=BoundaryCondition('traction')))
    solver = PressureSolver(spec, rtol=1e-12)
    assert not solver.singular
    rhs = rng.standard_normal(spec.cells)
    p = solver.solve(rhs)
    assert np.max(np.abs(laplacian(p, spec) - rhs)) < 1e-8 * np.max(np.abs(rhs))


def test_solver_method_validation(wall_spec):
    with pytest.raises(ConfigurationError):
        PressureSolver(wall_spec, method='fft')
    with pytest.raises(ConfigurationError):
        PressureSolver(wall_spec, method='sor')


def test_non_convergence_carries_residuals(wall_spec, rng):
    solver = PressureSolver(wall_spec, rtol=1e-14, max_iter=1, method='multigrid')
    with pytest.raises(SolverFailureError) as info:
        solver.solve(rng.standard_normal(wall_spec.cells))
    assert len(info.value.residuals) == 1


def test_conservative_advection_conserves_momentum(rng):
    spec = GridSpec.box(32)
    f = make_divfree(7, spec)
    nu, nv = advection(f, spec, 'conservative')
    scale = max_speed(f) ** 2 / spec.h
    assert abs(nu.sum()) < 1e-10 * scale * nu.size
    assert abs(nv.sum()) < 1e-10 * scale * nv.size


def test_advection_form_validation(periodic_spec):
    with pytest.raises(ConfigurationError):
        advection(StaggeredField.zeros(periodic_spec), periodic_spec, 'upwind')


def test_vorticity_of_solid_rotation_free_shear(periodic_spec):
    f = StaggeredField.zeros(periodic_spec)
    assert vorticity(f, periodic_spec).shape == (17, 17)
    f.u[...] = 1.0
    f.v[...] = -2.0
    assert np.allclose(vorticity(f, periodic_spec), 0.0)


def test_field_dump_round_trip(tmp_path):
    spec = GridSpec.box(16)
    f = make_divfree(3, spec)
    f.p[...] = np.arange(f.p.size, dtype=float).reshape(f.p.shape)
    path = dump_field(f, spec, tmp_path / 'field.npz', time=0.25)
    loaded, header = load_field(path)
    assert np.array_equal(loaded.u, f.u)
    assert np.array_equal(loaded.v, f.v)
    assert np.array_equal(loaded.p, f.p)
    assert header['format'] == 'ifed-field'
    assert header['cells'] == [16, 16]
    assert header['h'] == spec.h
    assert header['time'] == 0.25
    assert header['periodic'] == [True, True]
    assert set(header['layout']) == {'u', 'v', 'p'}


def test_load_field_rejects_foreign_files(tmp_path):
    path = tmp_path / 'other.npz'
    np.savez(path, header=np.array('{"format": "other"}'), u=np.zeros(1), v=np.zeros(1), p=np.zeros(1))
    with pytest.raises(ConfigurationError):
        load_field(path)
