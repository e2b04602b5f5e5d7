"""
Construtores dos cenários de benchmark.

Cada construtor transforma um `BenchmarkConfig` em um `Scenario`: grade, parâmetros
do fluido, kernel, corpos imersos (malha, material, ancoragens, cargas), traçadores e
os diagnósticos que alimentam a série temporal.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from config import BenchmarkConfig, get_settings
from coupling import CouplingContext, interpolate
from errors import ConfigurationError
from fluid import FluidParams, FluidState
from kernels import DeltaKernel, make_delta
from lagrangian import (
    LagrangianMesh,
    LagrangianState,
    Material,
    SurfaceLoad,
    TetherParams,
    jacobian_error_norm,
    tracer_area,
)
from macgrid import BoundaryCondition, GridSpec, StaggeredField, make_divfree, max_speed, vorticity
from meshes import annulus_mesh, circle_fiber, cook_membrane_mesh, line_fiber, rectangle_mesh

logger = logging.getLogger(__name__)

# pontos de quadratura por h ao longo da membrana
DEFAULT_POINT_DENSITY = 2.0

STABILIZATION_TREATMENTS = {
    'none': (False, -1.0),
    'volumetric': (False, 0.4),
    'modified': (True, -1.0),
    'both': (True, 0.4),
}


@dataclass
class Body:
    name: str
    mesh: LagrangianMesh
    material: Optional[Material] = None
    tethers: List[TetherParams] = field(default_factory=list)
    loads: List[SurfaceLoad] = field(default_factory=list)
    point_density: Optional[float] = None


@dataclass
class Snapshot:
    """Estado visto pelos diagnósticos em um instante."""

    time: float
    fluid: FluidState
    states: List[LagrangianState]
    tracers: Optional[np.ndarray]
    scenario: 'Scenario'

    def body_state(self, name: str) -> LagrangianState:
        for body, state in zip(self.scenario.bodies, self.states):
            if body.name == name:
                return state
        raise KeyError(name)


Diagnostic = Callable[[Snapshot], float]


@dataclass
class Scenario:
    config: BenchmarkConfig
    spec: GridSpec
    fluid: FluidParams
    delta: DeltaKernel
    bodies: List[Body]
    t_final: float
    diagnostics: Dict[str, Diagnostic] = field(default_factory=dict)
    tracers: Optional[np.ndarray] = None
    characteristic_velocity: float = 1.0
    stop_when_steady: bool = False
    runaway_factor: float = 1e3
    initial_velocity: Optional[StaggeredField] = None


def _even(n: float) -> int:
    n = int(math.ceil(n - 1e-9))
    return n + (n % 2)


def _walls(**overrides) -> Dict[str, BoundaryCondition]:
    bc = {side: BoundaryCondition('wall') for side in ('left', 'right', 'bottom', 'top')}
    bc.update(overrides)
    return bc


def _fluid_params(config: BenchmarkConfig, defaults: Dict, h: float) -> FluidParams:
    settings = get_settings()
    merged = dict(defaults)
    merged.update(config.fluid)
    dt = merged.pop('dt', None)
    dt_factor = merged.pop('dt_factor', None)
    if dt is None:
        if dt_factor is None:
            raise ConfigurationError(f"{config.name}: informe fluid.dt ou fluid.dt_factor")
        dt = dt_factor * h
    return FluidParams(dt=float(dt), poisson_rtol=settings.poisson_rtol,
                       poisson_max_iter=settings.poisson_max_iter, **merged)


def _material(config: BenchmarkConfig, defaults: Dict) -> Material:
    merged = dict(defaults)
    treatment = config.params.get('stabilization')
    if treatment is not None:
        if treatment not in STABILIZATION_TREATMENTS:
            raise ConfigurationError(f"Tratamento de estabilização desconhecido: {treatment}")
        merged['modified_invariants'], merged['nu_stab'] = STABILIZATION_TREATMENTS[treatment]
    merged.update(config.material)
    return Material(**merged)


def _check_params(config: BenchmarkConfig, allowed: set) -> None:
    unknown = sorted(set(config.params) - allowed)
    if unknown:
        raise ConfigurationError(f"Chave desconhecida em 'params' ({config.benchmark}): {unknown[0]}")


def _displacement(state: LagrangianState, mesh: LagrangianMesh, nodes, component: int) -> np.ndarray:
    nodes = np.atleast_1d(nodes)
    return state.positions[nodes, component] - mesh.nodes[nodes, component]


def _jacobian_metric(body_index: int) -> Diagnostic:
    def metric(snap: Snapshot) -> float:
        body = snap.scenario.bodies[body_index]
        return jacobian_error_norm(body.mesh, snap.states[body_index])
    return metric


def _max_speed(snap: Snapshot) -> float:
    return max_speed(snap.fluid.field)


# ---------------------------------------------------------------------------
# Membrana pressurizada
# ---------------------------------------------------------------------------

def build_membrane(config: BenchmarkConfig) -> Scenario:
    _check_params(config, {'radius', 'kappa', 'tracers', 'center', 'point_density', 'perturbation'})
    n = config.resolution or 64
    spec = GridSpec.box(n)
    h = spec.h
    fluid = _fluid_params(config, {'rho': 1.0, 'mu': 0.01, 'dt_factor': 0.125}, h)
    radius = float(config.params.get('radius', 0.25))
    center = tuple(config.params.get('center', (0.5, 0.5)))
    markers = max(3, int(round(2 * np.pi * radius / (config.mfac * h))))
    fiber = circle_fiber(center, radius, markers)
    material = Material('membrane_spring', G=float(config.params.get('kappa', 1.0)))
    tracer_count = int(config.params.get('tracers', 2000))
    tracers = circle_fiber(center, radius, tracer_count).nodes
    area0 = tracer_area(tracers)
    point_density = config.params.get('point_density', DEFAULT_POINT_DENSITY)
    point_density = None if point_density is None else float(point_density)

    # fundo em repouso; `perturbation` > 0 sorteia um campo solenoidal a partir de config.seed
    initial = None
    perturbation = float(config.params.get('perturbation', 0.0))
    if perturbation > 0:
        noise = make_divfree(config.seed, spec)
        scale = perturbation * material.G / radius / max_speed(noise)
        initial = StaggeredField(scale * noise.u, scale * noise.v, noise.p, noise.ghost)

    def area_change(snap: Snapshot) -> float:
        return abs(tracer_area(snap.tracers) - area0) / area0

    def max_vorticity(snap: Snapshot) -> float:
        return float(np.max(np.abs(vorticity(snap.fluid.field, spec))))

    return Scenario(
        config, spec, fluid, make_delta(config.kernel, h),
        [Body('membrane', fiber, material, point_density=point_density)],
        t_final=config.t_final if config.t_final is not None else 1.0,
        diagnostics={'area_change': area_change, 'max_vorticity': max_vorticity, 'max_speed': _max_speed},
        tracers=tracers, characteristic_velocity=material.G / radius,
        initial_velocity=initial,
    )


# ---------------------------------------------------------------------------
# Banda elástica sob pressão
# ---------------------------------------------------------------------------

def build_band(config: BenchmarkConfig) -> Scenario:
    _check_params(config, {'traction', 'thickness', 'elements_across', 'block_height',
                           'tether_factor', 'stabilization', 'stop_when_steady'})
    n = config.resolution or 64
    traction = float(config.params.get('traction', 5.0))
    # sigma n = -tau à esquerda e +tau à direita: p = +tau à esquerda, -tau à direita
    bc = _walls(left=BoundaryCondition('traction', normal_stress=-traction),
                right=BoundaryCondition('traction', normal_stress=traction))
    spec = GridSpec((0.0, 0.0), (2.0, 1.0), (2 * n, n), bc=bc)
    h = spec.h
    fluid = _fluid_params(config, {'rho': 1.0, 'mu': 0.01, 'dt_factor': 1e-3}, h)
    material = _material(config, {'law': 'neo_hookean', 'G': 200.0})

    thickness = float(config.params.get('thickness', 0.1))
    spacing = config.mfac * h
    across = int(config.params.get('elements_across', max(1, round(thickness / spacing))))
    along = max(2, int(round(1.0 / spacing)))
    mesh = rectangle_mesh((1.0 - 0.5 * thickness, 0.0), (thickness, 1.0), across, along, 'band')

    block = float(config.params.get('block_height', 0.1))
    y = mesh.nodes[:, 1]
    anchored = np.flatnonzero((y <= block + 1e-12) | (y >= 1.0 - block - 1e-12))
    kappa = float(config.params.get('tether_factor', 0.01)) * fluid.rho / fluid.dt ** 2
    tether = TetherParams(kappa, nodes=anchored)

    row = np.argmin(np.abs(np.unique(y) - 0.5))
    middle = np.flatnonzero(np.isclose(y, np.unique(y)[row]))

    def max_x_displacement(snap: Snapshot) -> float:
        return float(np.max(_displacement(snap.states[0], mesh, middle, 0)))

    return Scenario(
        config, spec, fluid, make_delta(config.kernel, h),
        [Body('band', mesh, material, [tether])],
        t_final=config.t_final if config.t_final is not None else 1.0,
        diagnostics={'max_x_displacement': max_x_displacement, 'jacobian_error': _jacobian_metric(0),
                'max_speed': _max_speed},
        characteristic_velocity=1.0,
        stop_when_steady=bool(config.params.get('stop_when_steady', False)),
    )


# ---------------------------------------------------------------------------
# Bloco comprimido
# ---------------------------------------------------------------------------

def build_block(config: BenchmarkConfig) -> Scenario:
    _check_params(config, {'load', 'stabilization', 'tether_factor', 'stop_when_steady'})
    m = config.resolution or 8
    n = _even(2 * m * config.mfac)
    spec = GridSpec((0.0, 0.0), (40.0, 40.0), (n, n), bc=_walls())
    h = spec.h
    fluid = _fluid_params(config, {'rho': 1.0, 'mu': 0.16, 'dt_factor': 1e-3}, h)
    material = _material(config, {'law': 'neo_hookean', 'G': 80.194})
    mesh = rectangle_mesh((10.0, 15.0), (20.0, 10.0), m, max(1, m // 2), 'block')

    # kappa_S = 2.5 (2.5 dx / dt)
    kappa = float(config.params.get('tether_factor', 6.25)) * h / fluid.dt
    tethers = [
        TetherParams(kappa, nodes=mesh.node_sets['bottom'], components=(False, True)),
        TetherParams(kappa, nodes=mesh.node_sets['top'], components=(True, False)),
    ]
    top_edges = mesh.edge_sets['top']
    mid_x = 0.5 * (mesh.nodes[top_edges[:, 0], 0] + mesh.nodes[top_edges[:, 1], 0])
    loaded = top_edges[(mid_x >= 15.0 - 1e-9) & (mid_x <= 25.0 + 1e-9)]
    t_load = config.t_load if config.t_load is not None else 40.0
    load = SurfaceLoad(loaded, (0.0, -float(config.params.get('load', 200.0))), t_load)

    top = mesh.node_sets['top']
    tip_node = int(top[np.argmin(np.abs(mesh.nodes[top, 0] - 20.0))])

    def delta_y(snap: Snapshot) -> float:
        return float(_displacement(snap.states[0], mesh, tip_node, 1)[0])

    return Scenario(
        config, spec, fluid, make_delta(config.kernel, h), [Body('block', mesh, material, tethers, [load])],
        t_final=config.t_final if config.t_final is not None else 100.0,
        diagnostics={'delta_y': delta_y, 'jacobian_error': _jacobian_metric(0), 'max_speed': _max_speed},
        characteristic_velocity=1.0,
        stop_when_steady=bool(config.params.get('stop_when_steady', False)),
    )


# ---------------------------------------------------------------------------
# Membrana de Cook
# ---------------------------------------------------------------------------

def build_cook(config: BenchmarkConfig) -> Scenario:
    _check_params(config, {'load', 'stabilization', 'tether_factor', 'stop_when_steady'})
    m = config.resolution or 8
    n = _even(2 * m * config.mfac)
    spec = GridSpec((0.0, 0.0), (13.0, 13.0), (n, n), bc=_walls())
    h = spec.h
    fluid = _fluid_params(config, {'rho': 1.0, 'mu': 0.16, 'dt_factor': 1e-3}, h)
    material = _material(config, {'law': 'neo_hookean', 'G': 250.0 / 3.0})
    mesh = cook_membrane_mesh(m, offset=(3.25, 3.5))

    kappa = float(config.params.get('tether_factor', 0.125)) * h / fluid.dt
    tether = TetherParams(kappa, nodes=mesh.node_sets['left'])
    t_load = config.t_load if config.t_load is not None else 20.0
    load = SurfaceLoad(mesh.edge_sets['right'], (0.0, float(config.params.get('load', 6.25))), t_load)
    corner = int(mesh.node_sets['top'][-1])

    def delta_y(snap: Snapshot) -> float:
        return float(_displacement(snap.states[0], mesh, corner, 1)[0])

    return Scenario(
        config, spec, fluid, make_delta(config.kernel, h), [Body('cook', mesh, material, [tether], [load])],
        t_final=config.t_final if config.t_final is not None else 50.0,
        diagnostics={'delta_y': delta_y, 'jacobian_error': _jacobian_metric(0), 'max_speed': _max_speed},
        characteristic_velocity=1.0,
        stop_when_steady=bool(config.params.get('stop_when_steady', False)),
    )


# ---------------------------------------------------------------------------
# Canal inclinado
# ---------------------------------------------------------------------------

def poiseuille_velocity(x, y, theta: float, mu: float, pressure_gradient: float = 1.0,
                        width: float = 1.0, inside_only: bool = True):
    """Poiseuille plano girado de theta; fora da faixa entre as placas a velocidade é nula."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = y * np.cos(theta) - x * np.sin(theta)
    shape = -pressure_gradient / (2.0 * mu) * s * (s - width)
    if inside_only:
        shape = np.where((s >= 0.0) & (s <= width), shape, 0.0)
    return shape * np.cos(theta), shape * np.sin(theta)


def boundary_layer_width(distance: np.ndarray, computed: np.ndarray, exact: np.ndarray) -> float:
    """Primeira distância à placa em que a velocidade calculada atinge 50% da analítica."""
    reached = np.flatnonzero(computed >= 0.5 * exact)
    if len(reached) == 0:
        return float('inf')
    return float(distance[reached[0]])


def build_channel(config: BenchmarkConfig) -> Scenario:
    _check_params(config, {'theta', 'pressure_gradient', 'kappa_factor', 'eta_factor', 'samples',
                           'stop_when_steady'})
    n = config.resolution or 32
    if n % 4:
        raise ConfigurationError(f"Canal exige N múltiplo de 4 (recebido {n})")
    theta = float(config.params.get('theta', np.pi / 6))
    gradient = float(config.params.get('pressure_gradient', 1.0))
    fluid_defaults = {'rho': 1.0, 'mu': 0.5, 'dt_factor': 0.15, 'viscous': 'crank_nicolson'}
    mu = float(config.fluid.get('mu', fluid_defaults['mu']))

    def profile(x, y, t):
        return poiseuille_velocity(x, y, theta, mu, gradient)

    bc = _walls(left=BoundaryCondition('inflow', velocity=profile),
                right=BoundaryCondition('inflow', velocity=profile))
    spec = GridSpec((0.0, -0.25), (1.0, 2.25), (n, n * 9 // 4), bc=bc)
    h = spec.h
    fluid = _fluid_params(config, fluid_defaults, h)

    spacing = config.mfac * h
    length = 1.0 / np.cos(theta)
    count = max(2, int(round(length / spacing)) + 1)
    offset = 1.0 / np.cos(theta)
    kappa = float(config.params.get('kappa_factor', 0.05)) * fluid.rho * h / fluid.dt ** 2
    eta = float(config.params.get('eta_factor', 0.25)) * fluid.rho * h / fluid.dt
    bodies = []
    for name, y0 in (('lower_plate', 0.0), ('upper_plate', offset)):
        plate = line_fiber((0.0, y0), (1.0, y0 + np.tan(theta)), count, name)
        bodies.append(Body(name, plate, None, [TetherParams(kappa, eta)]))

    u_max = gradient / (8.0 * mu)
    samples = int(config.params.get('samples', 200))
    s = (np.arange(samples) + 0.5) / samples
    x_cut = 0.5
    y_cut = (s + x_cut * np.sin(theta)) / np.cos(theta)
    points = np.stack([np.full(samples, x_cut), y_cut], axis=1)
    exact = np.hypot(*poiseuille_velocity(points[:, 0], points[:, 1], theta, mu, gradient))
    sampler = CouplingContext(make_delta('BS2', h), spec)
    interior = np.minimum(s, 1.0 - s) > 3.0 * h

    def computed_speed(snap: Snapshot) -> np.ndarray:
        return np.linalg.norm(interpolate(sampler, snap.fluid.field, points), axis=1)

    def profile_error(snap: Snapshot) -> float:
        return float(np.max(np.abs(computed_speed(snap) - exact)[interior]) / u_max)

    def layer_width(snap: Snapshot) -> float:
        speed = computed_speed(snap)
        half = samples // 2
        lower = boundary_layer_width(s[:half], speed[:half], exact[:half])
        upper = boundary_layer_width(s[:half], speed[::-1][:half], exact[::-1][:half])
        return 0.5 * (lower + upper)

    column = spec.cells[0] // 2

    def flow_rate(snap: Snapshot) -> float:
        return float(np.sum(snap.fluid.field.interior('u')[column]) * h)

    return Scenario(
        config, spec, fluid, make_delta(config.kernel, h), bodies,
        t_final=config.t_final if config.t_final is not None else 3.0,
        diagnostics={'profile_error': profile_error, 'boundary_layer_width': layer_width,
                'flow_rate': flow_rate, 'max_speed': _max_speed},
        characteristic_velocity=u_max,
        stop_when_steady=bool(config.params.get('stop_when_steady', False)),
    )


# ---------------------------------------------------------------------------
# Turek-Hron modificado
# ---------------------------------------------------------------------------

def build_turek_hron(config: BenchmarkConfig) -> Scenario:
    _check_params(config, {'mean_velocity', 'inflow_ramp', 'tether_factor', 'stop_when_steady'})
    n = config.resolution or 48
    ny = max(2, n // 6)
    height = 0.41
    mean_velocity = float(config.params.get('mean_velocity', 2.0))
    ramp_time = float(config.params.get('inflow_ramp', 2.0))

    def inflow(x, y, t):
        ramp = 0.5 * (1.0 - np.cos(np.pi * t / ramp_time)) if t < ramp_time else 1.0
        u = 1.5 * mean_velocity * y * (height - y) / (height / 2.0) ** 2 * ramp
        return np.clip(u, 0.0, None), np.zeros_like(u)

    bc = _walls(left=BoundaryCondition('inflow', velocity=inflow),
                right=BoundaryCondition('traction', normal_stress=0.0, no_slip_tangential=True))
    spec = GridSpec((0.0, 0.0), (6.0 * height, height), (6 * ny, ny), bc=bc)
    h = spec.h
    fluid = _fluid_params(config, {'rho': 1000.0, 'mu': 1.0, 'dt_factor': 0.00164}, h)
    material = _material(config, {'law': 'svk', 'G': 1e6, 'lam': 8e6})

    spacing = config.mfac * h
    ring = min(0.04, 3.0 * spacing)
    n_r = max(1, int(round(ring / spacing)))
    n_theta = max(8, int(round(2 * np.pi * 0.05 / spacing)))
    cylinder = annulus_mesh((0.2, 0.2), 0.05 - ring, 0.05, n_theta, n_r, 'cylinder')
    beam = rectangle_mesh((0.25, 0.19), (0.35, 0.02), max(2, int(round(0.35 / spacing))),
                          max(1, int(round(0.02 / spacing))), 'beam')
    kappa = float(config.params.get('tether_factor', 5e4)) * h / fluid.dt ** 2
    bodies = [
        Body('cylinder', cylinder, None, [TetherParams(kappa)]),
        Body('beam', beam, material, [TetherParams(kappa, nodes=beam.node_sets['left'])]),
    ]
    tip = beam.node_sets['right']

    def delta_y(snap: Snapshot) -> float:
        return float(np.mean(_displacement(snap.states[1], beam, tip, 1)))

    def delta_x(snap: Snapshot) -> float:
        return float(np.mean(_displacement(snap.states[1], beam, tip, 0)))

    return Scenario(
        config, spec, fluid, make_delta(config.kernel, h), bodies,
        t_final=config.t_final if config.t_final is not None else 0.5,
        diagnostics={'delta_y': delta_y, 'delta_x': delta_x, 'jacobian_error': _jacobian_metric(1),
                'max_speed': _max_speed},
        characteristic_velocity=mean_velocity,
        stop_when_steady=bool(config.params.get('stop_when_steady', False)),
    )


BUILDERS = {
    'membrane': build_membrane,
    'band': build_band,
    'block': build_block,
    'cook': build_cook,
    'channel': build_channel,
    'turek_hron': build_turek_hron,
}


def build_scenario(config: BenchmarkConfig) -> Scenario:
    scenario = BUILDERS[config.benchmark](config)
    logger.info(
        f"Cenário {config.benchmark}: grade {scenario.spec.cells}, h={scenario.spec.h:.4g}, "
        f"dt={scenario.fluid.dt:.3e}, kernel {scenario.delta.name}, "
        f"{sum(b.mesh.node_count for b in scenario.bodies)} nós"
    )
    return scenario
