"""
Integrador de Navier-Stokes incompressível na grade MAC.

Passo de projeção incremental: convecção explícita (Adams-Bashforth 2),
viscosidade explícita ou Crank-Nicolson, força de corpo externa e correção de
pressão pela solução de Poisson de `macgrid`.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from errors import ConfigurationError, SolverFailureError, StepRejectedError
from macgrid import (
    DEFAULT_POISSON_MAX_ITER,
    DEFAULT_POISSON_RTOL,
    GridSpec,
    StaggeredField,
    advection,
    divergence,
    fill_ghosts,
    gradient,
    max_speed,
    pad_cells,
    pad_faces,
    pressure_solve,
    velocity_laplacian,
)

logger = logging.getLogger(__name__)

VISCOUS_SCHEMES = ('explicit', 'crank_nicolson')
ADVECTION_FORMS = ('conservative', 'advective', 'none')

FaceForce = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class FluidParams:
    rho: float = 1.0
    mu: float = 0.0
    dt: float = 1e-3
    cfl_safety: float = 0.5
    viscous: str = 'explicit'
    advection: str = 'conservative'
    poisson_rtol: float = DEFAULT_POISSON_RTOL
    poisson_max_iter: int = DEFAULT_POISSON_MAX_ITER

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigurationError(f"Densidade deve ser positiva: {self.rho}")
        if self.mu < 0:
            raise ConfigurationError(f"Viscosidade negativa: {self.mu}")
        if not self.dt > 0:
            raise ConfigurationError(f"Passo de tempo deve ser positivo: {self.dt}")
        if self.viscous not in VISCOUS_SCHEMES:
            raise ConfigurationError(f"Esquema viscoso desconhecido: {self.viscous}")
        if self.advection not in ADVECTION_FORMS:
            raise ConfigurationError(f"Forma convectiva desconhecida: {self.advection}")

    @property
    def nu(self) -> float:
        return self.mu / self.rho


@dataclass
class FluidState:
    """Estado do fluido; `advection_prev` guarda o termo convectivo do passo anterior (AB2)."""

    field: StaggeredField
    time: float = 0.0
    advection_prev: Optional[FaceForce] = None

    @classmethod
    def at_rest(cls, spec: GridSpec, time: float = 0.0) -> 'FluidState':
        return cls(fill_ghosts(StaggeredField.zeros(spec), spec, time), time)

    def copy(self) -> 'FluidState':
        prev = None
        if self.advection_prev is not None:
            prev = (self.advection_prev[0].copy(), self.advection_prev[1].copy())
        return FluidState(self.field.copy(), self.time, prev)


def stable_dt(state: FluidState, params: FluidParams, spec: GridSpec) -> float:
    """min(cfl_safety h / |u|max, 0.25 rho h^2 / mu); o limite viscoso some com Crank-Nicolson."""
    h = spec.h
    umax = max_speed(state.field)
    advective = params.cfl_safety * h / umax if umax > 0 else np.inf
    viscous = np.inf
    if params.mu > 0 and params.viscous == 'explicit':
        viscous = 0.25 * params.rho * h * h / params.mu
    return float(min(advective, viscous))


def _crank_nicolson(increment_rhs: np.ndarray, component: int, spec: GridSpec,
                    params: FluidParams, dt: float) -> np.ndarray:
    """Resolve (I - dt nu/2 L0) du = rhs nas faces incógnitas, contorno homogêneo."""
    g, h = spec.ghost, spec.h
    shape = spec.face_counts(component)
    free = ~spec.fixed_face_mask(component)
    count = int(free.sum())
    alpha = 0.5 * dt * params.nu

    def matvec(x):
        values = np.zeros(shape)
        values[free] = x
        full = pad_faces(values, component, spec, homogeneous=True)
        centre = full[g:g + shape[0], g:g + shape[1]]
        lap = (full[g + 1:g + 1 + shape[0], g:g + shape[1]] + full[g - 1:g - 1 + shape[0], g:g + shape[1]]
               + full[g:g + shape[0], g + 1:g + 1 + shape[1]] + full[g:g + shape[0], g - 1:g - 1 + shape[1]]
               - 4.0 * centre) / (h * h)
        return (values - alpha * lap)[free]

    operator = LinearOperator((count, count), matvec=matvec, dtype=float)
    b = increment_rhs[free]
    solution = np.zeros(shape)
    if not np.any(b):
        return solution
    x, info = cg(operator, b, rtol=params.poisson_rtol, atol=0.0, maxiter=params.poisson_max_iter)
    if info != 0:
        raise SolverFailureError(f"Solve viscoso da componente {component} não convergiu")
    solution[free] = x
    return solution


def step(state: FluidState, body_force: Optional[FaceForce], params: FluidParams,
         spec: GridSpec, dt: Optional[float] = None) -> FluidState:
    """Avança um passo de projeção e devolve um novo estado (a entrada não é alterada)."""
    dt = params.dt if dt is None else dt
    h, rho = spec.h, params.rho
    t_new = state.time + dt

    current = fill_ghosts(state.field.copy(), spec, state.time)
    umax = max_speed(current)
    cfl = umax * dt / h
    if cfl > params.cfl_safety:
        raise StepRejectedError(cfl, dt, params.cfl_safety * h / umax)

    if params.advection == 'none':
        conv = (np.zeros(spec.face_counts(0)), np.zeros(spec.face_counts(1)))
    else:
        conv = advection(current, spec, params.advection)
    if state.advection_prev is None:
        extrapolated = conv
    else:
        extrapolated = tuple(1.5 * n - 0.5 * p for n, p in zip(conv, state.advection_prev))

    lap = velocity_laplacian(current, spec)
    grad_p = gradient(current.p, spec)
    if body_force is None:
        body_force = (np.zeros(spec.face_counts(0)), np.zeros(spec.face_counts(1)))

    provisional = current.copy()
    for component, name in enumerate(('u', 'v')):
        free = ~spec.fixed_face_mask(component)
        explicit = -extrapolated[component] + (body_force[component] - grad_p[component]) / rho
        if params.viscous == 'explicit':
            increment = dt * (explicit + params.nu * lap[component])
        else:
            rhs = dt * (explicit + params.nu * lap[component])
            increment = _crank_nicolson(rhs, component, spec, params, dt)
        provisional.interior(name)[free] += increment[free]
    fill_ghosts(provisional, spec, t_new)

    rhs = (rho / dt) * divergence(provisional, spec)
    phi = pressure_solve(rhs, spec, rtol=params.poisson_rtol, max_iter=params.poisson_max_iter)
    grad_phi = gradient(pad_cells(phi, spec, homogeneous=True), spec)

    corrected = provisional
    for component, name in enumerate(('u', 'v')):
        free = ~spec.fixed_face_mask(component)
        corrected.interior(name)[free] -= (dt / rho) * grad_phi[component][free]
    corrected.interior('p')[...] += phi
    fill_ghosts(corrected, spec, t_new)

    if logger.isEnabledFor(logging.DEBUG):
        residual = float(np.max(np.abs(divergence(corrected, spec))))
        logger.debug(f"t={t_new:.6g} CFL={cfl:.3f} max|div u|={residual:.3e}")

    return replace(state, field=corrected, time=t_new, advection_prev=conv)
