"""
Espalhamento de forças (S) e interpolação de velocidades (J = S*) entre a malha
lagrangiana e a grade MAC, para qualquer DeltaKernel (isotrópico ou composto).

O acoplamento é nodal por omissão. Fibras com `point_density` usam quadratura elemental:
pontos a no máximo h / point_density em cada segmento, forças e velocidades levadas
pelas funções lineares do segmento.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse

from errors import ConfigurationError
from kernels import DeltaKernel, StencilBatch, stencil_weights
from lagrangian import LagrangianMesh, LagrangianState
from macgrid import GridSpec, StaggeredField, fold_faces

logger = logging.getLogger(__name__)


@dataclass
class CouplingContext:
    delta: DeltaKernel
    spec: GridSpec
    mesh: Optional[LagrangianMesh] = None
    point_density: Optional[float] = None
    _quadrature: Optional[Tuple[sparse.csr_matrix, np.ndarray]] = field(default=None, repr=False)
    _cache: Dict[Tuple[int, int], Tuple[np.ndarray, StencilBatch]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        needed = math.ceil(self.delta.max_points / 2)
        if self.spec.ghost < needed:
            raise ConfigurationError(
                f"Camadas fantasma ({self.spec.ghost}) insuficientes para {self.delta.name} (mínimo {needed})"
            )
        if abs(self.delta.h - self.spec.h) > 1e-12 * self.spec.h:
            raise ConfigurationError(f"Kernel construído com h={self.delta.h}, grade tem h={self.spec.h}")
        if self.point_density is not None:
            if not self.point_density > 0:
                raise ConfigurationError(f"point_density deve ser positivo: {self.point_density}")
            if self.mesh is None or self.mesh.is_solid:
                raise ConfigurationError("Quadratura elemental só se aplica a fibras (malhas de segmentos)")

    @property
    def elemental(self) -> bool:
        return self.point_density is not None

    def quadrature(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """(Phi, w_q) na configuração de referência, calculados uma única vez."""
        if self._quadrature is None:
            self._quadrature = self.mesh.segment_quadrature(self.spec.h / self.point_density)
            logger.debug(f"Quadratura elemental: {len(self._quadrature[1])} pontos para {self.mesh.node_count} nós")
        return self._quadrature

    def weights(self, count: int) -> np.ndarray:
        if self.mesh is None:
            return np.ones(count)
        return self.mesh.weights

    def batch(self, component: int, positions: np.ndarray, derivative_axis: int = -1) -> StencilBatch:
        """Estêncil da componente; reaproveitado enquanto as posições não mudam."""
        key = (component, derivative_axis)
        cached = self._cache.get(key)
        if cached is not None and cached[0].shape == positions.shape and np.array_equal(cached[0], positions):
            return cached[1]
        result = stencil_weights(self.delta, component, positions, self.spec, derivative_axis)
        self._cache[key] = (positions.copy(), result)
        return result


def _scatter(batch: StencilBatch, values: np.ndarray, spec: GridSpec) -> np.ndarray:
    g = spec.ghost
    counts = spec.face_counts(batch.component)
    padded = np.zeros((counts[0] + 2 * g, counts[1] + 2 * g))
    contributions = batch.weights() * values[:, None, None]
    rows = batch.ii[:, :, None] + g
    cols = batch.jj[:, None, :] + g
    np.add.at(padded, (rows, cols), contributions)
    # fantasmas voltam ao interior pela transposta do preenchimento, mantendo S = J*
    return fold_faces(padded, batch.component, spec)


def _gather(batch: StencilBatch, full: np.ndarray, spec: GridSpec) -> np.ndarray:
    g = spec.ghost
    rows = batch.ii[:, :, None] + g
    cols = batch.jj[:, None, :] + g
    values = full[rows, cols]
    return np.einsum('pa,pb,pab->p', batch.wx, batch.wy, values)


def spread_forces(ctx: CouplingContext, positions: np.ndarray, forces: np.ndarray,
                  weights: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
    """f_c(x_face) = sum_l F_c,l delta_h(x_face - chi_l) w_l nas faces incógnitas."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    forces = np.atleast_2d(np.asarray(forces, dtype=float))
    if weights is None:
        weights = ctx.weights(len(positions))
    density = forces * np.asarray(weights, dtype=float)[:, None]
    return tuple(
        _scatter(ctx.batch(c, positions), density[:, c], ctx.spec) for c in (0, 1)
    )


def spread_body(ctx: CouplingContext, positions, forces) -> Tuple[np.ndarray, np.ndarray]:
    """S aplicado a um corpo: nos nós, ou nos pontos de quadratura se `ctx.elemental`."""
    if not ctx.elemental:
        return spread_forces(ctx, positions, forces)
    phi, weights = ctx.quadrature()
    positions = np.asarray(positions, dtype=float)
    forces = np.asarray(forces, dtype=float)
    return spread_forces(ctx, phi @ positions, phi @ forces, weights)


def spread(ctx: CouplingContext, state: LagrangianState) -> Tuple[np.ndarray, np.ndarray]:
    return spread_body(ctx, state.positions, state.forces)


def interpolate(ctx: CouplingContext, f: StaggeredField, positions) -> np.ndarray:
    """U_l = h^2 sum_faces u delta_h(x_face - chi_l); exige camadas fantasma preenchidas."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    fulls = (f.u, f.v)
    return np.stack([_gather(ctx.batch(c, positions), fulls[c], ctx.spec) for c in (0, 1)], axis=1)


def interpolate_body(ctx: CouplingContext, f: StaggeredField, positions) -> np.ndarray:
    """Adjunto de `spread_body`: U_l = sum_q phi_l(X_q) U_q w_q / w_l no modo elemental."""
    if not ctx.elemental:
        return interpolate(ctx, f, positions)
    phi, weights = ctx.quadrature()
    values = interpolate(ctx, f, phi @ np.asarray(positions, dtype=float))
    return (phi.T @ (values * weights[:, None])) / ctx.mesh.weights[:, None]


def continuous_divergence(ctx: CouplingContext, f: StaggeredField, points) -> np.ndarray:
    """div do campo interpolado, derivando analiticamente o kernel no eixo de cada componente."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    fulls = (f.u, f.v)
    total = np.zeros(len(points))
    for c in (0, 1):
        batch = stencil_weights(ctx.delta, c, points, ctx.spec, derivative_axis=c)
        total += _gather(batch, fulls[c], ctx.spec)
    return total
