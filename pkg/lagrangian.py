"""
Estruturas imersas: malhas Q1 e fibras, leis constitutivas, forças nodais e diagnósticos.

Os sólidos 2D usam estado plano de deformação (F embutido como diag(F, 1)), de modo que
I1 = tr(C) + 1. A força elástica segue a formulação unificada com quadratura nodal,
F_m = -(1/w_m) sum_q P(X_q) grad_X N_m(X_q) w_q, que dispensa projeção adicional.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy import sparse

from errors import ConfigurationError, InvertedElementError, MeshError

logger = logging.getLogger(__name__)

ELEMENT_TYPES = ('quad', 'segment')
LAWS = ('neo_hookean', 'svk', 'membrane_spring')

CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
GAUSS_POINTS = CORNERS / np.sqrt(3.0)


def shape_functions(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return 0.25 * (1.0 + xi[0] * CORNERS[:, 0]) * (1.0 + xi[1] * CORNERS[:, 1])


def shape_gradients(xi) -> np.ndarray:
    """Derivadas (4, 2) das funções Q1 em relação a (xi, eta)."""
    xi = np.asarray(xi, dtype=float)
    d_xi = 0.25 * CORNERS[:, 0] * (1.0 + xi[1] * CORNERS[:, 1])
    d_eta = 0.25 * CORNERS[:, 1] * (1.0 + xi[0] * CORNERS[:, 0])
    return np.stack([d_xi, d_eta], axis=1)


def _iso_jacobian(coords: np.ndarray, dN: np.ndarray) -> np.ndarray:
    return np.einsum('eai,ak->eik', coords, dN)


@dataclass
class LagrangianMesh:
    """Malha de referência.

    `node_sets` nomeia conjuntos de nós (ex.: 'left', 'bottom') e `edge_sets` nomeia
    arestas de contorno (pares de nós) usadas para cargas de superfície.
    """

    nodes: np.ndarray
    elements: np.ndarray
    element_type: str = 'quad'
    node_sets: Dict[str, np.ndarray] = field(default_factory=dict)
    edge_sets: Dict[str, np.ndarray] = field(default_factory=dict)
    name: str = ''

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        self.elements = np.asarray(self.elements, dtype=int)
        if self.element_type not in ELEMENT_TYPES:
            raise MeshError(f"Tipo de elemento desconhecido: {self.element_type}")
        per_element = 4 if self.element_type == 'quad' else 2
        if self.elements.ndim != 2 or self.elements.shape[1] != per_element or len(self.elements) == 0:
            raise MeshError(f"Conectividade inválida para elementos '{self.element_type}'")
        if self.elements.min() < 0 or self.elements.max() >= len(self.nodes):
            raise MeshError("Conectividade referencia nós inexistentes")
        used = np.zeros(len(self.nodes), dtype=bool)
        used[self.elements.ravel()] = True
        if not used.all():
            raise MeshError(f"Nó {int(np.argmin(used))} não pertence a nenhum elemento")
        self.node_sets = {k: np.asarray(v, dtype=int) for k, v in self.node_sets.items()}
        self.edge_sets = {k: np.asarray(v, dtype=int).reshape(-1, 2) for k, v in self.edge_sets.items()}
        if self.element_type == 'quad':
            self._setup_quads()
        else:
            self._setup_segments()

    def _setup_quads(self):
        coords = self.nodes[self.elements]
        count = len(self.elements)
        gauss_det = np.empty((count, 4))
        gauss_N = np.empty((4, 4))
        for g, xi in enumerate(GAUSS_POINTS):
            gauss_det[:, g] = np.linalg.det(_iso_jacobian(coords, shape_gradients(xi)))
            gauss_N[g] = shape_functions(xi)
        if np.any(gauss_det <= 0.0):
            bad = int(np.argwhere(gauss_det <= 0.0)[0, 0])
            raise MeshError(f"Elemento {bad} degenerado ou com orientação invertida")
        self.areas = gauss_det.sum(axis=1)
        # w_q^e = integral de N_q no elemento (quadratura de Gauss 2x2)
        self.quadrature_weights = gauss_det @ gauss_N
        self.corner_gradients = np.empty((count, 4, 4, 2))
        for q, xi in enumerate(CORNERS):
            self.corner_gradients[:, q] = self._gradients_at(coords, xi)
        self.centroid_gradients = self._gradients_at(coords, (0.0, 0.0))
        weights = np.zeros(len(self.nodes))
        np.add.at(weights, self.elements.ravel(), self.quadrature_weights.ravel())
        self.weights = weights

    def _setup_segments(self):
        a, b = self.nodes[self.elements[:, 0]], self.nodes[self.elements[:, 1]]
        lengths = np.linalg.norm(b - a, axis=1)
        if np.any(lengths <= 0.0):
            raise MeshError(f"Segmento {int(np.argmin(lengths))} com comprimento nulo")
        self.areas = lengths
        weights = np.zeros(len(self.nodes))
        np.add.at(weights, self.elements[:, 0], 0.5 * lengths)
        np.add.at(weights, self.elements[:, 1], 0.5 * lengths)
        self.weights = weights

    @staticmethod
    def _gradients_at(coords: np.ndarray, xi) -> np.ndarray:
        dN = shape_gradients(xi)
        J0 = _iso_jacobian(coords, dN)
        det = np.linalg.det(J0)
        if np.any(det <= 0.0):
            raise MeshError(f"Elemento {int(np.argmin(det))} com jacobiano isoparamétrico nulo")
        return np.einsum('ak,eki->eai', dN, np.linalg.inv(J0))

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def is_solid(self) -> bool:
        return self.element_type == 'quad'

    @property
    def measure(self) -> float:
        return float(self.areas.sum())

    def boundary_edges(self) -> np.ndarray:
        """Arestas que pertencem a um único quadrilátero, orientadas como no elemento."""
        if not self.is_solid:
            return np.empty((0, 2), dtype=int)
        edges = np.concatenate([self.elements[:, [k, (k + 1) % 4]] for k in range(4)])
        keys = np.sort(edges, axis=1)
        _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        return edges[counts[inverse.ravel()] == 1]

    def segment_quadrature(self, spacing: float) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """Regra do ponto médio em sub-intervalos de comprimento <= `spacing` por segmento.

        Devolve (Phi, w_q) com Phi[q, l] = phi_l(X_q) das funções lineares por partes;
        a regra é exata para funções lineares, logo Phi^T w_q = w_l.
        """
        if self.is_solid:
            raise MeshError("Quadratura elemental de fibra exige malha de segmentos")
        if not spacing > 0:
            raise MeshError(f"Espaçamento de quadratura inválido: {spacing}")
        counts = np.maximum(1, np.ceil(self.areas / spacing - 1e-9).astype(int))
        segment = np.repeat(np.arange(len(self.elements)), counts)
        local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        s = (local + 0.5) / counts[segment]
        rows = np.tile(np.arange(len(segment)), 2)
        cols = np.concatenate([self.elements[segment, 0], self.elements[segment, 1]])
        phi = sparse.csr_matrix((np.concatenate([1.0 - s, s]), (rows, cols)),
                                shape=(len(segment), self.node_count))
        return phi, self.areas[segment] / counts[segment]


@dataclass
class LagrangianState:
    positions: np.ndarray
    velocities: np.ndarray
    forces: np.ndarray

    @classmethod
    def reference(cls, mesh: LagrangianMesh) -> 'LagrangianState':
        count = mesh.node_count
        return cls(mesh.nodes.copy(), np.zeros((count, 2)), np.zeros((count, 2)))

    def copy(self) -> 'LagrangianState':
        return LagrangianState(self.positions.copy(), self.velocities.copy(), self.forces.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities)))


def stabilization_bulk_modulus(G: float, nu_stab: float) -> float:
    """kappa_stab = 2G(1 + nu)/(3(1 - 2nu)); nu_stab = -1 desliga a estabilização."""
    if nu_stab == -1.0:
        return 0.0
    return 2.0 * G * (1.0 + nu_stab) / (3.0 * (1.0 - 2.0 * nu_stab))


@dataclass(frozen=True)
class Material:
    law: str
    G: float
    lam: float = 0.0
    modified_invariants: bool = False
    nu_stab: float = -1.0

    def __post_init__(self):
        if self.law not in LAWS:
            raise ConfigurationError(f"Lei constitutiva desconhecida: {self.law}")
        if not self.G > 0:
            raise ConfigurationError(f"Módulo de cisalhamento deve ser positivo: {self.G}")
        if not -1.0 <= self.nu_stab < 0.5:
            raise ConfigurationError(f"nu_stab fora de [-1, 0.5): {self.nu_stab}")

    @property
    def kappa_stab(self) -> float:
        return stabilization_bulk_modulus(self.G, self.nu_stab)

    @property
    def stabilized(self) -> bool:
        return self.nu_stab != -1.0


def _check_orientation(J: np.ndarray, elements: Optional[np.ndarray] = None) -> None:
    bad = ~(J > 0.0)
    if np.any(bad):
        flat = int(np.argmax(bad.ravel()))
        element = -1
        if elements is not None:
            element = int(np.asarray(elements).ravel()[flat])
        raise InvertedElementError(element, float(J.ravel()[flat]))


def first_pk_stress(mat: Material, F: np.ndarray, elements: Optional[np.ndarray] = None) -> np.ndarray:
    """Primeiro tensor de Piola-Kirchhoff para F com forma (..., 2, 2)."""
    if mat.law == 'membrane_spring':
        raise ConfigurationError("Molas de membrana não definem tensão de Piola-Kirchhoff")
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    _check_orientation(J, elements)
    F_inv_T = np.swapaxes(np.linalg.inv(F), -1, -2)
    Jx = J[..., None, None]
    if mat.law == 'neo_hookean':
        if mat.modified_invariants:
            I1 = np.einsum('...ij,...ij->...', F, F) + 1.0
            P = mat.G * Jx ** (-2.0 / 3.0) * (F - (I1[..., None, None] / 3.0) * F_inv_T)
        else:
            P = mat.G * (F - F_inv_T)
    else:
        C = np.swapaxes(F, -1, -2) @ F
        E = 0.5 * (C - np.eye(2))
        trE = np.trace(E, axis1=-2, axis2=-1)[..., None, None]
        P = F @ (mat.lam * trE * np.eye(2) + 2.0 * mat.G * E)
    if mat.stabilized:
        P = P + mat.kappa_stab * np.log(Jx) * F_inv_T
    return P


def strain_energy(mat: Material, F: np.ndarray) -> np.ndarray:
    """Densidade de energia W(F) consistente com `first_pk_stress`."""
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    _check_orientation(J)
    I1 = np.einsum('...ij,...ij->...', F, F) + 1.0
    if mat.law == 'neo_hookean':
        if mat.modified_invariants:
            W = 0.5 * mat.G * (J ** (-2.0 / 3.0) * I1 - 3.0)
        else:
            W = 0.5 * mat.G * (I1 - 3.0) - mat.G * np.log(J)
    elif mat.law == 'svk':
        C = np.swapaxes(F, -1, -2) @ F
        E = 0.5 * (C - np.eye(2))
        trE = np.trace(E, axis1=-2, axis2=-1)
        W = 0.5 * mat.lam * trE ** 2 + mat.G * np.einsum('...ij,...ij->...', E, E)
    else:
        raise ConfigurationError("Molas de membrana não definem densidade de energia em F")
    if mat.stabilized:
        W = W + 0.5 * mat.kappa_stab * np.log(J) ** 2
    return W


def modified_first_invariant(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    I1 = np.einsum('...ij,...ij->...', F, F) + 1.0
    return np.linalg.det(F) ** (-2.0 / 3.0) * I1


def deformation_gradient(mesh: LagrangianMesh, state: LagrangianState, element: int,
                         local_point=(0.0, 0.0)) -> Tuple[np.ndarray, float]:
    """F = sum_l chi_l (x) grad_X N_l no ponto local; devolve (F, J)."""
    if not mesh.is_solid:
        raise MeshError("Gradiente de deformação exige malha de quadriláteros")
    if not 0 <= element < len(mesh.elements):
        raise MeshError(f"Elemento inexistente: {element}")
    nodes = mesh.elements[element]
    grads = LagrangianMesh._gradients_at(mesh.nodes[nodes][None], local_point)[0]
    F = np.einsum('ai,aj->ij', state.positions[nodes], grads)
    return F, float(np.linalg.det(F))


def _corner_deformation_gradients(mesh: LagrangianMesh, state: LagrangianState) -> np.ndarray:
    chi = state.positions[mesh.elements]
    return np.einsum('eai,eqaj->eqij', chi, mesh.corner_gradients)


def elastic_nodal_forces(mesh: LagrangianMesh, state: LagrangianState,
                         mat: Optional[Material]) -> np.ndarray:
    """Densidade de força elástica por medida de referência em cada nó."""
    forces = np.zeros((mesh.node_count, 2))
    if mat is None:
        return forces
    if mat.law == 'membrane_spring':
        # F_l = (kappa / w_l) sum_seg (chi_k - chi_l) / L_seg, com L_seg a corda de referência
        # (mesh.areas), não o arco 2 pi R / M; w_l é a média das cordas vizinhas. No anel
        # uniforme é a diferença de 3 pontos com ds = 2 R sin(pi / M).
        a, b = mesh.elements[:, 0], mesh.elements[:, 1]
        tension = mat.G * (state.positions[b] - state.positions[a]) / mesh.areas[:, None]
        np.add.at(forces, a, tension)
        np.add.at(forces, b, -tension)
        return forces / mesh.weights[:, None]
    if not mesh.is_solid:
        raise ConfigurationError(f"Lei '{mat.law}' exige malha de quadriláteros")
    F = _corner_deformation_gradients(mesh, state)
    element_ids = np.broadcast_to(np.arange(len(mesh.elements))[:, None], F.shape[:2])
    P = first_pk_stress(mat, F, element_ids)
    contributions = -np.einsum('eqij,eqaj,eq->eai', P, mesh.corner_gradients, mesh.quadrature_weights)
    np.add.at(forces, mesh.elements.ravel(), contributions.reshape(-1, 2))
    return forces / mesh.weights[:, None]


Target = Union[None, np.ndarray, Callable[[float], np.ndarray]]


@dataclass
class TetherParams:
    """Força de penalidade kappa (psi - chi) + eta (V - U) em `nodes` (todos se None).

    `components` seleciona as componentes x/y ancoradas; `target` e `target_velocity`
    são arrays (M, 2) ou funções do tempo; por omissão psi = X e V = 0.
    """

    kappa: float
    eta: float = 0.0
    nodes: Optional[np.ndarray] = None
    components: Tuple[bool, bool] = (True, True)
    target: Target = None
    target_velocity: Target = None

    def __post_init__(self):
        if self.kappa < 0 or self.eta < 0:
            raise ConfigurationError("Parâmetros de ancoragem devem ser não negativos")
        if self.kappa == 0 and self.eta == 0:
            raise ConfigurationError("Ancoragem com kappa = eta = 0 não tem efeito")
        if self.nodes is not None:
            self.nodes = np.asarray(self.nodes, dtype=int)

    @staticmethod
    def _resolve(value: Target, default: np.ndarray, t: float) -> np.ndarray:
        if value is None:
            return default
        if callable(value):
            return np.asarray(value(t), dtype=float)
        return np.asarray(value, dtype=float)


def tether_nodal_forces(mesh: LagrangianMesh, state: LagrangianState, tp: TetherParams,
                        t: float) -> np.ndarray:
    psi = tp._resolve(tp.target, mesh.nodes, t)
    V = tp._resolve(tp.target_velocity, np.zeros_like(mesh.nodes), t)
    force = tp.kappa * (psi - state.positions) + tp.eta * (V - state.velocities)
    force = force * np.asarray(tp.components, dtype=float)[None, :]
    if tp.nodes is None:
        return force
    masked = np.zeros_like(force)
    masked[tp.nodes] = force[tp.nodes]
    return masked


def load_ramp(t: float, ramp_time: float) -> float:
    """min(t / T_l, 1); T_l <= 0 aplica a carga cheia de imediato."""
    if ramp_time <= 0:
        return 1.0
    return min(max(t, 0.0) / ramp_time, 1.0)


@dataclass
class SurfaceLoad:
    """Tração de referência (força por comprimento) sobre as arestas `edges`."""

    edges: np.ndarray
    traction: Tuple[float, float]
    ramp_time: float = 0.0

    def magnitude(self, t: float) -> np.ndarray:
        return np.asarray(self.traction, dtype=float) * load_ramp(t, self.ramp_time)


def traction_nodal_forces(mesh: LagrangianMesh, load: SurfaceLoad, t: float) -> np.ndarray:
    """Tração de superfície como densidade nodal: cada aresta entrega T L/2 a seus nós."""
    edges = np.asarray(load.edges, dtype=int).reshape(-1, 2)
    forces = np.zeros((mesh.node_count, 2))
    if len(edges) == 0:
        return forces
    lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    share = 0.5 * lengths[:, None] * load.magnitude(t)[None, :]
    np.add.at(forces, edges[:, 0], share)
    np.add.at(forces, edges[:, 1], share)
    return forces / mesh.weights[:, None]


def element_jacobians(mesh: LagrangianMesh, state: LagrangianState) -> np.ndarray:
    """J = det F no centróide de cada elemento; valores negativos são reportados, não lançados."""
    if not mesh.is_solid:
        raise MeshError("Jacobianos elementares exigem malha de quadriláteros")
    chi = state.positions[mesh.elements]
    F = np.einsum('eai,eaj->eij', chi, mesh.centroid_gradients)
    return np.linalg.det(F)


def jacobian_error_norm(mesh: LagrangianMesh, state: LagrangianState) -> float:
    """Norma L2 de |J - 1| ponderada pela área de referência dos elementos."""
    J = element_jacobians(mesh, state)
    return float(np.sqrt(np.sum((J - 1.0) ** 2 * mesh.areas)))


def tracer_area(tracers) -> float:
    """Área (fórmula do laço) de um polígono fechado ordenado."""
    points = np.asarray(tracers, dtype=float).reshape(-1, 2)
    if len(points) < 3:
        raise ValueError("tracer_area exige pelo menos 3 pontos")
    x, y = points[:, 0], points[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))
