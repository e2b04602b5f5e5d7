"""
Grade MAC (marker-and-cell) deslocada.

Convenção de índices (base zero, origem em `origin`):
- célula (i, j) com centro em ((i + 1/2) h, (j + 1/2) h)
- face u (i, j) em (i h, (j + 1/2) h)
- face v (i, j) em ((i + 1/2) h, j h)

Eixos periódicos guardam N faces normais (a face N coincide com a face 0); os
demais guardam N + 1, incluindo as duas faces de fronteira. Todos os arrays de
`StaggeredField` incluem `ghost` camadas fantasma em cada lado.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from errors import ConfigurationError, SolverFailureError, UnsupportedFixtureError

logger = logging.getLogger(__name__)

SIDES = ('left', 'right', 'bottom', 'top')
AXIS_SIDES = {0: ('left', 'right'), 1: ('bottom', 'top')}
BC_KINDS = ('periodic', 'wall', 'inflow', 'traction')

DEFAULT_POISSON_RTOL = 1e-10
DEFAULT_POISSON_MAX_ITER = 500


@dataclass(frozen=True)
class BoundaryCondition:
    """Condição de contorno de um lado do domínio.

    - periodic: par oposto também periódico
    - wall: velocidade nula (ou `velocity`, para paredes móveis)
    - inflow: perfil de velocidade prescrito `velocity(x, y, t) -> (u, v)`
    - traction: tensão normal prescrita sigma_nn; a pressão de contorno é -sigma_nn
      (`no_slip_tangential` zera a velocidade tangencial em vez de extrapolá-la)
    """

    kind: str
    velocity: Optional[Callable] = None
    normal_stress: Union[float, Callable[[float], float]] = 0.0
    no_slip_tangential: bool = False

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ConfigurationError(f"Tipo de contorno desconhecido: {self.kind}")
        if self.kind == 'inflow' and self.velocity is None:
            raise ConfigurationError("Contorno de entrada exige um perfil de velocidade")

    def velocity_at(self, x, y, t: float) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        if self.velocity is None:
            return np.zeros(shape), np.zeros(shape)
        u, v = self.velocity(x, y, t)
        return np.broadcast_to(u, shape).astype(float), np.broadcast_to(v, shape).astype(float)

    def pressure_at(self, t: float) -> float:
        stress = self.normal_stress(t) if callable(self.normal_stress) else self.normal_stress
        return -float(stress)


def periodic_bc() -> Dict[str, BoundaryCondition]:
    return {side: BoundaryCondition('periodic') for side in SIDES}


@dataclass(frozen=True)
class GridSpec:
    origin: Tuple[float, float]
    extent: Tuple[float, float]
    cells: Tuple[int, int]
    ghost: int = 4
    bc: Dict[str, BoundaryCondition] = field(default_factory=periodic_bc)

    def __post_init__(self):
        nx, ny = self.cells
        if nx < 2 or ny < 2:
            raise ConfigurationError(f"Grade muito pequena: {self.cells}")
        hx = self.extent[0] / nx
        hy = self.extent[1] / ny
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise ConfigurationError(f"Células não quadradas: hx={hx}, hy={hy}")
        if self.ghost < 1 or self.ghost > min(nx, ny):
            raise ConfigurationError(f"Largura fantasma inválida: {self.ghost}")
        missing = [side for side in SIDES if side not in self.bc]
        if missing:
            raise ConfigurationError(f"Contornos ausentes: {missing}")
        for low, high in AXIS_SIDES.values():
            if (self.bc[low].kind == 'periodic') != (self.bc[high].kind == 'periodic'):
                raise ConfigurationError(f"Lados periódicos devem vir em pares ({low}/{high})")

    @classmethod
    def box(cls, n: int, length: float = 1.0, ghost: int = 4) -> 'GridSpec':
        """Caixa quadrada totalmente periódica."""
        return cls((0.0, 0.0), (length, length), (n, n), ghost)

    @property
    def h(self) -> float:
        return self.extent[0] / self.cells[0]

    @property
    def periodic(self) -> Tuple[bool, bool]:
        return (self.bc['left'].kind == 'periodic', self.bc['bottom'].kind == 'periodic')

    @property
    def fully_periodic(self) -> bool:
        return all(self.periodic)

    def face_counts(self, component: int) -> Tuple[int, int]:
        nx, ny = self.cells
        if component == 0:
            return (nx if self.periodic[0] else nx + 1, ny)
        return (nx, ny if self.periodic[1] else ny + 1)

    def padded_shape(self, name: str) -> Tuple[int, int]:
        g = self.ghost
        if name == 'p':
            counts = self.cells
        else:
            counts = self.face_counts(0 if name == 'u' else 1)
        return (counts[0] + 2 * g, counts[1] + 2 * g)

    def pressure_kinds(self) -> Dict[str, str]:
        kinds = {}
        for side in SIDES:
            kind = self.bc[side].kind
            if kind == 'periodic':
                kinds[side] = 'periodic'
            elif kind == 'traction':
                kinds[side] = 'dirichlet'
            else:
                kinds[side] = 'neumann'
        return kinds

    def fixed_face_mask(self, component: int) -> np.ndarray:
        """Faces normais de fronteira com velocidade prescrita (parede/entrada)."""
        mask = np.zeros(self.face_counts(component), dtype=bool)
        axis = component
        low, high = AXIS_SIDES[axis]
        view = np.moveaxis(mask, axis, 0)
        if self.bc[low].kind in ('wall', 'inflow'):
            view[0] = True
        if self.bc[high].kind in ('wall', 'inflow'):
            view[-1] = True
        return mask

    def coordinates(self, component: int, axis: int, padded: bool = True) -> np.ndarray:
        """Coordenadas ao longo de `axis` para a componente (0=u, 1=v, 2=p)."""
        stagger = 0.0 if axis == component else 0.5
        if component == 2:
            count = self.cells[axis]
        else:
            count = self.face_counts(component)[axis]
        g = self.ghost if padded else 0
        idx = np.arange(count + 2 * g) - g
        return self.origin[axis] + (idx + stagger) * self.h

    def cache_key(self) -> tuple:
        kinds = tuple(self.pressure_kinds()[side] for side in SIDES)
        return (tuple(self.origin), tuple(self.extent), tuple(self.cells), kinds)


@dataclass
class StaggeredField:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    ghost: int

    @classmethod
    def zeros(cls, spec: GridSpec) -> 'StaggeredField':
        return cls(
            np.zeros(spec.padded_shape('u')),
            np.zeros(spec.padded_shape('v')),
            np.zeros(spec.padded_shape('p')),
            spec.ghost,
        )

    def interior(self, name: str) -> np.ndarray:
        g = self.ghost
        return getattr(self, name)[g:-g, g:-g]

    def copy(self) -> 'StaggeredField':
        return StaggeredField(self.u.copy(), self.v.copy(), self.p.copy(), self.ghost)


# ---------------------------------------------------------------------------
# Preenchimento das camadas fantasma
# ---------------------------------------------------------------------------

def _fill_velocity(full: np.ndarray, component: int, spec: GridSpec, t: float,
                   homogeneous: bool) -> None:
    g = spec.ghost
    for axis in (0, 1):
        n = full.shape[axis] - 2 * g
        view = np.moveaxis(full, axis, 0)
        if spec.periodic[axis]:
            view[:g] = view[n:n + g]
            view[g + n:] = view[g:2 * g]
            continue
        other = 1 - axis
        along = spec.coordinates(component, other)
        normal = axis == component
        for side, is_low in zip(AXIS_SIDES[axis], (True, False)):
            bc = spec.bc[side]
            if bc.kind == 'traction' and (normal or not bc.no_slip_tangential):
                if is_low:
                    view[:g] = view[g]
                else:
                    view[g + n:] = view[g + n - 1]
                continue
            if homogeneous:
                value = np.zeros_like(along)
            else:
                wall = spec.origin[axis] + (0.0 if is_low else spec.extent[axis])
                xy = (wall, along) if axis == 0 else (along, wall)
                value = bc.velocity_at(xy[0], xy[1], t)[component]
            if normal:
                b = g if is_low else g + n - 1
                view[b] = value
                step = -1 if is_low else 1
                for k in range(1, g + 1):
                    view[b + step * k] = 2.0 * value - view[b - step * k]
            else:
                for k in range(1, g + 1):
                    if is_low:
                        view[g - k] = 2.0 * value - view[g + k - 1]
                    else:
                        view[g + n - 1 + k] = 2.0 * value - view[g + n - k]


def _fill_pressure(full: np.ndarray, spec: GridSpec, t: float, homogeneous: bool) -> None:
    g = spec.ghost
    for axis in (0, 1):
        n = full.shape[axis] - 2 * g
        view = np.moveaxis(full, axis, 0)
        if spec.periodic[axis]:
            view[:g] = view[n:n + g]
            view[g + n:] = view[g:2 * g]
            continue
        for side, is_low in zip(AXIS_SIDES[axis], (True, False)):
            bc = spec.bc[side]
            # Dirichlet (tração): p_ghost = 2 p_b - p_espelho; Neumann: p_ghost = p_espelho
            if bc.kind == 'traction':
                offset = 0.0 if homogeneous else 2.0 * bc.pressure_at(t)
                sign = -1.0
            else:
                offset, sign = 0.0, 1.0
            for k in range(1, g + 1):
                if is_low:
                    view[g - k] = offset + sign * view[g + k - 1]
                else:
                    view[g + n - 1 + k] = offset + sign * view[g + n - k]


def fill_ghosts(f: StaggeredField, spec: GridSpec, t: float = 0.0,
                homogeneous: bool = False) -> StaggeredField:
    """Impõe as condições de contorno nas camadas fantasma (e nas faces prescritas)."""
    _fill_velocity(f.u, 0, spec, t, homogeneous)
    _fill_velocity(f.v, 1, spec, t, homogeneous)
    _fill_pressure(f.p, spec, t, homogeneous)
    return f


def pad_faces(values: np.ndarray, component: int, spec: GridSpec, t: float = 0.0,
              homogeneous: bool = True) -> np.ndarray:
    g = spec.ghost
    full = np.zeros(spec.padded_shape('u' if component == 0 else 'v'))
    full[g:-g, g:-g] = values
    _fill_velocity(full, component, spec, t, homogeneous)
    return full


def _fold_velocity(full: np.ndarray, component: int, spec: GridSpec) -> None:
    # transposta exata de _fill_velocity homogêneo: eixos em ordem inversa
    g = spec.ghost
    for axis in (1, 0):
        n = full.shape[axis] - 2 * g
        view = np.moveaxis(full, axis, 0)
        if spec.periodic[axis]:
            view[n:n + g] += view[:g]
            view[g:2 * g] += view[g + n:]
            view[:g] = 0.0
            view[g + n:] = 0.0
            continue
        normal = axis == component
        for side, is_low in zip(AXIS_SIDES[axis], (True, False)):
            bc = spec.bc[side]
            if bc.kind == 'traction' and (normal or not bc.no_slip_tangential):
                if is_low:
                    view[g] += view[:g].sum(axis=0)
                    view[:g] = 0.0
                else:
                    view[g + n - 1] += view[g + n:].sum(axis=0)
                    view[g + n:] = 0.0
                continue
            if normal:
                b = g if is_low else g + n - 1
                step = -1 if is_low else 1
                for k in range(1, g + 1):
                    view[b - step * k] -= view[b + step * k]
                    view[b + step * k] = 0.0
                view[b] = 0.0
            else:
                for k in range(1, g + 1):
                    if is_low:
                        view[g + k - 1] -= view[g - k]
                        view[g - k] = 0.0
                    else:
                        view[g + n - k] -= view[g + n - 1 + k]
                        view[g + n - 1 + k] = 0.0


def fold_faces(full: np.ndarray, component: int, spec: GridSpec) -> np.ndarray:
    """Devolve ao interior o que caiu nas camadas fantasma (adjunto de pad_faces homogêneo).

    Faces de contorno com velocidade prescrita recebem zero; reflexões de parede
    entram com o sinal da condição de contorno.
    """
    g = spec.ghost
    work = full.copy()
    _fold_velocity(work, component, spec)
    return work[g:-g, g:-g].copy()


def pad_cells(values: np.ndarray, spec: GridSpec, t: float = 0.0,
              homogeneous: bool = True) -> np.ndarray:
    g = spec.ghost
    full = np.zeros(spec.padded_shape('p'))
    full[g:-g, g:-g] = values
    _fill_pressure(full, spec, t, homogeneous)
    return full


# ---------------------------------------------------------------------------
# Operadores discretos
# ---------------------------------------------------------------------------

def _window(full: np.ndarray, g: int, shape: Tuple[int, int], di: int = 0, dj: int = 0) -> np.ndarray:
    return full[g + di:g + di + shape[0], g + dj:g + dj + shape[1]]


def divergence(f: StaggeredField, spec: GridSpec) -> np.ndarray:
    """D = (u_{i+1} - u_i)/h + (v_{j+1} - v_j)/h nos centros das células."""
    g, h = spec.ghost, spec.h
    shape = spec.cells
    du = _window(f.u, g, shape, 1, 0) - _window(f.u, g, shape)
    dv = _window(f.v, g, shape, 0, 1) - _window(f.v, g, shape)
    return (du + dv) / h


def gradient(p_full: np.ndarray, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    g, h = spec.ghost, spec.h
    su = spec.face_counts(0)
    sv = spec.face_counts(1)
    gx = (_window(p_full, g, su) - _window(p_full, g, su, -1, 0)) / h
    gy = (_window(p_full, g, sv) - _window(p_full, g, sv, 0, -1)) / h
    return gx, gy


def _five_point(full: np.ndarray, g: int, shape: Tuple[int, int], h: float) -> np.ndarray:
    centre = _window(full, g, shape)
    return (_window(full, g, shape, 1, 0) + _window(full, g, shape, -1, 0)
            + _window(full, g, shape, 0, 1) + _window(full, g, shape, 0, -1)
            - 4.0 * centre) / (h * h)


def laplacian(p: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Laplaciano de 5 pontos de um campo centrado com as regras de contorno da pressão."""
    return _five_point(pad_cells(p, spec), spec.ghost, spec.cells, spec.h)


def velocity_laplacian(f: StaggeredField, spec: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    g, h = spec.ghost, spec.h
    return (_five_point(f.u, g, spec.face_counts(0), h),
            _five_point(f.v, g, spec.face_counts(1), h))


def advection(f: StaggeredField, spec: GridSpec, form: str = 'conservative') -> Tuple[np.ndarray, np.ndarray]:
    """Termo convectivo centrado de segunda ordem nas faces.

    `conservative` usa fluxos (uu)_x + (vu)_y e conserva o momento em domínios
    periódicos; `advective` usa u u_x + v u_y.
    """
    g, h = spec.ghost, spec.h
    su, sv = spec.face_counts(0), spec.face_counts(1)
    U, V = f.u, f.v

    def uw(di, dj):
        return _window(U, g, su, di, dj)

    def vw_u(di, dj):
        return _window(V, g, su, di, dj)

    def vw(di, dj):
        return _window(V, g, sv, di, dj)

    def uw_v(di, dj):
        return _window(U, g, sv, di, dj)

    if form == 'conservative':
        ue = 0.5 * (uw(0, 0) + uw(1, 0))
        uwest = 0.5 * (uw(-1, 0) + uw(0, 0))
        un = 0.5 * (uw(0, 0) + uw(0, 1))
        us = 0.5 * (uw(0, -1) + uw(0, 0))
        vn = 0.5 * (vw_u(-1, 1) + vw_u(0, 1))
        vs = 0.5 * (vw_u(-1, 0) + vw_u(0, 0))
        nu = (ue * ue - uwest * uwest) / h + (vn * un - vs * us) / h

        vn_c = 0.5 * (vw(0, 0) + vw(0, 1))
        vs_c = 0.5 * (vw(0, -1) + vw(0, 0))
        ve = 0.5 * (vw(0, 0) + vw(1, 0))
        vwest = 0.5 * (vw(-1, 0) + vw(0, 0))
        ue_n = 0.5 * (uw_v(1, -1) + uw_v(1, 0))
        uw_n = 0.5 * (uw_v(0, -1) + uw_v(0, 0))
        nv = (ue_n * ve - uw_n * vwest) / h + (vn_c * vn_c - vs_c * vs_c) / h
        return nu, nv
    if form == 'advective':
        vbar = 0.25 * (vw_u(-1, 0) + vw_u(0, 0) + vw_u(-1, 1) + vw_u(0, 1))
        nu = uw(0, 0) * (uw(1, 0) - uw(-1, 0)) / (2 * h) + vbar * (uw(0, 1) - uw(0, -1)) / (2 * h)
        ubar = 0.25 * (uw_v(0, -1) + uw_v(1, -1) + uw_v(0, 0) + uw_v(1, 0))
        nv = ubar * (vw(1, 0) - vw(-1, 0)) / (2 * h) + vw(0, 0) * (vw(0, 1) - vw(0, -1)) / (2 * h)
        return nu, nv
    raise ConfigurationError(f"Forma convectiva desconhecida: {form}")


def vorticity(f: StaggeredField, spec: GridSpec) -> np.ndarray:
    """Vorticidade nos nós (i h, j h), i = 0..Nx, j = 0..Ny."""
    g, h = spec.ghost, spec.h
    shape = (spec.cells[0] + 1, spec.cells[1] + 1)
    dvdx = _window(f.v, g, shape) - _window(f.v, g, shape, -1, 0)
    dudy = _window(f.u, g, shape) - _window(f.u, g, shape, 0, -1)
    return (dvdx - dudy) / h


def max_speed(f: StaggeredField) -> float:
    return float(max(np.max(np.abs(f.interior('u'))), np.max(np.abs(f.interior('v')))))


def make_divfree(seed: int, spec: GridSpec, psi: Optional[np.ndarray] = None) -> StaggeredField:
    """Campo discretamente solenoidal u = d_y psi / h, v = -d_x psi / h.

    `psi` vive nos nós (i h, j h); sem ele, é sorteado de `seed`.
    """
    if not spec.fully_periodic:
        raise UnsupportedFixtureError("make_divfree exige grade totalmente periódica")
    if psi is None:
        psi = np.random.default_rng(seed).standard_normal(spec.cells)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != spec.cells:
        psi = np.broadcast_to(psi, spec.cells).astype(float)
    h = spec.h
    f = StaggeredField.zeros(spec)
    f.interior('u')[...] = (np.roll(psi, -1, axis=1) - psi) / h
    f.interior('v')[...] = -(np.roll(psi, -1, axis=0) - psi) / h
    return fill_ghosts(f, spec)


# ---------------------------------------------------------------------------
# Solver de Poisson: CG precondicionado por ciclo V geométrico, FFT se periódico
# ---------------------------------------------------------------------------

MAX_DENSE_COARSE = 1024


class _Level:
    """Operador A = -Laplaciano num nível da hierarquia."""

    def __init__(self, nx: int, ny: int, h: float, kinds: Dict[str, str]):
        self.nx, self.ny, self.h = nx, ny, h
        self.kinds = kinds
        diag = np.full((nx, ny), 4.0)
        for side, sl in (('left', (0, slice(None))), ('right', (-1, slice(None))),
                         ('bottom', (slice(None), 0)), ('top', (slice(None), -1))):
            if kinds[side] == 'neumann':
                diag[sl] -= 1.0
            elif kinds[side] == 'dirichlet':
                diag[sl] += 1.0
        self.diag = diag / (h * h)

    def _pad(self, x: np.ndarray) -> np.ndarray:
        out = np.empty((self.nx + 2, self.ny + 2))
        out[1:-1, 1:-1] = x
        k = self.kinds
        if k['left'] == 'periodic':
            out[0, 1:-1] = x[-1]
            out[-1, 1:-1] = x[0]
        else:
            out[0, 1:-1] = x[0] if k['left'] == 'neumann' else -x[0]
            out[-1, 1:-1] = x[-1] if k['right'] == 'neumann' else -x[-1]
        if k['bottom'] == 'periodic':
            out[1:-1, 0] = x[:, -1]
            out[1:-1, -1] = x[:, 0]
        else:
            out[1:-1, 0] = x[:, 0] if k['bottom'] == 'neumann' else -x[:, 0]
            out[1:-1, -1] = x[:, -1] if k['top'] == 'neumann' else -x[:, -1]
        return out

    def apply(self, x: np.ndarray) -> np.ndarray:
        q = self._pad(x)
        return (4.0 * x - q[2:, 1:-1] - q[:-2, 1:-1] - q[1:-1, 2:] - q[1:-1, :-2]) / (self.h * self.h)


class PressureSolver:
    """Resolve Lap(p) = rhs com as regras de contorno da pressão de `spec`."""

    def __init__(self, spec: GridSpec, rtol: float = DEFAULT_POISSON_RTOL,
                 max_iter: int = DEFAULT_POISSON_MAX_ITER, method: str = 'auto',
                 smoothing_steps: int = 2, omega: float = 0.8):
        self.spec = spec
        self.rtol = rtol
        self.max_iter = max_iter
        self.smoothing_steps = smoothing_steps
        self.omega = omega
        self.kinds = spec.pressure_kinds()
        self.singular = 'dirichlet' not in self.kinds.values()
        if method not in ('auto', 'fft', 'multigrid'):
            raise ConfigurationError(f"Método de Poisson desconhecido: {method}")
        if method == 'fft' and not spec.fully_periodic:
            raise ConfigurationError("O caminho FFT exige grade totalmente periódica")
        self.use_fft = spec.fully_periodic and method != 'multigrid'
        self.last_mean_shift = 0.0
        self.last_residuals: List[float] = []
        self.last_iterations = 0
        if self.use_fft:
            self._setup_fft()
        else:
            self._setup_multigrid()

    def _setup_fft(self):
        nx, ny = self.spec.cells
        h = self.spec.h
        kx = 2.0 * np.cos(2.0 * np.pi * np.arange(nx) / nx) - 2.0
        ky = 2.0 * np.cos(2.0 * np.pi * np.arange(ny) / ny) - 2.0
        eig = (kx[:, None] + ky[None, :]) / (h * h)
        eig[0, 0] = 1.0
        self._eigenvalues = eig

    def _setup_multigrid(self):
        nx, ny = self.spec.cells
        h = self.spec.h
        self.levels = [_Level(nx, ny, h, self.kinds)]
        while nx % 2 == 0 and ny % 2 == 0 and min(nx, ny) >= 8 and nx * ny > 64:
            nx, ny, h = nx // 2, ny // 2, 2.0 * h
            self.levels.append(_Level(nx, ny, h, self.kinds))
        coarse = self.levels[-1]
        size = coarse.nx * coarse.ny
        self._coarse_inverse = None
        if size <= MAX_DENSE_COARSE:
            eye = np.eye(size)
            dense = np.column_stack([
                coarse.apply(eye[:, k].reshape(coarse.nx, coarse.ny)).ravel() for k in range(size)
            ])
            self._coarse_inverse = np.linalg.pinv(dense) if self.singular else np.linalg.inv(dense)
        logger.debug(f"Hierarquia multigrid: {[(lv.nx, lv.ny) for lv in self.levels]}")

    def _smooth(self, level: _Level, x: np.ndarray, b: np.ndarray, sweeps: int) -> np.ndarray:
        for _ in range(sweeps):
            x = x + self.omega * (b - level.apply(x)) / level.diag
        return x

    def _vcycle(self, index: int, b: np.ndarray) -> np.ndarray:
        level = self.levels[index]
        if index == len(self.levels) - 1:
            if self._coarse_inverse is not None:
                return (self._coarse_inverse @ b.ravel()).reshape(b.shape)
            return self._smooth(level, np.zeros_like(b), b, 20)
        x = self._smooth(level, np.zeros_like(b), b, self.smoothing_steps)
        r = b - level.apply(x)
        coarse_r = 0.25 * (r[0::2, 0::2] + r[1::2, 0::2] + r[0::2, 1::2] + r[1::2, 1::2])
        e = self._vcycle(index + 1, coarse_r)
        x = x + np.repeat(np.repeat(e, 2, axis=0), 2, axis=1)
        return self._smooth(level, x, b, self.smoothing_steps)

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        shape = self.spec.cells
        b = r.reshape(shape)
        if self.singular:
            b = b - b.mean()
        z = self._vcycle(0, b)
        if self.singular:
            z = z - z.mean()
        return z.ravel()

    def solve(self, rhs: np.ndarray, x0: Optional[np.ndarray] = None) -> np.ndarray:
        b = np.array(rhs, dtype=float)
        self.last_mean_shift = 0.0
        if self.singular:
            self.last_mean_shift = float(b.mean())
            b = b - self.last_mean_shift
            if abs(self.last_mean_shift) > 1e-12 * (np.max(np.abs(rhs)) + 1e-300):
                logger.debug(f"Média do lado direito removida: {self.last_mean_shift:.3e}")
        if self.use_fft:
            x = np.real(np.fft.ifft2(np.fft.fft2(b) / self._eigenvalues))
            self.last_iterations = 0
            self.last_residuals = []
        else:
            x = self._cg(b, x0)
        if self.singular:
            x = x - x.mean()
        return x

    def _cg(self, b: np.ndarray, x0: Optional[np.ndarray]) -> np.ndarray:
        shape = self.spec.cells
        size = shape[0] * shape[1]
        fine = self.levels[0]
        bnorm = float(np.linalg.norm(b))
        self.last_residuals = []
        self.last_iterations = 0
        if bnorm == 0.0:
            return np.zeros(shape)
        # A = -Lap é semidefinido positivo
        operator = LinearOperator((size, size), matvec=lambda v: fine.apply(v.reshape(shape)).ravel(),
                                  dtype=float)
        preconditioner = LinearOperator((size, size), matvec=self._precondition, dtype=float)
        target = -b.ravel()
        residuals = self.last_residuals

        def record(xk):
            residuals.append(float(np.linalg.norm(target - operator.matvec(xk))) / bnorm)

        start = None if x0 is None else np.asarray(x0, dtype=float).ravel()
        x, info = cg(operator, target, x0=start, rtol=self.rtol, atol=0.0,
                     maxiter=self.max_iter, M=preconditioner, callback=record)
        self.last_iterations = len(residuals)
        if info != 0:
            logger.error(f"Solver de pressão não convergiu em {self.max_iter} iterações")
            raise SolverFailureError("Solver de pressão não convergiu", residuals)
        logger.debug(f"CG convergiu em {self.last_iterations} iterações")
        return x.reshape(shape)


_SOLVER_CACHE: Dict[tuple, PressureSolver] = {}


def pressure_solve(rhs: np.ndarray, spec: GridSpec, rtol: float = DEFAULT_POISSON_RTOL,
                   max_iter: int = DEFAULT_POISSON_MAX_ITER, method: str = 'auto') -> np.ndarray:
    """Resolve o Laplaciano de 5 pontos = rhs (média nula em problemas sem Dirichlet)."""
    key = spec.cache_key() + (rtol, max_iter, method)
    solver = _SOLVER_CACHE.get(key)
    if solver is None:
        solver = PressureSolver(spec, rtol=rtol, max_iter=max_iter, method=method)
        _SOLVER_CACHE[key] = solver
    return solver.solve(rhs)


# ---------------------------------------------------------------------------
# Dump de campos
# ---------------------------------------------------------------------------

FIELD_FORMAT = 'ifed-field'
FIELD_LAYOUT = {
    'u': 'faces (i*h, (j+1/2)*h), padded by ghost on each side',
    'v': 'faces ((i+1/2)*h, j*h), padded by ghost on each side',
    'p': 'cells ((i+1/2)*h, (j+1/2)*h), padded by ghost on each side',
}


def dump_field(f: StaggeredField, spec: GridSpec, path, time: float = 0.0) -> str:
    """Grava o campo em .npz com cabeçalho JSON (dimensões, h, origem, layout)."""
    header = {
        'format': FIELD_FORMAT,
        'version': 1,
        'cells': list(spec.cells),
        'h': spec.h,
        'origin': list(spec.origin),
        'extent': list(spec.extent),
        'ghost': spec.ghost,
        'periodic': list(spec.periodic),
        'time': time,
        'layout': FIELD_LAYOUT,
    }
    path = str(path)
    with open(path, 'wb') as handle:
        np.savez(handle, header=np.array(json.dumps(header, sort_keys=True)), u=f.u, v=f.v, p=f.p)
    return path


def load_field(path) -> Tuple[StaggeredField, dict]:
    with np.load(str(path), allow_pickle=False) as data:
        header = json.loads(str(data['header']))
        if header.get('format') != FIELD_FORMAT:
            raise ConfigurationError(f"Arquivo não é um dump de campo: {path}")
        f = StaggeredField(data['u'].copy(), data['v'].copy(), data['p'].copy(), int(header['ghost']))
    return f, header
