"""
Kernels unidimensionais e funções delta regularizadas 2D.

Famílias suportadas:
- IB (Peskin): IB3 (Roma), IB4, IB5 e IB6 (Bao et al.)
- BS (B-splines centradas): BS1 (caixa) até BS6
- CBS (compostas): BS_{n+1} na direção da própria componente, BS_n na outra

Os kernels são avaliados sob demanda, sem tabelas. Nos pontos de quebra vale a
convenção contínua à direita (valor e derivada laterais pela direita).
"""

import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from errors import ConfigurationError, StencilOverflowError

logger = logging.getLogger(__name__)

SUPPORTED_POINTS: Dict[str, Tuple[int, ...]] = {
    'IB': (3, 4, 5, 6),
    'BS': (1, 2, 3, 4, 5, 6),
}

KERNEL_PATTERN = re.compile(r'^(?:(IB|BS)([1-6])|CBS([2-6])([1-5]))$')


@dataclass(frozen=True)
class Kernel1D:
    family: str
    points: int

    def __post_init__(self):
        if self.family not in SUPPORTED_POINTS:
            raise ConfigurationError(f"Família de kernel desconhecida: {self.family}")
        if self.points not in SUPPORTED_POINTS[self.family]:
            raise ConfigurationError(
                f"Combinação não suportada: {self.family}{self.points} "
                f"(suportados: {self.family} {SUPPORTED_POINTS[self.family]})"
            )

    @property
    def name(self) -> str:
        return f"{self.family}{self.points}"

    @property
    def half_width(self) -> float:
        return self.points / 2.0

    @property
    def differentiable(self) -> bool:
        return not (self.family == 'BS' and self.points == 1)

    def __call__(self, r):
        return eval_kernel1d(self, r)


# ---------------------------------------------------------------------------
# Família B-spline
# ---------------------------------------------------------------------------

def _box(r: np.ndarray) -> np.ndarray:
    # Caixa em [-1/2, 1/2): contínua à direita nas duas quebras
    return np.where((r >= -0.5) & (r < 0.5), 1.0, 0.0)


def _bspline(points: int, r: np.ndarray) -> np.ndarray:
    """B-spline centrada de suporte `points` pela soma de potências truncadas em |r|."""
    if points == 1:
        return _box(r)
    a = np.abs(r)
    degree = points - 1
    out = np.zeros_like(a)
    for k in range(points + 1):
        t = points / 2.0 - k - a
        out += (-1) ** k * math.comb(points, k) * np.where(t > 0.0, t, 0.0) ** degree
    return out / math.factorial(degree)


def _bspline_deriv(points: int, r: np.ndarray) -> np.ndarray:
    # phi_n'(r) = phi_{n-1}(r + 1/2) - phi_{n-1}(r - 1/2)
    return _bspline(points - 1, r + 0.5) - _bspline(points - 1, r - 0.5)


# ---------------------------------------------------------------------------
# Família IB
# ---------------------------------------------------------------------------

def _pieces(r: np.ndarray, shift: float, right: bool):
    """Índice da peça e sinal para avaliação em a = |r|.

    Para r < 0 o lado direito de r corresponde ao lado esquerdo de |r|, então a
    peça escolhida é a de baixo quando |r| cai exatamente numa quebra.
    """
    a = np.abs(r)
    k = np.floor(a + shift)
    if not right:
        k = np.where(r >= 0.0, k, np.ceil(a + shift) - 1.0)
    sign = np.where(r >= 0.0, 1.0, -1.0)
    return a, k.astype(int), sign


def _safe_sqrt(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(x, 0.0))


def _ib3(r: np.ndarray, deriv: bool) -> np.ndarray:
    a, k, sign = _pieces(r, 0.5, right=not deriv)
    with np.errstate(divide='ignore', invalid='ignore'):
        inner_root = _safe_sqrt(1.0 - 3.0 * a * a)
        outer_root = _safe_sqrt(1.0 - 3.0 * (1.0 - a) ** 2)
        if not deriv:
            inner = (1.0 + inner_root) / 3.0
            outer = (5.0 - 3.0 * a - outer_root) / 6.0
        else:
            inner = -a / inner_root
            outer = (-3.0 - 3.0 * (1.0 - a) / outer_root) / 6.0
    out = np.where(k == 0, inner, np.where(k == 1, outer, 0.0))
    out = np.where(a <= 1.5 if deriv else a < 1.5, out, 0.0)
    return sign * out if deriv else out


def _ib4(r: np.ndarray, deriv: bool) -> np.ndarray:
    a, k, sign = _pieces(r, 0.0, right=not deriv)
    with np.errstate(divide='ignore', invalid='ignore'):
        inner_root = _safe_sqrt(1.0 + 4.0 * a - 4.0 * a * a)
        outer_root = _safe_sqrt(-7.0 + 12.0 * a - 4.0 * a * a)
        if not deriv:
            inner = (3.0 - 2.0 * a + inner_root) / 8.0
            outer = (5.0 - 2.0 * a - outer_root) / 8.0
        else:
            inner = (-2.0 + (2.0 - 4.0 * a) / inner_root) / 8.0
            outer = (-2.0 - (6.0 - 4.0 * a) / outer_root) / 8.0
    out = np.where(k == 0, inner, np.where(k == 1, outer, 0.0))
    out = np.where(a <= 2.0 if deriv else a < 2.0, out, 0.0)
    return sign * out if deriv else out


class _MomentKernel:
    """Kernels IB de suporte largo fechados por uma equação quadrática.

    Os valores phi(x + k) nos pontos do suporte são afins em p = phi(x + k_min)
    (condições lineares de soma, momentos e paridade); a condição de soma dos
    quadrados constante fixa p pela raiz da quadrática alpha p^2 + beta p + gamma = 0.
    """

    def __init__(self, coeffs, offsets, shift, x_end, builder):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.offsets = list(offsets)
        self.shift = shift
        self.alpha = float(np.sum(self.coeffs ** 2))
        self._builder = builder
        b_end, _ = builder(np.asarray(x_end, dtype=float))
        self.sum_squares = float(sum(float(b) ** 2 for b in b_end))

    def _solve(self, x: np.ndarray):
        b, db = self._builder(x)
        beta = 2.0 * sum(c * bk for c, bk in zip(self.coeffs, b))
        gamma = sum(bk * bk for bk in b) - self.sum_squares
        root = _safe_sqrt(beta * beta - 4.0 * self.alpha * gamma)
        p = (-beta + root) / (2.0 * self.alpha)
        dbeta = 2.0 * sum(c * dbk for c, dbk in zip(self.coeffs, db))
        dgamma = 2.0 * sum(bk * dbk for bk, dbk in zip(b, db))
        with np.errstate(divide='ignore', invalid='ignore'):
            dp = -(dbeta * p + dgamma) / root
        return p, dp, b, db

    def evaluate(self, r: np.ndarray, deriv: bool) -> np.ndarray:
        a, k, sign = _pieces(r, self.shift, right=not deriv)
        x = a - k
        p, dp, b, db = self._solve(x)
        out = np.zeros_like(a)
        for piece in range(len(self.offsets)):
            offset = self.offsets[piece]
            if offset < 0:
                continue
            c = self.coeffs[piece]
            value = c * dp + db[piece] if deriv else c * p + b[piece]
            out = np.where(k == offset, value, out)
        half = len(self.offsets) / 2.0
        out = np.where(a <= half if deriv else a < half, out, 0.0)
        return sign * out if deriv else out


_IB6_K = 59.0 / 60.0 - math.sqrt(29.0) / 20.0


def _ib6_terms(x: np.ndarray):
    K = _IB6_K
    x2, x3 = x * x, x * x * x
    zero = np.zeros_like(x)
    b = [
        zero,
        -1.0 / 16.0 + (K + x2) / 8.0 + (3.0 * K - 1.0) * x / 12.0 + x3 / 12.0,
        0.25 + (4.0 - 3.0 * K) * x / 6.0 - x3 / 6.0,
        0.625 - (K + x2) / 4.0,
        0.25 - (4.0 - 3.0 * K) * x / 6.0 + x3 / 6.0,
        -1.0 / 16.0 + (K + x2) / 8.0 - (3.0 * K - 1.0) * x / 12.0 - x3 / 12.0,
    ]
    db = [
        zero,
        x / 4.0 + (3.0 * K - 1.0) / 12.0 + x2 / 4.0,
        (4.0 - 3.0 * K) / 6.0 - x2 / 2.0,
        -x / 2.0,
        -(4.0 - 3.0 * K) / 6.0 + x2 / 2.0,
        x / 4.0 - (3.0 * K - 1.0) / 12.0 - x2 / 4.0,
    ]
    return b, db


_IB5_K = (38.0 - math.sqrt(69.0)) / 60.0


def _ib5_terms(x: np.ndarray):
    K = _IB5_K
    x2, x3 = x * x, x * x * x
    s = x * (1.0 - 3.0 * K) - x3
    ds = 1.0 - 3.0 * K - 3.0 * x2
    q = K + x2 - 2.0 * s / 3.0
    dq = 2.0 * x - 2.0 * ds / 3.0
    t = (-4.0 * x + 3.0 * K * x + x3) / 3.0
    dt = (-4.0 + 3.0 * K + 3.0 * x2) / 3.0
    zero = np.zeros_like(x)
    b = [zero, (q - t) / 2.0, 1.0 - K - x2 + s / 2.0, (q + t) / 2.0, s / 6.0]
    db = [zero, (dq - dt) / 2.0, -2.0 * x + ds / 2.0, (dq + dt) / 2.0, ds / 6.0]
    return b, db


_IB6 = _MomentKernel((1, -3, 2, 2, -3, 1), (-3, -2, -1, 0, 1, 2), 0.0, 0.0, _ib6_terms)
_IB5 = _MomentKernel((1, -4, 6, -4, 1), (-2, -1, 0, 1, 2), 0.5, -0.5, _ib5_terms)


def _ib(points: int, r: np.ndarray, deriv: bool) -> np.ndarray:
    if points == 3:
        return _ib3(r, deriv)
    if points == 4:
        return _ib4(r, deriv)
    if points == 5:
        return _IB5.evaluate(r, deriv)
    return _IB6.evaluate(r, deriv)


def _output(values: np.ndarray, scalar: bool):
    return float(values) if scalar else values


def eval_kernel1d(k: Kernel1D, r):
    """Avalia phi(r); zero fora do suporte [-points/2, points/2]."""
    arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("Deslocamento não finito")
    if k.family == 'BS':
        values = _bspline(k.points, arr)
    else:
        values = _ib(k.points, arr, deriv=False)
    return _output(values, arr.ndim == 0)


def eval_kernel1d_deriv(k: Kernel1D, r):
    """Avalia dphi/dr com o valor lateral pela direita nos pontos de quebra."""
    if not k.differentiable:
        raise ConfigurationError(f"{k.name} não possui derivada utilizável")
    arr = np.asarray(r, dtype=float)
    if k.family == 'BS':
        values = _bspline_deriv(k.points, arr)
    else:
        values = _ib(k.points, arr, deriv=True)
    return _output(values, arr.ndim == 0)


# ---------------------------------------------------------------------------
# Delta regularizada 2D
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaKernel:
    """Delta 2D por produto tensorial, isotrópica ou composta.

    No modo composto a componente d da velocidade usa `normal` ao longo do eixo d
    e `tangential` ao longo do outro eixo.
    """

    normal: Kernel1D
    tangential: Kernel1D
    h: float

    def __post_init__(self):
        if not self.h > 0.0:
            raise ConfigurationError(f"Espaçamento de grade inválido: {self.h}")
        if self.normal != self.tangential:
            if self.normal.family != 'BS' or self.tangential.family != 'BS':
                raise ConfigurationError("Kernels compostos exigem membros da família BS")
            if self.normal.points != self.tangential.points + 1:
                raise ConfigurationError(
                    f"Kernel composto exige normal = tangencial + 1 "
                    f"({self.normal.name}, {self.tangential.name})"
                )

    @classmethod
    def isotropic(cls, kernel: Kernel1D, h: float) -> 'DeltaKernel':
        return cls(kernel, kernel, h)

    @classmethod
    def composite(cls, normal: Kernel1D, tangential: Kernel1D, h: float) -> 'DeltaKernel':
        return cls(normal, tangential, h)

    @property
    def is_composite(self) -> bool:
        return self.normal != self.tangential

    @property
    def name(self) -> str:
        if self.is_composite:
            return f"CBS{self.normal.points}{self.tangential.points}"
        return self.normal.name

    @property
    def max_points(self) -> int:
        return max(self.normal.points, self.tangential.points)

    def kernel_for(self, component: int, axis: int) -> Kernel1D:
        return self.normal if axis == component else self.tangential


def parse_kernel(name: str) -> Tuple[Kernel1D, Kernel1D]:
    """Converte 'IB4', 'BS3', 'CBS32'... no par (normal, tangencial)."""
    match = KERNEL_PATTERN.match(str(name).strip().upper())
    if not match:
        raise ConfigurationError(f"Kernel inválido: {name!r}")
    family, points, normal, tangential = match.groups()
    if family:
        kernel = Kernel1D(family, int(points))
        return kernel, kernel
    normal_kernel = Kernel1D('BS', int(normal))
    tangential_kernel = Kernel1D('BS', int(tangential))
    if normal_kernel.points != tangential_kernel.points + 1:
        raise ConfigurationError(f"Kernel composto inválido: {name!r}")
    return normal_kernel, tangential_kernel


def make_delta(name: str, h: float) -> DeltaKernel:
    normal, tangential = parse_kernel(name)
    return DeltaKernel(normal, tangential, h)


def kernel_half_width(name: str) -> int:
    normal, tangential = parse_kernel(name)
    return int(math.ceil(max(normal.points, tangential.points) / 2.0))


# ---------------------------------------------------------------------------
# Estêncil
# ---------------------------------------------------------------------------

@dataclass
class StencilBatch:
    """Pesos tensoriais para P pontos e uma componente.

    `ii`/`jj` são índices lógicos das faces (já reduzidos módulo N nos eixos
    periódicos; podem invadir as camadas fantasma nos demais).
    """

    component: int
    ii: np.ndarray
    jj: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    h: float

    def weights(self) -> np.ndarray:
        return self.wx[:, :, None] * self.wy[:, None, :] / (self.h * self.h)


@dataclass
class Stencil:
    component: int
    entries: List[Tuple[Tuple[int, int], float]]

    def total(self) -> float:
        return float(sum(w for _, w in self.entries))


def _face_axis_info(spec, component: int, axis: int):
    stagger = 0.0 if axis == component else 0.5
    count = spec.face_counts(component)[axis]
    return stagger, count


def stencil_weights(delta: DeltaKernel, component: int, positions, spec,
                    derivative_axis: int = -1) -> StencilBatch:
    """Estêncil vetorizado de `positions` (P x 2) para a componente dada.

    Com `derivative_axis` >= 0 o fator daquele eixo usa dphi/dr / h.
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    h = spec.h
    per_axis = []
    for axis in (0, 1):
        kernel = delta.kernel_for(component, axis)
        stagger, count = _face_axis_info(spec, component, axis)
        xi = (pts[:, axis] - spec.origin[axis]) / h - stagger
        start = np.floor(xi - kernel.half_width).astype(int) + 1
        idx = start[:, None] + np.arange(kernel.points)[None, :]
        offsets = xi[:, None] - idx
        if axis == derivative_axis:
            w = np.asarray(eval_kernel1d_deriv(kernel, offsets)) / h
        else:
            w = np.asarray(eval_kernel1d(kernel, offsets))
        if spec.periodic[axis]:
            idx = np.mod(idx, count)
        else:
            bad = (idx[:, 0] < -spec.ghost) | (idx[:, -1] > count - 1 + spec.ghost)
            if np.any(bad):
                node = int(np.flatnonzero(bad)[0])
                raise StencilOverflowError(node, pts[node], component)
        per_axis.append((idx, w))
    (ii, wx), (jj, wy) = per_axis
    return StencilBatch(component, ii, jj, wx, wy, h)


def stencil(delta: DeltaKernel, component: int, position, spec) -> Stencil:
    """Faces dentro do suporte de um ponto, com pesos phi(dx/h) zeta(dy/h) / h^2."""
    batch = stencil_weights(delta, component, np.asarray(position, dtype=float)[None, :], spec)
    weights = batch.weights()[0]
    entries = []
    for a, i in enumerate(batch.ii[0]):
        for b, j in enumerate(batch.jj[0]):
            if weights[a, b] != 0.0:
                entries.append(((int(i), int(j)), float(weights[a, b])))
    return Stencil(component, entries)
