"""
Geradores de malhas e formato texto de malhas.

Formato (linhas iniciadas por '#' são comentários):

    ifed-mesh 1
    type quad|segment
    nodes M
    x y            (M linhas)
    elements E
    a b [c d]      (E linhas, índices base zero)
    set NAME K     (opcional, seguido de K índices em uma linha)
    edges NAME K   (opcional, seguido de K linhas "a b")
"""

import logging
from pathlib import Path
from typing import Dict, Sequence, Tuple

import numpy as np

from errors import MeshError
from lagrangian import LagrangianMesh

logger = logging.getLogger(__name__)

MESH_HEADER = 'ifed-mesh 1'
COOK_CORNERS = ((0.0, 0.0), (4.8, 4.4), (4.8, 6.0), (0.0, 4.4))


def _grid_connectivity(nx: int, ny: int) -> np.ndarray:
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    return np.stack([a, b, c, d], axis=1)


def _side_sets(nx: int, ny: int) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    nodes = {
        'bottom': idx[0, :],
        'top': idx[-1, :],
        'left': idx[:, 0],
        'right': idx[:, -1],
    }
    edges = {
        'bottom': np.stack([idx[0, :-1], idx[0, 1:]], axis=1),
        'right': np.stack([idx[:-1, -1], idx[1:, -1]], axis=1),
        'top': np.stack([idx[-1, 1:], idx[-1, :-1]], axis=1),
        'left': np.stack([idx[1:, 0], idx[:-1, 0]], axis=1),
    }
    return nodes, edges


def mapped_quad_mesh(corners: Sequence[Sequence[float]], nx: int, ny: int, name: str = '') -> LagrangianMesh:
    """Malha nx x ny obtida pelo mapa bilinear dos quatro cantos (anti-horário)."""
    if nx < 1 or ny < 1:
        raise MeshError(f"Subdivisão inválida: {nx} x {ny}")
    corners = np.asarray(corners, dtype=float)
    s = np.linspace(0.0, 1.0, nx + 1)
    r = np.linspace(0.0, 1.0, ny + 1)
    S, R = np.meshgrid(s, r)
    weights = np.stack([(1 - S) * (1 - R), S * (1 - R), S * R, (1 - S) * R], axis=-1)
    nodes = (weights @ corners).reshape(-1, 2)
    node_sets, edge_sets = _side_sets(nx, ny)
    return LagrangianMesh(nodes, _grid_connectivity(nx, ny), 'quad', node_sets, edge_sets, name)


def rectangle_mesh(origin: Sequence[float], size: Sequence[float], nx: int, ny: int,
                   name: str = 'rectangle') -> LagrangianMesh:
    x0, y0 = origin
    lx, ly = size
    corners = ((x0, y0), (x0 + lx, y0), (x0 + lx, y0 + ly), (x0, y0 + ly))
    return mapped_quad_mesh(corners, nx, ny, name)


def cook_membrane_mesh(n: int, offset: Sequence[float] = (0.0, 0.0)) -> LagrangianMesh:
    """Trapézio clássico 48 x 44/16 (cm/10) com n x n elementos, deslocado por `offset`."""
    corners = np.asarray(COOK_CORNERS) + np.asarray(offset, dtype=float)
    return mapped_quad_mesh(corners, n, n, 'cook')


def annulus_mesh(center: Sequence[float], inner_radius: float, outer_radius: float,
                 n_theta: int, n_r: int, name: str = 'annulus') -> LagrangianMesh:
    if not 0 < inner_radius < outer_radius:
        raise MeshError("Raios do anel inválidos")
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    radii = np.linspace(inner_radius, outer_radius, n_r + 1)
    R, T = np.meshgrid(radii, theta, indexing='ij')
    nodes = np.stack([center[0] + R * np.cos(T), center[1] + R * np.sin(T)], axis=-1).reshape(-1, 2)
    idx = np.arange((n_r + 1) * n_theta).reshape(n_r + 1, n_theta)
    nxt = np.roll(idx, -1, axis=1)
    elements = np.stack([idx[:-1], nxt[:-1], nxt[1:], idx[1:]], axis=-1).reshape(-1, 4)
    # (r, theta) anti-horário: inverte para manter orientação positiva
    elements = elements[:, [0, 3, 2, 1]]
    sets = {'inner': idx[0], 'outer': idx[-1]}
    return LagrangianMesh(nodes, elements, 'quad', sets, {}, name)


def circle_fiber(center: Sequence[float], radius: float, count: int,
                 name: str = 'membrane') -> LagrangianMesh:
    """Anel fechado de `count` nós igualmente espaçados."""
    if count < 3:
        raise MeshError("Fibra circular exige pelo menos 3 nós")
    theta = 2 * np.pi * np.arange(count) / count
    nodes = np.stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)], axis=1)
    idx = np.arange(count)
    return LagrangianMesh(nodes, np.stack([idx, np.roll(idx, -1)], axis=1), 'segment', {}, {}, name)


def line_fiber(start: Sequence[float], end: Sequence[float], count: int,
               name: str = 'line') -> LagrangianMesh:
    if count < 2:
        raise MeshError("Fibra aberta exige pelo menos 2 nós")
    s = np.linspace(0.0, 1.0, count)[:, None]
    nodes = (1 - s) * np.asarray(start, dtype=float) + s * np.asarray(end, dtype=float)
    idx = np.arange(count)
    return LagrangianMesh(nodes, np.stack([idx[:-1], idx[1:]], axis=1), 'segment', {}, {}, name)


def write_mesh(mesh: LagrangianMesh, path) -> Path:
    path = Path(path)
    lines = [MESH_HEADER, f'type {mesh.element_type}', f'nodes {mesh.node_count}']
    lines += [f'{x!r} {y!r}' for x, y in mesh.nodes.tolist()]
    lines.append(f'elements {len(mesh.elements)}')
    lines += [' '.join(str(i) for i in row) for row in mesh.elements.tolist()]
    for key, ids in mesh.node_sets.items():
        lines.append(f'set {key} {len(ids)}')
        lines.append(' '.join(str(i) for i in ids.tolist()))
    for key, edges in mesh.edge_sets.items():
        lines.append(f'edges {key} {len(edges)}')
        lines += [f'{a} {b}' for a, b in edges.tolist()]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    logger.info(f"Malha gravada em {path}")
    return path


def read_mesh(path, name: str = '') -> LagrangianMesh:
    path = Path(path)
    try:
        rows = [line.split() for line in path.read_text(encoding='utf-8').splitlines()]
    except OSError as e:
        raise MeshError(f"Não foi possível ler a malha {path}: {str(e)}")
    rows = [r for r in rows if r and not r[0].startswith('#')]
    cursor = 0

    def take(keyword: str):
        nonlocal cursor
        if cursor >= len(rows) or rows[cursor][0] != keyword:
            raise MeshError(f"Esperado '{keyword}' na malha {path}")
        row = rows[cursor]
        cursor += 1
        return row

    try:
        if ' '.join(take('ifed-mesh')) != MESH_HEADER:
            raise MeshError(f"Versão de malha não suportada em {path}")
        element_type = take('type')[1]
        count = int(take('nodes')[1])
        nodes = np.array(rows[cursor:cursor + count], dtype=float)
        cursor += count
        count = int(take('elements')[1])
        elements = np.array(rows[cursor:cursor + count], dtype=int)
        cursor += count
        node_sets, edge_sets = {}, {}
        while cursor < len(rows):
            keyword, key, count = rows[cursor][0], rows[cursor][1], int(rows[cursor][2])
            cursor += 1
            if keyword == 'set':
                node_sets[key] = np.array(rows[cursor] if count else [], dtype=int)
                cursor += 1 if count else 0
            elif keyword == 'edges':
                edge_sets[key] = np.array(rows[cursor:cursor + count], dtype=int).reshape(-1, 2)
                cursor += count
            else:
                raise MeshError(f"Seção desconhecida '{keyword}' na malha {path}")
    except (IndexError, ValueError) as e:
        raise MeshError(f"Malha malformada em {path}: {str(e)}")
    return LagrangianMesh(nodes, elements, element_type, node_sets, edge_sets, name or path.stem)
