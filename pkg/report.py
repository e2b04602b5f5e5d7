"""
Relatórios: CSV das séries temporais, gráficos estáticos e tabelas comparativas kernel x MFAC.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from macgrid import GridSpec, load_field, vorticity  # noqa: E402

logger = logging.getLogger(__name__)

CSV_LINE_TERMINATOR = '\r\n'

LABELS = {
    'area_change': 'ΔA / A0',
    'max_vorticity': 'max |ω| (1/s)',
    'max_speed': 'max |u| (cm/s)',
    'max_x_displacement': 'max Δx (cm)',
    'delta_y': 'ΔY (cm)',
    'delta_x': 'ΔX (cm)',
    'jacobian_error': '‖J − 1‖₂',
    'profile_error': 'erro relativo do perfil',
    'boundary_layer_width': 'camada limite (cm)',
    'flow_rate': 'vazão (cm²/s)',
    'dt': 'Δt (s)',
}


def write_series_csv(series, path) -> Path:
    """CSV RFC-4180 com 't' na primeira coluna e floats em repr de ida e volta."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = series.to_frame()
    frame.to_csv(path, index=False, lineterminator=CSV_LINE_TERMINATOR, float_format=None)
    return path


def read_series_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip')


def _plot_column(frame: pd.DataFrame, column: str, path: Path, title: str) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(frame['t'], frame[column], linewidth=1.5)
    if column == 'area_change' and (frame[column] > 0).any():
        ax.set_yscale('log')
    ax.set_xlabel('t (s)')
    ax.set_ylabel(LABELS.get(column, column))
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def emit_report(series, out_dir, plots: bool = True, title: Optional[str] = None) -> List[Path]:
    """Grava series.csv e um PNG por diagnóstico; devolve os caminhos escritos."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [write_series_csv(series, out_dir / 'series.csv')]
        if plots and len(series):
            frame = series.to_frame()
            for column in frame.columns:
                if column == 't':
                    continue
                written.append(_plot_column(frame, column, out_dir / f'{column}.png', title or column))
    except OSError as e:
        logger.error(f"Erro ao gravar relatório em {out_dir}: {str(e)}")
        raise
    logger.info(f"📊 Relatório gravado em {out_dir} ({len(written)} arquivos)")
    return written


def emit_comparison(series_by_label: Dict[str, object], out_dir, column: str,
                    filename: Optional[str] = None) -> Path:
    """Sobrepõe a mesma coluna de várias execuções (ex.: IB4 contra CBS32)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    log_scale = column == 'area_change'
    for label, series in series_by_label.items():
        frame = series.to_frame() if hasattr(series, 'to_frame') else series
        ax.plot(frame['t'], frame[column], label=label, linewidth=1.5)
        log_scale = log_scale and bool((frame[column] > 0).any())
    if log_scale:
        ax.set_yscale('log')
    ax.set_xlabel('t (s)')
    ax.set_ylabel(LABELS.get(column, column))
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = out_dir / (filename or f'comparison_{column}.png')
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def comparison_table(rows: Iterable[Dict], metric: str) -> pd.DataFrame:
    """Tabela kernel x MFAC de uma métrica; execuções falhas ficam como NaN."""
    records = []
    for row in rows:
        value = row.get(metric)
        if value is None:
            value = (row.get('metrics') or {}).get(metric)
        if row.get('status') == 'failed' or value is None:
            value = np.nan
        records.append({'kernel': row['kernel'], 'mfac': float(row['mfac']), metric: float(value)})
    if not records:
        return pd.DataFrame()
    frame = pd.DataFrame(records)
    return frame.pivot_table(index='kernel', columns='mfac', values=metric, aggfunc='last', dropna=False)


def export_table(table: pd.DataFrame, path, format_type: str = 'csv') -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format_type == 'csv':
        table.to_csv(path, lineterminator=CSV_LINE_TERMINATOR, na_rep='')
    elif format_type == 'json':
        data = {kernel: {f'{mfac:g}': (None if pd.isna(v) else float(v)) for mfac, v in row.items()}
                for kernel, row in table.iterrows()}
        path.write_text(json.dumps(data, indent=2, ensure_ascii=False), encoding='utf-8')
    else:
        raise ValueError(f"Formato de exportação desconhecido: {format_type}")
    return path


def plot_field_dump(dump_path, out_path, spec: GridSpec, quantity: str = 'vorticity') -> Path:
    """Mapa de cores de vorticidade, pressão ou |u| a partir de um dump de campo."""
    f, header = load_field(dump_path)
    if quantity == 'vorticity':
        values = vorticity(f, spec)
    elif quantity == 'pressure':
        values = f.interior('p')
    elif quantity == 'speed':
        g = f.ghost
        nx, ny = spec.cells
        uc = 0.5 * (f.u[g:g + nx, g:g + ny] + f.u[g + 1:g + nx + 1, g:g + ny])
        vc = 0.5 * (f.v[g:g + nx, g:g + ny] + f.v[g:g + nx, g + 1:g + ny + 1])
        values = np.hypot(uc, vc)
    else:
        raise ValueError(f"Grandeza desconhecida: {quantity}")
    x0, y0 = header['origin']
    lx, ly = header['extent']
    fig, ax = plt.subplots(figsize=(6, 6 * ly / lx))
    image = ax.imshow(values.T, origin='lower', extent=(x0, x0 + lx, y0, y0 + ly), cmap='RdBu_r')
    fig.colorbar(image, ax=ax)
    ax.set_title(f"{quantity} (t = {header['time']:.4g} s)")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
