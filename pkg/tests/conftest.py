import numpy as np
import pytest

from macgrid import BoundaryCondition, GridSpec


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Saídas, ledger e dumps de cada teste ficam no tmp_path"""
    monkeypatch.setenv('IFED_OUTPUT_DIR', str(tmp_path / 'results'))
    monkeypatch.setenv('IFED_RESULTS_DB', str(tmp_path / 'ifed_results.db'))
    monkeypatch.setenv('IFED_DUMP_DIR', str(tmp_path / 'dumps'))
    monkeypatch.setenv('IFED_LOG_LEVEL', 'WARNING')
    return tmp_path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def periodic_spec():
    return GridSpec.box(16)


@pytest.fixture
def wall_spec():
    bc = {side: BoundaryCondition('wall') for side in ('left', 'right', 'bottom', 'top')}
    return GridSpec((0.0, 0.0), (1.0, 1.0), (16, 16), ghost=4, bc=bc)


@pytest.fixture
def make_result():
    """RunResult sintético, sem simular, para ledger, relatórios e API"""
    from config import BenchmarkConfig
    from harness import STATUS_COMPLETED, RunResult, TimeSeries

    def factory(kernel='IB4', mfac=0.5, status=STATUS_COMPLETED, values=(0.0, 1e-3), benchmark='membrane'):
        config = BenchmarkConfig(name='demo', benchmark=benchmark, kernel=kernel, mfac=mfac, resolution=16)
        series = TimeSeries(['area_change', 'dt'])
        for index, value in enumerate(values):
            series.append(0.01 * index, {'area_change': value, 'dt': 0.01})
        failure = 'Velocidade descontrolada' if status == 'failed' else None
        error_type = 'SimulationDivergedError' if status == 'failed' else None
        return RunResult(config, series, status, len(values) - 1, 0.01 * (len(values) - 1), 0.5,
                         failure, error_type)

    return factory
