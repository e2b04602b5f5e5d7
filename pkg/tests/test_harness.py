import numpy as np
import pandas as pd
import pytest

from benchmarks import build_scenario
from config import BenchmarkConfig
from dump_service import DumpService
from harness import (
    STATUS_COMPLETED,
    STATUS_FAILED,
    STATUS_STEADY,
    RunResult,
    TimeSeries,
    membrane_benchmark,
    run,
    safe_run,
    sweep,
)


def _membrane(**kwargs):
    data = {'name': 'tiny', 'benchmark': 'membrane', 'kernel': 'IB4', 'mfac': 1.0, 'resolution': 16,
            't_final': 0.03, 'params': {'tracers': 64}, 'output': {'plots': False}}
    data.update(kwargs)
    return BenchmarkConfig.from_dict(data)


def _resting_block(**kwargs):
    data = {'name': 'rest', 'benchmark': 'block', 'kernel': 'IB4', 'mfac': 0.5, 'resolution': 4,
            't_final': 0.05, 'steady_window': 3, 'params': {'load': 0.0}}
    data.update(kwargs)
    return BenchmarkConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Série temporal
# ---------------------------------------------------------------------------

def test_time_series_requires_increasing_time():
    series = TimeSeries(['a', 'b'])
    series.append(0.0, {'a': 1.0})
    series.append(0.5, {'a': 2.0, 'b': 3.0})
    with pytest.raises(ValueError):
        series.append(0.5, {'a': 0.0})
    assert len(series) == 2
    assert np.isnan(series.column('b')[0])
    assert series.last('a') == 2.0
    assert series.column('t').tolist() == [0.0, 0.5]


def test_time_series_frame_round_trip():
    series = TimeSeries(['x'])
    series.append(0.0, {'x': 0.1})
    series.append(1.0, {'x': 0.2})
    frame = series.to_frame()
    assert list(frame.columns) == ['t', 'x']
    again = TimeSeries.from_frame(frame)
    pd.testing.assert_frame_equal(again.to_frame(), frame)
    assert np.isnan(TimeSeries(['x']).last('x'))


def test_run_result_metrics():
    series = TimeSeries(['a'])
    series.append(0.0, {'a': 1.0})
    series.append(1.0, {'a': -3.0})
    result = RunResult(_membrane(), series, STATUS_COMPLETED, 1, 1.0, 0.1)
    assert result.metrics() == {'a': -3.0, 'max_abs_a': 3.0}
    assert not result.failed


# ---------------------------------------------------------------------------
# Laço IFED
# ---------------------------------------------------------------------------

def test_membrane_run_records_series():
    result = run(_membrane())
    assert result.status == STATUS_COMPLETED
    assert result.final_time == pytest.approx(0.03)
    assert result.steps == 4
    frame = result.series.to_frame()
    assert list(frame.columns) == ['t', 'area_change', 'max_vorticity', 'max_speed', 'dt']
    assert len(frame) == 5
    assert frame['t'].iloc[0] == 0.0
    assert frame['area_change'].iloc[0] == 0.0
    assert frame['dt'].max() <= 0.125 / 16
    assert np.all(np.isfinite(frame.to_numpy()))
    assert result.tracers.shape == (64, 2)


def test_runs_are_deterministic():
    first = run(_membrane()).series.to_frame()
    second = run(_membrane()).series.to_frame()
    assert first.equals(second)


def test_seed_drives_the_initial_perturbation():
    params = {'tracers': 64, 'perturbation': 0.01}
    first = run(_membrane(seed=5, params=params))
    again = run(_membrane(seed=5, params=params))
    other = run(_membrane(seed=6, params=params))
    assert first.series.to_frame().equals(again.series.to_frame())
    assert first.series.column('max_speed')[0] == pytest.approx(0.04)
    assert not np.array_equal(first.series.column('max_speed'), other.series.column('max_speed'))


def test_output_cadence():
    result = run(_membrane(output={'cadence': 3, 'plots': False}))
    assert result.series.column('t').tolist() == pytest.approx([0.0, 3 * 0.125 / 16, 0.03])


def test_runaway_velocity_fails_with_dump(tmp_path):
    scenario = build_scenario(_membrane())
    scenario.runaway_factor = 1e-30
    result = run(scenario, DumpService(str(tmp_path / 'dumps'), max_dumps=5))
    assert result.failed
    assert result.error_type == 'SimulationDivergedError'
    assert result.steps == 0
    assert result.dump_path is not None
    assert result.dump_path.startswith(str(tmp_path / 'dumps'))


def test_rejected_steps_halve_dt_until_limit():
    config = _membrane(fluid={'dt_factor': 0.125, 'cfl_safety': 1e-12}, max_dt_halvings=2)
    result = run(config)
    assert result.status == STATUS_FAILED
    assert result.error_type == 'StepRejectedError'
    assert result.dt_halvings == 3
    assert result.steps == 1
    assert np.all(result.series.column('dt') <= 0.125 / 16)


def test_steady_state_stops_run():
    result = run(_resting_block(params={'load': 0.0, 'stop_when_steady': True}, t_final=10.0))
    assert result.status == STATUS_STEADY
    assert result.steps == 3
    assert result.steady_time == pytest.approx(result.final_time)
    assert result.series.last('delta_y') == pytest.approx(0.0, abs=1e-12)
    # passo de parada coincide com a cadência: registrado uma única vez
    assert result.series.times == pytest.approx([0.0, 0.01, 0.02, 0.03])


def test_steady_stop_off_cadence_records_final_state():
    result = run(_resting_block(params={'load': 0.0, 'stop_when_steady': True}, t_final=10.0,
                                output={'cadence': 2, 'plots': False}))
    assert result.status == STATUS_STEADY
    assert result.steps == 3
    assert result.series.times == pytest.approx([0.0, 0.02, 0.03])


def test_steady_state_is_reported_without_stopping():
    result = run(_resting_block())
    assert result.status == STATUS_COMPLETED
    assert result.steady_time is not None
    assert result.steady_time == pytest.approx(0.03)
    assert result.final_time == pytest.approx(0.05)


def test_benchmark_wrapper():
    result = membrane_benchmark('CBS32', n=16, mfac=0.5, t_final=0.01, params={'tracers': 32})
    assert result.config.kernel == 'CBS32'
    assert result.config.label == 'membrane_CBS32_mfac0.5_n16'
    assert not result.failed


def test_safe_run_never_raises():
    config = BenchmarkConfig(name='bad', benchmark='channel', resolution=18)
    outcome = safe_run(config)
    assert outcome['success'] is False
    assert 'múltiplo de 4' in outcome['error']


def test_sweep_writes_one_directory_per_cell(tmp_path):
    config = _membrane(resolution=8, t_final=0.02, params={'tracers': 32})
    rows = sweep(config, ['IB4', 'BS3'], [1.0], tmp_path / 'sweep')
    assert [row['label'] for row in rows] == ['tiny_IB4_mfac1_n8', 'tiny_BS3_mfac1_n8']
    for row in rows:
        assert row['status'] == STATUS_COMPLETED
        assert 'area_change' in row['metrics']
    assert (tmp_path / 'sweep' / 'IB4_mfac1' / 'series.csv').exists()
    assert (tmp_path / 'sweep' / 'BS3_mfac1' / 'series.csv').exists()
