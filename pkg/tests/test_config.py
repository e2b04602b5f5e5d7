import json
from pathlib import Path

import pytest

from config import BenchmarkConfig, OutputOptions, Settings, get_settings
from errors import ConfigurationError

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'


def _minimal(**extra):
    data = {'name': 'demo', 'benchmark': 'membrane'}
    data.update(extra)
    return data


def test_defaults_and_label():
    config = BenchmarkConfig.from_dict(_minimal(kernel='CBS32', mfac=0.5, resolution=64))
    assert config.label == 'demo_CBS32_mfac0.5_n64'
    assert BenchmarkConfig.from_dict(_minimal()).label == 'demo_IB4_mfac1_ndefault'
    assert isinstance(config.output, OutputOptions)
    assert config.output.cadence == 1


def test_output_section_becomes_options():
    config = BenchmarkConfig.from_dict(_minimal(output={'cadence': 5, 'plots': False}))
    assert config.output == OutputOptions(cadence=5, dump_fields=False, plots=False)


@pytest.mark.parametrize('extra,section', [
    ({'colour': 'red'}, 'config'),
    ({'fluid': {'rho': 1.0, 'nu': 0.1}}, 'fluid'),
    ({'material': {'E': 1.0}}, 'material'),
    ({'output': {'format': 'hdf5'}}, 'output'),
])
def test_unknown_keys_are_errors(extra, section):
    with pytest.raises(ConfigurationError, match=f"Chave desconhecida em '{section}'"):
        BenchmarkConfig.from_dict(_minimal(**extra))


@pytest.mark.parametrize('extra', [
    {'mfac': 0.0}, {'mfac': -1.0}, {'kernel': 'IB9'}, {'benchmark': 'heart'},
    {'t_load': 2.0, 't_final': 1.0}, {'resolution': 0}, {'output': {'cadence': 0}},
])
def test_invalid_values(extra):
    with pytest.raises(ConfigurationError):
        BenchmarkConfig.from_dict(_minimal(**extra))


def test_missing_required_key():
    with pytest.raises(ConfigurationError):
        BenchmarkConfig.from_dict({'name': 'x'})
    with pytest.raises(ConfigurationError):
        BenchmarkConfig.from_dict(['membrane'])


def test_dict_round_trip():
    config = BenchmarkConfig.from_dict(_minimal(kernel='CBS43', params={'radius': 0.2}, tags=['desk'],
                                                output={'cadence': 3}))
    assert BenchmarkConfig.from_dict(json.loads(config.to_json())) == config


def test_overrides_win():
    config = BenchmarkConfig.from_dict(_minimal(kernel='IB4', mfac=1.0, resolution=32))
    changed = config.with_overrides(kernel='CBS32', mfac=0.5, resolution=64)
    assert (changed.kernel, changed.mfac, changed.resolution) == ('CBS32', 0.5, 64)
    assert config.with_overrides() == config
    with pytest.raises(ConfigurationError):
        config.with_overrides(kernel='nope')


def test_load_from_file(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(_minimal(tags=['full', 'long-running'])), encoding='utf-8')
    config = BenchmarkConfig.load(path)
    assert config.long_running
    path.write_text('{not json', encoding='utf-8')
    with pytest.raises(ConfigurationError):
        BenchmarkConfig.load(path)
    with pytest.raises(ConfigurationError):
        BenchmarkConfig.load(tmp_path / 'absent.json')


@pytest.mark.parametrize('path', sorted(CONFIG_DIR.glob('*.json')), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    config = BenchmarkConfig.load(path)
    assert config.name == path.stem
    assert config.long_running == path.stem.endswith('full')


def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv('IFED_MAX_DT_HALVINGS', '3')
    monkeypatch.setenv('IFED_POISSON_RTOL', '1e-8')
    monkeypatch.setenv('IFED_LOG_LEVEL', 'debug')
    settings = get_settings()
    assert isinstance(settings, Settings)
    assert settings.max_dt_halvings == 3
    assert settings.poisson_rtol == 1e-8
    assert settings.log_level == 'DEBUG'
