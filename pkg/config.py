"""
Configuração: variáveis de ambiente (.env) e o esquema declarativo dos benchmarks.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from errors import ConfigurationError
from kernels import parse_kernel

# Carrega variáveis de ambiente
load_dotenv()

logger = logging.getLogger(__name__)

BENCHMARKS = ('membrane', 'band', 'block', 'cook', 'channel', 'turek_hron')

TOP_LEVEL_KEYS = {
    'name', 'benchmark', 'kernel', 'mfac', 'resolution', 'fluid', 'material', 't_load', 't_final',
    'params', 'output', 'seed', 'tags', 'steady_tolerance', 'steady_window', 'max_dt_halvings',
}
FLUID_KEYS = {'rho', 'mu', 'dt', 'dt_factor', 'cfl_safety', 'viscous', 'advection'}
MATERIAL_KEYS = {'law', 'G', 'lam', 'modified_invariants', 'nu_stab'}
OUTPUT_KEYS = {'cadence', 'dump_fields', 'plots'}


class Settings:
    """Parâmetros de ambiente lidos no momento da construção."""

    def __init__(self):
        self.output_dir = os.getenv('IFED_OUTPUT_DIR', 'results')
        self.results_db = os.getenv('IFED_RESULTS_DB', 'ifed_results.db')
        self.dump_dir = os.getenv('IFED_DUMP_DIR', 'dumps')
        self.max_dumps = int(os.getenv('IFED_MAX_DUMPS', '20'))
        self.log_level = os.getenv('IFED_LOG_LEVEL', 'INFO').upper()
        self.max_dt_halvings = int(os.getenv('IFED_MAX_DT_HALVINGS', '6'))
        self.poisson_rtol = float(os.getenv('IFED_POISSON_RTOL', '1e-10'))
        self.poisson_max_iter = int(os.getenv('IFED_POISSON_MAX_ITER', '500'))
        self.api_port = int(os.getenv('IFED_API_PORT', '5005'))


def get_settings() -> Settings:
    return Settings()


def _check_keys(section: str, data: Dict[str, Any], allowed: set) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigurationError(f"Chave desconhecida em '{section}': {unknown[0]}")


@dataclass
class OutputOptions:
    cadence: int = 1
    dump_fields: bool = False
    plots: bool = True


@dataclass
class BenchmarkConfig:
    """Configuração de uma execução.

    `fluid` e `material` sobrescrevem os padrões do benchmark; `resolution` é N (células)
    para membrane/band/channel/turek_hron e M (elementos) para block/cook.
    `fluid.dt_factor` define dt = dt_factor * h quando `fluid.dt` não é dado.
    """

    name: str
    benchmark: str
    kernel: str = 'IB4'
    mfac: float = 1.0
    resolution: Optional[int] = None
    fluid: Dict[str, Any] = field(default_factory=dict)
    material: Dict[str, Any] = field(default_factory=dict)
    t_load: Optional[float] = None
    t_final: Optional[float] = None
    params: Dict[str, Any] = field(default_factory=dict)
    output: OutputOptions = field(default_factory=OutputOptions)
    seed: int = 0
    tags: List[str] = field(default_factory=list)
    steady_tolerance: float = 1e-6
    steady_window: int = 100
    max_dt_halvings: Optional[int] = None

    def __post_init__(self):
        if self.benchmark not in BENCHMARKS:
            raise ConfigurationError(f"Benchmark desconhecido: {self.benchmark}")
        parse_kernel(self.kernel)
        if not self.mfac > 0:
            raise ConfigurationError(f"MFAC deve ser positivo: {self.mfac}")
        if self.resolution is not None and self.resolution < 1:
            raise ConfigurationError(f"Resolução inválida: {self.resolution}")
        if self.t_load is not None and self.t_final is not None and self.t_load > self.t_final:
            raise ConfigurationError(f"t_load ({self.t_load}) maior que t_final ({self.t_final})")
        _check_keys('fluid', self.fluid, FLUID_KEYS)
        _check_keys('material', self.material, MATERIAL_KEYS)
        if isinstance(self.output, dict):
            _check_keys('output', self.output, OUTPUT_KEYS)
            self.output = OutputOptions(**self.output)
        if self.output.cadence < 1:
            raise ConfigurationError("output.cadence deve ser >= 1")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BenchmarkConfig':
        if not isinstance(data, dict):
            raise ConfigurationError("Configuração deve ser um objeto JSON")
        _check_keys('config', data, TOP_LEVEL_KEYS)
        for required in ('name', 'benchmark'):
            if required not in data:
                raise ConfigurationError(f"Chave obrigatória ausente: {required}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> 'BenchmarkConfig':
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"Erro ao ler configuração {path}: {str(e)}")
            raise ConfigurationError(f"Não foi possível ler {path}: {str(e)}")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, kernel: Optional[str] = None, mfac: Optional[float] = None,
                       resolution: Optional[int] = None, name: Optional[str] = None) -> 'BenchmarkConfig':
        """Flags de linha de comando vencem os valores do arquivo."""
        changes = {}
        if kernel is not None:
            changes['kernel'] = kernel
        if mfac is not None:
            changes['mfac'] = float(mfac)
        if resolution is not None:
            changes['resolution'] = int(resolution)
        if name is not None:
            changes['name'] = name
        return replace(self, **changes)

    @property
    def label(self) -> str:
        resolution = 'default' if self.resolution is None else self.resolution
        return f"{self.name}_{self.kernel}_mfac{self.mfac:g}_n{resolution}"

    @property
    def long_running(self) -> bool:
        return 'long-running' in self.tags
