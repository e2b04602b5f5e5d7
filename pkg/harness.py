"""
Driver da simulação IFED: laço de ponto médio, detecção de falhas e estado estacionário,
e as operações de benchmark de alto nível.
"""

import logging
import time as clock
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from benchmarks import Scenario, Snapshot, build_scenario
from config import BenchmarkConfig, get_settings
from coupling import CouplingContext, interpolate, interpolate_body, spread_body
from errors import (
    IFEDError,
    InvertedElementError,
    SimulationDivergedError,
    SolverFailureError,
    StencilOverflowError,
    StepRejectedError,
)
from fluid import FluidState, step
from lagrangian import (
    LagrangianState,
    elastic_nodal_forces,
    tether_nodal_forces,
    traction_nodal_forces,
)
from macgrid import StaggeredField, max_speed
from report import emit_report

logger = logging.getLogger(__name__)

STATUS_COMPLETED = 'completed'
STATUS_STEADY = 'steady'
STATUS_FAILED = 'failed'


class TimeSeries:
    """Linhas (t, diagnósticos...) com t estritamente crescente."""

    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        self.times: List[float] = []
        self.rows: List[List[float]] = []

    def append(self, t: float, values: Dict[str, float]) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError(f"Tempo não crescente na série: {t} <= {self.times[-1]}")
        self.times.append(float(t))
        self.rows.append([float(values.get(c, np.nan)) for c in self.columns])

    def __len__(self) -> int:
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        if name == 't':
            return np.asarray(self.times)
        index = self.columns.index(name)
        return np.asarray([row[index] for row in self.rows])

    def last(self, name: str) -> float:
        return float(self.column(name)[-1]) if self.rows else float('nan')

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=self.columns)
        frame.insert(0, 't', self.times)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'TimeSeries':
        series = cls([c for c in frame.columns if c != 't'])
        for record in frame.to_dict('records'):
            series.append(record.pop('t'), record)
        return series


@dataclass
class RunResult:
    config: BenchmarkConfig
    series: TimeSeries
    status: str
    steps: int
    final_time: float
    wall_time: float
    failure_reason: Optional[str] = None
    error_type: Optional[str] = None
    dump_path: Optional[str] = None
    steady_time: Optional[float] = None
    dt_halvings: int = 0
    fluid: Optional[FluidState] = None
    states: List[LagrangianState] = field(default_factory=list)
    tracers: Optional[np.ndarray] = None

    @property
    def failed(self) -> bool:
        return self.status == STATUS_FAILED

    def metrics(self) -> Dict[str, float]:
        """Último valor e máximo absoluto de cada diagnóstico."""
        summary = {}
        for name in self.series.columns:
            values = self.series.column(name)
            finite = values[np.isfinite(values)]
            summary[name] = float(values[-1]) if len(values) else float('nan')
            summary[f'max_abs_{name}'] = float(np.max(np.abs(finite))) if len(finite) else float('nan')
        return summary


class _Simulation:
    """Estado mutável de uma execução; um passo por vez."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        spec = scenario.spec
        self.fluid = FluidState.at_rest(spec)
        if scenario.initial_velocity is not None:
            self.fluid = FluidState(scenario.initial_velocity.copy())
        self.states = [LagrangianState.reference(b.mesh) for b in scenario.bodies]
        self.contexts = [CouplingContext(scenario.delta, spec, b.mesh, b.point_density) for b in scenario.bodies]
        self.tracers = None if scenario.tracers is None else scenario.tracers.copy()
        self.tracer_context = CouplingContext(scenario.delta, spec)

    def snapshot(self) -> Snapshot:
        return Snapshot(self.fluid.time, self.fluid, self.states, self.tracers, self.scenario)

    def body_forces(self, index: int, state: LagrangianState, t: float) -> np.ndarray:
        body = self.scenario.bodies[index]
        forces = elastic_nodal_forces(body.mesh, state, body.material)
        for tether in body.tethers:
            forces = forces + tether_nodal_forces(body.mesh, state, tether, t)
        for load in body.loads:
            forces = forces + traction_nodal_forces(body.mesh, load, t)
        return forces

    def advance(self, dt: float) -> None:
        """Esquema de ponto médio: prediz chi^{n+1/2}, espalha, avança o fluido e corrige chi."""
        spec = self.scenario.spec
        t = self.fluid.time
        field_n = self.fluid.field
        force_u = np.zeros(spec.face_counts(0))
        force_v = np.zeros(spec.face_counts(1))
        half_states = []
        for index, (ctx, state) in enumerate(zip(self.contexts, self.states)):
            velocity = interpolate_body(ctx, field_n, state.positions)
            half = LagrangianState(state.positions + 0.5 * dt * velocity, velocity, state.forces)
            half.forces = self.body_forces(index, half, t + 0.5 * dt)
            fu, fv = spread_body(ctx, half.positions, half.forces)
            force_u += fu
            force_v += fv
            half_states.append(half)
        tracer_half = None
        if self.tracers is not None:
            tracer_half = self.tracers + 0.5 * dt * interpolate(self.tracer_context, field_n, self.tracers)

        new_fluid = step(self.fluid, (force_u, force_v), self.scenario.fluid, spec, dt)
        mid = StaggeredField(0.5 * (field_n.u + new_fluid.field.u), 0.5 * (field_n.v + new_fluid.field.v),
                             new_fluid.field.p, spec.ghost)

        new_states = []
        for ctx, state, half in zip(self.contexts, self.states, half_states):
            velocity = interpolate_body(ctx, mid, half.positions)
            new_states.append(LagrangianState(state.positions + dt * velocity, velocity, half.forces))
        if tracer_half is not None:
            self.tracers = self.tracers + dt * interpolate(self.tracer_context, mid, tracer_half)
        self.fluid = new_fluid
        self.states = new_states

    def check_health(self) -> None:
        speed = max_speed(self.fluid.field)
        finite = np.isfinite(speed) and all(s.is_finite() for s in self.states)
        if self.tracers is not None:
            finite = finite and bool(np.all(np.isfinite(self.tracers)))
        if not finite:
            raise SimulationDivergedError(f"Estado não finito em t={self.fluid.time:.6g}")
        limit = self.scenario.runaway_factor * self.scenario.characteristic_velocity
        if speed > limit:
            raise SimulationDivergedError(
                f"Velocidade descontrolada {speed:.3e} > {limit:.3e} em t={self.fluid.time:.6g}"
            )

    def max_nodal_speed(self) -> float:
        speeds = [np.max(np.linalg.norm(s.velocities, axis=1)) for s in self.states if len(s.velocities)]
        return float(max(speeds)) if speeds else 0.0


def _record(series: TimeSeries, sim: _Simulation, dt: float) -> None:
    snap = sim.snapshot()
    values = {name: metric(snap) for name, metric in sim.scenario.diagnostics.items()}
    values['dt'] = dt
    series.append(snap.time, values)


def run(config: Union[BenchmarkConfig, Scenario], dump_service=None) -> RunResult:
    """Executa o laço IFED até t_final, registrando diagnósticos na cadência configurada.

    Falhas irrecuperáveis (elemento invertido, solver, estêncil, divergência ou dt
    reduzido além do limite) encerram a execução com status 'failed' e, se houver
    `dump_service`, um dump diagnóstico.
    """
    scenario = config if isinstance(config, Scenario) else build_scenario(config)
    config = scenario.config
    settings = get_settings()
    max_halvings = config.max_dt_halvings if config.max_dt_halvings is not None else settings.max_dt_halvings
    cadence = config.output.cadence

    sim = _Simulation(scenario)
    series = TimeSeries(list(scenario.diagnostics) + ['dt'])
    base_dt = scenario.fluid.dt
    dt = base_dt
    halvings = 0
    steps = 0
    calm_steps = 0
    steady_time = None
    status = STATUS_COMPLETED
    failure = None
    error_type = None
    dump_path = None
    started = clock.perf_counter()
    tolerance = config.steady_tolerance * scenario.characteristic_velocity
    end = scenario.t_final

    logger.info(f"Iniciando {config.label} até t={end:g}")
    _record(series, sim, dt)
    while sim.fluid.time < end - 1e-12 * max(end, 1.0):
        dt_step = min(dt, end - sim.fluid.time)
        try:
            sim.advance(dt_step)
            sim.check_health()
        except StepRejectedError as e:
            halvings += 1
            if halvings > max_halvings:
                status, failure, error_type = STATUS_FAILED, str(e), type(e).__name__
                logger.error(f"Limite de reduções de dt atingido: {str(e)}")
                break
            dt = min(dt / 2.0, base_dt)
            logger.info(f"Passo rejeitado em t={sim.fluid.time:.6g}; dt reduzido para {dt:.3e}")
            continue
        except (InvertedElementError, SolverFailureError, StencilOverflowError, SimulationDivergedError) as e:
            status, failure, error_type = STATUS_FAILED, str(e), type(e).__name__
            logger.error(f"Execução {config.label} abortada: {str(e)}")
            break
        steps += 1
        finished = sim.fluid.time >= end - 1e-12 * max(end, 1.0)
        recorded = steps % cadence == 0 or finished
        if recorded:
            _record(series, sim, dt_step)

        if sim.max_nodal_speed() < tolerance:
            calm_steps += 1
            if calm_steps >= config.steady_window and steady_time is None:
                steady_time = sim.fluid.time
                logger.info(f"Estado estacionário detectado em t={steady_time:.6g}")
                if scenario.stop_when_steady:
                    status = STATUS_STEADY
                    if not recorded:
                        _record(series, sim, dt_step)
                    break
        else:
            calm_steps = 0

    if status == STATUS_FAILED and dump_service is not None:
        dump_path = dump_service.create_dump(scenario, sim.fluid, sim.states, series,
                                             reason=failure, error_type=error_type, step=steps)
    elapsed = clock.perf_counter() - started
    logger.info(f"Execução {config.label} terminou ({status}) em {steps} passos, {elapsed:.1f} s")
    return RunResult(config, series, status, steps, sim.fluid.time, elapsed, failure, error_type,
                     dump_path, steady_time, halvings, sim.fluid, sim.states, sim.tracers)


# ---------------------------------------------------------------------------
# Operações de benchmark
# ---------------------------------------------------------------------------

def _config(benchmark: str, kernel: str, resolution: int, mfac: float, **overrides) -> BenchmarkConfig:
    name = overrides.pop('name', benchmark)
    return BenchmarkConfig(name=name, benchmark=benchmark, kernel=kernel, mfac=mfac,
                           resolution=resolution, **overrides)


def membrane_benchmark(kernel: str, n: int = 64, mfac: float = 0.5, **overrides) -> RunResult:
    """Membrana pressurizada em equilíbrio; a série traz a variação relativa de área."""
    return run(_config('membrane', kernel, n, mfac, **overrides))


def compressed_block_benchmark(kernel: str, m: int = 8, mfac: float = 0.5,
                               stabilization: str = 'none', **overrides) -> RunResult:
    params = dict(overrides.pop('params', {}))
    params['stabilization'] = stabilization
    return run(_config('block', kernel, m, mfac, params=params, **overrides))


def cooks_membrane_benchmark(kernel: str, m: int = 8, mfac: float = 0.5,
                             stabilization: str = 'none', **overrides) -> RunResult:
    params = dict(overrides.pop('params', {}))
    params['stabilization'] = stabilization
    return run(_config('cook', kernel, m, mfac, params=params, **overrides))


def elastic_band_benchmark(kernel: str, mfac: float = 0.5, thickness: float = 0.1, n: int = 64,
                           **overrides) -> RunResult:
    """Banda espessa (0.1) ou fina (1/32, dois elementos na espessura)."""
    params = dict(overrides.pop('params', {}))
    params['thickness'] = thickness
    if thickness < 0.1 and 'elements_across' not in params:
        params['elements_across'] = 2
    return run(_config('band', kernel, n, mfac, params=params, **overrides))


def slanted_channel_benchmark(kernel: str, n: int = 32, mfac: float = 1.0, **overrides) -> RunResult:
    return run(_config('channel', kernel, n, mfac, **overrides))


def turek_hron_benchmark(kernel: str, mfac: float = 0.5, n: int = 48, **overrides) -> RunResult:
    """Viga flexível atrás de cilindro; em resolução completa é uma execução longa."""
    return run(_config('turek_hron', kernel, n, mfac, **overrides))


# ---------------------------------------------------------------------------
# Varreduras
# ---------------------------------------------------------------------------

def _sweep_cell(payload) -> Dict:
    config_dict, out_dir = payload
    config = BenchmarkConfig.from_dict(config_dict)
    result = run(config)
    paths = emit_report(result.series, out_dir, plots=config.output.plots)
    return {'label': config.label, 'kernel': config.kernel, 'mfac': config.mfac,
            'status': result.status, 'failure': result.failure_reason,
            'metrics': result.metrics(), 'paths': [str(p) for p in paths]}


def sweep(config: BenchmarkConfig, kernels: Sequence[str], mfacs: Sequence[float], out_dir,
          jobs: int = 1) -> List[Dict]:
    """Uma execução por célula kernel x MFAC, cada uma em seu subdiretório."""
    out_dir = Path(out_dir)
    payloads = []
    for kernel in kernels:
        for mfac in mfacs:
            cell = config.with_overrides(kernel=kernel, mfac=mfac)
            payloads.append((cell.to_dict(), out_dir / f"{kernel}_mfac{mfac:g}"))
    if jobs <= 1:
        return [_sweep_cell(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_cell, payloads))


def safe_run(config: BenchmarkConfig, dump_service=None) -> Dict:
    """Versão para serviços: nunca lança, devolve {'success': ...}."""
    try:
        result = run(config, dump_service)
        return {'success': not result.failed, 'result': result}
    except IFEDError as e:
        logger.error(f"Erro ao executar {config.label}: {str(e)}")
        return {'success': False, 'error': str(e)}
