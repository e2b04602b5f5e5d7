"""
Linha de comando do laboratório IFED: run, sweep, props, compare e serve.
"""

import argparse
import logging
import sys
from pathlib import Path

from flask import Flask
from flask_cors import CORS

from api_rest import init_api
from benchmarks import build_scenario
from config import BenchmarkConfig, get_settings
from database import ResultsDatabase
from dump_service import DumpService
from errors import IFEDError
from harness import STATUS_FAILED, run, sweep
from macgrid import dump_field
from properties import run_property_suite
from report import comparison_table, emit_comparison, emit_report, export_table, plot_field_dump, read_series_csv

logger = logging.getLogger(__name__)


def create_app(db_path=None):
    """App Flask somente leitura sobre o ledger de resultados"""
    app = Flask(__name__)
    CORS(app)
    init_api(app, db_path or get_settings().results_db)
    return app


def _split(values, cast=str):
    return [cast(v.strip()) for v in values.split(',') if v.strip()]


def cmd_run(args) -> int:
    settings = get_settings()
    config = BenchmarkConfig.load(args.config).with_overrides(kernel=args.kernel, mfac=args.mfac,
                                                              resolution=args.n)
    out_dir = Path(args.out or Path(settings.output_dir) / config.label)
    if config.long_running:
        print(f"⚠️ {config.name} é uma execução longa (resolução completa)")

    scenario = build_scenario(config)
    result = run(scenario, DumpService())
    paths = emit_report(result.series, out_dir, plots=config.output.plots, title=config.label)
    if config.output.dump_fields and result.fluid is not None:
        field_path = dump_field(result.fluid.field, scenario.spec, out_dir / 'field.npz', time=result.final_time)
        paths.append(Path(field_path))
        if config.output.plots:
            paths.append(plot_field_dump(field_path, out_dir / 'vorticity.png', scenario.spec))

    if not args.no_record:
        run_id = ResultsDatabase(args.db).record_run(result)
        print(f"📊 Execução registrada no ledger (id {run_id})")

    if result.status == STATUS_FAILED:
        print(f"❌ {config.label} falhou em t={result.final_time:.6g}: {result.failure_reason}")
        if result.dump_path:
            print(f"   Dump diagnóstico: {result.dump_path}")
        return 1
    print(f"✅ {config.label} ({result.status}) em {result.steps} passos; {len(paths)} arquivos em {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    settings = get_settings()
    config = BenchmarkConfig.load(args.config).with_overrides(resolution=args.n)
    out_dir = Path(args.out or Path(settings.output_dir) / f'{config.name}_sweep')
    rows = sweep(config, _split(args.kernels), _split(args.mfacs, float), out_dir, jobs=args.jobs)

    failed = [row for row in rows if row['status'] == STATUS_FAILED]
    metrics = sorted({name for row in rows for name in row['metrics'] if not name.startswith('max_abs_')})
    for metric in metrics:
        table = comparison_table(rows, metric)
        export_table(table, out_dir / f'comparison_{metric}.csv', 'csv')
        export_table(table, out_dir / f'comparison_{metric}.json', 'json')
    for row in failed:
        print(f"❌ {row['label']}: {row['failure']}")
    print(f"✅ Varredura concluída: {len(rows) - len(failed)}/{len(rows)} células sem falha em {out_dir}")
    return 0


def cmd_props(args) -> int:
    kernels = _split(args.kernels) if args.kernels else None
    summary = run_property_suite(kernels, quick=args.quick)
    if 'error' in summary:
        print(f"❌ Erro na suíte de propriedades: {summary['error']}")
        return 1
    for check in summary['checks']:
        glyph = '✅' if check['passed'] else '❌'
        print(f"{glyph} {check['check']:<32} {check['subject']:<24} {check['value']:.3e} (tol {check['tolerance']:.0e})")
    total = len(summary['checks'])
    print(f"📊 {total - summary['failed']}/{total} propriedades verificadas")
    return 0 if summary['success'] else 1


def cmd_compare(args) -> int:
    series = {}
    for item in args.series:
        label, _, path = item.partition('=')
        if not path:
            label, path = Path(item).parent.name, item
        series[label] = read_series_csv(path)
    path = emit_comparison(series, args.out, args.column)
    print(f"📊 Comparação gravada em {path}")
    return 0


def cmd_serve(args) -> int:
    port = args.port or get_settings().api_port
    app = create_app(args.db)
    print(f"🌐 Ledger de resultados em http://localhost:{port}/api/v1/runs")
    app.run(host=args.host, port=port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ifed', description='Laboratório IFED de kernels para FSI 2D')
    parser.add_argument('--log-level', default=None, help='Nível de log (padrão: IFED_LOG_LEVEL)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('run', help='Executa um benchmark a partir de um arquivo de configuração')
    p.add_argument('--config', required=True)
    p.add_argument('--kernel')
    p.add_argument('--mfac', type=float)
    p.add_argument('--n', type=int, help='Resolução (N da grade ou M elementos)')
    p.add_argument('--out')
    p.add_argument('--db', default=None, help='Ledger sqlite (padrão: IFED_RESULTS_DB)')
    p.add_argument('--no-record', action='store_true', help='Não registra a execução no ledger')
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('sweep', help='Varre kernels x MFAC, uma execução por célula')
    p.add_argument('--config', required=True)
    p.add_argument('--kernels', required=True, help='Lista separada por vírgulas, ex.: IB4,CBS32')
    p.add_argument('--mfacs', required=True, help='Lista separada por vírgulas, ex.: 0.5,1.0')
    p.add_argument('--n', type=int)
    p.add_argument('--out')
    p.add_argument('--jobs', type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser('props', help='Suíte de propriedades dos kernels e do acoplamento')
    p.add_argument('--kernels', help='Restringe as verificações 1D a estes kernels')
    p.add_argument('--quick', action='store_true')
    p.set_defaults(func=cmd_props)

    p = sub.add_parser('compare', help='Sobrepõe uma coluna de várias séries CSV')
    p.add_argument('--column', required=True)
    p.add_argument('--out', default='.')
    p.add_argument('series', nargs='+', help='label=caminho/series.csv')
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser('serve', help='API REST somente leitura do ledger')
    p.add_argument('--db', default=None)
    p.add_argument('--host', default='127.0.0.1')
    p.add_argument('--port', type=int, default=None)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or get_settings().log_level).upper(),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        return args.func(args)
    except IFEDError as e:
        logger.error(f"Erro: {str(e)}")
        print(f"❌ {type(e).__name__}: {str(e)}")
        return 2


if __name__ == '__main__':
    sys.exit(main())
