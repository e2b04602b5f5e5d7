import logging

from flask import Blueprint, current_app, request
from flask_restful import Api, Resource

from database import ResultsDatabase
from report import comparison_table

logger = logging.getLogger(__name__)

# Blueprint para API REST (somente leitura)
api_bp = Blueprint('api', __name__, url_prefix='/api/v1')
api = Api(api_bp)


def get_db():
    return ResultsDatabase(current_app.config.get('RESULTS_DB_PATH'))


class RunsAPI(Resource):
    def get(self):
        """Listar execuções"""
        try:
            limit = request.args.get('limit', 100, type=int)
            runs = get_db().list_runs(
                benchmark=request.args.get('benchmark'),
                kernel=request.args.get('kernel'),
                status=request.args.get('status'),
                limit=limit,
            )
            return {'success': True, 'runs': runs, 'count': len(runs)}, 200
        except Exception as e:
            logger.error(f"Erro ao listar execuções: {str(e)}")
            return {'success': False, 'error': str(e)}, 500


class RunAPI(Resource):
    def get(self, run_id):
        """Detalhes de uma execução"""
        run = get_db().get_run(run_id)
        if run is None:
            return {'success': False, 'error': f'Execução {run_id} não encontrada'}, 404
        return {'success': True, 'run': run}, 200


class RunSeriesAPI(Resource):
    def get(self, run_id):
        """Série temporal de uma execução"""
        series = get_db().get_series(run_id)
        if series is None:
            return {'success': False, 'error': f'Execução {run_id} não encontrada'}, 404
        return {'success': True, 'run_id': run_id, 'series': series}, 200


class ComparisonAPI(Resource):
    def get(self):
        """Tabela kernel x MFAC de uma métrica"""
        metric = request.args.get('metric')
        benchmark = request.args.get('benchmark')
        if not metric:
            return {'success': False, 'error': 'Parâmetro metric é obrigatório'}, 400
        try:
            runs = get_db().list_runs(benchmark=benchmark, limit=10000)
            # list_runs vem do mais recente ao mais antigo; a tabela guarda o último valor
            table = comparison_table(reversed(runs), metric)
            cells = {}
            for kernel, row in table.iterrows():
                cells[kernel] = {f'{mfac:g}': (None if value != value else float(value))
                                 for mfac, value in row.items()}
            return {'success': True, 'metric': metric, 'benchmark': benchmark, 'table': cells}, 200
        except Exception as e:
            logger.error(f"Erro ao montar comparação: {str(e)}")
            return {'success': False, 'error': str(e)}, 500


class HealthAPI(Resource):
    def get(self):
        """Estado do serviço e estatísticas do ledger"""
        try:
            return {'success': True, 'status': 'ok', 'stats': get_db().get_statistics()}, 200
        except Exception as e:
            logger.error(f"Erro no health check: {str(e)}")
            return {'success': False, 'status': 'error', 'error': str(e)}, 503


# Registrar recursos da API
api.add_resource(RunsAPI, '/runs')
api.add_resource(RunAPI, '/runs/<int:run_id>')
api.add_resource(RunSeriesAPI, '/runs/<int:run_id>/series')
api.add_resource(ComparisonAPI, '/comparison')
api.add_resource(HealthAPI, '/health')


def init_api(app, db_path=None):
    """Inicializar API REST no app Flask"""
    if db_path is not None:
        app.config['RESULTS_DB_PATH'] = db_path
    app.register_blueprint(api_bp)
    return app
