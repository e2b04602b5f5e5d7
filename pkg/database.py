import json
import math
import shutil
import sqlite3
from datetime import datetime

from config import get_settings

RUN_COLUMNS = ('id', 'label', 'name', 'benchmark', 'kernel', 'mfac', 'resolution', 'status',
               'steps', 'final_time', 'wall_time', 'failure_reason', 'error_type', 'dump_path',
               'steady_time', 'dt_halvings', 'config_json', 'metrics_json', 'created_at')


def _clean(value):
    """NaN e infinito não são JSON válido; viram None"""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class ResultsDatabase:
    def __init__(self, db_path=None):
        self.db_path = db_path or get_settings().results_db
        self.init_database()

    def _connect(self):
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def init_database(self):
        """Inicializa o banco de dados com as tabelas necessárias"""
        conn = self._connect()
        cursor = conn.cursor()

        # Tabela de execuções
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                label TEXT NOT NULL,
                name TEXT NOT NULL,
                benchmark TEXT NOT NULL,
                kernel TEXT NOT NULL,
                mfac REAL NOT NULL,
                resolution INTEGER,
                status TEXT NOT NULL,
                steps INTEGER DEFAULT 0,
                final_time REAL,
                wall_time REAL,
                failure_reason TEXT,
                error_type TEXT,
                dump_path TEXT,
                steady_time REAL,
                dt_halvings INTEGER DEFAULT 0,
                config_json TEXT NOT NULL,
                metrics_json TEXT NOT NULL,
                created_at DATETIME DEFAULT CURRENT_TIMESTAMP
            )
        ''')

        # Tabela das séries temporais (formato longo)
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS series (
                run_id INTEGER NOT NULL,
                row_index INTEGER NOT NULL,
                t REAL NOT NULL,
                column_name TEXT NOT NULL,
                value REAL,
                FOREIGN KEY (run_id) REFERENCES runs (id)
            )
        ''')
        cursor.execute('CREATE INDEX IF NOT EXISTS idx_series_run ON series (run_id, column_name)')

        conn.commit()
        conn.close()

    def record_run(self, result):
        """Salva uma execução (RunResult) e sua série; devolve o id"""
        config = result.config
        metrics = {key: _clean(value) for key, value in result.metrics().items()}
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute('''
            INSERT INTO runs (label, name, benchmark, kernel, mfac, resolution, status, steps,
                              final_time, wall_time, failure_reason, error_type, dump_path,
                              steady_time, dt_halvings, config_json, metrics_json)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        ''', (config.label, config.name, config.benchmark, config.kernel, config.mfac,
              config.resolution, result.status, result.steps, result.final_time, result.wall_time,
              result.failure_reason, result.error_type, result.dump_path, result.steady_time,
              result.dt_halvings, config.to_json(), json.dumps(metrics)))
        run_id = cursor.lastrowid

        series = result.series
        rows = []
        for index, (t, values) in enumerate(zip(series.times, series.rows)):
            for column, value in zip(series.columns, values):
                rows.append((run_id, index, t, column, _clean(value)))
        cursor.executemany('''
            INSERT INTO series (run_id, row_index, t, column_name, value) VALUES (?, ?, ?, ?, ?)
        ''', rows)

        conn.commit()
        conn.close()
        return run_id

    def _row_to_dict(self, row):
        data = {column: row[column] for column in RUN_COLUMNS}
        data['config'] = json.loads(data.pop('config_json'))
        data['metrics'] = json.loads(data.pop('metrics_json'))
        return data

    def list_runs(self, benchmark=None, kernel=None, status=None, limit=100):
        """Recupera execuções, mais recentes primeiro"""
        conn = self._connect()
        cursor = conn.cursor()

        clauses, params = [], []
        for column, value in (('benchmark', benchmark), ('kernel', kernel), ('status', status)):
            if value:
                clauses.append(f'{column} = ?')
                params.append(value)
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ''
        cursor.execute(f'SELECT * FROM runs {where} ORDER BY id DESC LIMIT ?', (*params, limit))

        runs = [self._row_to_dict(row) for row in cursor.fetchall()]
        conn.close()
        return runs

    def get_run(self, run_id):
        conn = self._connect()
        cursor = conn.cursor()
        cursor.execute('SELECT * FROM runs WHERE id = ?', (run_id,))
        row = cursor.fetchone()
        conn.close()
        return self._row_to_dict(row) if row else None

    def get_series(self, run_id):
        """Série de uma execução como {'t': [...], coluna: [...]}; None se não existir"""
        conn = self._connect()
        cursor = conn.cursor()
        cursor.execute('''
            SELECT row_index, t, column_name, value FROM series
            WHERE run_id = ? ORDER BY row_index ASC
        ''', (run_id,))
        records = cursor.fetchall()
        conn.close()

        if not records:
            return None if self.get_run(run_id) is None else {'t': []}
        times = {}
        columns = {}
        for record in records:
            times[record['row_index']] = record['t']
            columns.setdefault(record['column_name'], {})[record['row_index']] = record['value']
        order = sorted(times)
        data = {'t': [times[i] for i in order]}
        for name, values in columns.items():
            data[name] = [values.get(i) for i in order]
        return data

    def backup_database(self, backup_path=None):
        """Cria backup do banco de dados"""
        if not backup_path:
            timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
            backup_path = f'backup_ifed_results_{timestamp}.db'

        shutil.copy2(self.db_path, backup_path)
        return backup_path

    def get_statistics(self):
        """Retorna estatísticas das execuções registradas"""
        conn = self._connect()
        cursor = conn.cursor()

        cursor.execute('SELECT COUNT(*) FROM runs')
        total_runs = cursor.fetchone()[0]

        cursor.execute('SELECT status, COUNT(*) FROM runs GROUP BY status')
        runs_by_status = {row[0]: row[1] for row in cursor.fetchall()}

        cursor.execute('SELECT benchmark, COUNT(*) FROM runs GROUP BY benchmark')
        runs_by_benchmark = {row[0]: row[1] for row in cursor.fetchall()}

        cursor.execute('SELECT kernel, COUNT(*) FROM runs GROUP BY kernel')
        runs_by_kernel = {row[0]: row[1] for row in cursor.fetchall()}

        cursor.execute('SELECT COALESCE(SUM(wall_time), 0) FROM runs')
        total_wall_time = cursor.fetchone()[0]

        conn.close()

        return {
            'total_runs': total_runs,
            'runs_by_status': runs_by_status,
            'runs_by_benchmark': runs_by_benchmark,
            'runs_by_kernel': runs_by_kernel,
            'total_wall_time': total_wall_time,
        }
