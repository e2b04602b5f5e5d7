import io
import json
import logging
import os
import tempfile
import zipfile
from datetime import datetime
from typing import Dict, List, Optional

import numpy as np

from config import get_settings
from macgrid import dump_field, load_field
from report import CSV_LINE_TERMINATOR

logger = logging.getLogger(__name__)

DUMP_PREFIX = 'ifed_dump_'


class DumpService:
    """Dumps diagnósticos de execuções que falharam (campo, malhas, série e metadados)."""

    def __init__(self, dump_dir: Optional[str] = None, max_dumps: Optional[int] = None):
        settings = get_settings()
        self.dump_dir = dump_dir or settings.dump_dir
        self.max_dumps = max_dumps if max_dumps is not None else settings.max_dumps

        if not os.path.exists(self.dump_dir):
            os.makedirs(self.dump_dir)

    def create_dump(self, scenario, fluid, states, series, reason: Optional[str] = None,
                    error_type: Optional[str] = None, step: Optional[int] = None) -> Optional[str]:
        """Cria um zip com o último estado válido da execução; devolve o caminho ou None"""
        try:
            timestamp = datetime.now().strftime('%Y%m%d_%H%M%S_%f')
            dump_name = f'{DUMP_PREFIX}{scenario.config.name}_{timestamp}'
            dump_path = os.path.join(self.dump_dir, f'{dump_name}.zip')

            with zipfile.ZipFile(dump_path, 'w', zipfile.ZIP_DEFLATED) as zipf:
                # Campo euleriano via o formato de dump da malha MAC
                with tempfile.TemporaryDirectory() as tmp:
                    field_path = dump_field(fluid.field, scenario.spec, os.path.join(tmp, 'field.npz'),
                                            time=fluid.time)
                    zipf.write(field_path, 'field.npz')

                # Estados lagrangianos, um conjunto de arrays por corpo
                arrays = {}
                for body, state in zip(scenario.bodies, states):
                    arrays[f'{body.name}__positions'] = state.positions
                    arrays[f'{body.name}__velocities'] = state.velocities
                    arrays[f'{body.name}__forces'] = state.forces
                buffer = io.BytesIO()
                np.savez(buffer, **arrays)
                zipf.writestr('lagrangian.npz', buffer.getvalue())

                zipf.writestr('config.json', scenario.config.to_json())
                zipf.writestr('series.csv', series.to_frame().to_csv(index=False,
                                                                      lineterminator=CSV_LINE_TERMINATOR))

                metadata = {
                    'dump_date': datetime.now().isoformat(),
                    'label': scenario.config.label,
                    'reason': reason,
                    'error_type': error_type,
                    'step': step,
                    'time': fluid.time,
                    'bodies': [body.name for body in scenario.bodies],
                }
                zipf.writestr('dump_metadata.json', json.dumps(metadata, indent=2))

            self.cleanup_old_dumps()

            print(f"✅ Dump diagnóstico criado: {dump_path}")
            return dump_path

        except Exception as e:
            logger.error(f"Erro ao criar dump: {str(e)}")
            print(f"❌ Erro ao criar dump: {str(e)}")
            return None

    def cleanup_old_dumps(self):
        """Remove dumps antigos, mantendo apenas os mais recentes"""
        try:
            dump_files = []
            for file in os.listdir(self.dump_dir):
                if file.startswith(DUMP_PREFIX) and file.endswith('.zip'):
                    file_path = os.path.join(self.dump_dir, file)
                    dump_files.append((file_path, os.path.getmtime(file_path)))

            dump_files.sort(key=lambda x: x[1], reverse=True)

            if len(dump_files) > self.max_dumps:
                for file_path, _ in dump_files[self.max_dumps:]:
                    os.remove(file_path)
                    print(f"🗑️ Dump antigo removido: {file_path}")

        except Exception as e:
            print(f"⚠️ Erro ao limpar dumps antigos: {str(e)}")

    def list_dumps(self) -> List[Dict]:
        dumps = []
        for file in sorted(os.listdir(self.dump_dir)):
            if not (file.startswith(DUMP_PREFIX) and file.endswith('.zip')):
                continue
            path = os.path.join(self.dump_dir, file)
            try:
                with zipfile.ZipFile(path, 'r') as zipf:
                    metadata = json.loads(zipf.read('dump_metadata.json'))
            except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as e:
                logger.warning(f"Dump ilegível {path}: {str(e)}")
                continue
            metadata['path'] = path
            dumps.append(metadata)
        return dumps

    def load_dump(self, dump_path: str) -> Dict:
        """Lê um dump: campo (StaggeredField, cabeçalho), arrays lagrangianos, config e metadados"""
        if not os.path.exists(dump_path):
            raise FileNotFoundError(f"Dump não encontrado: {dump_path}")
        with zipfile.ZipFile(dump_path, 'r') as zipf:
            metadata = json.loads(zipf.read('dump_metadata.json'))
            config = json.loads(zipf.read('config.json'))
            series_csv = zipf.read('series.csv').decode('utf-8')
            with np.load(io.BytesIO(zipf.read('lagrangian.npz')), allow_pickle=False) as data:
                lagrangian = {key: data[key].copy() for key in data.files}
            with tempfile.TemporaryDirectory() as tmp:
                zipf.extract('field.npz', tmp)
                field, header = load_field(os.path.join(tmp, 'field.npz'))
        return {
            'metadata': metadata,
            'config': config,
            'series_csv': series_csv,
            'lagrangian': lagrangian,
            'field': field,
            'field_header': header,
        }
