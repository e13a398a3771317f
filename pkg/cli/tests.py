import io
import json
import os
import shutil
import struct
import tempfile

import numpy as np
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings
from scipy import stats

from bases.models import TagFileError
from bases.rng import derive_seed, reference_seed
from model.models import TAG_DTYPE, Channel
from model.presets import bench_document
from .base import BackflashCommand
from .reports import (
    HISTOGRAM_COLUMNS, SCHEMA_GUARD, SCHEMA_REPORT, SCHEMA_RUN, SCHEMA_TABLE, SPECTRUM_COLUMNS, SWEEP_COLUMNS,
    metadata_path, read_csv, read_json,
)
from .runner import run_command
from .tagfile import HEADER, read_all_tags, read_provenance, read_tags, write_tags


def _tags(channels, timestamps):
    tags = np.empty(len(timestamps), dtype=TAG_DTYPE)
    tags['channel'] = channels
    tags['timestamp'] = timestamps
    return tags


class TagFileTest(SimpleTestCase):
    """
    Pruebas del formato binario de time tags.
    """

    def setUp(self):
        self.tmp = tempfile.mkdtemp()
        self.ruta = os.path.join(self.tmp, 'tags.bftt')

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_ida_y_vuelta(self):
        """Verifica que 1e6 tags monotonos se lean identicos"""
        rng = np.random.default_rng(1)
        tiempos = np.cumsum(rng.integers(0, 5000, 1000000)).astype(np.uint64)
        tags = _tags(rng.integers(0, 3, 1000000), tiempos)
        self.assertEqual(write_tags(self.ruta, tags), 1000000)
        self.assertEqual(os.path.getsize(self.ruta), HEADER.size + 9 * 1000000)
        leidos = read_all_tags(self.ruta)
        self.assertEqual(leidos.tobytes(), tags.tobytes())

    def test_lectura_por_bloques(self):
        tags = _tags([0, 1, 0, 2, 0], [1, 2, 3, 4, 5])
        write_tags(self.ruta, tags)
        bloques = list(read_tags(self.ruta, chunk_records=2))
        self.assertEqual([b.size for b in bloques], [2, 2, 1])

    def test_cabecera(self):
        write_tags(self.ruta, _tags([0], [7]))
        with open(self.ruta, 'rb') as fh:
            self.assertEqual(HEADER.unpack(fh.read(8)), (b'BFTT', 1, 3, 0))

    def test_archivo_sin_registros(self):
        write_tags(self.ruta, np.empty(0, dtype=TAG_DTYPE))
        self.assertEqual(list(read_tags(self.ruta)), [])
        self.assertEqual(read_all_tags(self.ruta).size, 0)

    def test_registro_truncado(self):
        """Verifica que el error indique el byte donde empieza el registro incompleto"""
        write_tags(self.ruta, _tags([0, 0, 0], [1, 2, 3]))
        with open(self.ruta, 'r+b') as fh:
            fh.truncate(HEADER.size + 9 * 2 + 4)
        with self.assertRaises(TagFileError) as ctx:
            read_all_tags(self.ruta)
        self.assertEqual(ctx.exception.offset, HEADER.size + 18)
        self.assertIn('byte 26', str(ctx.exception))

    def test_magic_invalido(self):
        with open(self.ruta, 'wb') as fh:
            fh.write(struct.pack('<4sHBB', b'XXXX', 1, 3, 0))
        with self.assertRaises(TagFileError):
            read_all_tags(self.ruta)

    def test_canal_desconocido(self):
        with open(self.ruta, 'wb') as fh:
            fh.write(HEADER.pack(b'BFTT', 1, 3, 0))
            fh.write(_tags([0, 7], [1, 2]).tobytes())
        with self.assertRaises(TagFileError) as ctx:
            read_all_tags(self.ruta)
        self.assertEqual(ctx.exception.record, 1)

    def test_timestamp_decreciente(self):
        """Verifica que se reporte el registro que rompe la monotonia del canal"""
        with open(self.ruta, 'wb') as fh:
            fh.write(HEADER.pack(b'BFTT', 1, 3, 0))
            fh.write(_tags([0, 1, 0, 1, 0], [10, 5, 20, 6, 15]).tobytes())
        with self.assertRaises(TagFileError) as ctx:
            read_all_tags(self.ruta)
        self.assertEqual(ctx.exception.record, 4)
        self.assertIn('OTDR @ 15 ps', str(ctx.exception))
        self.assertEqual(ctx.exception.offset, HEADER.size + 36)

    def test_monotonia_entre_bloques(self):
        with open(self.ruta, 'wb') as fh:
            fh.write(HEADER.pack(b'BFTT', 1, 3, 0))
            fh.write(_tags([0, 0, 0], [10, 20, 15]).tobytes())
        with self.assertRaises(TagFileError) as ctx:
            list(read_tags(self.ruta, chunk_records=2))
        self.assertEqual(ctx.exception.record, 2)

    def test_escritura_rechaza_desorden(self):
        with self.assertRaises(TagFileError):
            write_tags(self.ruta, _tags([1, 1], [5, 4]))
        self.assertFalse(os.path.exists(self.ruta))


class RunCommandTest(SimpleTestCase):
    """
    Pruebas de los comandos y de los codigos de salida 0, 1 y 2.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.mkdtemp()
        cls.bench = os.path.join(cls.tmp, 'dut1.json')
        with open(cls.bench, 'w', encoding='utf-8') as fh:
            json.dump(bench_document('DUT1'), fh)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)
        super().tearDownClass()

    def ruta(self, nombre):
        return os.path.join(self.tmp, nombre)

    def correr(self, *argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        codigo = run_command(list(argv), stdout=stdout, stderr=stderr)
        return codigo, stdout.getvalue(), stderr.getvalue()

    def test_sin_comando(self):
        self.assertEqual(self.correr()[0], 1)
        self.assertEqual(self.correr('plot')[0], 1)

    def test_opcion_desconocida(self):
        self.assertEqual(self.correr('simulate', '--bench', self.bench, '--color', 'rojo')[0], 1)

    def test_opcion_obligatoria(self):
        self.assertEqual(self.correr('simulate', '--bench', self.bench)[0], 1)

    def test_pulsos_y_duracion(self):
        codigo, _, _ = self.correr('simulate', '--bench', self.bench, '--out', self.ruta('x.bftt'))
        self.assertEqual(codigo, 1)

    def test_esquema_distinto(self):
        """Verifica codigo 2 ante una version de esquema distinta"""
        ruta = self.ruta('viejo.json')
        with open(ruta, 'w', encoding='utf-8') as fh:
            json.dump(bench_document('DUT1', schema='backflash-bench/0'), fh)
        codigo, _, stderr = self.correr('simulate', '--bench', ruta, '--pulses', '10', '--out', self.ruta('v.bftt'))
        self.assertEqual(codigo, 2)
        self.assertIn('backflash-bench/1', stderr)

    def test_banco_invalido(self):
        ruta = self.ruta('invalido.json')
        documento = bench_document('DUT1')
        documento['meas_detector']['efficiency'] = 3.0
        with open(ruta, 'w', encoding='utf-8') as fh:
            json.dump(documento, fh)
        codigo, _, stderr = self.correr('simulate', '--bench', ruta, '--pulses', '10', '--out', self.ruta('i.bftt'))
        self.assertEqual(codigo, 2)
        self.assertIn('meas_detector.efficiency', stderr)

    def test_archivo_inexistente(self):
        codigo, _, _ = self.correr('histogram', '--tags', self.ruta('no.bftt'), '--out', self.ruta('h.csv'),
                                   '--period-ps', '1000')
        self.assertEqual(codigo, 2)

    @override_settings(BACKFLASH_THREADS=4)
    def test_simulate_determinista(self):
        """Verifica que --seed 42 dos veces produzca archivos identicos byte a byte"""
        a, b = self.ruta('a.bftt'), self.ruta('b.bftt')
        for ruta, hilos in ((a, '1'), (b, '3')):
            codigo, _, _ = self.correr('simulate', '--bench', self.bench, '--pulses', '20000', '--seed', '42',
                                       '--workers', hilos, '--out', ruta, '--debug')
            self.assertEqual(codigo, 0)
        with open(a, 'rb') as fa, open(b, 'rb') as fb:
            self.assertEqual(fa.read(), fb.read())
        meta = read_json(metadata_path(a), SCHEMA_RUN)
        self.assertEqual(meta['seed'], 42)
        self.assertEqual(meta['pulse_count'], 20000)
        otdr = int(np.count_nonzero(read_all_tags(a)['channel'] == Channel.OTDR))
        self.assertEqual(read_provenance(a).size, otdr)

    def test_histogram(self):
        """Verifica el CSV del histograma y su sidecar con hash de configuracion y semilla"""
        tags = self.ruta('h.bftt')
        self.correr('simulate', '--bench', self.bench, '--pulses', '5000', '--seed', '9', '--out', tags)
        salida = self.ruta('h.csv')
        codigo, _, _ = self.correr('histogram', '--tags', tags, '--out', salida, '--bin-width', '1000')
        self.assertEqual(codigo, 0)
        filas = read_csv(salida, HISTOGRAM_COLUMNS)
        self.assertEqual(len(filas), 20000)
        otdr = int(np.count_nonzero(read_all_tags(tags)['channel'] == Channel.OTDR))
        self.assertEqual(sum(int(f[1]) for f in filas), otdr)

        meta = read_json(metadata_path(salida), SCHEMA_TABLE)
        self.assertEqual(meta['kind'], 'histogram')
        self.assertEqual(meta['seed'], 9)
        self.assertEqual(meta['config_hash'], read_json(metadata_path(tags), SCHEMA_RUN)['config_hash'])
        self.assertEqual(meta['columns'], list(HISTOGRAM_COLUMNS))
        self.assertEqual((meta['bin_width_ps'], meta['total_triggers']), (1000, 5000))

    def test_informe_incompleto(self):
        """Verifica codigo 2 si el informe tiene el esquema correcto pero le faltan campos"""
        cm = self.ruta('cm_incompleto.json')
        with open(cm, 'w', encoding='utf-8') as fh:
            json.dump({'schema': 'backflash-cm/1', 'isolation_db': 30.0}, fh)
        vacio = self.ruta('vacio.json')
        with open(vacio, 'w', encoding='utf-8') as fh:
            json.dump({'schema': SCHEMA_REPORT}, fh)
        codigo, _, stderr = self.correr('guard', '--report', vacio, '--countermeasure', cm,
                                        '--out', self.ruta('g_vacio.json'))
        self.assertEqual(codigo, 2)
        self.assertIn('config', stderr)

        parcial = self.ruta('parcial.json')
        with open(parcial, 'w', encoding='utf-8') as fh:
            json.dump({'schema': SCHEMA_REPORT, 'config': bench_document('DUT1'), 'report': {'p_leak': 0.1}}, fh)
        codigo, _, stderr = self.correr('guard', '--report', parcial, '--countermeasure', cm,
                                        '--out', self.ruta('g_parcial.json'))
        self.assertEqual(codigo, 2)
        self.assertIn('report.n_backflash', stderr)

        lista = self.ruta('lista.json')
        with open(lista, 'w', encoding='utf-8') as fh:
            json.dump({'schema': SCHEMA_REPORT, 'config': bench_document('DUT1'), 'report': []}, fh)
        self.assertEqual(self.correr('guard', '--report', lista, '--countermeasure', cm,
                                     '--out', self.ruta('g_lista.json'))[0], 2)

    def test_metadatos_incompletos(self):
        """Verifica codigo 2 si el sidecar de los tags no trae semilla ni numero de pulsos"""
        gated, reference = self.ruta('mg.bftt'), self.ruta('mr.bftt')
        self.correr('simulate', '--bench', self.bench, '--pulses', '2000', '--out', gated)
        self.correr('simulate', '--bench', self.bench, '--pulses', '2000', '--gates-off', '--out', reference)
        with open(metadata_path(gated), 'w', encoding='utf-8') as fh:
            json.dump({'schema': SCHEMA_RUN, 'config': bench_document('DUT1')}, fh)
        codigo, _, stderr = self.correr('analyze', '--gated', gated, '--reference', reference,
                                        '--out', self.ruta('m.json'))
        self.assertEqual(codigo, 2)
        self.assertIn('pulse_count', stderr)
        codigo, _, _ = self.correr('histogram', '--tags', gated, '--out', self.ruta('m.csv'))
        self.assertEqual(codigo, 2)

    def test_analyze_y_guard(self):
        """Verifica P_L cerca de 0.098 en DUT1 simulado y la fuga residual de la contramedida"""
        gated, reference = self.ruta('g.bftt'), self.ruta('r.bftt')
        self.assertEqual(self.correr('simulate', '--bench', self.bench, '--pulses', '2000000', '--seed', '1',
                                     '--out', gated)[0], 0)
        self.assertEqual(self.correr('simulate', '--bench', self.bench, '--pulses', '2000000', '--seed', '2',
                                     '--gates-off', '--out', reference)[0], 0)
        informe = self.ruta('report.json')
        codigo, _, _ = self.correr('analyze', '--gated', gated, '--reference', reference, '--out', informe)
        self.assertEqual(codigo, 0)
        documento = read_json(informe, SCHEMA_REPORT)
        self.assertAlmostEqual(documento['report']['p_leak'], 0.098, delta=0.03)
        self.assertEqual(documento['seeds'], {'gated': 1, 'reference': 2})
        self.assertTrue(documento['histogram']['bin_width_is_default'])
        self.assertEqual(len(documento['config_hash']), 64)

        cm = self.ruta('cm.json')
        with open(cm, 'w', encoding='utf-8') as fh:
            json.dump({'schema': 'backflash-cm/1', 'isolation_db': 30.0}, fh)
        guardia = self.ruta('guard.json')
        codigo, _, _ = self.correr('guard', '--report', informe, '--countermeasure', cm, '--out', guardia)
        self.assertEqual(codigo, 0)
        residual = read_json(guardia, SCHEMA_GUARD)
        self.assertAlmostEqual(residual['report']['p_leak'], documento['report']['p_leak'] * 1e-3, places=12)
        self.assertEqual(residual['config_hash'], documento['config_hash'])

        self.assertEqual(self.correr('analyze', '--gated', gated, '--reference', reference,
                                     '--out', informe, '--region', 'x')[0], 1)
        self.assertEqual(self.correr('guard', '--report', guardia, '--countermeasure', cm,
                                     '--out', self.ruta('g2.json'))[0], 2)

    def test_sweep_creciente(self):
        """Verifica P_L estrictamente creciente con la sobretension 3, 4.5 y 7 V"""
        banco = self.ruta('brillante.json')
        with open(banco, 'w', encoding='utf-8') as fh:
            json.dump(bench_document('DUT1', laser={'mean_photon_number_at_dut': 1.0},
                                     meas_detector={'dark_count_rate_hz': 0.0}), fh)
        salida = self.ruta('sweep.csv')
        codigo, _, _ = self.correr('sweep', '--bench', banco, '--axis', 'excess_bias', '--values', '3,4.5,7',
                                   '--pulses', '500000', '--seed', '42', '--out', salida)
        self.assertEqual(codigo, 0)
        filas = read_csv(salida, SWEEP_COLUMNS)
        p_leak = [float(f[2]) for f in filas]
        self.assertEqual([float(f[1]) for f in filas], [3.0, 4.5, 7.0])
        self.assertTrue(all(b > a for a, b in zip(p_leak, p_leak[1:])))

        meta = read_json(metadata_path(salida), SCHEMA_TABLE)
        self.assertEqual((meta['kind'], meta['axis'], meta['seed']), ('sweep', 'excess_bias', 42))
        self.assertEqual(len(meta['config_hash']), 64)
        semillas = [(p['gated'], p['reference']) for p in meta['point_seeds']]
        self.assertEqual(semillas, [(derive_seed(42, i), derive_seed(reference_seed(42), i)) for i in range(3)])

    def test_spectrum(self):
        """Verifica backflash uniforme por banda con chi2 al 99 % y reflexiones solo en la banda del laser"""
        banco = self.ruta('espectro.json')
        with open(banco, 'w', encoding='utf-8') as fh:
            json.dump(bench_document('DUT1', laser={'mean_photon_number_at_dut': 1.0},
                                     meas_detector={'dark_count_rate_hz': 0.0}), fh)
        salida = self.ruta('spectrum.csv')
        codigo, _, _ = self.correr('spectrum', '--bench', banco, '--pulses', '500000', '--seed', '3',
                                   '--out', salida)
        self.assertEqual(codigo, 0)
        filas = {float(f[0]): f for f in read_csv(salida, SPECTRUM_COLUMNS)}
        self.assertEqual(sorted(filas), [1535.0 + 10.0 * i for i in range(7)])

        # [1550, 1560) es la unica banda que contiene el laser
        for centro, fila in filas.items():
            if centro == 1555.0:
                self.assertGreater(int(fila[3]), 0)
            else:
                self.assertEqual(int(fila[3]), 0)

        cuentas = np.array([float(f[2]) for c, f in sorted(filas.items()) if c != 1555.0])
        media = cuentas.mean()
        self.assertGreater(media, 50)
        chi2 = float(np.sum((cuentas - media) ** 2) / (media * (1 - 1 / 7.0)))
        self.assertLess(chi2, stats.chi2.ppf(0.99, cuentas.size - 1))

        meta = read_json(metadata_path(salida), SCHEMA_TABLE)
        self.assertEqual((meta['kind'], meta['seed'], meta['bandwidth_nm']), ('spectrum', 3, 10.0))
        self.assertEqual(len(meta['config_hash']), 64)


class _Falla(BackflashCommand):

    def __init__(self, error):
        super().__init__(stdout=io.StringIO(), stderr=io.StringIO())
        self.error = error

    def run(self, **options):
        raise self.error


class BackflashCommandTest(SimpleTestCase):
    """
    Traduccion de errores de datos a CommandError con codigo 2.
    """

    def test_campo_ausente(self):
        with self.assertRaises(CommandError) as ctx:
            _Falla(KeyError('seed')).handle()
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('seed', str(ctx.exception))

    def test_tipo_inesperado(self):
        with self.assertRaises(CommandError) as ctx:
            _Falla(TypeError('list indices must be integers')).handle()
        self.assertEqual(ctx.exception.returncode, 2)

    def test_error_de_uso_intacto(self):
        with self.assertRaises(CommandError) as ctx:
            _Falla(CommandError('uso', returncode=1)).handle()
        self.assertEqual(ctx.exception.returncode, 1)
