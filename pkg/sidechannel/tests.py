import os

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from bases.models import EmptyRegionError, OutOfRangeError, OverlappingPassbandsError
from model.models import FWHM_TO_SIGMA, BackflashProfile, LeakageReport, SpectralDensity
from tracelab.models import ResidualHistogram
from .analysis import (
    binary_leakage_bits, countermeasure_factors, discriminate, identify_detector_type, residual_leakage,
)
from .forms import countermeasure_to_dict, load_countermeasure, validate_countermeasure
from .models import Countermeasure, Passband, RegionShape

RECTANGULAR = BackflashProfile.rectangular(10.0)
TRAPEZOIDAL = BackflashProfile.trapezoidal(10.0, 2.0)
FLAT = SpectralDensity.flat(1530.0, 1600.0)


class DiscriminateTest(SimpleTestCase):
    """
    Pruebas de la ventaja de adivinacion por distancia de variacion total.
    """

    def test_perfiles_identicos(self):
        """Verifica adivinacion 0.5 exacta con perfiles iguales"""
        resultado = discriminate(RECTANGULAR, RECTANGULAR, 130.0)
        self.assertEqual(resultado.tv_distance, 0.0)
        self.assertEqual(resultado.guess_probability, 0.5)
        self.assertEqual(resultado.leaked_bits_per_detection, 0.0)

    def test_soportes_disjuntos(self):
        """Verifica adivinacion 1.0 exacta sin solape ni jitter"""
        tardio = BackflashProfile.rectangular(10.0, start_ns=10.0)
        resultado = discriminate(RECTANGULAR, tardio, 0.0)
        self.assertEqual(resultado.tv_distance, 1.0)
        self.assertEqual(resultado.guess_probability, 1.0)
        self.assertEqual(resultado.leaked_bits_per_detection, 1.0)
        self.assertTrue(resultado.converged)

    def test_rectangulos_medio_solapados(self):
        """Verifica TV 0.5 y adivinacion 0.75 con 5 ns de solape"""
        desplazado = BackflashProfile.rectangular(10.0, start_ns=5.0)
        resultado = discriminate(RECTANGULAR, desplazado, 0.0)
        self.assertAlmostEqual(resultado.tv_distance, 0.5, delta=1e-4)
        self.assertAlmostEqual(resultado.guess_probability, 0.75, delta=1e-4)

    def test_simetrico(self):
        a = discriminate(RECTANGULAR, TRAPEZOIDAL, 130.0)
        b = discriminate(TRAPEZOIDAL, RECTANGULAR, 130.0)
        self.assertEqual(a.tv_distance, b.tv_distance)
        self.assertEqual(a.leaked_bits_per_detection, b.leaked_bits_per_detection)

    def test_monotono_con_el_jitter(self):
        """Verifica que la ventaja no crezca con el jitter en una rejilla de 10 puntos"""
        desplazado = BackflashProfile.rectangular(10.0, start_ns=3.0)
        rng = np.random.default_rng(5)
        pares = [(RECTANGULAR, desplazado), (RECTANGULAR, TRAPEZOIDAL)]
        for _ in range(3):
            knots = np.sort(rng.uniform(0.0, 10.0, 3))
            pesos = rng.uniform(0.1, 1.0, 5)
            aleatorio = BackflashProfile.from_shape([0.0, *knots, 10.0], pesos, 0.0, FLAT)
            pares.append((RECTANGULAR, aleatorio))
        for a, b in pares:
            previa = 1.0
            for jitter in np.linspace(0.0, 2000.0, 10):
                resultado = discriminate(a, b, jitter)
                self.assertGreaterEqual(resultado.guess_probability, 0.5)
                self.assertLessEqual(resultado.guess_probability, previa + 1e-4)
                previa = resultado.guess_probability

    def test_jitter_negativo(self):
        with self.assertRaises(OutOfRangeError):
            discriminate(RECTANGULAR, RECTANGULAR, -1.0)


class BinaryLeakageTest(SimpleTestCase):

    def test_extremos(self):
        self.assertEqual(binary_leakage_bits(0.0), 0.0)
        self.assertEqual(binary_leakage_bits(1.0), 1.0)

    def test_intermedio(self):
        # 1 - H2(0.25)
        self.assertAlmostEqual(binary_leakage_bits(0.5), 0.18872187554086717, places=12)


class CountermeasureTest(SimpleTestCase):
    """
    Pruebas de la fuga residual con aislamiento, filtros y puerta corta.
    """

    def setUp(self):
        self.reporte = LeakageReport(4900.0, 70.0, 1000000, 0.1, 0.5, 0.095, 0.101)

    def _residual(self, cm):
        return residual_leakage(self.reporte, cm, FLAT, RECTANGULAR, 1550.0)

    def test_aislamiento(self):
        """Verifica P_L' = P_L * 1e-3 con 30 dB de aislamiento"""
        residual = self._residual(Countermeasure(isolation_db=30.0))
        self.assertAlmostEqual(residual.p_leak, 0.098e-3, places=15)
        self.assertAlmostEqual(residual.ci_high, 0.101e-3, places=15)

    def test_fraccion_espectral(self):
        cm = Countermeasure(filter_passbands=(Passband(1550.0, 10.0),))
        factores = countermeasure_factors(cm, FLAT, RECTANGULAR, 1550.0)
        self.assertAlmostEqual(factores.spectral, 1.0 / 7.0, places=12)
        self.assertFalse(factores.blocks_signal)

    def test_filtro_que_bloquea_la_senal(self):
        cm = Countermeasure(filter_passbands=(Passband(1580.0, 10.0),))
        self.assertTrue(countermeasure_factors(cm, FLAT, RECTANGULAR, 1550.0).blocks_signal)

    def test_banda_semiabierta(self):
        """Verifica que el laser en el borde superior de la banda quede bloqueado"""
        banda = Passband(1545.0, 10.0)
        self.assertTrue(banda.contains(1540.0))
        self.assertFalse(banda.contains(1550.0))
        cm = Countermeasure(filter_passbands=(banda, Passband(1560.0, 10.0)))
        self.assertTrue(countermeasure_factors(cm, FLAT, RECTANGULAR, 1550.0).blocks_signal)

    def test_puerta_corta(self):
        """Verifica factor temporal 0.5 con puerta de 5 ns sobre un rectangulo de 10 ns"""
        cm = Countermeasure(gate_width_override_ns=5.0)
        factores = countermeasure_factors(cm, FLAT, RECTANGULAR, 1550.0)
        self.assertAlmostEqual(factores.temporal, 0.5, delta=0.02)
        desplazada = countermeasure_factors(cm, FLAT, RECTANGULAR, 1550.0, avalanche_offset_ns=2.0)
        self.assertAlmostEqual(desplazada.temporal, 0.3, places=12)

    def test_factores_conmutan(self):
        """Verifica que aislamiento y filtro den lo mismo en cualquier orden"""
        aislador = Countermeasure(isolation_db=30.0)
        filtro = Countermeasure(filter_passbands=(Passband(1550.0, 10.0),))
        a = residual_leakage(self._residual(aislador), filtro, FLAT, RECTANGULAR, 1550.0)
        b = residual_leakage(self._residual(filtro), aislador, FLAT, RECTANGULAR, 1550.0)
        self.assertEqual(a.p_leak, b.p_leak)
        self.assertEqual(a.ci_low, b.ci_low)

    def test_bandas_solapadas(self):
        with self.assertRaises(OverlappingPassbandsError):
            Countermeasure(filter_passbands=(Passband(1550.0, 10.0), Passband(1556.0, 4.0)))

    def test_aislamiento_negativo(self):
        with self.assertRaises(OutOfRangeError):
            Countermeasure(isolation_db=-1.0)


class CountermeasureFormTest(SimpleTestCase):

    def test_documento_valido(self):
        cm = validate_countermeasure({
            'schema': 'backflash-cm/1',
            'isolation_db': 30,
            'filter_passbands': [{'center_nm': 1550, 'bandwidth_nm': 1}],
        })
        self.assertEqual(cm.isolation_db, 30.0)
        self.assertEqual(cm.filter_passbands[0].high, 1550.5)
        self.assertEqual(validate_countermeasure(countermeasure_to_dict(cm)), cm)

    def test_ruta_del_error(self):
        """Verifica que el error apunte a la banda invalida"""
        with self.assertRaises(ValidationError) as ctx:
            validate_countermeasure({'schema': 'backflash-cm/1', 'filter_passbands': [{'center_nm': 1550}]})
        self.assertIn('filter_passbands[0].bandwidth_nm', ctx.exception.message_dict)

    def test_solape_en_documento(self):
        with self.assertRaises(ValidationError) as ctx:
            validate_countermeasure({
                'schema': 'backflash-cm/1',
                'filter_passbands': [{'center_nm': 1550, 'bandwidth_nm': 10}, {'center_nm': 1552, 'bandwidth_nm': 10}],
            })
        self.assertIn('filter_passbands', ctx.exception.message_dict)

    def test_documento_de_ejemplo(self):
        raiz = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        cm = load_countermeasure(os.path.join(raiz, 'benches', 'isolator_filter.json'))
        self.assertEqual(cm.isolation_db, 30.0)


def _region(perfil, jitter_fwhm_ps, semilla, n=1000000, bin_width=100, pad=5):
    """Forma medida sintetica: n fotones del perfil con jitter gaussiano."""
    rng = np.random.default_rng(semilla)
    tiempos = perfil.sample(rng, n) * 1000.0 + rng.normal(0.0, jitter_fwhm_ps * FWHM_TO_SIGMA, n)
    bins = int(np.ceil(perfil.duration_ns * 1000.0 / bin_width)) + 2 * pad
    indices = np.clip(np.floor(tiempos / bin_width).astype(int) + pad, 0, bins - 1)
    cuentas = np.bincount(indices, minlength=bins).astype(float)
    residual = ResidualHistogram(bin_width, 0, bins * bin_width, cuentas, cuentas.copy(), 1.0, 1, 1)
    return RegionShape.from_residual(residual, (0, bins * bin_width))


class IdentifyDetectorTypeTest(SimpleTestCase):
    """
    Pruebas de identificacion del tipo de detector por la forma de la region.
    """

    def test_identifica_el_perfil_de_origen(self):
        """Verifica que cada perfil quede primero con 1e6 fotones"""
        catalogo = {'DUT1': RECTANGULAR, 'DUT2': TRAPEZOIDAL}
        for nombre, perfil in catalogo.items():
            ranking = identify_detector_type(_region(perfil, 130.0, 4), catalogo, jitter_fwhm_ps=130.0)
            self.assertEqual(ranking[0].name, nombre)
            self.assertLess(ranking[0].distance, ranking[1].distance)

    def test_catalogo_de_uno(self):
        ranking = identify_detector_type(_region(RECTANGULAR, 130.0, 5, n=10000), {'DUT1': RECTANGULAR}, 130.0)
        self.assertEqual(len(ranking), 1)
        self.assertGreaterEqual(ranking[0].distance, 0.0)
        self.assertFalse(ranking[0].tied)

    def test_empate_explicito(self):
        """Verifica que dos entradas iguales se reporten empatadas y ordenadas por nombre"""
        catalogo = [('b', RECTANGULAR), ('a', RECTANGULAR)]
        ranking = identify_detector_type(_region(RECTANGULAR, 0.0, 6, n=10000), catalogo)
        self.assertEqual([m.name for m in ranking], ['a', 'b'])
        self.assertTrue(all(m.tied for m in ranking))

    def test_region_vacia(self):
        vacia = RegionShape(np.zeros(10), 100)
        with self.assertRaises(EmptyRegionError):
            identify_detector_type(vacia, {'DUT1': RECTANGULAR})

    def test_catalogo_vacio(self):
        with self.assertRaises(OutOfRangeError):
            identify_detector_type(_region(RECTANGULAR, 0.0, 6, n=100), {})
