import math

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from bases.models import EmptyRegionError, GeometryMismatchError, OutOfRangeError, ZeroTriggersError
from bases.rng import reference_seed
from model.models import TAG_DTYPE, Channel
from model.presets import dut1
from photonsim.engine import simulate
from photonsim.models import SimRun
from .analysis import (
    HistogramBuilder, build_histogram, detect_features, empty_like, estimate_leakage, integrate_backflash,
    merge, subtract_background,
)
from .models import CorrelationHistogram
from .pipeline import analyze_traces, choose_region, expected_backflash_window


def _histograma(cuentas, triggers=1, bin_width=100):
    cuentas = np.asarray(cuentas, dtype=np.int64)
    return CorrelationHistogram(bin_width, 0, cuentas.size * bin_width, cuentas, triggers)


def _tags(timestamps, channel=Channel.OTDR):
    tags = np.empty(len(timestamps), dtype=TAG_DTYPE)
    tags['channel'] = channel
    tags['timestamp'] = timestamps
    return tags


def _par(banco, semilla, pulsos):
    gated = simulate(SimRun(banco, semilla, pulse_count=pulsos))
    reference = simulate(SimRun(banco, reference_seed(semilla), pulse_count=pulsos, gates_enabled=False))
    return gated, reference


class BuildHistogramTest(SimpleTestCase):
    """
    Pruebas del plegado de tags en histogramas de correlacion.
    """

    def test_tres_tags_en_el_mismo_bin(self):
        hist = build_histogram(np.array([1010, 1020, 11050]), period=10000, bin_width=100)
        self.assertEqual(int(hist.counts[10]), 3)
        self.assertEqual(hist.total, 3)

    def test_tag_en_el_borde_del_periodo(self):
        """Verifica los bins semiabiertos: un tag en el periodo cae en el bin 0"""
        hist = build_histogram(np.array([10000, 20000]), period=10000, bin_width=100)
        self.assertEqual(int(hist.counts[0]), 2)

    def test_origen(self):
        hist = build_histogram(np.array([550]), period=1000, bin_width=100, origin=500)
        self.assertEqual(int(hist.counts[0]), 1)

    def test_filtra_el_canal(self):
        tags = np.concatenate([_tags([100, 200]), _tags([150], Channel.DUT_SYNC)])
        hist = build_histogram(tags, period=1000, bin_width=100)
        self.assertEqual(hist.total, 2)

    def test_ultimo_bin_parcial(self):
        hist = build_histogram(np.array([999]), period=1000, bin_width=300)
        self.assertEqual(hist.n_bins, 4)
        self.assertEqual(int(hist.counts[3]), 1)

    def test_parametros_no_positivos(self):
        with self.assertRaises(OutOfRangeError):
            build_histogram(np.array([1]), period=0, bin_width=10)
        with self.assertRaises(OutOfRangeError):
            build_histogram(np.array([1]), period=100, bin_width=0)

    def test_uniformidad_chi2(self):
        """Verifica con chi2 al 99 % que tags uniformes den un histograma plano"""
        rng = np.random.default_rng(2024)
        tags = rng.integers(0, 10 ** 9, 1000000)
        hist = build_histogram(tags, period=1000000, bin_width=1000)
        self.assertEqual(hist.total, 1000000)
        _, p_value = stats.chisquare(hist.counts)
        self.assertGreater(p_value, 0.01)


class MergeTest(SimpleTestCase):

    def setUp(self):
        self.a = _histograma([1, 2, 3], triggers=5)
        self.b = _histograma([4, 0, 1], triggers=7)

    def test_identidad(self):
        self.assertEqual(merge(self.a, empty_like(self.a)), self.a)

    def test_conmutativa_y_asociativa(self):
        c = _histograma([9, 9, 9], triggers=1)
        self.assertEqual(merge(self.a, self.b), merge(self.b, self.a))
        self.assertEqual(merge(merge(self.a, self.b), c), merge(self.a, merge(self.b, c)))
        self.assertEqual(merge(self.a, self.b).total_triggers, 12)

    def test_geometria_distinta(self):
        with self.assertRaises(GeometryMismatchError):
            merge(self.a, _histograma([1, 2, 3], bin_width=50))

    def test_por_bloques_igual_a_una_pasada(self):
        """Verifica en 100 conjuntos aleatorios que la fusion por bloques sea exacta"""
        rng = np.random.default_rng(7)
        for _ in range(100):
            tags = np.sort(rng.integers(0, 10 ** 7, rng.integers(0, 2000)))
            cortes = np.sort(rng.integers(0, tags.size + 1, 3))
            bloques = np.split(tags, cortes)
            una = build_histogram(tags, period=100000, bin_width=250)
            parcial = HistogramBuilder(100000, 250).result()
            for bloque in bloques:
                parcial = merge(parcial, build_histogram(bloque, period=100000, bin_width=250))
            streaming = build_histogram(iter(bloques), period=100000, bin_width=250)
            self.assertEqual(una, parcial)
            self.assertEqual(una, streaming)


class SubtractBackgroundTest(SimpleTestCase):

    def test_iguales_dan_cero(self):
        hist = _histograma([5, 7, 0, 3], triggers=10)
        residual = subtract_background(hist, hist)
        np.testing.assert_array_equal(residual.values, np.zeros(4))

    def test_sin_disparos_de_referencia(self):
        with self.assertRaises(ZeroTriggersError):
            subtract_background(_histograma([1], triggers=1), _histograma([1], triggers=0))

    def test_geometria_distinta(self):
        with self.assertRaises(GeometryMismatchError):
            subtract_background(_histograma([1, 2]), _histograma([1, 2, 3]))

    def test_referencia_con_el_doble_de_disparos(self):
        """Verifica que el residuo medio sea 0 a 4 sigma con tasas identicas"""
        rng = np.random.default_rng(11)
        gated = _histograma(rng.poisson(50, 2000), triggers=1000)
        reference = _histograma(rng.poisson(100, 2000), triggers=2000)
        residual = subtract_background(gated, reference)
        self.assertEqual(residual.scale, 0.5)
        total = math.fsum(residual.values)
        self.assertLess(abs(total), 4 * math.sqrt(math.fsum(residual.variance)))

    def test_integral_completa_exacta(self):
        """Verifica que integrar todo el residuo sea G - escala * R exactamente"""
        rng = np.random.default_rng(3)
        gated = _histograma(rng.poisson(20, 500), triggers=100)
        reference = _histograma(rng.poisson(40, 500), triggers=200)
        residual = subtract_background(gated, reference)
        n_b, _ = integrate_backflash(residual, (0, residual.span))
        self.assertEqual(n_b, gated.total - 0.5 * reference.total)


class DetectFeaturesTest(SimpleTestCase):
    """
    Pruebas de la clasificacion entre picos de reflexion y regiones anchas.
    """

    def test_histograma_plano(self):
        features = detect_features(_histograma(np.full(1000, 100)))
        self.assertEqual(features.peaks, ())
        self.assertEqual(features.backflash_regions, ())

    def test_pico_y_meseta(self):
        """Verifica un pico de un bin y una meseta de 10 ns con extremos a +/- 2 bins"""
        cuentas = np.full(1000, 100)
        cuentas[200] += 100 * 100
        cuentas[500:600] = 200
        features = detect_features(_histograma(cuentas))
        self.assertEqual(len(features.peaks), 1)
        self.assertEqual(len(features.backflash_regions), 1)
        self.assertAlmostEqual(features.peaks[0].delay, 20050.0, delta=200)
        region = features.backflash_regions[0]
        self.assertLessEqual(abs(region.start - 50000), 200)
        self.assertLessEqual(abs(region.end - 60000), 200)
        self.assertEqual(features.baseline, 100.0)
        self.assertGreater(region.excess, 0)

    def test_prominencia_minima(self):
        cuentas = np.full(1000, 100)
        cuentas[200] += 100
        features = detect_features(_histograma(cuentas), peak_min_prominence=1000)
        self.assertEqual(features.peaks, ())

    def test_ancho_maximo_configurable(self):
        cuentas = np.full(1000, 100)
        cuentas[500:600] = 200
        features = detect_features(_histograma(cuentas), peak_max_width=20000)
        self.assertEqual(len(features.peaks), 1)
        self.assertEqual(features.backflash_regions, ())


class IntegrateBackflashTest(SimpleTestCase):

    def test_residuo_nulo(self):
        hist = _histograma(np.zeros(10), triggers=1)
        residual = subtract_background(hist, hist)
        self.assertEqual(integrate_backflash(residual, (0, 500)), (0.0, 0.0))

    def test_propagacion_de_poisson(self):
        """Verifica N_B = 900 y error sqrt(1000 + 100 * escala) para brutas 1000 y fondo escalado 100"""
        gated = _histograma([0, 1000, 0], triggers=100)
        reference = _histograma([0, 200, 0], triggers=200)
        n_b, error = integrate_backflash(subtract_background(gated, reference), (100, 200))
        self.assertEqual(n_b, 900.0)
        self.assertAlmostEqual(error, math.sqrt(1000 + 100 * 0.5))

    def test_region_vacia(self):
        hist = _histograma(np.zeros(10))
        with self.assertRaises(EmptyRegionError):
            integrate_backflash(subtract_background(hist, hist), (300, 300))

    def test_region_fuera_del_histograma(self):
        hist = _histograma(np.zeros(10))
        with self.assertRaises(OutOfRangeError):
            integrate_backflash(subtract_background(hist, hist), (500, 1500))


class EstimateLeakageTest(SimpleTestCase):
    """
    P_L = N_B / (N_P * eta_det * eta_ch).
    """

    def test_dut1(self):
        """Verifica P_L = 0.098 con N_B = 4900, N_P = 1e6 y eta = 0.1 * 0.5"""
        self.assertEqual(estimate_leakage(4900, 1000000, 0.1, 0.5).p_leak, 0.098)

    def test_casos_triviales(self):
        self.assertEqual(estimate_leakage(0, 1000, 0.1, 0.5).p_leak, 0.0)
        self.assertEqual(estimate_leakage(50, 1000, 1.0, 1.0).p_leak, 0.05)

    def test_linealidad_y_escala(self):
        base = estimate_leakage(300.0, 20000, 0.2, 0.4).p_leak
        self.assertAlmostEqual(estimate_leakage(600.0, 20000, 0.2, 0.4).p_leak, 2 * base, places=15)
        self.assertAlmostEqual(estimate_leakage(300.0, 40000, 0.2, 0.4).p_leak, base / 2, places=15)
        self.assertAlmostEqual(estimate_leakage(300.0, 20000, 0.1, 0.4).p_leak, 2 * base, places=15)
        self.assertAlmostEqual(estimate_leakage(300.0, 20000, 0.2, 0.2).p_leak, 2 * base, places=15)
        self.assertAlmostEqual(estimate_leakage(900.0, 60000, 0.2, 0.4).p_leak, base, places=15)

    def test_errores(self):
        with self.assertRaises(OutOfRangeError):
            estimate_leakage(10, 0, 0.1, 0.5)
        with self.assertRaises(OutOfRangeError):
            estimate_leakage(10, 100, 0.0, 0.5)
        with self.assertRaises(OutOfRangeError):
            estimate_leakage(10, 100, 0.1, -0.5)

    def test_intervalos(self):
        """Verifica que ambos metodos de intervalo contengan P_L"""
        normal = estimate_leakage(400, 100000, 0.1, 0.5, std_error=25.0, n_triggers=10 ** 7)
        garwood = estimate_leakage(4, 1000, 0.1, 0.5, ci_method='garwood')
        for reporte in (normal, garwood):
            self.assertLess(reporte.ci_low, reporte.p_leak)
            self.assertGreater(reporte.ci_high, reporte.p_leak)
        self.assertEqual(garwood.ci_method, 'garwood')
        self.assertEqual(estimate_leakage(0, 1000, 0.1, 0.5, ci_method='garwood').ci_low, 0.0)


class ExpectedWindowTest(SimpleTestCase):

    def test_ventana_del_banco(self):
        self.assertEqual(expected_backflash_window(dut1()), (200000.0, 210000.0))

    def test_corte_por_la_puerta(self):
        """Verifica que el cierre de la puerta acorte la ventana"""
        banco = dut1(dut={'gate_delay_offset_ns': 18.0})
        self.assertEqual(expected_backflash_window(banco), (200000.0, 202000.0))

    def test_region_explicita(self):
        region, origen = choose_region(detect_features(_histograma(np.zeros(10))), dut1(), (100, 400))
        self.assertEqual((region, origen), ((100.0, 400.0), 'explicit'))


class ClosedLoopTest(SimpleTestCase):
    """
    Lazo cerrado sobre DUT1 a 1e7 pulsos: la cadena completa debe recuperar
    la fuga verdadera 0.098.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.banco = dut1()
        cls.gated, cls.reference = _par(cls.banco, 42, 10 ** 7)
        cls.resultado = analyze_traces(cls.banco, cls.gated, cls.reference)

    def test_recupera_p_leak(self):
        self.assertAlmostEqual(self.resultado.report.p_leak, 0.098, delta=0.01)
        self.assertEqual(self.resultado.report.n_dut_counts, self.gated.dut_click_count)

    def test_n_b_frente_al_valor_esperado(self):
        """Verifica N_B a 4 sigma de las detecciones de backflash esperadas"""
        report = self.resultado.report
        self.assertLess(abs(report.n_backflash - self.gated.expected_backflash), 4 * report.std_error)

    def test_region_detectada(self):
        """Verifica que la region detectada dure 10 ns +/- 15 %"""
        self.assertEqual(self.resultado.region_source, 'auto')
        region = self.resultado.features.strongest_region()
        self.assertLessEqual(abs(region.duration - 10000) / 10000, 0.15)

    def test_ventana_del_banco_equivalente(self):
        por_ventana = analyze_traces(self.banco, self.gated, self.reference, region='config').report
        self.assertAlmostEqual(por_ventana.p_leak, 0.098, delta=0.01)

    def test_resta_de_oscuras_del_dut(self):
        con_resta = analyze_traces(self.banco, self.gated, self.reference, subtract_dut_dark=True).report
        self.assertLess(con_resta.n_dut_counts, self.resultado.report.n_dut_counts)
        self.assertGreater(con_resta.p_leak, self.resultado.report.p_leak)


class NullTest(SimpleTestCase):

    def test_reflexiones_se_anulan(self):
        """Verifica que la referencia sin puertas anule los picos de reflexion estaticos"""
        banco = dut1(laser={'mean_photon_number_at_dut': 1.0}, dut={'backflash': {
            'shape': {'kind': 'rectangular', 'duration_ns': 10.0},
            'spectrum': {'edges_nm': [1530.0, 1600.0], 'densities': [1.0]},
            'yield_per_volt': 0.0,
        }})
        gated, reference = _par(banco, 8, 10 ** 6)
        residual = analyze_traces(banco, gated, reference, region='config').residual
        for punto in banco.optical_path.reflection_points:
            region = (punto.round_trip_delay_ps - 500, punto.round_trip_delay_ps + 500)
            n_b, error = integrate_backflash(residual, region)
            self.assertLess(abs(n_b), 4 * error)


class TrendTest(SimpleTestCase):
    """
    Tendencias de P_L con la sobretension y con el retardo de la puerta.
    """

    def _p_leak(self, banco, semilla, pulsos):
        gated, reference = _par(banco, semilla, pulsos)
        return analyze_traces(banco, gated, reference, region='config').report

    def test_crece_con_la_sobretension(self):
        """Verifica P_L estrictamente creciente en {3, 4.5, 7} V con separacion > 3 sigma"""
        base = dut1(meas_detector={'dark_count_rate_hz': 500.0})
        reportes = [self._p_leak(base.with_axis('excess_bias', v), 100 + i, 10 ** 7)
                    for i, v in enumerate((3.0, 4.5, 7.0))]
        for bajo, alto in zip(reportes, reportes[1:]):
            sigma = math.hypot((bajo.ci_high - bajo.ci_low) / 3.92, (alto.ci_high - alto.ci_low) / 3.92)
            self.assertGreater(alto.p_leak - bajo.p_leak, 3 * sigma)

    def test_cae_con_el_retardo_de_la_puerta(self):
        """Verifica P_L(18 ns) < P_L(2 ns) por mas de 3 sigma en una puerta de 20 ns"""
        base = dut1(meas_detector={'dark_count_rate_hz': 500.0})
        temprano = self._p_leak(base.with_axis('gate_delay_offset', 2.0), 200, 3 * 10 ** 6)
        tardio = self._p_leak(base.with_axis('gate_delay_offset', 18.0), 201, 3 * 10 ** 6)
        sigma = math.hypot((temprano.ci_high - temprano.ci_low) / 3.92, (tardio.ci_high - tardio.ci_low) / 3.92)
        self.assertGreater(temprano.p_leak - tardio.p_leak, 3 * sigma)
