import math

import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy import stats

from bases.models import OutOfRangeError
from model.models import Channel
from model.presets import dut1
from .engine import _apply_dead_time, _worker_count, apply_filter, simulate, simulate_sweep
from .models import Provenance, SimRun


class SimRunTest(SimpleTestCase):

    def test_pulsos_o_duracion(self):
        """Verifica que se exija exactamente uno de pulse_count o duration_s"""
        with self.assertRaises(OutOfRangeError):
            SimRun(dut1(), 0)
        with self.assertRaises(OutOfRangeError):
            SimRun(dut1(), 0, pulse_count=10, duration_s=1.0)

    def test_duracion_a_periodos(self):
        self.assertEqual(SimRun(dut1(), 0, duration_s=0.2).periods, 10000)

    def test_desbordamiento(self):
        with self.assertRaises(OutOfRangeError):
            simulate(SimRun(dut1(), 0, pulse_count=10 ** 12))


class DeadTimeTest(SimpleTestCase):

    def test_no_paralizable(self):
        """Verifica que el tiempo muerto se cuente desde la ultima avalancha aceptada"""
        tiempos = np.array([0, 5, 10, 12, 25, 30], dtype=np.int64)
        aceptadas = _apply_dead_time(tiempos, 10)
        np.testing.assert_array_equal(tiempos[aceptadas], [0, 10, 25])

    def test_sin_tiempo_muerto(self):
        tiempos = np.array([0, 1, 2], dtype=np.int64)
        self.assertTrue(_apply_dead_time(tiempos, 0).all())


class SimulateTest(SimpleTestCase):
    """
    Pruebas del generador Monte Carlo sobre el banco DUT1.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        # sin oscuras del DUT: todo el backflash sigue a un fotón del láser
        cls.banco = dut1(dut={'dark_count_rate_in_gate_hz': 0.0})
        cls.salida = simulate(SimRun(cls.banco, 7, pulse_count=200000))

    def test_tags_ordenados(self):
        self.assertTrue(np.all(np.diff(self.salida.otdr_timestamps) >= 0))
        self.assertEqual(self.salida.provenance.size, self.salida.otdr_timestamps.size)

    def test_backflash_esperado(self):
        """Verifica que las cuentas de backflash esten a 4 sigma del valor esperado"""
        observado = self.salida.count(Provenance.BACKFLASH)
        esperado = self.salida.expected_backflash
        self.assertGreater(esperado, 0)
        self.assertLess(abs(observado - esperado), 4 * math.sqrt(esperado))

    def test_backflash_tras_la_reflexion_del_dut(self):
        """Verifica que el backflash llegue en [2d, 2d + 10 ns] modulo el jitter"""
        periodo = self.banco.period_ps
        retardo = self.salida.otdr_timestamps[self.salida.provenance == Provenance.BACKFLASH] % periodo
        self.assertGreater(retardo.min(), 200000 - 1000)
        self.assertLess(retardo.max(), 210000 + 1000)

    def test_clicks_del_dut(self):
        """Verifica N_P frente a 1 - exp(-mu * eta)"""
        p = -math.expm1(-0.1 * 0.35)
        esperado = 200000 * p
        self.assertLess(abs(self.salida.dut_click_count - esperado), 4 * math.sqrt(esperado))

    def test_sincronismo_del_laser(self):
        salida = simulate(SimRun(self.banco, 1, pulse_count=1000, emit_laser_sync=True))
        tags = salida.tag_array()
        self.assertEqual(int(np.count_nonzero(tags['channel'] == Channel.LASER_SYNC)), 1000)
        self.assertEqual(int(np.count_nonzero(tags['channel'] == Channel.DUT_SYNC)), salida.dut_click_count)
        self.assertTrue(np.all(np.diff(tags['timestamp'].astype(np.int64)) >= 0))

    def test_puertas_apagadas(self):
        """Verifica que sin puertas no haya avalanchas ni backflash"""
        salida = simulate(SimRun(self.banco, 2, pulse_count=20000, gates_enabled=False))
        self.assertEqual(salida.dut_click_count, 0)
        self.assertEqual(salida.count(Provenance.BACKFLASH), 0)
        self.assertEqual(salida.expected_backflash, 0.0)

    def test_llegada_fuera_de_la_puerta(self):
        """Verifica que con el pulso fuera de la puerta solo haya oscuras del DUT"""
        banco = dut1(dut={'gate_delay_offset_ns': 25.0, 'dark_count_rate_in_gate_hz': 1e6})
        salida = simulate(SimRun(banco, 3, pulse_count=20000))
        self.assertGreater(salida.dut_click_count, 0)
        self.assertEqual(salida.dut_dark_count, salida.dut_click_count)


class StatisticsTest(SimpleTestCase):

    def test_solo_oscuras(self):
        """Verifica las oscuras del detector de medida a 4 sigma de tasa x duracion"""
        banco = dut1(laser={'mean_photon_number_at_dut': 0.0})
        salida = simulate(SimRun(banco, 11, pulse_count=1000000, gates_enabled=False))
        esperado = 5000.0 * 1000000 * banco.period_ps * 1e-12
        self.assertEqual(salida.count(Provenance.DARK), salida.otdr_timestamps.size)
        self.assertLess(abs(salida.otdr_timestamps.size - esperado), 4 * math.sqrt(esperado))

    def test_dispersion_de_reflexion(self):
        """Verifica varianza/media del pico de reflexion por periodo en [0.9, 1.1]"""
        banco = dut1(
            laser={'mean_photon_number_at_dut': 1.0},
            optical_path={'reflection_points': [{'round_trip_delay_ps': 20000, 'reflectance': 0.5}]},
            meas_detector={'dark_count_rate_hz': 0.0},
        )
        periodos = 1000000
        salida = simulate(SimRun(banco, 5, pulse_count=periodos, gates_enabled=False))
        tiempos = salida.otdr_timestamps
        retardo = tiempos % banco.period_ps
        en_pico = tiempos[np.abs(retardo - 20000) < 2000]
        cuentas = np.bincount(en_pico // banco.period_ps, minlength=periodos)
        razon = cuentas.var() / cuentas.mean()
        self.assertGreaterEqual(razon, 0.9)
        self.assertLessEqual(razon, 1.1)

    def test_tiempo_muerto_largo(self):
        """Verifica que las avalanchas aceptadas respeten el tiempo muerto"""
        banco = dut1(laser={'mean_photon_number_at_dut': 10.0}, dut={'dead_time_ns': 50000.0})
        salida = simulate(SimRun(banco, 9, pulse_count=5000))
        self.assertGreaterEqual(int(np.diff(salida.dut_timestamps).min()), 50000 * 1000)


class DeterminismTest(SimpleTestCase):

    @override_settings(BACKFLASH_CHUNK_PERIODS=4096, BACKFLASH_THREADS=4)
    def test_identico_con_uno_o_varios_hilos(self):
        """Verifica salida byte a byte identica con 1 y 4 hilos"""
        run = SimRun(dut1(), 42, pulse_count=30000, emit_laser_sync=True)
        uno = simulate(run, workers=1)
        varios = simulate(run, workers=4)
        self.assertEqual(uno.tag_array().tobytes(), varios.tag_array().tobytes())
        np.testing.assert_array_equal(uno.provenance, varios.provenance)

    def test_semillas_distintas(self):
        a = simulate(SimRun(dut1(), 1, pulse_count=20000))
        b = simulate(SimRun(dut1(), 2, pulse_count=20000))
        self.assertFalse(np.array_equal(a.otdr_timestamps, b.otdr_timestamps))


class FilterTest(SimpleTestCase):
    """
    Pruebas del filtro sintonizable delante del detector de medida.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.banco = dut1(laser={'mean_photon_number_at_dut': 1.0})
        cls.salida = simulate(SimRun(cls.banco, 21, pulse_count=300000))
        cls.espectro = cls.banco.dut.backflash.spectral_density

    def test_reflexiones_fuera_de_banda(self):
        """Verifica que fuera de la longitud de onda del laser no pasen reflexiones"""
        filtrada = apply_filter(self.salida, 1575.0, 10.0, self.espectro, 1550.0)
        self.assertEqual(filtrada.count(Provenance.REFLECTION), 0)
        self.assertEqual(filtrada.count(Provenance.DARK), self.salida.count(Provenance.DARK))

    def test_reflexiones_en_banda(self):
        filtrada = apply_filter(self.salida, 1555.0, 10.0, self.espectro, 1550.0)
        self.assertEqual(filtrada.count(Provenance.REFLECTION), self.salida.count(Provenance.REFLECTION))

    def test_laser_en_el_borde_superior(self):
        """Verifica que la banda [1540, 1550) no deje pasar el laser y la centrada en 1550 si"""
        filtrada = apply_filter(self.salida, 1545.0, 10.0, self.espectro, 1550.0)
        self.assertEqual(filtrada.count(Provenance.REFLECTION), 0)
        centrada = apply_filter(self.salida, 1550.0, 10.0, self.espectro, 1550.0)
        self.assertEqual(centrada.count(Provenance.REFLECTION), self.salida.count(Provenance.REFLECTION))

    def test_adelgazamiento_uniforme(self):
        """Verifica con chi2 al 99 % que las siete bandas retengan 1/7 del backflash"""
        total = self.salida.count(Provenance.BACKFLASH)
        centros = [1535.0 + 10.0 * i for i in range(7)]
        cuentas = np.array([apply_filter(self.salida, c, 10.0, self.espectro, 1550.0).count(Provenance.BACKFLASH)
                            for c in centros], dtype=float)
        esperado = total / 7.0
        chi2 = float(np.sum((cuentas - esperado) ** 2 / (esperado * (1 - 1 / 7.0))))
        self.assertLess(chi2, stats.chi2.ppf(0.99, len(centros)))

    def test_valor_esperado_escalado(self):
        filtrada = apply_filter(self.salida, 1535.0, 10.0, self.espectro, 1550.0)
        self.assertAlmostEqual(filtrada.expected_backflash, self.salida.expected_backflash / 7.0)

    def test_filtro_en_la_corrida(self):
        """Verifica que filter_center_nm de la corrida aplique el filtro del banco"""
        salida = simulate(SimRun(self.banco, 21, pulse_count=20000, filter_center_nm=1575.0))
        self.assertEqual(salida.count(Provenance.REFLECTION), 0)


class SweepTest(SimpleTestCase):

    def test_una_corrida_por_valor(self):
        salidas = simulate_sweep(SimRun(dut1(), 3, pulse_count=5000), 'excess_bias', [3.0, 7.0])
        self.assertEqual(len(salidas), 2)
        self.assertEqual(salidas[0].run.config.dut.excess_bias_v, 3.0)
        self.assertNotEqual(salidas[0].seed, salidas[1].seed)
        self.assertAlmostEqual(salidas[0].run.config.dut.backflash.mean_photons_per_avalanche, 0.042)

    def test_eje_desconocido(self):
        with self.assertRaises(OutOfRangeError):
            simulate_sweep(SimRun(dut1(), 3, pulse_count=10), 'color', [1])

    def test_lista_vacia(self):
        self.assertEqual(simulate_sweep(SimRun(dut1(), 3, pulse_count=10), 'excess_bias', []), [])


class WorkerCountTest(SimpleTestCase):

    @override_settings(BACKFLASH_THREADS=2)
    def test_tope_de_hilos(self):
        """Verifica que BACKFLASH_THREADS acote tambien un numero de hilos explicito"""
        self.assertEqual(_worker_count(8), 2)
        self.assertEqual(_worker_count(None), 2)
        self.assertEqual(_worker_count(1), 1)
        self.assertEqual(_worker_count(0), 1)


class GateTruncationTest(SimpleTestCase):
    """
    Emision de backflash entre el inicio de la avalancha y el cierre de la puerta.
    """

    def _retardos(self, offset_ns, semilla):
        banco = dut1(
            laser={'mean_photon_number_at_dut': 1.0, 'pulse_width_fwhm_ps': 1e-6},
            dut={'gate_delay_offset_ns': offset_ns, 'dark_count_rate_in_gate_hz': 0.0},
            meas_detector={'timing_jitter_fwhm_ps': 0.0},
        )
        salida = simulate(SimRun(banco, semilla, pulse_count=100000))
        periodo = banco.period_ps
        np.testing.assert_array_equal(salida.dut_timestamps % periodo, 100000)
        return salida.otdr_timestamps[salida.provenance == Provenance.BACKFLASH] % periodo

    def test_cierre_de_la_puerta(self):
        """Verifica emision en [2d, 2d + 5 ns] si la puerta cierra 5 ns tras la llegada"""
        retardo = self._retardos(15.0, 13)
        self.assertGreater(retardo.size, 0)
        self.assertGreaterEqual(retardo.min(), 200000)
        self.assertLessEqual(retardo.max(), 205000)
        self.assertGreater(retardo.max(), 204000)

    def test_fin_de_la_avalancha(self):
        """Verifica emision en [2d, 2d + 10 ns] si la puerta sigue abierta"""
        retardo = self._retardos(5.0, 14)
        self.assertGreaterEqual(retardo.min(), 200000)
        self.assertLessEqual(retardo.max(), 210000)
        self.assertGreater(retardo.max(), 205000)


class ThinningCompositionTest(SimpleTestCase):

    def test_eficiencia_por_filtro(self):
        """Verifica con chi2 al 99 % que eta_det = a mas filtro b equivalga a eta_det = a * b"""
        comun = {'laser': {'mean_photon_number_at_dut': 1.0}, 'dut': {'dark_count_rate_in_gate_hz': 0.0}}
        banco_a = dut1(meas_detector={'efficiency': 0.5, 'dark_count_rate_hz': 0.0}, **comun)
        banco_ab = dut1(meas_detector={'efficiency': 0.5 / 7.0, 'dark_count_rate_hz': 0.0}, **comun)
        espectro = banco_a.dut.backflash.spectral_density

        filtrada = apply_filter(simulate(SimRun(banco_a, 31, pulse_count=300000)), 1565.0, 10.0, espectro, 1550.0)
        directa = simulate(SimRun(banco_ab, 32, pulse_count=300000))
        n_a = filtrada.count(Provenance.BACKFLASH)
        n_ab = directa.count(Provenance.BACKFLASH)
        self.assertGreater(n_a + n_ab, 200)
        chi2 = (n_a - n_ab) ** 2 / float(n_a + n_ab)
        self.assertLess(chi2, stats.chi2.ppf(0.99, 1))
        self.assertAlmostEqual(filtrada.expected_backflash / directa.expected_backflash, 1.0, delta=0.02)
