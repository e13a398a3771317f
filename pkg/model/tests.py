import json
import math
import os
import tempfile

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from bases.models import OutOfRangeError, SchemaVersionError
from .forms import bench_to_dict, config_hash, load_bench, validate_bench
from .models import (
    TAG_DTYPE, BackflashProfile, Channel, EfficiencyCurve, LeakageReport, SpectralDensity, TimeTag,
    photons_per_pulse, profile_density,
)
from .presets import bench_document, dut1, dut2


class EfficiencyCurveTest(SimpleTestCase):
    """
    Pruebas de la curva de eficiencia frente a la sobretension.
    """

    def setUp(self):
        self.curva = EfficiencyCurve(((3.0, 0.15), (4.5, 0.22), (7.0, 0.35)), (3.0, 7.0))

    def test_interpolacion_lineal(self):
        """Verifica la interpolacion entre anclas"""
        self.assertAlmostEqual(self.curva(5.75), 0.285)
        self.assertEqual(self.curva(7.0), 0.35)

    def test_fuera_del_dominio(self):
        """Verifica que fuera del dominio se lance OutOfRangeError"""
        with self.assertRaises(OutOfRangeError):
            self.curva(7.5)
        with self.assertRaises(OutOfRangeError):
            self.curva(2.9)


class BackflashProfileTest(SimpleTestCase):

    def test_rectangular_normalizado(self):
        perfil = BackflashProfile.rectangular(10.0)
        self.assertAlmostEqual(perfil.integral(), 1.0, places=12)
        self.assertAlmostEqual(float(perfil.cdf(5.0)), 0.5, places=12)
        self.assertEqual(float(perfil.cdf(12.0)), 1.0)

    def test_trapezoidal_simetrico(self):
        """Verifica la CDF del trapecio con rampas de 2 ns"""
        perfil = BackflashProfile.trapezoidal(10.0, 2.0)
        self.assertAlmostEqual(perfil.integral(), 1.0, places=12)
        self.assertAlmostEqual(float(perfil.cdf(5.0)), 0.5, places=12)
        # area de la rampa: 0.5 * 2 * h, con h = 1/8
        self.assertAlmostEqual(float(perfil.cdf(2.0)), 0.125, places=12)

    def test_rectangulo_retrasado(self):
        perfil = BackflashProfile.rectangular(10.0, start_ns=5.0)
        self.assertEqual(float(perfil.cdf(5.0)), 0.0)
        self.assertAlmostEqual(float(perfil.cdf(10.0)), 0.5, places=12)
        self.assertEqual(perfil.duration_ns, 15.0)

    def test_muestreo_sigue_la_cdf(self):
        """Verifica que las muestras tengan la media del perfil"""
        perfil = BackflashProfile.trapezoidal(10.0, 2.0)
        muestras = perfil.sample(np.random.default_rng(3), 200000)
        self.assertTrue(np.all((muestras >= 0) & (muestras <= 10.0)))
        self.assertAlmostEqual(float(muestras.mean()), 5.0, delta=0.03)

    def test_densidad_fuera_del_soporte(self):
        perfil = BackflashProfile.rectangular(10.0)
        self.assertEqual(float(perfil.density(-1.0)), 0.0)
        self.assertEqual(float(perfil.density(11.0)), 0.0)
        self.assertAlmostEqual(float(perfil.density(3.0)), 0.1)


class ProfileDensityTest(SimpleTestCase):
    """
    Densidad del perfil de backflash en un instante dado.
    """

    def test_rectangular(self):
        perfil = BackflashProfile.rectangular(10.0)
        self.assertAlmostEqual(profile_density(perfil, 5.0), 0.1, places=12)
        self.assertEqual(profile_density(perfil, -1.0), 0.0)

    def test_rampa_del_trapecio(self):
        """Verifica que a mitad de la rampa de 2 ns la densidad sea la mitad de la meseta"""
        perfil = BackflashProfile.trapezoidal(10.0, 2.0)
        meseta = profile_density(perfil, 5.0)
        self.assertAlmostEqual(meseta, 0.125, places=12)
        self.assertAlmostEqual(profile_density(perfil, 1.0), meseta / 2.0, places=12)


class TimeTagTest(SimpleTestCase):

    def test_desde_registro(self):
        registro = np.array([(1, 123456)], dtype=TAG_DTYPE)[0]
        tag = TimeTag.from_record(registro)
        self.assertEqual(tag, TimeTag(Channel.DUT_SYNC, 123456))
        self.assertEqual(str(tag), 'DUT_SYNC @ 123456 ps')


class SpectralDensityTest(SimpleTestCase):

    def test_fraccion_en_banda(self):
        """Verifica que una banda de 10 nm sobre un espectro plano de 70 nm sea 1/7"""
        espectro = SpectralDensity.flat(1530.0, 1600.0)
        self.assertAlmostEqual(espectro.fraction_in(1545.0, 1555.0), 1.0 / 7.0, places=12)
        self.assertAlmostEqual(espectro.fraction_in(1500.0, 1700.0), 1.0, places=12)
        self.assertEqual(espectro.fraction_in(1600.0, 1610.0), 0.0)


class PhotonsPerPulseTest(SimpleTestCase):

    def test_energia_a_fotones(self):
        # 1 pJ a 1550 nm son unos 7.8e6 fotones; 60 dB deja 7.8
        mu = photons_per_pulse(1000.0, 1550.0, 1e-6)
        self.assertAlmostEqual(mu, 7.803, places=2)


class ValidateBenchTest(SimpleTestCase):
    """
    Pruebas de validacion de documentos de banco con formularios.
    """

    def test_presets_validos(self):
        """Verifica que los bancos de referencia se validen"""
        banco = dut1()
        self.assertEqual(banco.name, 'DUT1')
        self.assertEqual(banco.period_ps, 20000000)
        self.assertAlmostEqual(banco.dut.backflash.mean_photons_per_avalanche, 0.098)
        self.assertAlmostEqual(banco.dut.efficiency, 0.35)
        self.assertEqual(banco.optical_path.dut_round_trip_ps, 200000)
        self.assertAlmostEqual(dut2().dut.efficiency, 0.10)

    def test_documentos_en_benches(self):
        """Verifica que los JSON de benches coincidan con los presets"""
        raiz = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        self.assertEqual(config_hash(load_bench(os.path.join(raiz, 'benches', 'dut1.json'))), config_hash(dut1()))
        self.assertEqual(config_hash(load_bench(os.path.join(raiz, 'benches', 'dut2.json'))), config_hash(dut2()))

    def test_ida_y_vuelta(self):
        banco = dut2()
        self.assertEqual(config_hash(validate_bench(bench_to_dict(banco))), config_hash(banco))

    def test_error_con_ruta_de_campo(self):
        """Verifica que el error indique la ruta del campo invalido"""
        documento = bench_document('DUT1')
        documento['optical_path']['reflection_points'][0]['reflectance'] = 1.5
        with self.assertRaises(ValidationError) as ctx:
            validate_bench(documento)
        self.assertIn('optical_path.reflection_points[0].reflectance', ctx.exception.message_dict)

    def test_campo_desconocido(self):
        documento = bench_document('DUT1', laser={'color': 'rojo'})
        with self.assertRaises(ValidationError) as ctx:
            validate_bench(documento)
        self.assertIn('laser', ctx.exception.message_dict)

    def test_varios_errores_a_la_vez(self):
        documento = bench_document('DUT1', meas_detector={'efficiency': 2.0}, attenuation={'variable_attenuation_db': 90})
        with self.assertRaises(ValidationError) as ctx:
            validate_bench(documento)
        self.assertIn('meas_detector.efficiency', ctx.exception.message_dict)
        self.assertIn('attenuation.variable_attenuation_db', ctx.exception.message_dict)

    def test_sobretension_fuera_del_dominio(self):
        documento = bench_document('DUT1', dut={'excess_bias_v': 8.0})
        with self.assertRaises(ValidationError) as ctx:
            validate_bench(documento)
        self.assertIn('dut.excess_bias_v', ctx.exception.message_dict)

    def test_puerta_mayor_que_el_periodo(self):
        documento = bench_document('DUT1', laser={'repetition_rate_hz': 1e7})
        with self.assertRaises(ValidationError):
            validate_bench(documento)

    def test_retardos_repetidos(self):
        documento = bench_document('DUT1')
        documento['optical_path']['reflection_points'][1]['round_trip_delay_ps'] = 20000
        with self.assertRaises(ValidationError) as ctx:
            validate_bench(documento)
        self.assertIn('optical_path.reflection_points[1].round_trip_delay_ps', ctx.exception.message_dict)

    def test_mu_desde_energia_de_pulso(self):
        """Verifica que mu se derive de la energia y la atenuacion"""
        documento = bench_document('DUT1')
        del documento['laser']['mean_photon_number_at_dut']
        documento['laser']['pulse_energy_fj'] = 1000.0
        banco = validate_bench(documento)
        self.assertAlmostEqual(banco.laser.mean_photon_number_at_dut, photons_per_pulse(1000.0, 1550.0, 1e-6))

    def test_rendimiento_por_sobretension(self):
        documento = bench_document('DUT1')
        documento['dut']['backflash']['yield_overrides'] = [[3.0, 0.05]]
        banco = validate_bench(documento)
        self.assertEqual(banco.dut.yield_at(3.0), 0.05)
        self.assertAlmostEqual(banco.dut.yield_at(4.5), 0.063)

    def test_esquema_distinto(self):
        documento = bench_document('DUT1', schema='backflash-bench/9')
        with self.assertRaises(SchemaVersionError):
            load_bench(documento)

    def test_carga_desde_archivo(self):
        with tempfile.TemporaryDirectory() as tmp:
            ruta = os.path.join(tmp, 'banco.json')
            with open(ruta, 'w', encoding='utf-8') as fh:
                json.dump(bench_document('DUT2'), fh)
            self.assertEqual(load_bench(ruta).name, 'DUT2')


class WithAxisTest(SimpleTestCase):

    def test_ejes_de_barrido(self):
        banco = dut1()
        self.assertEqual(banco.with_axis('excess_bias', 3.0).dut.excess_bias_v, 3.0)
        self.assertEqual(banco.with_axis('gate_delay_offset', 18.0).dut.gate_delay_offset_ns, 18.0)
        self.assertEqual(banco.with_axis('filter_center', 1565.0).filter.passband(), (1560.0, 1570.0))

    def test_eje_desconocido(self):
        with self.assertRaises(OutOfRangeError):
            dut1().with_axis('temperatura', 1.0)

    def test_sobretension_fuera_del_dominio(self):
        with self.assertRaises(OutOfRangeError):
            dut1().with_axis('excess_bias', 9.0)


class LeakageReportTest(SimpleTestCase):
    """
    P_L = N_B / (N_P * eta_det * eta_ch) y factores de contramedida.
    """

    def setUp(self):
        self.reporte = LeakageReport(4900.0, 70.0, 1000000, 0.1, 0.5, 0.095, 0.101)

    def test_ecuacion_exacta(self):
        self.assertEqual(self.reporte.p_leak, 4900.0 / (1000000 * 0.1 * 0.5))
        self.assertAlmostEqual(self.reporte.p_leak, 0.098, places=15)

    def test_factores_conmutan(self):
        """Verifica que el orden de las contramedidas no cambie el resultado"""
        a = self.reporte.attenuated(1e-3).attenuated(1.0 / 7.0)
        b = self.reporte.attenuated(1.0 / 7.0).attenuated(1e-3)
        self.assertEqual(a.p_leak, b.p_leak)
        self.assertEqual(a.ci_high, b.ci_high)
        self.assertTrue(math.isclose(a.p_leak, 0.098e-3 / 7.0, rel_tol=1e-12))

    def test_intervalo_contiene_el_valor(self):
        atenuado = self.reporte.attenuated(0.5)
        self.assertLessEqual(atenuado.ci_low, atenuado.p_leak)
        self.assertGreaterEqual(atenuado.ci_high, atenuado.p_leak)
