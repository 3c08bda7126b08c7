import math

import numpy as np
import pandas as pd
import pytest

from analysis import (BRANCH_DIRECT, BRANCH_ROTATED, c11_norm, correction_bound_check, find_small_oscillation_ball,
                      holder_seminorm, holder_seminorm_on, regularity_pipeline, schauder_report, sup_norm,
                      write_profiles)
from errors import ConfigurationError, ConsistencyError, DomainError, ResolutionError
from fields import Grid2D, ScalarField, hessian, rescale_potential
from generators import generate_potential, philox_generator, random_perturbed_potential
from geometry import lagrangian_phase, rotation_budget


class TestSupNorm:
    def test_campo_nulo(self, grid17):
        assert sup_norm(ScalarField(grid17, np.zeros((17, 17))), 1.0) == 0.0

    def test_coordenada_alcanza_el_borde(self, grid17, make_field):
        assert sup_norm(make_field(grid17, lambda x1, x2: x1), 1.0) == 1.0

    def test_maximo_en_el_origen(self, grid17, make_field):
        assert sup_norm(make_field(grid17, lambda x1, x2: 1.0 - x1**2 - x2**2), 1.0) == 1.0

    def test_radio_mayor_que_la_mascara(self, grid17, make_field):
        with pytest.raises(DomainError):
            sup_norm(make_field(grid17, lambda x1, x2: x1), 1.5)


class TestHolderSeminorm:
    def test_constante(self, grid17):
        assert holder_seminorm(ScalarField(grid17, np.full((17, 17), 3.0)), 1.0, 0.5) == 0.0

    def test_coordenada_con_alfa_un_medio(self, grid17, make_field):
        # Máximo en el diámetro: 2/√2
        value = holder_seminorm(make_field(grid17, lambda x1, x2: x1), 1.0, 0.5, pair_budget=200000)
        assert value == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_raiz_del_radio(self, grid17, make_field):
        value = holder_seminorm(make_field(grid17, lambda x1, x2: np.hypot(x1, x2) ** 0.5), 1.0, 0.5,
                                pair_budget=200000)
        assert value >= 1.0 - 1e-9
        assert np.isfinite(value)

    def test_homogeneidad(self, grid65, make_field):
        f = make_field(grid65, lambda x1, x2: np.sin(3 * x1) * x2)
        g = ScalarField(grid65, -3.0 * f.values)
        assert holder_seminorm(g, 1.0, 0.5) == pytest.approx(3.0 * holder_seminorm(f, 1.0, 0.5), rel=1e-12)

    def test_determinista_con_semilla(self, grid65, make_field):
        f = make_field(grid65, lambda x1, x2: np.cos(2 * x1 + x2))
        assert holder_seminorm(f, 1.0, 0.5, seed=7) == holder_seminorm(f, 1.0, 0.5, seed=7)

    def test_muestreo_no_supera_el_exhaustivo(self, grid33, make_field):
        f = make_field(grid33, lambda x1, x2: np.exp(x1) * np.cos(3 * x2))
        sampled = holder_seminorm(f, 1.0, 0.5, pair_budget=10000)
        exhaustive = holder_seminorm(f, 1.0, 0.5, pair_budget=1_000_000)
        assert sampled <= exhaustive
        assert sampled >= 0.8 * exhaustive

    def test_matrices_con_norma_espectral(self, grid17, make_field):
        H = hessian(make_field(grid17, lambda x1, x2: 0.5 * (x1**2 + x2**2)))
        assert holder_seminorm(H, 1.0, 0.5) <= 1e-9

    def test_presupuesto_de_pares_minimo(self, grid17, make_field):
        with pytest.raises(ConfigurationError):
            holder_seminorm(make_field(grid17, lambda x1, x2: x1), 1.0, 0.5, pair_budget=9999)

    @pytest.mark.parametrize("alpha", [0.0, 1.5])
    def test_exponente_invalido(self, grid17, make_field, alpha):
        with pytest.raises(ConfigurationError):
            holder_seminorm(make_field(grid17, lambda x1, x2: x1), 1.0, alpha)

    def test_un_solo_nodo(self):
        with pytest.raises(DomainError):
            holder_seminorm_on(np.zeros(1), np.zeros((1, 2)), 0.5)


class TestC11Norm:
    @pytest.mark.parametrize("func", [
        lambda x1, x2: 0.5 * (x1**2 + x2**2),
        lambda x1, x2: 0.5 * (x1**2 - x2**2),
        lambda x1, x2: x1 * x2,
    ])
    def test_cuadraticas_unitarias(self, grid33, make_field, func):
        assert c11_norm(make_field(grid33, func), 1.0) == pytest.approx(1.0, abs=1e-10)

    def test_cuadratica_perturbada(self, grid33):
        u = generate_potential("perturbed_quadratic", {"eps": 0.05}, grid33)["u"]
        assert 1.0 < c11_norm(u, 1.0) <= 1.1


class TestCorrectionBound:
    def test_potencial_nulo(self, grid33):
        budget = rotation_budget(1.0, 0.0, 0.5)
        sup_psi, bound, ok = correction_bound_check(ScalarField(grid33, np.zeros((33, 33))), budget, 0.5)
        assert sup_psi == pytest.approx(budget.s * budget.c / 8.0, abs=1e-15)
        assert bound == pytest.approx(0.125)
        assert ok

    def test_cuadratica(self, grid33, make_field):
        u = make_field(grid33, lambda x1, x2: 0.5 * (x1**2 + x2**2))
        assert correction_bound_check(u, rotation_budget(1.0, 0.0, 0.5), 0.5)[2]

    def test_potenciales_aleatorios(self, grid33):
        rng = philox_generator(11, 3)
        for _ in range(20):
            u = random_perturbed_potential(rng, grid33, lam=1.0)
            assert correction_bound_check(u, rotation_budget(1.0, 0.0, 0.5), 0.5)[2]

    def test_radio_mayor_que_r_prima(self, grid33, make_field):
        u = make_field(grid33, lambda x1, x2: x1)
        with pytest.raises(ConfigurationError):
            correction_bound_check(u, rotation_budget(1.0, 0.0, 0.5), 0.75)


class TestSchauderReport:
    def test_cuadratica(self, grid33, make_field):
        u = make_field(grid33, lambda x1, x2: 0.5 * (x1**2 + x2**2))
        theta = lagrangian_phase(hessian(u))
        report = schauder_report(u, theta, 0.5, rotation_budget(1.0, 0.0, 0.5))
        assert report.hessian_alpha == pytest.approx(0.0, abs=1e-9)
        assert report.empirical_C1 == pytest.approx(0.0, abs=1e-9)
        assert report.lam_measured == pytest.approx(1.0, abs=1e-10)
        assert report.branch == BRANCH_DIRECT
        assert report.correction_bound_ok

    def test_fase_inconsistente(self, grid33, make_field):
        u = make_field(grid33, lambda x1, x2: 0.5 * (x1**2 + x2**2))
        theta = ScalarField(grid33, np.zeros((33, 33)))
        with pytest.raises(ConsistencyError):
            schauder_report(u, theta, 0.5, rotation_budget(1.0, 0.0, 0.5))

    def test_radio_sin_nodos_se_agranda(self, grid17, make_field):
        u = make_field(grid17, lambda x1, x2: 0.5 * (x1**2 + x2**2))
        theta = lagrangian_phase(hessian(u))
        report = schauder_report(u, theta, 0.5, rotation_budget(1.0, 1.0, 0.5))
        assert report.R_used == pytest.approx(1.5 * grid17.h)

    def test_covarianza_de_escala(self, grid65):
        u = generate_potential("perturbed_quadratic", {"eps": 0.05}, grid65)["u"]
        rho = 0.5
        scaled = holder_seminorm(hessian(rescale_potential(u, rho)), 0.5, 0.5, pair_budget=400000)
        original = holder_seminorm(hessian(u), rho * 0.5, 0.5, pair_budget=400000)
        assert scaled == pytest.approx(rho**0.5 * original, rel=0.25)

    def test_constante_empirica_escala_con_rho(self, grid65):
        def empirical(u):
            theta = lagrangian_phase(hessian(u))
            budget = rotation_budget(c11_norm(u, 1.0), holder_seminorm(theta, 1.0, 0.5), 0.5)
            return schauder_report(u, theta, 0.5, budget).empirical_C1

        u = generate_potential("perturbed_quadratic", {"eps": 0.05}, grid65)["u"]
        base = empirical(u)
        for rho in (0.5, 0.25):
            assert empirical(rescale_potential(u, rho)) / (rho * base) == pytest.approx(1.0, rel=0.25)

    @pytest.mark.slow
    def test_constante_empirica_estable(self):
        constants = []
        for n in (33, 65, 129):
            grid = Grid2D(n, 1.0, 1.0)
            u = generate_potential("perturbed_quadratic", {"eps": 0.05}, grid)["u"]
            theta = lagrangian_phase(hessian(u))
            budget = rotation_budget(c11_norm(u, 1.0), holder_seminorm(theta, 1.0, 0.5), 0.5)
            constants.append(schauder_report(u, theta, 0.5, budget).empirical_C1)
        spread = max(constants) / min(constants)
        assert spread <= 1.2


class TestSmallOscillationBall:
    def test_fase_constante_usa_toda_la_mascara(self, grid33):
        theta = ScalarField(grid33, np.full((33, 33), 0.3))
        assert find_small_oscillation_ball(theta, 0.01) == 1.0

    def test_fase_lineal(self, grid65, make_field):
        assert find_small_oscillation_ball(make_field(grid65, lambda x1, x2: x1), 0.3) == 0.125

    def test_resolucion_insuficiente(self, grid65, make_field):
        with pytest.raises(ResolutionError):
            find_small_oscillation_ball(make_field(grid65, lambda x1, x2: 10.0 * x1), 0.5)


class TestRegularityPipeline:
    def test_cuadratica_rama_directa(self, grid33, make_field):
        u = make_field(grid33, lambda x1, x2: 0.5 * (x1**2 + x2**2))
        report = regularity_pipeline(u, 0.5)
        assert report.branch == BRANCH_DIRECT
        assert report.hessian_alpha == pytest.approx(0.0, abs=1e-9)
        assert report.theta_at_origin == pytest.approx(math.pi / 2, abs=1e-12)
        assert not report.sign_flipped
        assert report.rescale_rho == 1.0

    def test_silla_rama_rotada(self, grid33, make_field):
        u = make_field(grid33, lambda x1, x2: 0.5 * (x1**2 - x2**2))
        report = regularity_pipeline(u, 0.5)
        assert report.branch == BRANCH_ROTATED
        assert report.rotated_hessian_alpha == pytest.approx(0.0, abs=1e-8)
        assert report.lh_ok

    def test_silla_perturbada_rama_rotada(self, grid65, make_field):
        u = make_field(grid65, lambda x1, x2: 0.5 * (x1**2 - x2**2) + 0.02 * np.sin(x1))
        report = regularity_pipeline(u, 0.5)
        assert report.branch == BRANCH_ROTATED
        assert report.rotated_hessian_alpha > 0.0
        assert report.hessian_alpha > 0.0
        assert report.hessian_alpha <= report.lh_bound
        assert report.lh_ok

    def test_fase_negativa_invierte_el_signo(self, grid33, make_field):
        u = make_field(grid33, lambda x1, x2: -0.5 * (x1**2 + x2**2))
        report = regularity_pipeline(u, 0.5)
        assert report.sign_flipped
        assert report.theta_at_origin == pytest.approx(math.pi / 2, abs=1e-12)

    def test_reporte_serializable(self, grid33, make_field):
        u = make_field(grid33, lambda x1, x2: 0.5 * (x1**2 + x2**2))
        data = regularity_pipeline(u, 0.5).to_dict()
        assert data["budget"]["delta"] == pytest.approx(math.pi / 8, abs=1e-9)
        assert data["alpha_bar"] == 0.5


class TestWriteProfiles:
    def test_tres_perfiles(self, grid17, make_field, tmp_path):
        u = make_field(grid17, lambda x1, x2: 0.5 * (x1**2 + x2**2))
        path = write_profiles(u, lagrangian_phase(hessian(u)), str(tmp_path / "profiles.csv"))
        df = pd.read_csv(path)
        assert list(df.columns) == ["profile", "r", "u", "theta", "hessian_norm"]
        assert set(df["profile"]) == {"x1", "x2", "radial"}
        radial = df[df["profile"] == "radial"]
        assert radial["r"].is_monotonic_increasing
        assert radial["r"].iloc[0] == 0.0
