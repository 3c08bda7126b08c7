import math

import numpy as np
import pytest

from errors import PreconditionError, SingularRotationError
from fields import Grid2D, ScalarField, hessian
from generators import generate_potential, random_symmetric
from geometry import (lagrangian_phase, matrix_entries, matrix_phase, rotation_budget, sym_eigenvalues,
                      synthetic_budget)
from rotation import (difference_identity_defect, hessian_difference_factorization, hessian_pullback,
                      hessian_pushforward, hessian_transfer_check, holder_transfer_check, read_rotated_graph,
                      rotate_back, rotate_graph, verify_phase_shift, write_rotated_graph)

DELTA = math.pi / 8


@pytest.fixture
def quadratic65():
    grid = Grid2D(65, 1.0, 1.0)
    x1, x2 = grid.mesh
    return ScalarField(grid, 0.5 * (x1**2 + x2**2))


@pytest.fixture
def budget_unit():
    return rotation_budget(1.0, 0.0, 0.5)


class TestHessianPullback:
    def test_identidad_por_cuarto_de_vuelta(self):
        np.testing.assert_allclose(hessian_pullback(np.eye(2), math.pi / 4), np.zeros((2, 2)), atol=1e-12)

    def test_delta_cero(self, rng):
        H = random_symmetric(rng, 50, -3.0, 3.0)
        np.testing.assert_allclose(hessian_pullback(H, 0.0), H, atol=1e-14)

    def test_diag_2_3(self):
        out = hessian_pullback(np.diag([2.0, 3.0]), DELTA)
        np.testing.assert_allclose(out, np.diag([0.86730, 1.15301]), atol=1e-5)

    def test_ley_de_autovalores(self, rng):
        H = random_symmetric(rng, 500, -1.0, 1.0)
        lo, hi = sym_eigenvalues(*matrix_entries(H))
        plo, phi = sym_eigenvalues(*matrix_entries(hessian_pullback(H, DELTA)))
        np.testing.assert_allclose(plo, np.tan(np.arctan(lo) - DELTA), atol=1e-12)
        np.testing.assert_allclose(phi, np.tan(np.arctan(hi) - DELTA), atol=1e-12)

    def test_fase_baja_en_delta_por_autovalor(self, rng):
        H = random_symmetric(rng, 500, -1.0, 1.0)
        np.testing.assert_allclose(matrix_phase(hessian_pullback(H, DELTA)), matrix_phase(H) - 2 * DELTA,
                                   atol=1e-12)

    def test_rotaciones_se_componen(self, rng):
        H = random_symmetric(rng, 200, -1.0, 1.0)
        d1 = d2 = math.pi / 16
        twice = hessian_pullback(hessian_pullback(H, d1), d2)
        once = hessian_pullback(H, d1 + d2)
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_autovalor_en_menos_cotangente(self):
        with pytest.raises(SingularRotationError):
            hessian_pullback(np.diag([-1.0 / math.tan(DELTA), 0.0]), DELTA)


class TestHessianPushforward:
    def test_matriz_nula(self):
        np.testing.assert_allclose(hessian_pushforward(np.zeros((2, 2)), DELTA), math.tan(DELTA) * np.eye(2),
                                   atol=1e-15)

    def test_delta_cero(self, rng):
        A = random_symmetric(rng, 50, -3.0, 3.0)
        np.testing.assert_allclose(hessian_pushforward(A, 0.0), A, atol=1e-14)

    def test_recupera_diag_2_3(self):
        # Las entradas tabuladas tienen 5 decimales: el error de redondeo se amplifica cerca de cot δ
        out = hessian_pushforward(np.diag([0.86730, 1.15301]), DELTA)
        np.testing.assert_allclose(out, np.diag([2.0, 3.0]), atol=5e-5)

    def test_ida_y_vuelta(self, rng):
        H = random_symmetric(rng, 500, -1.0, 1.0)
        np.testing.assert_allclose(hessian_pushforward(hessian_pullback(H, DELTA), DELTA), H, atol=1e-12)

    def test_autovalor_en_cotangente(self):
        with pytest.raises(SingularRotationError):
            hessian_pushforward(np.diag([1.0 / math.tan(DELTA), 0.0]), DELTA)


class TestDifferenceIdentities:
    def test_factorizacion_con_matrices_iguales(self, rng):
        A = random_symmetric(rng, 20, -1.0, 1.0)
        np.testing.assert_allclose(hessian_difference_factorization(A, A, DELTA), 0.0, atol=1e-15)

    def test_factorizacion_contra_la_resta_directa(self, rng):
        delta = (math.pi / 2 - math.atan(5.0)) / 2
        A = random_symmetric(rng, 1000, -5.0, 5.0)
        B = random_symmetric(rng, 1000, -5.0, 5.0)
        direct = hessian_pushforward(A, delta) - hessian_pushforward(B, delta)
        np.testing.assert_allclose(hessian_difference_factorization(A, B, delta), direct, atol=1e-11)

    def test_factorizacion_con_b_nula(self, rng):
        A = random_symmetric(rng, 100, -1.0, 1.0)
        direct = hessian_pushforward(A, DELTA) - hessian_pushforward(np.zeros_like(A), DELTA)
        np.testing.assert_allclose(hessian_difference_factorization(A, np.zeros_like(A), DELTA), direct,
                                   atol=1e-12)

    def test_identidad_vale_para_matrices_arbitrarias(self, rng):
        A = rng.uniform(-5.0, 5.0, size=(1000, 3, 3))
        B = rng.uniform(-5.0, 5.0, size=(1000, 3, 3))
        assert difference_identity_defect(A, B, 0.3) <= 1e-12


class TestRotateGraph:
    def test_cuadratica_rota_a_tangente_de_delta(self, quadratic65, budget_unit):
        rg = rotate_graph(quadratic65, budget_unit)
        t = math.tan(math.pi / 4 - budget_unit.delta)
        np.testing.assert_allclose(rg.d2u_bar.a11, t, atol=1e-6)
        np.testing.assert_allclose(rg.d2u_bar.a22, t, atol=1e-6)
        np.testing.assert_allclose(rg.d2u_bar.a12, 0.0, atol=1e-6)
        np.testing.assert_allclose(rg.theta_bar.masked(), math.pi / 2 - 2 * budget_unit.delta, atol=1e-6)

    def test_grilla_destino_cubre_r0(self, quadratic65, budget_unit):
        rg = rotate_graph(quadratic65, budget_unit)
        assert rg.grid.half_width == pytest.approx(budget_unit.r0)
        assert rg.grid.n_per_side == 65

    def test_desplazamiento_de_fase(self, quadratic65, budget_unit):
        rg = rotate_graph(quadratic65, budget_unit)
        assert verify_phase_shift(quadratic65, rg) <= 1e-6

    def test_potencial_nulo(self):
        grid = Grid2D(33, 1.0, 1.0)
        budget = synthetic_budget(DELTA, 0.0, 0.5)
        rg = rotate_graph(ScalarField(grid, np.zeros((33, 33))), budget)
        np.testing.assert_allclose(rg.d2u_bar.a11, -math.tan(DELTA), atol=1e-8)
        np.testing.assert_allclose(rg.d2u_bar.a22, -math.tan(DELTA), atol=1e-8)

    def test_delta_cero_deja_el_potencial(self):
        grid = Grid2D(33, 1.0, 1.0)
        x1, x2 = grid.mesh
        u = ScalarField(grid, 0.5 * (x1**2 + x2**2))
        rg = rotate_graph(u, synthetic_budget(0.0, 1.0, 0.5))
        xb1, xb2 = rg.grid.mesh
        np.testing.assert_allclose(rg.u_bar.values, 0.5 * (xb1**2 + xb2**2), atol=1e-10)

    def test_normalizacion_afin(self):
        grid = Grid2D(33, 1.0, 1.0)
        x1, x2 = grid.mesh
        u = ScalarField(grid, 0.5 * (x1**2 + x2**2) + 0.3 * x1 - 0.2 * x2 + 1.0)
        rg = rotate_graph(u, rotation_budget(1.0, 0.0, 0.5))
        assert rg.affine_value == pytest.approx(1.0, abs=1e-12)
        assert rg.affine_slope == pytest.approx((0.3, -0.2), abs=1e-12)
        np.testing.assert_allclose(rg.d2u_bar.a11, math.tan(math.pi / 8), atol=1e-6)

    def test_ida_y_vuelta(self, quadratic65, budget_unit):
        rg = rotate_graph(quadratic65, budget_unit)
        x, y = rotate_back(rg)
        np.testing.assert_allclose(x.values, rg.preimages.values, atol=1e-8)
        # Du(x) = x para ½|x|²
        np.testing.assert_allclose(y.values, rg.preimages.values, atol=1e-7)

    def test_hessiano_fuera_de_la_cota(self, budget_unit):
        grid = Grid2D(33, 1.0, 1.0)
        x1, x2 = grid.mesh
        with pytest.raises(PreconditionError, match="Λ"):
            rotate_graph(ScalarField(grid, x1**2 + x2**2), budget_unit)

    def test_resultado_independiente_de_los_hilos(self):
        grid = Grid2D(33, 1.0, 1.0)
        u = generate_potential("perturbed_quadratic", {"eps": 0.02}, grid)["u"]
        budget = rotation_budget(1.1, 0.0, 0.5)
        a = rotate_graph(u, budget, workers=1)
        b = rotate_graph(u, budget, workers=4)
        assert np.array_equal(a.u_bar.values, b.u_bar.values)


class TestTransferChecks:
    def test_fase_constante(self, quadratic65, budget_unit):
        rg = rotate_graph(quadratic65, budget_unit)
        theta = lagrangian_phase(hessian(quadratic65))
        lhs, rhs, ok = holder_transfer_check(theta, rg, 0.5)
        assert ok
        assert lhs <= 1e-9

    def test_cuadratica_perturbada(self):
        grid = Grid2D(33, 1.0, 1.0)
        u = generate_potential("perturbed_quadratic", {"eps": 0.05}, grid)["u"]
        H = hessian(u)
        lo, hi = sym_eigenvalues(H.a11, H.a12, H.a22)
        lam = float(max(np.max(-lo[grid.interior_mask]), np.max(hi[grid.interior_mask])))
        budget = rotation_budget(lam, 0.0, 0.5)
        rg = rotate_graph(u, budget)
        theta = lagrangian_phase(H)
        _, _, ok_theta = holder_transfer_check(theta, rg, 0.5, pair_budget=400000)
        _, _, ok_hess = hessian_transfer_check(u, rg, 0.5, pair_budget=400000)
        assert ok_theta
        assert ok_hess


class TestRotatedGraphIO:
    def test_escritura_y_lectura(self, budget_unit, tmp_path):
        grid = Grid2D(33, 1.0, 1.0)
        x1, x2 = grid.mesh
        u = ScalarField(grid, 0.5 * (x1**2 + x2**2) + 0.1 * x1)
        rg = rotate_graph(u, budget_unit)
        paths = write_rotated_graph(rg, str(tmp_path / "rotated"), source_path="u.csv")
        assert len(paths) == 8
        back = read_rotated_graph(str(tmp_path / "rotated"))
        assert back.budget == rg.budget
        assert back.affine_slope == pytest.approx(rg.affine_slope)
        assert np.array_equal(back.u_bar.values, rg.u_bar.values)
        assert np.array_equal(back.d2u_bar.values, rg.d2u_bar.values)
