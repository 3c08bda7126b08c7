# verify_suites.py
# Suites de propiedades: identidades algebraicas, transferencia de Hölder y órdenes de convergencia.

import math
import logging

import numpy as np

from errors import ConfigurationError
from fields import Grid2D, ScalarField, gradient, hessian
from generators import STREAM_IDENTITIES, STREAM_TRANSFER, philox_generator, random_symmetric
from geometry import (inverse_L2_tan_chain, lagrangian_phase, matrix_entries, matrix_phase, rotation_budget,
                      sym_eigenvalues)
from rotation import (difference_identity_defect, hessian_difference_factorization, hessian_pullback,
                      hessian_pushforward, holder_transfer_check, hessian_transfer_check, rotate_back,
                      rotate_graph, verify_phase_shift)

logger = logging.getLogger(__name__)

MIN_TRIALS = 100
IDENTITY_TOL = 1e-12
COMPOSITE_TOL = 1e-11
SLOPE_RANGE = (1.8, 2.2)
SUITES = ("identities", "transfer", "convergence")


def _check(worst, tolerance):
    return {"worst": float(worst), "tolerance": tolerance, "passed": bool(worst <= tolerance)}


def run_identities(seed, trials, lam=5.0):
    """Identidad de diferencias, ley de autovalores, ida y vuelta, fases y presupuesto."""
    rng = philox_generator(seed, STREAM_IDENTITIES)
    delta = (math.pi / 2 - math.atan(lam)) / 2.0
    A = random_symmetric(rng, trials, -lam, lam)
    B = random_symmetric(rng, trials, -lam, lam)

    defect = difference_identity_defect(A, B, delta)
    factor = hessian_difference_factorization(A, B, delta)
    direct = hessian_pushforward(A, delta) - hessian_pushforward(B, delta)
    factor_dev = np.max(np.abs(factor - direct))

    pulled = hessian_pullback(A, delta)
    lo, hi = sym_eigenvalues(*matrix_entries(A))
    plo, phi = sym_eigenvalues(*matrix_entries(pulled))
    law_dev = max(np.max(np.abs(plo - np.tan(np.arctan(lo) - delta))),
                  np.max(np.abs(phi - np.tan(np.arctan(hi) - delta))))
    round_trip = np.max(np.abs(hessian_pushforward(pulled, delta) - A))

    theta = matrix_phase(A)
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    via_log = np.angle((1.0 - det) + 1j * (A[:, 0, 0] + A[:, 1, 1]))
    away = np.abs(theta) < math.pi - 0.01
    phase_dev = np.max(np.abs(theta[away] - via_log[away])) if away.any() else 0.0

    budget_dev = 0.0
    for value in (0.5, 1.0, 2.0, 5.0):
        b = rotation_budget(value, 0.0, 1.0)
        budget_dev = max(budget_dev, abs(inverse_L2_tan_chain(value, b.delta) - (b.c - value * b.s)))

    return {
        "difference_identity": _check(defect, IDENTITY_TOL),
        "difference_factorization": _check(factor_dev, COMPOSITE_TOL),
        "eigenvalue_law": _check(law_dev, IDENTITY_TOL),
        "round_trip": _check(round_trip, IDENTITY_TOL),
        "phase_agreement": _check(phase_dev, IDENTITY_TOL),
        "budget_tan_chain": _check(budget_dev, COMPOSITE_TOL),
    }


def run_transfer(seed, trials, grid_n=33):
    """Corpus de potenciales cuadráticos con Λ = 1: rotación, desplazamiento de fase y transferencia de Hölder."""
    rng = philox_generator(seed, STREAM_TRANSFER)
    grid = Grid2D(grid_n, 1.0, 1.0)
    budget = rotation_budget(1.0, 0.0, 0.5)
    mats = random_symmetric(rng, trials, -1.0, 1.0)
    x1, x2 = grid.mesh

    worst = {"phase_shift": 0.0, "theta_transfer": 0.0, "hessian_transfer": 0.0, "round_trip": 0.0}
    theta_ok = True
    for M in mats:
        u = ScalarField(grid, 0.5 * (M[0, 0] * x1**2 + 2.0 * M[0, 1] * x1 * x2 + M[1, 1] * x2**2))
        rg = rotate_graph(u, budget)
        theta = lagrangian_phase(hessian(u))
        worst["phase_shift"] = max(worst["phase_shift"], verify_phase_shift(u, rg))
        lhs, rhs, ok_theta = holder_transfer_check(theta, rg, 0.5)
        worst["theta_transfer"] = max(worst["theta_transfer"], lhs - rhs)
        lhs, rhs, _ = hessian_transfer_check(u, rg, 0.5)
        worst["hessian_transfer"] = max(worst["hessian_transfer"], lhs - rhs)
        back, _ = rotate_back(rg)
        expected = rg.preimages.values
        worst["round_trip"] = max(worst["round_trip"], float(np.max(np.abs(back.values - expected))))
        theta_ok &= ok_theta

    return {
        "phase_shift": _check(worst["phase_shift"], 1e-6),
        "theta_transfer": {"worst": worst["theta_transfer"], "tolerance": 1e-3, "passed": bool(theta_ok)},
        "hessian_transfer": _check(worst["hessian_transfer"], 1e-2),
        "round_trip": _check(worst["round_trip"], 1e-8),
    }


def _slopes(errors):
    return [math.log2(errors[k] / errors[k + 1]) for k in range(len(errors) - 1)]


def run_convergence(levels=(17, 33, 65)):
    """Orden de gradiente y Hessiano sobre sin(x₁)cos(x₂) en refinamientos diádicos."""
    grad_errors, hess_errors = [], []
    for n in levels:
        grid = Grid2D(n, 1.0, 1.0)
        x1, x2 = grid.mesh
        f = ScalarField(grid, np.sin(x1) * np.cos(x2))
        mask = grid.unknown_mask
        du = gradient(f)
        grad_exact = np.stack([np.cos(x1) * np.cos(x2), -np.sin(x1) * np.sin(x2)], axis=-1)
        grad_errors.append(float(np.max(np.abs(du.values - grad_exact)[mask])))
        H = hessian(f)
        exact = np.stack([-np.sin(x1) * np.cos(x2), -np.cos(x1) * np.sin(x2), -np.sin(x1) * np.cos(x2)], axis=-1)
        hess_errors.append(float(np.max(np.abs(H.values - exact)[mask])))

    result = {}
    for name, errors in (("gradient", grad_errors), ("hessian", hess_errors)):
        slopes = _slopes(errors)
        result[name] = {
            "errors": errors,
            "slopes": slopes,
            "range": list(SLOPE_RANGE),
            "passed": bool(all(SLOPE_RANGE[0] <= s <= SLOPE_RANGE[1] for s in slopes)),
        }
    return result


def run_suite(suite, seed, trials, levels=(17, 33, 65)):
    """
    Ejecuta una suite y arma el resumen con los peores desvíos.

    Returns:
        dict: {"suite", "seed", "trials", "checks", "passed"}
    """
    if suite not in SUITES:
        raise ConfigurationError(f"Suite desconocida '{suite}' (opciones: {', '.join(SUITES)})")
    if int(trials) < MIN_TRIALS:
        raise ConfigurationError(f"trials debe ser >= {MIN_TRIALS} (recibido {trials})")
    if suite == "identities":
        checks = run_identities(seed, int(trials))
    elif suite == "transfer":
        checks = run_transfer(seed, int(trials))
    else:
        checks = run_convergence(levels)
    passed = all(c["passed"] for c in checks.values())
    logger.info("Suite %s: %s", suite, "OK" if passed else "FALLÓ")
    return {"suite": suite, "seed": int(seed), "trials": int(trials), "checks": checks, "passed": passed}
