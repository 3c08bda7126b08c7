# analysis.py
# Normas y seminormas de Hölder, reporte de la estimación de Schauder y pipeline de regularidad.

import os
import math
import logging
from dataclasses import dataclass, asdict

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from errors import ConfigurationError, ConsistencyError, DomainError, ResolutionError
from fields import MASK_EPS, ScalarField, SymMatField, gradient, hessian, interpolate, rescale_potential
from geometry import (RotationBudget, check_small_phase_condition, lagrangian_phase, rotation_budget,
                      sym_eigenvalues)
from rotation import correction_function, hessian_transfer_check, rotate_graph

logger = logging.getLogger(__name__)

MIN_PAIR_BUDGET = 10_000
CONSISTENCY_TOL = 1e-6
CORRECTION_SLACK = 1e-10
LAMBDA_FLOOR = 1e-8
PHILOX_OFFSET_PAIRS = 0

BRANCH_ROTATED = "small_phase_rotated"
BRANCH_DIRECT = "phase_bounded_away"


# --- Estimadores ---

def _difference_norm(values, i, j):
    d = values[i] - values[j]
    if d.ndim == 1:
        return np.abs(d)
    # Norma espectral de la diferencia de matrices simétricas (a11, a12, a22)
    lo, hi = sym_eigenvalues(d[:, 0], d[:, 1], d[:, 2])
    return np.maximum(np.abs(lo), np.abs(hi))


def _sampled_pairs(values, points, pair_budget, seed):
    """Pares estratificados por distancia diádica más vecinos cercanos y el par (argmax, argmin)."""
    m = len(points)
    rng = np.random.Generator(np.random.Philox(key=seed + PHILOX_OFFSET_PAIRS))
    tree = cKDTree(points)
    nearest, _ = tree.query(points, k=2)
    step = float(np.min(nearest[:, 1]))

    neighbours = tree.query_pairs(r=1.5 * step, output_type="ndarray")
    span = float(np.max(np.ptp(points, axis=0)) * math.sqrt(2.0))
    n_strata = max(1, int(math.ceil(math.log2(max(span / step, 1.0)))) + 1)
    per_stratum = max(1, (pair_budget - len(neighbours)) // n_strata)

    chunks = [neighbours]
    for k in range(n_strata):
        hi = span * 2.0**-k
        lo = hi / 2.0
        anchors = rng.integers(0, m, size=per_stratum)
        radius = rng.uniform(lo, hi, size=per_stratum)
        angle = rng.uniform(0.0, 2.0 * math.pi, size=per_stratum)
        targets = points[anchors] + radius[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=-1)
        _, partner = tree.query(targets)
        chunks.append(np.stack([anchors, partner], axis=-1))

    key = values if values.ndim == 1 else values[:, 0]
    chunks.append(np.array([[int(np.argmax(key)), int(np.argmin(key))]]))
    pairs = np.concatenate(chunks)
    return pairs[pairs[:, 0] != pairs[:, 1]]


def holder_seminorm_on(values, points, alpha, pair_budget=20000, seed=0):
    """
    Seminorma de Hölder max |f(x) − f(y)|/|x − y|^α sobre pares de nodos dados.

    Todos los pares si caben en pair_budget; si no, muestreo estratificado con semilla fija.

    Args:
        values: (m,) escalares o (m, 3) matrices simétricas (a11, a12, a22).
        points: (m, 2) coordenadas de los nodos.
    """
    if not 0 < alpha <= 1:
        raise ConfigurationError(f"α debe estar en (0, 1] (recibido {alpha})")
    if pair_budget < MIN_PAIR_BUDGET:
        raise ConfigurationError(f"pair_budget debe ser >= {MIN_PAIR_BUDGET} (recibido {pair_budget})")
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float)
    m = len(points)
    if m < 2:
        raise DomainError(f"Se necesitan al menos 2 nodos para una seminorma de Hölder (hay {m})")

    if m * (m - 1) // 2 <= pair_budget:
        i, j = np.triu_indices(m, k=1)
    else:
        pairs = _sampled_pairs(values, points, pair_budget, seed)
        i, j = pairs[:, 0], pairs[:, 1]
    dist = np.linalg.norm(points[i] - points[j], axis=1)
    return float(np.max(_difference_norm(values, i, j) / dist**alpha))


def _region(grid, radius):
    return grid.interior_mask & grid.ball_mask(radius)


def holder_seminorm(f, radius, alpha, pair_budget=20000, seed=0):
    """[f]_{α, B_radius} para un ScalarField o un SymMatField (norma espectral)."""
    region = _region(f.grid, radius)
    return holder_seminorm_on(f.values[region], f.grid.points[region], alpha, pair_budget, seed)


def sup_norm(f, radius):
    if radius > f.grid.mask_radius + MASK_EPS:
        raise DomainError(f"radio {radius} mayor que mask_radius {f.grid.mask_radius}")
    region = _region(f.grid, radius)
    if not region.any():
        raise DomainError(f"No hay nodos con |x| <= {radius}")
    return float(np.max(np.abs(f.values[region])))


def c11_norm(u, radius):
    """Máximo de la norma espectral del Hessiano en B_radius."""
    H = hessian(u)
    spectral = ScalarField(u.grid, np.maximum(*(np.abs(v) for v in sym_eigenvalues(H.a11, H.a12, H.a22))))
    return sup_norm(spectral, radius)


def correction_bound_check(u, budget, radius):
    """
    Compara sup|ψ| con R·sup|Du| + ½(R² + sup|Du|²) en B_R.

    Returns:
        tuple: (sup|ψ|, cota, cumple)
    """
    if radius > budget.R_prime + MASK_EPS:
        raise ConfigurationError(f"El radio {radius} supera R′ = {budget.R_prime}")
    du = gradient(u)
    psi = correction_function(u, du, budget)
    region = _region(u.grid, radius)
    if not region.any():
        raise DomainError(f"No hay nodos con |x| <= {radius}")
    sup_psi = float(np.max(np.abs(psi.values[region])))
    sup_du = float(np.max(np.linalg.norm(du.values[region], axis=-1)))
    bound = radius * sup_du + 0.5 * (radius**2 + sup_du**2)
    return sup_psi, bound, bool(sup_psi <= bound + CORRECTION_SLACK)


# --- Reporte ---

@dataclass
class RegularityReport:
    lam_measured: float
    sup_u: float
    theta_alpha: float
    hessian_alpha: float
    R_used: float
    branch: str
    empirical_C1: float
    budget: RotationBudget
    correction_bound_ok: bool
    alpha: float
    alpha_bar: float
    correction_sup: float = 0.0
    correction_bound: float = 0.0
    ball_radius: float = 0.0
    theta_at_origin: float = 0.0
    sign_flipped: bool = False
    rotated_hessian_alpha: float = None
    lh_bound: float = None
    lh_ok: bool = None
    rescale_rho: float = 1.0

    def to_dict(self):
        data = asdict(self)
        data["budget"] = self.budget.to_dict()
        return data


def _empirical_constant(hessian_alpha, sup_u, lam, theta_alpha):
    denominator = sup_u + lam + theta_alpha
    return hessian_alpha / denominator if denominator > 0 else 0.0


def _radius_with_nodes(grid, radius):
    """Agranda el radio al mínimo que contenga dos nodos interiores."""
    if _region(grid, radius).sum() >= 2:
        return radius
    enlarged = 1.5 * grid.h
    logger.warning("Radio %.4g sin nodos suficientes, se usa %.4g", radius, enlarged)
    return enlarged


def schauder_report(u, theta, alpha, budget, pair_budget=20000, seed=0):
    """
    Mide los términos de la estimación |D²u|_{C^α(B_R)} <= C₁(||u||_∞, Λ, |θ|_{C^α}) con R = r0/2.

    Raises:
        ConsistencyError: Si θ no coincide con la fase de hessian(u) a 1e-6.
    """
    grid = u.grid
    H = hessian(u)
    mask = grid.interior_mask
    mismatch = float(np.max(np.abs(lagrangian_phase(H).values[mask] - theta.values[mask])))
    if mismatch > CONSISTENCY_TOL:
        raise ConsistencyError(f"θ no es la fase del potencial: diferencia máxima {mismatch:.3e}")

    lam = c11_norm(u, grid.mask_radius)
    sup_u = sup_norm(u, grid.mask_radius)
    theta_alpha = holder_seminorm(theta, grid.mask_radius, alpha, pair_budget, seed)
    R_used = _radius_with_nodes(grid, budget.r0 / 2.0)
    hessian_alpha = holder_seminorm(H, R_used, alpha, pair_budget, seed)
    sup_psi, bound, ok = correction_bound_check(u, budget, min(budget.R_prime, grid.mask_radius))
    theta0 = float(interpolate(theta, np.zeros((1, 2)))[0])
    branch = BRANCH_ROTATED if check_small_phase_condition(theta0, budget.lam) else BRANCH_DIRECT
    return RegularityReport(
        lam_measured=lam, sup_u=sup_u, theta_alpha=theta_alpha, hessian_alpha=hessian_alpha,
        R_used=R_used, branch=branch,
        empirical_C1=_empirical_constant(hessian_alpha, sup_u, lam, theta_alpha),
        budget=budget, correction_bound_ok=ok, alpha=alpha, alpha_bar=budget.alpha_bar,
        correction_sup=sup_psi, correction_bound=bound, theta_at_origin=theta0)


# --- Pipeline ---

def find_small_oscillation_ball(theta, threshold):
    """Mayor radio diádico centrado (mask_radius·2^-k, >= 2h) con osc θ < threshold."""
    grid = theta.grid
    radius = grid.mask_radius
    while radius >= 2.0 * grid.h:
        vals = theta.values[_region(grid, radius)]
        if vals.size and float(vals.max() - vals.min()) < threshold:
            return radius
        radius /= 2.0
    raise ResolutionError(
        f"No hay bola centrada con osc θ < {threshold:.4g} a esta resolución (h = {grid.h:.4g}); refine la grilla")


def _budget_for(u, theta, alpha_bar, pair_budget, seed):
    grid = u.grid
    lam = max(c11_norm(u, grid.mask_radius), LAMBDA_FLOOR)
    holder_theta = holder_seminorm(theta, grid.mask_radius, alpha_bar, pair_budget, seed)
    return rotation_budget(lam, holder_theta, alpha_bar)


def regularity_pipeline(u, alpha_bar, alpha=None, pair_budget=20000, seed=0, workers=None):
    """
    Pipeline de regularidad: fase, bola de oscilación pequeña, y luego rotación (fase pequeña)
    o medición directa (fase lejos de cero).

    Args:
        u: Potencial con cota C^{1,1} finita.
        alpha_bar: Exponente de Hölder de la fase.
        alpha: Exponente de salida para D²u (por defecto alpha_bar).

    Returns:
        RegularityReport
    """
    alpha = alpha_bar if alpha is None else alpha
    grid = u.grid
    theta = lagrangian_phase(hessian(u))
    theta0 = float(interpolate(theta, np.zeros((1, 2)))[0])
    sign_flipped = theta0 < 0
    if sign_flipped:
        u, theta, theta0 = -u, -theta, -theta0
        logger.info("θ(0) < 0: se analiza -u")

    budget0 = _budget_for(u, theta, alpha_bar, pair_budget, seed)
    ball = find_small_oscillation_ball(theta, budget0.delta / 4.0)
    rho = ball / grid.mask_radius
    u_r = rescale_potential(u, rho)
    theta_r = lagrangian_phase(hessian(u_r))
    budget = _budget_for(u_r, theta_r, alpha_bar, pair_budget, seed)

    if not check_small_phase_condition(theta0, budget.lam):
        report = schauder_report(u_r, theta_r, alpha, budget, pair_budget, seed)
        report.branch = BRANCH_DIRECT
    else:
        report = schauder_report(u_r, theta_r, alpha, budget, pair_budget, seed)
        rg = rotate_graph(u_r, budget, workers=workers)
        rotated = holder_seminorm(rg.d2u_bar, budget.r0, alpha, pair_budget, seed)
        lhs, rhs, ok = hessian_transfer_check(u_r, rg, alpha, pair_budget, seed)
        report.branch = BRANCH_ROTATED
        report.rotated_hessian_alpha = rotated
        report.hessian_alpha = lhs
        report.lh_bound = rhs
        report.lh_ok = ok
        report.empirical_C1 = _empirical_constant(lhs, report.sup_u, report.lam_measured, report.theta_alpha)

    report.alpha_bar = alpha_bar
    report.ball_radius = ball
    report.theta_at_origin = theta0
    report.sign_flipped = sign_flipped
    report.rescale_rho = rho
    logger.info("regularity_pipeline: rama %s, bola %.4g, C1 empírica %.4g", report.branch, ball,
                report.empirical_C1)
    return report


def write_profiles(u, theta, path):
    """Perfiles CSV (ejes x₁, x₂ y promedio radial) de u, θ y |D²u| para graficar externamente."""
    grid = u.grid
    H = hessian(u)
    lo, hi = sym_eigenvalues(H.a11, H.a12, H.a22)
    spectral = np.maximum(np.abs(lo), np.abs(hi))
    i0, j0 = grid.origin_index
    mask = grid.interior_mask

    frames = []
    for name, sl, coord in (("x1", (slice(None), j0), grid.coords), ("x2", (i0, slice(None)), grid.coords)):
        keep = mask[sl]
        frames.append(pd.DataFrame({"profile": name, "r": coord[keep], "u": u.values[sl][keep],
                                    "theta": theta.values[sl][keep], "hessian_norm": spectral[sl][keep]}))

    shells = pd.DataFrame({"bin": np.rint(grid.radius[mask] / grid.h).astype(int), "u": u.values[mask],
                           "theta": theta.values[mask], "hessian_norm": spectral[mask]})
    radial = shells.groupby("bin", sort=True).mean().reset_index()
    radial.insert(0, "r", radial.pop("bin") * grid.h)
    radial.insert(0, "profile", "radial")
    frames.append(radial)

    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path
