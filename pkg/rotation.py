# rotation.py
# Rotación del grafo gradiente hacia abajo por δ: potencial rotado ū, rotación inversa
# e identidades de transformación de Hessianos.

import os
import json
import math
import logging
from dataclasses import dataclass

import numpy as np

from errors import FieldFormatError, PreconditionError, SingularRotationError
from field_io import read_field, write_field
from fields import Grid2D, ScalarField, SymMatField, VectorField, gradient, hessian, interpolate, invert_map
from geometry import RotationBudget, lagrangian_phase, matrix_entries, sym_eigenvalues

logger = logging.getLogger(__name__)

DET_THRESHOLD = 1e-14
SINGULAR_MARGIN = 1e-12
HESSIAN_BOUND_TOL = 1e-8
THETA_SLACK = 1e-3
HESSIAN_SLACK = 1e-2


# --- Álgebra de matrices 2x2 en lote (..., 2, 2) ---

def _eye_like(M):
    return np.broadcast_to(np.eye(2), M.shape)


def _inverse(M):
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    if np.any(np.abs(det) <= DET_THRESHOLD):
        raise SingularRotationError(f"Matriz singular en la rotación (|det| = {np.abs(det).min():.3e})")
    inv = np.empty_like(M)
    inv[..., 0, 0] = M[..., 1, 1] / det
    inv[..., 0, 1] = -M[..., 0, 1] / det
    inv[..., 1, 0] = -M[..., 1, 0] / det
    inv[..., 1, 1] = M[..., 0, 0] / det
    return inv


def _symmetrize(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _check_factor(M, c, s, sign, label):
    """c + sign·s·λ debe quedar lejos de cero para los dos autovalores."""
    lo, hi = sym_eigenvalues(*matrix_entries(M))
    factor = np.minimum(c + sign * s * lo, c + sign * s * hi)
    bad = factor <= SINGULAR_MARGIN * abs(s)
    if np.any(bad):
        worst = float(np.min(factor))
        raise SingularRotationError(f"{label}: autovalor en el borde de admisibilidad (c ± sλ = {worst:.3e})")


def hessian_pullback(H, delta):
    """
    Hessiano rotado hacia abajo: [cH − sI][cI + sH]^{-1}.

    Los autovalores siguen la ley λ ↦ tan(arctan λ − δ).
    """
    H = np.asarray(H, dtype=float)
    c, s = math.cos(delta), math.sin(delta)
    _check_factor(H, c, s, +1.0, "hessian_pullback")
    eye = _eye_like(H)
    return _symmetrize((c * H - s * eye) @ _inverse(c * eye + s * H))


def hessian_pushforward(Abar, delta):
    """
    Hessiano original a partir del rotado: [sI + cA][cI − sA]^{-1}.

    Ley de autovalores λ ↦ tan(arctan λ + δ).
    """
    A = np.asarray(Abar, dtype=float)
    c, s = math.cos(delta), math.sin(delta)
    _check_factor(A, c, s, -1.0, "hessian_pushforward")
    eye = _eye_like(A)
    return _symmetrize((s * eye + c * A) @ _inverse(c * eye - s * A))


def hessian_difference_factorization(A, B, delta):
    """[cI − sB]^{-1}[A − B][cI − sA]^{-1} = pushforward(A) − pushforward(B)."""
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    c, s = math.cos(delta), math.sin(delta)
    _check_factor(A, c, s, -1.0, "hessian_difference_factorization")
    _check_factor(B, c, s, -1.0, "hessian_difference_factorization")
    eye = _eye_like(A)
    return _symmetrize(_inverse(c * eye - s * B) @ (A - B) @ _inverse(c * eye - s * A))


def difference_identity_defect(A, B, delta):
    """Defecto máximo de [cI−sB][sI+cA] − [sI+cB][cI−sA] − (A−B); vale para matrices arbitrarias."""
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    c, s = math.cos(delta), math.sin(delta)
    eye = np.broadcast_to(np.eye(A.shape[-1]), A.shape)
    lhs = (c * eye - s * B) @ (s * eye + c * A) - (s * eye + c * B) @ (c * eye - s * A)
    return float(np.max(np.abs(lhs - (A - B))))


# --- Rotación a nivel de grafo ---

@dataclass(frozen=True)
class RotatedGraph:
    budget: RotationBudget
    forward_map: VectorField
    u_bar: ScalarField
    du_bar: VectorField
    d2u_bar: SymMatField
    theta_bar: ScalarField
    preimages: VectorField
    affine_value: float = 0.0
    affine_slope: tuple = (0.0, 0.0)

    @property
    def grid(self):
        return self.u_bar.grid


def _affine_part(u, du):
    """Valor y gradiente de u en el origen (exactos si el origen es un nodo)."""
    origin = np.zeros((1, 2))
    value = float(interpolate(u, origin)[0])
    d1 = ScalarField(du.grid, du.values[..., 0])
    d2 = ScalarField(du.grid, du.values[..., 1])
    slope = (float(interpolate(d1, origin)[0]), float(interpolate(d2, origin)[0]))
    return value, slope


def correction_function(u, du, budget):
    """ψ(x) = sc(|Du|² − |x|²)/2 − s²·Du·x, de modo que ū(x̄(x)) = u(x) + ψ(x)."""
    x = u.grid.points
    c, s = budget.c, budget.s
    p = du.values
    return ScalarField(u.grid, s * c * (np.sum(p * p, axis=-1) - np.sum(x * x, axis=-1)) / 2.0
                       - s * s * np.sum(p * x, axis=-1))


def rotate_graph(u, budget, workers=None):
    """
    Construye el potencial rotado ū sobre una grilla nueva que cubre |x̄| <= r0.

    Pasos: normalización afín de u, mapa x̄ = c·x + s·Du, ū = u + ψ en los nodos fuente,
    inversión del mapa en cada nodo destino con cota 1/L2 y remuestreo bicúbico.

    Args:
        u: Potencial sobre una grilla que contiene B_{R′}.
        budget: RotationBudget consistente con la cota Λ de D²u.
        workers: Hilos para la inversión del mapa.

    Returns:
        RotatedGraph
    """
    grid = u.grid
    c, s = budget.c, budget.s
    H = hessian(u)
    check_radius = min(budget.R_prime, grid.mask_radius)
    region = grid.ball_mask(check_radius)
    lo, hi = sym_eigenvalues(H.a11, H.a12, H.a22)
    worst = float(max(np.max(-lo[region]), np.max(hi[region])))
    if worst > budget.lam + HESSIAN_BOUND_TOL:
        raise PreconditionError(
            f"Autovalores del Hessiano fuera de [-Λ, Λ] en B_{check_radius:.4g}: máx |λ| = {worst:.6g} > Λ = {budget.lam:.6g}")

    # Preimágenes de B_{r0} quedan en B_{√2·r0·L2}
    reach = math.sqrt(2.0) * budget.r0 * budget.L2
    if reach > grid.padded_limit + 1e-12:
        raise PreconditionError(
            f"La grilla fuente no cubre el alcance de las preimágenes ({reach:.4g} > {grid.padded_limit:.4g})")

    du = gradient(u)
    value0, slope0 = _affine_part(u, du)
    x = grid.points
    u_norm = ScalarField(grid, u.values - value0 - x[..., 0] * slope0[0] - x[..., 1] * slope0[1])
    du_norm = VectorField(grid, du.values - np.asarray(slope0))

    forward = VectorField(grid, c * x + s * du_norm.values)
    psi = correction_function(u_norm, du_norm, budget)
    u_bar_src = ScalarField(grid, u_norm.values + psi.values)

    target = Grid2D(grid.n_per_side, budget.r0, budget.r0)
    targets = target.points.reshape(-1, 2)
    pre = invert_map(forward, targets, budget.inv_L2, workers=workers)
    u_bar = ScalarField(target, interpolate(u_bar_src, pre).reshape(target.n_per_side, target.n_per_side))

    d2u_bar = hessian(u_bar)
    if s > 0:
        _, top = sym_eigenvalues(d2u_bar.a11, d2u_bar.a12, d2u_bar.a22)
        cot = c / s
        if np.any(top >= cot - SINGULAR_MARGIN):
            node = tuple(int(k) for k in np.unravel_index(int(np.argmax(top)), top.shape))
            raise SingularRotationError(
                f"D²ū alcanza cot δ = {cot:.6g} en el nodo {node} (λ = {top[node]:.6g})", node=node)

    logger.info("rotate_graph: δ=%.6g r0=%.6g, %d nodos destino", budget.delta, budget.r0, len(targets))
    return RotatedGraph(
        budget=budget, forward_map=forward, u_bar=u_bar, du_bar=gradient(u_bar), d2u_bar=d2u_bar,
        theta_bar=lagrangian_phase(d2u_bar),
        preimages=VectorField(target, pre.reshape(target.n_per_side, target.n_per_side, 2)),
        affine_value=value0, affine_slope=slope0)


def rotate_back(rg):
    """
    Rotación inversa: x = c·x̄ − s·Dū, y = s·x̄ + c·Dū (más la pendiente afín retirada).

    Returns:
        tuple: (VectorField x(x̄), VectorField y(x̄)) sobre la grilla rotada.
    """
    c, s = rg.budget.c, rg.budget.s
    xbar = rg.grid.points
    dub = rg.du_bar.values
    x = VectorField(rg.grid, c * xbar - s * dub)
    y = VectorField(rg.grid, s * xbar + c * dub + np.asarray(rg.affine_slope))
    return x, y


def verify_phase_shift(u, rg):
    """Máximo de |θ̄(x̄) − (θ(x(x̄)) − 2δ)| sobre los nodos interiores de la grilla rotada."""
    theta = lagrangian_phase(hessian(u))
    mask = rg.grid.interior_mask
    pre = rg.preimages.values[mask]
    expected = interpolate(theta, pre) - 2.0 * rg.budget.delta
    return float(np.max(np.abs(rg.theta_bar.values[mask] - expected)))


def holder_transfer_check(theta, rg, alpha_bar, pair_budget=20000, seed=0):
    """
    Transferencia de Hölder de la fase: [θ̄]_{ᾱ,B_r0} <= L2^ᾱ·[θ]_{ᾱ,B_R′} + 1e-3.

    Returns:
        tuple: (lado izquierdo, lado derecho, cumple)
    """
    from analysis import holder_seminorm

    b = rg.budget
    lhs = holder_seminorm(rg.theta_bar, b.r0, alpha_bar, pair_budget, seed=seed)
    radius = min(b.R_prime, theta.grid.mask_radius)
    rhs = b.L2**alpha_bar * holder_seminorm(theta, radius, alpha_bar, pair_budget, seed=seed)
    return lhs, rhs, bool(lhs <= rhs + THETA_SLACK)


def hessian_transfer_check(u, rg, alpha, pair_budget=20000, seed=0):
    """
    Cota de Hessianos tras deshacer la rotación: [D²u]_α <= L1^{α+2}·[D²ū]_α + 1e-2.

    El lado izquierdo se mide en los nodos fuente cuya imagen x̄ cae en B_r0.

    Returns:
        tuple: (lado izquierdo, lado derecho, cumple)
    """
    from analysis import holder_seminorm, holder_seminorm_on

    b = rg.budget
    H = hessian(u)
    region = u.grid.interior_mask & (np.linalg.norm(rg.forward_map.values, axis=-1) <= b.r0 + 1e-12)
    lhs = holder_seminorm_on(H.values[region], u.grid.points[region], alpha, pair_budget, seed=seed)
    rhs = b.L1 ** (alpha + 2.0) * holder_seminorm(rg.d2u_bar, b.r0, alpha, pair_budget, seed=seed)
    return lhs, rhs, bool(lhs <= rhs + HESSIAN_SLACK)


# --- Persistencia en directorio ---

ROTATED_FILES = ("forward_map", "u_bar", "du_bar", "d2u_bar", "theta_bar", "preimages")


def write_rotated_graph(rg, directory, source_path=None):
    """Escribe budget.json, un archivo por campo y provenance.json en el directorio."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "budget.json"), 'w', encoding='utf-8') as f:
        json.dump(rg.budget.to_dict(), f, indent=4, ensure_ascii=False)
    written = []
    for name in ROTATED_FILES:
        written.append(write_field(getattr(rg, name), os.path.join(directory, f"{name}.csv")))
    provenance = {
        "source": source_path,
        "delta": rg.budget.delta,
        "affine_value": rg.affine_value,
        "affine_slope": list(rg.affine_slope),
        "source_grid": rg.forward_map.grid.to_dict(),
    }
    with open(os.path.join(directory, "provenance.json"), 'w', encoding='utf-8') as f:
        json.dump(provenance, f, indent=4, ensure_ascii=False)
    return [os.path.join(directory, "budget.json")] + written + [os.path.join(directory, "provenance.json")]


def read_rotated_graph(directory):
    try:
        with open(os.path.join(directory, "budget.json"), 'r', encoding='utf-8') as f:
            budget = RotationBudget.from_dict(json.load(f))
        with open(os.path.join(directory, "provenance.json"), 'r', encoding='utf-8') as f:
            provenance = json.load(f)
    except json.JSONDecodeError as e:
        raise FieldFormatError(f"{directory}: JSON inválido ({e})")
    fields = {name: read_field(os.path.join(directory, f"{name}.csv")) for name in ROTATED_FILES}
    return RotatedGraph(budget=budget, affine_value=float(provenance.get("affine_value", 0.0)),
                        affine_slope=tuple(provenance.get("affine_slope", (0.0, 0.0))), **fields)
