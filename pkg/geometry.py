# geometry.py
# Fase lagrangiana, métrica inducida, cotas de elipticidad y presupuesto de constantes de la rotación.

import math
import logging
from dataclasses import dataclass, asdict

import numpy as np

from errors import ConfigurationError, GeometryError
from fields import ScalarField, SymMatField

logger = logging.getLogger(__name__)

BRANCH_CUT_MARGIN = 1e-9


# --- Núcleos 2x2 en forma cerrada ---

def sym_eigenvalues(a11, a12, a22):
    """Autovalores (menor, mayor) de matrices simétricas 2x2 por traza y discriminante."""
    a11, a12, a22 = np.asarray(a11, float), np.asarray(a12, float), np.asarray(a22, float)
    mean = 0.5 * (a11 + a22)
    radius = np.hypot(0.5 * (a11 - a22), a12)
    return mean - radius, mean + radius


def matrix_entries(mats):
    mats = np.asarray(mats, dtype=float)
    return mats[..., 0, 0], 0.5 * (mats[..., 0, 1] + mats[..., 1, 0]), mats[..., 1, 1]


def phase_of_entries(a11, a12, a22):
    lo, hi = sym_eigenvalues(a11, a12, a22)
    return np.arctan(lo) + np.arctan(hi)


def matrix_phase(mats):
    """Fase arctan λ₁ + arctan λ₂ de un arreglo de matrices (..., 2, 2)."""
    return phase_of_entries(*matrix_entries(mats))


# --- Operaciones sobre campos ---

def lagrangian_phase(H):
    """θ = arctan λ₁ + arctan λ₂ nodo a nodo; rango contenido en (-π, π)."""
    return ScalarField(H.grid, phase_of_entries(H.a11, H.a12, H.a22))


def phase_via_complex_log(H):
    """
    Fase como parte imaginaria del log principal de det(I + iH) = (1 - det H) + i·tr H.

    Returns:
        tuple: (ScalarField con la fase, máscara booleana de nodos junto al corte de rama |θ| >= π - 1e-9)
    """
    det = H.a11 * H.a22 - H.a12**2
    trace = H.a11 + H.a22
    theta = np.angle((1.0 - det) + 1j * trace)
    flags = np.abs(theta) >= math.pi - BRANCH_CUT_MARGIN
    if flags.any():
        logger.warning("phase_via_complex_log: %d nodos junto al corte de rama", int(flags.sum()))
    return ScalarField(H.grid, theta), flags


def induced_metric(H):
    """g = I + H² nodo a nodo."""
    a, b, c = H.a11, H.a12, H.a22
    return SymMatField.from_entries(H.grid, 1.0 + a * a + b * b, b * (a + c), 1.0 + b * b + c * c)


def linearization_coefficients(H):
    """Coeficientes g^{ij} = (I + H²)^{-1}: derivada de la fase respecto del Hessiano."""
    g = induced_metric(H)
    det = g.a11 * g.a22 - g.a12**2
    return SymMatField.from_entries(H.grid, g.a22 / det, -g.a12 / det, g.a11 / det)


def ellipticity_bounds(g, mask=None):
    """
    Cotas de elipticidad (min λ_min(g), max λ_max(g)) sobre los nodos de la máscara.

    Raises:
        GeometryError: Si algún nodo no es definido positivo (con el índice del nodo).
    """
    mask = g.grid.interior_mask if mask is None else mask
    lo, hi = sym_eigenvalues(g.a11, g.a12, g.a22)
    bad = mask & ~(lo > 0)
    if bad.any():
        node = tuple(int(k) for k in np.argwhere(bad)[0])
        raise GeometryError(f"Métrica no definida positiva en el nodo {node} (λ_min = {lo[node]:.6g})", node=node)
    return float(lo[mask].min()), float(hi[mask].max())


# --- Presupuesto de constantes ---

@dataclass(frozen=True)
class RotationBudget:
    """Constantes de la rotación hacia abajo por δ: (δ, L1, L2, R′, r0, umbral de fase pequeña)."""

    lam: float
    A: float
    delta: float
    c: float
    s: float
    L1: float
    L2: float
    R_prime: float
    r0: float
    small_phase_threshold: float
    holder_theta: float = 0.0
    alpha_bar: float = 1.0

    @property
    def inv_L2(self):
        return 1.0 / self.L2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except TypeError as e:
            raise ConfigurationError(f"Presupuesto de rotación inválido: {e}")


def inverse_L2_tan_chain(lam, delta):
    """1/L2 por la cadena de tangentes c·(tan δ + tan A)/tan(π/2 − δ)."""
    return math.cos(delta) * (math.tan(delta) + lam) / math.tan(math.pi / 2 - delta)


def _radius_from_holder(delta, holder_theta, alpha_bar):
    if holder_theta <= 0:
        return 0.5
    # |θ(x) − θ(0)| <= [θ]·|x|^ᾱ <= δ/4: margen 2 dentro de δ/2
    return min(0.5, (delta / (4.0 * holder_theta)) ** (1.0 / alpha_bar))


def _build_budget(lam, delta, R_prime, holder_theta, alpha_bar):
    A = math.atan(lam)
    c, s = math.cos(delta), math.sin(delta)
    inv_L2 = c - lam * s
    if not inv_L2 > 0:
        raise ConfigurationError(f"δ = {delta} demasiado grande para Λ = {lam}: 1/L2 = {inv_L2:.6g} <= 0")
    L2 = 1.0 / inv_L2
    return RotationBudget(lam=lam, A=A, delta=delta, c=c, s=s, L1=c + lam * s, L2=L2,
                          R_prime=R_prime, r0=R_prime / (2.0 * L2),
                          small_phase_threshold=(math.pi / 2 - A) / 4.0,
                          holder_theta=holder_theta, alpha_bar=alpha_bar)


def rotation_budget(lam, holder_theta, alpha_bar):
    """
    Presupuesto de la rotación para una cota C^{1,1} Λ.

    Args:
        lam: Cota Λ > 0 de los autovalores del Hessiano.
        holder_theta: Seminorma [θ]_ᾱ medida (>= 0).
        alpha_bar: Exponente ᾱ en (0, 1].

    Returns:
        RotationBudget: δ = (π/2 − arctan Λ)/2, L1 = c + Λs, 1/L2 = c − Λs,
        R′ = min(½, (δ/(4[θ]_ᾱ))^{1/ᾱ}) y r0 = R′/(2 L2).
    """
    lam, holder_theta, alpha_bar = float(lam), float(holder_theta), float(alpha_bar)
    if not lam > 0:
        raise ConfigurationError(f"Λ debe ser positivo (recibido {lam})")
    if not 0 < alpha_bar <= 1:
        raise ConfigurationError(f"ᾱ debe estar en (0, 1] (recibido {alpha_bar})")
    if holder_theta < 0:
        raise ConfigurationError(f"La seminorma de θ no puede ser negativa (recibido {holder_theta})")
    delta = (math.pi / 2 - math.atan(lam)) / 2.0
    budget = _build_budget(lam, delta, _radius_from_holder(delta, holder_theta, alpha_bar),
                           holder_theta, alpha_bar)
    logger.debug("rotation_budget: Λ=%g δ=%.17g L1=%.17g L2=%.17g R'=%.6g", lam, delta, budget.L1,
                 budget.L2, budget.R_prime)
    return budget


def synthetic_budget(delta, lam, R_prime):
    """Presupuesto con δ prescrito (con signo, p. ej. δ = 0) para pruebas de convenciones."""
    lam, R_prime = float(lam), float(R_prime)
    if lam < 0:
        raise ConfigurationError(f"Λ no puede ser negativo (recibido {lam})")
    if not R_prime > 0:
        raise ConfigurationError(f"R′ debe ser positivo (recibido {R_prime})")
    return _build_budget(lam, float(delta), R_prime, 0.0, 1.0)


def check_small_phase_condition(theta0, lam):
    """Verdadero si 0 <= θ(0) < (π/2 − arctan Λ)/4."""
    return bool(0.0 <= theta0 < (math.pi / 2 - math.atan(lam)) / 4.0)


def phase_concavity_gap(A, B):
    """F(½(A+B)) − ½(F(A)+F(B)) para pares de matrices (..., 2, 2); >= 0 donde F es cóncava."""
    A, B = np.asarray(A, float), np.asarray(B, float)
    return matrix_phase(0.5 * (A + B)) - 0.5 * (matrix_phase(A) + matrix_phase(B))
