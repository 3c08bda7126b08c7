# generators.py
# Potenciales manufacturados (cuadrático, cuadrático perturbado, silla, polinomio con coeficientes)
# con gradiente y Hessiano analíticos, y generador aleatorio reproducible.

import math
import logging

import numpy as np

from errors import ConfigurationError
from fields import ScalarField, SymMatField, VectorField
from geometry import sym_eigenvalues

logger = logging.getLogger(__name__)

KINDS = ("quadratic", "perturbed_quadratic", "saddle", "custom-coefficients")

# Desplazamientos de contador Philox por consumidor
STREAM_IDENTITIES = 1
STREAM_TRANSFER = 2
STREAM_SWEEP = 3


def philox_generator(seed, stream=0):
    """Generador con contador (Philox) para la semilla del manifiesto y un flujo con nombre."""
    bit_generator = np.random.Philox(key=int(seed))
    if stream:
        bit_generator = bit_generator.jumped(stream)
    return np.random.Generator(bit_generator)


def random_symmetric(rng, size, lo, hi):
    """Matrices simétricas (size, 2, 2) con autovalores uniformes en [lo, hi] y ejes aleatorios."""
    lam = rng.uniform(lo, hi, size=(size, 2))
    angle = rng.uniform(0.0, math.pi, size=size)
    c, s = np.cos(angle), np.sin(angle)
    Q = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    D = np.zeros((size, 2, 2))
    D[:, 0, 0] = lam[:, 0]
    D[:, 1, 1] = lam[:, 1]
    M = Q @ D @ np.swapaxes(Q, -1, -2)
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _matrix(params):
    m = params.get("M", [[1.0, 0.0], [0.0, 1.0]])
    M = np.asarray(m, dtype=float)
    if M.shape != (2, 2):
        raise ConfigurationError(f"M debe ser una matriz 2x2 (recibido {M.shape})")
    return 0.5 * (M + M.T)


def _quadratic(grid, M):
    x1, x2 = grid.mesh
    p1 = M[0, 0] * x1 + M[0, 1] * x2
    p2 = M[1, 0] * x1 + M[1, 1] * x2
    u = 0.5 * (x1 * p1 + x2 * p2)
    return u, (p1, p2), (M[0, 0], M[0, 1], M[1, 1])


def _perturbed_quadratic(grid, M, eps):
    """u = q·(1 + ε sin x₁) con q = ½xᵀMx."""
    x1, _ = grid.mesh
    q, (p1, p2), (m11, m12, m22) = _quadratic(grid, M)
    factor = 1.0 + eps * np.sin(x1)
    cos1 = eps * np.cos(x1)
    u = q * factor
    du = (factor * p1 + q * cos1, factor * p2)
    d2u = (factor * m11 + 2.0 * cos1 * p1 - eps * q * np.sin(x1),
           factor * m12 + cos1 * p2,
           factor * m22)
    return u, du, d2u


def _custom(grid, terms):
    """u = Σ c·x₁^p·x₂^q a partir de una lista de [p, q, c]."""
    x1, x2 = grid.mesh
    zero = np.zeros_like(x1)
    u, d1, d2, d11, d12, d22 = (zero.copy() for _ in range(6))

    def mono(x, k):
        return x**k if k >= 0 else zero

    for term in terms:
        p, q, c = int(term[0]), int(term[1]), float(term[2])
        if p < 0 or q < 0:
            raise ConfigurationError(f"Exponentes negativos en el término {term}")
        u += c * mono(x1, p) * mono(x2, q)
        d1 += c * p * mono(x1, p - 1) * mono(x2, q)
        d2 += c * q * mono(x1, p) * mono(x2, q - 1)
        d11 += c * p * (p - 1) * mono(x1, p - 2) * mono(x2, q)
        d12 += c * p * q * mono(x1, p - 1) * mono(x2, q - 1)
        d22 += c * q * (q - 1) * mono(x1, p) * mono(x2, q - 2)
    return u, (d1, d2), (d11, d12, d22)


def generate_potential(kind, params, grid, lambda_bound=None):
    """
    Genera un potencial manufacturado con sus derivadas analíticas.

    Args:
        kind: quadratic | perturbed_quadratic | saddle | custom-coefficients
        params: M (matriz 2x2), eps, a (amplitud de la silla) o terms ([p, q, c]).
        lambda_bound: Cota Λ para los autovalores del Hessiano en la máscara (opcional).

    Returns:
        dict: {"u": ScalarField, "du": VectorField, "d2u": SymMatField}

    Raises:
        ConfigurationError: Tipo desconocido o Λ excedido (nombra el autovalor máximo).
    """
    params = params or {}
    if kind == "quadratic":
        u, du, d2u = _quadratic(grid, _matrix(params))
    elif kind == "perturbed_quadratic":
        u, du, d2u = _perturbed_quadratic(grid, _matrix(params), float(params.get("eps", 0.05)))
    elif kind == "saddle":
        a = float(params.get("a", 1.0))
        u, du, d2u = _quadratic(grid, np.diag([a, -a]))
    elif kind == "custom-coefficients":
        u, du, d2u = _custom(grid, params.get("terms", []))
    else:
        raise ConfigurationError(f"Tipo de potencial desconocido '{kind}' (opciones: {', '.join(KINDS)})")

    hessian = SymMatField.from_entries(grid, *d2u)
    if lambda_bound is not None:
        lo, hi = sym_eigenvalues(hessian.a11, hessian.a12, hessian.a22)
        mask = grid.interior_mask
        top = float(max(np.max(np.abs(lo[mask])), np.max(np.abs(hi[mask]))))
        if top > lambda_bound + 1e-12:
            raise ConfigurationError(
                f"El potencial '{kind}' excede Λ = {lambda_bound}: autovalor máximo {top:.6g}")
    logger.debug("generate_potential: %s con %s", kind, params)
    return {
        "u": ScalarField(grid, u),
        "du": VectorField.from_components(grid, *du),
        "d2u": hessian,
    }


def random_perturbed_potential(rng, grid, lam=1.0):
    """Potencial ½xᵀMx + ε·sin(k·x + φ) con Λ <= lam en la máscara (barridos de propiedades)."""
    M = random_symmetric(rng, 1, -0.5 * lam, 0.5 * lam)[0]
    k = rng.uniform(-2.0, 2.0, size=2)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    # |D²(ε sin)| <= ε|k|² ; se deja la mitad de Λ a la perturbación
    eps = 0.5 * lam / max(float(k @ k), 1e-12) * rng.uniform(0.2, 1.0)
    x1, x2 = grid.mesh
    u = 0.5 * (M[0, 0] * x1**2 + 2.0 * M[0, 1] * x1 * x2 + M[1, 1] * x2**2) + eps * np.sin(k[0] * x1 + k[1] * x2 + phase)
    return ScalarField(grid, u)


def hamiltonian_stationary_potential(grid, c=0.3, d=0.1, b=1.0):
    """
    Solución exacta no trivial de Δ_g θ = 0: u = f(x₁) + ½·b·x₂² con f'' = s/√(1 − s²), s = c·x₁ + d.

    El flujo √det g · g^{11} ∂₁θ vale c·√(1 + b²) en todo punto, así que la ecuación
    hamiltoniana estacionaria se cumple sin ser θ constante.

    Returns:
        dict: {"u", "du", "d2u", "theta"} con θ = arctan f'' + arctan b.

    Raises:
        ConfigurationError: Si c = 0 o |s| >= 1 en algún nodo del cuadrado.
    """
    c, d, b = float(c), float(d), float(b)
    if c == 0:
        raise ConfigurationError("c debe ser no nulo")
    if abs(c) * grid.half_width + abs(d) >= 1.0:
        raise ConfigurationError(f"|c·x₁ + d| alcanza 1 en el cuadrado (c = {c}, d = {d})")
    x1, x2 = grid.mesh
    s = c * x1 + d
    root = np.sqrt(1.0 - s**2)
    f = -(s * root + np.arcsin(s)) / (2.0 * c**2)
    p = s / root
    zero = np.zeros_like(x1)
    return {
        "u": ScalarField(grid, f + 0.5 * b * x2**2),
        "du": VectorField.from_components(grid, -root / c, b * x2),
        "d2u": SymMatField.from_entries(grid, p, zero, b + zero),
        "theta": ScalarField(grid, np.arctan(p) + math.atan(b)),
    }
