# solvers.py
# Newton para la ecuación lagrangiana especial, Laplaciano de fase en forma de divergencia
# (descomposición de Selling) e iteración de Picard para la ecuación hamiltoniana estacionaria.

import math
import logging
from dataclasses import dataclass, field, asdict, fields as dataclass_fields

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.linalg import cg, spsolve

from errors import ConfigurationError, GeometryError, PreconditionError, SolverError
from fields import ScalarField, SymMatField, hessian
from geometry import ellipticity_bounds, induced_metric, linearization_coefficients, phase_of_entries, sym_eigenvalues

logger = logging.getLogger(__name__)

PHASE_MARGIN = 1e-6
ELLIPTICITY_TOL = 1e-8
CLAMP_FACTOR = 10.0
MAX_HALVINGS = 30
MAX_SELLING_STEPS = 200


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    linear_tol: float = 1e-12
    max_newton: int = 30
    max_linear: int = 20000
    damping: float = 1.0
    lambda_bound: float = 1.0

    def __post_init__(self):
        for name in ("newton_tol", "linear_tol", "max_newton", "max_linear", "damping", "lambda_bound"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0):
                raise ConfigurationError(f"SolverConfig.{name} debe ser positivo (recibido {value!r})")
        if self.damping > 1:
            raise ConfigurationError(f"SolverConfig.damping debe estar en (0, 1] (recibido {self.damping})")
        object.__setattr__(self, "max_newton", int(self.max_newton))
        object.__setattr__(self, "max_linear", int(self.max_linear))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclass_fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"Claves desconocidas en la configuración del solver: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    final_residual: float = math.inf
    converged: bool = False
    clamp_events: list = field(default_factory=list)
    coefficient_bounds: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


# --- Operador en forma de divergencia ---

def _selling_weights(K):
    """
    Descomposición K = Σ ρ_k v_k v_kᵀ con ρ_k >= 0 y v_k enteros (superbase obtusa de Selling).

    Args:
        K: Arreglo (N, 2, 2) de matrices simétricas definidas positivas.

    Returns:
        tuple: (pesos (N, 3), desplazamientos enteros (N, 3, 2))
    """
    N = K.shape[0]
    E = np.zeros((N, 3, 2), dtype=np.int64)
    E[:, 0] = (1, 0)
    E[:, 1] = (0, 1)
    E[:, 2] = (-1, -1)
    pairs = ((0, 1, 2), (0, 2, 1), (1, 2, 0))
    scale = np.trace(K, axis1=1, axis2=2)

    def _pair_product(i, j):
        return np.einsum("na,nab,nb->n", E[:, i].astype(float), K, E[:, j].astype(float))

    for _ in range(MAX_SELLING_STEPS):
        changed = False
        for i, j, k in pairs:
            positive = _pair_product(i, j) > 1e-14 * scale
            if positive.any():
                ei = E[positive, i].copy()
                ej = E[positive, j].copy()
                E[positive, i] = -ei
                E[positive, k] = ei - ej
                changed = True
        if not changed:
            break
    else:
        raise GeometryError("La reducción de Selling no terminó: métrica mal condicionada")

    weights = np.empty((N, 3))
    offsets = np.empty((N, 3, 2), dtype=np.int64)
    for i, j, k in pairs:
        weights[:, k] = np.maximum(-_pair_product(i, j), 0.0)
        offsets[:, k, 0] = -E[:, k, 1]
        offsets[:, k, 1] = E[:, k, 0]
    return weights, offsets


def flux_tensor(g):
    """√det g · g^{-1} = adj(g)/√det g nodo a nodo, como arreglo (N, 2, 2)."""
    det = g.a11 * g.a22 - g.a12**2
    root = np.sqrt(det)
    K = np.empty(g.a11.shape + (2, 2))
    K[..., 0, 0] = g.a22 / root
    K[..., 0, 1] = -g.a12 / root
    K[..., 1, 0] = -g.a12 / root
    K[..., 1, 1] = g.a11 / root
    return K.reshape(-1, 2, 2)


def phase_laplacian_matrix(g):
    """
    Laplaciano de grafo simétrico (espaciado unitario) de ∂ᵢ(√det g · g^{ij} ∂ⱼ·).

    Cada nodo reparte ½ρ_k a las aristas (x, x ± v_k); los pesos son no negativos,
    así que el esquema es conservativo y cumple el principio del máximo discreto.

    Raises:
        GeometryError: Si un nodo incógnita necesita un vecino fuera de la grilla.
    """
    grid = g.grid
    n = grid.n_per_side
    weights, offsets = _selling_weights(flux_tensor(g))
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    unknown = grid.unknown_mask.ravel()

    rows, cols, vals = [], [], []
    for k in range(3):
        w = 0.5 * weights[:, k]
        for sign in (1, -1):
            ti = ii + sign * offsets[:, k, 0]
            tj = jj + sign * offsets[:, k, 1]
            inside = (ti >= 0) & (ti < n) & (tj >= 0) & (tj < n)
            escaping = unknown & ~inside & (w > 0)
            if escaping.any():
                node = (int(ii[escaping][0]), int(jj[escaping][0]))
                raise GeometryError(f"El stencil del nodo {node} sale de la grilla", node=node)
            keep = inside & (w > 0)
            src = ii[keep] * n + jj[keep]
            dst = ti[keep] * n + tj[keep]
            rows += [src, dst]
            cols += [dst, src]
            vals += [w[keep], w[keep]]

    W = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n * n, n * n)).tocsr()
    degree = np.asarray(W.sum(axis=1)).ravel()
    return (W - sparse.diags(degree)).tocsr()


def identity_metric(grid):
    return SymMatField.from_entries(grid, 1.0, 0.0, 1.0)


def solve_phase_laplacian(g, theta_boundary, cfg, initial=None, source=None):
    """
    Resuelve Δ_g θ = 0 con datos de Dirichlet fuera de los nodos incógnita (CG con precondicionador de Jacobi).

    Args:
        g: Métrica inducida (uniformemente elíptica, λ_min >= 1).
        theta_boundary: Campo cuyos valores fuera de unknown_mask fijan la condición de borde.
        cfg: SolverConfig (linear_tol, max_linear).
        initial: Campo opcional para el punto de partida de CG.
        source: Campo opcional f para ∂ᵢ(√det g · g^{ij} ∂ⱼθ) = f en los nodos incógnita.

    Returns:
        tuple: (ScalarField θ, SolveReport)
    """
    grid = g.grid
    lo, _ = ellipticity_bounds(g)
    if lo < 1.0 - ELLIPTICITY_TOL:
        raise PreconditionError(f"La métrica no es uniformemente elíptica: λ_min = {lo:.6g} < 1")

    L = phase_laplacian_matrix(g)
    unknown = grid.unknown_mask.ravel()
    u_idx = np.flatnonzero(unknown)
    b_idx = np.flatnonzero(~unknown)
    values = np.array(theta_boundary.values, dtype=float).ravel()

    A = -L[u_idx][:, u_idx]
    rhs = L[u_idx][:, b_idx] @ values[b_idx]
    if source is not None:
        rhs = rhs - grid.h**2 * np.asarray(source.values, dtype=float).ravel()[u_idx]
    if initial is not None:
        x0 = np.asarray(initial.values, dtype=float).ravel()[u_idx]
    else:
        x0 = np.full(len(u_idx), values[grid.ring_mask.ravel()].mean())

    counter = {"n": 0}

    def _count(_):
        counter["n"] += 1

    M = sparse.diags(1.0 / A.diagonal())
    solution, info = cg(A, rhs, x0=x0, rtol=cfg.linear_tol, atol=0.0, maxiter=cfg.max_linear, M=M,
                        callback=_count)
    if info != 0 or not np.all(np.isfinite(solution)):
        raise SolverError(f"CG sin converger (info={info}, {counter['n']} iteraciones)")

    scale = np.linalg.norm(rhs) or 1.0
    relative = float(np.linalg.norm(rhs - A @ solution) / scale)
    values[u_idx] = solution
    logger.debug("solve_phase_laplacian: %d iteraciones CG, residuo relativo %.3e", counter["n"], relative)
    report = SolveReport(iterations=1, residual_history=[relative], final_residual=relative, converged=True,
                         linear_iterations=[counter["n"]])
    return ScalarField(grid, values.reshape(grid.n_per_side, grid.n_per_side)), report


def harmonic_extension(boundary, cfg):
    """Extensión armónica (métrica identidad) de los datos de borde."""
    theta, _ = solve_phase_laplacian(identity_metric(boundary.grid), boundary, cfg)
    return theta


def newton_start(theta, u_boundary, cfg):
    """
    Iterado inicial de Newton: Δu = 2·tan(θ/2) con los datos de borde de u.

    Exacto cuando D²u = tan(θ/2)·I, p. ej. u = ½|x|² con θ ≡ π/2.
    """
    grid = theta.grid
    unknown = grid.unknown_mask
    source = np.zeros(theta.values.shape)
    source[unknown] = 2.0 * np.tan(0.5 * theta.values[unknown])
    start, _ = solve_phase_laplacian(identity_metric(grid), u_boundary, cfg, source=ScalarField(grid, source))
    return start


# --- Newton para la ecuación lagrangiana especial ---

def _newton_matrix(coeffs, grid, unknown):
    """Linealización Σ g^{ij} ∂ᵢⱼ restringida a las incógnitas (Dirichlet cero en el resto)."""
    n = grid.n_per_side
    h2 = grid.h**2
    index = -np.ones((n, n), dtype=np.int64)
    index[unknown] = np.arange(int(unknown.sum()))
    ui, uj = np.nonzero(unknown)
    a11, a12, a22 = coeffs.a11[unknown], coeffs.a12[unknown], coeffs.a22[unknown]
    stencil = [
        ((0, 0), -2.0 * (a11 + a22) / h2),
        ((1, 0), a11 / h2), ((-1, 0), a11 / h2),
        ((0, 1), a22 / h2), ((0, -1), a22 / h2),
        ((1, 1), a12 / (2.0 * h2)), ((-1, -1), a12 / (2.0 * h2)),
        ((1, -1), -a12 / (2.0 * h2)), ((-1, 1), -a12 / (2.0 * h2)),
    ]
    rows, cols, vals = [], [], []
    for (di, dj), coef in stencil:
        target = index[ui + di, uj + dj]
        keep = target >= 0
        rows.append(index[ui, uj][keep])
        cols.append(target[keep])
        vals.append(coef[keep])
    m = len(ui)
    return sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(m, m)).tocsr()


def _phase_residual(values, theta, grid, unknown):
    H = hessian(ScalarField(grid, values))
    r = phase_of_entries(H.a11, H.a12, H.a22) - theta.values
    return H, r[unknown]


def _hessian_bound(H, unknown):
    lo, hi = sym_eigenvalues(H.a11[unknown], H.a12[unknown], H.a22[unknown])
    return float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))


def solve_special_lagrangian(theta, u_boundary, cfg, initial=None):
    """
    Newton amortiguado para F(D²u) = θ con u = u_boundary fuera de los nodos incógnita.

    Cada paso resuelve Σ g^{ij}(D²u_k) ∂ᵢⱼ v = θ − F(D²u_k) con Dirichlet cero para v.
    La no convergencia se informa en el reporte, no como excepción.

    Args:
        theta: Fase prescrita, |θ| < π en los nodos incógnita.
        u_boundary: Potencial cuyos valores fuera de unknown_mask son la condición de borde.
        cfg: SolverConfig.
        initial: Iterado inicial opcional (por defecto newton_start).

    Returns:
        tuple: (ScalarField u, SolveReport)
    """
    grid = theta.grid
    unknown = grid.unknown_mask
    if np.max(np.abs(theta.values[unknown])) >= math.pi - PHASE_MARGIN:
        raise PreconditionError("La fase prescrita alcanza ±π en algún nodo incógnita")

    start = initial if initial is not None else newton_start(theta, u_boundary, cfg)
    u = np.array(u_boundary.values, dtype=float)
    u[unknown] = start.values[unknown]

    report = SolveReport()
    H, r = _phase_residual(u, theta, grid, unknown)
    residual = float(np.max(np.abs(r)))
    report.residual_history.append(residual)
    damping = cfg.damping

    while residual >= cfg.newton_tol and report.iterations < cfg.max_newton:
        coeffs = linearization_coefficients(H)
        lo, hi = sym_eigenvalues(coeffs.a11[unknown], coeffs.a12[unknown], coeffs.a22[unknown])
        report.coefficient_bounds.append([float(lo.min()), float(hi.max())])
        J = _newton_matrix(coeffs, grid, unknown)
        step = spsolve(J.tocsc(), -r)
        if not np.all(np.isfinite(step)):
            raise SolverError(f"Solve lineal de Newton no finito en la iteración {report.iterations + 1}")
        report.linear_iterations.append(1)
        # un paso se recorta si lleva |λ| más allá de 10·max(Λ, cota del iterado actual)
        clamp_bound = CLAMP_FACTOR * max(cfg.lambda_bound, _hessian_bound(H, unknown))

        accepted = False
        for _ in range(MAX_HALVINGS):
            trial = u.copy()
            trial[unknown] += damping * step
            H_t, r_t = _phase_residual(trial, theta, grid, unknown)
            if _hessian_bound(H_t, unknown) > clamp_bound:
                report.clamp_events.append({"iteration": report.iterations + 1, "damping": damping})
                damping *= 0.5
                continue
            res_t = float(np.max(np.abs(r_t)))
            if res_t < residual:
                u, H, r, residual = trial, H_t, r_t, res_t
                accepted = True
                break
            damping *= 0.5
        if not accepted:
            logger.warning("Newton estancado en la iteración %d (residuo %.3e)", report.iterations, residual)
            break
        damping = cfg.damping
        report.iterations += 1
        report.residual_history.append(residual)
        logger.debug("Newton %d: residuo %.3e", report.iterations, residual)

    report.final_residual = residual
    report.converged = residual < cfg.newton_tol
    return ScalarField(grid, u), report


# --- Ecuación hamiltoniana estacionaria ---

def hs_residual(u):
    """
    Δ_g F(D²u) puntual con el mismo operador en forma de flujo, en los nodos a dos celdas del anillo.

    Returns:
        ScalarField: residuo (cero fuera de la región evaluada).
    """
    grid = u.grid
    H = hessian(u)
    theta = phase_of_entries(H.a11, H.a12, H.a22)
    g = induced_metric(H)
    L = phase_laplacian_matrix(g)
    det = g.a11 * g.a22 - g.a12**2
    values = (L @ theta.ravel()).reshape(theta.shape) / grid.h**2 / np.sqrt(det)
    inner = ndimage.binary_erosion(grid.unknown_mask, iterations=2)
    return ScalarField(grid, np.where(inner, values, 0.0))


def solve_hamiltonian_stationary(u_boundary, theta_boundary, cfg):
    """
    Picard sobre el sistema θ = F(D²u), Δ_g θ = 0.

    Paso k: θ_{k+1} = Laplaciano de fase con g(u_k); u_{k+1} = Newton SL con θ_{k+1}.
    Se detiene cuando max|Δu| + max|Δθ| < newton_tol.

    Returns:
        tuple: (ScalarField u, ScalarField θ, SolveReport)
    """
    grid = u_boundary.grid
    mask = grid.interior_mask
    theta = harmonic_extension(theta_boundary, cfg)
    u, inner = solve_special_lagrangian(theta, u_boundary, cfg)
    report = SolveReport(linear_iterations=list(inner.linear_iterations),
                         clamp_events=list(inner.clamp_events))
    if not inner.converged:
        logger.warning("Picard: el Newton inicial no convergió (residuo %.3e)", inner.final_residual)
        report.final_residual = inner.final_residual
        return u, theta, report

    for k in range(1, cfg.max_newton + 1):
        g = induced_metric(hessian(u))
        theta_new, lin = solve_phase_laplacian(g, theta_boundary, cfg, initial=theta)
        u_new, inner = solve_special_lagrangian(theta_new, u_boundary, cfg, initial=u)
        report.linear_iterations += lin.linear_iterations
        report.clamp_events += inner.clamp_events
        diff = float(np.max(np.abs(u_new.values[mask] - u.values[mask]))
                     + np.max(np.abs(theta_new.values[mask] - theta.values[mask])))
        u, theta = u_new, theta_new
        report.iterations = k
        report.residual_history.append(diff)
        report.final_residual = diff
        logger.debug("Picard %d: diferencia %.3e", k, diff)
        if not inner.converged:
            logger.warning("Picard %d: Newton interno sin converger", k)
            break
        if diff < cfg.newton_tol:
            report.converged = True
            break
    return u, theta, report
