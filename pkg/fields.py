# fields.py
# Campos escalares, vectoriales y de matrices simétricas sobre una grilla uniforme
# enmascarada a un disco: diferencias finitas, interpolación bicúbica, inversión de mapas y reescalado.

import logging
import concurrent.futures
from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline
from scipy.spatial import cKDTree

from config_loader import get_thread_count
from errors import ConfigurationError, DomainError, InversionError

logger = logging.getLogger(__name__)

MIN_NODES = 17
MASK_EPS = 1e-12
INVERSION_TOL = 1e-10
INVERSION_MAX_ITER = 50


@dataclass(frozen=True)
class Grid2D:
    """Grilla uniforme sobre [-w, w]² con un disco interior |x| <= mask_radius."""

    n_per_side: int
    half_width: float
    mask_radius: float

    def __post_init__(self):
        if int(self.n_per_side) != self.n_per_side or self.n_per_side < MIN_NODES:
            raise ConfigurationError(
                f"n_per_side debe ser un entero >= {MIN_NODES} (recibido {self.n_per_side})")
        object.__setattr__(self, "n_per_side", int(self.n_per_side))
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "mask_radius", float(self.mask_radius))
        if not self.half_width > 0:
            raise ConfigurationError(f"half_width debe ser positivo (recibido {self.half_width})")
        if not 0 < self.mask_radius <= self.half_width + MASK_EPS:
            raise ConfigurationError(
                f"mask_radius debe estar en (0, half_width] (recibido {self.mask_radius})")
        if not self.interior_mask.any():
            raise ConfigurationError("La máscara interior no contiene nodos")

    @property
    def h(self):
        return 2.0 * self.half_width / (self.n_per_side - 1)

    @cached_property
    def coords(self):
        c = np.linspace(-self.half_width, self.half_width, self.n_per_side)
        c.setflags(write=False)
        return c

    @cached_property
    def mesh(self):
        x1, x2 = np.meshgrid(self.coords, self.coords, indexing="ij")
        x1.setflags(write=False)
        x2.setflags(write=False)
        return x1, x2

    @cached_property
    def points(self):
        """Coordenadas de todos los nodos, forma (n, n, 2)."""
        pts = np.stack(self.mesh, axis=-1)
        pts.setflags(write=False)
        return pts

    @cached_property
    def radius(self):
        x1, x2 = self.mesh
        r = np.hypot(x1, x2)
        r.setflags(write=False)
        return r

    def ball_mask(self, radius):
        return self.radius <= radius + MASK_EPS

    @cached_property
    def interior_mask(self):
        m = self.ball_mask(self.mask_radius)
        m.setflags(write=False)
        return m

    @cached_property
    def unknown_mask(self):
        """Nodos interiores cuyos 8 vecinos también son interiores."""
        m = ndimage.binary_erosion(self.interior_mask, structure=np.ones((3, 3), dtype=bool),
                                   border_value=0)
        m.setflags(write=False)
        return m

    @cached_property
    def ring_mask(self):
        m = self.interior_mask & ~self.unknown_mask
        m.setflags(write=False)
        return m

    @cached_property
    def origin_index(self):
        flat = int(np.argmin(self.radius))
        return np.unravel_index(flat, self.radius.shape)

    @property
    def padded_limit(self):
        """Límite de interpolación: el cuadrado menos una celda."""
        return self.half_width - self.h

    def to_dict(self):
        return {"n_per_side": self.n_per_side, "half_width": self.half_width,
                "mask_radius": self.mask_radius}


@dataclass(frozen=True)
class _GridField:
    grid: Grid2D
    values: np.ndarray

    trailing: ClassVar[tuple] = ()
    kind: ClassVar[str] = ""

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        n = self.grid.n_per_side
        expected = (n, n) + self.trailing
        if arr.shape != expected:
            raise ConfigurationError(
                f"Campo {self.kind}: forma {arr.shape} distinta de la esperada {expected}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        bad = ~np.isfinite(arr[self.grid.interior_mask])
        if bad.any():
            raise DomainError(f"Campo {self.kind} con {int(bad.sum())} valores no finitos en la máscara")

    def masked(self, mask=None):
        return self.values[self.grid.interior_mask if mask is None else mask]


@dataclass(frozen=True)
class ScalarField(_GridField):
    kind: ClassVar[str] = "scalar"

    @classmethod
    def from_function(cls, grid, func):
        x1, x2 = grid.mesh
        return cls(grid, np.broadcast_to(func(x1, x2), x1.shape))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True)
class VectorField(_GridField):
    trailing: ClassVar[tuple] = (2,)
    kind: ClassVar[str] = "vector"

    @classmethod
    def from_components(cls, grid, v1, v2):
        return cls(grid, np.stack([v1, v2], axis=-1))


@dataclass(frozen=True)
class SymMatField(_GridField):
    """Matrices simétricas 2x2 guardadas como (a11, a12, a22)."""

    trailing: ClassVar[tuple] = (3,)
    kind: ClassVar[str] = "symmat"

    @classmethod
    def from_entries(cls, grid, a11, a12, a22):
        shape = (grid.n_per_side, grid.n_per_side)
        return cls(grid, np.stack([np.broadcast_to(a11, shape), np.broadcast_to(a12, shape),
                                   np.broadcast_to(a22, shape)], axis=-1))

    @classmethod
    def from_matrices(cls, grid, mats):
        mats = np.asarray(mats, dtype=float)
        return cls.from_entries(grid, mats[..., 0, 0], 0.5 * (mats[..., 0, 1] + mats[..., 1, 0]),
                                mats[..., 1, 1])

    @property
    def a11(self):
        return self.values[..., 0]

    @property
    def a12(self):
        return self.values[..., 1]

    @property
    def a22(self):
        return self.values[..., 2]

    @property
    def matrices(self):
        m = np.empty(self.values.shape[:2] + (2, 2))
        m[..., 0, 0] = self.a11
        m[..., 0, 1] = self.a12
        m[..., 1, 0] = self.a12
        m[..., 1, 1] = self.a22
        return m


# --- Cálculo en diferencias finitas ---

def _require_finite(f):
    if not np.all(np.isfinite(f.values)):
        raise DomainError(f"El campo {f.kind} debe ser finito en toda la grilla para derivarlo")


def _second_difference(values, h, axis):
    """Segunda diferencia compacta; en los bordes del cuadrado, stencil unilateral de segundo orden."""
    out = np.empty_like(values)
    v = np.moveaxis(values, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    o[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
    o[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    return out


def gradient(f):
    """
    Gradiente por diferencias centradas de segundo orden (unilaterales de segundo orden en el borde del cuadrado).

    En el anillo del disco el stencil sigue centrado y usa los nodos muestreados fuera de la máscara.

    Args:
        f: ScalarField finito en toda la grilla.

    Returns:
        VectorField: Du sobre la misma grilla.
    """
    _require_finite(f)
    h = f.grid.h
    d1, d2 = np.gradient(f.values, h, h, edge_order=2)
    return VectorField.from_components(f.grid, d1, d2)


def hessian(f):
    """
    Hessiano nodal: diagonales con la segunda diferencia compacta, término mixto con la cruz centrada.

    La simetría es estructural: solo se guarda un término mixto. Los stencils son centrados también
    en el anillo del disco; solo el borde del cuadrado usa la versión unilateral.
    """
    _require_finite(f)
    h = f.grid.h
    v = f.values
    h11 = _second_difference(v, h, axis=0)
    h22 = _second_difference(v, h, axis=1)
    h12 = np.gradient(np.gradient(v, h, axis=0, edge_order=2), h, axis=1, edge_order=2)
    return SymMatField.from_entries(f.grid, h11, h12, h22)


# --- Interpolación bicúbica ---

def bicubic_spline(grid, values):
    """Spline bicúbico interpolante (s=0) de un arreglo nodal; reproduce cúbicas exactamente."""
    return RectBivariateSpline(grid.coords, grid.coords, values, kx=3, ky=3, s=0)


def _as_points(pts):
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError(f"Se esperaba una lista de puntos 2D (forma recibida {arr.shape})")
    return arr


def _check_padded(grid, pts):
    limit = grid.padded_limit + MASK_EPS
    outside = np.any(np.abs(pts) > limit, axis=1)
    if outside.any():
        k = int(np.argmax(outside))
        raise DomainError(
            f"Punto ({pts[k, 0]:.6g}, {pts[k, 1]:.6g}) fuera del dominio de interpolación "
            f"|x_i| <= {grid.padded_limit:.6g}")


def _snap_nodes(grid, pts, values, out):
    """Devuelve el valor guardado exacto en los puntos que coinciden con un nodo."""
    idx = np.rint((pts + grid.half_width) / grid.h).astype(int)
    idx = np.clip(idx, 0, grid.n_per_side - 1)
    on_node = (grid.coords[idx[:, 0]] == pts[:, 0]) & (grid.coords[idx[:, 1]] == pts[:, 1])
    if on_node.any():
        out[on_node] = values[idx[on_node, 0], idx[on_node, 1]]
    return out


def interpolate(f, pts):
    """
    Interpola un ScalarField en una lista de puntos con el spline bicúbico.

    Args:
        f: ScalarField finito en toda la grilla.
        pts: Lista de puntos 2D dentro del cuadrado menos una celda.

    Returns:
        np.ndarray: Valores interpolados, uno por punto.
    """
    _require_finite(f)
    pts = _as_points(pts)
    _check_padded(f.grid, pts)
    out = bicubic_spline(f.grid, f.values).ev(pts[:, 0], pts[:, 1])
    return _snap_nodes(f.grid, pts, f.values, out)


# --- Inversión de mapas ---

class _MapSplines:
    """Splines de las dos componentes de un mapa y su jacobiano."""

    def __init__(self, m):
        self.s1 = bicubic_spline(m.grid, m.values[..., 0])
        self.s2 = bicubic_spline(m.grid, m.values[..., 1])

    def __call__(self, x):
        return np.stack([self.s1.ev(x[:, 0], x[:, 1]), self.s2.ev(x[:, 0], x[:, 1])], axis=-1)

    def jacobian(self, x):
        j = np.empty((x.shape[0], 2, 2))
        j[:, 0, 0] = self.s1.ev(x[:, 0], x[:, 1], dx=1)
        j[:, 0, 1] = self.s1.ev(x[:, 0], x[:, 1], dy=1)
        j[:, 1, 0] = self.s2.ev(x[:, 0], x[:, 1], dx=1)
        j[:, 1, 1] = self.s2.ev(x[:, 0], x[:, 1], dy=1)
        return j


def _newton_step(jac, r):
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    safe = np.abs(det) > 1e-14
    det = np.where(safe, det, 1.0)
    step = np.empty_like(r)
    step[:, 0] = (jac[:, 1, 1] * r[:, 0] - jac[:, 0, 1] * r[:, 1]) / det
    step[:, 1] = (-jac[:, 1, 0] * r[:, 0] + jac[:, 0, 0] * r[:, 1]) / det
    # Jacobiano degenerado: se cae a un paso de punto fijo
    step[~safe] = r[~safe]
    return step


def _invert_chunk(maps, x, targets, lipschitz_lo, limit, tol, max_iter):
    x = np.clip(x.copy(), -limit, limit)
    res = np.linalg.norm(maps(x) - targets, axis=1)
    polished = np.zeros(len(x), dtype=bool)
    for _ in range(max_iter):
        # Un paso extra de pulido tras alcanzar la tolerancia (Newton converge cuadráticamente)
        active = (res > tol) | ~polished
        polished |= res <= tol
        if not active.any():
            break
        xa, ta, ra = x[active], targets[active], res[active]
        r = maps(xa) - ta
        step = _newton_step(maps.jacobian(xa), r)
        # La preimagen está a distancia <= |residuo| / (cota inferior del jacobiano)
        norm = np.linalg.norm(step, axis=1)
        cap = ra / lipschitz_lo
        scale = np.where(norm > cap, cap / np.maximum(norm, 1e-300), 1.0)
        step *= scale[:, None]
        lam = np.ones(len(xa))
        accepted = np.zeros(len(xa), dtype=bool)
        new_x, new_res = xa.copy(), ra.copy()
        for _ in range(30):
            pending = ~accepted
            if not pending.any():
                break
            trial = np.clip(xa[pending] - lam[pending, None] * step[pending], -limit, limit)
            trial_res = np.linalg.norm(maps(trial) - ta[pending], axis=1)
            ok = trial_res < ra[pending]
            idx = np.flatnonzero(pending)
            new_x[idx[ok]] = trial[ok]
            new_res[idx[ok]] = trial_res[ok]
            accepted[idx[ok]] = True
            lam[idx[~ok]] *= 0.5
        x[active] = new_x
        res[active] = new_res
        # Los puntos ya convergidos que no mejoran quedan pulidos
        stalled = np.flatnonzero(active)[~accepted]
        polished[stalled[res[stalled] <= tol]] = True
    return x, res


def invert_map(m, targets, lipschitz_lo, tol=INVERSION_TOL, max_iter=INVERSION_MAX_ITER, workers=None):
    """
    Invierte un mapa discreto biyectivo punto a punto con Newton amortiguado.

    La semilla es la preimagen nodal más cercana; el jacobiano sale del spline bicúbico del mapa.

    Args:
        m: VectorField con el mapa x -> m(x).
        targets: Lista de puntos ȳ a invertir.
        lipschitz_lo: Cota inferior del jacobiano (1/L2 para la rotación).
        workers: Hilos para repartir los objetivos (por defecto LAGROGRAPH_THREADS).

    Returns:
        np.ndarray: Preimágenes x con |m(x) - ȳ| <= tol, en el orden de los objetivos.
    """
    if not lipschitz_lo > 0:
        raise ConfigurationError(f"lipschitz_lo debe ser positivo (recibido {lipschitz_lo})")
    if not np.all(np.isfinite(m.values)):
        raise DomainError("El mapa debe ser finito en toda la grilla para invertirlo")
    targets = _as_points(targets)
    grid = m.grid
    limit = grid.padded_limit
    maps = _MapSplines(m)

    node_pts = grid.points.reshape(-1, 2)
    node_img = m.values.reshape(-1, 2)
    usable = np.all(np.abs(node_pts) <= limit + MASK_EPS, axis=1)
    tree = cKDTree(node_img[usable])
    _, nearest = tree.query(targets)
    seeds = node_pts[usable][nearest]

    workers = workers or get_thread_count()
    chunks = [c for c in np.array_split(np.arange(len(targets)), workers) if len(c)]
    results = [None] * len(chunks)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_chunk = {
            executor.submit(_invert_chunk, maps, seeds[c], targets[c], lipschitz_lo, limit, tol, max_iter): k
            for k, c in enumerate(chunks)
        }
        for future in concurrent.futures.as_completed(future_to_chunk):
            results[future_to_chunk[future]] = future.result()

    x = np.concatenate([r[0] for r in results])
    res = np.concatenate([r[1] for r in results])
    worst = int(np.argmax(res))
    if res[worst] > tol:
        raise InversionError(
            f"Inversión sin converger en {max_iter} iteraciones: residuo {res[worst]:.3e} en el objetivo "
            f"({targets[worst, 0]:.6g}, {targets[worst, 1]:.6g})",
            worst_residual=float(res[worst]), worst_target=tuple(targets[worst]))
    logger.debug("invert_map: %d objetivos, peor residuo %.3e", len(targets), res[worst])
    return x


def rescale_potential(u, rho):
    """
    Reescalado u_ρ(x) = u(ρx)/ρ² sobre una grilla con el mismo número de nodos.

    Conserva el Hessiano: D²u_ρ(x) = D²u(ρx).
    """
    rho = float(rho)
    if not 0 < rho <= 1:
        raise ConfigurationError(f"ρ debe estar en (0, 1] (recibido {rho})")
    if rho == 1.0:
        return ScalarField(u.grid, u.values)
    grid = u.grid
    if rho * grid.half_width > grid.padded_limit + MASK_EPS:
        raise ConfigurationError(
            f"ρ = {rho} lleva la grilla fuera del dominio de interpolación (ρ <= {grid.padded_limit / grid.half_width:.6g})")
    pts = rho * grid.points.reshape(-1, 2)
    vals = interpolate(u, pts) / rho**2
    return ScalarField(grid, vals.reshape(grid.n_per_side, grid.n_per_side))
