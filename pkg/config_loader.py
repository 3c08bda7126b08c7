# config_loader.py
# Carga de configuración por defecto (grilla, solver, análisis) desde config/lagrograph.json

import os
import json
import copy
import logging

logger = logging.getLogger(__name__)

CONFIG_PATH = os.environ.get("LAGROGRAPH_CONFIG", os.path.join("config", "lagrograph.json"))

DEFAULT_SETTINGS = {
    "GRID": {"n_per_side": 65, "half_width": 1.0, "mask_radius": 1.0},
    "SOLVER": {
        "newton_tol": 1e-10,
        "linear_tol": 1e-12,
        "max_newton": 30,
        "max_linear": 20000,
        "damping": 1.0,
        "lambda_bound": 1.0,
    },
    "ANALYSIS": {"alpha": 0.5, "alpha_bar": 0.5, "pair_budget": 20000, "seed": 0},
    "VERIFY": {"trials": 1000, "convergence_levels": [17, 33, 65]},
}


def load_settings(path=None, base=None):
    """
    Carga la configuración desde el archivo JSON y la mezcla sobre los valores por defecto.

    Si el archivo no existe o está corrupto se usan los valores por defecto:
    un error de lectura nunca detiene la corrida.

    Args:
        path: Ruta alternativa al JSON de configuración.
        base: Configuración sobre la cual mezclar (por defecto DEFAULT_SETTINGS).

    Returns:
        dict: Secciones GRID, SOLVER, ANALYSIS y VERIFY.
    """
    settings = copy.deepcopy(base if base is not None else DEFAULT_SETTINGS)
    config_path = path or CONFIG_PATH
    if os.path.exists(config_path):
        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
            for section, values in loaded.items():
                if isinstance(values, dict):
                    settings.setdefault(section, {}).update(values)
        except Exception as e:
            logger.warning("Error al cargar %s: %s (se usan valores por defecto)", config_path, e)
    return settings


def get_thread_count():
    """Número de hilos permitido por LAGROGRAPH_THREADS (1 si no está definido o es inválido)."""
    raw = os.environ.get("LAGROGRAPH_THREADS", "1")
    try:
        threads = int(raw)
    except ValueError:
        logger.warning("LAGROGRAPH_THREADS inválido (%r), se usa 1 hilo", raw)
        return 1
    return max(1, threads)
