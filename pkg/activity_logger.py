import os
import json
from datetime import datetime, timezone

DATA_PATH = "./resultados"
LOG_NAME = "actividades.json"
MAX_LOGS = 50  # Mantener solo las últimas 50 actividades por corrida

def _log_file(data_path):
    return os.path.join(data_path or DATA_PATH, LOG_NAME)

def _load_logs(data_path=None):
    log_file = _log_file(data_path)
    if os.path.exists(log_file):
        try:
            with open(log_file, 'r', encoding='utf-8') as f:
                return json.load(f)
        except:
            return []
    return []

def _save_logs(logs, data_path=None):
    os.makedirs(data_path or DATA_PATH, exist_ok=True)
    with open(_log_file(data_path), 'w', encoding='utf-8') as f:
        json.dump(logs, f, indent=4, ensure_ascii=False)

def log_activity(message, categoria="Sistema", icon="fa-robot", data_path=None):
    """
    Registra una nueva actividad en el historial de la corrida (<out>/actividades.json).

    Categorías sugeridas: Generación, Solver, Rotación, Análisis, Verificación, Sistema
    Iconos sugeridos (FontAwesome):
        - fa-seedling (Generación de potenciales)
        - fa-calculator (Solvers de Newton / CG)
        - fa-sync (Rotación del grafo)
        - fa-chart-line (Análisis de regularidad)
        - fa-check-double (Suites de verificación)
        - fa-exclamation-triangle (Errores)

    Este archivo lleva timestamps: queda fuera del contrato de reproducibilidad byte a byte.
    """
    logs = _load_logs(data_path)

    new_log = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "message": message,
        "categoria": categoria,
        "icon": icon
    }

    logs.insert(0, new_log)  # Insertar al principio

    # Mantener el límite
    if len(logs) > MAX_LOGS:
        logs = logs[:MAX_LOGS]

    _save_logs(logs, data_path)
    return new_log
