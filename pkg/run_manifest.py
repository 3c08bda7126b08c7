# run_manifest.py
# Manifiesto de corrida (<out>/manifest.json): comando, configuración, semilla, grilla y checksums sha256.

import os
import json
import hashlib
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone

MANIFEST_NAME = "manifest.json"
# Archivos con timestamps: fuera del contrato de reproducibilidad
EXCLUDED = {MANIFEST_NAME, "actividades.json"}


def load_json(filepath):
    if os.path.exists(filepath):
        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError):
            return {}
    return {}


def save_json(filepath, data):
    folder = os.path.dirname(filepath)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=4, ensure_ascii=False)
    return filepath


def sha256_file(path, chunk_size=1 << 16):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(chunk_size), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    output_dir: str
    seed: int = 0
    input_paths: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished_at: str = None
    artifacts: dict = field(default_factory=dict)

    def record(self, path):
        """Registra un artefacto emitido con su checksum (ruta relativa a output_dir)."""
        rel = os.path.relpath(path, self.output_dir)
        if os.path.basename(rel) not in EXCLUDED:
            self.artifacts[rel.replace(os.sep, "/")] = sha256_file(path)
        return path

    def record_all(self, paths):
        for path in paths:
            self.record(path)

    def write(self):
        """Cierra el manifiesto y lo guarda en <out>/manifest.json."""
        self.finished_at = datetime.now(timezone.utc).isoformat()
        self.artifacts = dict(sorted(self.artifacts.items()))
        return save_json(os.path.join(self.output_dir, MANIFEST_NAME), asdict(self))


def verify_manifest(output_dir):
    """
    Comprueba que los checksums del manifiesto coinciden con los archivos emitidos.

    Returns:
        list: Rutas relativas cuyo checksum no coincide o que faltan (vacía si todo cuadra).
    """
    manifest = load_json(os.path.join(output_dir, MANIFEST_NAME))
    mismatched = []
    for rel, digest in manifest.get("artifacts", {}).items():
        path = os.path.join(output_dir, rel)
        if not os.path.exists(path) or sha256_file(path) != digest:
            mismatched.append(rel)
    return mismatched
