# field_io.py
# Formato de archivo de campos: línea 1 = cabecera JSON, resto = payload CSV (pandas) en orden de nodos fila por fila.

import io
import os
import json
import logging

import numpy as np
import pandas as pd

from errors import ConfigurationError, DomainError, FieldFormatError
from fields import Grid2D, ScalarField, VectorField, SymMatField

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

FIELD_TYPES = {
    "scalar": (ScalarField, ["value"]),
    "vector": (VectorField, ["v1", "v2"]),
    "symmat": (SymMatField, ["a11", "a12", "a22"]),
}


def field_header(field):
    header = field.grid.to_dict()
    header["kind"] = field.kind
    return header


def write_field(field, path):
    """
    Escribe un campo en el formato compartido (cabecera JSON + CSV con 17 dígitos significativos).

    Args:
        field: ScalarField, VectorField o SymMatField.
        path: Ruta del archivo de salida.

    Returns:
        str: La ruta escrita.
    """
    _, columns = FIELD_TYPES[field.kind]
    n = field.grid.n_per_side
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    data = {"i": ii.ravel(), "j": jj.ravel()}
    flat = field.values.reshape(n * n, -1)
    for k, col in enumerate(columns):
        data[col] = flat[:, k]
    df = pd.DataFrame(data)

    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(json.dumps(field_header(field), ensure_ascii=False) + "\n")
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("Campo %s escrito en %s", field.kind, path)
    return path


def read_field(path):
    """
    Lee un campo validando la cabecera y la forma del payload.

    Raises:
        FieldFormatError: Cabecera inválida, forma inconsistente o valores no finitos en la máscara.
        OSError: El archivo no se puede leer.
    """
    with open(path, 'r', encoding='utf-8') as f:
        first = f.readline()
        rest = f.read()

    try:
        header = json.loads(first)
    except json.JSONDecodeError as e:
        raise FieldFormatError(f"{path}: cabecera JSON inválida ({e})")
    if not isinstance(header, dict):
        raise FieldFormatError(f"{path}: la cabecera debe ser un objeto JSON")
    missing = [k for k in ("n_per_side", "half_width", "mask_radius", "kind") if k not in header]
    if missing:
        raise FieldFormatError(f"{path}: faltan claves en la cabecera: {', '.join(missing)}")
    if header["kind"] not in FIELD_TYPES:
        raise FieldFormatError(f"{path}: tipo de campo desconocido '{header['kind']}'")

    try:
        grid = Grid2D(header["n_per_side"], header["half_width"], header["mask_radius"])
    except (ConfigurationError, TypeError) as e:
        raise FieldFormatError(f"{path}: grilla inválida en la cabecera ({e})")

    cls, columns = FIELD_TYPES[header["kind"]]
    try:
        df = pd.read_csv(io.StringIO(rest), float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FieldFormatError(f"{path}: payload CSV inválido ({e})")

    n = grid.n_per_side
    if list(df.columns) != ["i", "j"] + columns:
        raise FieldFormatError(f"{path}: columnas {list(df.columns)} no corresponden a un campo {header['kind']}")
    if len(df) != n * n:
        raise FieldFormatError(f"{path}: se esperaban {n * n} filas y hay {len(df)}")
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    if not (np.array_equal(df["i"].to_numpy(), ii.ravel()) and np.array_equal(df["j"].to_numpy(), jj.ravel())):
        raise FieldFormatError(f"{path}: los nodos no están en orden fila por fila")

    values = df[columns].to_numpy(dtype=float).reshape((n, n) + cls.trailing)
    try:
        return cls(grid, values)
    except DomainError as e:
        raise FieldFormatError(f"{path}: {e}")
