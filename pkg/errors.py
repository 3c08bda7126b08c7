# errors.py
# Jerarquía de excepciones del laboratorio de grafos lagrangianos.
# El orquestador traduce cada rama a un código de salida estable.


class LagroGraphError(Exception):
    """Excepción base de todo el paquete."""
    pass


class ValidationError(LagroGraphError):
    """Entradas que no cumplen las precondiciones (código de salida 2)."""
    pass


class ConfigurationError(ValidationError):
    """Parámetros de grilla, solver o presupuesto fuera de rango."""
    pass


class DomainError(ValidationError):
    """Puntos o radios fuera del dominio muestreado."""
    pass


class PreconditionError(ValidationError):
    """Cota de Hessiano o de fase violada antes de empezar un cálculo."""
    pass


class ConsistencyError(ValidationError):
    """Fase y potencial que no corresponden entre sí."""
    pass


class ResolutionError(ValidationError):
    """La grilla es demasiado gruesa para encontrar la bola buscada."""
    pass


class GeometryError(ValidationError):
    """Métrica no definida positiva o stencil fuera de la grilla."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SingularRotationError(GeometryError):
    """Autovalor en el borde de admisibilidad de la rotación (cot δ)."""
    pass


class FieldFormatError(ValidationError):
    """Archivo de campo con cabecera o payload inválido."""
    pass


class NumericalError(LagroGraphError):
    """Fallos de los métodos iterativos (código de salida 1)."""
    pass


class InversionError(NumericalError):
    """Newton de inversión de mapa sin converger."""

    def __init__(self, message, worst_residual=None, worst_target=None):
        super().__init__(message)
        self.worst_residual = worst_residual
        self.worst_target = worst_target


class SolverError(NumericalError):
    """Quiebre del solver lineal (CG o factorización directa)."""
    pass
