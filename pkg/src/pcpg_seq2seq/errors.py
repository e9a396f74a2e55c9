"""Exception types shared across the package."""

from typing import Any, Dict, Optional, Sequence, Tuple


class PcpgError(Exception):
    """Base class for all pcpg-seq2seq errors."""


class ShapeError(PcpgError, ValueError):
    """Operand shapes are incompatible with a tape primitive."""

    def __init__(self, primitive: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        self.primitive = primitive
        self.shapes = [tuple(s) for s in shapes]
        message = f"{primitive}: incompatible shapes {self.shapes}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class ConfigError(PcpgError, ValueError):
    """An experiment config file is malformed or violates its schema."""


class DataError(PcpgError):
    """A dataset or checkpoint file is missing, corrupted or incompatible."""


class NumericalError(PcpgError):
    """Training produced a non-finite value."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
