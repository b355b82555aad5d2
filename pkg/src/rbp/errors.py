"""Exception hierarchy shared by all engine modules.

Every error carries a short machine-readable ``code`` so the CLI and
HTTP layers can map failures without string matching.
"""


class EngineError(Exception):
    """Base class for all engine failures."""

    code = "error"


class ParseError(EngineError):
    """Malformed input file; message carries file and line context."""

    code = "parse"

    def __init__(self, message, path=None, line=None):
        ctx = ""
        if path is not None:
            ctx = f"{path}: "
        if line is not None:
            ctx += f"line {line}: "
        super().__init__(ctx + message)
        self.path = path
        self.line = line


class UniquenessError(EngineError):
    code = "uniqueness"


class NotFoundError(EngineError):
    code = "not-found"


class DomainError(EngineError):
    """A value lies outside its allowed domain (labels, kinds, weights)."""

    code = "domain"


class CoverageError(EngineError):
    """A required class/row is missing from an annotation set or matrix."""

    code = "coverage"


class ShapeError(EngineError):
    code = "shape"


class FusionError(EngineError):
    """Late fusion attempted on mismatched class-id key sets."""

    code = "fusion"


class ConfigError(EngineError):
    code = "config"


class DivergenceError(EngineError):
    """Training loss became non-finite."""

    code = "divergence"

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
