"""Typed errors shared across the package."""


class CoupledPcaError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(CoupledPcaError):
    """Input has an unsupported size or an inconsistent shape."""


class SpectrumError(CoupledPcaError):
    """Eigenvalue sequence is not strictly descending and positive."""


class DistinctnessError(SpectrumError):
    """Eigenvalue sequence contains (near-)duplicate values."""


class SymmetryError(CoupledPcaError):
    """Matrix expected to be symmetric is not."""


class OrthonormalityError(CoupledPcaError):
    """Vectors expected to be orthonormal are not."""


class DegenerateInputError(CoupledPcaError):
    """Zero or otherwise degenerate input where a direction is required."""


class SingularityError(CoupledPcaError):
    """Evaluation too close to a point where an inverted quantity is undefined."""


class ConvergenceError(CoupledPcaError):
    """Iterative routine exhausted its iteration budget."""


class ConfigError(CoupledPcaError):
    """Experiment configuration is structurally invalid."""
